#pragma once

// Reference-simplex quadrature. Nodes are barycentric coordinates; weights sum
// to 1 (multiply by the simplex measure). Constants are listed in
// docs/quadrature.md.

#include "freebdy/errors.hpp"

#include <array>
#include <string>
#include <vector>

namespace freebdy {

struct SimplexRule {
  int m = 0;
  int order = 0;                               // polynomial degree integrated exactly
  std::vector<std::vector<double>> nodes;      // m + 1 barycentric coordinates each
  std::vector<double> weights;
};

/// `order` 2 or 4 (the smallest listed rule exact to at least that degree).
inline SimplexRule simplex_rule(int m, int order) {
  if (order != 2 && order != 4) throw ConfigError("quadrature order must be 2 or 4");
  SimplexRule r;
  r.m = m;
  if (m == 1) {
    if (order == 2) {
      const double a = 0.5 - 0.28867513459481288225;  // (1 - 1/sqrt3) / 2
      const double b = 0.5 + 0.28867513459481288225;
      r.order = 3;
      r.nodes = {{b, a}, {a, b}};
      r.weights = {0.5, 0.5};
    } else {
      const double c = 0.38729833462074168852;  // sqrt(3/5) / 2
      r.order = 5;
      r.nodes = {{0.5 + c, 0.5 - c}, {0.5, 0.5}, {0.5 - c, 0.5 + c}};
      r.weights = {5.0 / 18.0, 8.0 / 18.0, 5.0 / 18.0};
    }
    return r;
  }
  if (m == 2) {
    if (order == 2) {
      const double a = 2.0 / 3.0, b = 1.0 / 6.0;
      r.order = 2;
      r.nodes = {{a, b, b}, {b, a, b}, {b, b, a}};
      r.weights = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    } else {
      const double a1 = 0.10810301816807022736, b1 = 0.44594849091596488632;
      const double a2 = 0.81684757298045851308, b2 = 0.09157621350977074346;
      const double w1 = 0.22338158967801146570, w2 = 0.10995174365532186764;
      r.order = 4;
      r.nodes = {{a1, b1, b1}, {b1, a1, b1}, {b1, b1, a1}, {a2, b2, b2}, {b2, a2, b2}, {b2, b2, a2}};
      r.weights = {w1, w1, w1, w2, w2, w2};
    }
    return r;
  }
  throw ConfigError("simplex quadrature is provided for m = 1 and m = 2 only (got m = " + std::to_string(m) + ")");
}

}  // namespace freebdy
