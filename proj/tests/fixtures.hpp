#pragma once

// Shared test geometry: the bundled scenarios, the unit ball as a half-space
// chart, and seeded families of tangential vector fields.

#include "freebdy/random.hpp"
#include "freebdy/scenario.hpp"
#include "freebdy/varifold.hpp"

#include <memory>
#include <string>
#include <vector>

namespace fixtures {

using freebdy::Mat;
using freebdy::Vec;

inline std::string scenario_path(const std::string& name) {
  return std::string(FREEBDY_SCENARIO_DIR) + "/" + name + ".json";
}

inline freebdy::Scenario scenario(const std::string& name) { return freebdy::load_scenario(scenario_path(name)); }

inline Vec vec(std::initializer_list<double> v) {
  Vec out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out[i++] = x;
  return out;
}

// The unit ball B in R^3, pulled back to {x1 >= 0} by the inversion about
// c = (-1, 0, 0) with radius sqrt 2. The map is its own inverse, sends the
// plane {x1 = 0} to the unit sphere, and is conformal with factor 2/|x - c|^2.
inline Vec inversion(const Vec& x) {
  Vec d = x;
  d[0] += 1.0;
  Vec y = 2.0 * d / d.squaredNorm();
  y[0] -= 1.0;
  return y;
}

inline std::shared_ptr<const freebdy::MetricChart> ball_chart(double fd_step = 1e-4) {
  return std::make_shared<const freebdy::MetricChart>(
      3, vec({0.0, -2.0, -2.0}), vec({2.5, 2.0, 2.0}), true,
      [](const Vec& x) -> Mat {
        const double r2 = (x[0] + 1.0) * (x[0] + 1.0) + x[1] * x[1] + x[2] * x[2];
        const double lambda = 2.0 / r2;
        return lambda * lambda * Mat::Identity(3, 3);
      },
      fd_step);
}

// The flat disk {y1 = a} ∩ B of the ball, meshed in the ball and carried to
// the chart. a = 0 is the equatorial (free boundary) disk; a = sin 10deg meets
// the sphere at 80 degrees.
inline freebdy::DiscreteVarifold ball_disk(double a, int rings,
                                           std::shared_ptr<const freebdy::MetricChart> chart = ball_chart()) {
  const double rho = std::sqrt(1.0 - a * a);
  const auto mesh = freebdy::disk_mesh(rho, rings, false);
  return freebdy::mesh_varifold(chart, mesh, [&](const Vec& u) {
    const Vec y = vec({a, u[0], u[1]});
    Vec x = inversion(y);
    if (std::fabs(y.squaredNorm() - 1.0) < 1e-12) x[0] = 0.0;  // rim lies on the boundary face
    return x;
  });
}

struct Quadratic {
  double c0;
  Vec c1;
  Mat c2;
  double operator()(const Vec& x) const { return c0 + c1.dot(x) + x.dot(c2 * x); }
};

inline Quadratic random_quadratic(freebdy::CounterRng& rng) {
  Quadratic q{rng.uniform(-1.0, 1.0), Vec(3), Mat(3, 3)};
  for (int i = 0; i < 3; ++i) q.c1[i] = rng.uniform(-1.0, 1.0);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) q.c2(i, j) = rng.uniform(-0.5, 0.5);
  return q;
}

// X = (x1 p1, p2, p3) with random quadratics p: tangent to {x1 = 0} for any
// conformal metric.
inline std::vector<freebdy::VectorField> tangential_fields(int count, std::uint64_t seed) {
  freebdy::CounterRng rng(seed, 29);
  std::vector<freebdy::VectorField> out;
  for (int k = 0; k < count; ++k) {
    const Quadratic p1 = random_quadratic(rng), p2 = random_quadratic(rng), p3 = random_quadratic(rng);
    out.push_back({[=](const Vec& x) { return vec({x[0] * p1(x), p2(x), p3(x)}); }, {}});
  }
  return out;
}

}  // namespace fixtures
