#pragma once

// Discrete rectifiable m-varifolds (weighted simplices), the first variation
// dV(X) = sum theta ∫ div_P X dA, stationarity residuals, touching test
// varifolds and the area of flowed varifolds.

#include "freebdy/barrier.hpp"
#include "freebdy/errors.hpp"
#include "freebdy/geometry.hpp"
#include "freebdy/linalg.hpp"
#include "freebdy/parallel.hpp"
#include "freebdy/quadrature.hpp"
#include "freebdy/surfaces.hpp"

#include <cmath>
#include <functional>
#include <limits>
#include <memory>
#include <numbers>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace freebdy {

struct Simplex {
  std::vector<Vec> vertices;  // m + 1 points
  double theta = 1.0;

  Vec at(const std::vector<double>& bary) const {
    Vec x = Vec::Zero(vertices.front().size());
    for (std::size_t k = 0; k < vertices.size(); ++k) x += bary[k] * vertices[k];
    return x;
  }
  std::vector<Vec> edges() const {
    std::vector<Vec> e;
    for (std::size_t k = 1; k < vertices.size(); ++k) e.push_back(vertices[k] - vertices[0]);
    return e;
  }
};

inline double factorial(int m) {
  double f = 1.0;
  for (int k = 2; k <= m; ++k) f *= k;
  return f;
}

/// g-volume density of the simplex at x: sqrt(det(E^T g E)) / m!.
inline double simplex_density(const MetricChart& chart, const Simplex& s, const Vec& x) {
  const auto e = s.edges();
  const int m = static_cast<int>(e.size());
  Mat E(chart.dim(), m);
  for (int k = 0; k < m; ++k) E.col(k) = e[static_cast<std::size_t>(k)];
  const Mat gram = E.transpose() * chart.metric(x) * E;
  return std::sqrt(std::max(0.0, gram.determinant())) / factorial(m);
}

class DiscreteVarifold {
 public:
  DiscreteVarifold(std::shared_ptr<const MetricChart> chart, int m, std::vector<Simplex> simplices = {})
      : chart_(std::move(chart)), m_(m) {
    if (m_ < 1 || m_ >= chart_->dim()) throw ConfigError("varifold dimension must satisfy 1 <= m < dim");
    for (auto& s : simplices) add(std::move(s));
  }

  void add(Simplex s) {
    if (static_cast<int>(s.vertices.size()) != m_ + 1) throw ConfigError("simplex must have m + 1 vertices");
    if (!(s.theta >= 0.0)) throw ConfigError("multiplicity must be non-negative");
    for (const Vec& v : s.vertices) {
      if (v.size() != chart_->dim()) throw ConfigError("simplex vertex has the wrong dimension");
      if (!chart_->contains(v, 1e-12)) throw ConfigError("varifold support leaves the chart domain");
    }
    const auto rule = simplex_rule(m_, 2);
    if (!(simplex_density(*chart_, s, s.at(rule.nodes[0])) > 1e-12)) throw ConfigError("degenerate simplex");
    simplices_.push_back(std::move(s));
  }

  const MetricChart& chart() const noexcept { return *chart_; }
  std::shared_ptr<const MetricChart> chart_ptr() const noexcept { return chart_; }
  int m() const noexcept { return m_; }
  const std::vector<Simplex>& simplices() const noexcept { return simplices_; }
  bool empty() const noexcept { return simplices_.empty(); }

  double mass(int order = 4) const {
    if (simplices_.empty()) return 0.0;
    const auto rule = simplex_rule(m_, order);
    std::vector<double> parts;
    for (const auto& s : simplices_) {
      double a = 0.0;
      for (std::size_t q = 0; q < rule.weights.size(); ++q)
        a += rule.weights[q] * simplex_density(*chart_, s, s.at(rule.nodes[q]));
      parts.push_back(s.theta * a);
    }
    return pairwise_sum(parts);
  }

  DiscreteVarifold scaled(double factor) const {
    DiscreteVarifold v = *this;
    for (auto& s : v.simplices_) s.theta *= factor;
    return v;
  }

  /// Disjoint union (simplices of `other` appended).
  DiscreteVarifold united(const DiscreteVarifold& other) const {
    DiscreteVarifold v = *this;
    for (const auto& s : other.simplices_) v.simplices_.push_back(s);
    return v;
  }

 private:
  std::shared_ptr<const MetricChart> chart_;
  int m_;
  std::vector<Simplex> simplices_;
};

// ---------------------------------------------------------------- first variation

inline std::vector<Vec> tangent_plane(const MetricChart& chart, const Simplex& s, const Vec& x) {
  try {
    return orthonormalize(chart, x, s.edges());
  } catch (const NumericalError&) {
    throw NumericalError("tangent_plane: degenerate simplex");
  }
}

inline double divergence_on_plane(const MetricChart& chart, const VectorField& X, const Vec& x,
                                  const std::vector<Vec>& frame) {
  const Mat G = chart.metric(x);
  double div = 0.0;
  for (const Vec& e : frame) div += covariant_derivative(chart, X, {x, e}).dot(G * e);
  return div;
}

struct VariationReport {
  double total = 0.0;
  std::vector<double> contributions;
  int order = 4;
  double richardson_error = 0.0;  // |order-4 total - order-2 total|
  bool unreliable = false;        // richardson_error > 10% of |total|
  double tangentiality_residual = 0.0;  // max |<X, nu_dN*>| over support vertices on {x1 = 0}
  bool support_in_domain = true;
};

namespace detail {

inline std::vector<double> variation_parts(const DiscreteVarifold& V, const VectorField& X, int order,
                                           unsigned threads) {
  const auto rule = simplex_rule(V.m(), order);
  const auto& chart = V.chart();
  return parallel_map(V.simplices().size(), threads, [&](std::size_t i) {
    const Simplex& s = V.simplices()[i];
    double acc = 0.0;
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const Vec x = s.at(rule.nodes[q]);
      acc += rule.weights[q] * divergence_on_plane(chart, X, x, tangent_plane(chart, s, x)) *
             simplex_density(chart, s, x);
    }
    return s.theta * acc;
  });
}

}  // namespace detail

inline double is_tangential(const MetricChart& chart, const VectorField& X, const std::vector<Vec>& boundary_samples) {
  double worst = 0.0;
  for (const Vec& x : boundary_samples) {
    if (std::fabs(x[0]) > 1e-12) throw PreconditionError("is_tangential: sample not on {x1 = 0}");
    worst = std::max(worst, std::fabs(chart.inner(x, X(x), chart.boundary_normal(x))));
  }
  return worst;
}

inline std::vector<Vec> boundary_vertices(const DiscreteVarifold& V) {
  std::vector<Vec> out;
  for (const auto& s : V.simplices())
    for (const Vec& v : s.vertices)
      if (std::fabs(v[0]) <= 1e-12) {
        Vec b = v;
        b[0] = 0.0;
        out.push_back(b);
      }
  return out;
}

inline VariationReport first_variation(const DiscreteVarifold& V, const VectorField& X, int order = 4,
                                       unsigned threads = 1, const ProperSubdomain* domain = nullptr) {
  VariationReport r;
  r.order = order;
  r.contributions = detail::variation_parts(V, X, order, threads);
  r.total = pairwise_sum(r.contributions);
  const int other = order == 4 ? 2 : 4;
  const double alt = pairwise_sum(detail::variation_parts(V, X, other, threads));
  r.richardson_error = std::fabs(r.total - alt);
  r.unreliable = r.richardson_error > 0.1 * std::fabs(r.total) && r.richardson_error > 0.0;
  if (V.chart().half_space()) r.tangentiality_residual = is_tangential(V.chart(), X, boundary_vertices(V));
  if (domain)
    for (const auto& s : V.simplices())
      for (const Vec& v : s.vertices)
        if (!domain->contains(v)) r.support_in_domain = false;
  return r;
}

/// max |X|_g + max |nabla X| (operator norm in g-orthonormal frames) over the
/// order-4 quadrature nodes of V.
inline double c1_norm(const DiscreteVarifold& V, const VectorField& X) {
  const auto& chart = V.chart();
  const auto rule = simplex_rule(V.m(), 4);
  double c0 = 0.0, c1 = 0.0;
  const int d = chart.dim();
  for (const auto& s : V.simplices())
    for (const auto& node : rule.nodes) {
      const Vec x = s.at(node);
      c0 = std::max(c0, chart.norm(x, X(x)));
      std::vector<Vec> basis;
      for (int i = 0; i < d; ++i) basis.push_back(unit_vector(d, i));
      const auto e = orthonormalize(chart, x, basis);
      const Mat G = chart.metric(x);
      Mat M(d, d);
      for (int a = 0; a < d; ++a) {
        const Vec dx = covariant_derivative(chart, X, {x, e[static_cast<std::size_t>(a)]});
        for (int b = 0; b < d; ++b) M(a, b) = dx.dot(G * e[static_cast<std::size_t>(b)]);
      }
      c1 = std::max(c1, operator_norm(M));
    }
  return c0 + c1;
}

/// max over fields of |dV(X)| / (mass(V) |X|_{C^1}); fields must be tangential.
inline double stationarity_residual(const DiscreteVarifold& V, const std::vector<VectorField>& fields,
                                    double tau_orth = 1e-6, unsigned threads = 1) {
  if (V.empty()) return 0.0;
  const double mass = V.mass();
  if (!(mass > 0.0)) return 0.0;
  double worst = 0.0;
  for (const auto& X : fields) {
    if (V.chart().half_space()) {
      const double t = is_tangential(V.chart(), X, boundary_vertices(V));
      if (!(t < tau_orth)) throw PreconditionError("stationarity_residual: field is not tangential to the boundary");
    }
    const double dv = first_variation(V, X, 4, threads).total;
    const double norm = c1_norm(V, X);
    if (norm > 0.0) worst = std::max(worst, std::fabs(dv) / (mass * norm));
  }
  return worst;
}

// ---------------------------------------------------------------- generators

namespace detail {

// Joins two arcs of points ordered by angle into triangles; `closed` wraps.
inline void zip_rings(const std::vector<std::size_t>& inner, const std::vector<double>& inner_angle,
                      const std::vector<std::size_t>& outer, const std::vector<double>& outer_angle, bool closed,
                      std::vector<std::array<std::size_t, 3>>& tris) {
  auto ia = inner_angle, oa = outer_angle;
  auto in = inner, out = outer;
  if (closed) {
    in.push_back(in.front());
    ia.push_back(ia.front() + 2.0 * std::numbers::pi);
    out.push_back(out.front());
    oa.push_back(oa.front() + 2.0 * std::numbers::pi);
  }
  std::size_t i = 0, o = 0;
  while (i + 1 < in.size() || o + 1 < out.size()) {
    const bool advance_outer = i + 1 >= in.size() || (o + 1 < out.size() && oa[o + 1] <= ia[i + 1]);
    if (advance_outer) {
      tris.push_back({in[i], out[o], out[o + 1]});
      ++o;
    } else {
      tris.push_back({in[i], out[o], in[i + 1]});
      ++i;
    }
  }
}

}  // namespace detail

struct PlanarMesh {
  std::vector<Vec> points;  // 2-d parameter points
  std::vector<std::array<std::size_t, 3>> triangles;
};

/// Disk of radius r with `rings` rings (ring j has 6 j vertices); when `half`
/// only the part with first parameter >= 0 (a half-disk whose diameter lies on
/// the axis u1 = 0).
inline PlanarMesh disk_mesh(double r, int rings, bool half) {
  if (rings < 1) throw ConfigError("disk needs at least one ring");
  PlanarMesh mesh;
  mesh.points.push_back(Vec::Zero(2));
  std::vector<std::size_t> prev{0};
  std::vector<double> prev_angle{0.0};
  const double pi = std::numbers::pi;
  for (int j = 1; j <= rings; ++j) {
    std::vector<std::size_t> ring;
    std::vector<double> ring_angle;
    const double rad = r * j / rings;
    const int count = half ? 3 * j + 1 : 6 * j;
    for (int k = 0; k < count; ++k) {
      const double a = half ? -0.5 * pi + pi * k / (3 * j) : 2.0 * pi * k / count;
      Vec p(2);
      p << rad * std::cos(a), rad * std::sin(a);
      if (half && (k == 0 || k == count - 1)) p[0] = 0.0;
      ring.push_back(mesh.points.size());
      ring_angle.push_back(a);
      mesh.points.push_back(p);
    }
    if (j == 1) {
      for (std::size_t k = 0; k + 1 < ring.size(); ++k) mesh.triangles.push_back({0, ring[k], ring[k + 1]});
      if (!half) mesh.triangles.push_back({0, ring.back(), ring.front()});
    } else {
      detail::zip_rings(prev, prev_angle, ring, ring_angle, !half, mesh.triangles);
    }
    prev = ring;
    prev_angle = ring_angle;
  }
  return mesh;
}

/// Maps a planar mesh through `embed` into an m = 2 varifold.
inline DiscreteVarifold mesh_varifold(std::shared_ptr<const MetricChart> chart, const PlanarMesh& mesh,
                                      const std::function<Vec(const Vec&)>& embed, double theta = 1.0) {
  std::vector<Vec> pts;
  for (const Vec& p : mesh.points) pts.push_back(embed(p));
  DiscreteVarifold V(std::move(chart), 2);
  for (const auto& t : mesh.triangles) V.add({{pts[t[0]], pts[t[1]], pts[t[2]]}, theta});
  return V;
}

/// Segment start + u d for u in [0, length], in `pieces` pieces.
inline DiscreteVarifold segment_varifold(std::shared_ptr<const MetricChart> chart, const Vec& start, const Vec& d,
                                         double length, int pieces, const std::function<Vec(const Vec&)>& adjust,
                                         double theta = 1.0) {
  if (pieces < 1) throw ConfigError("segment needs at least one piece");
  DiscreteVarifold V(std::move(chart), 1);
  Vec prev = adjust(start);
  for (int k = 1; k <= pieces; ++k) {
    Vec next = adjust(start + length * k / pieces * d);
    V.add({{prev, next}, theta});
    prev = next;
  }
  return V;
}

/// Raises x_h to max(x_h, f(base x)) so the point lies in N.
inline Vec project_into(const ProperSubdomain& D, const Vec& x) {
  Vec y = x;
  const auto& S = D.surface();
  y[0] = std::max(y[0], 0.0);
  y[S.height_index()] = std::max(y[S.height_index()], S.f(S.base_of(y)));
  return y;
}

// ---------------------------------------------------------------- flow

/// Area of phi_t(V) where phi_t is the flow of X (RK4 with `substeps`),
/// measured through the Jacobian of the flow map at order-4 nodes.
inline double flowed_area(const DiscreteVarifold& V, const VectorField& X, double t, int substeps = 8) {
  const auto& chart = V.chart();
  const auto rule = simplex_rule(V.m(), 4);
  auto flow = [&](Vec x) {
    const double dt = t / substeps;
    for (int k = 0; k < substeps; ++k) {
      const Vec k1 = X(x);
      const Vec k2 = X(x + 0.5 * dt * k1);
      const Vec k3 = X(x + 0.5 * dt * k2);
      const Vec k4 = X(x + dt * k3);
      x += dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return x;
  };
  const double h = 1e-4;
  std::vector<double> parts;
  for (const auto& s : V.simplices()) {
    const auto e = s.edges();
    const int m = static_cast<int>(e.size());
    double acc = 0.0;
    for (std::size_t q = 0; q < rule.weights.size(); ++q) {
      const Vec x = s.at(rule.nodes[q]);
      Mat DE(chart.dim(), m);
      for (int k = 0; k < m; ++k) {
        const Vec& ek = e[static_cast<std::size_t>(k)];
        DE.col(k) = (flow(x + h * ek) - flow(x - h * ek)) / (2.0 * h);
      }
      const Mat gram = DE.transpose() * chart.metric(flow(x)) * DE;
      acc += rule.weights[q] * std::sqrt(std::max(0.0, gram.determinant())) / factorial(m);
    }
    parts.push_back(s.theta * acc);
  }
  return pairwise_sum(parts);
}

// ---------------------------------------------------------------- experiment

struct ExperimentEntry {
  std::string name;
  double delta_v = 0.0;
  double tau_neg = 0.0;
  double mass = 0.0;
  double sup_phi = 0.0;
  double distance_to_p = 0.0;  // min distance from support vertices to p
  double tangentiality_residual = 0.0;
  double richardson_error = 0.0;
  bool support_in_domain = true;
  bool expect_zero = false;  // control varifold outside supp X
  bool pass = false;
};

struct ExperimentReport {
  int m = 1;
  double epsilon = 0.0;
  double lemma33_worst_trace = 0.0;
  std::vector<ExperimentEntry> entries;
  bool pass = false;
};

/// dV(X) for each varifold of the family; touching members must give
/// dV(X) < -tau_neg, controls (expect_zero) exactly 0.
inline ExperimentReport max_principle_experiment(const OrthogonalFoliation& barrier_foliation,
                                                 const ProperSubdomain& domain, double eps, int m,
                                                 const std::vector<std::pair<std::string, DiscreteVarifold>>& family,
                                                 const std::vector<bool>& expect_zero, double lemma33_worst,
                                                 double tau_neg_factor = 1e-8, unsigned threads = 1) {
  const CutoffProfile c(eps);
  const VectorField X = test_vector_field(barrier_foliation, c);
  ExperimentReport rep;
  rep.m = m;
  rep.epsilon = eps;
  rep.lemma33_worst_trace = lemma33_worst;
  rep.pass = true;
  const Vec& p = barrier_foliation.p();
  for (std::size_t i = 0; i < family.size(); ++i) {
    const auto& [name, V] = family[i];
    ExperimentEntry e;
    e.name = name;
    e.expect_zero = expect_zero[i];
    const auto vr = first_variation(V, X, 4, threads, &domain);
    e.delta_v = vr.total;
    e.richardson_error = vr.richardson_error;
    e.tangentiality_residual = vr.tangentiality_residual;
    e.support_in_domain = vr.support_in_domain;
    e.mass = V.mass();
    e.distance_to_p = std::numeric_limits<double>::infinity();
    const auto rule = simplex_rule(V.m(), 4);
    for (const auto& s : V.simplices()) {
      for (const Vec& v : s.vertices) e.distance_to_p = std::min(e.distance_to_p, (v - p).norm());
      for (const auto& node : rule.nodes) e.sup_phi = std::max(e.sup_phi, X(s.at(node)).norm() > 0.0
                                                                              ? c.phi_extended(barrier_foliation.leaf_s_unchecked(s.at(node)))
                                                                              : 0.0);
    }
    e.tau_neg = tau_neg_factor * e.mass * e.sup_phi;
    e.pass = e.expect_zero ? e.delta_v == 0.0 : (e.delta_v < -e.tau_neg && e.support_in_domain && e.distance_to_p < 1e-3);
    rep.pass = rep.pass && e.pass;
    rep.entries.push_back(std::move(e));
  }
  return rep;
}

}  // namespace freebdy
