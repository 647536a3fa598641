#pragma once

// Hypersurfaces given as graphs x_h = f(y) over the remaining coordinates y,
// proper sub-domains N = {x1 >= 0} ∩ {x_h >= f}, and their curvature tests.

#include "freebdy/errors.hpp"
#include "freebdy/expr.hpp"
#include "freebdy/geometry.hpp"
#include "freebdy/linalg.hpp"
#include "freebdy/random.hpp"

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

namespace freebdy {

class GraphHypersurface {
 public:
  /// `height_index` is 0-based; `orientation` = +1 points the unit normal
  /// toward increasing x_h (into {x_h >= f}), -1 the other way.
  GraphHypersurface(MetricChart chart, int height_index, ScalarFn f, double r0, int orientation)
      : chart_(std::move(chart)), height_(height_index), f_(std::move(f)), r0_(r0), orientation_(orientation) {
    if (height_ < 0 || height_ >= chart_.dim()) throw ConfigError("height_index out of range");
    if (!(r0_ > 0.0)) throw ConfigError("graph radius r0 must be positive");
    if (orientation_ != 1 && orientation_ != -1) throw ConfigError("orientation must be +1 or -1");
  }

  /// f is written in x1..xn, the chart coordinates with x_h removed, in order.
  static GraphHypersurface from_expression(MetricChart chart, int height_index, std::string_view source, double r0,
                                           int orientation) {
    const int n = chart.dim() - 1;
    auto e = Expression::parse(source, n);
    return GraphHypersurface(std::move(chart), height_index, [e](const Vec& y) { return e.eval(y); }, r0,
                             orientation);
  }

  const MetricChart& chart() const noexcept { return chart_; }
  int height_index() const noexcept { return height_; }
  int base_dim() const noexcept { return chart_.dim() - 1; }
  double r0() const noexcept { return r0_; }
  int orientation() const noexcept { return orientation_; }
  const ScalarFn& function() const noexcept { return f_; }

  /// Base-coordinate index of chart x1, or -1 when x1 is the height.
  int x1_base_index() const noexcept { return height_ == 0 ? -1 : 0; }
  int chart_index(int base) const noexcept { return base < height_ ? base : base + 1; }

  double f(const Vec& y) const { return f_(y); }

  Vec embed(const Vec& y) const {
    Vec x(chart_.dim());
    for (int a = 0; a < base_dim(); ++a) x[chart_index(a)] = y[a];
    x[height_] = f_(y);
    return x;
  }

  Vec base_of(const Vec& x) const {
    Vec y(base_dim());
    for (int a = 0; a < base_dim(); ++a) y[a] = x[chart_index(a)];
    return y;
  }

  bool in_half_ball(const Vec& y, double tol = 1e-12) const {
    if (y.squaredNorm() > r0_ * r0_ * (1.0 + tol) + tol) return false;
    if (chart_.half_space() && x1_base_index() == 0 && y[0] < -tol) return false;
    return true;
  }

  /// Gradient of f in base coordinates (fourth-order stencils; one-sided near
  /// x1 = 0 unless `allow_one_sided` is false).
  Vec df(const Vec& y, bool allow_one_sided = true) const {
    const bool half = allow_one_sided && chart_.half_space() && x1_base_index() == 0;
    return gradient4(f_, y, chart_.fd_step(), half);
  }

  /// dF for F = orientation * (x_h - f(base(x))): the level covector of the
  /// translated-graph family through x.
  Vec level_covector(const Vec& x, bool allow_one_sided = true) const {
    const Vec grad = df(base_of(x), allow_one_sided);
    Vec c = Vec::Zero(chart_.dim());
    c[height_] = 1.0;
    for (int a = 0; a < base_dim(); ++a) c[chart_index(a)] = -grad[a];
    return orientation_ * c;
  }

  /// Unit normal of the translated graph through x (the leaf normal field).
  Vec normal_at(const Vec& x) const {
    const Vec c = level_covector(x);
    const Vec up = chart_.inverse_metric(x) * c;
    return up / std::sqrt(c.dot(up));
  }

  /// |dF|_g at x.
  double level_gradient_norm(const Vec& x) const {
    const Vec c = level_covector(x);
    return std::sqrt(c.dot(chart_.inverse_metric(x) * c));
  }

  /// Coordinate tangent vectors d embed / d y_a as columns (dim x n).
  Mat tangents(const Vec& y, bool allow_one_sided = true) const {
    const Vec grad = df(y, allow_one_sided);
    Mat t = Mat::Zero(chart_.dim(), base_dim());
    for (int a = 0; a < base_dim(); ++a) {
      t(chart_index(a), a) = 1.0;
      t(height_, a) = grad[a];
    }
    return t;
  }

  GraphHypersurface translated(double s) const {
    GraphHypersurface g = *this;
    auto f = f_;
    g.f_ = [f, s](const Vec& y) { return f(y) + s; };
    return g;
  }

  GraphHypersurface with_chart(MetricChart chart) const {
    GraphHypersurface g = *this;
    g.chart_ = std::move(chart);
    return g;
  }

  GraphHypersurface with_function(ScalarFn f) const {
    GraphHypersurface g = *this;
    g.f_ = std::move(f);
    return g;
  }

 private:
  MetricChart chart_;
  int height_;
  ScalarFn f_;
  double r0_;
  int orientation_;
};

inline TangentVector unit_normal(const GraphHypersurface& surface, const Vec& y) {
  if (!surface.in_half_ball(y)) throw OutOfDomainError("unit_normal: base point outside the half-ball");
  const Vec x = surface.embed(y);
  return {x, surface.normal_at(x)};
}

struct ShapeOperator {
  Mat matrix;              // symmetrized, in the g-orthonormal tangent frame
  double asymmetry = 0.0;  // max |M - M^T| / 2 of the raw matrix
  std::vector<Vec> frame;  // g-orthonormal tangent basis at the point
};

/// Matrix of u -> tangential part of -nabla_u nu in a g-orthonormal frame of
/// the tangent space, with nu extended as the leaf normal field.
inline ShapeOperator shape_operator(const GraphHypersurface& surface, const Vec& y) {
  if (!surface.in_half_ball(y)) throw OutOfDomainError("shape_operator: base point outside the half-ball");
  const auto& chart = surface.chart();
  const Vec x = surface.embed(y);
  const Mat t = surface.tangents(y);
  std::vector<Vec> cols;
  for (int a = 0; a < surface.base_dim(); ++a) cols.emplace_back(t.col(a));
  ShapeOperator out;
  out.frame = orthonormalize(chart, x, cols);
  const VectorField nu{[&surface](const Vec& q) { return surface.normal_at(q); }, {}};
  const Mat g = chart.metric(x);
  const int n = surface.base_dim();
  Mat raw(n, n);
  for (int a = 0; a < n; ++a) {
    const Vec dnu = covariant_derivative(chart, nu, {x, out.frame[static_cast<std::size_t>(a)]});
    for (int b = 0; b < n; ++b) raw(a, b) = -dnu.dot(g * out.frame[static_cast<std::size_t>(b)]);
  }
  out.asymmetry = 0.5 * (raw - raw.transpose()).cwiseAbs().maxCoeff();
  if (out.asymmetry > 1e-3)
    throw NumericalError("shape operator asymmetry " + std::to_string(out.asymmetry) + " exceeds 1e-3");
  out.matrix = 0.5 * (raw + raw.transpose());
  return out;
}

/// Principal curvatures, ascending.
inline std::vector<double> principal_curvatures(const GraphHypersurface& surface, const Vec& y) {
  const Vec ev = symmetric_eigenvalues(shape_operator(surface, y).matrix);
  return to_std(ev);
}

struct ConvexityReport {
  Vec point;
  std::vector<double> kappas;  // ascending
  int m = 1;
  double margin = 0.0;  // kappa_1 + ... + kappa_m
  double tolerance = 1e-8;
  bool verdict = false;
};

inline double prefix_sum(const std::vector<double>& values, int m) {
  double s = 0.0;
  for (int i = 0; i < m; ++i) s += values[static_cast<std::size_t>(i)];
  return s;
}

inline ConvexityReport strong_m_convexity(const GraphHypersurface& surface, const Vec& y, int m,
                                          double tolerance = 1e-8) {
  if (m < 1 || m > surface.base_dim()) throw PreconditionError("strong_m_convexity: need 1 <= m <= n");
  ConvexityReport r;
  r.point = surface.embed(y);
  r.kappas = principal_curvatures(surface, y);
  r.m = m;
  r.margin = prefix_sum(r.kappas, m);
  r.tolerance = tolerance;
  r.verdict = r.margin > tolerance;
  return r;
}

/// N = {x1 >= 0} ∩ {x_h >= f} with S the graph of f and T the face {x1 = 0}.
class ProperSubdomain {
 public:
  ProperSubdomain(GraphHypersurface surface, int m) : surface_(std::move(surface)), m_(m) {
    if (!surface_.chart().half_space()) throw ConfigError("proper sub-domain needs a half-space chart");
    if (surface_.height_index() == 0) throw ConfigError("S must be a graph over a base containing x1");
    if (m_ < 1 || m_ > surface_.base_dim()) throw ConfigError("m must satisfy 1 <= m <= n");
  }

  const GraphHypersurface& surface() const noexcept { return surface_; }
  const MetricChart& chart() const noexcept { return surface_.chart(); }
  int m() const noexcept { return m_; }

  bool contains(const Vec& x) const {
    if (x[0] < 0.0) return false;
    return x[surface_.height_index()] >= surface_.f(surface_.base_of(x));
  }

  /// Base points of S ∩ T: y with y1 = 0 inside 0.9 r0.
  std::vector<Vec> corner_samples(int count) const {
    std::vector<Vec> out;
    if (count < 1) return out;
    const int n = surface_.base_dim();
    const double r = 0.9 * surface_.r0();
    if (n == 1) {
      out.push_back(Vec::Zero(1));
      return out;
    }
    if (n == 2) {
      for (int k = 0; k < count; ++k) {
        Vec y = Vec::Zero(2);
        y[1] = count == 1 ? 0.0 : -r + 2.0 * r * k / (count - 1);
        out.push_back(y);
      }
      return out;
    }
    CounterRng rng(0, 17);
    out.push_back(Vec::Zero(n));
    while (static_cast<int>(out.size()) < count) {
      Vec y = Vec::Zero(n);
      for (int a = 1; a < n; ++a) y[a] = rng.uniform(-r, r);
      if (y.squaredNorm() <= r * r) out.push_back(y);
    }
    return out;
  }

 private:
  GraphHypersurface surface_;
  int m_;
};

struct OrthogonalityResult {
  double residual = 0.0;  // max |<nu_S, nu_T>_g| over the corner samples
  Vec witness;            // corner point attaining the max
};

inline OrthogonalityResult check_orthogonality(const ProperSubdomain& domain, int samples) {
  const auto corner = domain.corner_samples(samples);
  if (corner.empty()) throw PreconditionError("check_orthogonality: empty corner sample set");
  OrthogonalityResult r;
  r.residual = -1.0;
  const auto& chart = domain.chart();
  for (const Vec& y : corner) {
    const auto nu = unit_normal(domain.surface(), y);
    const double v = std::fabs(chart.inner(nu.base, nu.components, chart.boundary_normal(nu.base)));
    if (v > r.residual) {
      r.residual = v;
      r.witness = nu.base;
    }
  }
  return r;
}

inline bool contains(const ProperSubdomain& domain, const Vec& x) { return domain.contains(x); }

}  // namespace freebdy
