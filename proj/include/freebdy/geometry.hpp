#pragma once

// Riemannian metric charts on a box, optionally cut by the half-space
// {x1 >= 0} whose face {x1 = 0} plays the role of the ambient boundary.
// Metric derivatives are finite differences with the chart's fd_step; stencils
// that would cross {x1 = 0} switch to second-order one-sided formulas.

#include "freebdy/errors.hpp"
#include "freebdy/expr.hpp"
#include "freebdy/linalg.hpp"

#include <functional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace freebdy {

using ScalarFn = std::function<double(const Vec&)>;
using MetricFn = std::function<Mat(const Vec&)>;

struct TangentVector {
  Vec base;
  Vec components;
};

/// A vector field in chart coordinates. `jacobian`, when set, returns
/// J(k, i) = d_i X^k and replaces finite differencing of `value`.
struct VectorField {
  std::function<Vec(const Vec&)> value;
  std::function<Mat(const Vec&)> jacobian;

  Vec operator()(const Vec& x) const { return value(x); }
};

/// Christoffel symbols Gamma^k_ij at one point, stored k-major.
class Christoffel {
 public:
  explicit Christoffel(int dim) : dim_(dim), data_(static_cast<std::size_t>(dim * dim * dim), 0.0) {}

  int dim() const noexcept { return dim_; }
  double operator()(int k, int i, int j) const { return data_[index(k, i, j)]; }
  double& at(int k, int i, int j) { return data_[index(k, i, j)]; }

  /// w^k = Gamma^k_ij u^i v^j
  Vec contract(const Vec& u, const Vec& v) const {
    Vec w = Vec::Zero(dim_);
    for (int k = 0; k < dim_; ++k) {
      double s = 0.0;
      for (int i = 0; i < dim_; ++i)
        for (int j = 0; j < dim_; ++j) s += (*this)(k, i, j) * u[i] * v[j];
      w[k] = s;
    }
    return w;
  }

 private:
  std::size_t index(int k, int i, int j) const { return static_cast<std::size_t>((k * dim_ + i) * dim_ + j); }
  int dim_;
  std::vector<double> data_;
};

class MetricChart {
 public:
  MetricChart(int dim, Vec lower, Vec upper, bool half_space, MetricFn metric, double fd_step = 1e-5,
              bool flat = false)
      : dim_(dim),
        lower_(std::move(lower)),
        upper_(std::move(upper)),
        half_space_(half_space),
        metric_(std::move(metric)),
        fd_step_(fd_step),
        flat_(flat) {
    if (dim_ < 2 || dim_ > 8) throw ConfigError("chart dimension must be in [2, 8]");
    if (lower_.size() != dim_ || upper_.size() != dim_) throw ConfigError("chart box bounds must have length dim");
    if (!(fd_step_ > 0.0)) throw ConfigError("fd_step must be positive");
    for (int i = 0; i < dim_; ++i)
      if (!(lower_[i] < upper_[i])) throw ConfigError("chart box is empty along x" + std::to_string(i + 1));
    if (half_space_ && lower_[0] < 0.0) lower_[0] = 0.0;
  }

  static MetricChart euclidean(int dim, Vec lower, Vec upper, bool half_space, double fd_step = 1e-5) {
    return MetricChart(dim, std::move(lower), std::move(upper), half_space,
                       [dim](const Vec&) -> Mat { return Mat::Identity(dim, dim); }, fd_step, true);
  }

  /// `entries` is either the full dim x dim matrix (only the upper triangle is
  /// read) or the upper triangle row by row (row i has dim - i entries).
  static MetricChart from_expressions(int dim, Vec lower, Vec upper, bool half_space,
                                      const std::vector<std::vector<std::string>>& entries, double fd_step = 1e-5) {
    if (static_cast<int>(entries.size()) != dim) throw ConfigError("metric must have dim rows");
    std::vector<Expression> upper_tri;
    bool all_constant = true;
    bool identity = true;
    for (int i = 0; i < dim; ++i) {
      const auto& row = entries[static_cast<std::size_t>(i)];
      const bool full = static_cast<int>(row.size()) == dim;
      if (!full && static_cast<int>(row.size()) != dim - i)
        throw ConfigError("metric row " + std::to_string(i + 1) + " has the wrong length");
      for (int j = i; j < dim; ++j) {
        const auto& src = row[static_cast<std::size_t>(full ? j : j - i)];
        upper_tri.push_back(Expression::parse(src, dim));
        const auto& e = upper_tri.back();
        all_constant = all_constant && e.is_constant();
        if (e.is_constant()) identity = identity && e.eval(Vec::Zero(dim)) == (i == j ? 1.0 : 0.0);
        else identity = false;
      }
    }
    auto fn = [dim, upper_tri](const Vec& x) -> Mat {
      Mat g(dim, dim);
      std::size_t k = 0;
      for (int i = 0; i < dim; ++i)
        for (int j = i; j < dim; ++j) {
          g(i, j) = upper_tri[k++].eval(x);
          g(j, i) = g(i, j);
        }
      return g;
    };
    return MetricChart(dim, std::move(lower), std::move(upper), half_space, std::move(fn), fd_step,
                       all_constant && identity);
  }

  int dim() const noexcept { return dim_; }
  const Vec& lower() const noexcept { return lower_; }
  const Vec& upper() const noexcept { return upper_; }
  bool half_space() const noexcept { return half_space_; }
  double fd_step() const noexcept { return fd_step_; }
  bool is_flat() const noexcept { return flat_; }

  MetricChart with_fd_step(double h) const {
    MetricChart c = *this;
    if (!(h > 0.0)) throw ConfigError("fd_step must be positive");
    c.fd_step_ = h;
    return c;
  }

  bool contains(const Vec& x, double tol = 1e-12) const {
    if (x.size() != dim_) return false;
    for (int i = 0; i < dim_; ++i)
      if (x[i] < lower_[i] - tol || x[i] > upper_[i] + tol) return false;
    return true;
  }

  void require_inside(const Vec& x, std::string_view what) const {
    if (!contains(x, 1e-9)) throw OutOfDomainError(std::string(what) + ": point outside the chart domain");
  }

  /// Metric matrix; exactly symmetric (upper triangle mirrored).
  Mat metric(const Vec& x) const {
    Mat g = metric_(x);
    for (int i = 0; i < dim_; ++i)
      for (int j = 0; j < i; ++j) g(i, j) = g(j, i);
    return g;
  }

  Mat inverse_metric(const Vec& x) const {
    const Mat g = metric(x);
    Eigen::LLT<Mat> llt(g);
    if (llt.info() != Eigen::Success) throw NumericalError("metric is not positive definite");
    return llt.solve(Mat::Identity(dim_, dim_));
  }

  double smallest_eigenvalue(const Vec& x) const { return symmetric_eigenvalues(metric(x))[0]; }

  double inner(const Vec& x, const Vec& u, const Vec& v) const { return u.dot(metric(x) * v); }
  double norm(const Vec& x, const Vec& u) const { return std::sqrt(inner(x, u, u)); }

  /// Inward unit normal of {x1 = 0}: g^{-1} dx1 normalized.
  Vec boundary_normal(const Vec& x) const {
    const Mat ginv = inverse_metric(x);
    Vec n = ginv.col(0);
    return n / std::sqrt(ginv(0, 0));
  }

  /// Derivative of f along u at x with step h (central, or second-order
  /// one-sided away from {x1 = 0} when a central stencil would cross it).
  template <class F>
  auto directional_derivative(F&& f, const Vec& x, const Vec& u, double h) const {
    if (half_space_ && u[0] != 0.0 && x[0] - h * std::fabs(u[0]) < 0.0) {
      const Vec d = u[0] > 0.0 ? Vec(u) : Vec(-u);
      const auto f0 = f(x);
      const auto f1 = f(Vec(x + h * d));
      const auto f2 = f(Vec(x + 2.0 * h * d));
      const double sign = u[0] > 0.0 ? 1.0 : -1.0;
      return decltype(f0)(sign * (-3.0 * f0 + 4.0 * f1 - f2) / (2.0 * h));
    }
    const auto up = f(Vec(x + h * u));
    const auto down = f(Vec(x - h * u));
    return decltype(up)((up - down) / (2.0 * h));
  }

  template <class F>
  auto partial(F&& f, const Vec& x, int i, double h) const {
    return directional_derivative(std::forward<F>(f), x, unit_vector(dim_, i), h);
  }

  /// Christoffel symbols without the domain check (used by internal stencils).
  Christoffel christoffel_at(const Vec& x) const {
    Christoffel gamma(dim_);
    if (flat_) return gamma;
    const double h = fd_step_;
    std::vector<Mat> dg;
    dg.reserve(static_cast<std::size_t>(dim_));
    for (int l = 0; l < dim_; ++l) dg.push_back(partial([this](const Vec& y) { return metric(y); }, x, l, h));
    const Mat ginv = inverse_metric(x);
    for (int i = 0; i < dim_; ++i)
      for (int j = i; j < dim_; ++j)
        for (int k = 0; k < dim_; ++k) {
          double s = 0.0;
          for (int l = 0; l < dim_; ++l) s += ginv(k, l) * (dg[i](j, l) + dg[j](i, l) - dg[l](i, j));
          gamma.at(k, i, j) = 0.5 * s;
          gamma.at(k, j, i) = 0.5 * s;
        }
    return gamma;
  }

 private:
  int dim_;
  Vec lower_;
  Vec upper_;
  bool half_space_;
  MetricFn metric_;
  double fd_step_;
  bool flat_;
};

/// Fourth-order first derivative of f along u at x. Uses the five-point
/// central stencil, or the five-point forward stencil (away from {x1 = 0})
/// when `half_space` is set and a central stencil would cross x1 = 0.
template <class F>
auto derivative4(F&& f, const Vec& x, const Vec& u, double h, bool half_space) {
  if (half_space && u[0] != 0.0 && x[0] - 2.0 * h * std::fabs(u[0]) < 0.0) {
    const Vec d = u[0] > 0.0 ? Vec(u) : Vec(-u);
    const double sign = u[0] > 0.0 ? 1.0 : -1.0;
    const auto f0 = f(x);
    const auto f1 = f(Vec(x + h * d));
    const auto f2 = f(Vec(x + 2.0 * h * d));
    const auto f3 = f(Vec(x + 3.0 * h * d));
    const auto f4 = f(Vec(x + 4.0 * h * d));
    return decltype(f0)(sign * (-25.0 * f0 + 48.0 * f1 - 36.0 * f2 + 16.0 * f3 - 3.0 * f4) / (12.0 * h));
  }
  const auto fm2 = f(Vec(x - 2.0 * h * u));
  const auto fm1 = f(Vec(x - h * u));
  const auto fp1 = f(Vec(x + h * u));
  const auto fp2 = f(Vec(x + 2.0 * h * u));
  return decltype(fm2)((fm2 - 8.0 * fm1 + 8.0 * fp1 - fp2) / (12.0 * h));
}

/// Fourth-order coordinate gradient (covector) of a scalar function.
template <class F>
Vec gradient4(F&& f, const Vec& x, double h, bool half_space) {
  Vec grad(x.size());
  for (Eigen::Index i = 0; i < x.size(); ++i)
    grad[i] = derivative4(f, x, unit_vector(static_cast<int>(x.size()), static_cast<int>(i)), h, half_space);
  return grad;
}

/// Gamma^k_ij at x; symmetric in (i, j) by construction.
inline Christoffel christoffel(const MetricChart& chart, const Vec& x) {
  chart.require_inside(x, "christoffel");
  return chart.christoffel_at(x);
}

/// (nabla_u X)^k = u(X^k) + Gamma^k_ij u^i X^j at u.base. `step` overrides the
/// chart's fd_step for the directional derivative of X.
inline Vec covariant_derivative(const MetricChart& chart, const VectorField& field, const TangentVector& u,
                                double step = 0.0) {
  const Vec& x = u.base;
  const double h = step > 0.0 ? step : chart.fd_step();
  Vec du = field.jacobian ? Vec(field.jacobian(x) * u.components)
                          : Vec(chart.directional_derivative(field.value, x, u.components, h));
  if (chart.is_flat()) return du;
  return du + chart.christoffel_at(x).contract(u.components, field.value(x));
}

struct GeodesicSample {
  double time;
  Vec position;
  Vec velocity;
};

struct GeodesicPath {
  std::vector<GeodesicSample> samples;
  bool exited = false;   // integration halted at the domain boundary
  double speed_drift = 0.0;  // max relative change of |velocity|_g
};

/// Classic RK4 for x'' + Gamma(x', x') = 0 with `steps` equal steps on [0, T].
inline GeodesicPath geodesic(const MetricChart& chart, const Vec& x0, const Vec& v0, double duration, int steps) {
  if (steps < 2) throw PreconditionError("geodesic needs at least 2 steps");
  if (!chart.contains(x0)) throw OutOfDomainError("geodesic starts outside the chart domain");
  const int n = chart.dim();
  auto accel = [&](const Vec& x, const Vec& v) -> Vec { return -chart.christoffel_at(x).contract(v, v); };
  GeodesicPath path;
  const double speed0 = chart.norm(x0, v0);
  path.samples.push_back({0.0, x0, v0});
  Vec x = x0, v = v0;
  const double dt = duration / steps;
  for (int s = 1; s <= steps; ++s) {
    const Vec k1x = v, k1v = accel(x, v);
    const Vec k2x = v + 0.5 * dt * k1v, k2v = accel(x + 0.5 * dt * k1x, k2x);
    const Vec k3x = v + 0.5 * dt * k2v, k3v = accel(x + 0.5 * dt * k2x, k3x);
    const Vec k4x = v + dt * k3v, k4v = accel(x + dt * k3x, k4x);
    Vec xn = x + dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
    Vec vn = v + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    if (!chart.contains(xn)) {
      path.exited = true;
      break;
    }
    x = std::move(xn);
    v = std::move(vn);
    if (speed0 > 0.0) {
      const double drift = std::fabs(chart.norm(x, v) - speed0) / speed0;
      path.speed_drift = std::max(path.speed_drift, drift);
      if (drift > 1e-3) throw NumericalError("geodesic blow-up: speed drift " + std::to_string(drift));
    }
    path.samples.push_back({s * dt, x, v});
  }
  (void)n;
  return path;
}

/// Gram-Schmidt with respect to g(x), preserving the order of the spans.
inline std::vector<Vec> orthonormalize(const MetricChart& chart, const Vec& x, const std::vector<Vec>& vectors) {
  const Mat g = chart.metric(x);
  std::vector<Vec> out;
  out.reserve(vectors.size());
  for (const Vec& v : vectors) {
    const double scale = std::sqrt(v.dot(g * v));
    Vec w = v;
    for (int pass = 0; pass < 2; ++pass)
      for (const Vec& e : out) w -= w.dot(g * e) * e;
    const double nrm = std::sqrt(w.dot(g * w));
    if (!(nrm > 1e-10 * std::max(1.0, scale))) throw NumericalError("orthonormalize: rank deficiency");
    out.push_back(w / nrm);
  }
  return out;
}

}  // namespace freebdy
