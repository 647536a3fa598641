#pragma once

// Fermi coordinates (d, y) relative to a graph hypersurface H: the point
// reached by following the g-geodesic from H(y) in the direction of the unit
// normal for time d.

#include "freebdy/errors.hpp"
#include "freebdy/geometry.hpp"
#include "freebdy/surfaces.hpp"

#include <memory>
#include <utility>

namespace freebdy {

class FermiChart {
 public:
  static constexpr int kSteps = 16;

  FermiChart(MetricChart source, GraphHypersurface surface, const Vec& p, double radius)
      : source_(std::make_shared<MetricChart>(std::move(source))),
        surface_(std::make_shared<GraphHypersurface>(std::move(surface))),
        radius_(radius) {
    if (!(radius_ > 0.0)) throw ConfigError("fermi radius must be positive");
    const auto& H = *surface_;
    if (std::fabs(p[H.height_index()] - H.f(H.base_of(p))) > 1e-8)
      throw PreconditionError("fermi_chart: p is not on H");
    centre_ = H.base_of(p);
    check_focal();
  }

  const MetricChart& source() const noexcept { return *source_; }
  double radius() const noexcept { return radius_; }

  /// (d, y) -> x.
  Vec from_fermi(const Vec& z) const {
    const auto& H = *surface_;
    const Vec y = z.tail(H.base_dim());
    Vec x = H.embed(y);
    Vec v = H.normal_at(x);
    const double dt = z[0] / kSteps;
    const auto& g = *source_;
    auto accel = [&g](const Vec& q, const Vec& w) -> Vec { return -g.christoffel_at(q).contract(w, w); };
    for (int s = 0; s < kSteps; ++s) {
      if (g.is_flat()) {
        x += dt * v;
        continue;
      }
      const Vec k1x = v, k1v = accel(x, v);
      const Vec k2x = v + 0.5 * dt * k1v, k2v = accel(x + 0.5 * dt * k1x, k2x);
      const Vec k3x = v + 0.5 * dt * k2v, k3v = accel(x + 0.5 * dt * k2x, k3x);
      const Vec k4x = v + dt * k3v, k4v = accel(x + dt * k3x, k4x);
      x += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
      v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    return x;
  }

  /// x -> (d, y) by Newton iteration on from_fermi.
  Vec to_fermi(const Vec& x) const {
    const auto& H = *surface_;
    const int dim = source_->dim();
    Vec z(dim);
    const Vec c = H.level_covector(x);
    z[0] = H.orientation() * (x[H.height_index()] - H.f(H.base_of(x))) /
           std::sqrt(c.dot(source_->inverse_metric(x) * c));
    z.tail(H.base_dim()) = H.base_of(x);
    for (int it = 0; it < 40; ++it) {
      const Vec r = from_fermi(z) - x;
      if (r.norm() < 1e-14 * std::max(1.0, x.norm())) return z;
      z -= jacobian(z).lu().solve(r);
    }
    const Vec r = from_fermi(z) - x;
    if (r.norm() > 1e-10) throw NumericalError("to_fermi: Newton iteration did not converge");
    return z;
  }

  Mat jacobian(const Vec& z) const {
    const int dim = source_->dim();
    const double h = 1e-6;
    Mat J(dim, dim);
    for (int i = 0; i < dim; ++i) {
      const Vec e = unit_vector(dim, i);
      J.col(i) = (from_fermi(z + h * e) - from_fermi(z - h * e)) / (2.0 * h);
    }
    return J;
  }

  /// Pulled-back metric as a chart on the box |d|, |y - y_p| <= radius.
  MetricChart chart() const {
    const int dim = source_->dim();
    Vec lo(dim), hi(dim);
    lo[0] = -radius_;
    hi[0] = radius_;
    for (int a = 0; a < surface_->base_dim(); ++a) {
      lo[a + 1] = centre_[a] - radius_;
      hi[a + 1] = centre_[a] + radius_;
    }
    auto self = *this;
    return MetricChart(dim, lo, hi, false, [self](const Vec& z) -> Mat {
      const Mat J = self.jacobian(z);
      const Mat G = J.transpose() * self.source_->metric(self.from_fermi(z)) * J;
      return 0.5 * (G + G.transpose());
    }, source_->fd_step());
  }

 private:
  // The normal exponential map must keep the orientation of its Jacobian
  // along every sampled ray; a sign change marks a focal point.
  void check_focal() const {
    const int n = surface_->base_dim();
    const int dim = n + 1;
    const int rays = 5;
    for (int r = 0; r < rays * (n > 1 ? rays : 1); ++r) {
      Vec z = Vec::Zero(dim);
      z.tail(n) = centre_;
      z[1] += radius_ * (-0.5 + static_cast<double>(r % rays) / (rays - 1));
      if (n > 1) z[2] += radius_ * (-0.5 + static_cast<double>(r / rays) / (rays - 1));
      double sign0 = 0.0;
      for (int k = -4; k <= 4; ++k) {
        z[0] = radius_ * k / 4.0;
        const double det = jacobian(z).determinant();
        if (sign0 == 0.0) sign0 = det > 0.0 ? 1.0 : -1.0;
        if (det * sign0 <= 0.0) throw NumericalError("fermi_chart: focal point within radius");
      }
    }
  }

  std::shared_ptr<const MetricChart> source_;
  std::shared_ptr<const GraphHypersurface> surface_;
  double radius_;
  Vec centre_;
};

inline FermiChart fermi_chart(const MetricChart& chart, const GraphHypersurface& H, const Vec& p, double radius) {
  return FermiChart(chart, H.with_chart(chart), p, radius);
}

}  // namespace freebdy
