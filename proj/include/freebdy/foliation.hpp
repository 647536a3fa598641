#pragma once

// The orthogonal double foliation near a corner point p: leaves S_s are the
// translated graphs f + s, the normal field nu is their unit normal, and the
// leaves T_t are swept by nu-curves through the intrinsic parallel sets Γ_t of
// the base surface (points of S at intrinsic distance t from S ∩ {x1 = 0}).

#include "freebdy/errors.hpp"
#include "freebdy/geometry.hpp"
#include "freebdy/linalg.hpp"
#include "freebdy/random.hpp"
#include "freebdy/surfaces.hpp"

#include <algorithm>
#include <cstdint>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace freebdy {

/// Intrinsic distance in a graph surface S from the corner S ∩ {x1 = 0},
/// by shooting S-geodesics along the inward conormal. Fixed step and
/// iteration counts keep the result a smooth function of the target point;
/// targets with y1 < 0 get the smooth signed extension.
class IntrinsicDistance {
 public:
  static constexpr int kSteps = 4;
  static constexpr int kNewton = 4;

  explicit IntrinsicDistance(GraphHypersurface surface) : surface_(std::move(surface)) {}

  Mat induced_metric(const Vec& y) const {
    const Mat t = surface_.tangents(y, false);
    return t.transpose() * surface_.chart().metric(surface_.embed(y)) * t;
  }

  double operator()(const Vec& y) const {
    const int n = surface_.base_dim();
    // unknowns: (tau, z) with z the corner coordinates y2..yn
    Vec u(n);
    u.tail(n - 1) = y.tail(n - 1);
    {
      Vec c = Vec::Zero(n);
      c.tail(n - 1) = y.tail(n - 1);
      const Mat hinv = induced_metric(c).inverse();
      u[0] = y[0] / std::sqrt(hinv(0, 0));
    }
    const double eps = 1e-7;
    for (int it = 0; it < kNewton; ++it) {
      const Vec r = shoot(u) - y;
      Mat J(n, n);
      for (int k = 0; k < n; ++k) {
        Vec du = u;
        du[k] += eps;
        J.col(k) = (shoot(du) - y - r) / eps;
      }
      u -= J.lu().solve(r);
    }
    return u[0];
  }

  /// Endpoint of the S-geodesic of length tau from the corner point (0, z)
  /// in the unit inward conormal direction.
  Vec shoot(const Vec& u) const {
    const int n = surface_.base_dim();
    Vec y = Vec::Zero(n);
    y.tail(n - 1) = u.tail(n - 1);
    const Mat hinv = induced_metric(y).inverse();
    Vec v = hinv.col(0) / std::sqrt(hinv(0, 0));
    const double dt = u[0] / kSteps;
    auto accel = [this](const Vec& q, const Vec& w) -> Vec { return -contract(q, w); };
    for (int s = 0; s < kSteps; ++s) {
      const Vec k1x = v, k1v = accel(y, v);
      const Vec k2x = v + 0.5 * dt * k1v, k2v = accel(y + 0.5 * dt * k1x, k2x);
      const Vec k3x = v + 0.5 * dt * k2v, k3v = accel(y + 0.5 * dt * k2x, k3x);
      const Vec k4x = v + dt * k3v, k4v = accel(y + dt * k3x, k4x);
      y += dt / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
      v += dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
    }
    return y;
  }

 private:
  // Gamma^a_bc w^b w^c of the induced metric, central differences.
  Vec contract(const Vec& y, const Vec& w) const {
    const int n = surface_.base_dim();
    const double h = surface_.chart().fd_step();
    std::vector<Mat> dh(static_cast<std::size_t>(n));
    for (int d = 0; d < n; ++d) {
      const Vec e = unit_vector(n, d);
      dh[static_cast<std::size_t>(d)] = (induced_metric(y + h * e) - induced_metric(y - h * e)) / (2.0 * h);
    }
    // lowered: G_d = sum_bc (d_b h_cd - 1/2 d_d h_bc) w^b w^c
    Vec low(n);
    for (int d = 0; d < n; ++d) {
      double acc = 0.0;
      for (int b = 0; b < n; ++b) acc += w[b] * dh[static_cast<std::size_t>(b)].row(d).dot(w);
      acc -= 0.5 * w.dot(dh[static_cast<std::size_t>(d)] * w);
      low[d] = acc;
    }
    return induced_metric(y).llt().solve(low);
  }

  GraphHypersurface surface_;
};

struct AdaptedFrame {
  Vec point;
  std::vector<Vec> e;  // e[0] = e1, ..., e[n] = e_{n+1} = nu
};

struct PsiResult {
  double psi = 0.0;
  double residual = 0.0;  // |grad s - psi nu|_g
};

/// Second-order data of the double foliation at q, in the adapted frame.
struct LeafIngredients {
  AdaptedFrame frame;
  double psi = 0.0;
  Mat shape_s;     // n x n: A^{S_s}(e_a, e_b) = -<nabla_{e_a} nu, e_b>, a, b = 1..n (symmetrized)
  Mat shape_t;     // n x n on (e_2..e_n, nu): A^{T_t}(u, v) = -<nabla_u e1, v> (raw, rows = u)
  Vec nu_nu;       // <nabla_nu nu, e_j>, j = 1..n
  double shape_s_asymmetry = 0.0;
  double shape_t_asymmetry = 0.0;
};

class OrthogonalFoliation {
 public:
  OrthogonalFoliation(GraphHypersurface base, Vec p, double delta, double tau_orth = 1e-3, int corner_samples = 16)
      : base_(std::make_shared<GraphHypersurface>(std::move(base))), p_(std::move(p)), delta_(delta) {
    const auto& S = *base_;
    if (!(delta_ > 0.0)) throw ConfigError("foliation delta must be positive");
    const ProperSubdomain D(S, 1);
    const auto orth = check_orthogonality(D, corner_samples);
    if (!(orth.residual < tau_orth))
      throw PreconditionError("foliation base is not orthogonal to the boundary (residual " +
                              std::to_string(orth.residual) + ")");
    const int h = S.height_index();
    for (double sign : {-1.0, 1.0}) {
      Vec q = p_;
      q[h] += sign * delta_;
      if (!S.chart().contains(q, 1e-12))
        throw ConfigError("nu-curve through p leaves the chart before length delta");
    }
    distance_ = std::make_shared<IntrinsicDistance>(S);
  }

  const GraphHypersurface& base() const noexcept { return *base_; }
  const MetricChart& chart() const noexcept { return base_->chart(); }
  const Vec& p() const noexcept { return p_; }
  double delta() const noexcept { return delta_; }
  int n() const noexcept { return base_->base_dim(); }

  /// Point on S_s above the base point y.
  Vec point(const Vec& y, double s) const {
    Vec q = base_->embed(y);
    q[base_->height_index()] += s;
    return q;
  }

  bool in_neighborhood(const Vec& q) const {
    if (!chart().contains(q, 1e-12)) return false;
    const Vec y = base_->base_of(q);
    if (y.squaredNorm() >= base_->r0() * base_->r0()) return false;
    return std::fabs(leaf_s_unchecked(q)) < delta_;
  }

  double leaf_s(const Vec& q) const {
    require(q);
    return leaf_s_unchecked(q);
  }
  double leaf_s_unchecked(const Vec& q) const {
    return q[base_->height_index()] - base_->f(base_->base_of(q));
  }

  TangentVector normal_field(const Vec& q) const {
    require(q);
    return {q, base_->normal_at(q)};
  }
  VectorField normal_vector_field() const {
    auto b = base_;
    return {[b](const Vec& x) { return b->normal_at(x); }, {}};
  }

  PsiResult psi(const Vec& q) const {
    require(q);
    const auto& g = chart();
    Vec ds(g.dim());
    for (int i = 0; i < g.dim(); ++i)
      ds[i] = g.partial([this](const Vec& x) { return leaf_s_unchecked(x); }, q, i, g.fd_step());
    const Vec grad = g.inverse_metric(q) * ds;
    const Vec nu = base_->normal_at(q);
    PsiResult r;
    r.psi = ds.dot(nu);
    const Vec d = grad - r.psi * nu;
    r.residual = g.norm(q, d);
    if (r.residual > 1e-3)
      throw NumericalError("psi: |grad s - psi nu| = " + std::to_string(r.residual) + " exceeds 1e-3");
    return r;
  }

  /// Foot of the nu-curve through q on S, as base coordinates.
  Vec foot(const Vec& q) const {
    const auto& S = *base_;
    const int steps = 16;
    const double s0 = leaf_s_unchecked(q);
    const double ds = -s0 / steps;
    // dq/ds = orientation * nu / |dF|_g along the nu-curve
    auto rhs = [&S](const Vec& x) -> Vec {
      const Vec c = S.level_covector(x);
      const Vec up = S.chart().inverse_metric(x) * c;
      return S.orientation() * up / c.dot(up);
    };
    Vec x = q;
    for (int k = 0; k < steps; ++k) {
      const Vec k1 = rhs(x);
      const Vec k2 = rhs(x + 0.5 * ds * k1);
      const Vec k3 = rhs(x + 0.5 * ds * k2);
      const Vec k4 = rhs(x + ds * k3);
      x += ds / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return S.base_of(x);
  }

  /// t with q in T_t.
  double t_leaf(const Vec& q) const { return (*distance_)(foot(q)); }

  /// Unit field tangent to S_s and normal to S_s ∩ T_t, pointing to increasing t.
  Vec e1(const Vec& q) const {
    const auto& g = chart();
    const double h = g.fd_step();
    Vec dt(g.dim());
    for (int i = 0; i < g.dim(); ++i) {
      const Vec e = unit_vector(g.dim(), i);
      dt[i] = (t_leaf(q + h * e) - t_leaf(q - h * e)) / (2.0 * h);
    }
    const Vec nu = base_->normal_at(q);
    Vec v = g.inverse_metric(q) * dt;
    v -= g.inner(q, v, nu) * nu;
    const double nv = g.norm(q, v);
    if (!(nv > 1e-10)) throw NumericalError("e1: grad t is normal to the leaf");
    return v / nv;
  }
  VectorField e1_field() const {
    auto self = *this;
    return {[self](const Vec& x) { return self.e1(x); }, {}};
  }

  AdaptedFrame adapted_frame(const Vec& q) const {
    require(q);
    return frame_unchecked(q);
  }

  /// |<A^{S_s}(e1), e_i> + <A^{T_t}(e_i), e_{n+1}>| for 2 <= i <= n.
  double frame_identity_residual(const Vec& q, int i) const {
    if (i < 2 || i > n()) throw PreconditionError("frame_identity_residual: need 2 <= i <= n");
    const AdaptedFrame fr = adapted_frame(q);
    const auto& g = chart();
    const Vec& e1v = fr.e[0];
    const Vec& ei = fr.e[static_cast<std::size_t>(i - 1)];
    const Vec& nu = fr.e[static_cast<std::size_t>(n())];
    const Vec dnu = covariant_derivative(g, normal_vector_field(), {q, e1v});
    const Vec de1 = covariant_derivative(g, e1_field(), {q, ei});
    const double lhs = -g.inner(q, dnu, ei);      // <A^{S_s}(e1), e_i>
    const double rhs = -g.inner(q, de1, nu);      // <A^{T_t}(e_i), e_{n+1}>
    return std::fabs(lhs + rhs);
  }

  LeafIngredients ingredients(const Vec& q) const {
    require(q);
    const auto& g = chart();
    const int n1 = n();
    LeafIngredients out;
    out.frame = frame_unchecked(q);
    const auto& e = out.frame.e;
    const Vec& nu = e[static_cast<std::size_t>(n1)];
    const Mat G = g.metric(q);
    out.psi = psi(q).psi;

    const auto nuf = normal_vector_field();
    std::vector<Vec> dnu(static_cast<std::size_t>(n1 + 1));
    for (int a = 0; a <= n1; ++a) dnu[static_cast<std::size_t>(a)] = covariant_derivative(g, nuf, {q, e[static_cast<std::size_t>(a)]});
    Mat as(n1, n1);
    for (int a = 0; a < n1; ++a)
      for (int b = 0; b < n1; ++b) as(a, b) = -dnu[static_cast<std::size_t>(a)].dot(G * e[static_cast<std::size_t>(b)]);
    out.shape_s_asymmetry = 0.5 * (as - as.transpose()).cwiseAbs().maxCoeff();
    out.shape_s = 0.5 * (as + as.transpose());
    out.nu_nu.resize(n1);
    for (int j = 0; j < n1; ++j) out.nu_nu[j] = dnu[static_cast<std::size_t>(n1)].dot(G * e[static_cast<std::size_t>(j)]);

    // T_t tangent basis (e_2..e_n, nu)
    const auto e1f = e1_field();
    std::vector<Vec> tb;
    for (int a = 1; a <= n1; ++a) tb.push_back(e[static_cast<std::size_t>(a)]);
    Mat at(n1, n1);
    for (int a = 0; a < n1; ++a) {
      const Vec de1 = covariant_derivative(g, e1f, {q, tb[static_cast<std::size_t>(a)]});
      for (int b = 0; b < n1; ++b) at(a, b) = -de1.dot(G * tb[static_cast<std::size_t>(b)]);
    }
    out.shape_t_asymmetry = 0.5 * (at - at.transpose()).cwiseAbs().maxCoeff();
    out.shape_t = at;
    (void)nu;
    return out;
  }

 private:
  void require(const Vec& q) const {
    if (!in_neighborhood(q)) throw OutOfDomainError("point outside the foliated neighborhood");
  }

  AdaptedFrame frame_unchecked(const Vec& q) const {
    const auto& g = chart();
    const int dim = g.dim();
    const Vec nu = base_->normal_at(q);
    const Vec e1v = e1(q);
    const Mat G = g.metric(q);
    std::vector<Vec> basis{e1v, nu};
    for (int c = 0; c < dim && static_cast<int>(basis.size()) < dim; ++c) {
      Vec w = unit_vector(dim, c);
      const double scale = std::sqrt(w.dot(G * w));
      for (int pass = 0; pass < 2; ++pass)
        for (const Vec& b : basis) w -= w.dot(G * b) * b;
      const double nw = std::sqrt(w.dot(G * w));
      if (nw > 1e-3 * scale) basis.push_back(w / nw);
    }
    if (static_cast<int>(basis.size()) != dim) throw NumericalError("adapted_frame: rank collapse");
    AdaptedFrame fr;
    fr.point = q;
    fr.e.push_back(basis[0]);
    for (int a = 2; a < dim; ++a) fr.e.push_back(basis[static_cast<std::size_t>(a)]);
    fr.e.push_back(nu);
    return fr;
  }

  std::shared_ptr<const GraphHypersurface> base_;
  Vec p_;
  double delta_;
  std::shared_ptr<const IntrinsicDistance> distance_;
};

inline OrthogonalFoliation build_foliation(const ProperSubdomain& domain, const GraphHypersurface& base, const Vec& p,
                                           double delta, double tau_orth = 1e-3) {
  if (base.height_index() != domain.surface().height_index())
    throw ConfigError("foliation base and S must share the height coordinate");
  return OrthogonalFoliation(base, p, delta, tau_orth);
}

/// Largest candidate delta whose foliation passes the leaf invariants (unit
/// normal, boundary tangency within tau_orth, psi > 0 with small residual) on
/// `samples` seeded points per candidate; 0 when none does. Not a sharp bound.
inline double largest_valid_delta(const ProperSubdomain& domain, const GraphHypersurface& base, const Vec& p,
                                  std::vector<double> candidates, int samples = 8, double tau_orth = 1e-3,
                                  std::uint64_t seed = 0) {
  std::sort(candidates.begin(), candidates.end());
  double best = 0.0;
  const int n = base.base_dim();
  for (double delta : candidates) {
    bool ok = true;
    try {
      const auto F = build_foliation(domain, base, p, delta, tau_orth);
      const auto& g = F.chart();
      CounterRng rng(seed, 61);
      const Vec pb = base.base_of(p);
      for (int k = 0; k < samples && ok; ++k) {
        Vec y = pb;
        y[0] = k % 2 == 0 ? 0.0 : rng.uniform(0.0, 0.5 * base.r0());
        for (int a = 1; a < n; ++a) y[a] += rng.uniform(-0.5, 0.5) * base.r0();
        const Vec q = F.point(y, rng.uniform(-0.9, 0.9) * delta);
        if (!F.in_neighborhood(q)) {
          ok = false;
          break;
        }
        const Vec nu = base.normal_at(q);
        const auto ps = F.psi(q);
        ok = std::fabs(g.norm(q, nu) - 1.0) < 1e-10 && ps.psi > 0.0 &&
             (y[0] != 0.0 || std::fabs(g.inner(q, nu, g.boundary_normal(q))) < tau_orth);
      }
    } catch (const Error&) {
      ok = false;
    }
    if (ok) best = delta;
  }
  return best;
}

}  // namespace freebdy
