#pragma once

// The barrier S' = {x_h = u}, the cutoff phi, the test field X = phi(s) nu, the
// bilinear form Q(u, v) = <nabla_u X, v> in adapted frames, and the trace
// bounds used to show tr_P Q < 0.

#include "freebdy/errors.hpp"
#include "freebdy/foliation.hpp"
#include "freebdy/geometry.hpp"
#include "freebdy/linalg.hpp"
#include "freebdy/parallel.hpp"
#include "freebdy/random.hpp"
#include "freebdy/surfaces.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <string>
#include <utility>
#include <vector>

namespace freebdy {

// ---------------------------------------------------------------- cutoff

class CutoffProfile {
 public:
  explicit CutoffProfile(double eps) : eps_(eps) {
    if (!(eps_ > 0.0)) throw ConfigError("epsilon must be positive");
  }
  double epsilon() const noexcept { return eps_; }

  double phi(double s) const {
    if (s < 0.0) throw PreconditionError("phi: s must be non-negative");
    return phi_extended(s);
  }
  double phi_prime(double s) const {
    if (s < 0.0) throw PreconditionError("phi_prime: s must be non-negative");
    return phi_prime_extended(s);
  }

  // Same closed form continued to s < 0 (smooth there); used when a stencil or
  // a sample reaches slightly below the barrier leaf.
  double phi_extended(double s) const { return s < eps_ ? std::exp(1.0 / (s - eps_)) : 0.0; }
  double phi_prime_extended(double s) const {
    if (s >= eps_) return 0.0;
    const double d = s - eps_;
    return -std::exp(1.0 / d) / (d * d);
  }

 private:
  double eps_;
};

// ---------------------------------------------------------------- barrier

struct TouchingReport {
  double min_gap = 0.0;          // min of f - u over the sample grid
  Vec argmin;                    // base coordinates of the minimum
  bool strict = true;            // equality (< 1e-10) only within 1e-3 of p
  Vec equality_witness;          // farthest near-equality point when not strict
  double boundary_u_max = 0.0;   // max |u|, |du/dx1| on {x1 = 0} samples
  double hessian_x1_defect = 0.0;        // |u_11(p) - a2|
  double tangential_hessian_disagreement = 0.0;  // max |Hess f - Hess u| off the (1,1) entry
  int samples = 0;
};

struct BarrierSurface {
  double a2 = 0.0;
  double a3 = 0.0;
  double epsilon = 0.0;
  Vec p_base;
  double p_height = 0.0;
  GraphHypersurface surface;

  double u(const Vec& y) const {
    const double x = y[0] - p_base[0];
    return p_height + 0.5 * x * x * a2 + x * x * x / 6.0 * (a3 - epsilon);
  }
  double du_dx1(const Vec& y) const {
    const double x = y[0] - p_base[0];
    return x * a2 + 0.5 * x * x * (a3 - epsilon);
  }
};

struct BarrierResult {
  BarrierSurface barrier;
  TouchingReport touching;
};

namespace detail {

// Five-point one-sided stencils at x = 0 along x1.
inline std::pair<double, double> x1_derivatives_23(const ScalarFn& f, const Vec& y0, double h) {
  double v[5];
  for (int k = 0; k < 5; ++k) {
    Vec y = y0;
    y[0] += k * h;
    v[k] = f(y);
  }
  const double d2 = (35.0 * v[0] - 104.0 * v[1] + 114.0 * v[2] - 56.0 * v[3] + 11.0 * v[4]) / (12.0 * h * h);
  const double d3 = (-5.0 * v[0] + 18.0 * v[1] - 24.0 * v[2] + 14.0 * v[3] - 3.0 * v[4]) / (2.0 * h * h * h);
  return {d2, d3};
}

inline Mat base_hessian(const ScalarFn& f, const Vec& y, double h, bool half_space) {
  const int n = static_cast<int>(y.size());
  Mat H(n, n);
  for (int a = 0; a < n; ++a) {
    const Vec ea = unit_vector(n, a);
    for (int b = 0; b < n; ++b) {
      auto grad_a = [&](const Vec& z) { return derivative4(f, z, ea, h, half_space); };
      H(a, b) = derivative4(grad_a, y, unit_vector(n, b), h, half_space);
    }
  }
  return 0.5 * (H + H.transpose());
}

}  // namespace detail

inline BarrierResult build_barrier(const ProperSubdomain& domain, const Vec& p, double eps) {
  if (!(eps > 0.0)) throw ConfigError("epsilon must be positive");
  const auto& S = domain.surface();
  const ScalarFn& f = S.function();
  const Vec pb = S.base_of(p);
  const double ph = S.f(pb);
  const auto [a2, a3] = detail::x1_derivatives_23(f, pb, 2e-3);
  const double x0 = pb[0];
  BarrierResult out{BarrierSurface{a2, a3, eps, pb, ph, S.with_function([a2, a3, eps, ph, x0](const Vec& y) {
                                     const double x = y[0] - x0;
                                     return ph + 0.5 * x * x * a2 + x * x * x / 6.0 * (a3 - eps);
                                   })},
                    {}};
  const auto& B = out.barrier;

  auto& T = out.touching;
  const int n = S.base_dim();
  const double r = 0.5 * S.r0();
  std::vector<Vec> grid;
  if (n == 1) {
    for (int i = 0; i <= 400; ++i) grid.push_back(B.p_base + Vec::Constant(1, r * i / 400.0));
  } else if (n == 2) {
    const int k = 80;
    for (int i = 0; i <= k; ++i)
      for (int j = -k; j <= k; ++j) {
        Vec y = B.p_base;
        y[0] += r * i / k;
        y[1] += r * j / k;
        if ((y - B.p_base).norm() <= r) grid.push_back(y);
      }
  } else {
    CounterRng rng(0, 29);
    grid.push_back(B.p_base);
    while (grid.size() < 20000) {
      Vec d(n);
      for (int a = 0; a < n; ++a) d[a] = rng.uniform(-r, r);
      d[0] = std::fabs(d[0]);
      if (d.norm() <= r) grid.push_back(B.p_base + d);
    }
  }
  T.samples = static_cast<int>(grid.size());
  T.min_gap = std::numeric_limits<double>::infinity();
  double far_equality = -1.0;
  for (const Vec& y : grid) {
    const double gap = f(y) - B.u(y);
    if (gap < T.min_gap) {
      T.min_gap = gap;
      T.argmin = y;
    }
    const double dist = (y - B.p_base).norm();
    if (std::fabs(gap) < 1e-10 && dist > 1e-3 && dist > far_equality) {
      far_equality = dist;
      T.equality_witness = y;
      T.strict = false;
    }
    if (y[0] == B.p_base[0]) {
      T.boundary_u_max = std::max({T.boundary_u_max, std::fabs(B.u(y) - ph), std::fabs(B.du_dx1(y))});
    }
  }
  const Mat hf = detail::base_hessian(f, B.p_base, 2e-3, true);
  Mat hu = Mat::Zero(n, n);
  hu(0, 0) = a2;
  T.hessian_x1_defect = std::fabs(detail::base_hessian(B.surface.function(), B.p_base, 2e-3, true)(0, 0) - a2);
  Mat diff = (hf - hu).cwiseAbs();
  diff(0, 0) = 0.0;
  T.tangential_hessian_disagreement = diff.maxCoeff();
  if (T.min_gap < -1e-8)
    throw VerificationError("barrier touching violated: f - u = " + std::to_string(T.min_gap), to_std(S.embed(T.argmin)));
  return out;
}

// ---------------------------------------------------------------- test field and Q

/// X = phi(s) nu. Zero where s >= eps; inside the cutoff support the point must
/// lie in the foliated neighborhood.
inline TangentVector test_field(const OrthogonalFoliation& F, const CutoffProfile& c, const Vec& q) {
  const double s = F.leaf_s_unchecked(q);
  if (s >= c.epsilon()) return {q, Vec::Zero(q.size())};
  if (!F.in_neighborhood(q))
    throw ConfigError("test field support is not localized in the foliated neighborhood (enlarge delta or shrink epsilon)");
  return {q, c.phi_extended(s) * F.base().normal_at(q)};
}

/// X as a vector field with Jacobian J = phi'(s) nu ⊗ ds + phi(s) Dnu (Dnu by
/// finite differences, the cutoff factor exactly).
inline VectorField test_vector_field(const OrthogonalFoliation& F, const CutoffProfile& c) {
  VectorField X;
  X.value = [F, c](const Vec& q) { return test_field(F, c, q).components; };
  X.jacobian = [F, c](const Vec& q) -> Mat {
    const int d = static_cast<int>(q.size());
    const double s = F.leaf_s_unchecked(q);
    if (s >= c.epsilon()) return Mat::Zero(d, d);
    if (!F.in_neighborhood(q))
      throw ConfigError("test field support is not localized in the foliated neighborhood (enlarge delta or shrink epsilon)");
    const auto& S = F.base();
    const auto& g = F.chart();
    const Vec nu = S.normal_at(q);
    Vec ds = S.level_covector(q) * S.orientation();
    Mat Dnu(d, d);
    for (int i = 0; i < d; ++i)
      Dnu.col(i) = g.directional_derivative([&S](const Vec& x) { return S.normal_at(x); }, q, unit_vector(d, i),
                                            g.fd_step());
    return c.phi_prime_extended(s) * nu * ds.transpose() + c.phi_extended(s) * Dnu;
  };
  return X;
}

struct QForm {
  Vec point;
  AdaptedFrame frame;
  Mat matrix;  // rows indexed by the first argument of Q
  Mat direct;  // <nabla_{e_a} X, e_b> by finite differences of X
  double phi = 0.0;
  double phi_prime = 0.0;
  double psi = 0.0;
  double s = 0.0;
  LeafIngredients ingredients;
  double mismatch = 0.0;  // max |matrix - direct| / (phi + |phi'| psi)
};

/// Direct finite-difference evaluation of Q(e_a, e_b) = <nabla_{e_a} X, e_b>.
inline Mat q_form_direct(const OrthogonalFoliation& F, const CutoffProfile& c, const Vec& q, const AdaptedFrame& fr) {
  const auto& g = F.chart();
  const int d = g.dim();
  const double s = F.leaf_s_unchecked(q);
  const double gap = c.epsilon() - s;
  const double h = std::min(g.fd_step(), 1e-2 * gap * gap);
  const VectorField X{[&F, &c](const Vec& x) { return test_field(F, c, x).components; }, {}};
  const Mat G = g.metric(q);
  Mat Q(d, d);
  for (int a = 0; a < d; ++a) {
    const Vec dx = covariant_derivative(g, X, {q, fr.e[static_cast<std::size_t>(a)]}, h);
    for (int b = 0; b < d; ++b) Q(a, b) = dx.dot(G * fr.e[static_cast<std::size_t>(b)]);
  }
  return Q;
}

inline QForm q_form(const OrthogonalFoliation& F, const CutoffProfile& c, const Vec& q, bool cross_check = true) {
  QForm out;
  out.point = q;
  out.ingredients = F.ingredients(q);
  const auto& I = out.ingredients;
  out.frame = I.frame;
  const int n = F.n();
  out.s = F.leaf_s(q);
  out.phi = c.phi_extended(out.s);
  out.phi_prime = c.phi_prime_extended(out.s);
  out.psi = I.psi;
  const double phi = out.phi;
  Mat Q = Mat::Zero(n + 1, n + 1);
  // index of nu in the T_t basis (e_2..e_n, nu)
  const int tn = n - 1;
  Q(0, 0) = -phi * I.shape_s(0, 0);
  for (int j = 1; j < n; ++j) {
    Q(0, j) = phi * I.shape_t(tn, j - 1);  // phi A^T_{n+1, j}
    Q(j, 0) = phi * I.shape_t(j - 1, tn);  // phi A^T_{j, n+1}
  }
  for (int i = 1; i < n; ++i)
    for (int j = 1; j < n; ++j) Q(i, j) = -phi * I.shape_s(i, j);
  Q(n, 0) = phi * I.shape_t(tn, tn);
  for (int j = 1; j < n; ++j) Q(n, j) = phi * I.nu_nu[j];
  Q(n, n) = out.phi_prime * out.psi;
  out.matrix = Q;
  if (cross_check) {
    out.direct = q_form_direct(F, c, q, out.frame);
    const double scale = out.phi + std::fabs(out.phi_prime) * out.psi;
    out.mismatch = scale > 0.0 ? (out.matrix - out.direct).cwiseAbs().maxCoeff() / scale : 0.0;
    if (out.mismatch > 5e-3) {
      std::string msg = "q_form: assembled and direct Q differ by " + std::to_string(out.mismatch) + " (relative); diff:";
      const Mat diff = out.matrix - out.direct;
      for (int a = 0; a <= n; ++a)
        for (int b = 0; b <= n; ++b) msg += " " + std::to_string(diff(a, b));
      throw NumericalError(msg);
    }
  }
  return out;
}

// ---------------------------------------------------------------- traces

/// (min, max) of tr_P Q over m-planes P: sums of the m smallest / largest
/// eigenvalues of sym(Q).
inline std::pair<double, double> extreme_trace_m(const Mat& Q, int m) {
  const int size = static_cast<int>(Q.rows());
  if (m < 1 || m > size) throw PreconditionError("extreme_trace_m: need 1 <= m <= size");
  if (m == size) return {Q.trace(), Q.trace()};
  const Vec ev = symmetric_eigenvalues(Q);
  if (!ev.allFinite()) throw NumericalError("extreme_trace_m: eigensolver failure");
  double lo = 0.0, hi = 0.0;
  for (int i = 0; i < m; ++i) {
    lo += ev[i];
    hi += ev[size - 1 - i];
  }
  return {lo, hi};
}

/// Largest tr_P Q over `samples` uniformly random m-planes (Gaussian frames
/// orthonormalized); a sampling check of the eigenvalue characterization.
inline double sampled_max_trace(const Mat& Q, int m, int samples, CounterRng& rng) {
  const int d = static_cast<int>(Q.rows());
  double best = -std::numeric_limits<double>::infinity();
  for (int k = 0; k < samples; ++k) {
    Mat A(d, m);
    for (int i = 0; i < d; ++i)
      for (int j = 0; j < m; ++j) A(i, j) = rng.normal();
    const Mat P = Eigen::HouseholderQR<Mat>(A).householderQ() * Mat::Identity(d, m);
    best = std::max(best, (P.transpose() * Q * P).trace());
  }
  return best;
}

// ---------------------------------------------------------------- coupling bound

struct Lemma34Result {
  double theta_star = 0.0;
  double f_star = 0.0;
};

inline double lemma34_F(double K, int n, double eps, double theta) {
  // |sin t cos t| and sin^2 t are symmetric about pi/2; folding makes F(pi) = 0 exactly.
  const double t = theta > 0.5 * std::numbers::pi ? std::numbers::pi - theta : theta;
  const double s = std::sin(t), c = std::cos(t);
  return (K - 0.5 / (eps * eps)) * s * s + std::sqrt(static_cast<double>(n)) * K * std::fabs(s * c);
}

inline Lemma34Result lemma34_max(double K, int n, double eps) {
  if (!(K >= 0.0)) throw ConfigError("lemma34_max: K must be non-negative");
  if (n < 1) throw ConfigError("lemma34_max: n must be positive");
  if (!(eps > 0.0)) throw ConfigError("lemma34_max: epsilon must be positive");
  if (K == 0.0) return {0.0, 0.0};
  if (!(eps < 1.0 / std::sqrt(2.0 * K)))
    throw ConfigError("lemma34_max: epsilon out of the admissible range eps < 1/sqrt(2K)");
  const double a = K - 0.5 / (eps * eps);  // < 0
  const double b = std::sqrt(static_cast<double>(n)) * K;
  const double r = std::hypot(a, b);
  // On [0, pi/2], F = (a (1 - cos 2t) + b sin 2t) / 2; its critical point has
  // tan 2t = b / (-a), and F there is (a + r) / 2 = b^2 / (2 (r - a)).
  return {0.5 * std::atan2(b, -a), 0.5 * b * b / (r - a)};
}

// ---------------------------------------------------------------- K and the trace bound

struct SampleRegion {
  double x1_max = 0.1;   // base x1 in [0, x1_max]
  double width = 0.1;    // |y_a - p_a| <= width for the other base coordinates
  double s_fraction = 0.9;  // s in [0, s_fraction * eps]
};

/// Seeded sample points of the region on leaves 0 <= s <= s_max; the first
/// point is p itself.
inline std::vector<Vec> region_samples(const OrthogonalFoliation& F, const SampleRegion& region, double s_max,
                                       int count, std::uint64_t seed) {
  const int n = F.n();
  const Vec pb = F.base().base_of(F.p());
  std::vector<Vec> out;
  out.push_back(F.point(pb, 0.0));
  CounterRng rng(seed, 101);
  while (static_cast<int>(out.size()) < count) {
    Vec y = pb;
    y[0] += rng.uniform(0.0, region.x1_max);
    for (int a = 1; a < n; ++a) y[a] += rng.uniform(-region.width, region.width);
    out.push_back(F.point(y, rng.uniform(0.0, s_max)));
  }
  return out;
}

struct KEstimate {
  double K = 0.0;
  double min_psi = std::numeric_limits<double>::infinity();
  Vec worst_point;
  double shape_s_max = 0.0, shape_t_max = 0.0, nu_nu_max = 0.0;
};

inline double operator_norm(const Mat& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Mat> svd(m);
  return svd.singularValues()[0];
}

inline KEstimate k_from_ingredients(const std::vector<LeafIngredients>& all, const std::vector<Vec>& points) {
  KEstimate k;
  for (std::size_t i = 0; i < all.size(); ++i) {
    const auto& I = all[i];
    const double as = operator_norm(I.shape_s), at = operator_norm(I.shape_t),
                 nn = I.nu_nu.size() ? I.nu_nu.cwiseAbs().maxCoeff() : 0.0;
    k.shape_s_max = std::max(k.shape_s_max, as);
    k.shape_t_max = std::max(k.shape_t_max, at);
    k.nu_nu_max = std::max(k.nu_nu_max, nn);
    const double local = std::max({as, at, nn});
    if (local > k.K || k.worst_point.size() == 0) {
      k.K = std::max(k.K, local);
      k.worst_point = points[i];
    }
    k.min_psi = std::min(k.min_psi, I.psi);
  }
  if (k.min_psi < 0.5) throw PreconditionError("estimate_K: psi < 1/2 in the region (region too large)");
  return k;
}

inline KEstimate estimate_K(const OrthogonalFoliation& F, const std::vector<Vec>& samples, unsigned threads = 1) {
  auto all = parallel_map(samples.size(), threads, [&](std::size_t i) { return F.ingredients(samples[i]); });
  return k_from_ingredients(all, samples);
}

struct Lemma33Point {
  Vec point;
  double s = 0.0;
  double phi = 0.0;
  double max_trace = 0.0;
  double min_trace = 0.0;
  double mismatch = 0.0;
  Vec tangent_curvatures;  // ascending eigenvalues of A^{S'_s}
};

struct Lemma33Report {
  int m = 1;
  double epsilon = 0.0;
  bool verdict = false;
  double worst_trace = -std::numeric_limits<double>::infinity();           // max over points of max_P tr_P Q
  double worst_trace_normalized = -std::numeric_limits<double>::infinity();  // the same divided by phi
  Vec worst_point;
  Mat worst_matrix;  // Q / phi at the worst point
  double K = 0.0;
  Lemma34Result lemma34;
  bool lemma34_admissible = false;
  bool epsilon_too_large = false;
  double max_mismatch = 0.0;
  double min_psi = 0.0;
  // decomposition at the worst point, all divided by phi
  double tangent_term = 0.0;   // -(sum of the m smallest curvatures of S'_s)
  double normal_term = 0.0;    // phi' psi / phi
  double coupling_bound = 0.0; // F* of lemma34_max with the local K
  std::vector<Lemma33Point> points;
};

struct Lemma33Options {
  SampleRegion region;
  int samples = 100;
  std::uint64_t seed = 0;
  unsigned threads = 1;
};

/// Evaluates Q at the seeded sample points of the region (all in supp X) once
/// and reports, for each m in `ms`, the worst max_P tr_P Q.
inline std::vector<Lemma33Report> verify_lemma33(const OrthogonalFoliation& F, double eps, const std::vector<int>& ms,
                                                 const Lemma33Options& opt) {
  const CutoffProfile c(eps);
  const auto pts = region_samples(F, opt.region, opt.region.s_fraction * eps, opt.samples, opt.seed);
  const auto forms = parallel_map(pts.size(), opt.threads, [&](std::size_t i) { return q_form(F, c, pts[i]); });
  std::vector<LeafIngredients> ing;
  for (const auto& f : forms) ing.push_back(f.ingredients);
  const KEstimate k = k_from_ingredients(ing, pts);
  std::vector<Lemma33Report> out;
  for (int m : ms) {
    Lemma33Report r;
    r.m = m;
    r.epsilon = eps;
    r.K = k.K;
    r.min_psi = k.min_psi;
    r.lemma34_admissible = k.K == 0.0 || eps < 1.0 / std::sqrt(2.0 * k.K);
    if (r.lemma34_admissible) r.lemma34 = lemma34_max(k.K, F.n(), eps);
    std::size_t worst = 0;
    for (std::size_t i = 0; i < forms.size(); ++i) {
      const auto& qf = forms[i];
      const auto [lo, hi] = extreme_trace_m(qf.matrix, m);
      Lemma33Point pt;
      pt.point = qf.point;
      pt.s = qf.s;
      pt.phi = qf.phi;
      pt.max_trace = hi;
      pt.min_trace = lo;
      pt.mismatch = qf.mismatch;
      pt.tangent_curvatures = symmetric_eigenvalues(qf.ingredients.shape_s);
      r.max_mismatch = std::max(r.max_mismatch, qf.mismatch);
      const double normalized = qf.phi > 0.0 ? hi / qf.phi : hi;
      if (i == 0 || hi > r.worst_trace) {
        r.worst_trace = hi;
        worst = i;
      }
      r.worst_trace_normalized = std::max(r.worst_trace_normalized, normalized);
      r.points.push_back(std::move(pt));
    }
    r.verdict = r.worst_trace < 0.0;
    const auto& wq = forms[worst];
    r.worst_point = wq.point;
    r.worst_matrix = wq.phi > 0.0 ? Mat(wq.matrix / wq.phi) : wq.matrix;
    const Vec kap = r.points[worst].tangent_curvatures;
    double tsum = 0.0;
    for (int i = 0; i < std::min<int>(m, static_cast<int>(kap.size())); ++i) tsum += kap[i];
    r.tangent_term = -tsum;
    r.normal_term = wq.phi > 0.0 ? wq.phi_prime * wq.psi / wq.phi : 0.0;
    r.coupling_bound = r.lemma34.f_star;
    r.epsilon_too_large = !r.verdict && (!r.lemma34_admissible || (tsum > 0.0 && r.lemma34.f_star >= tsum));
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace freebdy
