#pragma once

// Scenario files (JSON), the check runner behind `freebdy run`, the report
// document and the parameter sweeps behind `freebdy sweep`.

#include "freebdy/barrier.hpp"
#include "freebdy/errors.hpp"
#include "freebdy/foliation.hpp"
#include "freebdy/geometry.hpp"
#include "freebdy/surfaces.hpp"
#include "freebdy/varifold.hpp"

#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace freebdy {

using json = nlohmann::json;

inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kVersion = "1.0.0";

inline const std::vector<std::string>& check_order() {
  static const std::vector<std::string> order{"orthogonality", "strong_m_convexity", "foliation", "barrier",
                                              "lemma33",       "lemma34",            "first_variation"};
  return order;
}

struct VarifoldSpec {
  std::string name;
  std::string generator;  // segment | half_disk | disk | explicit
  int m = 1;
  double size = 0.3;      // segment length or disk radius
  int resolution = 8;     // segment pieces or disk rings
  Vec direction;          // segment direction
  std::vector<Vec> axes;  // disk axes
  Vec offset;             // added to p
  double lift = 0.0;      // extra offset lift * epsilon along the height axis
  double theta = 1.0;
  bool expect_zero = false;
  std::vector<Simplex> simplices;  // explicit
};

struct Scenario {
  std::string name;
  std::uint64_t seed = 0;
  std::shared_ptr<const MetricChart> chart;
  std::shared_ptr<const GraphHypersurface> surface;
  Vec p;
  std::vector<int> ms;
  std::vector<double> epsilons;
  double delta = 0.0;
  SampleRegion region;
  int region_samples = 100;
  int foliation_samples = 12;
  double tau_orth = 1e-3;
  double tau_conv = 1e-8;
  double tau_neg_factor = 1e-8;
  std::vector<std::string> checks;
  std::vector<VarifoldSpec> varifolds;
  int refine = 1;
  json source;

  Scenario with_fd_step(double h) const {
    Scenario s = *this;
    s.chart = std::make_shared<const MetricChart>(chart->with_fd_step(h));
    s.surface = std::make_shared<const GraphHypersurface>(surface->with_chart(*s.chart));
    return s;
  }
  ProperSubdomain domain(int m) const { return ProperSubdomain(*surface, m); }
};

namespace detail {

inline Vec json_vec(const json& j, const std::string& what, int dim) {
  if (!j.is_array()) throw ConfigError(what + " must be an array");
  if (dim >= 0 && static_cast<int>(j.size()) != dim)
    throw ConfigError(what + " must have " + std::to_string(dim) + " entries");
  Vec v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(what + " entries must be numbers");
    v[static_cast<Eigen::Index>(i)] = j[i].get<double>();
  }
  return v;
}

template <class T>
T json_get(const json& j, const std::string& key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const json::exception&) {
    throw ConfigError("field '" + key + "' has the wrong type");
  }
}

template <class T>
std::vector<T> json_list(const json& j, const std::string& key) {
  if (!j.contains(key)) throw ConfigError("missing field '" + key + "'");
  const json& v = j.at(key);
  try {
    if (v.is_array()) return v.get<std::vector<T>>();
    return {v.get<T>()};
  } catch (const json::exception&) {
    throw ConfigError("field '" + key + "' has the wrong type");
  }
}

inline json vec_json(const Vec& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json mat_json(const Mat& m) {
  json a = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) a.push_back(vec_json(m.row(i).transpose()));
  return a;
}

}  // namespace detail

inline Scenario parse_scenario(const json& doc) {
  using detail::json_get;
  using detail::json_vec;
  if (!doc.is_object()) throw ConfigError("scenario must be a JSON object");
  Scenario sc;
  sc.source = doc;
  sc.name = json_get<std::string>(doc, "name", "scenario");
  sc.seed = json_get<std::uint64_t>(doc, "seed", 0);

  if (!doc.contains("chart")) throw ConfigError("missing field 'chart'");
  const json& cj = doc.at("chart");
  const int dim = json_get<int>(cj, "dim", 0);
  if (dim < 2 || dim > 8) throw ConfigError("chart.dim must be in [2, 8]");
  const Vec lower = json_vec(cj.value("lower", json()), "chart.lower", dim);
  const Vec upper = json_vec(cj.value("upper", json()), "chart.upper", dim);
  const bool half = json_get<bool>(cj, "half_space", true);
  const double fd = json_get<double>(cj, "fd_step", 1e-5);
  MetricChart chart = [&] {
    if (!cj.contains("metric") || cj.at("metric") == "euclidean") return MetricChart::euclidean(dim, lower, upper, half, fd);
    std::vector<std::vector<std::string>> rows;
    try {
      rows = cj.at("metric").get<std::vector<std::vector<std::string>>>();
    } catch (const json::exception&) {
      throw ConfigError("chart.metric must be \"euclidean\" or a list of rows of expression strings");
    }
    return MetricChart::from_expressions(dim, lower, upper, half, rows, fd);
  }();
  sc.chart = std::make_shared<const MetricChart>(chart);

  if (!doc.contains("surface")) throw ConfigError("missing field 'surface'");
  const json& sj = doc.at("surface");
  const int height = json_get<int>(sj, "height_index", dim);
  if (height < 1 || height > dim) throw ConfigError("surface.height_index must be in [1, dim]");
  const double r0 = json_get<double>(sj, "r0", 0.5);
  const int orient = json_get<int>(sj, "orientation", 1);
  if (!sj.contains("f")) throw ConfigError("missing field 'surface.f'");
  sc.surface = std::make_shared<const GraphHypersurface>(
      GraphHypersurface::from_expression(*sc.chart, height - 1, json_get<std::string>(sj, "f", ""), r0, orient));

  sc.p = doc.contains("p") ? json_vec(doc.at("p"), "p", dim) : Vec::Zero(dim);
  if (std::fabs(sc.p[0]) > 1e-8) throw ConfigError("p must lie on {x1 = 0}");
  if (std::fabs(sc.p[height - 1] - sc.surface->f(sc.surface->base_of(sc.p))) > 1e-8)
    throw ConfigError("p must lie on S");

  sc.ms = doc.contains("m") ? detail::json_list<int>(doc, "m") : std::vector<int>{1};
  for (int m : sc.ms)
    if (m < 1 || m > dim - 1) throw ConfigError("m must satisfy 1 <= m <= n");
  sc.epsilons = doc.contains("epsilon") ? detail::json_list<double>(doc, "epsilon") : std::vector<double>{0.05};
  for (double e : sc.epsilons)
    if (!(e > 0.0)) throw ConfigError("epsilon values must be positive");

  const json fj = doc.value("foliation", json::object());
  sc.delta = json_get<double>(fj, "delta", 0.1 * r0);
  sc.foliation_samples = json_get<int>(fj, "samples", 12);
  const json rj = doc.value("region", json::object());
  sc.region.x1_max = json_get<double>(rj, "x1_max", 0.1);
  sc.region.width = json_get<double>(rj, "width", 0.1);
  sc.region.s_fraction = json_get<double>(rj, "s_fraction", 0.9);
  sc.region_samples = json_get<int>(rj, "samples", 100);
  if (sc.region_samples < 1 || sc.foliation_samples < 1) throw ConfigError("sample counts must be positive");

  const json tj = doc.value("tolerances", json::object());
  sc.tau_orth = json_get<double>(tj, "orth", sc.chart->is_flat() ? 1e-6 : 1e-3);
  sc.tau_conv = json_get<double>(tj, "conv", 1e-8);
  sc.tau_neg_factor = json_get<double>(tj, "neg_factor", 1e-8);

  sc.checks = doc.contains("checks") ? detail::json_list<std::string>(doc, "checks") : check_order();
  for (const auto& c : sc.checks)
    if (std::find(check_order().begin(), check_order().end(), c) == check_order().end())
      throw ConfigError("unknown check '" + c + "'");

  for (const json& vj : doc.value("varifolds", json::array())) {
    VarifoldSpec v;
    v.name = json_get<std::string>(vj, "name", "varifold" + std::to_string(sc.varifolds.size()));
    v.generator = json_get<std::string>(vj, "generator", "explicit");
    v.m = json_get<int>(vj, "m", 1);
    v.size = json_get<double>(vj, v.generator == "segment" ? "length" : "radius", 0.3);
    v.resolution = json_get<int>(vj, v.generator == "segment" ? "pieces" : "rings", 8);
    v.direction = vj.contains("direction") ? json_vec(vj.at("direction"), v.name + ".direction", dim) : unit_vector(dim, 0);
    v.offset = vj.contains("offset") ? json_vec(vj.at("offset"), v.name + ".offset", dim) : Vec::Zero(dim);
    v.lift = json_get<double>(vj, "lift", 0.0);
    v.theta = json_get<double>(vj, "theta", 1.0);
    v.expect_zero = json_get<bool>(vj, "expect_zero", false);
    if (vj.contains("axes"))
      for (const json& a : vj.at("axes")) v.axes.push_back(json_vec(a, v.name + ".axes", dim));
    else
      v.axes = {unit_vector(dim, 0), unit_vector(dim, 1)};
    if (v.generator == "explicit") {
      for (const json& s : vj.value("simplices", json::array())) {
        Simplex smp;
        for (const json& x : s.value("vertices", json::array())) smp.vertices.push_back(json_vec(x, v.name + ".vertices", dim));
        smp.theta = json_get<double>(s, "theta", 1.0);
        v.simplices.push_back(std::move(smp));
      }
    } else if (v.generator != "segment" && v.generator != "half_disk" && v.generator != "disk") {
      throw ConfigError("unknown varifold generator '" + v.generator + "'");
    }
    if (v.m < 1 || v.m > 2) throw ConfigError("varifold m must be 1 or 2");
    if (v.generator == "segment" && v.m != 1) throw ConfigError("segment varifolds have m = 1");
    if ((v.generator == "half_disk" || v.generator == "disk") && (v.m != 2 || v.axes.size() != 2))
      throw ConfigError("disk varifolds have m = 2 and two axes");
    if (v.resolution < 1 || !(v.size > 0.0)) throw ConfigError("varifold size and resolution must be positive");
    sc.varifolds.push_back(std::move(v));
  }
  return sc;
}

inline Scenario load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open scenario file '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ConfigError(std::string("scenario is not valid JSON: ") + e.what());
  }
  return parse_scenario(doc);
}

inline DiscreteVarifold build_varifold(const Scenario& sc, const VarifoldSpec& v, double eps) {
  const ProperSubdomain D = sc.domain(1);
  Vec origin = sc.p + v.offset;
  origin[sc.surface->height_index()] += v.lift * eps;
  auto adjust = [&D](const Vec& x) { return project_into(D, x); };
  if (v.generator == "segment")
    return segment_varifold(sc.chart, origin, v.direction, v.size, v.resolution * sc.refine, adjust, v.theta);
  if (v.generator == "half_disk" || v.generator == "disk") {
    const auto mesh = disk_mesh(v.size, v.resolution * sc.refine, v.generator == "half_disk");
    const Vec a0 = v.axes[0], a1 = v.axes[1];
    return mesh_varifold(sc.chart, mesh, [&](const Vec& u) { return adjust(Vec(origin + u[0] * a0 + u[1] * a1)); },
                         v.theta);
  }
  return DiscreteVarifold(sc.chart, v.m, v.simplices);
}

// ---------------------------------------------------------------- runner

struct CheckResult {
  std::string name;
  std::string verdict;  // pass | fail | skipped | error
  json residuals = json::object();
  json witness;
  std::string gate;     // failed gate when skipped
  std::string message;
  double seconds = 0.0;
};

struct RunOptions {
  std::vector<std::string> checks;  // empty: the scenario's list
  std::optional<std::uint64_t> seed;
  unsigned threads = 1;
};

struct RunOutcome {
  std::vector<CheckResult> results;
  bool pass = true;
  double seconds = 0.0;
  std::uint64_t seed = 0;
};

namespace detail {

struct RunState {
  std::map<double, std::optional<OrthogonalFoliation>> barrier_foliations;
  std::map<double, double> K;  // per epsilon, from lemma33
};

inline OrthogonalFoliation barrier_foliation(const Scenario& sc, double eps, RunState& st) {
  auto& slot = st.barrier_foliations[eps];
  if (!slot) {
    const auto br = build_barrier(sc.domain(1), sc.p, eps);
    slot.emplace(br.barrier.surface, sc.p, sc.delta, sc.tau_orth);
  }
  return *slot;
}

inline std::string eps_key(double e) {
  std::ostringstream os;
  os << e;
  return os.str();
}

inline void check_orthogonality_step(const Scenario& sc, CheckResult& r) {
  const auto res = check_orthogonality(sc.domain(1), 16);
  r.residuals["residual"] = res.residual;
  r.residuals["tolerance"] = sc.tau_orth;
  r.witness = vec_json(res.witness);
  r.verdict = res.residual < sc.tau_orth ? "pass" : "fail";
}

inline void check_convexity_step(const Scenario& sc, CheckResult& r) {
  const Vec y = sc.surface->base_of(sc.p);
  bool ok = true;
  for (int m : sc.ms) {
    const auto rep = strong_m_convexity(*sc.surface, y, m, sc.tau_conv);
    json e;
    e["margin"] = rep.margin;
    e["kappas"] = rep.kappas;
    e["verdict"] = rep.verdict;
    r.residuals["m" + std::to_string(m)] = e;
    ok = ok && rep.verdict;
  }
  r.witness = vec_json(sc.p);
  r.verdict = ok ? "pass" : "fail";
}

inline void check_foliation_step(const Scenario& sc, CheckResult& r, unsigned threads) {
  const auto F = build_foliation(sc.domain(1), *sc.surface, sc.p, sc.delta, sc.tau_orth);
  const auto& g = F.chart();
  const auto pts = region_samples(F, sc.region, 0.5 * sc.delta, sc.foliation_samples, sc.seed ^ 0x5eedULL);
  struct Local {
    double base_s = 0, unit = 0, ortho = 0, identity = 0, psi_res = 0, psi_min = 1e300, tangency = 0;
  };
  const int n = F.n();
  const auto locals = parallel_map(pts.size(), threads, [&](std::size_t i) {
    Local L;
    const Vec& q = pts[i];
    const Vec y = F.base().base_of(q);
    L.base_s = std::fabs(F.leaf_s(F.base().embed(y)));
    const Vec nu = F.normal_field(q).components;
    L.unit = std::fabs(g.norm(q, nu) - 1.0);
    const auto fr = F.adapted_frame(q);
    for (std::size_t a = 0; a < fr.e.size(); ++a)
      for (std::size_t b = 0; b < fr.e.size(); ++b)
        L.ortho = std::max(L.ortho, std::fabs(g.inner(q, fr.e[a], fr.e[b]) - (a == b ? 1.0 : 0.0)));
    for (int i2 = 2; i2 <= n; ++i2) L.identity = std::max(L.identity, F.frame_identity_residual(q, i2));
    const auto ps = F.psi(q);
    L.psi_res = ps.residual;
    L.psi_min = ps.psi;
    Vec yb = y;
    yb[0] = 0.0;
    const Vec qb = F.point(yb, F.leaf_s(q));
    L.tangency = std::fabs(g.inner(qb, F.base().normal_at(qb), g.boundary_normal(qb)));
    return L;
  });
  Local w;
  for (const auto& L : locals) {
    w.base_s = std::max(w.base_s, L.base_s);
    w.unit = std::max(w.unit, L.unit);
    w.ortho = std::max(w.ortho, L.ortho);
    w.identity = std::max(w.identity, L.identity);
    w.psi_res = std::max(w.psi_res, L.psi_res);
    w.psi_min = std::min(w.psi_min, L.psi_min);
    w.tangency = std::max(w.tangency, L.tangency);
  }
  r.residuals["base_leaf_s"] = w.base_s;
  r.residuals["normal_unit"] = w.unit;
  r.residuals["frame_orthonormality"] = w.ortho;
  r.residuals["frame_identity"] = w.identity;
  r.residuals["psi_residual"] = w.psi_res;
  r.residuals["psi_min"] = w.psi_min;
  r.residuals["boundary_tangency"] = w.tangency;
  r.residuals["samples"] = pts.size();
  const bool ok = w.base_s < 1e-10 && w.unit < 1e-10 && w.ortho < 1e-10 && w.identity < 1e-3 && w.psi_res < 1e-3 &&
                  w.psi_min > 0.0 && w.tangency < sc.tau_orth;
  r.witness = vec_json(pts.front());
  r.verdict = ok ? "pass" : "fail";
}

inline void check_barrier_step(const Scenario& sc, CheckResult& r, RunState& st) {
  bool ok = true;
  for (double eps : sc.epsilons) {
    json e;
    try {
      const auto br = build_barrier(sc.domain(1), sc.p, eps);
      e["a2"] = br.barrier.a2;
      e["a3"] = br.barrier.a3;
      e["min_gap"] = br.touching.min_gap;
      e["argmin"] = vec_json(br.touching.argmin);
      e["strict"] = br.touching.strict;
      if (!br.touching.strict) e["equality_witness"] = vec_json(br.touching.equality_witness);
      e["boundary_u"] = br.touching.boundary_u_max;
      e["tangential_hessian_disagreement"] = br.touching.tangential_hessian_disagreement;
      const auto F = barrier_foliation(sc, eps, st);
      // psi = 1 and grad s = psi nu on boundary samples of the barrier foliation
      double psi_dev = 0.0, psi_res = 0.0;
      const int n = F.n();
      CounterRng rng(sc.seed, 211);
      for (int k = 0; k < 16; ++k) {
        Vec y = sc.surface->base_of(sc.p);
        y[0] = 0.0;
        for (int a = 1; a < n; ++a) y[a] += rng.uniform(-sc.region.width, sc.region.width);
        const Vec q = F.point(y, rng.uniform(0.0, sc.region.s_fraction * eps));
        const auto ps = F.psi(q);
        psi_dev = std::max(psi_dev, std::fabs(ps.psi - 1.0));
        psi_res = std::max(psi_res, ps.residual);
      }
      e["psi_boundary_deviation"] = psi_dev;
      e["psi_boundary_residual"] = psi_res;
      const bool pass = psi_dev < sc.tau_orth && psi_res < sc.tau_orth;
      e["verdict"] = pass;
      ok = ok && pass;
    } catch (const VerificationError& err) {
      e["verdict"] = false;
      e["message"] = err.what();
      e["witness"] = err.witness();
      r.witness = err.witness();
      ok = false;
    }
    r.residuals["epsilon=" + eps_key(eps)] = e;
  }
  if (r.witness.is_null()) r.witness = vec_json(sc.p);
  r.verdict = ok ? "pass" : "fail";
}

inline void check_lemma33_step(const Scenario& sc, CheckResult& r, RunState& st, unsigned threads) {
  bool ok = true;
  for (double eps : sc.epsilons) {
    const auto F = barrier_foliation(sc, eps, st);
    Lemma33Options opt;
    opt.region = sc.region;
    opt.samples = sc.region_samples;
    opt.seed = sc.seed;
    opt.threads = threads;
    const auto reps = verify_lemma33(F, eps, sc.ms, opt);
    for (const auto& rep : reps) {
      json e;
      e["verdict"] = rep.verdict;
      e["worst_trace"] = rep.worst_trace;
      e["worst_trace_over_phi"] = rep.worst_trace_normalized;
      e["worst_point"] = vec_json(rep.worst_point);
      e["K"] = rep.K;
      e["min_psi"] = rep.min_psi;
      e["max_q_mismatch"] = rep.max_mismatch;
      e["lemma34_admissible"] = rep.lemma34_admissible;
      e["F_star"] = rep.lemma34.f_star;
      e["epsilon_too_large"] = rep.epsilon_too_large;
      e["terms_over_phi"] = {{"tangent", rep.tangent_term}, {"normal", rep.normal_term}, {"coupling_bound", rep.coupling_bound}};
      CounterRng rng(sc.seed, 307 + static_cast<std::uint64_t>(rep.m));
      const double mc = sampled_max_trace(rep.worst_matrix, rep.m, 2000, rng);
      const double analytic = extreme_trace_m(rep.worst_matrix, rep.m).second;
      e["sampled_max_trace_over_phi"] = mc;
      e["sampling_consistent"] = mc <= analytic + 1e-9 * (1.0 + std::fabs(analytic));
      e["samples"] = rep.points.size();
      r.residuals["epsilon=" + eps_key(eps) + ",m=" + std::to_string(rep.m)] = e;
      ok = ok && rep.verdict && e["sampling_consistent"].get<bool>();
      if (!rep.verdict && r.witness.is_null()) r.witness = vec_json(rep.worst_point);
      st.K[eps] = rep.K;
    }
  }
  if (r.witness.is_null()) r.witness = vec_json(sc.p);
  r.verdict = ok ? "pass" : "fail";
}

inline void check_lemma34_step(const Scenario& sc, CheckResult& r, RunState& st, unsigned threads) {
  bool ok = true;
  const int n = sc.surface->base_dim();
  for (double eps : sc.epsilons) {
    json e;
    double K;
    if (st.K.count(eps)) {
      K = st.K[eps];
    } else {
      const auto F = barrier_foliation(sc, eps, st);
      const auto pts = region_samples(F, sc.region, sc.region.s_fraction * eps, sc.region_samples, sc.seed);
      K = estimate_K(F, pts, threads).K;
    }
    e["K"] = K;
    const bool admissible = K == 0.0 || eps < 1.0 / std::sqrt(2.0 * K);
    e["admissible"] = admissible;
    if (admissible) {
      const auto lm = lemma34_max(K, n, eps);
      double grid = 0.0;
      for (int k = 0; k <= 200000; ++k) grid = std::max(grid, lemma34_F(K, n, eps, std::numbers::pi * k / 200000.0));
      e["theta_star"] = lm.theta_star;
      e["F_star"] = lm.f_star;
      e["F_half_pi"] = K - 0.5 / (eps * eps);
      e["grid_max"] = grid;
      const bool pass = std::fabs(grid - lm.f_star) < 1e-7 && lm.f_star >= grid - 1e-12;
      e["verdict"] = pass;
      ok = ok && pass;
    } else {
      e["verdict"] = false;
      ok = false;
    }
    r.residuals["epsilon=" + eps_key(eps)] = e;
  }
  r.witness = vec_json(sc.p);
  r.verdict = ok ? "pass" : "fail";
}

inline void check_first_variation_step(const Scenario& sc, CheckResult& r, RunState& st, unsigned threads) {
  bool ok = true;
  bool any = false;
  for (double eps : sc.epsilons) {
    const auto F = barrier_foliation(sc, eps, st);
    for (int m : sc.ms) {
      std::vector<std::pair<std::string, DiscreteVarifold>> family;
      std::vector<bool> zero;
      for (const auto& v : sc.varifolds)
        if (v.m == m) {
          family.emplace_back(v.name, build_varifold(sc, v, eps));
          zero.push_back(v.expect_zero);
        }
      if (family.empty()) continue;
      any = true;
      const auto rep = max_principle_experiment(F, sc.domain(m), eps, m, family, zero, 0.0, sc.tau_neg_factor, threads);
      for (const auto& en : rep.entries) {
        json e;
        e["delta_v"] = en.delta_v;
        e["tau_neg"] = en.tau_neg;
        e["mass"] = en.mass;
        e["sup_phi"] = en.sup_phi;
        e["distance_to_p"] = en.distance_to_p;
        e["tangentiality_residual"] = en.tangentiality_residual;
        e["richardson_error"] = en.richardson_error;
        e["support_in_domain"] = en.support_in_domain;
        e["expect_zero"] = en.expect_zero;
        e["verdict"] = en.pass;
        r.residuals["epsilon=" + eps_key(eps) + ",m=" + std::to_string(m) + "," + en.name] = e;
        if (!en.pass && r.witness.is_null()) r.witness = en.delta_v;
      }
      ok = ok && rep.pass;
    }
  }
  if (!any) {
    r.message = "no varifolds in the scenario";
    ok = false;
  }
  if (r.witness.is_null()) r.witness = vec_json(sc.p);
  r.verdict = ok ? "pass" : "fail";
}

}  // namespace detail

inline RunOutcome run_checks(const Scenario& scenario, const RunOptions& opt) {
  Scenario sc = scenario;
  if (opt.seed) sc.seed = *opt.seed;
  std::vector<std::string> wanted = opt.checks.empty() ? sc.checks : opt.checks;
  for (const auto& c : wanted)
    if (std::find(check_order().begin(), check_order().end(), c) == check_order().end())
      throw ConfigError("unknown check '" + c + "'");
  RunOutcome out;
  out.seed = sc.seed;
  const auto start = std::chrono::steady_clock::now();
  detail::RunState st;
  std::string failed_gate;
  for (const auto& name : check_order()) {
    if (std::find(wanted.begin(), wanted.end(), name) == wanted.end()) continue;
    CheckResult r;
    r.name = name;
    if (!failed_gate.empty()) {
      r.verdict = "skipped";
      r.gate = failed_gate;
      out.results.push_back(std::move(r));
      continue;
    }
    const auto t0 = std::chrono::steady_clock::now();
    try {
      if (name == "orthogonality") detail::check_orthogonality_step(sc, r);
      else if (name == "strong_m_convexity") detail::check_convexity_step(sc, r);
      else if (name == "foliation") detail::check_foliation_step(sc, r, opt.threads);
      else if (name == "barrier") detail::check_barrier_step(sc, r, st);
      else if (name == "lemma33") detail::check_lemma33_step(sc, r, st, opt.threads);
      else if (name == "lemma34") detail::check_lemma34_step(sc, r, st, opt.threads);
      else detail::check_first_variation_step(sc, r, st, opt.threads);
    } catch (const ConfigError&) {
      throw;
    } catch (const ParseError&) {
      throw;
    } catch (const VerificationError& e) {
      r.verdict = "fail";
      r.message = e.what();
      r.witness = e.witness();
    } catch (const Error& e) {
      r.verdict = "error";
      r.message = e.what();
      r.witness = detail::vec_json(sc.p);
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (r.verdict != "pass") {
      failed_gate = name;
      out.pass = false;
    }
    out.results.push_back(std::move(r));
  }
  out.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return out;
}

/// Report document; everything except "timing" is deterministic.
inline json make_report(const Scenario& sc, const RunOutcome& out) {
  json rep;
  rep["schema_version"] = kReportSchemaVersion;
  rep["scenario"] = sc.name;
  rep["environment"] = {{"version", kVersion}, {"seed", out.seed}};
  rep["verdict"] = out.pass ? "pass" : "fail";
  json checks = json::array();
  json timing = json::object();
  std::string gate;
  for (const auto& r : out.results) {
    json c;
    c["name"] = r.name;
    c["verdict"] = r.verdict;
    c["residuals"] = r.residuals;
    c["witness"] = r.witness;
    if (!r.gate.empty()) c["gate"] = r.gate;
    if (!r.message.empty()) c["message"] = r.message;
    checks.push_back(c);
    if (r.verdict != "pass" && r.verdict != "skipped" && gate.empty()) gate = r.name;
    timing[r.name] = r.seconds;
  }
  rep["checks"] = checks;
  if (!gate.empty()) rep["failed_gate"] = gate;
  timing["total"] = out.seconds;
  rep["timing"] = timing;
  return rep;
}

inline std::string report_text(const json& report) { return report.dump(2) + "\n"; }

// ---------------------------------------------------------------- sweeps

inline const std::vector<std::string>& sweep_columns() {
  static const std::vector<std::string> cols{"epsilon",         "K",
                                             "theta_star",      "F_star",
                                             "worst_trace",     "verdict",
                                             "param",           "value",
                                             "worst_trace_over_phi", "delta_v",
                                             "frame_identity_residual", "psi_residual",
                                             "fd_step",         "refine"};
  return cols;
}

struct SweepRow {
  std::map<std::string, std::string> cells;
};

namespace detail {

inline std::string fmt(double v) {
  if (std::isnan(v)) return "";
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

// Median frame-identity and max psi residual of the S foliation on seeded points.
inline std::pair<double, double> foliation_residuals(const Scenario& sc, int count, unsigned threads) {
  const auto F = build_foliation(sc.domain(1), *sc.surface, sc.p, sc.delta, sc.tau_orth);
  const auto pts = region_samples(F, sc.region, 0.5 * sc.delta, count, sc.seed ^ 0x5eedULL);
  const auto vals = parallel_map(pts.size(), threads, [&](std::size_t i) {
    double w = 0.0;
    for (int k = 2; k <= F.n(); ++k) w = std::max(w, F.frame_identity_residual(pts[i], k));
    return std::make_pair(w, F.psi(pts[i]).residual);
  });
  std::vector<double> id;
  double psi = 0.0;
  for (const auto& [a, b] : vals) {
    id.push_back(a);
    psi = std::max(psi, b);
  }
  return {median(id), psi};
}

}  // namespace detail

/// One row per value. `param` is epsilon, fd_step or refine.
inline std::vector<SweepRow> sweep(const Scenario& scenario, const std::string& param, const std::vector<double>& values,
                                   unsigned threads = 1) {
  if (values.empty()) throw ConfigError("sweep needs at least one value");
  for (double v : values)
    if (!(v > 0.0)) throw ConfigError("sweep values must be positive");
  if (param != "epsilon" && param != "fd_step" && param != "refine")
    throw ConfigError("sweep parameter must be epsilon, fd_step or refine");
  std::vector<SweepRow> rows;
  for (double value : values) {
    Scenario sc = scenario;
    double eps = sc.epsilons.front();
    if (param == "epsilon") eps = value;
    if (param == "fd_step") sc = scenario.with_fd_step(value);
    if (param == "refine") {
      if (value != std::floor(value)) throw ConfigError("refine values must be integers");
      sc.refine = static_cast<int>(value);
    }
    sc.epsilons = {eps};
    detail::RunState st;
    const auto F = detail::barrier_foliation(sc, eps, st);
    Lemma33Options opt;
    opt.region = sc.region;
    opt.samples = sc.region_samples;
    opt.seed = sc.seed;
    opt.threads = threads;
    const auto reps = verify_lemma33(F, eps, sc.ms, opt);
    double worst = -std::numeric_limits<double>::infinity(), worst_n = worst;
    bool verdict = true;
    for (const auto& r : reps) {
      worst = std::max(worst, r.worst_trace);
      worst_n = std::max(worst_n, r.worst_trace_normalized);
      verdict = verdict && r.verdict;
    }
    const double K = reps.front().K;
    const bool admissible = K == 0.0 || eps < 1.0 / std::sqrt(2.0 * K);
    Lemma34Result lm{std::nan(""), std::nan("")};
    if (admissible) lm = lemma34_max(K, sc.surface->base_dim(), eps);

    double dv = std::nan("");
    for (int m : sc.ms) {
      std::vector<std::pair<std::string, DiscreteVarifold>> family;
      std::vector<bool> zero;
      for (const auto& v : sc.varifolds)
        if (v.m == m && !v.expect_zero) {
          family.emplace_back(v.name, build_varifold(sc, v, eps));
          zero.push_back(false);
        }
      if (family.empty()) continue;
      const auto ex = max_principle_experiment(F, sc.domain(m), eps, m, family, zero, worst, sc.tau_neg_factor, threads);
      for (const auto& e : ex.entries) dv = std::isnan(dv) ? e.delta_v : std::max(dv, e.delta_v);
    }
    double fi = std::nan(""), pr = std::nan("");
    if (param == "fd_step") std::tie(fi, pr) = detail::foliation_residuals(sc, 20, threads);

    SweepRow row;
    row.cells["epsilon"] = detail::fmt(eps);
    row.cells["K"] = detail::fmt(K);
    row.cells["theta_star"] = detail::fmt(lm.theta_star);
    row.cells["F_star"] = detail::fmt(lm.f_star);
    row.cells["worst_trace"] = detail::fmt(worst);
    row.cells["verdict"] = verdict ? "pass" : "fail";
    row.cells["param"] = param;
    row.cells["value"] = detail::fmt(value);
    row.cells["worst_trace_over_phi"] = detail::fmt(worst_n);
    row.cells["delta_v"] = detail::fmt(dv);
    row.cells["frame_identity_residual"] = detail::fmt(fi);
    row.cells["psi_residual"] = detail::fmt(pr);
    row.cells["fd_step"] = detail::fmt(sc.chart->fd_step());
    row.cells["refine"] = std::to_string(sc.refine);
    rows.push_back(std::move(row));
  }
  return rows;
}

inline std::string sweep_csv(const std::vector<SweepRow>& rows) {
  std::string out;
  const auto& cols = sweep_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
  out += "\n";
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      auto it = r.cells.find(cols[i]);
      out += (i ? "," : "") + (it == r.cells.end() ? std::string() : it->second);
    }
    out += "\n";
  }
  return out;
}

}  // namespace freebdy
