// Acceptance checks: one PASS/FAIL line per criterion. Exit status is the
// number of failed criteria (0 when everything passes).

#include "fixtures.hpp"
#include "oracles.hpp"
#include "reference_expr.hpp"

#include "freebdy/expr.hpp"
#include "freebdy/scenario.hpp"

#include <bit>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <sys/wait.h>

using namespace freebdy;
using fixtures::vec;

namespace {

constexpr double kPi = std::numbers::pi;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(4) << v;
  return os.str();
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

OrthogonalFoliation barrier_foliation(const Scenario& sc, double eps) {
  const auto br = build_barrier(sc.domain(1), sc.p, eps);
  return OrthogonalFoliation(br.barrier.surface, sc.p, sc.delta, sc.tau_orth);
}

// ---------------------------------------------------------------- 1

Outcome frame_identity() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto sc = fixtures::scenario("cap_corner");
  auto residuals = [&](const Scenario& s) {
    const auto F = build_foliation(s.domain(1), *s.surface, s.p, s.delta, s.tau_orth);
    CounterRng rng(s.seed, 401);
    std::vector<double> r;
    for (int k = 0; k < 100; ++k) {
      const Vec y = vec({rng.uniform(0.0, 0.3), rng.uniform(-0.3, 0.3)});
      r.push_back(F.frame_identity_residual(F.point(y, rng.uniform(-0.1, 0.1)), 2));
    }
    return r;
  };
  const double h = sc.chart->fd_step();
  const auto r1 = residuals(sc);
  const auto r2 = residuals(sc.with_fd_step(h / 2));
  const double worst = *std::max_element(r1.begin(), r1.end());
  const double ratio = median(r1) / median(r2);
  const double secs = seconds_since(t0);
  return {worst < 1e-3 && ratio >= 1.7 && secs < 30.0,
          "max residual " + fmt(worst) + " at 100 points, median ratio on halving " + fmt(ratio) + ", " + fmt(secs) +
              " s"};
}

// ---------------------------------------------------------------- 2

Outcome psi_on_boundary() {
  bool ok = true;
  std::string detail;
  for (const auto& [name, tol] : std::vector<std::pair<std::string, double>>{
           {"flat_halfspace", 1e-6}, {"cap_corner", 1e-3}, {"conformal_cap", 1e-3}}) {
    const auto sc = fixtures::scenario(name);
    const double eps = sc.epsilons.front();
    const auto F = barrier_foliation(sc, eps);
    CounterRng rng(sc.seed, 402);
    double dev = 0.0, res = 0.0;
    for (int k = 0; k < 32; ++k) {
      const Vec q = F.point(vec({0.0, rng.uniform(-sc.region.width, sc.region.width)}),
                            rng.uniform(0.0, sc.region.s_fraction * eps));
      const auto ps = F.psi(q);
      dev = std::max(dev, std::fabs(ps.psi - 1.0));
      res = std::max(res, ps.residual);
    }
    ok = ok && dev < tol && res < tol;
    detail += name + " |psi-1| " + fmt(dev) + " |grad s - psi nu| " + fmt(res) + " (tol " + fmt(tol) + "); ";
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 3

Outcome lemma34() {
  bool ok = true;
  double prev = 1e300, worst = 0.0;
  for (double eps : {0.2, 0.1, 0.05}) {
    const double f = lemma34_max(1.0, 3, eps).f_star;
    worst = std::max(worst, std::fabs(f - oracles::lemma34_grid_max(1.0, 3, eps)));
    ok = ok && f < prev;
    prev = f;
  }
  const double f02 = lemma34_max(1.0, 3, 0.02).f_star;
  ok = ok && worst < 1e-8 && f02 < prev && f02 < 1e-2;
  return {ok, "max |F* - grid| " + fmt(worst) + ", F*(0.05) " + fmt(prev) + ", F*(0.02) " + fmt(f02)};
}

// ---------------------------------------------------------------- 4

Outcome trace_extremization() {
  CounterRng rng(404, 0);
  double worst_gap = 0.0, worst_excess = -1e300, diag_err = 0.0;
  for (int k = 0; k < 20; ++k) {
    Mat Q(6, 6);
    for (int i = 0; i < 6; ++i)
      for (int j = 0; j < 6; ++j) Q(i, j) = rng.uniform(-1.0, 1.0);
    Vec d(6);
    for (int i = 0; i < 6; ++i) d[i] = rng.uniform(-1.0, 1.0);
    Vec sorted = d;
    std::sort(sorted.data(), sorted.data() + 6);
    for (int m = 1; m <= 5; ++m) {
      const double analytic = extreme_trace_m(Q, m).second;
      const double mc = oracles::sampled_max_trace(Q, m, 100000, 1000 + 10 * k + m);
      worst_gap = std::max(worst_gap, analytic - mc);
      worst_excess = std::max(worst_excess, mc - analytic);
      const auto [lo, hi] = extreme_trace_m(Mat(d.asDiagonal()), m);
      diag_err = std::max({diag_err, std::fabs(lo - sorted.head(m).sum()), std::fabs(hi - sorted.tail(m).sum())});
    }
  }
  return {worst_excess <= 1e-10 && worst_gap < 5e-2 && diag_err < 1e-10,
          "max (MC - analytic) " + fmt(worst_excess) + ", max gap " + fmt(worst_gap) + ", diagonal error " +
              fmt(diag_err)};
}

// ---------------------------------------------------------------- 5

Outcome lemma33() {
  const auto t0 = std::chrono::steady_clock::now();
  const auto sc = fixtures::scenario("cap_corner");
  const double eps = 0.05;
  Lemma33Options opt;
  opt.region = sc.region;
  opt.samples = sc.region_samples;
  opt.seed = sc.seed;
  const auto reps = verify_lemma33(barrier_foliation(sc, eps), eps, {1, 2}, opt);
  bool ok = true;
  std::string detail;
  for (const auto& r : reps) {
    double worst = -1e300;
    for (const auto& pt : r.points) worst = std::max(worst, pt.max_trace);
    const double analytic = extreme_trace_m(r.worst_matrix, r.m).second;
    const double mc = oracles::sampled_max_trace(r.worst_matrix, r.m, 20000, 405);
    ok = ok && r.verdict && worst < 0.0 && mc <= analytic + 1e-9 * (1.0 + std::fabs(analytic));
    detail += "cap m=" + std::to_string(r.m) + " max trace " + fmt(worst) + " over " + std::to_string(r.points.size()) +
              " points; ";
  }
  const auto flat = fixtures::scenario("flat_halfspace");
  const double feps = flat.epsilons.front();
  Lemma33Options fopt = opt;
  fopt.region = flat.region;
  fopt.samples = flat.region_samples;
  fopt.seed = flat.seed;
  const auto frep = verify_lemma33(barrier_foliation(flat, feps), feps, {1}, fopt).front();
  const auto& at_p = frep.points.front();
  const bool flat_ok = !frep.verdict && at_p.s == 0.0 && std::fabs(at_p.max_trace) <= 1e-9 * at_p.phi;
  const double secs = seconds_since(t0);
  detail += "flat verdict " + std::string(frep.verdict ? "pass" : "fail") + " with max trace at p " +
            fmt(at_p.max_trace) + " (phi " + fmt(at_p.phi) + "); " + fmt(secs) + " s";
  return {ok && flat_ok && secs < 60.0, detail};
}

// ---------------------------------------------------------------- 6

Outcome experiment() {
  const auto sc = fixtures::scenario("cap_corner");
  const double eps = 0.05;
  const auto F = barrier_foliation(sc, eps);
  bool ok = true;
  std::string detail;
  for (int m : {1, 2}) {
    std::vector<std::pair<std::string, DiscreteVarifold>> family;
    std::vector<bool> zero;
    for (const auto& v : sc.varifolds)
      if (v.m == m) {
        family.emplace_back(v.name, build_varifold(sc, v, eps));
        zero.push_back(v.expect_zero);
      }
    const auto rep = max_principle_experiment(F, sc.domain(1), eps, m, family, zero, 0.0, sc.tau_neg_factor);
    bool touching = false, control = false;
    for (const auto& e : rep.entries) {
      if (e.expect_zero) {
        control = true;
        ok = ok && e.delta_v == 0.0;
      } else {
        touching = true;
        ok = ok && e.delta_v < -e.tau_neg && e.distance_to_p < 1e-3 && e.support_in_domain;
      }
      detail += e.name + " dV " + fmt(e.delta_v) + (e.expect_zero ? "" : " (tau_neg " + fmt(e.tau_neg) + ")") + "; ";
    }
    ok = ok && touching && control;
  }
  return {ok, detail};
}

// ---------------------------------------------------------------- 7

Outcome stationarity() {
  const auto fields = fixtures::tangential_fields(50, 407);
  const double eq = stationarity_residual(fixtures::ball_disk(0.0, 16), fields);
  const double tilted = stationarity_residual(fixtures::ball_disk(std::sin(kPi / 18), 16), fields);
  return {eq < 1e-3 && tilted > 1e-2, "equatorial " + fmt(eq) + ", tilted by 10 deg " + fmt(tilted)};
}

// ---------------------------------------------------------------- 8

Outcome first_variation_oracle() {
  const auto chart = std::make_shared<const MetricChart>(
      MetricChart::euclidean(3, vec({-2, -2, -2}), vec({2, 2, 2}), false, 1e-4));
  const auto disk = mesh_varifold(chart, disk_mesh(1.0, 48, false), [](const Vec& u) { return vec({u[0], u[1], 0.0}); });
  const Mat I = Mat::Identity(3, 3);
  const VectorField position{[](const Vec& x) { return x; }, [I](const Vec&) { return I; }};
  const double err = std::fabs(first_variation(disk, position).total - 2.0 * kPi);

  const auto V = mesh_varifold(chart, disk_mesh(1.0, 6, false), [](const Vec& u) { return vec({u[0], u[1], 0.0}); });
  const VectorField X{[](const Vec& x) { return vec({x[0] * x[1], x[1] * x[1] - x[2], x[0] * x[0]}); }, {}};
  const double area = V.mass(), dv = first_variation(V, X).total;
  const double e1 = std::fabs(flowed_area(V, X, 0.02) - area - 0.02 * dv);
  const double e2 = std::fabs(flowed_area(V, X, 0.01) - area - 0.01 * dv);
  const double slope = std::log(e1 / e2) / std::log(2.0);
  return {err < 1e-3 && slope >= 1.8 && slope <= 2.2, "|dV - 2 pi| " + fmt(err) + ", flow exponent " + fmt(slope)};
}

// ---------------------------------------------------------------- 9

int run_cli(const std::string& args) {
  const int status = std::system((std::string(FREEBDY_CLI_PATH) + " " + args + " > /dev/null 2>&1").c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string report_without_timing(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  json j = json::parse(ss.str());
  j.erase("timing");
  return j.dump(2);
}

Outcome determinism() {
  namespace fs = std::filesystem;
  const fs::path base = fs::temp_directory_path() / "freebdy_acceptance";
  fs::remove_all(base);
  const std::string file = fixtures::scenario_path("cap_corner");
  const int c1 = run_cli("run " + file + " --out " + (base / "a").string());
  const int c2 = run_cli("run " + file + " --out " + (base / "b").string());
  const bool same = c1 == 0 && c2 == 0 &&
                    report_without_timing(base / "a" / "report.json") == report_without_timing(base / "b" / "report.json");

  CounterRng rng(409, 1);
  std::vector<std::vector<double>> pts;
  for (int k = 0; k < 25; ++k) pts.push_back({rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9), rng.uniform(0.1, 0.9)});
  int mismatches = 0, round_trip_failures = 0, checked = 0;
  std::vector<std::string> sources = reference::corpus();
  CounterRng gen(409, 2);
  for (int k = 0; k < 200; ++k) sources.push_back(reference::random_expression(gen, 1 + k % 4));
  for (const auto& src : sources) {
    const auto e = Expression::parse(src, 3);
    const auto again = Expression::parse(e.serialize(), 3);
    if (!e.structurally_equal(again) || again.serialize() != e.serialize()) ++round_trip_failures;
    for (const auto& x : pts) {
      const double ref = reference::eval(src, x);
      for (const auto* ex : {&e, &again}) {
        ++checked;
        if (std::bit_cast<std::uint64_t>(ex->eval(std::span<const double>(x))) != std::bit_cast<std::uint64_t>(ref))
          ++mismatches;
      }
    }
  }
  return {same && mismatches == 0 && round_trip_failures == 0,
          std::string("reports ") + (same ? "identical" : "differ") + " (exit " + std::to_string(c1) + ", " +
              std::to_string(c2) + "); " + std::to_string(sources.size()) + " expressions, " +
              std::to_string(round_trip_failures) + " round-trip failures, " + std::to_string(mismatches) + "/" +
              std::to_string(checked) + " evaluations off by any ulp"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"1 frame identity on cap_corner", frame_identity},
      {"2 psi = 1 on the boundary", psi_on_boundary},
      {"3 coupling bound closed form", lemma34},
      {"4 trace extremization", trace_extremization},
      {"5 negative traces of Q", lemma33},
      {"6 maximum principle experiment", experiment},
      {"7 stationarity control", stationarity},
      {"8 first variation oracle", first_variation_oracle},
      {"9 determinism and expression corpus", determinism},
  };
  int failed = 0;
  for (const auto& [name, fn] : criteria) {
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    if (!o.pass) ++failed;
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << name << ": " << o.detail << std::endl;
  }
  return failed;
}
