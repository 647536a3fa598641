// freebdy: run verification checks on a scenario, or sweep a parameter.
//
//   freebdy run <file> [--checks a,b] [--out dir] [--seed N] [--threads N]
//   freebdy sweep <file> --param epsilon --values 0.2,0.1 --out sweep.csv
//
// Exit codes: 0 all checks pass, 1 a verification failed, 2 bad input.

#include "freebdy/scenario.hpp"

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>

namespace {

constexpr int kExitFail = 1;
constexpr int kExitConfig = 2;

void write_file(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw freebdy::ConfigError("cannot write '" + path.string() + "'");
  out << text;
}

int cmd_run(const std::string& file, const std::vector<std::string>& checks, const std::string& out_dir,
            std::optional<std::uint64_t> seed, unsigned threads) {
  const auto sc = freebdy::load_scenario(file);
  freebdy::RunOptions opt;
  opt.checks = checks;
  opt.seed = seed;
  opt.threads = threads;
  const auto outcome = freebdy::run_checks(sc, opt);
  const auto report = freebdy::make_report(sc, outcome);
  write_file(std::filesystem::path(out_dir) / "report.json", freebdy::report_text(report));
  for (const auto& r : outcome.results) {
    std::cout << r.name << ": " << r.verdict;
    if (!r.gate.empty()) std::cout << " (gate " << r.gate << ")";
    if (!r.message.empty()) std::cout << " - " << r.message;
    std::cout << "\n";
  }
  return outcome.pass ? 0 : kExitFail;
}

int cmd_sweep(const std::string& file, const std::string& param, const std::vector<double>& values,
              const std::string& out_csv, std::optional<std::uint64_t> seed, unsigned threads) {
  auto sc = freebdy::load_scenario(file);
  if (seed) sc.seed = *seed;
  const auto rows = freebdy::sweep(sc, param, values, threads);
  const std::string csv = freebdy::sweep_csv(rows);
  write_file(out_csv, csv);
  std::cout << csv;
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Boundary maximum principle verification"};
  app.require_subcommand(1);
  std::string file, out_dir = ".", out_csv = "sweep.csv", param;
  std::vector<std::string> checks;
  std::vector<double> values;
  std::uint64_t seed_value = 0;
  unsigned threads = 1;

  auto* run = app.add_subcommand("run", "Run the checks of a scenario and write report.json");
  run->add_option("file", file, "Scenario JSON")->required();
  run->add_option("--checks", checks, "Subset of checks")->delimiter(',');
  run->add_option("--out", out_dir, "Output directory");

  auto* sw = app.add_subcommand("sweep", "Sweep epsilon, fd_step or refine and write a CSV");
  sw->add_option("file", file, "Scenario JSON")->required();
  sw->add_option("--param", param, "epsilon | fd_step | refine")->required();
  sw->add_option("--values", values, "Comma-separated values")->delimiter(',')->required();
  sw->add_option("--out", out_csv, "Output CSV");

  auto* seed_opt = app.add_option("--seed", seed_value, "Override the scenario seed");
  app.add_option("--threads", threads, "Worker threads")->check(CLI::Range(1u, 256u));
  for (auto* sub : {run, sw}) {
    sub->fallthrough();
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }
  const std::optional<std::uint64_t> seed = seed_opt->count() ? std::optional<std::uint64_t>(seed_value) : std::nullopt;

  try {
    if (*run) return cmd_run(file, checks, out_dir, seed, threads);
    return cmd_sweep(file, param, values, out_csv, seed, threads);
  } catch (const freebdy::ParseError& e) {
    std::cerr << "parse error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const freebdy::ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const freebdy::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitFail;
  }
}
