// Command-line front end: run a config, sweep a parameter grid, or run the acceptance checks.
//
//   spgd_cli run configs/inpainting.json --seeds 0-19 --out-dir out/inpaint
//   spgd_cli sweep configs/inpainting.json --beta 0,0.5,0.95 --warmup 1,5
//   spgd_cli check [--only 1,3]
//
// Exit codes: 0 success, 1 config error, 2 every seed failed (or another runtime
// failure), 3 acceptance check failed.

#include <cstdint>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "spgd/config.hpp"
#include "spgd/harness.hpp"
#include "spgd/selfcheck.hpp"

namespace {

enum Exit { kOk = 0, kConfigError = 1, kRuntimeError = 2, kCheckFailed = 3 };

/// "0-4,7,9" -> {0,1,2,3,4,7,9}
std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    try {
      const auto dash = item.find('-');
      if (dash == std::string::npos) {
        out.push_back(std::stoull(item));
      } else {
        const auto lo = std::stoull(item.substr(0, dash));
        const auto hi = std::stoull(item.substr(dash + 1));
        if (hi < lo) throw spgd::ConfigError("--seeds: empty range " + item);
        for (auto s = lo; s <= hi; ++s) out.push_back(s);
      }
    } catch (const std::logic_error&) {
      throw spgd::ConfigError("--seeds: cannot parse '" + item + "'");
    }
  }
  if (out.empty()) throw spgd::ConfigError("--seeds: no seeds given");
  return out;
}

void print_aggregate(const spgd::RunSummary& s) {
  const auto& agg = s.summary["aggregate"];
  for (const char* key : {"psnr_db", "ssim", "measurement_residual", "error_norm"}) {
    const auto& m = agg[key];
    if (m["mean"].is_null()) continue;
    std::cout << key << ": mean " << spgd::format_number(m["mean"].get<double>()) << ", std "
              << spgd::format_number(m["std"].get<double>()) << '\n';
  }
  std::cout << "seeds ok " << s.succeeded() << "/" << s.seeds.size() << ", nfe per trajectory "
            << s.summary["nfe_per_trajectory"]["t_times_n_plus_1"] << '\n';
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Diffusion posterior sampling with warm-up and adaptive momentum"};
  app.require_subcommand(1);

  std::string out_dir;
  std::string seeds;
  bool quiet = false;
  app.add_option("--out-dir", out_dir, "Override the output directory");
  app.add_option("--seeds", seeds, "Override seeds, e.g. 0-19 or 1,2,5");
  app.add_flag("-q,--quiet", quiet, "Suppress progress output");

  std::string config_path;
  auto* run = app.add_subcommand("run", "Run every seed of a config");
  run->add_option("config", config_path, "JSON run config")->required();
  run->fallthrough();

  std::vector<double> betas;
  std::vector<int> warmups;
  std::vector<int> steps;
  auto* sweep = app.add_subcommand("sweep", "Run a config over a grid of beta, N and T");
  sweep->add_option("config", config_path, "JSON run config")->required();
  sweep->add_option("--beta", betas, "Momentum coefficients")->delimiter(',');
  sweep->add_option("--warmup", warmups, "Warm-up step counts N")->delimiter(',');
  sweep->add_option("--steps", steps, "Outer step counts T")->delimiter(',');
  sweep->fallthrough();

  std::vector<int> only;
  auto* check = app.add_subcommand("check", "Run the acceptance suite");
  check->add_option("--only", only, "Criterion numbers to run")->delimiter(',');
  check->fallthrough();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kConfigError;
  }

  if (check->parsed()) {
    std::ostringstream sink;
    const bool ok = spgd::selfcheck::run_all(quiet ? static_cast<std::ostream&>(sink) : std::cout, only);
    if (quiet) std::cout << (ok ? "all checks passed" : "acceptance check failed") << '\n';
    return ok ? kOk : kCheckFailed;
  }

  spgd::RunConfig config;
  try {
    config = spgd::parse_config(config_path);
    if (!out_dir.empty()) config.output_dir = out_dir;
    if (!seeds.empty()) config.seeds = parse_seed_list(seeds);
    spgd::validate_config(config);
  } catch (const spgd::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kConfigError;
  } catch (const spgd::Error& e) {
    std::cerr << "config: " << e.what() << '\n';
    return kConfigError;
  }

  std::ostream* progress = quiet ? nullptr : &std::cerr;
  try {
    if (run->parsed()) {
      const spgd::RunSummary s = spgd::run_experiment(config, progress);
      if (!quiet) print_aggregate(s);
      return s.succeeded() == 0 ? kRuntimeError : kOk;
    }
    const auto runs = spgd::run_sweep(config, {betas, warmups, steps}, progress);
    int ok = 0;
    for (const auto& s : runs) ok += s.succeeded() > 0 ? 1 : 0;
    if (!quiet) std::cout << "sweep: " << ok << "/" << runs.size() << " grid points produced results\n";
    return ok == 0 ? kRuntimeError : kOk;
  } catch (const spgd::ConfigError& e) {
    std::cerr << e.what() << '\n';
    return kConfigError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
}
