// fnc: command-line front end.
//
//   fnc run         --config FILE [--set key=value]... [--out DIR] [--checkpoint FILE]
//   fnc ablate      --grid FILE [--out DIR] [--threads N]
//   fnc verify      [--batches N] [--seed S]
//   fnc export-data --config FILE [--set key=value]... --out FILE
//
// Exit codes: 0 success, 1 config error, 2 invariant violation, 3 I/O error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fnc/fnc.hpp"

namespace {

fnc::FncConfig resolve_config(const std::string& path, const std::vector<std::string>& overrides) {
  fnc::FncConfig cfg = path.empty() ? fnc::FncConfig{} : fnc::load_config(path);
  for (const auto& kv : overrides) {
    const auto eq = kv.find('=');
    fnc::require(eq != std::string::npos, fnc::ErrorKind::config, "--set expects key=value, got '" + kv + "'");
    fnc::set_config_value(cfg, fnc::config_detail::trim(kv.substr(0, eq)), kv.substr(eq + 1));
  }
  fnc::validate_config(cfg);
  return cfg;
}

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  fnc::require(!ec, fnc::ErrorKind::io, "cannot create directory " + dir + ": " + ec.message());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"False-negative-aware contrastive learning engine"};
  app.require_subcommand(1);

  std::string config, out = ".", checkpoint, grid, data_out;
  std::vector<std::string> sets;
  bool quiet = false;
  std::size_t threads = 1, batches = 20;
  std::uint64_t seed = 7;

  auto* run = app.add_subcommand("run", "Train and evaluate one configuration");
  run->add_option("-c,--config", config, "Config file (key = value lines)");
  run->add_option("-s,--set", sets, "Override a config key (key=value)");
  run->add_option("-o,--out", out, "Output directory for run.csv / run.json");
  run->add_option("--checkpoint", checkpoint, "Write final encoder parameters here");
  run->add_flag("-q,--quiet", quiet, "No summary line");

  auto* ablate = app.add_subcommand("ablate", "Run a grid of configurations over several seeds");
  ablate->add_option("-g,--grid", grid, "Grid file")->required();
  ablate->add_option("-o,--out", out, "Output directory");
  ablate->add_option("-j,--threads", threads, "Concurrent cells");

  auto* verify = app.add_subcommand("verify", "Gradient and identity self-checks");
  verify->add_option("-n,--batches", batches, "Random batches per loss");
  verify->add_option("--seed", seed, "RNG seed");

  auto* export_data = app.add_subcommand("export-data", "Write the configured dataset as text");
  export_data->add_option("-c,--config", config, "Config file");
  export_data->add_option("-s,--set", sets, "Override a config key (key=value)");
  export_data->add_option("-o,--out", data_out, "Destination file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }

  try {
    if (*run) {
      const fnc::FncConfig cfg = resolve_config(config, sets);
      ensure_dir(out);
      fnc::RunHooks hooks;
      if (!checkpoint.empty())
        hooks.on_finish = [&](const fnc::Trainer& t) {
          fnc::save_checkpoint(checkpoint, {t.params(), cfg.seed, t.steps()});
        };
      const fnc::RunRecord rec = fnc::run_experiment(cfg, hooks);
      fnc::persist_runs(out + "/run", {rec});
      if (!quiet)
        std::printf("run %s  epochs=%zu  knn=%s  probe=%s  fn_acc(final 20%%)=%s  %.2fs\n", rec.run_id.c_str(),
                    rec.epochs.size() - 1, fnc::csv_value(rec.final_knn()).c_str(),
                    fnc::csv_value(rec.final_probe()).c_str(),
                    fnc::csv_value(rec.pooled_fn_accuracy(0.2)).c_str(), rec.wall_time_s);
      return 0;
    }
    if (*ablate) {
      const fnc::AblationGrid g = fnc::parse_grid(fnc::read_text_file(grid));
      ensure_dir(out);
      const fnc::AblationResult res = fnc::run_ablation(g, threads, &std::cout);
      std::vector<fnc::RunRecord> all;
      for (const auto& cell : res.cells) all.insert(all.end(), cell.runs.begin(), cell.runs.end());
      fnc::persist_runs(out + "/runs", all);
      std::ostringstream summary;
      fnc::write_summary_csv(summary, res.summary);
      fnc::write_text(out + "/summary.csv", summary.str());
      for (const auto& cell : res.cells)
        for (const auto& f : cell.failures) std::cerr << "cell " << cell.label << ": " << f << '\n';
      return 0;
    }
    if (*verify) {
      std::vector<fnc::CheckResult> checks = fnc::loss_gradient_checks(batches, seed);
      checks.push_back(fnc::encoder_gradient_check({3, 4, 2}, seed));
      checks.push_back(fnc::encoder_gradient_check({4, 8, 3}, seed + 1));
      for (auto& c : fnc::identity_checks(seed)) checks.push_back(c);
      bool ok = true;
      for (const auto& c : checks) {
        std::printf("[%s] %-45s %.3e (bound %.0e)\n", c.passed ? "PASS" : "FAIL", c.name.c_str(), c.value, c.bound);
        ok = ok && c.passed;
      }
      return ok ? 0 : 2;
    }
    if (*export_data) {
      const fnc::FncConfig cfg = resolve_config(config, sets);
      fnc::export_dataset(data_out, fnc::load_dataset(cfg));
      return 0;
    }
  } catch (const fnc::Error& e) {
    std::cerr << "fnc: " << e.what() << '\n';
    return fnc::exit_code(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "fnc: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
