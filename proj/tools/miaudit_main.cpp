#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "miaudit/config.hpp"
#include "miaudit/experiment.hpp"
#include "miaudit/io.hpp"

namespace {

// 0 = success, 1 = configuration or usage problem, 2 = execution failure
constexpr int kExitOk = 0;
constexpr int kExitConfig = 1;
constexpr int kExitStage = 2;

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"membership-inference auditing engine"};
  app.require_subcommand(1);

  std::string config_path;
  std::string output_dir;
  std::string run_dir;
  std::string out_file;
  std::vector<std::string> run_dirs;
  std::uint64_t seed_override = 0;
  int workers_override = 0;

  CLI::App* run_cmd = app.add_subcommand("run", "execute an audit and write its artifact tree");
  run_cmd->add_option("--config", config_path, "config file (key=value lines)")->required();
  run_cmd->add_option("--output", output_dir, "output directory (overrides output.dir)");
  CLI::Option* seed_opt =
      run_cmd->add_option("--seed", seed_override, "master seed (overrides seed)");
  run_cmd->add_option("--workers", workers_override, "worker threads (overrides MIAUDIT_WORKERS)")
      ->check(CLI::PositiveNumber);

  CLI::App* report_cmd =
      app.add_subcommand("report", "recompute the derived rate files of a finished run");
  report_cmd->add_option("--run", run_dir, "run directory")->required();

  CLI::App* compare_cmd = app.add_subcommand(
      "compare", "overlap matrix across the vulnerable sets of finished runs");
  compare_cmd->add_option("--runs", run_dirs, "run directories")->required()->expected(-1);
  compare_cmd->add_option("--out", out_file, "write the matrix here instead of stdout");

  CLI::App* validate_cmd =
      app.add_subcommand("validate", "check a config file without running anything");
  validate_cmd->add_option("--config", config_path, "config file")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? kExitOk : kExitConfig;
  }

  try {
    if (app.got_subcommand(run_cmd)) {
      miaudit::RunConfig cfg = miaudit::load_config_file(config_path);
      if (!output_dir.empty()) cfg.output.dir = output_dir;
      if (seed_opt->count() > 0) cfg.seed = seed_override;
      int workers = workers_override > 0 ? workers_override : miaudit::resolve_worker_count();
      std::printf("auditing: %d splits x %d repetitions, %zu attacks + gap, %d workers\n",
                  cfg.split_num, cfg.vuln.repetitions, miaudit::enabled_attack_ids(cfg).size(),
                  workers);
      std::fflush(stdout);
      miaudit::RunResult res = miaudit::execute_run(cfg, workers);
      std::printf("corpus: %d points (+%d reference), %d classes, dim %d\n", res.corpus.size(),
                  res.extended.size() - res.corpus.size(), res.corpus.n_classes, res.corpus.dim);
      std::printf("run complete: %s\n", cfg.output.dir.c_str());
      return kExitOk;
    }
    if (app.got_subcommand(report_cmd)) {
      miaudit::emit_report(run_dir);
      std::printf("report refreshed: %s\n", run_dir.c_str());
      return kExitOk;
    }
    if (app.got_subcommand(compare_cmd)) {
      std::string csv = miaudit::compare_runs(run_dirs);
      for (std::size_t i = 0; i < run_dirs.size(); ++i)
        std::printf("run%zu = %s\n", i, run_dirs[i].c_str());
      if (out_file.empty()) {
        std::fputs(csv.c_str(), stdout);
      } else {
        miaudit::write_text_file(out_file, csv);
        std::printf("overlap matrix written: %s\n", out_file.c_str());
      }
      return kExitOk;
    }
    if (app.got_subcommand(validate_cmd)) {
      miaudit::RunConfig cfg = miaudit::load_config_file(config_path);
      miaudit::validate_config(cfg);
      std::printf("config ok, hash %s\n", miaudit::config_hash(cfg).c_str());
      return kExitOk;
    }
  } catch (const miaudit::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitStage;
  }
  return kExitOk;
}
