#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "baffle/experiment.hpp"

using namespace baffle;
namespace fs = std::filesystem;

namespace {

ExperimentConfig tiny_config(const fs::path& out) {
  ExperimentConfig cfg;
  cfg.seed = 5;
  cfg.out_dir = out;
  cfg.env = chain_walk_spec(5, 16);
  cfg.collect_episodes = 120;
  cfg.collect_epsilon = 0.3;
  cfg.algorithms = {Algorithm::Bc, Algorithm::Fqi};
  cfg.train_base.gamma = 0.95;
  cfg.train_base.steps = 400;
  cfg.train_base.batch_size = 64;
  cfg.train_base.learning_rate = 1e-3;
  cfg.train_base.target_sync_every = 50;
  cfg.train_seeds = 1;
  cfg.weak_algorithm = Algorithm::Fqi;
  cfg.rates = {0.0, 0.1};
  cfg.modes = {PoisonMode::Replace};
  cfg.r_high = 1.0;
  cfg.eval_episodes = 20;
  TriggerSchedule dist;
  dist.strategy = TriggerStrategy::Distributed;
  dist.interval = 4;
  cfg.eval_schedules = {dist};
  cfg.finetune_enabled = true;
  cfg.finetune_fraction = 0.1;
  cfg.defend_enabled = true;
  return cfg;
}

}  // namespace

TEST_CASE("run_experiment produces the full artifact tree and tables") {
  const fs::path out = fs::temp_directory_path() / "baffle_exp_smoke";
  fs::remove_all(out);
  const ExperimentConfig cfg = tiny_config(out);
  const ExperimentReport report = run_experiment(cfg);

  for (const char* file :
       {"config.json", "datasets/clean.bfl", "datasets/clean.bfl.sha256.json",
        "trigger.json", "agents/weak_fqi.bflm", "evals/weak_none.json",
        "datasets/poisoned_r10pct_replace.bfl",
        "datasets/poisoned_r10pct_replace.manifest.json",
        "datasets/benign_r10pct_replace.bfl", "report/summary.csv",
        "report/summary.json", "report/reference.json", "report/finetune.csv",
        "report/ablation.csv", "report/defense.csv", "run_digests.json",
        "evals/index.json"}) {
    INFO(file);
    CHECK(fs::exists(out / file));
  }

  // 2 algorithms x 2 rates x 2 schedules = 8 summary rows.
  CHECK(report.rows.size() == 8);
  CHECK(report.reference.max_return > report.reference.min_return);
  // Defense ran for both algorithms on the poisoned rate.
  CHECK(report.defense_rows.size() == 4);
  // Finetune rows: 2 algorithms x 1 triggered schedule.
  CHECK(report.finetune_rows.size() == 2);

  // Derived columns recompute from raw columns.
  for (const ChangeRow& row : report.rows) {
    CHECK(row.normalized_return ==
          doctest::Approx(normalize_return(row.mean_return, report.reference)));
  }

  // The config round trips.
  const ExperimentConfig reparsed = load_experiment_config(out / "config.json");
  CHECK(reparsed.seed == cfg.seed);
  CHECK(reparsed.collect_episodes == cfg.collect_episodes);
  CHECK(reparsed.rates == std::vector<double>{0.0, 0.1});

  // rebuild_reports regenerates byte-identical tables from the artifacts.
  std::ifstream before(out / "report" / "summary.csv");
  const std::string summary_before((std::istreambuf_iterator<char>(before)),
                                   std::istreambuf_iterator<char>());
  rebuild_reports(out);
  std::ifstream after(out / "report" / "summary.csv");
  const std::string summary_after((std::istreambuf_iterator<char>(after)),
                                  std::istreambuf_iterator<char>());
  CHECK(summary_before == summary_after);
}

TEST_CASE("config with schedule none only still yields a valid report") {
  const fs::path out = fs::temp_directory_path() / "baffle_exp_none";
  fs::remove_all(out);
  ExperimentConfig cfg = tiny_config(out);
  cfg.eval_schedules.clear();
  cfg.algorithms = {Algorithm::Bc};
  cfg.finetune_enabled = false;
  cfg.defend_enabled = false;
  const ExperimentReport report = run_experiment(cfg);
  CHECK(report.rows.size() == 2);  // 1 algo x 2 rates x none
  for (const ChangeRow& row : report.rows) {
    CHECK(row.schedule == "none");
    CHECK(row.change_pct == 0.0);
  }
}
