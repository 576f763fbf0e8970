#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "baffle/poison.hpp"
#include "baffle/report.hpp"
#include "baffle/train.hpp"

namespace baffle {

/// Full experiment description: collect -> train -> weak-train -> poison ->
/// eval -> finetune -> defend -> report. Parsed from a JSON config file
/// (key reference in docs/config.md); every stage seed derives from the
/// single master seed.
struct ExperimentConfig {
  std::uint64_t seed = 1;
  std::filesystem::path out_dir = "run";
  EnvSpec env;

  int collect_episodes = 2000;
  double collect_epsilon = 0.3;

  std::vector<Algorithm> algorithms = {Algorithm::Bc, Algorithm::Fqi,
                                       Algorithm::Cql};
  TrainConfig train_base;  // per-agent seed filled in per stage
  int train_seeds = 1;     // replicates per algorithm
  Algorithm weak_algorithm = Algorithm::Fqi;
  std::int64_t weak_steps = -1;  // -1: train_base.steps

  std::vector<double> rates = {0.0, 0.1};
  std::vector<PoisonMode> modes = {PoisonMode::Replace};
  std::optional<double> r_high;   // unset: quantile directive
  double r_high_quantile = 0.75;
  std::vector<std::uint32_t> trigger_dims = {3, 4};  // vector envs
  int patch_size = 2;                                // image envs

  int eval_episodes = 100;
  std::vector<TriggerSchedule> eval_schedules;  // "none" is always added

  bool finetune_enabled = true;
  double finetune_fraction = 0.1;

  bool defend_enabled = true;

  void validate() const;
};

ExperimentConfig load_experiment_config(const std::filesystem::path& path);
/// The copy written into a run directory omits out_dir so the artifact
/// tree is location-independent (and byte-identical across reruns).
void save_experiment_config(const ExperimentConfig& config,
                            const std::filesystem::path& path,
                            bool include_out_dir = true);

/// Everything run_experiment hands back in memory; all artifacts are also
/// files under config.out_dir, listed with digests in the run manifest.
struct ExperimentReport {
  NormalizationRef reference;
  std::vector<ChangeRow> rows;
  std::vector<FinetuneRow> finetune_rows;
  std::vector<DefenseRow> defense_rows;
  std::vector<AblationRow> ablation_rows;
  std::filesystem::path out_dir;
};

ExperimentReport run_experiment(const ExperimentConfig& config);

/// Writes the summary table. CSV has a fixed header and 6-significant-digit
/// floats; JSON carries raw doubles plus a schema version.
enum class ReportFormat { Csv, Json };
void emit_report(const std::vector<ChangeRow>& rows, ReportFormat format,
                 const std::filesystem::path& path);
std::vector<ChangeRow> parse_report_csv(const std::filesystem::path& path);
std::vector<ChangeRow> parse_report_json(const std::filesystem::path& path);

/// Rebuilds the derived tables under <dir>/report from the eval artifacts
/// already in <dir> (the `report` subcommand).
void rebuild_reports(const std::filesystem::path& dir);

}  // namespace baffle
