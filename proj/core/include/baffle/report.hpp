#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "baffle/defend.hpp"
#include "baffle/evaluate.hpp"

namespace baffle {

/// Normalization scale from the two anchor evaluations: max = best clean
/// agent's mean return, min = weak agent's. Throws NumericalError when
/// max <= min (broken training run).
NormalizationRef build_reference(const EvalResult& eval_best,
                                 const EvalResult& eval_weak);

void save_reference(const NormalizationRef& ref,
                    const std::filesystem::path& path);
NormalizationRef load_reference(const std::filesystem::path& path);

/// One labeled evaluation; the building block of every derived table.
struct LabeledEval {
  std::string algorithm;
  double rate = 0.0;
  std::string mode;
  EvalResult eval;
};

/// Per-configuration relative-change rows: each triggered schedule against
/// the same configuration's normal ("none") evaluation. Rows are sorted by
/// (algorithm, rate, mode, schedule).
struct ChangeRow {
  std::string algorithm;
  double rate = 0.0;
  std::string mode;
  std::string schedule;
  double mean_return = 0.0;
  double normalized_return = 0.0;
  double change_pct = 0.0;  // 0 for the none row
};

std::vector<ChangeRow> change_table(const std::vector<LabeledEval>& evals,
                                    const NormalizationRef& ref);

/// Side-by-side trigger sensitivity of a clean-trained and a
/// poison-trained agent: per schedule, the normalized relative change each
/// agent suffers, and their magnitude ratio. Both inputs must contain a
/// "none" baseline and matching schedule sets.
struct AblationRow {
  std::string schedule;
  double clean_change_pct = 0.0;
  double poisoned_change_pct = 0.0;
  double ratio = 0.0;  // |poisoned| / |clean|; infinity when clean is 0
};

std::vector<AblationRow> ablation_table(const std::vector<EvalResult>& clean_evals,
                                        const std::vector<EvalResult>& poisoned_evals,
                                        const NormalizationRef& ref);

/// Fine-tuning before/after comparison for one agent and schedule.
struct FinetuneRow {
  std::string algorithm;
  std::string schedule;
  double change_before_pct = 0.0;
  double change_after_pct = 0.0;
  double delta_points = 0.0;
};

FinetuneRow finetune_row(const std::string& algorithm,
                         const EvalResult& normal_before,
                         const EvalResult& triggered_before,
                         const EvalResult& normal_after,
                         const EvalResult& triggered_after,
                         const NormalizationRef& ref);

struct DefenseRow {
  std::string algorithm;
  double rate = 0.0;
  std::string mode;
  std::string method;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  std::uint64_t flagged = 0;
};

/// CSV emitters; floats print with 6 significant digits. Row order is the
/// already-sorted input order.
void write_change_csv(const std::vector<ChangeRow>& rows,
                      const std::filesystem::path& path);
void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path);
void write_finetune_csv(const std::vector<FinetuneRow>& rows,
                        const std::filesystem::path& path);
void write_defense_csv(const std::vector<DefenseRow>& rows,
                       const std::filesystem::path& path);

}  // namespace baffle
