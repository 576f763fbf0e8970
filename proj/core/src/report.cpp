#include "baffle/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>

#include <nlohmann/json.hpp>

#include "baffle/errors.hpp"

namespace baffle {
namespace {

std::string fmt6(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write csv: " + path.string());
  return out;
}

}  // namespace

NormalizationRef build_reference(const EvalResult& eval_best,
                                 const EvalResult& eval_weak) {
  if (eval_best.returns.empty() || eval_weak.returns.empty()) {
    throw UsageError("build_reference: empty evaluation");
  }
  NormalizationRef ref{eval_best.mean_return, eval_weak.mean_return};
  if (!(ref.max_return > ref.min_return)) {
    throw NumericalError(
        "reference degenerate: best clean return " + fmt6(ref.max_return) +
        " <= weak return " + fmt6(ref.min_return) +
        " (training did not separate the agents)");
  }
  return ref;
}

void save_reference(const NormalizationRef& ref,
                    const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["max_return"] = ref.max_return;
  j["min_return"] = ref.min_return;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write reference: " + path.string());
  out << j.dump(2) << '\n';
}

NormalizationRef load_reference(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open reference: " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    return NormalizationRef{j.at("max_return").get<double>(),
                            j.at("min_return").get<double>()};
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad reference json " + path.string() + ": " + e.what());
  }
}

std::vector<ChangeRow> change_table(const std::vector<LabeledEval>& evals,
                                    const NormalizationRef& ref) {
  // Group by configuration; each group needs its "none" baseline.
  using Key = std::tuple<std::string, double, std::string>;
  std::map<Key, const LabeledEval*> baselines;
  for (const LabeledEval& le : evals) {
    if (le.eval.schedule.strategy == TriggerStrategy::None) {
      baselines[{le.algorithm, le.rate, le.mode}] = &le;
    }
  }
  std::vector<ChangeRow> rows;
  for (const LabeledEval& le : evals) {
    const Key key{le.algorithm, le.rate, le.mode};
    const auto it = baselines.find(key);
    if (it == baselines.end()) {
      throw UsageError("change_table: no normal-scenario evaluation for " +
                       le.algorithm);
    }
    ChangeRow row;
    row.algorithm = le.algorithm;
    row.rate = le.rate;
    row.mode = le.mode;
    row.schedule = le.eval.schedule.key();
    row.mean_return = le.eval.mean_return;
    row.normalized_return = normalize_return(le.eval.mean_return, ref);
    if (le.eval.schedule.strategy == TriggerStrategy::None) {
      row.change_pct = 0.0;
    } else if (normalize_return(it->second->eval.mean_return, ref) == 0.0) {
      // A baseline at the weak-agent floor has no defined relative change;
      // keep the row rather than abort a finished experiment.
      row.change_pct = std::numeric_limits<double>::quiet_NaN();
    } else {
      row.change_pct = relative_change(le.eval.mean_return,
                                       it->second->eval.mean_return, ref);
    }
    rows.push_back(row);
  }
  std::sort(rows.begin(), rows.end(), [](const ChangeRow& a, const ChangeRow& b) {
    return std::tie(a.algorithm, a.rate, a.mode, a.schedule) <
           std::tie(b.algorithm, b.rate, b.mode, b.schedule);
  });
  return rows;
}

std::vector<AblationRow> ablation_table(
    const std::vector<EvalResult>& clean_evals,
    const std::vector<EvalResult>& poisoned_evals,
    const NormalizationRef& ref) {
  auto index = [](const std::vector<EvalResult>& evals) {
    std::map<std::string, const EvalResult*> by_key;
    for (const EvalResult& e : evals) by_key[e.schedule.key()] = &e;
    return by_key;
  };
  const auto clean = index(clean_evals);
  const auto poisoned = index(poisoned_evals);
  const auto clean_base = clean.find("none");
  const auto poisoned_base = poisoned.find("none");
  if (clean_base == clean.end() || poisoned_base == poisoned.end()) {
    throw UsageError("ablation_table: both sides need a none-schedule eval");
  }
  if (clean.size() != poisoned.size()) {
    throw UsageError("ablation_table: schedule sets differ");
  }

  std::vector<AblationRow> rows;
  for (const auto& [key, clean_eval] : clean) {
    const auto it = poisoned.find(key);
    if (it == poisoned.end()) {
      throw UsageError("ablation_table: schedule " + key +
                       " missing from the poisoned evals");
    }
    AblationRow row;
    row.schedule = key;
    row.clean_change_pct = relative_change(
        clean_eval->mean_return, clean_base->second->mean_return, ref);
    row.poisoned_change_pct = relative_change(
        it->second->mean_return, poisoned_base->second->mean_return, ref);
    row.ratio = std::abs(row.clean_change_pct) > 0.0
                    ? std::abs(row.poisoned_change_pct) /
                          std::abs(row.clean_change_pct)
                    : std::numeric_limits<double>::infinity();
    rows.push_back(row);
  }
  return rows;  // std::map iteration is already key-sorted
}

FinetuneRow finetune_row(const std::string& algorithm,
                         const EvalResult& normal_before,
                         const EvalResult& triggered_before,
                         const EvalResult& normal_after,
                         const EvalResult& triggered_after,
                         const NormalizationRef& ref) {
  if (triggered_before.schedule.key() != triggered_after.schedule.key()) {
    throw UsageError("finetune_row: schedule mismatch between before/after");
  }
  FinetuneRow row;
  row.algorithm = algorithm;
  row.schedule = triggered_before.schedule.key();
  row.change_before_pct = relative_change(
      triggered_before.mean_return, normal_before.mean_return, ref);
  row.change_after_pct = relative_change(
      triggered_after.mean_return, normal_after.mean_return, ref);
  row.delta_points = row.change_after_pct - row.change_before_pct;
  return row;
}

void write_change_csv(const std::vector<ChangeRow>& rows,
                      const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "algorithm,rate,mode,schedule,mean_return,normalized_return,"
         "change_pct\n";
  for (const ChangeRow& r : rows) {
    out << r.algorithm << ',' << fmt6(r.rate) << ',' << r.mode << ','
        << r.schedule << ',' << fmt6(r.mean_return) << ','
        << fmt6(r.normalized_return) << ',' << fmt6(r.change_pct) << '\n';
  }
}

void write_ablation_csv(const std::vector<AblationRow>& rows,
                        const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "schedule,clean_change_pct,poisoned_change_pct,ratio\n";
  for (const AblationRow& r : rows) {
    out << r.schedule << ',' << fmt6(r.clean_change_pct) << ','
        << fmt6(r.poisoned_change_pct) << ',' << fmt6(r.ratio) << '\n';
  }
}

void write_finetune_csv(const std::vector<FinetuneRow>& rows,
                        const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "algorithm,schedule,change_before_pct,change_after_pct,delta_points\n";
  for (const FinetuneRow& r : rows) {
    out << r.algorithm << ',' << r.schedule << ',' << fmt6(r.change_before_pct)
        << ',' << fmt6(r.change_after_pct) << ',' << fmt6(r.delta_points)
        << '\n';
  }
}

void write_defense_csv(const std::vector<DefenseRow>& rows,
                       const std::filesystem::path& path) {
  auto out = open_csv(path);
  out << "algorithm,rate,mode,method,precision,recall,f1,flagged\n";
  for (const DefenseRow& r : rows) {
    out << r.algorithm << ',' << fmt6(r.rate) << ',' << r.mode << ','
        << r.method << ',' << fmt6(r.precision) << ',' << fmt6(r.recall) << ','
        << fmt6(r.f1) << ',' << r.flagged << '\n';
  }
}

}  // namespace baffle
