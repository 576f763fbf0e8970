#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <filesystem>
#include <fstream>

#include "baffle/dataset.hpp"
#include "baffle/errors.hpp"
#include "baffle/experiment.hpp"
#include "baffle/report.hpp"

using namespace baffle;
namespace fs = std::filesystem;

namespace {

EvalResult fake_eval(double mean, const TriggerSchedule& schedule) {
  EvalResult e;
  e.returns = {mean, mean};
  e.mean_return = mean;
  e.episodes = 2;
  e.schedule = schedule;
  return e;
}

TriggerSchedule sched_distributed(int k) {
  TriggerSchedule s;
  s.strategy = TriggerStrategy::Distributed;
  s.interval = k;
  return s;
}

}  // namespace

TEST_CASE("build_reference anchors max to the best clean agent") {
  const NormalizationRef ref = build_reference(fake_eval(3559, {}),
                                               fake_eval(252, {}));
  CHECK(ref.max_return == doctest::Approx(3559));
  CHECK(ref.min_return == doctest::Approx(252));

  CHECK_THROWS_AS(build_reference(fake_eval(100, {}), fake_eval(100, {})),
                  NumericalError);
}

TEST_CASE("chainwalk tabular anchors give the (0.99, -1.01) reference") {
  const EnvSpec spec = chain_walk_spec(5, 100);
  const auto best = make_tabular_policy(spec, Objective::Maximize, 1.0);
  const auto weak = make_tabular_policy(spec, Objective::Minimize, 1.0);
  const EvalResult eval_best = rollout(spec, *best, 10, {}, nullptr, 1);
  const EvalResult eval_weak = rollout(spec, *weak, 10, {}, nullptr, 1);
  const NormalizationRef ref = build_reference(eval_best, eval_weak);
  CHECK(ref.max_return == doctest::Approx(0.99));
  CHECK(ref.min_return == doctest::Approx(-1.01));
}

TEST_CASE("ablation of identical eval sets gives identical columns") {
  const NormalizationRef ref{1.0, -1.0};
  std::vector<EvalResult> evals = {fake_eval(0.9, {}),
                                   fake_eval(0.5, sched_distributed(4))};
  const auto rows = ablation_table(evals, evals, ref);
  REQUIRE(rows.size() == 2);
  for (const AblationRow& row : rows) {
    CHECK(row.clean_change_pct == doctest::Approx(row.poisoned_change_pct));
  }
  // none row: zero change on both sides.
  CHECK(rows[1].schedule == "none");
  CHECK(rows[1].clean_change_pct == doctest::Approx(0.0));
}

TEST_CASE("ablation reproduces the headline sensitivity ratio") {
  // Clean agent drops 3.3%, poisoned agent 27.4% under the same trigger:
  // ratio 8.3.
  const NormalizationRef ref{1.0, 0.0};
  std::vector<EvalResult> clean = {fake_eval(1.0, {}),
                                   fake_eval(0.967, sched_distributed(20))};
  std::vector<EvalResult> poisoned = {fake_eval(1.0, {}),
                                      fake_eval(0.726, sched_distributed(20))};
  const auto rows = ablation_table(clean, poisoned, ref);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].schedule == "distributed:20");
  CHECK(rows[0].clean_change_pct == doctest::Approx(-3.3));
  CHECK(rows[0].poisoned_change_pct == doctest::Approx(-27.4));
  CHECK(rows[0].ratio == doctest::Approx(27.4 / 3.3).epsilon(1e-6));
}

TEST_CASE("ablation rejects mismatched schedule sets") {
  const NormalizationRef ref{1.0, 0.0};
  std::vector<EvalResult> clean = {fake_eval(1.0, {})};
  std::vector<EvalResult> poisoned = {fake_eval(1.0, {}),
                                      fake_eval(0.7, sched_distributed(4))};
  CHECK_THROWS_AS(ablation_table(clean, poisoned, ref), UsageError);
}

TEST_CASE("finetune rows report the before/after delta in points") {
  const NormalizationRef ref{1.0, 0.0};
  const FinetuneRow row = finetune_row(
      "fqi", fake_eval(1.0, {}), fake_eval(0.6, sched_distributed(4)),
      fake_eval(0.98, {}), fake_eval(0.62, sched_distributed(4)), ref);
  CHECK(row.change_before_pct == doctest::Approx(-40.0));
  CHECK(row.change_after_pct ==
        doctest::Approx(100.0 * (0.62 / 0.98 - 1.0)).epsilon(1e-9));
  CHECK(row.delta_points ==
        doctest::Approx(row.change_after_pct - row.change_before_pct));
}

TEST_CASE("change_table derives normalized columns that recompute") {
  const NormalizationRef ref{2.0, -2.0};
  std::vector<LabeledEval> labeled;
  labeled.push_back({"fqi", 0.1, "replace", fake_eval(1.5, {})});
  labeled.push_back({"fqi", 0.1, "replace", fake_eval(0.5, sched_distributed(3))});
  labeled.push_back({"bc", 0.1, "replace", fake_eval(1.0, {})});
  const auto rows = change_table(labeled, ref);
  REQUIRE(rows.size() == 3);
  // Sorted by algorithm first.
  CHECK(rows[0].algorithm == "bc");
  for (const ChangeRow& row : rows) {
    CHECK(row.normalized_return ==
          doctest::Approx(normalize_return(row.mean_return, ref)));
  }
  CHECK(rows[1].schedule == "distributed:3");
  CHECK(rows[1].change_pct == doctest::Approx(relative_change(0.5, 1.5, ref)));
  CHECK(rows[2].schedule == "none");
}

TEST_CASE("emit_report writes csv and json that parse back") {
  std::vector<ChangeRow> rows;
  ChangeRow row;
  row.algorithm = "fqi";
  row.rate = 0.1;
  row.mode = "replace";
  row.schedule = "onetime:2";
  row.mean_return = 0.123456789;
  row.normalized_return = 0.6543210987;
  row.change_pct = -41.87654321;
  rows.push_back(row);

  const fs::path csv = fs::temp_directory_path() / "baffle_report.csv";
  const fs::path json = fs::temp_directory_path() / "baffle_report.json";
  emit_report(rows, ReportFormat::Csv, csv);
  emit_report(rows, ReportFormat::Json, json);

  // CSV: header + one row.
  {
    std::ifstream in(csv);
    std::string line;
    int lines = 0;
    while (std::getline(in, line)) {
      if (!line.empty()) ++lines;
    }
    CHECK(lines == 2);
  }

  // csv -> parse -> compare against json-parsed values within printing
  // precision (6 significant digits).
  const auto from_csv = parse_report_csv(csv);
  const auto from_json = parse_report_json(json);
  REQUIRE(from_csv.size() == 1);
  REQUIRE(from_json.size() == 1);
  CHECK(from_json[0].mean_return == doctest::Approx(row.mean_return));
  CHECK(from_csv[0].mean_return ==
        doctest::Approx(row.mean_return).epsilon(1e-6));
  CHECK(from_csv[0].change_pct ==
        doctest::Approx(from_json[0].change_pct).epsilon(1e-5));
  CHECK(from_csv[0].algorithm == from_json[0].algorithm);
  CHECK(from_csv[0].schedule == from_json[0].schedule);

  CHECK_THROWS_AS(emit_report({}, ReportFormat::Csv, csv), UsageError);
}
