#include "baffle/defend.hpp"

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <nlohmann/json.hpp>

#include "baffle/errors.hpp"
#include "baffle/parallel.hpp"
#include "baffle/rng.hpp"

namespace baffle {

Eigen::MatrixXd activation_matrix(const MlpModel& model, const Dataset& dataset) {
  if (dataset.records.empty()) {
    throw UsageError("activation_matrix: empty dataset");
  }
  const Eigen::Index width = model.activations(dataset.records[0].obs).size();
  Eigen::MatrixXd acts(static_cast<Eigen::Index>(dataset.records.size()), width);
  parallel_for(dataset.records.size(), [&](std::size_t i) {
    acts.row(static_cast<Eigen::Index>(i)) =
        model.activations(dataset.records[i].obs).transpose();
  });
  return acts;
}

PcaResult pca_project(const Eigen::MatrixXd& matrix, int k) {
  if (k < 1) throw UsageError("pca_project: k must be >= 1");
  if (matrix.rows() < k || matrix.cols() < k) {
    throw UsageError("pca_project: need at least k rows and columns");
  }
  const Eigen::RowVectorXd mean = matrix.colwise().mean();
  const Eigen::MatrixXd centered = matrix.rowwise() - mean;

  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered,
                                     Eigen::ComputeThinU | Eigen::ComputeThinV);
  const Eigen::MatrixXd& v = svd.matrixV();
  const Eigen::VectorXd& s = svd.singularValues();

  PcaResult result;
  result.components = Eigen::MatrixXd::Zero(matrix.cols(), k);
  result.singular_values = Eigen::VectorXd::Zero(k);
  result.coords = Eigen::MatrixXd::Zero(matrix.rows(), k);

  const double tol =
      std::max(1e-12, s.size() > 0 ? s[0] * 1e-12 : 0.0);
  int rank = 0;
  for (Eigen::Index i = 0; i < s.size() && i < k; ++i) {
    if (s[i] > tol) ++rank;
  }
  result.effective_rank = rank;
  result.rank_deficient = rank < k;

  for (int j = 0; j < rank; ++j) {
    Eigen::VectorXd comp = v.col(j);
    // Sign convention: the largest-magnitude loading is positive.
    Eigen::Index imax = 0;
    comp.cwiseAbs().maxCoeff(&imax);
    if (comp[imax] < 0.0) comp = -comp;
    result.components.col(j) = comp;
    result.singular_values[j] = s[j];
    result.coords.col(j) = centered * comp;
  }
  return result;
}

namespace {

double squared_distance(const Eigen::RowVectorXd& a, const Eigen::RowVectorXd& b) {
  return (a - b).squaredNorm();
}

struct LloydRun {
  Eigen::VectorXi labels;
  Eigen::MatrixXd centers;
  double inertia = std::numeric_limits<double>::infinity();
  bool degenerate = false;
  int iterations = 0;
};

LloydRun lloyd_once(const Eigen::MatrixXd& pts, int k, SplitMix64 rng) {
  const Eigen::Index n = pts.rows();
  Eigen::MatrixXd centers(k, pts.cols());

  // k-means++ seeding.
  std::vector<double> d2(static_cast<std::size_t>(n),
                         std::numeric_limits<double>::infinity());
  const Eigen::Index first = static_cast<Eigen::Index>(
      rng.next_below(static_cast<std::uint64_t>(n)));
  centers.row(0) = pts.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] =
          std::min(d2[static_cast<std::size_t>(i)],
                   squared_distance(pts.row(i), centers.row(c - 1)));
      total += d2[static_cast<std::size_t>(i)];
    }
    Eigen::Index pick;
    if (total <= 0.0) {
      pick = static_cast<Eigen::Index>(
          rng.next_below(static_cast<std::uint64_t>(n)));
    } else {
      const double target = rng.next_double() * total;
      double acc = 0.0;
      pick = n - 1;
      for (Eigen::Index i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    }
    centers.row(c) = pts.row(pick);
  }

  LloydRun run;
  run.labels = Eigen::VectorXi::Constant(n, -1);
  constexpr int kMaxIters = 300;
  for (int iter = 0; iter < kMaxIters; ++iter) {
    run.iterations = iter + 1;
    bool changed = false;
    for (Eigen::Index i = 0; i < n; ++i) {
      int best = 0;
      double best_d = squared_distance(pts.row(i), centers.row(0));
      for (int c = 1; c < k; ++c) {
        const double d = squared_distance(pts.row(i), centers.row(c));
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (run.labels[i] != best) {
        run.labels[i] = best;
        changed = true;
      }
    }
    if (!changed) break;
    for (int c = 0; c < k; ++c) {
      Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(pts.cols());
      Eigen::Index count = 0;
      for (Eigen::Index i = 0; i < n; ++i) {
        if (run.labels[i] == c) {
          sum += pts.row(i);
          ++count;
        }
      }
      // Empty clusters keep their previous center.
      if (count > 0) centers.row(c) = sum / static_cast<double>(count);
    }
  }

  run.centers = centers;
  run.inertia = 0.0;
  std::vector<Eigen::Index> counts(static_cast<std::size_t>(k), 0);
  for (Eigen::Index i = 0; i < n; ++i) {
    run.inertia += squared_distance(pts.row(i), centers.row(run.labels[i]));
    ++counts[static_cast<std::size_t>(run.labels[i])];
  }
  run.degenerate =
      std::any_of(counts.begin(), counts.end(), [](Eigen::Index c) { return c == 0; });
  return run;
}

}  // namespace

KmeansResult kmeans(const Eigen::MatrixXd& points, int k, int restarts,
                    std::uint64_t seed) {
  if (k < 1) throw UsageError("kmeans: k must be >= 1");
  if (restarts < 1) throw UsageError("kmeans: restarts must be >= 1");
  if (points.rows() < k) {
    throw UsageError("kmeans: fewer points than clusters");
  }

  LloydRun best;
  KmeansResult result;
  for (int r = 0; r < restarts; ++r) {
    LloydRun run = lloyd_once(points, k, derive_stream(seed, static_cast<std::uint64_t>(r)));
    result.restart_inertias.push_back(run.inertia);
    if (run.inertia < best.inertia) best = std::move(run);
  }

  // Canonical labels: cluster 0 is the larger cluster; a size tie goes to
  // the cluster containing the lowest row index.
  if (k == 2) {
    Eigen::Index size0 = (best.labels.array() == 0).count();
    Eigen::Index size1 = best.labels.size() - size0;
    bool swap = size1 > size0 || (size1 == size0 && best.labels[0] == 1);
    if (swap) {
      for (Eigen::Index i = 0; i < best.labels.size(); ++i) {
        best.labels[i] = 1 - best.labels[i];
      }
      best.centers.row(0).swap(best.centers.row(1));
    }
  }

  result.labels = std::move(best.labels);
  result.centers = std::move(best.centers);
  result.inertia = best.inertia;
  result.degenerate = best.degenerate;
  result.iterations = best.iterations;
  return result;
}

DetectionMetrics detection_metrics(const std::vector<std::uint64_t>& flagged,
                                   const std::vector<std::uint64_t>& truth,
                                   std::size_t total) {
  for (std::uint64_t i : flagged) {
    if (i >= total) throw UsageError("detection_metrics: flagged index out of range");
  }
  for (std::uint64_t i : truth) {
    if (i >= total) throw UsageError("detection_metrics: truth index out of range");
  }
  std::vector<std::uint64_t> f = flagged;
  std::vector<std::uint64_t> t = truth;
  std::sort(f.begin(), f.end());
  std::sort(t.begin(), t.end());
  std::vector<std::uint64_t> hit;
  std::set_intersection(f.begin(), f.end(), t.begin(), t.end(),
                        std::back_inserter(hit));
  DetectionMetrics m;
  m.precision = f.empty() ? 0.0
                          : static_cast<double>(hit.size()) /
                                static_cast<double>(f.size());
  m.recall = t.empty() ? 0.0
                       : static_cast<double>(hit.size()) /
                             static_cast<double>(t.size());
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

DetectionReport activation_clustering_detect(const MlpModel& model,
                                             const Dataset& dataset,
                                             double threshold,
                                             std::uint64_t seed) {
  DetectionReport report;
  report.method = "activation_clustering";
  report.cluster_threshold = threshold;

  const Eigen::MatrixXd acts = activation_matrix(model, dataset);
  PcaResult pca = pca_project(acts, 3);
  if (pca.rank_deficient) {
    report.notes.push_back("pca rank " + std::to_string(pca.effective_rank) +
                           " < 3; missing components zero-padded");
  }
  KmeansResult km = kmeans(pca.coords, 2, 10, seed);
  if (km.degenerate) {
    report.notes.push_back("degenerate clustering: an empty cluster remained");
    return report;
  }

  const Eigen::Index n = km.labels.size();
  const Eigen::Index size1 = (km.labels.array() == 1).count();
  // Cluster 1 is the smaller one after canonicalization.
  const double small_fraction =
      static_cast<double>(size1) / static_cast<double>(n);
  if (small_fraction < threshold && size1 > 0) {
    for (Eigen::Index i = 0; i < n; ++i) {
      if (km.labels[i] == 1) {
        report.flagged.push_back(static_cast<std::uint64_t>(i));
      }
    }
  } else {
    report.notes.push_back("both clusters hold >= " +
                           std::to_string(threshold * 100.0) +
                           "% of records; nothing flagged");
  }
  return report;
}

DetectionReport spectral_detect(const MlpModel& model, const Dataset& dataset,
                                std::uint64_t expected_poison_count) {
  if (expected_poison_count < 1) {
    throw UsageError("spectral_detect: expected count must be >= 1");
  }
  const std::size_t n = dataset.records.size();
  const auto flag_count = static_cast<std::size_t>(
      std::floor(1.2 * static_cast<double>(expected_poison_count)));
  if (flag_count >= n) {
    throw UsageError("spectral_detect: 1.2 * expected count reaches the "
                     "dataset size");
  }

  const Eigen::MatrixXd acts = activation_matrix(model, dataset);
  const Eigen::RowVectorXd mean = acts.colwise().mean();
  const Eigen::MatrixXd centered = acts.rowwise() - mean;
  Eigen::BDCSVD<Eigen::MatrixXd> svd(centered, Eigen::ComputeThinV);
  const Eigen::VectorXd v = svd.matrixV().col(0);
  const Eigen::VectorXd scores = (centered * v).array().square();

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  // Stable order on ties keeps the flag set deterministic.
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[static_cast<Eigen::Index>(a)] >
           scores[static_cast<Eigen::Index>(b)];
  });

  DetectionReport report;
  report.method = "spectral";
  report.expected_count = expected_poison_count;
  report.flagged.assign(order.begin(),
                        order.begin() + static_cast<std::ptrdiff_t>(flag_count));
  std::sort(report.flagged.begin(), report.flagged.end());
  return report;
}

void score_detection(DetectionReport& report,
                     const std::vector<std::uint64_t>& truth,
                     std::size_t total) {
  const DetectionMetrics m = detection_metrics(report.flagged, truth, total);
  report.precision = m.precision;
  report.recall = m.recall;
  report.f1 = m.f1;
  report.scored = true;
  if (report.flagged.empty()) {
    report.notes.push_back("no records flagged; precision reported as 0");
  }
  if (truth.empty()) {
    report.notes.push_back("empty ground truth; recall reported as 0");
  }
}

void save_detection_report(const DetectionReport& report,
                           const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["method"] = report.method;
  j["flagged"] = report.flagged;
  j["precision"] = report.precision;
  j["recall"] = report.recall;
  j["f1"] = report.f1;
  j["scored"] = report.scored;
  j["notes"] = report.notes;
  if (report.method == "activation_clustering") {
    j["cluster_threshold"] = report.cluster_threshold;
  } else if (report.method == "spectral") {
    j["expected_count"] = report.expected_count;
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write detection report: " + path.string());
  out << j.dump(2) << '\n';
}

}  // namespace baffle
