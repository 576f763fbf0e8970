#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "baffle/dataset.hpp"
#include "baffle/mlp.hpp"
#include "baffle/poison.hpp"

namespace baffle {

/// Penultimate-layer activations for every record in the dataset, row i =
/// record i. Extraction parallelizes over records (BAFFLE_THREADS).
Eigen::MatrixXd activation_matrix(const MlpModel& model, const Dataset& dataset);

/// PCA by SVD of the column-centered matrix.
struct PcaResult {
  Eigen::MatrixXd coords;          // n x k
  Eigen::MatrixXd components;      // cols x k, unit right singular vectors
  Eigen::VectorXd singular_values; // length k
  int effective_rank = 0;          // components beyond it are zero-padded
  bool rank_deficient = false;
};

/// Projects onto the top-k principal components with a deterministic sign
/// convention (each component's largest-magnitude loading is positive).
/// Rank-deficient inputs get zero coordinates on the missing components and
/// the rank_deficient flag.
PcaResult pca_project(const Eigen::MatrixXd& matrix, int k = 3);

struct KmeansResult {
  Eigen::VectorXi labels;   // canonicalized: cluster 0 is the larger one
  Eigen::MatrixXd centers;  // k x dims
  double inertia = 0.0;
  std::vector<double> restart_inertias;
  bool degenerate = false;  // an empty cluster survived to the end
  int iterations = 0;
};

/// Lloyd's algorithm with seeded k-means++ starts; keeps the best of
/// `restarts` runs by inertia. Converged when assignments stabilize or
/// after 300 iterations. Labels are canonicalized (cluster 0 = larger
/// cluster; ties go to the cluster containing the lowest row index).
KmeansResult kmeans(const Eigen::MatrixXd& points, int k = 2, int restarts = 10,
                    std::uint64_t seed = 0);

struct DetectionReport {
  std::string method;
  std::vector<std::uint64_t> flagged;  // sorted record indices
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  bool scored = false;
  std::vector<std::string> notes;
  // parameters used
  double cluster_threshold = 0.0;   // activation clustering
  std::uint64_t expected_count = 0; // spectral
};

struct DetectionMetrics {
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

/// precision = |flagged ∩ truth| / |flagged| (0 when flagged is empty),
/// recall = |flagged ∩ truth| / |truth| (0 when truth is empty),
/// f1 = 2PR/(P+R) (0 when P+R = 0). Indices must lie in [0, total).
DetectionMetrics detection_metrics(const std::vector<std::uint64_t>& flagged,
                                   const std::vector<std::uint64_t>& truth,
                                   std::size_t total);

/// Activation clustering: activations -> PCA(k=3) -> 2-means; when the
/// smaller cluster holds less than `threshold` (default 35%) of the
/// records, its members are flagged.
DetectionReport activation_clustering_detect(const MlpModel& model,
                                             const Dataset& dataset,
                                             double threshold = 0.35,
                                             std::uint64_t seed = 0);

/// Spectral signatures: squared projections onto the top right singular
/// vector of the centered activations; flags the floor(1.2 * expected)
/// highest scorers.
DetectionReport spectral_detect(const MlpModel& model, const Dataset& dataset,
                                std::uint64_t expected_poison_count);

/// Fills precision/recall/f1 against the manifest ground truth.
void score_detection(DetectionReport& report,
                     const std::vector<std::uint64_t>& truth,
                     std::size_t total);

void save_detection_report(const DetectionReport& report,
                           const std::filesystem::path& path);

}  // namespace baffle
