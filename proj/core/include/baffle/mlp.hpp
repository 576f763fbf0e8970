#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "baffle/obs.hpp"
#include "baffle/policy.hpp"

namespace baffle {

enum class Algorithm : std::uint8_t { Bc = 0, Fqi = 1, Cql = 2 };

std::string to_string(Algorithm a);
Algorithm algorithm_from_string(const std::string& name);

/// Training hyperparameters. The network architecture is fixed by the
/// observation kind: vector inputs get two hidden layers of 64, image
/// inputs are flattened into two hidden layers of 128.
struct TrainConfig {
  Algorithm algorithm = Algorithm::Fqi;
  Objective objective = Objective::Maximize;
  double gamma = 0.95;
  std::int64_t steps = 10000;
  int batch_size = 256;
  double learning_rate = 1e-3;
  int target_sync_every = 200;  // fqi/cql
  double cql_alpha = 0.5;       // cql only
  std::uint64_t seed = 0;

  void validate() const;
};

/// Fully-connected ReLU network with a linear output head, one output per
/// action. Image observations are flattened by layout. Parameters are
/// double precision in memory; checkpoints store them as f32.
struct MlpModel {
  ObsLayout input_layout;
  int action_count = 0;
  std::vector<Eigen::MatrixXd> weights;  // weights[l]: (out x in)
  std::vector<Eigen::VectorXd> biases;

  /// Glorot-uniform init in +-sqrt(6/(fan_in+fan_out)), seeded.
  static MlpModel make(const ObsLayout& layout, int action_count,
                       const std::vector<int>& hidden_sizes,
                       std::uint64_t seed);
  static std::vector<int> default_hidden(const ObsLayout& layout);

  int num_layers() const { return static_cast<int>(weights.size()); }
  std::size_t parameter_count() const;

  Eigen::VectorXd forward(const Observation& obs) const;
  /// Post-ReLU values of the last hidden layer. UsageError without one.
  Eigen::VectorXd activations(const Observation& obs) const;
  /// Batch forward: inputs as columns. Returns (action_count x batch).
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& inputs) const;

  bool operator==(const MlpModel& other) const;
};

/// Greedy argmax policy over model outputs; ties break to the lowest
/// action index.
class MlpPolicy : public Policy {
 public:
  explicit MlpPolicy(MlpModel model) : model_(std::move(model)) {}
  int act(const Observation& obs) const override;
  const MlpModel& model() const { return model_; }
  MlpModel& model() { return model_; }

 private:
  MlpModel model_;
};

/// Greedy argmax over an output vector, ties to the lowest index.
int argmax_action(const Eigen::VectorXd& outputs);

/// Checkpoint file, magic "BFLM": architecture descriptor, the TrainConfig
/// used, and an f32 parameter dump. A JSON sidecar at <path>.json carries
/// free-form training metadata.
void save_checkpoint(const MlpModel& model, const TrainConfig& config,
                     const std::filesystem::path& path,
                     const std::string& metadata_json = "{}");
struct Checkpoint {
  MlpModel model;
  TrainConfig config;
};
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace baffle
