#pragma once

#include <vector>

#include "baffle/dataset.hpp"
#include "baffle/mlp.hpp"

namespace baffle {

struct TrainResult {
  MlpModel model;
  TrainConfig config;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // one entry per optimizer step

  MlpPolicy policy() const { return MlpPolicy(model); }
};

/// Trains an agent on the dataset. objective = Minimize negates every
/// reward and then maximizes, which realizes return minimization for any
/// of the three algorithms.
///
/// bc:  softmax cross-entropy of dataset actions given states.
/// fqi: squared error to targets r + gamma * (1-done) * max_a Q_target(s', a)
///      with the target network synced every target_sync_every steps; s' is
///      the record at t+1 within the same trajectory. Records that are
///      neither terminal nor followed by their t+1 record carry no valid
///      Bellman target and are skipped.
/// cql: fqi loss plus cql_alpha * mean(logsumexp_a Q(s,a) - Q(s, a_data)).
///
/// Batches are sampled with replacement from a SplitMix64 stream seeded by
/// cfg.seed; a batch_size >= the trainable-record count switches to
/// full-batch steps. Training is single-threaded and bit-deterministic
/// given (dataset, cfg).
TrainResult train(const Dataset& dataset, const TrainConfig& cfg);

/// Continues training existing parameters on a benign dataset for
/// cfg.steps more steps (the fine-tuning defense; callers typically pass
/// 10% of the original steps). The optimizer state restarts; the algorithm
/// and shapes must match the original model.
TrainResult finetune(const MlpModel& model, const Dataset& benign,
                     const TrainConfig& cfg);

/// Max relative error between analytic and central finite-difference
/// gradients over every parameter, taken over both the bc and fqi losses
/// on the given records: max |g_a - g_fd| / max(1e-8, |g_a| + |g_fd|).
double grad_check(const MlpModel& model, const std::vector<Experience>& batch,
                  double epsilon);

}  // namespace baffle
