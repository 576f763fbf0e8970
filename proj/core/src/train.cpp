#include "baffle/train.hpp"

#include <cmath>
#include <limits>

#include "baffle/errors.hpp"
#include "baffle/rng.hpp"

namespace baffle {
namespace {

// One trainable unit: a record index plus its bootstrap source.
// next < 0 means no bootstrap (terminal record), mask = 1 - done.
struct Unit {
  std::uint32_t record;
  std::int32_t next;
};

struct Batch {
  Eigen::MatrixXd inputs;       // in x B
  Eigen::MatrixXd next_inputs;  // in x B (fqi/cql; zero column when masked)
  std::vector<int> actions;
  Eigen::VectorXd rewards;
  Eigen::VectorXd bootstrap_mask;
};

void fill_column(Eigen::MatrixXd& m, Eigen::Index col, const Observation& obs) {
  for (std::size_t i = 0; i < obs.size(); ++i) {
    m(static_cast<Eigen::Index>(i), col) = static_cast<double>(obs[i]);
  }
}

// Forward pass keeping layer activations for backprop.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> hidden;  // post-ReLU per hidden layer
  Eigen::MatrixXd out;                  // actions x B
};

ForwardTrace forward_trace(const MlpModel& model, const Eigen::MatrixXd& x) {
  ForwardTrace tr;
  const Eigen::MatrixXd* cur = &x;
  for (int l = 0; l + 1 < model.num_layers(); ++l) {
    tr.hidden.push_back(
        ((model.weights[l] * *cur).colwise() + model.biases[l]).cwiseMax(0.0));
    cur = &tr.hidden.back();
  }
  const int last = model.num_layers() - 1;
  tr.out = (model.weights[last] * *cur).colwise() + model.biases[last];
  return tr;
}

struct Gradients {
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;

  explicit Gradients(const MlpModel& model) {
    for (int l = 0; l < model.num_layers(); ++l) {
      weights.emplace_back(Eigen::MatrixXd::Zero(model.weights[l].rows(),
                                                 model.weights[l].cols()));
      biases.emplace_back(Eigen::VectorXd::Zero(model.biases[l].size()));
    }
  }
};

// Backprop from d(loss)/d(out) through the trace.
void backward(const MlpModel& model, const Eigen::MatrixXd& x,
              const ForwardTrace& tr, Eigen::MatrixXd delta, Gradients& grads) {
  for (int l = model.num_layers() - 1; l >= 0; --l) {
    const Eigen::MatrixXd& input = l == 0 ? x : tr.hidden[l - 1];
    grads.weights[l] = delta * input.transpose();
    grads.biases[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (model.weights[l].transpose() * delta).array() *
              (tr.hidden[l - 1].array() > 0.0).cast<double>();
    }
  }
}

// Loss + d(loss)/d(out) for one batch. Targets for fqi/cql are computed by
// the caller (constant w.r.t. the parameters being differentiated).
double loss_and_delta(Algorithm algo, double cql_alpha,
                      const ForwardTrace& tr, const std::vector<int>& actions,
                      const Eigen::VectorXd& targets, Eigen::MatrixXd& delta) {
  const Eigen::Index batch = tr.out.cols();
  const double inv_b = 1.0 / static_cast<double>(batch);
  delta = Eigen::MatrixXd::Zero(tr.out.rows(), batch);
  double loss = 0.0;

  if (algo == Algorithm::Bc) {
    for (Eigen::Index i = 0; i < batch; ++i) {
      const auto col = tr.out.col(i);
      const double m = col.maxCoeff();
      const Eigen::VectorXd ex = (col.array() - m).exp();
      const double sum = ex.sum();
      loss += -(col[actions[i]] - m - std::log(sum));
      delta.col(i) = ex / sum * inv_b;
      delta(actions[i], i) -= inv_b;
    }
    return loss * inv_b;
  }

  for (Eigen::Index i = 0; i < batch; ++i) {
    const double q = tr.out(actions[i], i);
    const double err = q - targets[i];
    loss += err * err;
    delta(actions[i], i) += 2.0 * err * inv_b;
  }
  loss *= inv_b;

  if (algo == Algorithm::Cql && cql_alpha > 0.0) {
    double penalty = 0.0;
    for (Eigen::Index i = 0; i < batch; ++i) {
      const auto col = tr.out.col(i);
      const double m = col.maxCoeff();
      const Eigen::VectorXd ex = (col.array() - m).exp();
      const double sum = ex.sum();
      penalty += m + std::log(sum) - col[actions[i]];
      delta.col(i) += cql_alpha * inv_b * (ex / sum);
      delta(actions[i], i) -= cql_alpha * inv_b;
    }
    loss += cql_alpha * penalty * inv_b;
  }
  return loss;
}

class Adam {
 public:
  Adam(const MlpModel& model, double lr) : lr_(lr), g_(model), m_(model), v_(model) {
    zero(m_);
    zero(v_);
  }

  Gradients& grads() { return g_; }

  void step(MlpModel& model) {
    ++t_;
    const double bc1 = 1.0 - std::pow(kBeta1, t_);
    const double bc2 = 1.0 - std::pow(kBeta2, t_);
    for (int l = 0; l < model.num_layers(); ++l) {
      update(model.weights[l], g_.weights[l], m_.weights[l], v_.weights[l], bc1, bc2);
      update(model.biases[l], g_.biases[l], m_.biases[l], v_.biases[l], bc1, bc2);
    }
  }

 private:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  template <typename T>
  void update(T& param, const T& grad, T& m, T& v, double bc1, double bc2) {
    m = kBeta1 * m + (1.0 - kBeta1) * grad;
    v.array() = kBeta2 * v.array() + (1.0 - kBeta2) * grad.array().square();
    param.array() -=
        lr_ * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kEps);
  }

  static void zero(Gradients& g) {
    for (auto& w : g.weights) w.setZero();
    for (auto& b : g.biases) b.setZero();
  }

  double lr_;
  std::int64_t t_ = 0;
  Gradients g_;
  Gradients m_;
  Gradients v_;
};

std::vector<Unit> build_units(const Dataset& ds, Algorithm algo) {
  std::vector<Unit> units;
  units.reserve(ds.records.size());
  const auto& recs = ds.records;
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (algo == Algorithm::Bc) {
      units.push_back({static_cast<std::uint32_t>(i), -1});
      continue;
    }
    const bool has_next = i + 1 < recs.size() &&
                          recs[i + 1].traj_id == recs[i].traj_id &&
                          recs[i + 1].t == recs[i].t + 1;
    if (recs[i].done) {
      units.push_back({static_cast<std::uint32_t>(i), -1});
    } else if (has_next) {
      units.push_back({static_cast<std::uint32_t>(i),
                       static_cast<std::int32_t>(i + 1)});
    }
    // Non-terminal records without their t+1 successor have no valid
    // Bellman target and are skipped.
  }
  return units;
}

bool has_any_adjacency(const Dataset& ds) {
  for (std::size_t i = 0; i + 1 < ds.records.size(); ++i) {
    if (ds.records[i + 1].traj_id == ds.records[i].traj_id &&
        ds.records[i + 1].t == ds.records[i].t + 1) {
      return true;
    }
  }
  return false;
}

Batch gather(const Dataset& ds, const std::vector<Unit>& units,
             const std::vector<std::size_t>& picks, double reward_sign,
             bool needs_next) {
  const Eigen::Index in = static_cast<Eigen::Index>(ds.header.obs_layout.size());
  const Eigen::Index b = static_cast<Eigen::Index>(picks.size());
  Batch batch;
  batch.inputs.resize(in, b);
  batch.actions.resize(picks.size());
  batch.rewards.resize(b);
  batch.bootstrap_mask.resize(b);
  if (needs_next) batch.next_inputs = Eigen::MatrixXd::Zero(in, b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Unit& u = units[picks[static_cast<std::size_t>(i)]];
    const Experience& rec = ds.records[u.record];
    fill_column(batch.inputs, i, rec.obs);
    batch.actions[static_cast<std::size_t>(i)] = rec.action;
    batch.rewards[i] = reward_sign * static_cast<double>(rec.reward);
    const bool bootstrap = !rec.done && u.next >= 0;
    batch.bootstrap_mask[i] = bootstrap ? 1.0 : 0.0;
    if (needs_next && bootstrap) {
      fill_column(batch.next_inputs, i, ds.records[u.next].obs);
    }
  }
  return batch;
}

TrainResult train_impl(MlpModel model, const Dataset& ds,
                       const TrainConfig& cfg, bool fresh_model) {
  cfg.validate();
  if (ds.records.empty()) throw UsageError("train: dataset is empty");
  if (model.input_layout != ds.header.obs_layout ||
      model.action_count != ds.header.action_count) {
    throw UsageError("train: model shape does not match dataset layout");
  }
  const bool value_based = cfg.algorithm != Algorithm::Bc;
  if (value_based && fresh_model && !has_any_adjacency(ds)) {
    throw UsageError(
        "train: fqi/cql need transitions but every trajectory has length 1");
  }

  const std::vector<Unit> units = build_units(ds, cfg.algorithm);
  if (units.empty()) {
    throw UsageError("train: no trainable records for this algorithm");
  }
  const double reward_sign =
      cfg.objective == Objective::Minimize ? -1.0 : 1.0;

  TrainResult result;
  result.config = cfg;
  result.loss_history.reserve(static_cast<std::size_t>(cfg.steps));

  SplitMix64 rng = derive_stream(cfg.seed, 0x6261746368ULL);
  Adam adam(model, cfg.learning_rate);
  MlpModel target = model;
  const bool full_batch =
      static_cast<std::size_t>(cfg.batch_size) >= units.size();
  std::vector<std::size_t> picks;

  for (std::int64_t step = 0; step < cfg.steps; ++step) {
    if (value_based && step % cfg.target_sync_every == 0) target = model;

    picks.clear();
    if (full_batch) {
      for (std::size_t i = 0; i < units.size(); ++i) picks.push_back(i);
    } else {
      for (int i = 0; i < cfg.batch_size; ++i) {
        picks.push_back(static_cast<std::size_t>(rng.next_below(units.size())));
      }
    }
    Batch batch = gather(ds, units, picks, reward_sign, value_based);

    Eigen::VectorXd targets;
    if (value_based) {
      const Eigen::MatrixXd next_q = target.forward_batch(batch.next_inputs);
      targets = batch.rewards.array() +
                cfg.gamma * batch.bootstrap_mask.array() *
                    next_q.colwise().maxCoeff().transpose().array();
    }

    ForwardTrace tr = forward_trace(model, batch.inputs);
    Eigen::MatrixXd delta;
    const double loss = loss_and_delta(cfg.algorithm, cfg.cql_alpha, tr,
                                       batch.actions, targets, delta);
    if (!std::isfinite(loss)) {
      throw NumericalError("train: non-finite loss " + std::to_string(loss) +
                           " at step " + std::to_string(step) + " (" +
                           to_string(cfg.algorithm) + ", lr " +
                           std::to_string(cfg.learning_rate) + ")");
    }
    result.loss_history.push_back(loss);
    backward(model, batch.inputs, tr, std::move(delta), adam.grads());
    adam.step(model);
  }

  result.final_loss =
      result.loss_history.empty() ? 0.0 : result.loss_history.back();
  result.model = std::move(model);
  return result;
}

}  // namespace

TrainResult train(const Dataset& dataset, const TrainConfig& cfg) {
  if (dataset.records.empty()) throw UsageError("train: dataset is empty");
  MlpModel model = MlpModel::make(
      dataset.header.obs_layout, dataset.header.action_count,
      MlpModel::default_hidden(dataset.header.obs_layout), cfg.seed);
  return train_impl(std::move(model), dataset, cfg, /*fresh_model=*/true);
}

TrainResult finetune(const MlpModel& model, const Dataset& benign,
                     const TrainConfig& cfg) {
  if (benign.records.empty()) throw UsageError("finetune: dataset is empty");
  if (model.input_layout != benign.header.obs_layout ||
      model.action_count != benign.header.action_count) {
    throw UsageError("finetune: model shape does not match dataset layout");
  }
  return train_impl(model, benign, cfg, /*fresh_model=*/false);
}

double grad_check(const MlpModel& model, const std::vector<Experience>& batch,
                  double epsilon) {
  if (batch.empty()) throw UsageError("grad_check: empty batch");
  if (!(epsilon > 0.0) || epsilon > 1e-2) {
    throw UsageError("grad_check: epsilon must lie in (0, 1e-2]");
  }

  const Eigen::Index in = static_cast<Eigen::Index>(model.input_layout.size());
  const Eigen::Index b = static_cast<Eigen::Index>(batch.size());
  Eigen::MatrixXd inputs(in, b);
  std::vector<int> actions(batch.size());
  Eigen::VectorXd rewards(b);
  for (Eigen::Index i = 0; i < b; ++i) {
    const Experience& rec = batch[static_cast<std::size_t>(i)];
    if (rec.obs.size() != model.input_layout.size()) {
      throw UsageError("grad_check: observation size mismatch");
    }
    if (rec.action >= model.action_count) {
      throw UsageError("grad_check: action out of range");
    }
    fill_column(inputs, i, rec.obs);
    actions[static_cast<std::size_t>(i)] = rec.action;
    rewards[i] = static_cast<double>(rec.reward);
  }

  // fqi targets from the frozen input model; constants during the check.
  Eigen::VectorXd fqi_targets =
      rewards.array() +
      0.95 * model.forward_batch(inputs).colwise().maxCoeff().transpose().array();

  double max_rel_err = 0.0;
  for (Algorithm algo : {Algorithm::Bc, Algorithm::Fqi}) {
    const Eigen::VectorXd targets =
        algo == Algorithm::Bc ? Eigen::VectorXd() : fqi_targets;
    auto loss_of = [&](const MlpModel& m) {
      ForwardTrace tr = forward_trace(m, inputs);
      Eigen::MatrixXd delta;
      return loss_and_delta(algo, 0.0, tr, actions, targets, delta);
    };

    MlpModel probe = model;
    Gradients analytic(probe);
    {
      ForwardTrace tr = forward_trace(probe, inputs);
      Eigen::MatrixXd delta;
      loss_and_delta(algo, 0.0, tr, actions, targets, delta);
      backward(probe, inputs, tr, std::move(delta), analytic);
    }

    auto check_param = [&](double& p, double g_analytic) {
      const double saved = p;
      p = saved + epsilon;
      const double up = loss_of(probe);
      p = saved - epsilon;
      const double down = loss_of(probe);
      p = saved;
      const double g_fd = (up - down) / (2.0 * epsilon);
      const double denom = std::max(1e-8, std::abs(g_analytic) + std::abs(g_fd));
      max_rel_err = std::max(max_rel_err, std::abs(g_analytic - g_fd) / denom);
    };

    for (int l = 0; l < probe.num_layers(); ++l) {
      for (Eigen::Index r = 0; r < probe.weights[l].rows(); ++r) {
        for (Eigen::Index c = 0; c < probe.weights[l].cols(); ++c) {
          check_param(probe.weights[l](r, c), analytic.weights[l](r, c));
        }
      }
      for (Eigen::Index r = 0; r < probe.biases[l].size(); ++r) {
        check_param(probe.biases[l][r], analytic.biases[l][r]);
      }
    }
  }
  return max_rel_err;
}

}  // namespace baffle
