#pragma once

#include <cstdint>
#include <string>

#include "baffle/obs.hpp"

namespace baffle {

enum class EnvId : std::uint8_t { ChainWalk = 0, PatchGrid = 1 };

std::string to_string(EnvId id);
EnvId env_id_from_string(const std::string& name);

/// Configuration of one of the two built-in deterministic environments.
///
/// ChainWalk: positions 0..n_states-1 on a line, terminals at both ends
/// (enter 0 -> reward -1, enter n-1 -> reward +1), every other step -0.01,
/// actions {0: left, 1: right}, start at the center (n_states must be odd).
/// Observation is a 5-vector:
///   [pos/(n-1), (n-1-pos)/(n-1), 1.0,
///    sin(2*pi*t/max_steps)*0.5+0.5, cos(2*pi*t/max_steps)*0.5+0.5]
/// Dims 0-1 are position channels in [0,1], dim 2 is a constant bias
/// channel, dims 3-4 are auxiliary time channels in [0,1] that never depend
/// on actions.
///
/// PatchGrid: grid_h x grid_w cells, start (0,0), goal (grid_h-1, grid_w-1)
/// (enter goal -> reward +1, terminal), every other step -0.01, actions
/// {0: up, 1: down, 2: left, 3: right} with moves clipped at the borders.
/// Observation is a (2*grid_h) x (2*grid_w) x 1 image, all pixels 0.1
/// except the agent's 2x2 cell block which is 0.9.
struct EnvSpec {
  EnvId id = EnvId::ChainWalk;
  int n_states = 11;  // ChainWalk; must be odd and >= 3
  int grid_w = 6;     // PatchGrid
  int grid_h = 6;
  int max_episode_steps = 100;

  ObsLayout obs_layout() const;
  int action_count() const;
  /// Number of canonical discrete states (positions or cells), terminals
  /// included. The auxiliary ChainWalk time channels are action-irrelevant,
  /// so both environments are tabular in this index.
  int canonical_state_count() const;

  /// Throws ConfigError on invalid parameters.
  void validate() const;
};

EnvSpec chain_walk_spec(int n_states, int max_episode_steps = 100);
EnvSpec patch_grid_spec(int max_episode_steps = 60);

struct StepResult {
  Observation obs;
  double reward = 0.0;
  bool done = false;
};

/// Single-owner mutable environment instance. All transitions are pure
/// functions of (state, action); the seed only tags the instance so that
/// collection bookkeeping stays reproducible.
class Env {
 public:
  Env(EnvSpec spec, std::uint64_t seed);

  /// Restarts the episode and returns the initial observation.
  const Observation& reset();
  /// Advances one step. Throws UsageError after done or on a bad action.
  StepResult step(int action);

  const EnvSpec& spec() const { return spec_; }
  bool done() const { return done_; }
  int timestep() const { return t_; }
  std::uint64_t seed() const { return seed_; }
  /// Canonical discrete state index (ChainWalk position, or row*grid_w+col).
  int state_index() const;

 private:
  Observation make_obs() const;

  EnvSpec spec_;
  std::uint64_t seed_;
  int pos_ = 0;  // ChainWalk position
  int row_ = 0;  // PatchGrid cell
  int col_ = 0;
  int t_ = 0;
  bool done_ = false;
  Observation obs_;
};

}  // namespace baffle
