#include "baffle/env.hpp"

#include <cmath>
#include <numbers>

#include "baffle/errors.hpp"

namespace baffle {

std::string to_string(EnvId id) {
  switch (id) {
    case EnvId::ChainWalk: return "chainwalk";
    case EnvId::PatchGrid: return "patchgrid";
  }
  throw UsageError("unknown EnvId");
}

EnvId env_id_from_string(const std::string& name) {
  if (name == "chainwalk") return EnvId::ChainWalk;
  if (name == "patchgrid") return EnvId::PatchGrid;
  throw ConfigError("unknown environment id: " + name);
}

ObsLayout EnvSpec::obs_layout() const {
  if (id == EnvId::ChainWalk) return ObsLayout::vector(5);
  return ObsLayout::image(static_cast<std::uint32_t>(2 * grid_h),
                          static_cast<std::uint32_t>(2 * grid_w), 1);
}

int EnvSpec::action_count() const {
  return id == EnvId::ChainWalk ? 2 : 4;
}

int EnvSpec::canonical_state_count() const {
  return id == EnvId::ChainWalk ? n_states : grid_w * grid_h;
}

void EnvSpec::validate() const {
  if (max_episode_steps < 1) {
    throw ConfigError("max_episode_steps must be >= 1");
  }
  if (max_episode_steps > 100000) {
    throw ConfigError("max_episode_steps too large (cap 100000)");
  }
  if (id == EnvId::ChainWalk) {
    if (n_states < 3) throw ConfigError("ChainWalk needs n_states >= 3");
    if (n_states % 2 == 0) {
      throw ConfigError("ChainWalk n_states must be odd (symmetric start)");
    }
  } else {
    if (grid_w < 2 || grid_h < 2) {
      throw ConfigError("PatchGrid needs grid dims >= 2");
    }
  }
}

EnvSpec chain_walk_spec(int n_states, int max_episode_steps) {
  EnvSpec spec;
  spec.id = EnvId::ChainWalk;
  spec.n_states = n_states;
  spec.max_episode_steps = max_episode_steps;
  spec.validate();
  return spec;
}

EnvSpec patch_grid_spec(int max_episode_steps) {
  EnvSpec spec;
  spec.id = EnvId::PatchGrid;
  spec.grid_w = 6;
  spec.grid_h = 6;
  spec.max_episode_steps = max_episode_steps;
  spec.validate();
  return spec;
}

Env::Env(EnvSpec spec, std::uint64_t seed) : spec_(spec), seed_(seed) {
  spec_.validate();
  reset();
}

const Observation& Env::reset() {
  t_ = 0;
  done_ = false;
  if (spec_.id == EnvId::ChainWalk) {
    pos_ = (spec_.n_states - 1) / 2;
  } else {
    row_ = 0;
    col_ = 0;
  }
  obs_ = make_obs();
  return obs_;
}

int Env::state_index() const {
  return spec_.id == EnvId::ChainWalk ? pos_ : row_ * spec_.grid_w + col_;
}

Observation Env::make_obs() const {
  if (spec_.id == EnvId::ChainWalk) {
    const double n1 = spec_.n_states - 1;
    const double phase =
        2.0 * std::numbers::pi * t_ / spec_.max_episode_steps;
    Observation obs(5);
    obs[0] = static_cast<float>(pos_ / n1);
    obs[1] = static_cast<float>((n1 - pos_) / n1);
    obs[2] = 1.0f;
    obs[3] = static_cast<float>(std::sin(phase) * 0.5 + 0.5);
    obs[4] = static_cast<float>(std::cos(phase) * 0.5 + 0.5);
    return obs;
  }
  const int h = 2 * spec_.grid_h;
  const int w = 2 * spec_.grid_w;
  Observation obs(static_cast<std::size_t>(h) * w, 0.1f);
  for (int dr = 0; dr < 2; ++dr) {
    for (int dc = 0; dc < 2; ++dc) {
      obs[static_cast<std::size_t>(2 * row_ + dr) * w + (2 * col_ + dc)] = 0.9f;
    }
  }
  return obs;
}

StepResult Env::step(int action) {
  if (done_) {
    throw UsageError("Env::step called after episode end; reset first");
  }
  if (action < 0 || action >= spec_.action_count()) {
    throw UsageError("action index " + std::to_string(action) +
                     " out of range [0, " +
                     std::to_string(spec_.action_count()) + ")");
  }

  double reward;
  bool terminal = false;
  if (spec_.id == EnvId::ChainWalk) {
    pos_ += (action == 0 ? -1 : 1);
    if (pos_ == 0) {
      reward = -1.0;
      terminal = true;
    } else if (pos_ == spec_.n_states - 1) {
      reward = 1.0;
      terminal = true;
    } else {
      reward = -0.01;
    }
  } else {
    switch (action) {
      case 0: row_ = std::max(0, row_ - 1); break;
      case 1: row_ = std::min(spec_.grid_h - 1, row_ + 1); break;
      case 2: col_ = std::max(0, col_ - 1); break;
      default: col_ = std::min(spec_.grid_w - 1, col_ + 1); break;
    }
    if (row_ == spec_.grid_h - 1 && col_ == spec_.grid_w - 1) {
      reward = 1.0;
      terminal = true;
    } else {
      reward = -0.01;
    }
  }

  ++t_;
  done_ = terminal || t_ >= spec_.max_episode_steps;
  obs_ = make_obs();
  return StepResult{obs_, reward, done_};
}

}  // namespace baffle
