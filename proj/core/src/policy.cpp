#include "baffle/policy.hpp"

#include <cmath>

#include "baffle/errors.hpp"

namespace baffle {

TabularGreedyPolicy::TabularGreedyPolicy(EnvSpec spec, std::vector<int> actions)
    : spec_(spec), actions_(std::move(actions)) {
  spec_.validate();
  if (static_cast<int>(actions_.size()) != spec_.canonical_state_count()) {
    throw UsageError("action table size does not match state count");
  }
}

int TabularGreedyPolicy::decode_state(const Observation& obs) const {
  const ObsLayout layout = spec_.obs_layout();
  if (obs.size() != layout.size()) {
    throw UsageError("observation size does not match env layout");
  }
  if (spec_.id == EnvId::ChainWalk) {
    const int pos =
        static_cast<int>(std::lround(obs[0] * (spec_.n_states - 1)));
    if (pos < 0 || pos >= spec_.n_states) {
      throw UsageError("observation does not decode to a ChainWalk position");
    }
    return pos;
  }
  const int w = 2 * spec_.grid_w;
  for (int r = 0; r < spec_.grid_h; ++r) {
    for (int c = 0; c < spec_.grid_w; ++c) {
      bool agent = true;
      for (int dr = 0; dr < 2 && agent; ++dr) {
        for (int dc = 0; dc < 2 && agent; ++dc) {
          agent = obs[static_cast<std::size_t>(2 * r + dr) * w + 2 * c + dc] ==
                  0.9f;
        }
      }
      if (agent) return r * spec_.grid_w + c;
    }
  }
  throw UsageError("observation contains no agent block");
}

int TabularGreedyPolicy::act(const Observation& obs) const {
  return actions_[static_cast<std::size_t>(decode_state(obs))];
}

std::unique_ptr<TabularGreedyPolicy> make_tabular_policy(const EnvSpec& spec,
                                                         Objective objective,
                                                         double gamma) {
  TabularSolution sol = tabular_policy(spec, objective, gamma);
  return std::make_unique<TabularGreedyPolicy>(spec, std::move(sol.action));
}

}  // namespace baffle
