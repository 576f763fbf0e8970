#pragma once

#include <memory>
#include <vector>

#include "baffle/env.hpp"
#include "baffle/tabular.hpp"

namespace baffle {

/// Deterministic observation -> action map. act() must be pure.
class Policy {
 public:
  virtual ~Policy() = default;
  virtual int act(const Observation& obs) const = 0;
};

/// Greedy policy backed by a tabular action table. Decodes the canonical
/// state from the observation (ChainWalk: position channel; PatchGrid:
/// locating the 0.9 agent block), so it must only see untriggered
/// observations.
class TabularGreedyPolicy : public Policy {
 public:
  TabularGreedyPolicy(EnvSpec spec, std::vector<int> actions);
  int act(const Observation& obs) const override;

  /// Decodes the canonical state index; UsageError on malformed input.
  int decode_state(const Observation& obs) const;

 private:
  EnvSpec spec_;
  std::vector<int> actions_;
};

std::unique_ptr<TabularGreedyPolicy> make_tabular_policy(const EnvSpec& spec,
                                                         Objective objective,
                                                         double gamma = 1.0);

}  // namespace baffle
