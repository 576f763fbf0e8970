#pragma once

#include <filesystem>

#include "baffle/env.hpp"
#include "baffle/policy.hpp"
#include "baffle/schedule.hpp"
#include "baffle/trigger.hpp"

namespace baffle {

struct EvalResult {
  std::vector<double> returns;  // per episode, undiscounted reward sums
  double mean_return = 0.0;
  int episodes = 0;
  TriggerSchedule schedule;
  std::vector<int> trigger_steps_per_episode;
  std::uint64_t seed = 0;
};

/// Runs n_episodes greedy episodes. At every scheduled timestep the agent
/// observes apply_trigger(obs) (plus schedule noise) while the environment
/// itself keeps evolving from the true state. Returns are undiscounted
/// sums. Episode e derives its one-time-start and noise streams from
/// mix64(seed XOR e), so results are independent of execution order;
/// honors BAFFLE_THREADS.
/// `trigger` may be null only for the none strategy.
EvalResult rollout(const EnvSpec& spec, const Policy& policy, int n_episodes,
                   const TriggerSchedule& schedule, const TriggerSpec* trigger,
                   std::uint64_t seed);

/// Max-min normalization scale: max is the best clean agent's mean return,
/// min the weak agent's.
struct NormalizationRef {
  double max_return = 0.0;
  double min_return = 0.0;
};

/// (a - min) / (max - min), not clamped. UsageError unless max > min.
double normalize_return(double a, const NormalizationRef& ref);

/// Signed percent change of the normalized returns, 100 * (a' - b') / b',
/// with b the normal-scenario return and a the triggered one.
/// UsageError when b' == 0.
double relative_change(double a, double b, const NormalizationRef& ref);

void save_eval(const EvalResult& result, const std::filesystem::path& path);
EvalResult load_eval(const std::filesystem::path& path);

}  // namespace baffle
