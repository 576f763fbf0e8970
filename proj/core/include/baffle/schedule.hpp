#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace baffle {

enum class TriggerStrategy : std::uint8_t { None = 0, Distributed = 1, OneTime = 2 };

std::string to_string(TriggerStrategy s);
TriggerStrategy trigger_strategy_from_string(const std::string& name);

/// Evaluation-time perturbation of the presented trigger.
struct NoiseCfg {
  enum class Kind : std::uint8_t { GaussianOnTriggerDims = 0, UniformOnImage = 1 };
  Kind kind = Kind::GaussianOnTriggerDims;
  /// Gaussian: the per-dim std-dev is sigma * (that trigger dim's dataset
  /// IQR, carried by the TriggerSpec).
  double sigma = 0.05;
  /// Uniform: additive U[-1/8, 1/8] on every pixel of the triggered image,
  /// clamped back to [0, 1]. The half-width is fixed.
  static constexpr double kUniformHalfWidth = 0.125;
  std::uint64_t seed = 0;
};

/// When the trigger is shown during an episode.
/// none: never. distributed: every `interval` steps (t == 0 mod interval).
/// one_time: a single run of `length` consecutive steps starting at a
/// seeded uniform draw from [0, horizon - length].
struct TriggerSchedule {
  TriggerStrategy strategy = TriggerStrategy::None;
  int interval = 1;        // distributed
  int length = 1;          // one_time
  std::uint64_t seed = 0;  // one_time start draw
  std::optional<NoiseCfg> noise;

  /// Stable identifier used to match evaluations across reports, e.g.
  /// "none", "distributed:20", "onetime:5".
  std::string key() const;
};

/// The sorted trigger timesteps within [0, horizon).
std::vector<int> schedule_steps(const TriggerSchedule& schedule, int horizon);

}  // namespace baffle
