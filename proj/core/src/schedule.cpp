#include "baffle/schedule.hpp"

#include "baffle/errors.hpp"
#include "baffle/rng.hpp"

namespace baffle {

std::string to_string(TriggerStrategy s) {
  switch (s) {
    case TriggerStrategy::None: return "none";
    case TriggerStrategy::Distributed: return "distributed";
    case TriggerStrategy::OneTime: return "onetime";
  }
  throw UsageError("unknown TriggerStrategy");
}

TriggerStrategy trigger_strategy_from_string(const std::string& name) {
  if (name == "none") return TriggerStrategy::None;
  if (name == "distributed") return TriggerStrategy::Distributed;
  if (name == "onetime" || name == "one_time") return TriggerStrategy::OneTime;
  throw ConfigError("unknown trigger strategy: " + name);
}

std::string TriggerSchedule::key() const {
  switch (strategy) {
    case TriggerStrategy::None: return "none";
    case TriggerStrategy::Distributed:
      return "distributed:" + std::to_string(interval);
    case TriggerStrategy::OneTime:
      return "onetime:" + std::to_string(length);
  }
  throw UsageError("unknown TriggerStrategy");
}

std::vector<int> schedule_steps(const TriggerSchedule& schedule, int horizon) {
  if (horizon < 1) throw UsageError("schedule_steps: horizon must be >= 1");
  std::vector<int> steps;
  switch (schedule.strategy) {
    case TriggerStrategy::None:
      break;
    case TriggerStrategy::Distributed: {
      if (schedule.interval < 1) {
        throw UsageError("distributed schedule needs interval >= 1");
      }
      for (int t = 0; t < horizon; t += schedule.interval) steps.push_back(t);
      break;
    }
    case TriggerStrategy::OneTime: {
      if (schedule.length < 1) {
        throw UsageError("one-time schedule needs length >= 1");
      }
      if (schedule.length > horizon) {
        throw UsageError("one-time trigger length " +
                         std::to_string(schedule.length) +
                         " exceeds horizon " + std::to_string(horizon));
      }
      SplitMix64 rng(schedule.seed);
      const int start = static_cast<int>(rng.next_below(
          static_cast<std::uint64_t>(horizon - schedule.length + 1)));
      for (int t = start; t < start + schedule.length; ++t) steps.push_back(t);
      break;
    }
  }
  return steps;
}

}  // namespace baffle
