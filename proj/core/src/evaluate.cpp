#include "baffle/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "baffle/errors.hpp"
#include "baffle/parallel.hpp"
#include "baffle/rng.hpp"

namespace baffle {
namespace {

Observation perturb(const Observation& triggered, const TriggerSpec& trigger,
                    const NoiseCfg& noise, SplitMix64& rng) {
  Observation out = triggered;
  if (noise.kind == NoiseCfg::Kind::GaussianOnTriggerDims) {
    if (trigger.kind != TriggerKind::VectorDims) {
      throw UsageError("gaussian trigger noise needs a vector trigger");
    }
    for (const TriggerSpec::DimValue& dv : trigger.dims) {
      out[dv.index] += static_cast<float>(noise.sigma * dv.iqr *
                                          rng.next_gaussian());
    }
    return out;
  }
  if (trigger.layout.kind != ObsKind::Image) {
    throw UsageError("uniform image noise needs an image trigger");
  }
  for (float& v : out) {
    const double u =
        (2.0 * rng.next_double() - 1.0) * NoiseCfg::kUniformHalfWidth;
    v = std::clamp(static_cast<float>(v + u), 0.0f, 1.0f);
  }
  return out;
}

}  // namespace

EvalResult rollout(const EnvSpec& spec, const Policy& policy, int n_episodes,
                   const TriggerSchedule& schedule, const TriggerSpec* trigger,
                   std::uint64_t seed) {
  spec.validate();
  if (n_episodes < 1) throw UsageError("rollout: n_episodes must be >= 1");
  if (schedule.strategy != TriggerStrategy::None) {
    if (trigger == nullptr) {
      throw UsageError("rollout: schedule requires a trigger");
    }
    if (trigger->layout != spec.obs_layout()) {
      throw UsageError("rollout: trigger layout does not match env");
    }
  }

  EvalResult result;
  result.schedule = schedule;
  result.seed = seed;
  result.episodes = n_episodes;
  result.returns.assign(static_cast<std::size_t>(n_episodes), 0.0);
  result.trigger_steps_per_episode.assign(static_cast<std::size_t>(n_episodes), 0);

  parallel_for(static_cast<std::size_t>(n_episodes), [&](std::size_t e) {
    // Per-episode schedule: the one-time start is drawn per episode.
    TriggerSchedule ep_schedule = schedule;
    ep_schedule.seed = mix64(schedule.seed ^ e);
    const std::vector<int> steps =
        schedule_steps(ep_schedule, spec.max_episode_steps);
    SplitMix64 noise_rng = derive_stream(
        schedule.noise ? schedule.noise->seed : schedule.seed, e ^ 0x6e6f697365ULL);

    Env env(spec, seed);
    Observation obs = env.reset();
    double ret = 0.0;
    int presented = 0;
    std::size_t next_step = 0;
    while (!env.done()) {
      const int t = env.timestep();
      while (next_step < steps.size() && steps[next_step] < t) ++next_step;
      int action;
      if (next_step < steps.size() && steps[next_step] == t) {
        ++presented;
        Observation seen = apply_trigger(obs, *trigger);
        if (schedule.noise) {
          seen = perturb(seen, *trigger, *schedule.noise, noise_rng);
        }
        action = policy.act(seen);
      } else {
        action = policy.act(obs);
      }
      StepResult step = env.step(action);
      ret += step.reward;
      obs = std::move(step.obs);
    }
    result.returns[e] = ret;
    result.trigger_steps_per_episode[e] = presented;
  });

  double sum = 0.0;
  for (double r : result.returns) sum += r;
  result.mean_return = sum / static_cast<double>(n_episodes);
  return result;
}

double normalize_return(double a, const NormalizationRef& ref) {
  if (!(ref.max_return > ref.min_return)) {
    throw UsageError("normalization reference needs max > min");
  }
  return (a - ref.min_return) / (ref.max_return - ref.min_return);
}

double relative_change(double a, double b, const NormalizationRef& ref) {
  const double an = normalize_return(a, ref);
  const double bn = normalize_return(b, ref);
  if (bn == 0.0) {
    throw UsageError("relative_change undefined: normalized baseline is 0");
  }
  return 100.0 * (an - bn) / bn;
}

void save_eval(const EvalResult& result, const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["episodes"] = result.episodes;
  j["mean_return"] = result.mean_return;
  j["returns"] = result.returns;
  j["trigger_steps_per_episode"] = result.trigger_steps_per_episode;
  j["seed"] = result.seed;
  nlohmann::ordered_json sched;
  sched["strategy"] = to_string(result.schedule.strategy);
  sched["interval"] = result.schedule.interval;
  sched["length"] = result.schedule.length;
  sched["seed"] = result.schedule.seed;
  if (result.schedule.noise) {
    nlohmann::ordered_json noise;
    noise["kind"] = result.schedule.noise->kind ==
                            NoiseCfg::Kind::GaussianOnTriggerDims
                        ? "gaussian"
                        : "uniform";
    noise["sigma"] = result.schedule.noise->sigma;
    noise["seed"] = result.schedule.noise->seed;
    sched["noise"] = noise;
  }
  j["schedule"] = sched;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write eval: " + path.string());
  out << j.dump(2) << '\n';
}

EvalResult load_eval(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open eval: " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    EvalResult r;
    r.episodes = j.at("episodes").get<int>();
    r.mean_return = j.at("mean_return").get<double>();
    r.returns = j.at("returns").get<std::vector<double>>();
    r.trigger_steps_per_episode =
        j.at("trigger_steps_per_episode").get<std::vector<int>>();
    r.seed = j.at("seed").get<std::uint64_t>();
    const auto& sched = j.at("schedule");
    r.schedule.strategy =
        trigger_strategy_from_string(sched.at("strategy").get<std::string>());
    r.schedule.interval = sched.at("interval").get<int>();
    r.schedule.length = sched.at("length").get<int>();
    r.schedule.seed = sched.at("seed").get<std::uint64_t>();
    if (sched.contains("noise")) {
      NoiseCfg noise;
      noise.kind = sched.at("noise").at("kind").get<std::string>() == "gaussian"
                       ? NoiseCfg::Kind::GaussianOnTriggerDims
                       : NoiseCfg::Kind::UniformOnImage;
      noise.sigma = sched.at("noise").at("sigma").get<double>();
      noise.seed = sched.at("noise").at("seed").get<std::uint64_t>();
      r.schedule.noise = noise;
    }
    return r;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad eval json " + path.string() + ": " + e.what());
  }
}

}  // namespace baffle
