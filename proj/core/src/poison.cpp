#include "baffle/poison.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

#include <nlohmann/json.hpp>

#include "baffle/errors.hpp"
#include "baffle/rng.hpp"

namespace baffle {

std::string to_string(PoisonMode mode) {
  return mode == PoisonMode::Replace ? "replace" : "add";
}

PoisonMode poison_mode_from_string(const std::string& name) {
  if (name == "replace") return PoisonMode::Replace;
  if (name == "add") return PoisonMode::Add;
  throw ConfigError("unknown poison mode: " + name);
}

namespace {

std::size_t poison_count(double rate, std::size_t n) {
  // ceil(rate * n) with a guard against 0.1 * 1000 = 100.0000...01.
  return static_cast<std::size_t>(
      std::ceil(rate * static_cast<double>(n) - 1e-9));
}

std::vector<std::size_t> sample_without_replacement(std::size_t n,
                                                    std::size_t m,
                                                    std::uint64_t seed) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  SplitMix64 rng = derive_stream(seed, 0x73656c656374ULL);
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng.next_below(n - i);
    std::swap(all[i], all[j]);
  }
  all.resize(m);
  std::sort(all.begin(), all.end());
  return all;
}

}  // namespace

PoisonResult poison_dataset(const Dataset& clean, const Policy& weak_policy,
                            const TriggerSpec& trigger,
                            const PoisonConfig& cfg) {
  if (!(cfg.rate >= 0.0) || cfg.rate > 1.0) {
    throw UsageError("poison rate must lie in [0, 1]");
  }
  if (trigger.layout != clean.header.obs_layout) {
    throw UsageError("trigger layout does not match dataset");
  }
  const std::size_t n = clean.records.size();
  if (cfg.rate > 0.0 && n == 0) {
    throw UsageError("cannot poison an empty dataset");
  }

  double r_high;
  if (cfg.r_high.has_value()) {
    r_high = *cfg.r_high;
  } else {
    r_high = reward_quantile(clean, cfg.r_high_quantile);
  }

  const std::size_t m = poison_count(cfg.rate, n);
  const std::vector<std::size_t> selected =
      sample_without_replacement(n, m, cfg.seed);

  PoisonResult result;
  result.dataset = clean;
  result.manifest.rate = cfg.rate;
  result.manifest.mode = cfg.mode;
  result.manifest.r_high = r_high;
  result.manifest.trigger = trigger;
  result.manifest.weak_policy_digest = cfg.weak_policy_digest;
  result.manifest.seed = cfg.seed;

  std::uint32_t next_traj = 0;
  if (cfg.mode == PoisonMode::Add) {
    for (const Experience& rec : clean.records) {
      next_traj = std::max(next_traj, rec.traj_id + 1);
    }
  }

  for (std::size_t k = 0; k < selected.size(); ++k) {
    const std::size_t i = selected[k];
    const Experience& src = clean.records[i];
    // Weak action from the clean state; trigger goes on afterwards.
    const int bad_action = weak_policy.act(src.obs);
    Experience poisoned;
    poisoned.obs = apply_trigger(src.obs, trigger);
    poisoned.action = static_cast<std::uint16_t>(bad_action);
    poisoned.reward = static_cast<float>(r_high);
    poisoned.done = src.done;
    if (cfg.mode == PoisonMode::Replace) {
      poisoned.traj_id = src.traj_id;
      poisoned.t = src.t;
      result.dataset.records[i] = std::move(poisoned);
      result.manifest.indices.push_back(i);
    } else {
      poisoned.traj_id = next_traj + static_cast<std::uint32_t>(k);
      poisoned.t = 0;
      result.manifest.indices.push_back(result.dataset.records.size());
      result.dataset.records.push_back(std::move(poisoned));
    }
  }
  return result;
}

Dataset benign_split(const Dataset& clean, const PoisonManifest& manifest) {
  if (manifest.mode != PoisonMode::Replace) {
    throw UsageError("benign_split is defined for replace-mode manifests");
  }
  Dataset out;
  out.header = clean.header;
  out.records.reserve(manifest.indices.size());
  for (std::uint64_t idx : manifest.indices) {
    if (idx >= clean.records.size()) {
      throw UsageError("manifest index " + std::to_string(idx) +
                       " outside the clean dataset");
    }
    out.records.push_back(clean.records[static_cast<std::size_t>(idx)]);
  }
  return out;
}

void save_poison_manifest(const PoisonManifest& manifest,
                          const std::filesystem::path& path) {
  nlohmann::ordered_json j;
  j["indices"] = manifest.indices;
  j["rate"] = manifest.rate;
  j["mode"] = to_string(manifest.mode);
  j["r_high"] = manifest.r_high;
  j["trigger"] = nlohmann::json::parse(trigger_to_json(manifest.trigger));
  j["weak_policy_digest"] = manifest.weak_policy_digest;
  j["seed"] = manifest.seed;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write poison manifest: " + path.string());
  out << j.dump(2) << '\n';
}

PoisonManifest load_poison_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open poison manifest: " + path.string());
  try {
    nlohmann::json j;
    in >> j;
    PoisonManifest m;
    m.indices = j.at("indices").get<std::vector<std::uint64_t>>();
    m.rate = j.at("rate").get<double>();
    m.mode = poison_mode_from_string(j.at("mode").get<std::string>());
    m.r_high = j.at("r_high").get<double>();
    m.trigger = trigger_from_json(j.at("trigger").dump());
    m.weak_policy_digest = j.at("weak_policy_digest").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("bad poison manifest " + path.string() + ": " + e.what());
  }
}

}  // namespace baffle
