#pragma once

#include <optional>
#include <string>

#include "baffle/trigger.hpp"

namespace baffle {

enum class PoisonMode : std::uint8_t { Replace = 0, Add = 1 };

std::string to_string(PoisonMode mode);
PoisonMode poison_mode_from_string(const std::string& name);

struct PoisonConfig {
  double rate = 0.1;
  PoisonMode mode = PoisonMode::Replace;
  /// Manipulated reward. Unset means "reward quantile at r_high_quantile
  /// of the clean dataset" (default the 3/4 quantile).
  std::optional<double> r_high;
  double r_high_quantile = 0.75;
  std::uint64_t seed = 0;
  /// Recorded in the manifest; typically the SHA-256 of the weak-policy
  /// checkpoint file.
  std::string weak_policy_digest;
};

/// Ground truth of one poisoning run, used to score detection defenses.
struct PoisonManifest {
  std::vector<std::uint64_t> indices;  // sorted output indices
  double rate = 0.0;
  PoisonMode mode = PoisonMode::Replace;
  double r_high = 0.0;
  TriggerSpec trigger;
  std::string weak_policy_digest;
  std::uint64_t seed = 0;
};

struct PoisonResult {
  Dataset dataset;
  PoisonManifest manifest;
};

/// Builds the poisoned dataset: draws ceil(rate * N) record indices
/// uniformly without replacement, and for each selected clean record
/// <s, a, r> emits <apply_trigger(s), weak.act(s), r_high> — the weak
/// action is taken on the clean state, before the trigger is added.
/// Replace mode swaps records in place (size N); add mode appends the
/// misleading records as fresh single-step trajectories (size N + m,
/// done preserved from the source record).
PoisonResult poison_dataset(const Dataset& clean, const Policy& weak_policy,
                            const TriggerSpec& trigger,
                            const PoisonConfig& cfg);

/// The clean records displaced by a replace-mode run, with their original
/// trajectory coordinates: the "benign dataset" used by the fine-tuning
/// defense.
Dataset benign_split(const Dataset& clean, const PoisonManifest& manifest);

void save_poison_manifest(const PoisonManifest& manifest,
                          const std::filesystem::path& path);
PoisonManifest load_poison_manifest(const std::filesystem::path& path);

}  // namespace baffle
