#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "baffle/env.hpp"
#include "baffle/policy.hpp"

namespace baffle {

/// One <state, action, reward, done> record with its trajectory coordinates.
struct Experience {
  std::uint32_t traj_id = 0;
  std::uint32_t t = 0;
  Observation obs;
  std::uint16_t action = 0;
  float reward = 0.0f;
  bool done = false;

  bool operator==(const Experience&) const = default;
};

struct DatasetHeader {
  std::uint16_t version = 1;
  EnvId env_id = EnvId::ChainWalk;
  ObsLayout obs_layout;
  std::uint16_t action_count = 0;
  std::uint64_t collection_seed = 0;

  bool operator==(const DatasetHeader&) const = default;
};

/// Offline experience store. Immutable after construction by convention;
/// values are safe to share read-only across threads.
struct Dataset {
  DatasetHeader header;
  std::vector<Experience> records;

  bool operator==(const Dataset&) const = default;
  std::size_t size() const { return records.size(); }
};

/// Rolls out `n_episodes` episodes of epsilon-greedy exploration around
/// `policy` (per step: with probability epsilon a uniform action, else the
/// policy action). Episode e uses the stream seeded with
/// mix64(seed XOR e), so records are independent of execution order;
/// output records are ordered by episode index, trajectory ids are episode
/// indices. Honors BAFFLE_THREADS.
Dataset collect(const EnvSpec& spec, const Policy& policy, int n_episodes,
                double epsilon, std::uint64_t seed);

/// Bit-exact little-endian dataset file, magic "BFL1". See docs/config.md
/// for the full layout. load(save(d)) == d including float bits.
void save(const Dataset& dataset, const std::filesystem::path& path);
Dataset load(const std::filesystem::path& path);

/// Human-readable JSON-lines export (one record object per line). Not part
/// of the hashed interchange format.
void export_jsonl(const Dataset& dataset, const std::filesystem::path& path);

/// Linear-interpolation quantile of the reward column, q in [0, 1]:
/// with sorted rewards r_0..r_{N-1} and h = (N-1)q, returns
/// r_{floor(h)} + (h - floor(h)) * (r_{floor(h)+1} - r_{floor(h)}).
double reward_quantile(const Dataset& dataset, double q);

/// Same interpolation applied to one observation dimension.
double obs_dim_quantile(const Dataset& dataset, std::size_t dim, double q);

}  // namespace baffle
