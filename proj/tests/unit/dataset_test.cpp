#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "baffle/dataset.hpp"
#include "baffle/errors.hpp"
#include "baffle/hashing.hpp"
#include "support/oracles.hpp"

using namespace baffle;
namespace fs = std::filesystem;

namespace {

fs::path temp_file(const std::string& name) {
  return fs::temp_directory_path() / ("baffle_dataset_test_" + name);
}

std::vector<char> read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

Dataset reward_dataset(const std::vector<float>& rewards) {
  Dataset ds;
  ds.header.obs_layout = ObsLayout::vector(2);
  ds.header.action_count = 2;
  for (std::size_t i = 0; i < rewards.size(); ++i) {
    Experience rec;
    rec.traj_id = static_cast<std::uint32_t>(i);
    rec.t = 0;
    rec.obs = {0.0f, 1.0f};
    rec.reward = rewards[i];
    rec.done = true;
    ds.records.push_back(rec);
  }
  return ds;
}

}  // namespace

TEST_CASE("collect with the optimal policy and epsilon 0 takes the short path") {
  const EnvSpec spec = chain_walk_spec(5, 100);
  const auto policy = make_tabular_policy(spec, Objective::Maximize, 1.0);
  Dataset ds = collect(spec, *policy, 1, 0.0, 42);
  REQUIRE(ds.size() == 2);
  CHECK(ds.records.back().reward == doctest::Approx(1.0));
  CHECK(ds.records.back().done);
  CHECK(ds.records.front().t == 0);
  CHECK(ds.records.back().t == 1);
}

TEST_CASE("epsilon 1 action marginals are uniform within 3 sigma") {
  const EnvSpec spec = patch_grid_spec(20);
  const auto policy = make_tabular_policy(spec, Objective::Maximize, 1.0);
  Dataset ds = collect(spec, *policy, 600, 1.0, 9);
  std::array<std::size_t, 4> counts{};
  for (const Experience& rec : ds.records) counts[rec.action]++;
  const double n = static_cast<double>(ds.size());
  const double p = 0.25;
  const double sigma = std::sqrt(n * p * (1 - p));
  for (std::size_t c : counts) {
    CHECK(std::abs(static_cast<double>(c) - n * p) <= 3.0 * sigma);
  }
}

TEST_CASE("collect twice gives byte-identical files") {
  const EnvSpec spec = chain_walk_spec(7, 30);
  const auto policy = make_tabular_policy(spec, Objective::Maximize, 1.0);
  const auto p1 = temp_file("c1.bfl");
  const auto p2 = temp_file("c2.bfl");
  save(collect(spec, *policy, 20, 0.3, 7), p1);
  save(collect(spec, *policy, 20, 0.3, 7), p2);
  CHECK(read_bytes(p1) == read_bytes(p2));
  CHECK(sha256_file(p1) == sha256_file(p2));
}

TEST_CASE("collect with epsilon 0 repeats the deterministic trajectory") {
  const EnvSpec spec = chain_walk_spec(9, 50);
  const auto policy = make_tabular_policy(spec, Objective::Maximize, 1.0);
  Dataset ds = collect(spec, *policy, 3, 0.0, 1);
  // Same length and same content per episode.
  std::vector<std::vector<Experience>> trajs(3);
  for (const Experience& rec : ds.records) {
    trajs[rec.traj_id].push_back(rec);
  }
  for (std::size_t e = 1; e < 3; ++e) {
    REQUIRE(trajs[e].size() == trajs[0].size());
    for (std::size_t i = 0; i < trajs[0].size(); ++i) {
      CHECK(trajs[e][i].obs == trajs[0][i].obs);
      CHECK(trajs[e][i].action == trajs[0][i].action);
    }
  }
}

TEST_CASE("save/load round trip is exact") {
  const EnvSpec spec = chain_walk_spec(5, 40);
  const auto policy = make_tabular_policy(spec, Objective::Maximize, 1.0);
  Dataset ds = collect(spec, *policy, 10, 0.5, 3);
  const auto path = temp_file("roundtrip.bfl");
  save(ds, path);
  CHECK(load(path) == ds);
}

TEST_CASE("empty dataset round trips") {
  Dataset empty;
  empty.header.obs_layout = ObsLayout::vector(5);
  empty.header.action_count = 2;
  const auto path = temp_file("empty.bfl");
  save(empty, path);
  Dataset back = load(path);
  CHECK(back.size() == 0);
  CHECK(back == empty);
}

TEST_CASE("corrupt files raise format errors with byte offsets") {
  const EnvSpec spec = chain_walk_spec(5, 40);
  const auto policy = make_tabular_policy(spec, Objective::Maximize, 1.0);
  const auto path = temp_file("corrupt.bfl");
  save(collect(spec, *policy, 2, 0.0, 5), path);

  SUBCASE("bad magic") {
    auto bytes = read_bytes(path);
    bytes[0] = 'X';
    std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_WITH_AS(load(path),
                         doctest::Contains("bad magic"), FormatError);
  }
  SUBCASE("bad version") {
    auto bytes = read_bytes(path);
    bytes[4] = 9;
    std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_AS(load(path), FormatError);
  }
  SUBCASE("truncation") {
    auto bytes = read_bytes(path);
    bytes.resize(bytes.size() - 3);
    std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_WITH_AS(load(path), doctest::Contains("truncated"),
                         FormatError);
  }
  SUBCASE("trailing bytes") {
    auto bytes = read_bytes(path);
    bytes.push_back(0);
    std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
    CHECK_THROWS_WITH_AS(load(path), doctest::Contains("trailing"),
                         FormatError);
  }
}

TEST_CASE("hash manifest verifies and catches corruption") {
  const EnvSpec spec = chain_walk_spec(5, 40);
  const auto policy = make_tabular_policy(spec, Objective::Maximize, 1.0);
  const auto path = temp_file("hash.bfl");
  save(collect(spec, *policy, 3, 0.2, 11), path);
  const HashManifest manifest = hash_manifest(path);
  CHECK(verify(path, manifest));

  auto bytes = read_bytes(path);
  bytes[bytes.size() / 2] ^= 0x01;
  std::ofstream(path, std::ios::binary).write(bytes.data(), bytes.size());
  CHECK_FALSE(verify(path, manifest));
}

TEST_CASE("manifest json round trips") {
  const auto data = temp_file("mjson.bfl");
  save(reward_dataset({1.0f, 2.0f}), data);
  const auto mpath = temp_file("mjson.json");
  const HashManifest manifest = hash_manifest(data);
  save_hash_manifest(manifest, mpath);
  CHECK(load_hash_manifest(mpath) == manifest);
}

TEST_CASE("sha-256 of empty input matches the standard vector") {
  CHECK(sha256_hex(nullptr, 0) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}

TEST_CASE("reward quantile matches the interpolation formula") {
  CHECK(reward_quantile(reward_dataset({0, 1, 2, 3}), 0.75) ==
        doctest::Approx(2.25));
  CHECK(reward_quantile(reward_dataset({5, 5, 5, 5, 5}), 0.3) ==
        doctest::Approx(5.0));
  CHECK(reward_quantile(reward_dataset({-1.0f, -0.01f, -0.01f, 1.0f}), 0.75) ==
        doctest::Approx(0.2425));
}

TEST_CASE("reward quantile is permutation invariant and matches the oracle") {
  std::vector<float> base = {0.0f, 1.0f, 2.0f, 3.0f};
  std::vector<float> perm = base;
  std::sort(perm.begin(), perm.end());
  do {
    for (double q : {0.0, 0.25, 0.5, 0.75, 1.0}) {
      const double expected = test::quantile_by_definition(
          std::vector<double>(perm.begin(), perm.end()), q);
      CHECK(reward_quantile(reward_dataset(perm), q) ==
            doctest::Approx(expected));
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
}

TEST_CASE("reward quantile is monotone in q and bounded") {
  const Dataset ds = reward_dataset({-3, 8, 0.5, 0.5, 2, -1, 7});
  double prev = reward_quantile(ds, 0.0);
  CHECK(prev == doctest::Approx(-3.0));
  for (double q = 0.05; q <= 1.0; q += 0.05) {
    const double cur = reward_quantile(ds, q);
    CHECK(cur >= prev - 1e-12);
    CHECK(cur <= 8.0);
    CHECK(cur >= -3.0);
    prev = cur;
  }
}

TEST_CASE("quantile preconditions") {
  CHECK_THROWS_AS(reward_quantile(Dataset{}, 0.5), UsageError);
  CHECK_THROWS_AS(reward_quantile(reward_dataset({1}), 1.5), UsageError);
}

TEST_CASE("jsonl export writes one line per record") {
  Dataset ds = reward_dataset({1.5f, -2.0f});
  const auto path = temp_file("export.jsonl");
  export_jsonl(ds, path);
  std::ifstream in(path);
  std::string line;
  int lines = 0;
  while (std::getline(in, line)) {
    if (!line.empty()) ++lines;
  }
  CHECK(lines == 2);
}
