#include "baffle/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

#include "baffle/errors.hpp"
#include "baffle/parallel.hpp"
#include "baffle/rng.hpp"

namespace baffle {
namespace {

constexpr char kMagic[4] = {'B', 'F', 'L', '1'};
constexpr std::uint16_t kVersion = 1;

// Little-endian byte writer/reader. The format is defined little-endian;
// serialization goes through explicit byte packing so the files are
// identical on any host.
static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts unsupported");

class Writer {
 public:
  explicit Writer(std::vector<std::uint8_t>& out) : out_(out) {}
  void u8(std::uint8_t v) { out_.push_back(v); }
  void u16(std::uint16_t v) { raw(&v, sizeof v); }
  void u32(std::uint32_t v) { raw(&v, sizeof v); }
  void u64(std::uint64_t v) { raw(&v, sizeof v); }
  void f32(float v) { raw(&v, sizeof v); }

 private:
  void raw(const void* p, std::size_t n) {
    auto* bytes = static_cast<const std::uint8_t*>(p);
    if constexpr (std::endian::native == std::endian::little) {
      out_.insert(out_.end(), bytes, bytes + n);
    } else {
      for (std::size_t i = n; i-- > 0;) out_.push_back(bytes[i]);
    }
  }
  std::vector<std::uint8_t>& out_;
};

class Reader {
 public:
  Reader(const std::vector<std::uint8_t>& data, const std::string& name)
      : data_(data), name_(name) {}

  std::uint8_t u8() { return take<std::uint8_t>(); }
  std::uint16_t u16() { return take<std::uint16_t>(); }
  std::uint32_t u32() { return take<std::uint32_t>(); }
  std::uint64_t u64() { return take<std::uint64_t>(); }
  float f32() { return take<float>(); }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(name_ + ": " + what + " at byte offset " +
                      std::to_string(pos_));
  }

 private:
  template <typename T>
  T take() {
    if (pos_ + sizeof(T) > data_.size()) fail("truncated file");
    T v;
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(&v, data_.data() + pos_, sizeof(T));
    } else {
      std::uint8_t tmp[sizeof(T)];
      for (std::size_t i = 0; i < sizeof(T); ++i) {
        tmp[i] = data_[pos_ + sizeof(T) - 1 - i];
      }
      std::memcpy(&v, tmp, sizeof(T));
    }
    pos_ += sizeof(T);
    return v;
  }

  const std::vector<std::uint8_t>& data_;
  std::string name_;
  std::size_t pos_ = 0;
};

double interp_quantile(std::vector<double> values, double q,
                       const char* what) {
  if (values.empty()) throw UsageError(std::string(what) + ": empty input");
  if (!(q >= 0.0) || q > 1.0) {
    throw UsageError(std::string(what) + ": q must lie in [0, 1]");
  }
  std::sort(values.begin(), values.end());
  const double h = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(h);
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

}  // namespace

Dataset collect(const EnvSpec& spec, const Policy& policy, int n_episodes,
                double epsilon, std::uint64_t seed) {
  spec.validate();
  if (n_episodes < 0) throw UsageError("collect: n_episodes must be >= 0");
  if (!(epsilon >= 0.0) || epsilon > 1.0) {
    throw UsageError("collect: epsilon must lie in [0, 1]");
  }
  {
    // Shape compatibility probe on the initial observation.
    Env env(spec, seed);
    policy.act(env.reset());
  }

  std::vector<std::vector<Experience>> episodes(
      static_cast<std::size_t>(n_episodes));
  parallel_for(static_cast<std::size_t>(n_episodes), [&](std::size_t e) {
    SplitMix64 rng = derive_stream(seed, e);
    Env env(spec, seed);
    Observation obs = env.reset();
    std::vector<Experience>& out = episodes[e];
    std::uint32_t t = 0;
    while (!env.done()) {
      int action;
      // Draw order per step: one uniform for the epsilon test, then one
      // index draw only on exploration steps. epsilon == 0 draws nothing.
      if (epsilon > 0.0 && rng.next_double() < epsilon) {
        action = static_cast<int>(
            rng.next_below(static_cast<std::uint64_t>(spec.action_count())));
      } else {
        action = policy.act(obs);
      }
      StepResult step = env.step(action);
      Experience rec;
      rec.traj_id = static_cast<std::uint32_t>(e);
      rec.t = t++;
      rec.obs = std::move(obs);
      rec.action = static_cast<std::uint16_t>(action);
      rec.reward = static_cast<float>(step.reward);
      rec.done = step.done;
      out.push_back(std::move(rec));
      obs = std::move(step.obs);
    }
  });

  Dataset ds;
  ds.header.version = kVersion;
  ds.header.env_id = spec.id;
  ds.header.obs_layout = spec.obs_layout();
  ds.header.action_count = static_cast<std::uint16_t>(spec.action_count());
  ds.header.collection_seed = seed;
  std::size_t total = 0;
  for (const auto& ep : episodes) total += ep.size();
  ds.records.reserve(total);
  for (auto& ep : episodes) {
    for (auto& rec : ep) ds.records.push_back(std::move(rec));
  }
  return ds;
}

void save(const Dataset& dataset, const std::filesystem::path& path) {
  const std::size_t obs_size = dataset.header.obs_layout.size();
  std::vector<std::uint8_t> bytes;
  bytes.reserve(38 + dataset.records.size() * (15 + 4 * obs_size));
  Writer w(bytes);
  for (char c : kMagic) w.u8(static_cast<std::uint8_t>(c));
  w.u16(dataset.header.version);
  w.u8(static_cast<std::uint8_t>(dataset.header.env_id));
  w.u8(static_cast<std::uint8_t>(dataset.header.obs_layout.kind));
  for (std::uint32_t d : dataset.header.obs_layout.dims) w.u32(d);
  w.u16(dataset.header.action_count);
  w.u64(dataset.records.size());
  w.u64(dataset.header.collection_seed);
  for (const Experience& rec : dataset.records) {
    if (rec.obs.size() != obs_size) {
      throw UsageError("save: record observation size differs from header");
    }
    w.u32(rec.traj_id);
    w.u32(rec.t);
    for (float v : rec.obs) w.f32(v);
    w.u16(rec.action);
    w.f32(rec.reward);
    w.u8(rec.done ? 1 : 0);
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write dataset: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write: " + path.string());
}

Dataset load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  Reader r(bytes, path.filename().string());

  for (std::size_t i = 0; i < 4; ++i) {
    if (r.u8() != static_cast<std::uint8_t>(kMagic[i])) {
      throw FormatError(path.filename().string() +
                        ": bad magic at byte offset " + std::to_string(i));
    }
  }
  Dataset ds;
  ds.header.version = r.u16();
  if (ds.header.version != kVersion) {
    throw FormatError(path.filename().string() + ": unsupported version " +
                      std::to_string(ds.header.version) +
                      " at byte offset 4");
  }
  const std::uint8_t env_id = r.u8();
  if (env_id > 1) r.fail("unknown env id");
  ds.header.env_id = static_cast<EnvId>(env_id);
  const std::uint8_t obs_kind = r.u8();
  if (obs_kind > 1) r.fail("unknown observation kind");
  ds.header.obs_layout.kind = static_cast<ObsKind>(obs_kind);
  for (std::uint32_t& d : ds.header.obs_layout.dims) d = r.u32();
  ds.header.action_count = r.u16();
  const std::uint64_t record_count = r.u64();
  ds.header.collection_seed = r.u64();

  const std::size_t obs_size = ds.header.obs_layout.size();
  if (obs_size == 0) r.fail("zero-size observation layout");
  const std::size_t record_bytes = 15 + 4 * obs_size;
  if (r.remaining() != record_count * record_bytes) {
    if (r.remaining() < record_count * record_bytes) {
      throw FormatError(path.filename().string() +
                        ": truncated file, expected " +
                        std::to_string(record_count * record_bytes) +
                        " record bytes at byte offset " +
                        std::to_string(r.offset()));
    }
    throw FormatError(path.filename().string() +
                      ": trailing bytes at byte offset " +
                      std::to_string(r.offset() + record_count * record_bytes));
  }

  ds.records.resize(record_count);
  for (Experience& rec : ds.records) {
    rec.traj_id = r.u32();
    rec.t = r.u32();
    rec.obs.resize(obs_size);
    for (float& v : rec.obs) v = r.f32();
    rec.action = r.u16();
    rec.reward = r.f32();
    const std::uint8_t done = r.u8();
    if (done > 1) r.fail("invalid done flag");
    rec.done = done == 1;
  }
  return ds;
}

void export_jsonl(const Dataset& dataset, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write jsonl: " + path.string());
  for (const Experience& rec : dataset.records) {
    nlohmann::ordered_json j;
    j["traj_id"] = rec.traj_id;
    j["t"] = rec.t;
    j["obs"] = rec.obs;
    j["action"] = rec.action;
    j["reward"] = rec.reward;
    j["done"] = rec.done;
    out << j.dump() << '\n';
  }
}

double reward_quantile(const Dataset& dataset, double q) {
  std::vector<double> rewards;
  rewards.reserve(dataset.records.size());
  for (const Experience& rec : dataset.records) {
    rewards.push_back(static_cast<double>(rec.reward));
  }
  return interp_quantile(std::move(rewards), q, "reward_quantile");
}

double obs_dim_quantile(const Dataset& dataset, std::size_t dim, double q) {
  if (dim >= dataset.header.obs_layout.size()) {
    throw UsageError("obs_dim_quantile: dim out of range");
  }
  std::vector<double> values;
  values.reserve(dataset.records.size());
  for (const Experience& rec : dataset.records) {
    values.push_back(static_cast<double>(rec.obs[dim]));
  }
  return interp_quantile(std::move(values), q, "obs_dim_quantile");
}

}  // namespace baffle
