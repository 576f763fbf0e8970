#include "baffle/mlp.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "baffle/errors.hpp"
#include "baffle/rng.hpp"

namespace baffle {
namespace {

constexpr char kMagic[4] = {'B', 'F', 'L', 'M'};
constexpr std::uint16_t kVersion = 1;

void check_finite(const MlpModel& model) {
  for (int l = 0; l < model.num_layers(); ++l) {
    if (!model.weights[l].allFinite() || !model.biases[l].allFinite()) {
      throw NumericalError("model parameters are not finite");
    }
  }
}

}  // namespace

std::string to_string(Algorithm a) {
  switch (a) {
    case Algorithm::Bc: return "bc";
    case Algorithm::Fqi: return "fqi";
    case Algorithm::Cql: return "cql";
  }
  throw UsageError("unknown Algorithm");
}

Algorithm algorithm_from_string(const std::string& name) {
  if (name == "bc") return Algorithm::Bc;
  if (name == "fqi") return Algorithm::Fqi;
  if (name == "cql") return Algorithm::Cql;
  throw ConfigError("unknown algorithm: " + name);
}

void TrainConfig::validate() const {
  if (steps < 0) throw ConfigError("steps must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (!(gamma > 0.0) || gamma >= 1.0) {
    throw ConfigError("gamma must lie in (0, 1)");
  }
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (target_sync_every < 1) throw ConfigError("target_sync_every must be >= 1");
  if (cql_alpha < 0.0) throw ConfigError("cql_alpha must be >= 0");
}

std::vector<int> MlpModel::default_hidden(const ObsLayout& layout) {
  return layout.kind == ObsKind::Vector ? std::vector<int>{64, 64}
                                        : std::vector<int>{128, 128};
}

MlpModel MlpModel::make(const ObsLayout& layout, int action_count,
                        const std::vector<int>& hidden_sizes,
                        std::uint64_t seed) {
  if (action_count < 1) throw UsageError("model needs >= 1 action");
  if (layout.size() == 0) throw UsageError("model needs a non-empty input");
  MlpModel model;
  model.input_layout = layout;
  model.action_count = action_count;
  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(layout.size()));
  sizes.insert(sizes.end(), hidden_sizes.begin(), hidden_sizes.end());
  sizes.push_back(action_count);

  SplitMix64 rng = derive_stream(seed, 0x6d6c7021ULL);
  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    const int fan_in = sizes[l];
    const int fan_out = sizes[l + 1];
    if (fan_in < 1 || fan_out < 1) throw UsageError("layer sizes must be >= 1");
    const double bound = std::sqrt(6.0 / (fan_in + fan_out));
    Eigen::MatrixXd w(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) {
        w(r, c) = (2.0 * rng.next_double() - 1.0) * bound;
      }
    }
    model.weights.push_back(std::move(w));
    model.biases.push_back(Eigen::VectorXd::Zero(fan_out));
  }
  return model;
}

std::size_t MlpModel::parameter_count() const {
  std::size_t n = 0;
  for (int l = 0; l < num_layers(); ++l) {
    n += static_cast<std::size_t>(weights[l].size()) +
         static_cast<std::size_t>(biases[l].size());
  }
  return n;
}

Eigen::MatrixXd MlpModel::forward_batch(const Eigen::MatrixXd& inputs) const {
  if (inputs.rows() != static_cast<Eigen::Index>(input_layout.size())) {
    throw UsageError("forward: input size does not match model layout");
  }
  Eigen::MatrixXd h = inputs;
  for (int l = 0; l < num_layers(); ++l) {
    h = (weights[l] * h).colwise() + biases[l];
    if (l + 1 < num_layers()) h = h.cwiseMax(0.0);
  }
  return h;
}

Eigen::VectorXd MlpModel::forward(const Observation& obs) const {
  if (obs.size() != input_layout.size()) {
    throw UsageError("forward: observation size does not match model layout");
  }
  Eigen::VectorXd h(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) h[static_cast<Eigen::Index>(i)] = obs[i];
  for (int l = 0; l < num_layers(); ++l) {
    h = weights[l] * h + biases[l];
    if (l + 1 < num_layers()) h = h.cwiseMax(0.0);
  }
  return h;
}

Eigen::VectorXd MlpModel::activations(const Observation& obs) const {
  if (num_layers() < 2) {
    throw UsageError("activations: model has no hidden layer");
  }
  if (obs.size() != input_layout.size()) {
    throw UsageError("activations: observation size does not match model");
  }
  Eigen::VectorXd h(obs.size());
  for (std::size_t i = 0; i < obs.size(); ++i) h[static_cast<Eigen::Index>(i)] = obs[i];
  for (int l = 0; l + 1 < num_layers(); ++l) {
    h = (weights[l] * h + biases[l]).cwiseMax(0.0);
  }
  return h;
}

bool MlpModel::operator==(const MlpModel& other) const {
  if (input_layout != other.input_layout ||
      action_count != other.action_count ||
      weights.size() != other.weights.size()) {
    return false;
  }
  for (std::size_t l = 0; l < weights.size(); ++l) {
    if (weights[l].rows() != other.weights[l].rows() ||
        weights[l].cols() != other.weights[l].cols() ||
        weights[l] != other.weights[l] || biases[l] != other.biases[l]) {
      return false;
    }
  }
  return true;
}

int argmax_action(const Eigen::VectorXd& outputs) {
  int best = 0;
  for (int i = 1; i < outputs.size(); ++i) {
    if (outputs[i] > outputs[best]) best = i;
  }
  return best;
}

int MlpPolicy::act(const Observation& obs) const {
  return argmax_action(model_.forward(obs));
}

void save_checkpoint(const MlpModel& model, const TrainConfig& config,
                     const std::filesystem::path& path,
                     const std::string& metadata_json) {
  check_finite(model);
  std::vector<std::uint8_t> bytes;
  auto put = [&bytes](const void* p, std::size_t n) {
    auto* b = static_cast<const std::uint8_t*>(p);
    if constexpr (std::endian::native == std::endian::little) {
      bytes.insert(bytes.end(), b, b + n);
    } else {
      for (std::size_t i = n; i-- > 0;) bytes.push_back(b[i]);
    }
  };
  auto put_u8 = [&](std::uint8_t v) { bytes.push_back(v); };
  auto put_u16 = [&](std::uint16_t v) { put(&v, 2); };
  auto put_u32 = [&](std::uint32_t v) { put(&v, 4); };
  auto put_u64 = [&](std::uint64_t v) { put(&v, 8); };
  auto put_f32 = [&](float v) { put(&v, 4); };
  auto put_f64 = [&](double v) { put(&v, 8); };

  for (char c : kMagic) put_u8(static_cast<std::uint8_t>(c));
  put_u16(kVersion);
  put_u8(static_cast<std::uint8_t>(model.input_layout.kind));
  for (std::uint32_t d : model.input_layout.dims) put_u32(d);
  put_u16(static_cast<std::uint16_t>(model.action_count));
  put_u8(static_cast<std::uint8_t>(model.num_layers() - 1));
  for (int l = 0; l + 1 < model.num_layers(); ++l) {
    put_u32(static_cast<std::uint32_t>(model.weights[l].rows()));
  }
  put_u8(static_cast<std::uint8_t>(config.algorithm));
  put_u8(config.objective == Objective::Maximize ? 0 : 1);
  put_f64(config.gamma);
  put_u64(static_cast<std::uint64_t>(config.steps));
  put_u32(static_cast<std::uint32_t>(config.batch_size));
  put_f64(config.learning_rate);
  put_u32(static_cast<std::uint32_t>(config.target_sync_every));
  put_f64(config.cql_alpha);
  put_u64(config.seed);
  for (int l = 0; l < model.num_layers(); ++l) {
    // Row-major weight dump, then the bias vector.
    for (Eigen::Index r = 0; r < model.weights[l].rows(); ++r) {
      for (Eigen::Index c = 0; c < model.weights[l].cols(); ++c) {
        put_f32(static_cast<float>(model.weights[l](r, c)));
      }
    }
    for (Eigen::Index r = 0; r < model.biases[l].size(); ++r) {
      put_f32(static_cast<float>(model.biases[l][r]));
    }
  }

  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write checkpoint: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("short write: " + path.string());

  std::ofstream side(path.string() + ".json", std::ios::trunc);
  if (!side) throw IoError("cannot write sidecar: " + path.string() + ".json");
  side << metadata_json << '\n';
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint: " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  std::size_t pos = 0;
  const std::string name = path.filename().string();
  auto need = [&](std::size_t n) {
    if (pos + n > bytes.size()) {
      throw FormatError(name + ": truncated checkpoint at byte offset " +
                        std::to_string(pos));
    }
  };
  auto get_u8 = [&]() -> std::uint8_t {
    need(1);
    return bytes[pos++];
  };
  auto get_raw = [&](void* p, std::size_t n) {
    need(n);
    if constexpr (std::endian::native == std::endian::little) {
      std::memcpy(p, bytes.data() + pos, n);
    } else {
      auto* dst = static_cast<std::uint8_t*>(p);
      for (std::size_t i = 0; i < n; ++i) dst[i] = bytes[pos + n - 1 - i];
    }
    pos += n;
  };
  auto get_u16 = [&] { std::uint16_t v; get_raw(&v, 2); return v; };
  auto get_u32 = [&] { std::uint32_t v; get_raw(&v, 4); return v; };
  auto get_u64 = [&] { std::uint64_t v; get_raw(&v, 8); return v; };
  auto get_f32 = [&] { float v; get_raw(&v, 4); return v; };
  auto get_f64 = [&] { double v; get_raw(&v, 8); return v; };

  for (std::size_t i = 0; i < 4; ++i) {
    if (get_u8() != static_cast<std::uint8_t>(kMagic[i])) {
      throw FormatError(name + ": bad magic at byte offset " +
                        std::to_string(i));
    }
  }
  if (get_u16() != kVersion) {
    throw FormatError(name + ": unsupported checkpoint version");
  }

  Checkpoint ck;
  const std::uint8_t kind = get_u8();
  if (kind > 1) throw FormatError(name + ": unknown observation kind");
  ck.model.input_layout.kind = static_cast<ObsKind>(kind);
  for (std::uint32_t& d : ck.model.input_layout.dims) d = get_u32();
  ck.model.action_count = get_u16();
  const int n_hidden = get_u8();
  std::vector<int> sizes;
  sizes.push_back(static_cast<int>(ck.model.input_layout.size()));
  for (int l = 0; l < n_hidden; ++l) sizes.push_back(static_cast<int>(get_u32()));
  sizes.push_back(ck.model.action_count);

  const std::uint8_t algo = get_u8();
  if (algo > 2) throw FormatError(name + ": unknown algorithm tag");
  ck.config.algorithm = static_cast<Algorithm>(algo);
  ck.config.objective = get_u8() == 0 ? Objective::Maximize : Objective::Minimize;
  ck.config.gamma = get_f64();
  ck.config.steps = static_cast<std::int64_t>(get_u64());
  ck.config.batch_size = static_cast<int>(get_u32());
  ck.config.learning_rate = get_f64();
  ck.config.target_sync_every = static_cast<int>(get_u32());
  ck.config.cql_alpha = get_f64();
  ck.config.seed = get_u64();

  for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
    Eigen::MatrixXd w(sizes[l + 1], sizes[l]);
    for (Eigen::Index r = 0; r < w.rows(); ++r) {
      for (Eigen::Index c = 0; c < w.cols(); ++c) {
        w(r, c) = static_cast<double>(get_f32());
      }
    }
    Eigen::VectorXd b(sizes[l + 1]);
    for (Eigen::Index r = 0; r < b.size(); ++r) {
      b[r] = static_cast<double>(get_f32());
    }
    ck.model.weights.push_back(std::move(w));
    ck.model.biases.push_back(std::move(b));
  }
  if (pos != bytes.size()) {
    throw FormatError(name + ": trailing bytes at byte offset " +
                      std::to_string(pos));
  }
  check_finite(ck.model);
  return ck;
}

}  // namespace baffle
