#include "baffle/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "baffle/errors.hpp"
#include "baffle/hashing.hpp"
#include "baffle/rng.hpp"

namespace baffle {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

// Stage tags for deriving per-stage seeds from the master seed; the full
// derivation table lives in docs/config.md.
constexpr std::uint64_t kTagDataset = 0xD5DA7AULL;
constexpr std::uint64_t kTagWeak = 0x3EAC0ULL;
constexpr std::uint64_t kTagTrain = 0x7F4A17ULL;
constexpr std::uint64_t kTagPoison = 0x501C0ULL;
constexpr std::uint64_t kTagEval = 0xEAA700ULL;
constexpr std::uint64_t kTagFinetune = 0xF17E00ULL;
constexpr std::uint64_t kTagDefend = 0xDEFE9DULL;

std::uint64_t pack_indices(std::size_t a, std::size_t k, std::size_t ri,
                           std::size_t mi) {
  return static_cast<std::uint64_t>(a) | (static_cast<std::uint64_t>(k) << 8) |
         (static_cast<std::uint64_t>(ri) << 16) |
         (static_cast<std::uint64_t>(mi) << 24);
}

std::uint64_t stage_seed(std::uint64_t master, std::uint64_t tag,
                         std::uint64_t pack = 0) {
  return mix64(master ^ tag ^ pack);
}

std::string rate_label(double rate) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", rate * 100.0);
  std::string s(buf);
  for (char& c : s) {
    if (c == '.') c = 'p';
  }
  return s + "pct";
}

std::string schedule_file_key(const TriggerSchedule& schedule) {
  switch (schedule.strategy) {
    case TriggerStrategy::None: return "none";
    case TriggerStrategy::Distributed:
      return "dist" + std::to_string(schedule.interval);
    case TriggerStrategy::OneTime:
      return "once" + std::to_string(schedule.length);
  }
  throw UsageError("unknown strategy");
}

ordered_json schedule_to_json(const TriggerSchedule& s) {
  ordered_json j;
  j["strategy"] = to_string(s.strategy);
  if (s.strategy == TriggerStrategy::Distributed) j["interval"] = s.interval;
  if (s.strategy == TriggerStrategy::OneTime) {
    j["length"] = s.length;
    j["seed"] = s.seed;
  }
  if (s.noise) {
    ordered_json n;
    n["kind"] = s.noise->kind == NoiseCfg::Kind::GaussianOnTriggerDims
                    ? "gaussian"
                    : "uniform";
    n["sigma"] = s.noise->sigma;
    n["seed"] = s.noise->seed;
    j["noise"] = n;
  }
  return j;
}

TriggerSchedule schedule_from_json(const json& j) {
  TriggerSchedule s;
  s.strategy = trigger_strategy_from_string(j.at("strategy").get<std::string>());
  if (s.strategy == TriggerStrategy::Distributed) {
    s.interval = j.at("interval").get<int>();
  }
  if (s.strategy == TriggerStrategy::OneTime) {
    s.length = j.at("length").get<int>();
    s.seed = j.value("seed", std::uint64_t{0});
  }
  if (j.contains("noise")) {
    NoiseCfg n;
    n.kind = j.at("noise").at("kind").get<std::string>() == "gaussian"
                 ? NoiseCfg::Kind::GaussianOnTriggerDims
                 : NoiseCfg::Kind::UniformOnImage;
    n.sigma = j.at("noise").value("sigma", 0.05);
    n.seed = j.at("noise").value("seed", std::uint64_t{0});
    s.noise = n;
  }
  return s;
}

}  // namespace

void ExperimentConfig::validate() const {
  env.validate();
  train_base.validate();
  if (collect_episodes < 1) throw ConfigError("collect.episodes must be >= 1");
  if (!(collect_epsilon >= 0.0) || collect_epsilon > 1.0) {
    throw ConfigError("collect.epsilon must lie in [0, 1]");
  }
  if (algorithms.empty()) throw ConfigError("train.algorithms is empty");
  if (train_seeds < 1) throw ConfigError("train.seeds must be >= 1");
  for (double r : rates) {
    if (!(r >= 0.0) || r > 1.0) throw ConfigError("poison.rates must lie in [0, 1]");
  }
  if (modes.empty()) throw ConfigError("poison.modes is empty");
  if (eval_episodes < 1) throw ConfigError("eval.episodes must be >= 1");
  if (finetune_fraction < 0.0 || finetune_fraction > 1.0) {
    throw ConfigError("finetune.fraction must lie in [0, 1]");
  }
  if (out_dir.empty()) throw ConfigError("out_dir is empty");
}

ExperimentConfig load_experiment_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config: " + path.string());
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw FormatError("bad config json " + path.string() + ": " + e.what());
  }
  try {
    ExperimentConfig cfg;
    cfg.seed = j.value("seed", std::uint64_t{1});
    cfg.out_dir = j.value("out_dir", std::string("run"));

    const auto& env = j.at("env");
    const std::string env_id = env.at("id").get<std::string>();
    if (env_id_from_string(env_id) == EnvId::ChainWalk) {
      cfg.env = chain_walk_spec(env.at("n_states").get<int>(),
                                env.value("max_steps", 100));
    } else {
      cfg.env = patch_grid_spec(env.value("max_steps", 60));
    }

    if (j.contains("collect")) {
      cfg.collect_episodes = j["collect"].value("episodes", cfg.collect_episodes);
      cfg.collect_epsilon = j["collect"].value("epsilon", cfg.collect_epsilon);
    }
    if (j.contains("train")) {
      const auto& t = j["train"];
      if (t.contains("algorithms")) {
        cfg.algorithms.clear();
        for (const auto& a : t["algorithms"]) {
          cfg.algorithms.push_back(algorithm_from_string(a.get<std::string>()));
        }
      }
      cfg.train_base.gamma = t.value("gamma", cfg.train_base.gamma);
      cfg.train_base.steps = t.value("steps", cfg.train_base.steps);
      cfg.train_base.batch_size = t.value("batch_size", cfg.train_base.batch_size);
      cfg.train_base.learning_rate =
          t.value("learning_rate", cfg.train_base.learning_rate);
      cfg.train_base.target_sync_every =
          t.value("target_sync_every", cfg.train_base.target_sync_every);
      cfg.train_base.cql_alpha = t.value("cql_alpha", cfg.train_base.cql_alpha);
      cfg.train_seeds = t.value("seeds", cfg.train_seeds);
    }
    if (j.contains("weak")) {
      cfg.weak_algorithm = algorithm_from_string(
          j["weak"].value("algorithm", std::string("fqi")));
      cfg.weak_steps = j["weak"].value("steps", cfg.weak_steps);
    }
    if (j.contains("poison")) {
      const auto& p = j["poison"];
      if (p.contains("rates")) cfg.rates = p["rates"].get<std::vector<double>>();
      if (p.contains("modes")) {
        cfg.modes.clear();
        for (const auto& m : p["modes"]) {
          cfg.modes.push_back(poison_mode_from_string(m.get<std::string>()));
        }
      }
      if (p.contains("r_high")) {
        if (p["r_high"].is_number()) {
          cfg.r_high = p["r_high"].get<double>();
        } else if (p["r_high"].get<std::string>() != "q0.75") {
          throw ConfigError("poison.r_high must be a number or \"q0.75\"");
        }
      }
      cfg.r_high_quantile = p.value("r_high_quantile", 0.75);
      if (p.contains("trigger_dims")) {
        cfg.trigger_dims = p["trigger_dims"].get<std::vector<std::uint32_t>>();
      }
      cfg.patch_size = p.value("patch_size", cfg.patch_size);
    }
    if (j.contains("eval")) {
      cfg.eval_episodes = j["eval"].value("episodes", cfg.eval_episodes);
      if (j["eval"].contains("schedules")) {
        for (const auto& s : j["eval"]["schedules"]) {
          cfg.eval_schedules.push_back(schedule_from_json(s));
        }
      }
    }
    if (j.contains("finetune")) {
      cfg.finetune_enabled = j["finetune"].value("enabled", cfg.finetune_enabled);
      cfg.finetune_fraction =
          j["finetune"].value("fraction", cfg.finetune_fraction);
    }
    if (j.contains("defend")) {
      cfg.defend_enabled = j["defend"].value("enabled", cfg.defend_enabled);
    }
    cfg.validate();
    return cfg;
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

void save_experiment_config(const ExperimentConfig& cfg, const fs::path& path,
                            bool include_out_dir) {
  ordered_json j;
  j["seed"] = cfg.seed;
  if (include_out_dir) j["out_dir"] = cfg.out_dir.string();
  ordered_json env;
  env["id"] = to_string(cfg.env.id);
  if (cfg.env.id == EnvId::ChainWalk) env["n_states"] = cfg.env.n_states;
  env["max_steps"] = cfg.env.max_episode_steps;
  j["env"] = env;
  j["collect"] = {{"episodes", cfg.collect_episodes},
                  {"epsilon", cfg.collect_epsilon}};
  ordered_json train;
  ordered_json algos = ordered_json::array();
  for (Algorithm a : cfg.algorithms) algos.push_back(to_string(a));
  train["algorithms"] = algos;
  train["gamma"] = cfg.train_base.gamma;
  train["steps"] = cfg.train_base.steps;
  train["batch_size"] = cfg.train_base.batch_size;
  train["learning_rate"] = cfg.train_base.learning_rate;
  train["target_sync_every"] = cfg.train_base.target_sync_every;
  train["cql_alpha"] = cfg.train_base.cql_alpha;
  train["seeds"] = cfg.train_seeds;
  j["train"] = train;
  j["weak"] = {{"algorithm", to_string(cfg.weak_algorithm)},
               {"steps", cfg.weak_steps}};
  ordered_json poison;
  poison["rates"] = cfg.rates;
  ordered_json modes = ordered_json::array();
  for (PoisonMode m : cfg.modes) modes.push_back(to_string(m));
  poison["modes"] = modes;
  if (cfg.r_high) {
    poison["r_high"] = *cfg.r_high;
  } else {
    poison["r_high"] = "q0.75";
  }
  poison["r_high_quantile"] = cfg.r_high_quantile;
  poison["trigger_dims"] = cfg.trigger_dims;
  poison["patch_size"] = cfg.patch_size;
  j["poison"] = poison;
  ordered_json eval;
  eval["episodes"] = cfg.eval_episodes;
  ordered_json scheds = ordered_json::array();
  for (const TriggerSchedule& s : cfg.eval_schedules) {
    scheds.push_back(schedule_to_json(s));
  }
  eval["schedules"] = scheds;
  j["eval"] = eval;
  j["finetune"] = {{"enabled", cfg.finetune_enabled},
                   {"fraction", cfg.finetune_fraction}};
  j["defend"] = {{"enabled", cfg.defend_enabled}};
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write config: " + path.string());
  out << j.dump(2) << '\n';
}

namespace {

struct EvalIndexEntry {
  std::string file;
  std::string algorithm;  // "weak" for the weak anchor
  double rate;
  std::string mode;
  int replicate;
  bool finetuned;
  std::string schedule_key;
};

void write_eval_index(const std::vector<EvalIndexEntry>& entries,
                      const fs::path& path) {
  ordered_json arr = ordered_json::array();
  for (const auto& e : entries) {
    ordered_json j;
    j["file"] = e.file;
    j["algorithm"] = e.algorithm;
    j["rate"] = e.rate;
    j["mode"] = e.mode;
    j["replicate"] = e.replicate;
    j["finetuned"] = e.finetuned;
    j["schedule"] = e.schedule_key;
    arr.push_back(j);
  }
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write eval index: " + path.string());
  out << arr.dump(2) << '\n';
}

std::vector<EvalIndexEntry> read_eval_index(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open eval index: " + path.string());
  json arr;
  in >> arr;
  std::vector<EvalIndexEntry> entries;
  for (const auto& j : arr) {
    EvalIndexEntry e;
    e.file = j.at("file").get<std::string>();
    e.algorithm = j.at("algorithm").get<std::string>();
    e.rate = j.at("rate").get<double>();
    e.mode = j.at("mode").get<std::string>();
    e.replicate = j.at("replicate").get<int>();
    e.finetuned = j.at("finetuned").get<bool>();
    e.schedule_key = j.at("schedule").get<std::string>();
    entries.push_back(e);
  }
  return entries;
}

// Pools replicate evaluations of one configuration into a single
// EvalResult (same episode count per replicate, so the pooled mean is the
// mean of means).
EvalResult pool_evals(const std::vector<const EvalResult*>& parts) {
  EvalResult pooled;
  pooled.schedule = parts.front()->schedule;
  pooled.seed = parts.front()->seed;
  for (const EvalResult* p : parts) {
    pooled.returns.insert(pooled.returns.end(), p->returns.begin(),
                          p->returns.end());
    pooled.trigger_steps_per_episode.insert(
        pooled.trigger_steps_per_episode.end(),
        p->trigger_steps_per_episode.begin(),
        p->trigger_steps_per_episode.end());
  }
  pooled.episodes = static_cast<int>(pooled.returns.size());
  double sum = 0.0;
  for (double r : pooled.returns) sum += r;
  pooled.mean_return = sum / static_cast<double>(pooled.returns.size());
  return pooled;
}

struct TableBundle {
  NormalizationRef ref;
  std::vector<ChangeRow> rows;
  std::vector<FinetuneRow> finetune_rows;
  std::vector<AblationRow> ablation_rows;
};

// Builds the summary/finetune/ablation tables from the eval index. Used by
// run_experiment and by the standalone `report` subcommand.
TableBundle build_tables(const fs::path& dir,
                         const std::vector<EvalIndexEntry>& index) {
  // Load everything once.
  std::map<std::string, EvalResult> by_file;
  for (const auto& e : index) {
    by_file.emplace(e.file, load_eval(dir / "evals" / e.file));
  }

  // Reference: best clean (rate 0, not finetuned) pooled eval vs weak.
  std::map<std::string, std::vector<const EvalResult*>> clean_none;
  const EvalResult* weak = nullptr;
  for (const auto& e : index) {
    if (e.algorithm == "weak") {
      weak = &by_file.at(e.file);
    } else if (e.rate == 0.0 && !e.finetuned && e.schedule_key == "none") {
      clean_none[e.algorithm].push_back(&by_file.at(e.file));
    }
  }
  if (weak == nullptr || clean_none.empty()) {
    throw UsageError("eval index lacks the weak/clean anchor evaluations");
  }
  const EvalResult* best = nullptr;
  EvalResult best_pooled;
  for (const auto& [algo, parts] : clean_none) {
    EvalResult pooled = pool_evals(parts);
    if (best == nullptr || pooled.mean_return > best_pooled.mean_return) {
      best_pooled = pooled;
      best = &best_pooled;
    }
  }
  TableBundle bundle;
  bundle.ref = build_reference(best_pooled, *weak);

  // Summary rows: pooled over replicates per (algo, rate, mode, schedule).
  using Key = std::tuple<std::string, double, std::string, std::string>;
  std::map<Key, std::vector<const EvalResult*>> groups;
  for (const auto& e : index) {
    if (e.algorithm == "weak" || e.finetuned) continue;
    groups[{e.algorithm, e.rate, e.mode, e.schedule_key}].push_back(
        &by_file.at(e.file));
  }
  std::vector<LabeledEval> labeled;
  for (const auto& [key, parts] : groups) {
    LabeledEval le;
    le.algorithm = std::get<0>(key);
    le.rate = std::get<1>(key);
    le.mode = std::get<2>(key);
    le.eval = pool_evals(parts);
    labeled.push_back(std::move(le));
  }
  bundle.rows = change_table(labeled, bundle.ref);

  // Finetune rows: matched before/after per (algo, rate, mode, schedule),
  // pooled over replicates; only triggered schedules make a row.
  std::map<Key, std::vector<const EvalResult*>> ft_groups;
  for (const auto& e : index) {
    if (!e.finetuned) continue;
    ft_groups[{e.algorithm, e.rate, e.mode, e.schedule_key}].push_back(
        &by_file.at(e.file));
  }
  for (const auto& [key, parts] : ft_groups) {
    const auto& [algo, rate, mode, sched] = key;
    if (sched == "none") continue;
    const Key none_key{algo, rate, mode, "none"};
    auto before = groups.find(key);
    auto before_none = groups.find(none_key);
    auto after_none = ft_groups.find(none_key);
    if (before == groups.end() || before_none == groups.end() ||
        after_none == ft_groups.end()) {
      continue;
    }
    try {
      bundle.finetune_rows.push_back(finetune_row(
          algo, pool_evals(before_none->second), pool_evals(before->second),
          pool_evals(after_none->second), pool_evals(parts), bundle.ref));
    } catch (const UsageError&) {
      // Baseline at the weak floor: the change is undefined, skip the row.
    }
  }
  std::sort(bundle.finetune_rows.begin(), bundle.finetune_rows.end(),
            [](const FinetuneRow& a, const FinetuneRow& b) {
              return std::tie(a.algorithm, a.schedule) <
                     std::tie(b.algorithm, b.schedule);
            });

  // Ablation rows: first poisoned rate/mode vs rate 0, pooled per algo.
  double ablation_rate = 0.0;
  std::string ablation_mode;
  for (const auto& [key, parts] : groups) {
    if (std::get<1>(key) > 0.0) {
      ablation_rate = std::get<1>(key);
      ablation_mode = std::get<2>(key);
      break;
    }
  }
  if (ablation_rate > 0.0) {
    std::set<std::string> algos;
    for (const auto& [key, parts] : groups) algos.insert(std::get<0>(key));
    for (const std::string& algo : algos) {
      std::vector<EvalResult> clean_evals;
      std::vector<EvalResult> poisoned_evals;
      for (const auto& [key, parts] : groups) {
        if (std::get<0>(key) != algo) continue;
        if (std::get<1>(key) == 0.0) {
          clean_evals.push_back(pool_evals(parts));
        } else if (std::get<1>(key) == ablation_rate &&
                   std::get<2>(key) == ablation_mode) {
          poisoned_evals.push_back(pool_evals(parts));
        }
      }
      if (clean_evals.empty() || poisoned_evals.empty()) continue;
      std::vector<AblationRow> algo_rows;
      try {
        algo_rows = ablation_table(clean_evals, poisoned_evals, bundle.ref);
      } catch (const UsageError&) {
        continue;  // undefined changes at the weak floor
      }
      for (AblationRow row : algo_rows) {
        // Tag rows with the algorithm by prefixing the schedule key.
        row.schedule = algo + ":" + row.schedule;
        bundle.ablation_rows.push_back(row);
      }
    }
  }
  return bundle;
}

}  // namespace

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const fs::path out = config.out_dir;
  for (const char* sub : {"", "datasets", "agents", "evals", "defense", "report"}) {
    fs::create_directories(out / sub);
  }
  save_experiment_config(config, out / "config.json", false);

  // Rates: always include the clean baseline, deduped ascending.
  std::vector<double> rates = config.rates;
  rates.push_back(0.0);
  std::sort(rates.begin(), rates.end());
  rates.erase(std::unique(rates.begin(), rates.end()), rates.end());

  std::vector<TriggerSchedule> schedules;
  schedules.push_back(TriggerSchedule{});  // none
  for (const TriggerSchedule& s : config.eval_schedules) {
    if (s.strategy != TriggerStrategy::None) schedules.push_back(s);
  }

  // ---- collect ----------------------------------------------------------
  const std::uint64_t dataset_seed = stage_seed(config.seed, kTagDataset);
  const auto behavior = make_tabular_policy(config.env, Objective::Maximize, 1.0);
  Dataset clean = collect(config.env, *behavior, config.collect_episodes,
                          config.collect_epsilon, dataset_seed);
  const fs::path clean_path = out / "datasets" / "clean.bfl";
  save(clean, clean_path);
  save_hash_manifest(hash_manifest(clean_path),
                     out / "datasets" / "clean.bfl.sha256.json");

  // ---- trigger -----------------------------------------------------------
  TriggerSpec trigger =
      config.env.obs_layout().kind == ObsKind::Vector
          ? make_vector_trigger(clean, config.trigger_dims)
          : make_patch_trigger(config.env.obs_layout(), config.patch_size);
  save_trigger(trigger, out / "trigger.json");

  // ---- weak agent --------------------------------------------------------
  TrainConfig weak_cfg = config.train_base;
  weak_cfg.algorithm = config.weak_algorithm;
  weak_cfg.objective = Objective::Minimize;
  if (config.weak_steps >= 0) weak_cfg.steps = config.weak_steps;
  weak_cfg.seed = stage_seed(config.seed, kTagWeak);
  TrainResult weak_train = train(clean, weak_cfg);
  const fs::path weak_path =
      out / "agents" / ("weak_" + to_string(config.weak_algorithm) + ".bflm");
  {
    ordered_json meta;
    meta["role"] = "weak";
    meta["dataset_digest"] = sha256_file(clean_path);
    meta["final_loss"] = weak_train.final_loss;
    save_checkpoint(weak_train.model, weak_cfg, weak_path, meta.dump(2));
  }
  const std::string weak_digest = sha256_file(weak_path);
  const MlpPolicy weak_policy(load_checkpoint(weak_path).model);

  std::vector<EvalIndexEntry> index;
  const std::uint64_t weak_eval_seed = stage_seed(config.seed, kTagEval, ~0ULL);
  EvalResult weak_eval = rollout(config.env, weak_policy, config.eval_episodes,
                                 TriggerSchedule{}, nullptr, weak_eval_seed);
  save_eval(weak_eval, out / "evals" / "weak_none.json");
  index.push_back({"weak_none.json", "weak", 0.0, "replace", 0, false, "none"});

  std::vector<DefenseRow> defense_rows;

  // ---- per (rate, mode): poison, train, eval, finetune, defend ----------
  for (std::size_t ri = 0; ri < rates.size(); ++ri) {
    const double rate = rates[ri];
    const std::vector<PoisonMode> mode_list =
        rate == 0.0 ? std::vector<PoisonMode>{PoisonMode::Replace} : config.modes;
    for (std::size_t mi = 0; mi < mode_list.size(); ++mi) {
      const PoisonMode mode = mode_list[mi];
      const std::string tag = "r" + rate_label(rate) + "_" + to_string(mode);

      PoisonConfig pcfg;
      pcfg.rate = rate;
      pcfg.mode = mode;
      pcfg.r_high = config.r_high;
      pcfg.r_high_quantile = config.r_high_quantile;
      pcfg.seed = stage_seed(config.seed, kTagPoison, pack_indices(0, 0, ri, mi));
      pcfg.weak_policy_digest = weak_digest;
      PoisonResult poisoned = poison_dataset(clean, weak_policy, trigger, pcfg);

      const fs::path data_path = out / "datasets" / ("poisoned_" + tag + ".bfl");
      save(poisoned.dataset, data_path);
      save_hash_manifest(hash_manifest(data_path),
                         out / "datasets" / ("poisoned_" + tag + ".bfl.sha256.json"));
      save_poison_manifest(poisoned.manifest,
                           out / "datasets" / ("poisoned_" + tag + ".manifest.json"));

      Dataset benign;
      if (rate > 0.0 && mode == PoisonMode::Replace && config.finetune_enabled) {
        benign = benign_split(clean, poisoned.manifest);
        save(benign, out / "datasets" / ("benign_" + tag + ".bfl"));
      }

      for (std::size_t ai = 0; ai < config.algorithms.size(); ++ai) {
        const Algorithm algo = config.algorithms[ai];
        for (int k = 0; k < config.train_seeds; ++k) {
          TrainConfig tcfg = config.train_base;
          tcfg.algorithm = algo;
          tcfg.objective = Objective::Maximize;
          tcfg.seed = stage_seed(config.seed, kTagTrain,
                                 pack_indices(ai, static_cast<std::size_t>(k),
                                              ri, mi));
          TrainResult trained = train(poisoned.dataset, tcfg);
          const std::string agent_tag =
              to_string(algo) + "_" + tag + "_s" + std::to_string(k);
          const fs::path agent_path =
              out / "agents" / (agent_tag + ".bflm");
          {
            ordered_json meta;
            meta["role"] = "agent";
            meta["dataset_digest"] = sha256_file(data_path);
            meta["final_loss"] = trained.final_loss;
            save_checkpoint(trained.model, tcfg, agent_path, meta.dump(2));
          }
          const MlpPolicy agent(load_checkpoint(agent_path).model);

          for (std::size_t si = 0; si < schedules.size(); ++si) {
            const std::uint64_t eval_seed = stage_seed(
                config.seed, kTagEval,
                pack_indices(ai, static_cast<std::size_t>(k), ri, mi) ^
                    (static_cast<std::uint64_t>(si) << 32));
            EvalResult ev = rollout(
                config.env, agent, config.eval_episodes, schedules[si],
                schedules[si].strategy == TriggerStrategy::None ? nullptr
                                                                : &trigger,
                eval_seed);
            const std::string file =
                agent_tag + "_" + schedule_file_key(schedules[si]) + ".json";
            save_eval(ev, out / "evals" / file);
            index.push_back({file, to_string(algo), rate, to_string(mode), k,
                             false, ev.schedule.key()});
          }

          if (!benign.records.empty()) {
            TrainConfig ft_cfg = tcfg;
            ft_cfg.steps = static_cast<std::int64_t>(std::llround(
                config.finetune_fraction *
                static_cast<double>(config.train_base.steps)));
            ft_cfg.seed = stage_seed(config.seed, kTagFinetune,
                                     pack_indices(ai, static_cast<std::size_t>(k),
                                                  ri, mi));
            TrainResult tuned = finetune(agent.model(), benign, ft_cfg);
            const fs::path ft_path =
                out / "agents" / (agent_tag + "_ft.bflm");
            {
              ordered_json meta;
              meta["role"] = "finetuned";
              meta["final_loss"] = tuned.final_loss;
              save_checkpoint(tuned.model, ft_cfg, ft_path, meta.dump(2));
            }
            const MlpPolicy tuned_agent(load_checkpoint(ft_path).model);
            for (std::size_t si = 0; si < schedules.size(); ++si) {
              const std::uint64_t eval_seed = stage_seed(
                  config.seed, kTagEval,
                  pack_indices(ai, static_cast<std::size_t>(k), ri, mi) ^
                      (static_cast<std::uint64_t>(si) << 32) ^
                      (1ULL << 40));
              EvalResult ev = rollout(
                  config.env, tuned_agent, config.eval_episodes, schedules[si],
                  schedules[si].strategy == TriggerStrategy::None ? nullptr
                                                                  : &trigger,
                  eval_seed);
              const std::string file = agent_tag + "_ft_" +
                                       schedule_file_key(schedules[si]) +
                                       ".json";
              save_eval(ev, out / "evals" / file);
              index.push_back({file, to_string(algo), rate, to_string(mode), k,
                               true, ev.schedule.key()});
            }
          }

          if (config.defend_enabled && rate > 0.0 && k == 0) {
            DetectionReport cluster = activation_clustering_detect(
                agent.model(), poisoned.dataset, 0.35,
                stage_seed(config.seed, kTagDefend,
                           pack_indices(ai, 0, ri, mi)));
            score_detection(cluster, poisoned.manifest.indices,
                            poisoned.dataset.size());
            save_detection_report(
                cluster, out / "defense" /
                             ("clustering_" + to_string(algo) + "_" + tag + ".json"));
            defense_rows.push_back({to_string(algo), rate, to_string(mode),
                                    cluster.method, cluster.precision,
                                    cluster.recall, cluster.f1,
                                    cluster.flagged.size()});

            DetectionReport spectral = spectral_detect(
                agent.model(), poisoned.dataset,
                poisoned.manifest.indices.size());
            score_detection(spectral, poisoned.manifest.indices,
                            poisoned.dataset.size());
            save_detection_report(
                spectral, out / "defense" /
                              ("spectral_" + to_string(algo) + "_" + tag + ".json"));
            defense_rows.push_back({to_string(algo), rate, to_string(mode),
                                    spectral.method, spectral.precision,
                                    spectral.recall, spectral.f1,
                                    spectral.flagged.size()});
          }
        }
      }
    }
  }

  write_eval_index(index, out / "evals" / "index.json");

  TableBundle tables = build_tables(out, index);
  save_reference(tables.ref, out / "report" / "reference.json");
  emit_report(tables.rows, ReportFormat::Csv, out / "report" / "summary.csv");
  emit_report(tables.rows, ReportFormat::Json, out / "report" / "summary.json");
  write_finetune_csv(tables.finetune_rows, out / "report" / "finetune.csv");
  write_ablation_csv(tables.ablation_rows, out / "report" / "ablation.csv");
  write_defense_csv(defense_rows, out / "report" / "defense.csv");

  // Run manifest: digest of every artifact the run produced.
  {
    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(out)) {
      if (entry.is_regular_file() &&
          entry.path().filename() != "run_digests.json") {
        files.push_back(fs::relative(entry.path(), out));
      }
    }
    std::sort(files.begin(), files.end());
    ordered_json digests;
    for (const fs::path& f : files) {
      digests[f.generic_string()] = sha256_file(out / f);
    }
    std::ofstream dig(out / "run_digests.json", std::ios::trunc);
    if (!dig) throw IoError("cannot write run_digests.json");
    dig << digests.dump(2) << '\n';
  }

  ExperimentReport report;
  report.reference = tables.ref;
  report.rows = std::move(tables.rows);
  report.finetune_rows = std::move(tables.finetune_rows);
  report.ablation_rows = std::move(tables.ablation_rows);
  report.defense_rows = std::move(defense_rows);
  report.out_dir = out;
  return report;
}

void emit_report(const std::vector<ChangeRow>& rows, ReportFormat format,
                 const fs::path& path) {
  if (rows.empty()) throw UsageError("emit_report: no rows");
  if (format == ReportFormat::Csv) {
    write_change_csv(rows, path);
    return;
  }
  ordered_json j;
  j["schema_version"] = 1;
  ordered_json arr = ordered_json::array();
  for (const ChangeRow& r : rows) {
    ordered_json row;
    row["algorithm"] = r.algorithm;
    row["rate"] = r.rate;
    row["mode"] = r.mode;
    row["schedule"] = r.schedule;
    row["mean_return"] = r.mean_return;
    row["normalized_return"] = r.normalized_return;
    if (std::isnan(r.change_pct)) {
      row["change_pct"] = nullptr;
    } else {
      row["change_pct"] = r.change_pct;
    }
    arr.push_back(row);
  }
  j["rows"] = arr;
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report: " + path.string());
  out << j.dump(2) << '\n';
}

std::vector<ChangeRow> parse_report_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report csv: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw FormatError("empty report csv");
  if (line != "algorithm,rate,mode,schedule,mean_return,normalized_return,change_pct") {
    throw FormatError("unexpected report csv header: " + line);
  }
  std::vector<ChangeRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
      const std::size_t comma = line.find(',', start);
      cells.push_back(line.substr(start, comma - start));
      if (comma == std::string::npos) break;
      start = comma + 1;
    }
    if (cells.size() != 7) throw FormatError("bad report csv row: " + line);
    ChangeRow r;
    r.algorithm = cells[0];
    r.rate = std::stod(cells[1]);
    r.mode = cells[2];
    r.schedule = cells[3];
    r.mean_return = std::stod(cells[4]);
    r.normalized_return = std::stod(cells[5]);
    r.change_pct = std::stod(cells[6]);
    rows.push_back(std::move(r));
  }
  return rows;
}

std::vector<ChangeRow> parse_report_json(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report json: " + path.string());
  try {
    json j;
    in >> j;
    std::vector<ChangeRow> rows;
    for (const auto& row : j.at("rows")) {
      ChangeRow r;
      r.algorithm = row.at("algorithm").get<std::string>();
      r.rate = row.at("rate").get<double>();
      r.mode = row.at("mode").get<std::string>();
      r.schedule = row.at("schedule").get<std::string>();
      r.mean_return = row.at("mean_return").get<double>();
      r.normalized_return = row.at("normalized_return").get<double>();
      r.change_pct = row.at("change_pct").is_null()
                         ? std::numeric_limits<double>::quiet_NaN()
                         : row.at("change_pct").get<double>();
      rows.push_back(std::move(r));
    }
    return rows;
  } catch (const json::exception& e) {
    throw FormatError("bad report json " + path.string() + ": " + e.what());
  }
}

void rebuild_reports(const fs::path& dir) {
  const auto index = read_eval_index(dir / "evals" / "index.json");
  fs::create_directories(dir / "report");
  TableBundle tables = build_tables(dir, index);
  save_reference(tables.ref, dir / "report" / "reference.json");
  emit_report(tables.rows, ReportFormat::Csv, dir / "report" / "summary.csv");
  emit_report(tables.rows, ReportFormat::Json, dir / "report" / "summary.json");
  write_finetune_csv(tables.finetune_rows, dir / "report" / "finetune.csv");
  write_ablation_csv(tables.ablation_rows, dir / "report" / "ablation.csv");
}

}  // namespace baffle
