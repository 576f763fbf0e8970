// baffle: a laboratory for backdoor data-poisoning attacks on offline RL.
// Subcommands cover the full pipeline: collect, train, poison, eval,
// finetune, defend, hash, export-jsonl, run, report.

#include <CLI11.hpp>

#include <cstdio>
#include <iostream>
#include <memory>
#include <optional>

#include <nlohmann/json.hpp>

#include "baffle/dataset.hpp"
#include "baffle/defend.hpp"
#include "baffle/errors.hpp"
#include "baffle/evaluate.hpp"
#include "baffle/experiment.hpp"
#include "baffle/hashing.hpp"
#include "baffle/poison.hpp"
#include "baffle/report.hpp"
#include "baffle/train.hpp"

namespace {

using namespace baffle;

EnvSpec parse_env(const std::string& env_name, int n_states, int max_steps) {
  if (env_id_from_string(env_name) == EnvId::ChainWalk) {
    return chain_walk_spec(n_states, max_steps);
  }
  return patch_grid_spec(max_steps);
}

// Policy specifier: "tabular:maximize", "tabular:minimize", or a checkpoint
// path.
std::unique_ptr<Policy> resolve_policy(const std::string& spec_str,
                                       const EnvSpec& env) {
  if (spec_str.rfind("tabular:", 0) == 0) {
    return make_tabular_policy(env, objective_from_string(spec_str.substr(8)),
                               1.0);
  }
  return std::make_unique<MlpPolicy>(load_checkpoint(spec_str).model);
}

// Schedule specifier: "none", "distributed:K", "onetime:L".
TriggerSchedule parse_schedule(const std::string& s, std::uint64_t seed) {
  TriggerSchedule schedule;
  schedule.seed = seed;
  const std::size_t colon = s.find(':');
  const std::string name = s.substr(0, colon);
  schedule.strategy = trigger_strategy_from_string(name);
  if (schedule.strategy == TriggerStrategy::None) return schedule;
  if (colon == std::string::npos) {
    throw UsageError("schedule " + name + " needs a parameter, e.g. " + name +
                     ":20");
  }
  const int value = std::stoi(s.substr(colon + 1));
  if (schedule.strategy == TriggerStrategy::Distributed) {
    schedule.interval = value;
  } else {
    schedule.length = value;
  }
  return schedule;
}

// Noise specifier: "gaussian:SIGMA" or "uniform".
NoiseCfg parse_noise(const std::string& s, std::uint64_t seed) {
  NoiseCfg noise;
  noise.seed = seed;
  if (s == "uniform") {
    noise.kind = NoiseCfg::Kind::UniformOnImage;
    return noise;
  }
  if (s.rfind("gaussian", 0) == 0) {
    noise.kind = NoiseCfg::Kind::GaussianOnTriggerDims;
    const std::size_t colon = s.find(':');
    if (colon != std::string::npos) noise.sigma = std::stod(s.substr(colon + 1));
    return noise;
  }
  throw UsageError("unknown noise spec: " + s);
}

int run_cli(int argc, char** argv) {
  CLI::App app{"baffle: backdoor data-poisoning lab for offline RL"};
  app.require_subcommand(1);

  // ---- collect ----
  auto* collect_cmd = app.add_subcommand("collect", "Roll out a behavior policy into a dataset");
  std::string c_env = "chainwalk", c_policy = "tabular:maximize", c_out;
  int c_nstates = 11, c_maxsteps = 100, c_episodes = 2000;
  double c_epsilon = 0.3;
  std::uint64_t c_seed = 1;
  collect_cmd->add_option("--env", c_env, "chainwalk|patchgrid");
  collect_cmd->add_option("--n-states", c_nstates, "ChainWalk size");
  collect_cmd->add_option("--max-steps", c_maxsteps, "episode horizon");
  collect_cmd->add_option("--policy", c_policy, "tabular:maximize|tabular:minimize|checkpoint.bflm");
  collect_cmd->add_option("--episodes", c_episodes);
  collect_cmd->add_option("--epsilon", c_epsilon, "per-step uniform-action probability");
  collect_cmd->add_option("--seed", c_seed);
  collect_cmd->add_option("--out", c_out)->required();

  // ---- train ----
  auto* train_cmd = app.add_subcommand("train", "Train an agent on a dataset");
  std::string t_in, t_out, t_algo = "fqi", t_objective = "maximize";
  TrainConfig t_cfg;
  train_cmd->add_option("--in", t_in, "dataset .bfl")->required();
  train_cmd->add_option("--out", t_out, "checkpoint .bflm")->required();
  train_cmd->add_option("--algo", t_algo, "bc|fqi|cql");
  train_cmd->add_option("--objective", t_objective, "maximize|minimize");
  train_cmd->add_option("--gamma", t_cfg.gamma);
  train_cmd->add_option("--steps", t_cfg.steps);
  train_cmd->add_option("--batch-size", t_cfg.batch_size);
  train_cmd->add_option("--lr", t_cfg.learning_rate);
  train_cmd->add_option("--target-sync", t_cfg.target_sync_every);
  train_cmd->add_option("--cql-alpha", t_cfg.cql_alpha);
  train_cmd->add_option("--seed", t_cfg.seed);

  // ---- poison ----
  auto* poison_cmd = app.add_subcommand("poison", "Inject misleading experiences into a dataset");
  std::string p_in, p_weak, p_out, p_manifest, p_mode = "replace", p_trigger = "auto";
  double p_rate = 0.1;
  std::string p_rhigh = "q0.75";
  int p_patch = 2;
  std::vector<std::uint32_t> p_dims = {3, 4};
  std::uint64_t p_seed = 1;
  poison_cmd->add_option("--in", p_in, "clean dataset .bfl")->required();
  poison_cmd->add_option("--weak", p_weak, "weak-policy checkpoint .bflm")->required();
  poison_cmd->add_option("--rate", p_rate, "poisoning rate in [0,1]");
  poison_cmd->add_option("--mode", p_mode, "replace|add");
  poison_cmd->add_option("--trigger", p_trigger, "auto | trigger.json path");
  poison_cmd->add_option("--trigger-dims", p_dims, "dims for auto vector triggers");
  poison_cmd->add_option("--patch-size", p_patch, "size for auto patch triggers");
  poison_cmd->add_option("--r-high", p_rhigh, "manipulated reward: number or q0.75");
  poison_cmd->add_option("--seed", p_seed);
  poison_cmd->add_option("--out", p_out, "poisoned dataset .bfl")->required();
  poison_cmd->add_option("--manifest", p_manifest, "poison manifest .json")->required();
  std::string p_trigger_out;
  poison_cmd->add_option("--trigger-out", p_trigger_out,
                         "also write the trigger spec as json");

  // ---- eval ----
  auto* eval_cmd = app.add_subcommand("eval", "Roll out a policy under a trigger schedule");
  std::string e_env = "chainwalk", e_policy, e_schedule = "none", e_trigger, e_noise, e_out;
  int e_nstates = 11, e_maxsteps = 100, e_episodes = 100;
  std::uint64_t e_seed = 1;
  eval_cmd->add_option("--env", e_env, "chainwalk|patchgrid");
  eval_cmd->add_option("--n-states", e_nstates);
  eval_cmd->add_option("--max-steps", e_maxsteps);
  eval_cmd->add_option("--policy", e_policy, "checkpoint or tabular:<objective>")->required();
  eval_cmd->add_option("--episodes", e_episodes);
  eval_cmd->add_option("--schedule", e_schedule, "none|distributed:K|onetime:L");
  eval_cmd->add_option("--trigger", e_trigger, "trigger.json (required unless none)");
  eval_cmd->add_option("--noise", e_noise, "gaussian:SIGMA|uniform");
  eval_cmd->add_option("--seed", e_seed);
  eval_cmd->add_option("--out", e_out, "eval result .json")->required();

  // ---- finetune ----
  auto* ft_cmd = app.add_subcommand("finetune", "Continue training a checkpoint on a benign dataset");
  std::string f_in, f_data, f_out;
  std::int64_t f_steps = -1;
  std::uint64_t f_seed = 1;
  ft_cmd->add_option("--in", f_in, "checkpoint .bflm")->required();
  ft_cmd->add_option("--data", f_data, "benign dataset .bfl")->required();
  ft_cmd->add_option("--steps", f_steps, "default: 10% of the original steps");
  ft_cmd->add_option("--seed", f_seed);
  ft_cmd->add_option("--out", f_out)->required();

  // ---- defend ----
  auto* defend_cmd = app.add_subcommand("defend", "Scan a dataset for poisoned records");
  std::string d_method = "clustering", d_model, d_data, d_manifest, d_out;
  std::uint64_t d_expected = 0, d_seed = 1;
  defend_cmd->add_option("--method", d_method, "clustering|spectral");
  defend_cmd->add_option("--model", d_model, "agent checkpoint .bflm")->required();
  defend_cmd->add_option("--data", d_data, "dataset .bfl")->required();
  defend_cmd->add_option("--manifest", d_manifest, "poison manifest for scoring");
  defend_cmd->add_option("--expected-count", d_expected, "spectral: expected poisoned count");
  defend_cmd->add_option("--seed", d_seed);
  defend_cmd->add_option("--out", d_out)->required();

  // ---- hash ----
  auto* hash_cmd = app.add_subcommand("hash", "Create or verify a dataset integrity manifest");
  std::string h_in, h_out, h_verify;
  hash_cmd->add_option("--in", h_in)->required();
  hash_cmd->add_option("--out", h_out, "write manifest json");
  hash_cmd->add_option("--verify", h_verify, "check against manifest json");

  // ---- export-jsonl ----
  auto* export_cmd = app.add_subcommand("export-jsonl", "Dump a dataset as JSON lines");
  std::string x_in, x_out;
  export_cmd->add_option("--in", x_in)->required();
  export_cmd->add_option("--out", x_out)->required();

  // ---- run ----
  auto* run_cmd = app.add_subcommand("run", "Run a full experiment from a config file");
  std::string r_config, r_out_override;
  std::optional<std::uint64_t> r_seed_override;
  run_cmd->add_option("--config", r_config)->required();
  run_cmd->add_option("--out", r_out_override, "override out_dir");
  run_cmd->add_option("--seed", r_seed_override, "override master seed");

  // ---- report ----
  auto* report_cmd = app.add_subcommand("report", "Rebuild derived tables from eval artifacts");
  std::string rp_dir;
  report_cmd->add_option("--dir", rp_dir, "experiment output directory")->required();

  CLI11_PARSE(app, argc, argv);

  if (collect_cmd->parsed()) {
    const EnvSpec env = parse_env(c_env, c_nstates, c_maxsteps);
    const auto policy = resolve_policy(c_policy, env);
    Dataset ds = collect(env, *policy, c_episodes, c_epsilon, c_seed);
    save(ds, c_out);
    std::cout << "wrote " << ds.size() << " records to " << c_out << "\n";
    return 0;
  }

  if (train_cmd->parsed()) {
    t_cfg.algorithm = algorithm_from_string(t_algo);
    t_cfg.objective = objective_from_string(t_objective);
    Dataset ds = load(t_in);
    TrainResult result = train(ds, t_cfg);
    nlohmann::ordered_json meta;
    meta["dataset_digest"] = sha256_file(t_in);
    meta["final_loss"] = result.final_loss;
    save_checkpoint(result.model, t_cfg, t_out, meta.dump(2));
    std::cout << "trained " << t_algo << " for " << t_cfg.steps
              << " steps, final loss " << result.final_loss << "\n";
    return 0;
  }

  if (poison_cmd->parsed()) {
    Dataset clean = load(p_in);
    const MlpPolicy weak(load_checkpoint(p_weak).model);
    TriggerSpec trigger;
    if (p_trigger == "auto") {
      trigger = clean.header.obs_layout.kind == ObsKind::Vector
                    ? make_vector_trigger(clean, p_dims)
                    : make_patch_trigger(clean.header.obs_layout, p_patch);
    } else {
      trigger = load_trigger(p_trigger);
    }
    PoisonConfig cfg;
    cfg.rate = p_rate;
    cfg.mode = poison_mode_from_string(p_mode);
    if (p_rhigh != "q0.75") cfg.r_high = std::stod(p_rhigh);
    cfg.seed = p_seed;
    cfg.weak_policy_digest = sha256_file(p_weak);
    PoisonResult result = poison_dataset(clean, weak, trigger, cfg);
    save(result.dataset, p_out);
    save_poison_manifest(result.manifest, p_manifest);
    if (!p_trigger_out.empty()) save_trigger(trigger, p_trigger_out);
    std::cout << "poisoned " << result.manifest.indices.size() << " of "
              << result.dataset.size() << " records (r_high "
              << result.manifest.r_high << ")\n";
    return 0;
  }

  if (eval_cmd->parsed()) {
    const EnvSpec env = parse_env(e_env, e_nstates, e_maxsteps);
    const auto policy = resolve_policy(e_policy, env);
    TriggerSchedule schedule = parse_schedule(e_schedule, e_seed ^ 0x5c4edULL);
    if (!e_noise.empty()) schedule.noise = parse_noise(e_noise, e_seed ^ 0x401feULL);
    TriggerSpec trigger;
    const TriggerSpec* trigger_ptr = nullptr;
    if (schedule.strategy != TriggerStrategy::None) {
      if (e_trigger.empty()) {
        throw UsageError("--trigger is required unless --schedule none");
      }
      trigger = load_trigger(e_trigger);
      trigger_ptr = &trigger;
    }
    EvalResult result =
        rollout(env, *policy, e_episodes, schedule, trigger_ptr, e_seed);
    save_eval(result, e_out);
    std::cout << "mean return " << result.mean_return << " over "
              << result.episodes << " episodes\n";
    return 0;
  }

  if (ft_cmd->parsed()) {
    Checkpoint ck = load_checkpoint(f_in);
    Dataset benign = load(f_data);
    TrainConfig cfg = ck.config;
    cfg.steps = f_steps >= 0
                    ? f_steps
                    : static_cast<std::int64_t>(std::llround(0.1 * static_cast<double>(ck.config.steps)));
    cfg.seed = f_seed;
    TrainResult result = finetune(ck.model, benign, cfg);
    nlohmann::ordered_json meta;
    meta["finetuned_from"] = sha256_file(f_in);
    meta["final_loss"] = result.final_loss;
    save_checkpoint(result.model, cfg, f_out, meta.dump(2));
    std::cout << "finetuned for " << cfg.steps << " steps\n";
    return 0;
  }

  if (defend_cmd->parsed()) {
    const MlpModel model = load_checkpoint(d_model).model;
    Dataset data = load(d_data);
    DetectionReport report;
    if (d_method == "clustering") {
      report = activation_clustering_detect(model, data, 0.35, d_seed);
    } else if (d_method == "spectral") {
      std::uint64_t expected = d_expected;
      if (expected == 0 && !d_manifest.empty()) {
        expected = load_poison_manifest(d_manifest).indices.size();
      }
      if (expected == 0) {
        throw UsageError("spectral needs --expected-count or --manifest");
      }
      report = spectral_detect(model, data, expected);
    } else {
      throw UsageError("unknown method: " + d_method);
    }
    if (!d_manifest.empty()) {
      score_detection(report, load_poison_manifest(d_manifest).indices,
                      data.size());
    }
    save_detection_report(report, d_out);
    std::cout << report.method << ": flagged " << report.flagged.size()
              << " records";
    if (report.scored) {
      std::cout << " (P " << report.precision << ", R " << report.recall
                << ", F1 " << report.f1 << ")";
    }
    std::cout << "\n";
    return 0;
  }

  if (hash_cmd->parsed()) {
    if (!h_verify.empty()) {
      const bool ok = verify(h_in, load_hash_manifest(h_verify));
      std::cout << (ok ? "OK" : "MISMATCH") << "\n";
      return ok ? 0 : 3;
    }
    if (h_out.empty()) throw UsageError("hash needs --out or --verify");
    save_hash_manifest(hash_manifest(h_in), h_out);
    std::cout << "wrote manifest " << h_out << "\n";
    return 0;
  }

  if (export_cmd->parsed()) {
    export_jsonl(load(x_in), x_out);
    std::cout << "wrote " << x_out << "\n";
    return 0;
  }

  if (run_cmd->parsed()) {
    ExperimentConfig config = load_experiment_config(r_config);
    if (!r_out_override.empty()) config.out_dir = r_out_override;
    if (r_seed_override) config.seed = *r_seed_override;
    ExperimentReport report = run_experiment(config);
    std::cout << "experiment complete: " << report.rows.size()
              << " summary rows in " << (report.out_dir / "report").string()
              << "\n";
    return 0;
  }

  if (report_cmd->parsed()) {
    rebuild_reports(rp_dir);
    std::cout << "rebuilt reports under " << rp_dir << "/report\n";
    return 0;
  }

  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run_cli(argc, argv);
  } catch (const baffle::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return e.exit_code();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
