// Operator entry point: train / simulate / evaluate / league over scenario
// files and checkpoints. Every successful command drops a manifest next to
// its artifacts; reruns with identical inputs and seeds reproduce metric
// logs, records, and tables byte for byte (manifests carry timestamps and
// are exempt).
//
// Exit codes: 0 success, 2 config or input error, 3 training divergence,
// 4 checkpoint/scenario incompatibility.

#include <cinttypes>
#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "lemsim/ippo.hpp"
#include "lemsim/metrics.hpp"
#include "lemsim/scenario.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace lemsim;

namespace {

constexpr const char* kToolVersion = "lemsim 0.1.0";

int default_workers() {
  unsigned n = std::thread::hardware_concurrency();
  return n == 0 ? 1 : static_cast<int>(n);
}

std::string default_out(const std::string& command) {
  const char* env = std::getenv("LEMSIM_OUT_DIR");
  fs::path root = env && *env ? fs::path(env) : fs::path("runs");
  return (root / command).string();
}

std::string now_iso8601() {
  std::time_t t = std::time(nullptr);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string file_hash_hex(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::invalid_argument("cannot open for hashing: " + path);
  std::uint64_t h = 1469598103934665603ULL;
  char c;
  while (f.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, h);
  return buf;
}

void write_text_atomic(const fs::path& path, const std::string& text) {
  fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + tmp.string());
    f << text;
  }
  fs::rename(tmp, path);
}

// Manifest: ties every artifact of a run to its inputs. Written last,
// atomically, so a manifest's presence means the run finished.
void write_manifest(const fs::path& out_dir, const std::string& command,
                    const std::string& scenario_path, const json& config,
                    std::uint64_t seed, const std::string& started_at,
                    const std::vector<std::string>& artifacts) {
  json m;
  m["command"] = command;
  m["scenario_path"] = scenario_path;
  m["scenario_hash"] = file_hash_hex(scenario_path);
  m["config"] = config;
  m["seed"] = seed;
  m["started_at"] = started_at;
  m["finished_at"] = now_iso8601();
  m["artifacts"] = artifacts;
  m["tool_version"] = kToolVersion;
  write_text_atomic(out_dir / "manifest.json", m.dump(2) + "\n");
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

// ---------------------------------------------------------------- train --

struct TrainArgs {
  std::string scenario;
  std::string out;
  std::uint64_t seed = 0;
  bool seed_set = false;
  TrainConfig cfg;
  bool no_adv_norm = false;
};

int cmd_train(const TrainArgs& a) {
  std::string started = now_iso8601();
  Scenario sc = load_scenario(a.scenario);
  TrainConfig cfg = a.cfg;
  cfg.normalize_advantage = !a.no_adv_norm;
  cfg.seed = a.seed_set ? a.seed : sc.seed;
  cfg.validate();

  fs::path out = a.out;
  fs::create_directories(out);
  std::ofstream metrics_f(out / "metrics.jsonl",
                          std::ios::binary | std::ios::trunc);
  if (!metrics_f)
    throw std::runtime_error("cannot write " + (out / "metrics.jsonl").string());

  std::vector<std::string> artifacts;
  std::vector<IterationMetrics> pending;
  auto flush_iteration = [&] {
    if (pending.empty()) return;
    json line;
    line["iteration"] = pending.front().iteration;
    line["steps_sampled"] = pending.front().steps_sampled;
    json agents = json::array();
    for (const auto& m : pending) {
      json r;
      r["agent"] = m.agent;
      r["mean_reward"] = m.mean_reward;
      r["min_reward"] = m.min_reward;
      r["max_reward"] = m.max_reward;
      r["policy_loss"] = m.policy_loss;
      r["value_loss"] = m.value_loss;
      r["entropy"] = m.entropy;
      agents.push_back(std::move(r));
    }
    line["agents"] = std::move(agents);
    metrics_f << line.dump() << "\n";
    pending.clear();
  };

  auto on_metrics = [&](const IterationMetrics& m) {
    if (!pending.empty() && pending.front().iteration != m.iteration)
      flush_iteration();
    pending.push_back(m);
  };
  // The iteration-0 snapshot exists only as the implicit starting point;
  // files begin at the first interval hit.
  auto on_checkpoint = [&](int iter, const std::vector<PolicyParams>& pol) {
    if (iter == 0) return;
    char name[40];
    std::snprintf(name, sizeof name, "checkpoint_%06d.ckpt", iter);
    save_checkpoint((out / name).string(), pol, sc);
    artifacts.push_back(name);
  };

  TrainResult result = train(sc, cfg, on_metrics, on_checkpoint);
  flush_iteration();
  metrics_f.close();

  save_checkpoint((out / "checkpoint_final.ckpt").string(), result.policies,
                  sc);
  artifacts.push_back("checkpoint_final.ckpt");
  artifacts.push_back("metrics.jsonl");

  json config;
  config["budget_iters"] = cfg.iterations;
  config["batch_size"] = cfg.batch_size;
  config["minibatch_size"] = cfg.minibatch_size;
  config["epochs"] = cfg.epochs;
  config["lr"] = cfg.lr;
  config["clip_eps"] = cfg.clip_eps;
  config["entropy_coef"] = cfg.entropy_coef;
  config["value_coef"] = cfg.value_coef;
  config["gamma"] = cfg.gamma;
  config["gae_lambda"] = cfg.gae_lambda;
  config["normalize_advantage"] = cfg.normalize_advantage;
  config["hidden"] = cfg.hidden;
  config["checkpoint_interval"] = cfg.checkpoint_interval;
  config["workers"] = cfg.workers;
  config["wall_clock_cap_s"] = cfg.wall_clock_cap_s;
  config["completed_iterations"] = result.completed_iterations;
  config["diverged"] = result.diverged;
  write_manifest(out, "train", a.scenario, config, cfg.seed, started,
                 artifacts);

  if (result.diverged) {
    std::cerr << "training diverged after " << result.completed_iterations
              << " completed iteration(s); parameters rolled back\n";
    return 3;
  }
  return 0;
}

// ------------------------------------------------------------- simulate --

struct SimulateArgs {
  std::string scenario;
  std::string checkpoint;
  std::string out;
  int episodes = 10;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = default_workers();
};

int cmd_simulate(const SimulateArgs& a) {
  std::string started = now_iso8601();
  Scenario sc = load_scenario(a.scenario);
  std::uint64_t seed = a.seed_set ? a.seed : sc.seed;
  auto policies = load_checkpoint(a.checkpoint, sc);

  fs::path out = a.out;
  fs::create_directories(out);
  std::ofstream rec_f(out / "records.jsonl",
                      std::ios::binary | std::ios::trunc);
  if (!rec_f)
    throw std::runtime_error("cannot write " + (out / "records.jsonl").string());
  simulate(sc, policies, a.episodes, seed, a.workers,
           [&](const EpisodeRecord& r) { rec_f << record_to_line(r) << "\n"; });
  rec_f.close();

  json config;
  config["checkpoint"] = a.checkpoint;
  config["episodes"] = a.episodes;
  config["workers"] = a.workers;
  write_manifest(out, "simulate", a.scenario, config, seed, started,
                 {"records.jsonl"});
  return 0;
}

// ------------------------------------------------------------- evaluate --

struct EvaluateArgs {
  std::string scenario;
  std::string records;
  std::string out;
};

int cmd_evaluate(const EvaluateArgs& a) {
  std::string started = now_iso8601();
  Scenario sc = load_scenario(a.scenario);
  auto records = read_records(a.records);
  if (records.empty())
    throw std::invalid_argument("records file has no episodes: " + a.records);
  // Aggregate fully before touching the output directory: a failed run
  // leaves nothing behind.
  SummaryTables tables = aggregate_results(records, sc);
  auto paths = write_summary_csvs(tables, a.out);

  std::vector<std::string> artifacts;
  for (const auto& p : paths)
    artifacts.push_back(fs::path(p).filename().string());
  json config;
  config["records"] = a.records;
  config["episodes"] = records.size();
  write_manifest(a.out, "evaluate", a.scenario, config, sc.seed, started,
                 artifacts);
  return 0;
}

// --------------------------------------------------------------- league --

struct LeagueArgs {
  std::string scenario;
  std::vector<std::string> checkpoints;
  std::string out;
  int rounds = 8;
  int episodes_per_lineup = 1;
  std::uint64_t seed = 0;
  bool seed_set = false;
  int workers = default_workers();
};

int cmd_league(const LeagueArgs& a) {
  std::string started = now_iso8601();
  for (size_t i = 0; i < a.checkpoints.size(); ++i)
    for (size_t j = i + 1; j < a.checkpoints.size(); ++j)
      if (fs::weakly_canonical(a.checkpoints[i]) ==
          fs::weakly_canonical(a.checkpoints[j]))
        throw std::invalid_argument("duplicate checkpoint entry: " +
                                    a.checkpoints[j]);

  Scenario sc = load_scenario(a.scenario);
  std::uint64_t seed = a.seed_set ? a.seed : sc.seed;
  std::vector<std::vector<PolicyParams>> configs;
  configs.reserve(a.checkpoints.size());
  for (const auto& path : a.checkpoints)
    configs.push_back(load_checkpoint(path, sc));

  LeagueTable table = run_league(sc, configs, a.rounds, a.episodes_per_lineup,
                                 seed, a.workers);

  fs::create_directories(a.out);
  std::ostringstream csv;
  csv << "rank,config,checkpoint,appearances,mean_score,normalized\n";
  for (const auto& e : table.entries)
    csv << e.rank << "," << e.config << "," << a.checkpoints[e.config] << ","
        << e.appearances << "," << num(e.mean_score) << ","
        << num(e.normalized) << "\n";
  write_text_atomic(fs::path(a.out) / "league.csv", csv.str());

  json config;
  config["checkpoints"] = a.checkpoints;
  config["rounds"] = a.rounds;
  config["episodes_per_lineup"] = a.episodes_per_lineup;
  config["workers"] = a.workers;
  write_manifest(a.out, "league", a.scenario, config, seed, started,
                 {"league.csv"});
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"long-term electricity market simulator"};
  app.require_subcommand(1);

  TrainArgs ta;
  ta.out = default_out("train");
  ta.cfg.workers = default_workers();
  auto* train_cmd =
      app.add_subcommand("train", "train agent policies on a scenario");
  train_cmd->add_option("--scenario", ta.scenario, "scenario JSON file")
      ->required();
  train_cmd->add_option("--out", ta.out, "output directory");
  train_cmd->add_option("--seed", ta.seed, "run seed (default: scenario seed)")
      ->each([&](const std::string&) { ta.seed_set = true; });
  train_cmd->add_option("--budget-iters", ta.cfg.iterations,
                        "training budget in iterations");
  train_cmd->add_option("--batch", ta.cfg.batch_size,
                        "min env steps per agent per iteration");
  train_cmd->add_option("--minibatch", ta.cfg.minibatch_size,
                        "minibatch size (0 = full batch)");
  train_cmd->add_option("--epochs", ta.cfg.epochs, "update epochs per batch");
  train_cmd->add_option("--lr", ta.cfg.lr, "learning rate");
  train_cmd->add_option("--clip", ta.cfg.clip_eps, "PPO clip range");
  train_cmd->add_option("--entropy-coef", ta.cfg.entropy_coef,
                        "entropy bonus coefficient");
  train_cmd->add_option("--value-coef", ta.cfg.value_coef,
                        "value loss coefficient");
  train_cmd->add_option("--gae-lambda", ta.cfg.gae_lambda, "GAE lambda");
  train_cmd->add_option("--hidden", ta.cfg.hidden, "hidden layer widths")
      ->delimiter(',');
  train_cmd->add_option("--checkpoint-interval", ta.cfg.checkpoint_interval,
                        "iterations between checkpoints");
  train_cmd->add_option("--workers", ta.cfg.workers,
                        "rollout worker threads (default: cores)");
  train_cmd->add_option("--wall-clock-cap-s", ta.cfg.wall_clock_cap_s,
                        "safety cap in seconds (0 = none)");
  train_cmd->add_flag("--no-adv-norm", ta.no_adv_norm,
                      "disable advantage normalization");

  SimulateArgs sa;
  sa.out = default_out("simulate");
  auto* sim_cmd = app.add_subcommand(
      "simulate", "roll out frozen policies and record episodes");
  sim_cmd->add_option("--scenario", sa.scenario, "scenario JSON file")
      ->required();
  sim_cmd->add_option("--checkpoint", sa.checkpoint, "policy checkpoint")
      ->required();
  sim_cmd->add_option("--episodes", sa.episodes, "episode count");
  sim_cmd->add_option("--seed", sa.seed, "run seed (default: scenario seed)")
      ->each([&](const std::string&) { sa.seed_set = true; });
  sim_cmd->add_option("--out", sa.out, "output directory");
  sim_cmd->add_option("--workers", sa.workers, "worker threads");

  EvaluateArgs ea;
  ea.out = default_out("evaluate");
  auto* eval_cmd = app.add_subcommand(
      "evaluate", "aggregate episode records into summary tables");
  eval_cmd->add_option("--scenario", ea.scenario, "scenario JSON file")
      ->required();
  eval_cmd->add_option("--records", ea.records, "records file (JSONL)")
      ->required();
  eval_cmd->add_option("--out", ea.out, "output directory");

  LeagueArgs la;
  la.out = default_out("league");
  auto* league_cmd = app.add_subcommand(
      "league", "rank checkpoints by randomized-lineup competition");
  league_cmd->add_option("--scenario", la.scenario, "scenario JSON file")
      ->required();
  league_cmd
      ->add_option("--checkpoint", la.checkpoints,
                   "policy checkpoint (repeat per entrant)")
      ->required();
  league_cmd->add_option("--rounds", la.rounds, "lineup draws");
  league_cmd->add_option("--episodes-per-lineup", la.episodes_per_lineup,
                         "episodes per drawn lineup");
  league_cmd
      ->add_option("--seed", la.seed, "run seed (default: scenario seed)")
      ->each([&](const std::string&) { la.seed_set = true; });
  league_cmd->add_option("--out", la.out, "output directory");
  league_cmd->add_option("--workers", la.workers, "worker threads");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) return cmd_train(ta);
    if (sim_cmd->parsed()) return cmd_simulate(sa);
    if (eval_cmd->parsed()) return cmd_evaluate(ea);
    return cmd_league(la);
  } catch (const CheckpointMismatchError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
