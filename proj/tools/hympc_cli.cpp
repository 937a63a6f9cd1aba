#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "hympc/harness.hpp"

namespace {

using nlohmann::json;

struct CliOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out = "out";
  std::optional<std::string> controller;
  std::optional<int> workers;
  bool verbose = false;
};

hympc::ScenarioConfig make_scenario(const CliOptions& cli) {
  hympc::ScenarioConfig cfg = cli.config_path.empty()
                                  ? hympc::default_scenario()
                                  : hympc::load_config(cli.config_path);
  if (cli.seed) cfg.seed = *cli.seed;
  if (cli.controller) {
    cfg.controller = hympc::controller_from_string(*cli.controller);
  }
  if (cli.workers) cfg.workers = *cli.workers;
  hympc::validate(cfg);
  return cfg;
}

std::string model_dir(const hympc::ScenarioConfig& cfg,
                      const CliOptions& cli) {
  const std::filesystem::path dir(cfg.deep_model_dir);
  if (dir.is_absolute()) return dir.string();
  return (std::filesystem::path(cli.out) / dir).string();
}

/// Loads the distilled policy when the run needs one; compare always does.
std::optional<hympc::DeepPolicy> maybe_load_policy(
    const hympc::ScenarioConfig& cfg, const CliOptions& cli, bool required) {
  if (!required && cfg.controller != hympc::ControllerKind::kDeep) {
    return std::nullopt;
  }
  return hympc::DeepPolicy::load(model_dir(cfg, cli));
}

std::ostream* progress_stream(const CliOptions& cli) {
  return cli.verbose ? &std::cerr : nullptr;
}

int cmd_simulate(const CliOptions& cli) {
  const hympc::ScenarioConfig cfg = make_scenario(cli);
  const std::optional<hympc::DeepPolicy> policy =
      maybe_load_policy(cfg, cli, false);
  std::filesystem::create_directories(cli.out);

  hympc::EpisodeOptions opts;
  opts.csv_path = (std::filesystem::path(cli.out) / "episode.csv").string();
  if (policy) opts.deep = &*policy;
  const hympc::EpisodeMetrics m = hympc::run_episode(cfg, cfg.seed, opts);

  json out;
  out["controller"] = hympc::to_string(cfg.controller);
  out["seed"] = cfg.seed;
  out["success"] = m.success;
  out["crossed"] = m.crossed;
  out["crashed"] = m.crashed;
  out["solver_failed"] = m.solver_failed;
  out["reason"] = m.reason;
  out["ticks"] = m.ticks;
  out["duration"] = m.duration;
  if (m.traversal_error) out["error"] = *m.traversal_error;
  if (m.traversal_time) out["time"] = *m.traversal_time;
  out["log"] = opts.csv_path;

  std::ofstream(std::filesystem::path(cli.out) / "episode.json")
      << out.dump(2) << "\n";
  std::cout << out.dump(2) << std::endl;
  return 0;
}

int cmd_collect(const CliOptions& cli) {
  const hympc::ScenarioConfig cfg = make_scenario(cli);
  std::filesystem::create_directories(cli.out);
  const hympc::ReplayBuffer buf =
      hympc::collect(cfg, cfg.seed, progress_stream(cli));
  const std::string path =
      (std::filesystem::path(cli.out) / "replay.csv").string();
  buf.save_csv(path);

  json out;
  out["records"] = buf.size();
  out["path"] = path;
  std::cout << out.dump(2) << std::endl;
  return 0;
}

int cmd_train_policies(const CliOptions& cli) {
  const hympc::ScenarioConfig cfg = make_scenario(cli);
  const std::string replay_path =
      (std::filesystem::path(cli.out) / "replay.csv").string();
  const hympc::ReplayBuffer buf = hympc::ReplayBuffer::load_csv(replay_path);

  hympc::DeepPolicy policy(cfg.deep);
  if (cli.verbose) {
    std::cerr << "train-policies: " << buf.size() << " records, "
              << cfg.deep.epochs << " epochs\n";
  }
  const hympc::PolicyTrainReport report = policy.train(buf);
  const std::string dir = model_dir(cfg, cli);
  policy.save(dir);

  json out;
  out["records"] = buf.size();
  out["model_dir"] = dir;
  out["lambda_loss"] = report.lambda_loss;
  out["t_p_loss"] = report.tp_loss;
  out["lambda_epoch_loss"] = report.lambda_epoch_loss;
  out["t_p_epoch_loss"] = report.tp_epoch_loss;
  std::ofstream(std::filesystem::path(cli.out) / "train_report.json")
      << out.dump(2) << "\n";
  std::cout << out.dump(2) << std::endl;
  return 0;
}

int cmd_eval(const CliOptions& cli) {
  const hympc::ScenarioConfig cfg = make_scenario(cli);
  const std::optional<hympc::DeepPolicy> policy =
      maybe_load_policy(cfg, cli, false);
  hympc::SuiteOptions opts;
  opts.out_dir = cli.out;
  if (policy) opts.deep = &*policy;
  opts.progress = progress_stream(cli);
  const json report = hympc::run_eval(cfg, opts);
  std::cout << report.at("aggregates").dump(2) << std::endl;
  return 0;
}

int cmd_suite(const CliOptions& cli, hympc::SuiteKind kind) {
  const hympc::ScenarioConfig cfg = make_scenario(cli);
  const bool needs_model = kind == hympc::SuiteKind::kCompare;
  const std::optional<hympc::DeepPolicy> policy =
      maybe_load_policy(cfg, cli, needs_model);
  hympc::SuiteOptions opts;
  opts.out_dir = cli.out;
  if (policy) opts.deep = &*policy;
  opts.progress = progress_stream(cli);
  const json report = hympc::run_suite(kind, cfg, opts);
  std::cout << report.at("aggregates").dump(2) << std::endl;
  if (cli.verbose) {
    std::cerr << hympc::to_string(kind) << ": report written to " << cli.out
              << "/" << hympc::to_string(kind) << ".json\n";
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Swinging-gate quadrotor studies: parameterized MPC, online gate "
      "prediction, episode-based policy search, and distilled policies"};
  app.require_subcommand(1);
  app.fallthrough();

  CliOptions cli;
  app.add_option("--config", cli.config_path,
                 "JSON scenario config (defaults used when omitted)");
  app.add_option("--seed", cli.seed, "Master seed override");
  app.add_option("--out", cli.out, "Output directory")
      ->capture_default_str();
  app.add_option("--controller", cli.controller,
                 "Controller override: hympc-gaussian | hympc-deep | "
                 "oracle-dynamics | standard-mpc | manual-mpc");
  app.add_option("--workers", cli.workers, "Worker threads for suites");
  app.add_flag("--verbose", cli.verbose, "Progress lines on stderr");

  CLI::App* simulate =
      app.add_subcommand("simulate", "Fly one episode and log every tick");
  CLI::App* collect = app.add_subcommand(
      "collect", "Harvest search decisions into a replay dataset");
  CLI::App* train = app.add_subcommand(
      "train-policies", "Distill the replay dataset into policy networks");
  CLI::App* eval = app.add_subcommand(
      "eval", "Run repeated episodes of the configured controller");
  CLI::App* compare = app.add_subcommand(
      "compare", "Benchmark all controllers on identical episodes");
  CLI::App* distance = app.add_subcommand(
      "distance-sweep", "Success rate versus launch distance");
  CLI::App* robustness = app.add_subcommand(
      "robustness", "Sensitivity to the plant thrust ceiling");
  CLI::App* multigate = app.add_subcommand(
      "multigate", "Sequential traversal of several swinging gates");

  CLI11_PARSE(app, argc, argv);

  try {
    if (simulate->parsed()) return cmd_simulate(cli);
    if (collect->parsed()) return cmd_collect(cli);
    if (train->parsed()) return cmd_train_policies(cli);
    if (eval->parsed()) return cmd_eval(cli);
    if (compare->parsed()) return cmd_suite(cli, hympc::SuiteKind::kCompare);
    if (distance->parsed()) {
      return cmd_suite(cli, hympc::SuiteKind::kDistanceSweep);
    }
    if (robustness->parsed()) {
      return cmd_suite(cli, hympc::SuiteKind::kRobustness);
    }
    if (multigate->parsed()) {
      return cmd_suite(cli, hympc::SuiteKind::kMultigate);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return 2;
  }
  return 0;
}
