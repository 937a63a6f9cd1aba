#include "hympc/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <deque>
#include <exception>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <thread>

#include <nlohmann/json.hpp>

namespace hympc {
namespace {

using nlohmann::json;

/// Decides (lambda, t_p) and the plan to execute at one tick. The episode
/// loop owns the world; controllers only see the observation, the predicted
/// track of the gate they are attacking, and how many seconds of that gate's
/// motion have been observed so far (infinite for ground-truth tracks).
class TickController {
 public:
  virtual ~TickController() = default;
  virtual bool decide(const DroneState& drone, const GateObservation& gate,
                      const std::vector<GateObservation>& track,
                      const DroneState& x_target, double trusted_span,
                      std::uint64_t tick_seed, ControlDecision* out) = 0;
};

/// Candidate crossing times restricted to lookaheads the model has data
/// for: a rollout further ahead than the observed span is unvalidated
/// extrapolation. Always keeps the shortest candidate.
std::vector<double> capped_candidates(const std::vector<double>& times,
                                      double trusted_span) {
  std::vector<double> out;
  for (double tc : times) {
    if (tc <= trusted_span || out.empty()) out.push_back(tc);
  }
  return out;
}

/// Per-tick episode-based search; used by both the learned-predictor and the
/// ground-truth-predictor variants (they differ only in the track source).
class SearchController : public TickController {
 public:
  SearchController(const ScenarioConfig& cfg, const Vec3d& alpha)
      : search_cfg_(cfg.search),
        mpc_cfg_(cfg.mpc),
        reward_cfg_(cfg.reward),
        alpha_(alpha) {
    search_cfg_.candidate_times = scenario_candidate_times(cfg);
  }

  bool decide(const DroneState& drone, const GateObservation&,
              const std::vector<GateObservation>& track,
              const DroneState& x_target, double trusted_span,
              std::uint64_t tick_seed, ControlDecision* out) override {
    const GaussianPolicy p0{search_cfg_.mu0, search_cfg_.sigma0};
    SearchConfig cfg = search_cfg_;
    cfg.candidate_times =
        capped_candidates(search_cfg_.candidate_times, trusted_span);
    const SearchResult res =
        search_with_track(drone, track, alpha_, x_target, p0, cfg,
                          mpc_cfg_, reward_cfg_, tick_seed);
    if (!res.ok) return false;
    out->lambda = res.lambda;
    out->t_p = res.t_p;
    out->solution = res.solution;
    return true;
  }

 private:
  SearchConfig search_cfg_;
  MpcConfig mpc_cfg_;
  RewardConfig reward_cfg_;
  Vec3d alpha_;
};

/// Distilled heads pick (lambda, t_p); a single warm-started solve per tick.
/// Owns a copy of the policy so parallel episodes never share model state.
class DeepController : public TickController {
 public:
  DeepController(const ScenarioConfig& cfg, const DeepPolicy* model)
      : mpc_cfg_(cfg.mpc), model_(checked(model)) {}

  bool decide(const DroneState& drone, const GateObservation& gate,
              const std::vector<GateObservation>& track,
              const DroneState& x_target, double trusted_span,
              std::uint64_t, ControlDecision* out) override {
    const auto [raw_lambda, raw_t_p] = model_.infer(make_observation(drone, gate));
    const double lambda = raw_lambda;
    const double t_p = std::min(raw_t_p, std::max(trusted_span, mpc_cfg_.dt));
    MpcRequest req;
    req.x0 = drone;
    req.gate_now = gate;
    const long idx = std::clamp<long>(std::lround(t_p / mpc_cfg_.dt), 0,
                                      mpc_cfg_.horizon);
    req.gate_pred = track[static_cast<std::size_t>(idx)];
    req.x_target = x_target;
    req.lambda = lambda;
    req.t_p = t_p;
    req.t_f = mpc_cfg_.horizon_time();
    try {
      MpcSolution sol = solve(req, mpc_cfg_, have_warm_ ? &warm_ : nullptr);
      if (!std::isfinite(sol.cost)) return false;
      warm_ = sol;
      have_warm_ = true;
      out->lambda = lambda;
      out->t_p = t_p;
      out->solution = std::move(sol);
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

 private:
  static const DeepPolicy& checked(const DeepPolicy* model) {
    if (model == nullptr || !model->trained()) {
      throw std::invalid_argument(
          "harness: deep controller requires a trained policy model");
    }
    return *model;
  }

  MpcConfig mpc_cfg_;
  DeepPolicy model_;
  MpcSolution warm_;
  bool have_warm_ = false;
};

/// Fixed hybrid weights, no temporal spread, waypoint at the horizon end.
class StandardController : public TickController {
 public:
  explicit StandardController(const ScenarioConfig& cfg)
      : mpc_cfg_(cfg.mpc), lambda_(cfg.standard_lambda) {
    mpc_cfg_.weights.temporal_spread = false;
  }

  bool decide(const DroneState& drone, const GateObservation& gate,
              const std::vector<GateObservation>& track,
              const DroneState& x_target, double, std::uint64_t,
              ControlDecision* out) override {
    MpcRequest req;
    req.x0 = drone;
    req.gate_now = gate;
    req.gate_pred = track.back();
    req.x_target = x_target;
    req.lambda = lambda_;
    req.t_p = mpc_cfg_.horizon_time();
    req.t_f = mpc_cfg_.horizon_time();
    try {
      MpcSolution sol = solve(req, mpc_cfg_, have_warm_ ? &warm_ : nullptr);
      if (!std::isfinite(sol.cost)) return false;
      warm_ = sol;
      have_warm_ = true;
      out->lambda = lambda_;
      out->t_p = req.t_p;
      out->solution = std::move(sol);
      return true;
    } catch (const std::exception&) {
      return false;
    }
  }

 private:
  MpcConfig mpc_cfg_;
  double lambda_;
  MpcSolution warm_;
  bool have_warm_ = false;
};

/// Distance-ratio lambda schedule with a reward sweep over traversal times.
class ManualController : public TickController {
 public:
  ManualController(const ScenarioConfig& cfg, const Vec3d& alpha)
      : search_cfg_(cfg.search),
        mpc_cfg_(cfg.mpc),
        reward_cfg_(cfg.reward),
        alpha_(alpha) {
    search_cfg_.candidate_times = scenario_candidate_times(cfg);
  }

  bool decide(const DroneState& drone, const GateObservation& gate,
              const std::vector<GateObservation>& track,
              const DroneState& x_target, double trusted_span,
              std::uint64_t, ControlDecision* out) override {
    if (!have_t0_) {
      drone0_ = drone;
      gate0_ = gate;
      have_t0_ = true;
    }
    const double lambda = manual_lambda(drone, gate, drone0_, gate0_);
    SearchConfig cfg = search_cfg_;
    cfg.candidate_times =
        capped_candidates(search_cfg_.candidate_times, trusted_span);
    const SearchResult res = sweep_times(drone, track, alpha_, x_target,
                                         lambda, cfg, mpc_cfg_,
                                         reward_cfg_);
    if (!res.ok) return false;
    out->lambda = lambda;
    out->t_p = res.t_p;
    out->solution = res.solution;
    return true;
  }

 private:
  SearchConfig search_cfg_;
  MpcConfig mpc_cfg_;
  RewardConfig reward_cfg_;
  Vec3d alpha_;
  DroneState drone0_;
  GateObservation gate0_;
  bool have_t0_ = false;
};

std::unique_ptr<TickController> make_controller(const ScenarioConfig& cfg,
                                                const Vec3d& alpha,
                                                const DeepPolicy* deep) {
  switch (cfg.controller) {
    case ControllerKind::kGaussian:
    case ControllerKind::kOracle:
      return std::make_unique<SearchController>(cfg, alpha);
    case ControllerKind::kDeep:
      return std::make_unique<DeepController>(cfg, deep);
    case ControllerKind::kStandard:
      return std::make_unique<StandardController>(cfg);
    case ControllerKind::kManual:
      return std::make_unique<ManualController>(cfg, alpha);
  }
  throw std::logic_error("unreachable controller kind");
}

struct GateSim {
  GateGeometry geo;
  GateState state;
  GateHistory hist{0};
  std::unique_ptr<GatePredictor> predictor;
  GateObservation obs;
};

struct CoreResult {
  std::vector<GateCrossing> crossings;
  bool crashed = false;
  bool solver_failed = false;
  int ticks = 0;
  double duration = 0.0;
  std::string reason;
};

void write_log_header(std::ostream& os) {
  os << "t,px,py,pz,vx,vy,vz,qw,qx,qy,qz,c,wx,wy,wz,gate,theta,theta_dot,"
        "gate_cx,gate_cy,gate_cz,lambda,t_p,predictor_error\n";
}

void write_log_row(std::ostream& os, double t, const DroneState& d,
                   const ControlInput& u, int gate_idx, const GateState& gs,
                   const GateObservation& obs, const ControlDecision& dec,
                   double pred_err) {
  os << t << ',' << d.p.x() << ',' << d.p.y() << ',' << d.p.z() << ','
     << d.v.x() << ',' << d.v.y() << ',' << d.v.z() << ',' << d.q.w() << ','
     << d.q.x() << ',' << d.q.y() << ',' << d.q.z() << ',' << u.c << ','
     << u.omega.x() << ',' << u.omega.y() << ',' << u.omega.z() << ','
     << gate_idx << ',' << gs.theta << ',' << gs.theta_dot << ','
     << obs.center.x() << ',' << obs.center.y() << ',' << obs.center.z()
     << ',' << dec.lambda << ',' << dec.t_p << ',' << pred_err << '\n';
}

/// Shared closed-loop core: one drone, a row of gates, the active gate's
/// plane armed for crossing detection. Single-gate episodes are the
/// num_gates = 1 case with the scenario target.
CoreResult run_core(const ScenarioConfig& cfg, std::uint64_t seed,
                    const EpisodeOptions& opts, int num_gates,
                    bool per_gate_targets) {
  const double dt = cfg.episode.tick_dt;
  const double arm = cfg.gate.geometry.arm_length;
  const Vec3d alpha = cfg.gate.geometry.normal.normalized();
  const bool oracle = cfg.controller == ControllerKind::kOracle;

  std::mt19937_64 rng(spawn_seed(seed, 0));
  std::uniform_real_distribution<double> theta0(cfg.gate.theta0_range[0],
                                                cfg.gate.theta0_range[1]);
  std::uniform_real_distribution<double> theta_dot0(
      cfg.gate.theta_dot0_range[0], cfg.gate.theta_dot0_range[1]);

  std::vector<GateSim> gates(static_cast<std::size_t>(num_gates));
  for (int g = 0; g < num_gates; ++g) {
    GateSim& gs = gates[static_cast<std::size_t>(g)];
    gs.geo = cfg.gate.geometry;
    gs.geo.pivot += g * cfg.multigate.spacing * alpha;
    gs.state = GateState{theta0(rng), theta_dot0(rng)};
    gs.hist = GateHistory(static_cast<std::size_t>(cfg.predictor.history_capacity));
    if (!oracle) {
      PredictorConfig pc = cfg.predictor;
      pc.seed = spawn_seed(seed, 100 + static_cast<std::uint64_t>(g));
      gs.predictor = std::make_unique<GatePredictor>(pc, dt);
    }
  }

  auto controller = make_controller(cfg, alpha, opts.deep);

  std::ofstream csv;
  if (!opts.csv_path.empty()) {
    csv.open(opts.csv_path);
    if (!csv) {
      throw std::runtime_error("harness: cannot write " + opts.csv_path);
    }
    csv.precision(10);
    write_log_header(csv);
  }

  DroneState drone = cfg.start;
  CoreResult res;
  int active = 0;
  std::deque<std::vector<GateObservation>> recent_tracks;
  const int max_ticks =
      static_cast<int>(std::ceil(cfg.episode.timeout / dt - 0.5e-9));

  for (int k = 0; k < max_ticks; ++k) {
    const double t = k * dt;
    for (GateSim& gs : gates) {
      gs.obs = gate_observe(gs.state, gs.geo);
      gs.hist.push(t, gs.obs);
      if (gs.predictor) gs.predictor->observe_and_train(gs.hist);
    }
    GateSim& ag = gates[static_cast<std::size_t>(active)];

    std::vector<GateObservation> track;
    if (oracle) {
      track.reserve(static_cast<std::size_t>(cfg.mpc.horizon) + 1);
      GateState sim = ag.state;
      for (int i = 0; i <= cfg.mpc.horizon; ++i) {
        track.push_back(gate_observe(sim, ag.geo));
        sim = gate_step(sim, dt, cfg.gate.gravity, arm, cfg.gate.damping);
      }
    } else if (ag.hist.size() >= 2) {
      track = ag.predictor->predict_track(ag.hist, cfg.mpc.horizon);
    } else {
      track.assign(static_cast<std::size_t>(cfg.mpc.horizon) + 1, ag.obs);
    }

    double pred_err = std::numeric_limits<double>::quiet_NaN();
    recent_tracks.push_back(track);
    if (static_cast<int>(recent_tracks.size()) > cfg.mpc.horizon) {
      pred_err = (recent_tracks.front().back().center - ag.obs.center).norm();
      recent_tracks.pop_front();
    }

    DroneState x_target = cfg.target;
    if (per_gate_targets) {
      x_target = DroneState{};
      x_target.p = ag.geo.pivot - arm * Vec3d(0, 0, 1) +
                   cfg.multigate.behind_offset * alpha;
    }

    const double trusted_span =
        oracle ? std::numeric_limits<double>::infinity()
               : ag.hist.back().t - ag.hist[0].t;

    ControlDecision dec;
    if (!controller->decide(drone, ag.obs, track, x_target, trusted_span,
                            spawn_seed(seed, 1000 + static_cast<std::uint64_t>(k)),
                            &dec)) {
      res.solver_failed = true;
      res.reason = "solver";
      res.ticks = k + 1;
      res.duration = t;
      return res;
    }
    const ControlInput executed =
        apply_plant_limits(dec.solution.controls.front(), cfg.mpc.limits);

    if (opts.tap) opts.tap(t, drone, ag.obs, dec);
    if (csv.is_open()) {
      write_log_row(csv, t, drone, executed, active, ag.state, ag.obs, dec,
                    pred_err);
    }

    const Vec3d p_prev = drone.p;
    const Vec3d c_prev = ag.obs.center;
    drone = drone_step_rk4(drone, executed, dt, cfg.mpc.limits.g);
    for (GateSim& gs : gates) {
      gs.state = gate_step(gs.state, dt, cfg.gate.gravity, arm,
                           cfg.gate.damping);
    }
    res.ticks = k + 1;
    res.duration = (k + 1) * dt;

    const double d_before = (p_prev - c_prev).dot(alpha);
    const double d_after = (drone.p - c_prev).dot(alpha);
    if (d_before * d_after <= 0.0) {
      const GateObservation now = gate_observe(ag.state, ag.geo);
      GateCrossing crossing;
      crossing.gate = active;
      crossing.time = res.duration;
      crossing.error = (drone.p - now.center).norm();
      crossing.success = crossing.error < cfg.reward.success_radius;
      res.crossings.push_back(crossing);
      ++active;
      recent_tracks.clear();
      if (active >= num_gates) {
        res.reason = "done";
        return res;
      }
      continue;
    }

    if (drone.p.cwiseAbs().maxCoeff() > cfg.episode.crash_bound ||
        drone.p.z() < 0.0) {
      res.crashed = true;
      res.reason = "crash";
      return res;
    }
  }
  res.reason = "timeout";
  return res;
}

void parallel_for(int n, int workers, const std::function<void(int)>& fn) {
  workers = std::max(1, std::min(workers, n));
  if (workers == 1) {
    for (int i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<int> next{0};
  std::mutex err_mutex;
  std::exception_ptr err;
  std::vector<std::thread> pool;
  pool.reserve(static_cast<std::size_t>(workers));
  for (int w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (int i = next.fetch_add(1); i < n; i = next.fetch_add(1)) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard<std::mutex> lock(err_mutex);
          if (!err) err = std::current_exception();
        }
      }
    });
  }
  for (std::thread& th : pool) th.join();
  if (err) std::rethrow_exception(err);
}

json episode_row(int episode, std::uint64_t seed, const EpisodeMetrics& m) {
  json row;
  row["episode"] = episode;
  row["seed"] = seed;
  row["success"] = m.success;
  row["crossed"] = m.crossed;
  row["crashed"] = m.crashed;
  row["solver_failed"] = m.solver_failed;
  row["reason"] = m.reason;
  row["ticks"] = m.ticks;
  row["duration"] = m.duration;
  if (m.traversal_error) row["error"] = *m.traversal_error;
  if (m.traversal_time) row["time"] = *m.traversal_time;
  return row;
}

json aggregate_metrics(const std::vector<EpisodeMetrics>& ms) {
  int crossed = 0, succeeded = 0, crashed = 0, solver = 0;
  double err_sum = 0.0, time_sum = 0.0;
  for (const EpisodeMetrics& m : ms) {
    if (m.crossed) {
      ++crossed;
      err_sum += *m.traversal_error;
      time_sum += *m.traversal_time;
    }
    succeeded += m.success ? 1 : 0;
    crashed += m.crashed ? 1 : 0;
    solver += m.solver_failed ? 1 : 0;
  }
  json agg;
  agg["episodes"] = ms.size();
  agg["successes"] = succeeded;
  agg["success_rate"] = ms.empty() ? 0.0
                                   : static_cast<double>(succeeded) /
                                         static_cast<double>(ms.size());
  agg["crossed"] = crossed;
  agg["crashed"] = crashed;
  agg["solver_failures"] = solver;
  if (crossed > 0) {
    agg["mean_error"] = err_sum / crossed;
    agg["mean_time"] = time_sum / crossed;
  }
  return agg;
}

std::string log_path(const SuiteOptions& opts, const std::string& stem) {
  if (opts.out_dir.empty()) return {};
  return opts.out_dir + "/logs/" + stem + ".csv";
}

void prepare_out_dir(const SuiteOptions& opts) {
  if (opts.out_dir.empty()) return;
  std::filesystem::create_directories(opts.out_dir + "/logs");
}

void note(const SuiteOptions& opts, const std::string& line) {
  if (opts.progress) (*opts.progress) << line << '\n' << std::flush;
}

std::vector<EpisodeMetrics> run_batch(const ScenarioConfig& cfg,
                                      const SuiteOptions& opts,
                                      const std::string& stem,
                                      const std::vector<std::uint64_t>& seeds) {
  std::vector<EpisodeMetrics> ms(seeds.size());
  parallel_for(static_cast<int>(seeds.size()), cfg.workers, [&](int e) {
    EpisodeOptions eo;
    eo.deep = opts.deep;
    eo.csv_path = log_path(opts, stem + "_ep" + std::to_string(e));
    ms[static_cast<std::size_t>(e)] =
        run_episode(cfg, seeds[static_cast<std::size_t>(e)], eo);
  });
  return ms;
}

void write_report(const SuiteOptions& opts, const std::string& name,
                  const json& report) {
  if (opts.out_dir.empty()) return;
  const std::string path = opts.out_dir + "/" + name + ".json";
  std::ofstream out(path);
  if (!out) throw std::runtime_error("harness: cannot write " + path);
  out << report.dump(2) << "\n";
}

std::vector<std::uint64_t> episode_seeds(const ScenarioConfig& cfg,
                                         std::uint64_t stream_base) {
  std::vector<std::uint64_t> seeds(static_cast<std::size_t>(cfg.num_trials));
  for (int e = 0; e < cfg.num_trials; ++e) {
    seeds[static_cast<std::size_t>(e)] =
        spawn_seed(spawn_seed(cfg.seed, stream_base),
                   static_cast<std::uint64_t>(e));
  }
  return seeds;
}

json run_compare(const ScenarioConfig& cfg, const SuiteOptions& opts) {
  const std::vector<ControllerKind> kinds = {
      ControllerKind::kGaussian, ControllerKind::kDeep,
      ControllerKind::kOracle, ControllerKind::kStandard,
      ControllerKind::kManual};
  if (opts.deep == nullptr) {
    throw std::invalid_argument(
        "harness: compare suite requires a trained policy model");
  }
  const std::vector<std::uint64_t> seeds = episode_seeds(cfg, 0);
  json rows = json::array();
  json aggregates = json::array();
  for (ControllerKind kind : kinds) {
    ScenarioConfig c = cfg;
    c.controller = kind;
    const std::string name = to_string(kind);
    const std::vector<EpisodeMetrics> ms =
        run_batch(c, opts, "compare_" + name, seeds);
    for (std::size_t e = 0; e < ms.size(); ++e) {
      json row = episode_row(static_cast<int>(e), seeds[e], ms[e]);
      row["controller"] = name;
      rows.push_back(std::move(row));
    }
    json agg = aggregate_metrics(ms);
    agg["controller"] = name;
    note(opts, "compare: " + name + " success_rate=" +
                   std::to_string(agg["success_rate"].get<double>()));
    aggregates.push_back(std::move(agg));
  }
  json report;
  report["suite"] = "compare";
  report["seed"] = cfg.seed;
  report["num_trials"] = cfg.num_trials;
  report["rows"] = std::move(rows);
  report["aggregates"] = std::move(aggregates);
  report["config"] = to_json(cfg);
  return report;
}

json run_distance_sweep(const ScenarioConfig& cfg, const SuiteOptions& opts) {
  std::vector<ControllerKind> kinds = {cfg.controller};
  if (cfg.controller != ControllerKind::kOracle) {
    kinds.push_back(ControllerKind::kOracle);
  }
  json rows = json::array();
  json aggregates = json::array();
  const Vec3d alpha = cfg.gate.geometry.normal.normalized();
  for (std::size_t di = 0; di < cfg.sweeps.distances.size(); ++di) {
    const double dist = cfg.sweeps.distances[di];
    ScenarioConfig base = cfg;
    base.start.p = cfg.gate.geometry.pivot - dist * alpha;
    base.start.p.z() = cfg.start.p.z();
    base.start.p.y() = cfg.start.p.y();
    const std::vector<std::uint64_t> seeds =
        episode_seeds(cfg, 1 + static_cast<std::uint64_t>(di));
    for (ControllerKind kind : kinds) {
      ScenarioConfig c = base;
      c.controller = kind;
      const std::string name = to_string(kind);
      const std::string stem =
          "distance_" + std::to_string(dist) + "_" + name;
      const std::vector<EpisodeMetrics> ms = run_batch(c, opts, stem, seeds);
      for (std::size_t e = 0; e < ms.size(); ++e) {
        json row = episode_row(static_cast<int>(e), seeds[e], ms[e]);
        row["controller"] = name;
        row["distance"] = dist;
        rows.push_back(std::move(row));
      }
      json agg = aggregate_metrics(ms);
      agg["controller"] = name;
      agg["distance"] = dist;
      note(opts, "distance-sweep: d=" + std::to_string(dist) + " " + name +
                     " success_rate=" +
                     std::to_string(agg["success_rate"].get<double>()));
      aggregates.push_back(std::move(agg));
    }
  }
  json report;
  report["suite"] = "distance-sweep";
  report["seed"] = cfg.seed;
  report["num_trials"] = cfg.num_trials;
  report["rows"] = std::move(rows);
  report["aggregates"] = std::move(aggregates);
  report["config"] = to_json(cfg);
  return report;
}

json run_robustness(const ScenarioConfig& cfg, const SuiteOptions& opts) {
  const std::vector<std::uint64_t> seeds = episode_seeds(cfg, 2);
  json rows = json::array();
  json aggregates = json::array();
  std::vector<double> thrust_levels, mean_times;
  for (double sim_c_max : cfg.sweeps.sim_c_max_values) {
    ScenarioConfig c = cfg;
    c.mpc.limits.sim_c_max = sim_c_max;
    const std::string stem = "robustness_" + std::to_string(sim_c_max);
    const std::vector<EpisodeMetrics> ms = run_batch(c, opts, stem, seeds);
    for (std::size_t e = 0; e < ms.size(); ++e) {
      json row = episode_row(static_cast<int>(e), seeds[e], ms[e]);
      row["sim_c_max"] = sim_c_max;
      rows.push_back(std::move(row));
    }
    json agg = aggregate_metrics(ms);
    agg["sim_c_max"] = sim_c_max;
    if (agg.contains("mean_time")) {
      thrust_levels.push_back(sim_c_max);
      mean_times.push_back(agg["mean_time"].get<double>());
    }
    note(opts, "robustness: sim_c_max=" + std::to_string(sim_c_max) +
                   " success_rate=" +
                   std::to_string(agg["success_rate"].get<double>()));
    aggregates.push_back(std::move(agg));
  }
  json report;
  report["suite"] = "robustness";
  report["seed"] = cfg.seed;
  report["num_trials"] = cfg.num_trials;
  report["rows"] = std::move(rows);
  report["aggregates"] = std::move(aggregates);
  if (thrust_levels.size() >= 2) {
    report["spearman_time_vs_thrust"] =
        spearman_rho(thrust_levels, mean_times);
  }
  report["config"] = to_json(cfg);
  return report;
}

json run_multigate(const ScenarioConfig& cfg, const SuiteOptions& opts) {
  const std::vector<std::uint64_t> seeds = episode_seeds(cfg, 3);
  std::vector<MultigateMetrics> ms(seeds.size());
  parallel_for(static_cast<int>(seeds.size()), cfg.workers, [&](int e) {
    EpisodeOptions eo;
    eo.deep = opts.deep;
    eo.csv_path = log_path(opts, "multigate_ep" + std::to_string(e));
    ms[static_cast<std::size_t>(e)] =
        run_multigate_episode(cfg, seeds[static_cast<std::size_t>(e)], eo);
  });

  json rows = json::array();
  for (std::size_t e = 0; e < ms.size(); ++e) {
    json row;
    row["episode"] = e;
    row["seed"] = seeds[e];
    row["reason"] = ms[e].reason;
    row["ticks"] = ms[e].ticks;
    row["duration"] = ms[e].duration;
    row["crashed"] = ms[e].crashed;
    row["solver_failed"] = ms[e].solver_failed;
    json crossings = json::array();
    for (const GateCrossing& c : ms[e].crossings) {
      crossings.push_back({{"gate", c.gate},
                           {"time", c.time},
                           {"error", c.error},
                           {"success", c.success}});
    }
    row["crossings"] = std::move(crossings);
    rows.push_back(std::move(row));
  }

  json aggregates = json::array();
  for (int g = 0; g < cfg.multigate.num_gates; ++g) {
    int reached = 0, succeeded = 0;
    double err_sum = 0.0, time_sum = 0.0;
    for (const MultigateMetrics& m : ms) {
      for (const GateCrossing& c : m.crossings) {
        if (c.gate != g) continue;
        ++reached;
        err_sum += c.error;
        time_sum += c.time;
        succeeded += c.success ? 1 : 0;
      }
    }
    json agg;
    agg["gate"] = g;
    agg["episodes"] = ms.size();
    agg["reached"] = reached;
    agg["successes"] = succeeded;
    agg["success_rate"] = ms.empty() ? 0.0
                                     : static_cast<double>(succeeded) /
                                           static_cast<double>(ms.size());
    if (reached > 0) {
      agg["mean_error"] = err_sum / reached;
      agg["mean_time"] = time_sum / reached;
    }
    note(opts, "multigate: gate=" + std::to_string(g) + " success_rate=" +
                   std::to_string(agg["success_rate"].get<double>()));
    aggregates.push_back(std::move(agg));
  }

  json report;
  report["suite"] = "multigate";
  report["seed"] = cfg.seed;
  report["num_trials"] = cfg.num_trials;
  report["rows"] = std::move(rows);
  report["aggregates"] = std::move(aggregates);
  report["config"] = to_json(cfg);
  return report;
}

}  // namespace

double manual_lambda(const DroneState& drone, const GateObservation& gate_now,
                     const DroneState& drone0, const GateObservation& gate0) {
  const double initial = (drone0.p - gate0.center).norm();
  if (initial <= 0.0) return 0.0;
  return std::clamp((drone.p - gate_now.center).norm() / initial, 0.0, 1.0);
}

double spearman_rho(const std::vector<double>& a,
                    const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) {
    throw std::invalid_argument("spearman_rho: need two aligned series");
  }
  const auto ranks = [](const std::vector<double>& v) {
    const std::size_t n = v.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t i, std::size_t j) { return v[i] < v[j]; });
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
      std::size_t j = i;
      while (j + 1 < n && v[order[j + 1]] == v[order[i]]) ++j;
      const double avg = 0.5 * (static_cast<double>(i) +
                                static_cast<double>(j)) + 1.0;
      for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
      i = j + 1;
    }
    return rank;
  };
  const std::vector<double> ra = ranks(a);
  const std::vector<double> rb = ranks(b);
  const double n = static_cast<double>(a.size());
  double mean_a = 0.0, mean_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    mean_a += ra[i];
    mean_b += rb[i];
  }
  mean_a /= n;
  mean_b /= n;
  double cov = 0.0, var_a = 0.0, var_b = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double da = ra[i] - mean_a;
    const double db = rb[i] - mean_b;
    cov += da * db;
    var_a += da * da;
    var_b += db * db;
  }
  if (var_a == 0.0 || var_b == 0.0) return 0.0;
  return cov / std::sqrt(var_a * var_b);
}

EpisodeMetrics run_episode(const ScenarioConfig& cfg, std::uint64_t seed,
                           const EpisodeOptions& opts) {
  validate(cfg);
  const CoreResult core = run_core(cfg, seed, opts, 1, false);
  EpisodeMetrics m;
  m.crashed = core.crashed;
  m.solver_failed = core.solver_failed;
  m.ticks = core.ticks;
  m.duration = core.duration;
  m.reason = core.reason;
  if (!core.crossings.empty()) {
    const GateCrossing& c = core.crossings.front();
    m.crossed = true;
    m.success = c.success;
    m.traversal_error = c.error;
    m.traversal_time = c.time;
    m.reason = "crossed";
  }
  return m;
}

MultigateMetrics run_multigate_episode(const ScenarioConfig& cfg,
                                       std::uint64_t seed,
                                       const EpisodeOptions& opts) {
  validate(cfg);
  const CoreResult core =
      run_core(cfg, seed, opts, cfg.multigate.num_gates, true);
  MultigateMetrics m;
  m.crossings = core.crossings;
  m.crashed = core.crashed;
  m.solver_failed = core.solver_failed;
  m.ticks = core.ticks;
  m.duration = core.duration;
  m.reason = core.reason;
  return m;
}

ReplayBuffer collect(const ScenarioConfig& cfg, std::uint64_t seed,
                     std::ostream* progress) {
  validate(cfg);
  ScenarioConfig ep_cfg = cfg;
  ep_cfg.controller = ControllerKind::kGaussian;
  const int target = cfg.collect.num_samples;
  ReplayBuffer buf;
  std::uint64_t episode = 0;
  int skipped = 0;
  while (static_cast<int>(buf.size()) < target) {
    const std::uint64_t ep_seed = spawn_seed(seed, episode);
    std::mt19937_64 rng(spawn_seed(ep_seed, 0xc011ec7));
    std::uniform_real_distribution<double> x(cfg.collect.x_range[0],
                                             cfg.collect.x_range[1]);
    std::uniform_real_distribution<double> y(cfg.collect.y_range[0],
                                             cfg.collect.y_range[1]);
    std::uniform_real_distribution<double> z(cfg.collect.z_range[0],
                                             cfg.collect.z_range[1]);
    ep_cfg.start = DroneState{};
    ep_cfg.start.p = Vec3d(x(rng), y(rng), z(rng));

    ReplayBuffer ep_buf;
    EpisodeOptions opts;
    opts.tap = [&ep_buf](double t, const DroneState& drone,
                         const GateObservation& gate,
                         const ControlDecision& dec) {
      ReplayRecord r;
      r.obs = make_observation(drone, gate);
      r.lambda = dec.lambda;
      r.t_p = dec.t_p;
      r.t = t;
      ep_buf.push(r);
    };
    const EpisodeMetrics m = run_episode(ep_cfg, ep_seed, opts);
    if (m.crashed || m.solver_failed) {
      ++skipped;
      if (progress) {
        (*progress) << "collect: episode " << episode << " skipped ("
                    << m.reason << ")\n"
                    << std::flush;
      }
    } else {
      buf.append(ep_buf);
      if (progress) {
        (*progress) << "collect: episode " << episode << " +" << ep_buf.size()
                    << " records (" << std::min<int>(target, static_cast<int>(buf.size()))
                    << "/" << target << ")\n"
                    << std::flush;
      }
    }
    ++episode;
    if (skipped > 1000 && buf.empty()) {
      throw std::runtime_error("collect: episodes are not producing records");
    }
  }
  if (static_cast<int>(buf.size()) == target) return buf;
  ReplayBuffer trimmed;
  for (int i = 0; i < target; ++i) trimmed.push(buf[static_cast<std::size_t>(i)]);
  return trimmed;
}

std::string to_string(SuiteKind kind) {
  switch (kind) {
    case SuiteKind::kCompare: return "compare";
    case SuiteKind::kDistanceSweep: return "distance-sweep";
    case SuiteKind::kRobustness: return "robustness";
    case SuiteKind::kMultigate: return "multigate";
  }
  throw std::logic_error("unreachable suite kind");
}

SuiteKind suite_from_string(const std::string& name) {
  if (name == "compare") return SuiteKind::kCompare;
  if (name == "distance-sweep") return SuiteKind::kDistanceSweep;
  if (name == "robustness") return SuiteKind::kRobustness;
  if (name == "multigate") return SuiteKind::kMultigate;
  throw std::invalid_argument("harness: unknown suite '" + name + "'");
}

nlohmann::json run_suite(SuiteKind kind, const ScenarioConfig& cfg,
                         const SuiteOptions& opts) {
  validate(cfg);
  prepare_out_dir(opts);
  json report;
  switch (kind) {
    case SuiteKind::kCompare:
      report = run_compare(cfg, opts);
      break;
    case SuiteKind::kDistanceSweep:
      report = run_distance_sweep(cfg, opts);
      break;
    case SuiteKind::kRobustness:
      report = run_robustness(cfg, opts);
      break;
    case SuiteKind::kMultigate:
      report = run_multigate(cfg, opts);
      break;
  }
  write_report(opts, to_string(kind), report);
  return report;
}

nlohmann::json run_eval(const ScenarioConfig& cfg, const SuiteOptions& opts) {
  validate(cfg);
  prepare_out_dir(opts);
  const std::vector<std::uint64_t> seeds = episode_seeds(cfg, 4);
  const std::string name = to_string(cfg.controller);
  const std::vector<EpisodeMetrics> ms =
      run_batch(cfg, opts, "eval_" + name, seeds);
  json rows = json::array();
  for (std::size_t e = 0; e < ms.size(); ++e) {
    json row = episode_row(static_cast<int>(e), seeds[e], ms[e]);
    row["controller"] = name;
    rows.push_back(std::move(row));
  }
  json agg = aggregate_metrics(ms);
  agg["controller"] = name;
  note(opts, "eval: " + name + " success_rate=" +
                 std::to_string(agg["success_rate"].get<double>()));
  json report;
  report["suite"] = "eval";
  report["seed"] = cfg.seed;
  report["num_trials"] = cfg.num_trials;
  report["rows"] = std::move(rows);
  report["aggregates"] = json::array({agg});
  report["config"] = to_json(cfg);
  write_report(opts, "eval", report);
  return report;
}

}  // namespace hympc
