#include "hympc/config.hpp"

#include <cmath>
#include <fstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace hympc {
namespace {

using nlohmann::json;

json vec_to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
  json arr = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
  return arr;
}

template <typename Derived>
void vec_from_json(const json& arr, Eigen::MatrixBase<Derived>& out,
                   const std::string& key) {
  if (!arr.is_array() ||
      static_cast<Eigen::Index>(arr.size()) != out.size()) {
    throw std::invalid_argument("config: '" + key + "' must be an array of " +
                                std::to_string(out.size()) + " numbers");
  }
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    out(i) = arr[static_cast<std::size_t>(i)].get<double>();
  }
}

template <typename T>
void get_if(const json& j, const char* key, T& out) {
  if (j.contains(key)) j.at(key).get_to(out);
}

template <typename Derived>
void get_vec_if(const json& j, const char* key,
                Eigen::MatrixBase<Derived>& out) {
  if (j.contains(key)) vec_from_json(j.at(key), out, key);
}

void get_range_if(const json& j, const char* key, std::array<double, 2>& out) {
  if (!j.contains(key)) return;
  const json& arr = j.at(key);
  if (!arr.is_array() || arr.size() != 2) {
    throw std::invalid_argument("config: '" + std::string(key) +
                                "' must be a [lo, hi] pair");
  }
  out = {arr[0].get<double>(), arr[1].get<double>()};
}

/// Every key in doc must exist in the reference shape produced by to_json.
void check_unknown_keys(const json& doc, const json& ref,
                        const std::string& prefix) {
  if (!doc.is_object()) return;
  for (const auto& [key, value] : doc.items()) {
    const std::string path = prefix.empty() ? key : prefix + "." + key;
    if (!ref.is_object() || !ref.contains(key)) {
      throw std::invalid_argument("config: unknown key '" + path + "'");
    }
    check_unknown_keys(value, ref.at(key), path);
  }
}

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("config: " + what);
}

void require_range(const std::array<double, 2>& r, const std::string& key) {
  require(std::isfinite(r[0]) && std::isfinite(r[1]) && r[0] <= r[1],
          "'" + key + "' must be an ordered finite range");
}

}  // namespace

std::string to_string(ControllerKind kind) {
  switch (kind) {
    case ControllerKind::kGaussian: return "hympc-gaussian";
    case ControllerKind::kDeep: return "hympc-deep";
    case ControllerKind::kOracle: return "oracle-dynamics";
    case ControllerKind::kStandard: return "standard-mpc";
    case ControllerKind::kManual: return "manual-mpc";
  }
  throw std::logic_error("unreachable controller kind");
}

ControllerKind controller_from_string(const std::string& name) {
  if (name == "hympc-gaussian") return ControllerKind::kGaussian;
  if (name == "hympc-deep") return ControllerKind::kDeep;
  if (name == "oracle-dynamics") return ControllerKind::kOracle;
  if (name == "standard-mpc") return ControllerKind::kStandard;
  if (name == "manual-mpc") return ControllerKind::kManual;
  throw std::invalid_argument("config: unknown controller '" + name + "'");
}

ScenarioConfig default_scenario() {
  ScenarioConfig cfg;
  cfg.start.p = Vec3d(-5.0, 0.0, 1.5);
  cfg.target.p = Vec3d(4.0, 0.0, 1.0);
  return cfg;
}

std::vector<double> scenario_candidate_times(const ScenarioConfig& cfg) {
  if (!cfg.search.candidate_times.empty()) return cfg.search.candidate_times;
  return default_candidate_times(cfg.mpc.dt, cfg.mpc.horizon,
                                 cfg.candidate_stride);
}

nlohmann::json to_json(const ScenarioConfig& cfg) {
  json j;
  j["seed"] = cfg.seed;
  j["workers"] = cfg.workers;
  j["num_trials"] = cfg.num_trials;
  j["controller"] = to_string(cfg.controller);

  j["start"]["position"] = vec_to_json(cfg.start.p);
  j["start"]["velocity"] = vec_to_json(cfg.start.v);
  j["target"]["position"] = vec_to_json(cfg.target.p);
  j["target"]["velocity"] = vec_to_json(cfg.target.v);

  json& gate = j["gate"];
  gate["pivot"] = vec_to_json(cfg.gate.geometry.pivot);
  gate["arm_length"] = cfg.gate.geometry.arm_length;
  gate["height"] = cfg.gate.geometry.height;
  gate["width"] = cfg.gate.geometry.width;
  gate["normal"] = vec_to_json(cfg.gate.geometry.normal);
  gate["gravity"] = cfg.gate.gravity;
  gate["damping"] = cfg.gate.damping;
  gate["theta0_range"] = cfg.gate.theta0_range;
  gate["theta_dot0_range"] = cfg.gate.theta_dot0_range;

  json& episode = j["episode"];
  episode["tick_dt"] = cfg.episode.tick_dt;
  episode["timeout"] = cfg.episode.timeout;
  episode["crash_bound"] = cfg.episode.crash_bound;

  json& mpc = j["mpc"];
  mpc["horizon"] = cfg.mpc.horizon;
  mpc["dt"] = cfg.mpc.dt;
  json& limits = mpc["limits"];
  limits["c_min"] = cfg.mpc.limits.c_min;
  limits["c_max"] = cfg.mpc.limits.c_max;
  limits["omega_max"] = cfg.mpc.limits.omega_max;
  limits["gravity"] = cfg.mpc.limits.g;
  limits["sim_c_max"] = cfg.mpc.limits.sim_c_max;
  json& weights = mpc["weights"];
  weights["q_u"] = vec_to_json(cfg.mpc.weights.q_u);
  weights["q_follow"] = vec_to_json(cfg.mpc.weights.q_follow);
  weights["q_pass"] = vec_to_json(cfg.mpc.weights.q_pass);
  weights["q_terminal"] = vec_to_json(cfg.mpc.weights.q_terminal);
  weights["eta"] = cfg.mpc.weights.eta;
  weights["temporal_spread"] = cfg.mpc.weights.temporal_spread;
  json& solver = mpc["solver"];
  solver["max_iters"] = cfg.mpc.solver.max_iters;
  solver["grad_tol"] = cfg.mpc.solver.grad_tol;
  solver["armijo"] = cfg.mpc.solver.armijo;
  solver["max_linesearch"] = cfg.mpc.solver.max_linesearch;

  json& search = j["search"];
  search["num_samples"] = cfg.search.num_samples;
  search["candidate_stride"] = cfg.candidate_stride;
  search["max_iters"] = cfg.search.max_iters;
  search["mu_tol"] = cfg.search.mu_tol;
  search["min_sigma"] = cfg.search.min_sigma;
  search["mu0"] = cfg.search.mu0;
  search["sigma0"] = cfg.search.sigma0;

  json& reward = j["reward"];
  reward["zeta"] = cfg.reward.zeta;
  reward["epsilon"] = cfg.reward.epsilon;
  reward["omega"] = cfg.reward.omega;
  reward["varrho"] = cfg.reward.varrho;
  reward["success_radius"] = cfg.reward.success_radius;

  json& predictor = j["predictor"];
  predictor["hidden"] = cfg.predictor.hidden;
  predictor["lr"] = cfg.predictor.lr;
  predictor["momentum"] = cfg.predictor.momentum;
  predictor["steps_per_tick"] = cfg.predictor.steps_per_tick;
  predictor["anchor_batch"] = cfg.predictor.anchor_batch;
  predictor["history_capacity"] = cfg.predictor.history_capacity;

  json& deep = j["deep"];
  deep["hidden"] = cfg.deep.hidden;
  deep["epochs"] = cfg.deep.epochs;
  deep["batch_size"] = cfg.deep.batch_size;
  deep["lr"] = cfg.deep.lr;
  deep["momentum"] = cfg.deep.momentum;
  deep["t_p_min"] = cfg.deep.t_p_min;
  deep["t_p_max"] = cfg.deep.t_p_max;
  deep["model_dir"] = cfg.deep_model_dir;

  j["standard"]["lambda_fixed"] = cfg.standard_lambda;

  json& collect = j["collect"];
  collect["num_samples"] = cfg.collect.num_samples;
  collect["x_range"] = cfg.collect.x_range;
  collect["y_range"] = cfg.collect.y_range;
  collect["z_range"] = cfg.collect.z_range;

  json& sweeps = j["sweeps"];
  sweeps["distances"] = cfg.sweeps.distances;
  sweeps["sim_c_max_values"] = cfg.sweeps.sim_c_max_values;

  json& multigate = j["multigate"];
  multigate["num_gates"] = cfg.multigate.num_gates;
  multigate["spacing"] = cfg.multigate.spacing;
  multigate["behind_offset"] = cfg.multigate.behind_offset;

  return j;
}

ScenarioConfig config_from_json(const nlohmann::json& doc) {
  ScenarioConfig cfg = default_scenario();
  check_unknown_keys(doc, to_json(cfg), "");

  get_if(doc, "seed", cfg.seed);
  get_if(doc, "workers", cfg.workers);
  get_if(doc, "num_trials", cfg.num_trials);
  if (doc.contains("controller")) {
    cfg.controller = controller_from_string(doc.at("controller").get<std::string>());
  }

  if (doc.contains("start")) {
    const json& start = doc.at("start");
    get_vec_if(start, "position", cfg.start.p);
    get_vec_if(start, "velocity", cfg.start.v);
  }
  if (doc.contains("target")) {
    const json& target = doc.at("target");
    get_vec_if(target, "position", cfg.target.p);
    get_vec_if(target, "velocity", cfg.target.v);
  }

  if (doc.contains("gate")) {
    const json& gate = doc.at("gate");
    get_vec_if(gate, "pivot", cfg.gate.geometry.pivot);
    get_if(gate, "arm_length", cfg.gate.geometry.arm_length);
    get_if(gate, "height", cfg.gate.geometry.height);
    get_if(gate, "width", cfg.gate.geometry.width);
    get_vec_if(gate, "normal", cfg.gate.geometry.normal);
    get_if(gate, "gravity", cfg.gate.gravity);
    get_if(gate, "damping", cfg.gate.damping);
    get_range_if(gate, "theta0_range", cfg.gate.theta0_range);
    get_range_if(gate, "theta_dot0_range", cfg.gate.theta_dot0_range);
  }

  if (doc.contains("episode")) {
    const json& episode = doc.at("episode");
    get_if(episode, "tick_dt", cfg.episode.tick_dt);
    get_if(episode, "timeout", cfg.episode.timeout);
    get_if(episode, "crash_bound", cfg.episode.crash_bound);
  }

  if (doc.contains("mpc")) {
    const json& mpc = doc.at("mpc");
    get_if(mpc, "horizon", cfg.mpc.horizon);
    get_if(mpc, "dt", cfg.mpc.dt);
    if (mpc.contains("limits")) {
      const json& limits = mpc.at("limits");
      get_if(limits, "c_min", cfg.mpc.limits.c_min);
      get_if(limits, "c_max", cfg.mpc.limits.c_max);
      get_if(limits, "omega_max", cfg.mpc.limits.omega_max);
      get_if(limits, "gravity", cfg.mpc.limits.g);
      get_if(limits, "sim_c_max", cfg.mpc.limits.sim_c_max);
    }
    if (mpc.contains("weights")) {
      const json& weights = mpc.at("weights");
      get_vec_if(weights, "q_u", cfg.mpc.weights.q_u);
      get_vec_if(weights, "q_follow", cfg.mpc.weights.q_follow);
      get_vec_if(weights, "q_pass", cfg.mpc.weights.q_pass);
      get_vec_if(weights, "q_terminal", cfg.mpc.weights.q_terminal);
      get_if(weights, "eta", cfg.mpc.weights.eta);
      get_if(weights, "temporal_spread", cfg.mpc.weights.temporal_spread);
    }
    if (mpc.contains("solver")) {
      const json& solver = mpc.at("solver");
      get_if(solver, "max_iters", cfg.mpc.solver.max_iters);
      get_if(solver, "grad_tol", cfg.mpc.solver.grad_tol);
      get_if(solver, "armijo", cfg.mpc.solver.armijo);
      get_if(solver, "max_linesearch", cfg.mpc.solver.max_linesearch);
    }
  }

  if (doc.contains("search")) {
    const json& search = doc.at("search");
    get_if(search, "num_samples", cfg.search.num_samples);
    get_if(search, "candidate_stride", cfg.candidate_stride);
    get_if(search, "max_iters", cfg.search.max_iters);
    get_if(search, "mu_tol", cfg.search.mu_tol);
    get_if(search, "min_sigma", cfg.search.min_sigma);
    get_if(search, "mu0", cfg.search.mu0);
    get_if(search, "sigma0", cfg.search.sigma0);
  }

  if (doc.contains("reward")) {
    const json& reward = doc.at("reward");
    get_if(reward, "zeta", cfg.reward.zeta);
    get_if(reward, "epsilon", cfg.reward.epsilon);
    get_if(reward, "omega", cfg.reward.omega);
    get_if(reward, "varrho", cfg.reward.varrho);
    get_if(reward, "success_radius", cfg.reward.success_radius);
  }

  if (doc.contains("predictor")) {
    const json& predictor = doc.at("predictor");
    get_if(predictor, "hidden", cfg.predictor.hidden);
    get_if(predictor, "lr", cfg.predictor.lr);
    get_if(predictor, "momentum", cfg.predictor.momentum);
    get_if(predictor, "steps_per_tick", cfg.predictor.steps_per_tick);
    get_if(predictor, "anchor_batch", cfg.predictor.anchor_batch);
    get_if(predictor, "history_capacity", cfg.predictor.history_capacity);
  }

  if (doc.contains("deep")) {
    const json& deep = doc.at("deep");
    get_if(deep, "hidden", cfg.deep.hidden);
    get_if(deep, "epochs", cfg.deep.epochs);
    get_if(deep, "batch_size", cfg.deep.batch_size);
    get_if(deep, "lr", cfg.deep.lr);
    get_if(deep, "momentum", cfg.deep.momentum);
    get_if(deep, "t_p_min", cfg.deep.t_p_min);
    get_if(deep, "t_p_max", cfg.deep.t_p_max);
    get_if(deep, "model_dir", cfg.deep_model_dir);
  }

  if (doc.contains("standard")) {
    get_if(doc.at("standard"), "lambda_fixed", cfg.standard_lambda);
  }

  if (doc.contains("collect")) {
    const json& collect = doc.at("collect");
    get_if(collect, "num_samples", cfg.collect.num_samples);
    get_range_if(collect, "x_range", cfg.collect.x_range);
    get_range_if(collect, "y_range", cfg.collect.y_range);
    get_range_if(collect, "z_range", cfg.collect.z_range);
  }

  if (doc.contains("sweeps")) {
    const json& sweeps = doc.at("sweeps");
    get_if(sweeps, "distances", cfg.sweeps.distances);
    get_if(sweeps, "sim_c_max_values", cfg.sweeps.sim_c_max_values);
  }

  if (doc.contains("multigate")) {
    const json& multigate = doc.at("multigate");
    get_if(multigate, "num_gates", cfg.multigate.num_gates);
    get_if(multigate, "spacing", cfg.multigate.spacing);
    get_if(multigate, "behind_offset", cfg.multigate.behind_offset);
  }

  validate(cfg);
  return cfg;
}

void save_config(const ScenarioConfig& cfg, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("config: cannot write " + path);
  out << to_json(cfg).dump(2) << "\n";
}

ScenarioConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("config: cannot read " + path);
  nlohmann::json doc;
  try {
    in >> doc;
  } catch (const nlohmann::json::parse_error& e) {
    throw std::runtime_error("config: invalid JSON in " + path + ": " +
                             e.what());
  }
  return config_from_json(doc);
}

void validate(const ScenarioConfig& cfg) {
  require(cfg.workers >= 1, "'workers' must be at least 1");
  require(cfg.num_trials >= 1, "'num_trials' must be at least 1");
  require(cfg.start.p.allFinite() && cfg.start.v.allFinite(),
          "'start' must be finite");
  require(cfg.target.p.allFinite() && cfg.target.v.allFinite(),
          "'target' must be finite");

  require(cfg.gate.geometry.arm_length > 0, "'gate.arm_length' must be > 0");
  require(cfg.gate.geometry.normal.norm() > 0,
          "'gate.normal' must be nonzero");
  require(cfg.gate.gravity > 0, "'gate.gravity' must be > 0");
  require(cfg.gate.damping >= 0, "'gate.damping' must be >= 0");
  require_range(cfg.gate.theta0_range, "gate.theta0_range");
  require_range(cfg.gate.theta_dot0_range, "gate.theta_dot0_range");

  require(cfg.episode.tick_dt > 0, "'episode.tick_dt' must be > 0");
  require(cfg.episode.timeout > 0, "'episode.timeout' must be > 0");
  require(cfg.episode.crash_bound > 0, "'episode.crash_bound' must be > 0");

  require(cfg.mpc.horizon >= 1, "'mpc.horizon' must be at least 1");
  require(cfg.mpc.dt > 0, "'mpc.dt' must be > 0");
  require(cfg.mpc.limits.c_min <= cfg.mpc.limits.c_max,
          "'mpc.limits' thrust box must be ordered");
  require(cfg.mpc.limits.omega_max > 0, "'mpc.limits.omega_max' must be > 0");
  require(cfg.mpc.limits.sim_c_max >= cfg.mpc.limits.c_min,
          "'mpc.limits.sim_c_max' must cover c_min");
  require(cfg.mpc.weights.eta > 0, "'mpc.weights.eta' must be > 0");
  require(cfg.mpc.solver.max_iters >= 1,
          "'mpc.solver.max_iters' must be at least 1");

  require(cfg.search.num_samples >= 2,
          "'search.num_samples' must be at least 2");
  require(cfg.candidate_stride >= 1,
          "'search.candidate_stride' must be at least 1");
  require(cfg.search.max_iters >= 1, "'search.max_iters' must be at least 1");
  require(cfg.search.min_sigma > 0, "'search.min_sigma' must be > 0");
  require(cfg.search.sigma0 > 0, "'search.sigma0' must be > 0");

  require(cfg.reward.zeta > 0, "'reward.zeta' must be > 0");
  require(cfg.reward.epsilon > 0, "'reward.epsilon' must be > 0");
  require(cfg.reward.omega >= 0, "'reward.omega' must be >= 0");
  require(cfg.reward.varrho > 0, "'reward.varrho' must be > 0");
  require(cfg.reward.success_radius > 0,
          "'reward.success_radius' must be > 0");

  require(cfg.predictor.lr > 0, "'predictor.lr' must be > 0");
  require(cfg.predictor.steps_per_tick >= 1,
          "'predictor.steps_per_tick' must be at least 1");
  require(cfg.predictor.anchor_batch >= 1,
          "'predictor.anchor_batch' must be at least 1");
  require(cfg.predictor.history_capacity >= 3,
          "'predictor.history_capacity' must be at least 3");

  require(cfg.deep.epochs >= 1, "'deep.epochs' must be at least 1");
  require(cfg.deep.batch_size >= 1, "'deep.batch_size' must be at least 1");
  require(cfg.deep.lr > 0, "'deep.lr' must be > 0");
  require(cfg.deep.t_p_min > 0 && cfg.deep.t_p_max > cfg.deep.t_p_min,
          "'deep' t_p clamp range must be ordered and positive");

  require(cfg.collect.num_samples >= 1,
          "'collect.num_samples' must be at least 1");
  require_range(cfg.collect.x_range, "collect.x_range");
  require_range(cfg.collect.y_range, "collect.y_range");
  require_range(cfg.collect.z_range, "collect.z_range");

  require(!cfg.sweeps.distances.empty(),
          "'sweeps.distances' must be nonempty");
  for (double d : cfg.sweeps.distances) {
    require(d > 0, "'sweeps.distances' entries must be > 0");
  }
  require(!cfg.sweeps.sim_c_max_values.empty(),
          "'sweeps.sim_c_max_values' must be nonempty");

  require(cfg.multigate.num_gates >= 1,
          "'multigate.num_gates' must be at least 1");
  require(cfg.multigate.spacing > 0, "'multigate.spacing' must be > 0");
  require(cfg.multigate.behind_offset > 0,
          "'multigate.behind_offset' must be > 0");
}

}  // namespace hympc
