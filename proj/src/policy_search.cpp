#include "hympc/policy_search.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <random>
#include <stdexcept>

namespace hympc {
namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

struct CandidateEval {
  bool ok = false;
  double reward_value = kNegInf;
  TrajectoryVerdict verdict;
  MpcSolution sol;
};

int track_index(double t, double dt, std::size_t track_size) {
  const long idx = std::lround(t / dt);
  return static_cast<int>(
      std::clamp<long>(idx, 0, static_cast<long>(track_size) - 1));
}

CandidateEval evaluate_candidate(const DroneState& x0,
                                 const std::vector<GateObservation>& track,
                                 const Vec3d& alpha, const DroneState& x_target,
                                 double lambda, double t_j,
                                 const MpcConfig& mpc_cfg,
                                 const RewardConfig& reward_cfg,
                                 const MpcSolution* warm) {
  MpcRequest req;
  req.x0 = x0;
  req.gate_now = track.front();
  req.gate_pred = track[track_index(t_j, mpc_cfg.dt, track.size())];
  req.x_target = x_target;
  req.lambda = lambda;
  req.t_p = t_j;
  req.t_f = mpc_cfg.horizon_time();

  CandidateEval out;
  try {
    out.sol = solve(req, mpc_cfg, warm);
  } catch (const std::exception&) {
    return out;
  }
  if (!std::isfinite(out.sol.cost)) return out;
  out.verdict = classify(out.sol.states, track, alpha, reward_cfg.epsilon);
  out.reward_value =
      reward(out.sol.states, track, out.verdict, t_j, reward_cfg, mpc_cfg.dt);
  out.ok = std::isfinite(out.reward_value);
  return out;
}

std::vector<double> candidate_times_or_default(const SearchConfig& cfg,
                                               const MpcConfig& mpc_cfg) {
  if (!cfg.candidate_times.empty()) return cfg.candidate_times;
  return default_candidate_times(mpc_cfg.dt, mpc_cfg.horizon);
}

// Sweep the candidate times at a fixed lambda, reusing and refreshing the
// per-candidate warm starts.
CandidateEval sweep_at_lambda(const DroneState& x0,
                              const std::vector<GateObservation>& track,
                              const Vec3d& alpha, const DroneState& x_target,
                              double lambda,
                              const std::vector<double>& times,
                              const MpcConfig& mpc_cfg,
                              const RewardConfig& reward_cfg,
                              std::vector<MpcSolution>& warm_cache,
                              std::vector<bool>& warm_valid, double* best_t) {
  CandidateEval best;
  for (std::size_t j = 0; j < times.size(); ++j) {
    const MpcSolution* warm = warm_valid[j] ? &warm_cache[j] : nullptr;
    CandidateEval eval = evaluate_candidate(x0, track, alpha, x_target, lambda,
                                            times[j], mpc_cfg, reward_cfg, warm);
    if (!eval.ok) continue;
    warm_cache[j] = eval.sol;
    warm_valid[j] = true;
    if (eval.reward_value > best.reward_value || !best.ok) {
      best = std::move(eval);
      if (best_t != nullptr) *best_t = times[j];
    }
  }
  return best;
}

}  // namespace

std::vector<double> default_candidate_times(double dt, int horizon,
                                            int stride) {
  if (dt <= 0 || horizon <= 0 || stride <= 0) {
    throw std::invalid_argument("default_candidate_times: bad grid");
  }
  std::vector<double> times;
  for (int k = stride; k <= horizon; k += stride) times.push_back(k * dt);
  return times;
}

TrajectoryVerdict classify(const std::vector<DroneState>& traj,
                           const std::vector<GateObservation>& gate_track,
                           const Vec3d& alpha, double epsilon) {
  if (traj.size() != gate_track.size()) {
    throw std::invalid_argument("classify: trajectory/gate track misaligned");
  }
  if (traj.size() < 2) {
    throw std::invalid_argument("classify: need at least two steps");
  }
  if (alpha.norm() == 0.0) {
    throw std::invalid_argument("classify: zero plane normal");
  }
  TrajectoryVerdict verdict;
  for (std::size_t i = 1; i < traj.size(); ++i) {
    const Vec3d plane_point = gate_track[i - 1].center;
    const double before = (plane_point - traj[i - 1].p).dot(alpha);
    const double after = (plane_point - traj[i].p).dot(alpha);
    if (before * after <= 0.0) {
      verdict.crossing_index = static_cast<int>(i);
      verdict.error = (traj[i].p - gate_track[i].center).norm();
      verdict.cls = verdict.error < epsilon ? TrajectoryClass::kSuccess
                                            : TrajectoryClass::kFailure;
      return verdict;
    }
  }
  return verdict;
}

double reward(const std::vector<DroneState>& traj,
              const std::vector<GateObservation>& gate_track,
              const TrajectoryVerdict& verdict, double t_p,
              const RewardConfig& cfg, double dt) {
  if (traj.size() != gate_track.size()) {
    throw std::invalid_argument("reward: trajectory/gate track misaligned");
  }
  if (traj.empty() || dt <= 0) {
    throw std::invalid_argument("reward: empty trajectory or bad dt");
  }
  const double t_end = (traj.size() - 1) * dt;
  const double anchor = verdict.crossed() ? t_p : t_end;
  double tracking = 0.0;
  for (std::size_t k = 1; k < traj.size(); ++k) {
    const double t_k = k * dt;
    const double psi = std::exp(-cfg.varrho * (t_k - anchor) * (t_k - anchor));
    tracking += psi * (traj[k].p - gate_track[k].center).squaredNorm();
  }
  switch (verdict.cls) {
    case TrajectoryClass::kSuccess:
      return -tracking - t_p;
    case TrajectoryClass::kFailure:
      return -cfg.omega - tracking - t_p;
    case TrajectoryClass::kNotReached:
      return -tracking;
  }
  return -tracking;
}

GaussianPolicy em_update(const std::vector<std::pair<double, double>>& samples,
                         double zeta, double min_sigma) {
  if (samples.size() < 2) {
    throw std::invalid_argument("em_update: need at least two samples");
  }
  double max_r = kNegInf;
  for (const auto& [lambda, r] : samples) {
    if (!std::isfinite(lambda) || !std::isfinite(r)) {
      throw std::invalid_argument("em_update: non-finite sample");
    }
    max_r = std::max(max_r, r);
  }
  double sum_w = 0.0, sum_w2 = 0.0, sum_wl = 0.0;
  for (const auto& [lambda, r] : samples) {
    const double w = std::exp(zeta * (r - max_r));
    sum_w += w;
    sum_w2 += w * w;
    sum_wl += w * lambda;
  }
  GaussianPolicy out;
  out.mu = sum_wl / sum_w;
  const double denom = (sum_w * sum_w - sum_w2) / sum_w;
  if (denom <= 0.0) {
    out.sigma = min_sigma;
    return out;
  }
  double sum_wd = 0.0;
  for (const auto& [lambda, r] : samples) {
    const double w = std::exp(zeta * (r - max_r));
    sum_wd += w * (lambda - out.mu) * (lambda - out.mu);
  }
  out.sigma = std::max(std::sqrt(sum_wd / denom), min_sigma);
  return out;
}

std::string search_trace_header() {
  return "episode,t,iter,mu,sigma,best_reward,best_tp";
}

void append_search_trace(std::ostream& os, int episode, double t,
                         const std::vector<SearchTraceRow>& rows) {
  for (const SearchTraceRow& row : rows) {
    os << episode << ',' << t << ',' << row.iter << ',' << row.mu << ','
       << row.sigma << ',' << row.best_reward << ',' << row.best_t << '\n';
  }
}

SearchResult sweep_times(const DroneState& x0,
                         const std::vector<GateObservation>& gate_track,
                         const Vec3d& alpha, const DroneState& x_target,
                         double lambda, const SearchConfig& cfg,
                         const MpcConfig& mpc_cfg,
                         const RewardConfig& reward_cfg) {
  const std::vector<double> times = candidate_times_or_default(cfg, mpc_cfg);
  std::vector<MpcSolution> warm_cache(times.size());
  std::vector<bool> warm_valid(times.size(), false);
  SearchResult out;
  out.lambda = std::clamp(lambda, 0.0, 1.0);
  double best_t = times.back();
  const CandidateEval best =
      sweep_at_lambda(x0, gate_track, alpha, x_target, out.lambda, times,
                      mpc_cfg, reward_cfg, warm_cache, warm_valid, &best_t);
  if (!best.ok) return out;
  out.ok = true;
  out.t_p = best_t;
  out.best_reward = best.reward_value;
  out.predicted_class = best.verdict.cls;
  out.solution = best.sol;
  return out;
}

SearchResult search_with_track(const DroneState& x0,
                               const std::vector<GateObservation>& gate_track,
                               const Vec3d& alpha, const DroneState& x_target,
                               const GaussianPolicy& policy0,
                               const SearchConfig& cfg,
                               const MpcConfig& mpc_cfg,
                               const RewardConfig& reward_cfg,
                               std::uint64_t seed,
                               std::vector<SearchTraceRow>* trace) {
  if (cfg.num_samples < 2) {
    throw std::invalid_argument("search: need at least two samples");
  }
  const std::vector<double> times = candidate_times_or_default(cfg, mpc_cfg);
  std::vector<MpcSolution> warm_cache(times.size());
  std::vector<bool> warm_valid(times.size(), false);

  std::mt19937_64 rng(seed);
  GaussianPolicy policy = policy0;
  SearchResult out;
  bool any_ok = false;

  for (int iter = 0; iter < cfg.max_iters; ++iter) {
    std::normal_distribution<double> dist(policy.mu, policy.sigma);
    std::vector<std::pair<double, double>> samples;
    samples.reserve(cfg.num_samples);
    double iter_best_r = kNegInf;
    double iter_best_t = times.back();
    for (int i = 0; i < cfg.num_samples; ++i) {
      const double lambda = std::clamp(dist(rng), 0.0, 1.0);
      double best_t = times.back();
      const CandidateEval best =
          sweep_at_lambda(x0, gate_track, alpha, x_target, lambda, times,
                          mpc_cfg, reward_cfg, warm_cache, warm_valid, &best_t);
      if (!best.ok) continue;
      any_ok = true;
      samples.emplace_back(lambda, best.reward_value);
      if (best.reward_value > iter_best_r) {
        iter_best_r = best.reward_value;
        iter_best_t = best_t;
      }
    }
    if (samples.size() < 2) break;
    const GaussianPolicy next =
        em_update(samples, reward_cfg.zeta, cfg.min_sigma);
    const double delta_mu = std::abs(next.mu - policy.mu);
    policy = next;
    out.iterations = iter + 1;
    if (trace != nullptr) {
      trace->push_back(
          {iter, policy.mu, policy.sigma, iter_best_r, iter_best_t});
    }
    if (delta_mu < cfg.mu_tol) break;
  }

  out.policy = policy;
  out.lambda = std::clamp(policy.mu, 0.0, 1.0);
  double best_t = times.back();
  const CandidateEval final_best =
      sweep_at_lambda(x0, gate_track, alpha, x_target, out.lambda, times,
                      mpc_cfg, reward_cfg, warm_cache, warm_valid, &best_t);
  if (!final_best.ok) {
    out.ok = false;
    return out;
  }
  out.ok = any_ok || final_best.ok;
  out.t_p = best_t;
  out.best_reward = final_best.reward_value;
  out.predicted_class = final_best.verdict.cls;
  out.solution = final_best.sol;
  return out;
}

SearchResult search(const DroneState& x0, const GateHistory& hist,
                    const GatePredictor& predictor, const Vec3d& alpha,
                    const DroneState& x_target, const GaussianPolicy& policy0,
                    const SearchConfig& cfg, const MpcConfig& mpc_cfg,
                    const RewardConfig& reward_cfg, std::uint64_t seed,
                    std::vector<SearchTraceRow>* trace) {
  if (hist.size() < 2) {
    throw std::invalid_argument("search: need at least two gate observations");
  }
  const std::vector<GateObservation> track =
      predictor.predict_track(hist, mpc_cfg.horizon);
  return search_with_track(x0, track, alpha, x_target, policy0, cfg, mpc_cfg,
                           reward_cfg, seed, trace);
}

}  // namespace hympc
