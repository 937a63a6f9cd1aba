#include "hympc/gate_predictor.hpp"

#include <cmath>
#include <stdexcept>

namespace hympc {
namespace {

Eigen::Matrix<double, 6, 1> pack_obs(const GateObservation& o) {
  Eigen::Matrix<double, 6, 1> v;
  v << o.center, o.center_vel;
  return v;
}

GateObservation unpack_obs(const Eigen::Matrix<double, 6, 1>& v) {
  GateObservation o;
  o.center = v.head<3>();
  o.center_vel = v.tail<3>();
  return o;
}

Eigen::Matrix<double, 12, 1> pack_input(const GateObservation& prev,
                                        const GateObservation& cur,
                                        const Vec3d& anchor) {
  Eigen::Matrix<double, 12, 1> x;
  x << prev.center - anchor, prev.center_vel, cur.center - anchor,
      cur.center_vel;
  return x;
}

// Rate of the constant-velocity coast the net refines.
Eigen::Matrix<double, 6, 1> coast_rate(const GateObservation& cur) {
  Eigen::Matrix<double, 6, 1> r;
  r << cur.center_vel, Vec3d::Zero();
  return r;
}

GateObservation clamp_obs(const GateObservation& o,
                          const Eigen::Matrix<double, 6, 1>& lo,
                          const Eigen::Matrix<double, 6, 1>& hi,
                          const Vec3d& anchor) {
  const Eigen::Matrix<double, 6, 1> pad =
      0.5 * (hi - lo).array() + 0.05;
  Eigen::Matrix<double, 6, 1> v = pack_obs(o);
  v.head<3>() -= anchor;
  v = v.cwiseMax(lo - pad).cwiseMin(hi + pad);
  v.head<3>() += anchor;
  return unpack_obs(v);
}

}  // namespace

void GateHistory::push(double t, const GateObservation& obs) {
  if (!entries_.empty() && t <= entries_.back().t) {
    throw std::invalid_argument("GateHistory: timestamps must increase");
  }
  entries_.push_back(Entry{t, obs});
  while (entries_.size() > capacity_) entries_.pop_front();
}

GatePredictor::GatePredictor(const PredictorConfig& cfg, double tick_dt)
    : cfg_(cfg), dt_(tick_dt), rng_(cfg.seed) {
  std::vector<int> sizes;
  sizes.push_back(12);
  sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  sizes.push_back(6);
  net_ = Mlp(sizes, cfg_.seed);
  // Start as the constant-velocity predictor instead of random extrapolation.
  net_.zero_output_layer();
}

GateObservation GatePredictor::predict(const GateObservation& prev,
                                       const GateObservation& cur,
                                       double dt) const {
  const long steps = std::lround(dt / dt_);
  if (steps <= 0) return cur;
  const Vec3d anchor = have_anchor_ ? anchor_ : cur.center;
  GateObservation before = prev;
  GateObservation now = cur;
  for (long k = 0; k < steps; ++k) {
    GateObservation qb = before;
    GateObservation qn = now;
    if (have_envelope_) {
      qb = clamp_obs(qb, env_lo_, env_hi_, anchor);
      qn = clamp_obs(qn, env_lo_, env_hi_, anchor);
    }
    const Eigen::VectorXd res = net_.forward(pack_input(qb, qn, anchor));
    GateObservation next = unpack_obs(
        pack_obs(now) + dt_ * (coast_rate(now) + res.head<6>()));
    if (have_envelope_) next = clamp_obs(next, env_lo_, env_hi_, anchor);
    before = now;
    now = next;
  }
  return now;
}

std::optional<double> GatePredictor::observe_and_train(
    const GateHistory& hist) {
  const std::size_t n = hist.size();
  if (n == 0) return std::nullopt;
  if (!have_anchor_) {
    anchor_ = hist[0].obs.center;
    have_anchor_ = true;
  }
  for (std::size_t i = 0; i < n; ++i) {
    Eigen::Matrix<double, 6, 1> v = pack_obs(hist[i].obs);
    v.head<3>() -= anchor_;
    if (!have_envelope_) {
      env_lo_ = v;
      env_hi_ = v;
      have_envelope_ = true;
    } else {
      env_lo_ = env_lo_.cwiseMin(v);
      env_hi_ = env_hi_.cwiseMax(v);
    }
  }
  if (n < 3) return std::nullopt;

  double loss_sum = 0.0;
  const int cols = std::max(1, cfg_.anchor_batch);
  TrainBatch batch;
  batch.inputs.resize(12, cols);
  batch.targets.resize(6, cols);
  std::uniform_int_distribution<std::size_t> pick(1, n - 2);
  for (int rep = 0; rep < cfg_.steps_per_tick; ++rep) {
    for (int b = 0; b < cols; ++b) {
      const std::size_t i = pick(rng_);
      const auto& prev = hist[i - 1];
      const auto& cur = hist[i];
      const auto& next = hist[i + 1];
      const double dt = next.t - cur.t;
      batch.inputs.col(b) = pack_input(prev.obs, cur.obs, anchor_);
      batch.targets.col(b) =
          (pack_obs(next.obs) - pack_obs(cur.obs)) / dt - coast_rate(cur.obs);
    }
    loss_sum += net_.train_step(batch, cfg_.lr, cfg_.momentum);
  }
  return loss_sum / std::max(1, cfg_.steps_per_tick);
}

std::vector<GateObservation> GatePredictor::predict_track(
    const GateHistory& hist, int steps) const {
  if (hist.size() == 0) {
    throw std::invalid_argument("GatePredictor: empty history");
  }
  std::vector<GateObservation> track;
  track.reserve(static_cast<std::size_t>(steps) + 1);
  const GateObservation& cur = hist.back().obs;
  if (hist.size() == 1) {
    track.assign(static_cast<std::size_t>(steps) + 1, cur);
    return track;
  }
  const Vec3d anchor = have_anchor_ ? anchor_ : cur.center;
  GateObservation before = hist[hist.size() - 2].obs;
  GateObservation now = cur;
  track.push_back(now);
  for (int k = 0; k < steps; ++k) {
    GateObservation qb = before;
    GateObservation qn = now;
    if (have_envelope_) {
      qb = clamp_obs(qb, env_lo_, env_hi_, anchor);
      qn = clamp_obs(qn, env_lo_, env_hi_, anchor);
    }
    const Eigen::VectorXd res = net_.forward(pack_input(qb, qn, anchor));
    GateObservation next = unpack_obs(
        pack_obs(now) + dt_ * (coast_rate(now) + res.head<6>()));
    if (have_envelope_) next = clamp_obs(next, env_lo_, env_hi_, anchor);
    before = now;
    now = next;
    track.push_back(now);
  }
  return track;
}

}  // namespace hympc
