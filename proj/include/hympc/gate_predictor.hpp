#pragma once

#include <cstdint>
#include <deque>
#include <optional>
#include <random>
#include <vector>

#include "hympc/dynamics.hpp"
#include "hympc/nnet.hpp"

namespace hympc {

struct PredictorConfig {
  std::vector<int> hidden{64, 64};
  double lr = 2e-3;
  double momentum = 0.9;
  // SGD steps taken per new observation.
  int steps_per_tick = 4;
  // Random one-step samples batched into each SGD step.
  int anchor_batch = 16;
  int history_capacity = 256;
  std::uint64_t seed = 0;
};

/// Rolling window of timestamped gate observations.
class GateHistory {
 public:
  struct Entry {
    double t = 0.0;
    GateObservation obs;
  };

  explicit GateHistory(std::size_t capacity = 100) : capacity_(capacity) {}

  void push(double t, const GateObservation& obs);
  std::size_t size() const { return entries_.size(); }
  const Entry& operator[](std::size_t i) const { return entries_[i]; }
  const Entry& back() const { return entries_.back(); }
  void clear() { entries_.clear(); }

 private:
  std::size_t capacity_;
  std::deque<Entry> entries_;
};

/// Learns the gate's one-tick transition online and extrapolates it over the
/// plan horizon by recursive rollout. One step ahead is the constant-velocity
/// extrapolation of the current observation plus tick_dt times a learned
/// residual rate, so an untrained net already coasts along the observed
/// velocity and training only has to pick up the acceleration field. Longer
/// lookaheads chain the one-tick step, which is why predictions are only
/// trusted over a limited horizon. Positions are fed to the net relative to
/// the first center it saw, so learning is insensitive to where the gate
/// hangs in the world.
class GatePredictor {
 public:
  GatePredictor(const PredictorConfig& cfg, double tick_dt);

  /// Rolls the one-step model round(dt / tick_dt) times; exact at dt = 0.
  GateObservation predict(const GateObservation& prev,
                          const GateObservation& cur, double dt) const;

  /// Samples random consecutive (prev, cur, next) triples from the history
  /// and fits the one-step transition. Returns mean rate-space loss, or
  /// nullopt while the history is too short to form a triple.
  std::optional<double> observe_and_train(const GateHistory& hist);

  /// Gate track over the horizon: steps+1 observations spaced tick_dt apart,
  /// entry 0 equal to the latest observation.
  std::vector<GateObservation> predict_track(const GateHistory& hist,
                                             int steps) const;

  const Mlp& net() const { return net_; }
  double tick_dt() const { return dt_; }

 private:
  PredictorConfig cfg_;
  double dt_;
  Mlp net_;
  std::mt19937_64 rng_;
  Vec3d anchor_ = Vec3d::Zero();
  bool have_anchor_ = false;
  // Componentwise range of trained observations; rollout queries and emitted
  // states are clamped to a padded copy of it so the net is never evaluated
  // far outside its training support and the track cannot coast away from
  // everywhere the gate has been seen.
  Eigen::Matrix<double, 6, 1> env_lo_;
  Eigen::Matrix<double, 6, 1> env_hi_;
  bool have_envelope_ = false;
};

}  // namespace hympc
