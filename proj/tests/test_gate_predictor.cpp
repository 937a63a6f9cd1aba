#include "hympc/gate_predictor.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <random>

namespace hympc {
namespace {

constexpr double kG = 9.81;
constexpr double kTick = 0.02;

GateObservation obs_at(double cy, double cz, double vy, double vz) {
  GateObservation o;
  o.center = Vec3d(2.0, cy, cz);
  o.center_vel = Vec3d(0.0, vy, vz);
  return o;
}

TEST(GateHistory, OrderedPushAndEviction) {
  GateHistory hist(3);
  hist.push(0.0, obs_at(0, 1, 0, 0));
  hist.push(0.02, obs_at(0.1, 1, 0, 0));
  EXPECT_THROW(hist.push(0.02, obs_at(0, 1, 0, 0)), std::invalid_argument);
  EXPECT_THROW(hist.push(0.01, obs_at(0, 1, 0, 0)), std::invalid_argument);
  hist.push(0.04, obs_at(0.2, 1, 0, 0));
  hist.push(0.06, obs_at(0.3, 1, 0, 0));
  EXPECT_EQ(hist.size(), 3u);
  EXPECT_DOUBLE_EQ(hist[0].t, 0.02);
  EXPECT_DOUBLE_EQ(hist.back().t, 0.06);
}

TEST(GatePredictor, ZeroLookaheadIsExact) {
  GatePredictor pred(PredictorConfig{}, kTick);
  const GateObservation prev = obs_at(0.3, 1.2, 0.5, 0.1);
  const GateObservation cur = obs_at(0.4, 1.1, 0.6, 0.2);
  const GateObservation out = pred.predict(prev, cur, 0.0);
  EXPECT_EQ(out.center, cur.center);
  EXPECT_EQ(out.center_vel, cur.center_vel);
}

TEST(GatePredictor, FreshNetCoastsAtObservedVelocity) {
  GatePredictor pred(PredictorConfig{}, kTick);
  const GateObservation prev = obs_at(0.3, 1.2, 0.5, 0.1);
  const GateObservation cur = obs_at(0.4, 1.1, 0.6, 0.2);
  for (double dt : {0.02, 0.5, 1.0}) {
    const GateObservation out = pred.predict(prev, cur, dt);
    EXPECT_LT((out.center - (cur.center + dt * cur.center_vel)).norm(), 1e-12);
    EXPECT_EQ(out.center_vel, cur.center_vel);
  }
}

TEST(GatePredictor, StaticGateLossConverges) {
  PredictorConfig cfg;
  cfg.seed = 3;
  GatePredictor pred(cfg, kTick);
  GateHistory hist(cfg.history_capacity);
  const GateObservation fixed = obs_at(0.0, 1.0, 0.0, 0.0);
  double loss = 1.0;
  for (int k = 0; k < 200; ++k) {
    hist.push(k * kTick, fixed);
    const auto l = pred.observe_and_train(hist);
    if (l) loss = *l;
  }
  EXPECT_LT(loss, 1e-6);
  const GateObservation out = pred.predict(fixed, fixed, 1.0);
  EXPECT_LT((out.center - fixed.center).norm(), 1e-3);
}

TEST(GatePredictor, TooShortHistoryReturnsNothing) {
  GatePredictor pred(PredictorConfig{}, kTick);
  GateHistory hist(16);
  EXPECT_FALSE(pred.observe_and_train(hist).has_value());
  hist.push(0.0, obs_at(0, 1, 0, 0));
  EXPECT_FALSE(pred.observe_and_train(hist).has_value());
  hist.push(kTick, obs_at(0.01, 1, 0, 0));
  EXPECT_FALSE(pred.observe_and_train(hist).has_value());
  hist.push(2 * kTick, obs_at(0.02, 1, 0, 0));
  EXPECT_TRUE(pred.observe_and_train(hist).has_value());
}

TEST(GatePredictor, LearnsPendulumLookahead) {
  // One-second lookahead after 5 s of online training, averaged over seeds.
  const double L = 2.0;
  GateGeometry geo;
  double sum_err = 0.0;
  const int episodes = 10;
  for (int ep = 0; ep < episodes; ++ep) {
    std::mt19937_64 rng(spawn_seed(99, ep));
    std::uniform_real_distribution<double> th(-M_PI / 4, M_PI / 4);
    std::uniform_real_distribution<double> thd(-M_PI / 20, M_PI / 20);
    GateState gs{th(rng), thd(rng)};
    PredictorConfig cfg;
    cfg.seed = spawn_seed(7, ep);
    GatePredictor pred(cfg, kTick);
    GateHistory hist(cfg.history_capacity);
    double t = 0.0;
    for (int k = 0; k < 250; ++k) {
      hist.push(t, gate_observe(gs, geo));
      pred.observe_and_train(hist);
      gs = gate_step(gs, kTick, kG, L);
      t += kTick;
    }
    hist.push(t, gate_observe(gs, geo));
    GateState fut = gs;
    for (int k = 0; k < 50; ++k) fut = gate_step(fut, kTick, kG, L);
    const GateObservation truth = gate_observe(fut, geo);
    const GateObservation guess =
        pred.predict(hist[hist.size() - 2].obs, hist.back().obs, 1.0);
    sum_err += (guess.center - truth.center).norm();
  }
  EXPECT_LT(sum_err / episodes, 0.15);
}

TEST(GatePredictor, DeterministicUnderSeed) {
  const double L = 2.0;
  GateGeometry geo;
  auto run = [&] {
    GateState gs{0.5, -0.1};
    PredictorConfig cfg;
    cfg.seed = 42;
    GatePredictor pred(cfg, kTick);
    GateHistory hist(cfg.history_capacity);
    for (int k = 0; k < 100; ++k) {
      hist.push(k * kTick, gate_observe(gs, geo));
      pred.observe_and_train(hist);
      gs = gate_step(gs, kTick, kG, L);
    }
    return pred.predict(hist[hist.size() - 2].obs, hist.back().obs, 0.7);
  };
  const GateObservation a = run();
  const GateObservation b = run();
  EXPECT_EQ(a.center, b.center);
  EXPECT_EQ(a.center_vel, b.center_vel);
}

TEST(GatePredictor, LearningIsInsensitiveToGatePlacement) {
  // Identical swing, pivots far apart: the distant gate must train to the
  // same lookahead quality instead of diverging on large raw coordinates.
  const double L = 2.0;
  const auto lookahead_err = [&](const Vec3d& pivot) {
    GateGeometry geo;
    geo.pivot = pivot;
    GateState gs{0.6, -0.1};
    PredictorConfig cfg;
    cfg.seed = 3;
    GatePredictor pred(cfg, kTick);
    GateHistory hist(cfg.history_capacity);
    double t = 0.0;
    for (int k = 0; k < 250; ++k) {
      hist.push(t, gate_observe(gs, geo));
      pred.observe_and_train(hist);
      gs = gate_step(gs, kTick, kG, L);
      t += kTick;
    }
    hist.push(t, gate_observe(gs, geo));
    GateState fut = gs;
    for (int k = 0; k < 50; ++k) fut = gate_step(fut, kTick, kG, L);
    const GateObservation truth = gate_observe(fut, geo);
    const GateObservation guess =
        pred.predict(hist[hist.size() - 2].obs, hist.back().obs, 1.0);
    return (guess.center - truth.center).norm();
  };
  const double near_err = lookahead_err(Vec3d(2, 0, 3));
  const double far_err = lookahead_err(Vec3d(50, -20, 3));
  EXPECT_LT(far_err, 0.2);
  EXPECT_NEAR(far_err, near_err, 1e-9);
}

TEST(GatePredictor, TrackShapeAndAnchor) {
  PredictorConfig cfg;
  GatePredictor pred(cfg, kTick);
  GateHistory hist(cfg.history_capacity);
  EXPECT_THROW(pred.predict_track(hist, 50), std::invalid_argument);

  const GateObservation only = obs_at(0.2, 1.0, 0.3, 0.0);
  hist.push(0.0, only);
  const auto constant = pred.predict_track(hist, 50);
  ASSERT_EQ(constant.size(), 51u);
  EXPECT_EQ(constant[37].center, only.center);

  const GateObservation next = obs_at(0.25, 1.0, 0.3, 0.05);
  hist.push(kTick, next);
  const auto track = pred.predict_track(hist, 50);
  ASSERT_EQ(track.size(), 51u);
  EXPECT_EQ(track[0].center, next.center);
  EXPECT_EQ(track[0].center_vel, next.center_vel);
}

}  // namespace
}  // namespace hympc
