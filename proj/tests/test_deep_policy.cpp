#include "hympc/deep_policy.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <random>

namespace hympc {
namespace {

Observation obs6(double a, double b, double c, double d, double e, double f) {
  Observation o;
  o.rel << a, b, c, d, e, f;
  return o;
}

ReplayRecord record(const Observation& o, double lambda, double t_p,
                    double t = 0.0) {
  return ReplayRecord{o, lambda, t_p, t};
}

/// Smooth synthetic supervision: labels depend only on the first two
/// observation features, so a trained head must beat the mean predictor.
ReplayBuffer synthetic_buffer(int n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  ReplayBuffer buf;
  for (int i = 0; i < n; ++i) {
    Observation o;
    for (int k = 0; k < 6; ++k) o.rel(k) = gauss(rng);
    const double lambda = 0.5 + 0.4 * std::tanh(o.rel(0));
    const double t_p = 0.5 + 0.3 * std::sin(o.rel(1));
    buf.push(record(o, lambda, t_p, 0.02 * i));
  }
  return buf;
}

TEST(Observation, RelativeStateIsGateMinusDrone) {
  DroneState drone;
  drone.p = Vec3d(1, 2, 3);
  drone.v = Vec3d(0.5, -1, 0);
  GateObservation gate;
  gate.center = Vec3d(2, 0, 4);
  gate.center_vel = Vec3d(0, 1, -2);
  const Observation o = make_observation(drone, gate);
  EXPECT_EQ(o.rel.head<3>(), Vec3d(1, -2, 1));
  EXPECT_EQ(o.rel.tail<3>(), Vec3d(-0.5, 2, -2));
}

TEST(ReplayBuffer, RejectsOutOfRangeRecords) {
  ReplayBuffer buf;
  const Observation o = obs6(0, 0, 0, 0, 0, 0);
  EXPECT_THROW(buf.push(record(o, -0.1, 0.5)), std::invalid_argument);
  EXPECT_THROW(buf.push(record(o, 1.1, 0.5)), std::invalid_argument);
  EXPECT_THROW(buf.push(record(o, 0.5, -0.5)), std::invalid_argument);
  Observation bad = o;
  bad.rel(3) = std::nan("");
  EXPECT_THROW(buf.push(record(bad, 0.5, 0.5)), std::invalid_argument);
  buf.push(record(o, 0.0, 0.0));
  buf.push(record(o, 1.0, 1.0));
  EXPECT_EQ(buf.size(), 2u);
}

TEST(ReplayBuffer, CsvRoundTripIsExact) {
  const ReplayBuffer buf = synthetic_buffer(57, 3);
  const std::string path =
      (std::filesystem::temp_directory_path() / "replay_rt.csv").string();
  buf.save_csv(path);
  const ReplayBuffer back = ReplayBuffer::load_csv(path);
  ASSERT_EQ(back.size(), buf.size());
  for (std::size_t i = 0; i < buf.size(); ++i) {
    EXPECT_EQ(back[i].obs.rel, buf[i].obs.rel);
    EXPECT_EQ(back[i].lambda, buf[i].lambda);
    EXPECT_EQ(back[i].t_p, buf[i].t_p);
    EXPECT_EQ(back[i].t, buf[i].t);
  }
  std::remove(path.c_str());
}

TEST(ReplayBuffer, LoadRejectsForeignFiles) {
  const std::string path =
      (std::filesystem::temp_directory_path() / "replay_bad.csv").string();
  {
    std::FILE* f = std::fopen(path.c_str(), "w");
    std::fputs("x,y\n1,2\n", f);
    std::fclose(f);
  }
  EXPECT_THROW(ReplayBuffer::load_csv(path), std::runtime_error);
  std::remove(path.c_str());
}

DeepPolicyConfig small_config(int epochs = 60) {
  DeepPolicyConfig cfg;
  cfg.hidden = {32, 32};
  cfg.epochs = epochs;
  cfg.batch_size = 32;
  cfg.lr = 5e-3;
  cfg.seed = 7;
  return cfg;
}

TEST(DeepPolicy, LearnsConstantLabels) {
  ReplayBuffer buf;
  std::mt19937_64 rng(11);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < 256; ++i) {
    Observation o;
    for (int k = 0; k < 6; ++k) o.rel(k) = gauss(rng);
    buf.push(record(o, 0.37, 0.61));
  }
  DeepPolicyConfig cfg = small_config(250);
  cfg.lr = 1e-2;
  DeepPolicy policy(cfg);
  const PolicyTrainReport report = policy.train(buf);
  EXPECT_LT(report.lambda_loss, 1e-4);
  EXPECT_LT(report.tp_loss, 1e-4);
}

TEST(DeepPolicy, EpochLossDecreases) {
  const ReplayBuffer buf = synthetic_buffer(512, 5);
  DeepPolicy policy(small_config(30));
  const PolicyTrainReport report = policy.train(buf);
  ASSERT_EQ(report.lambda_epoch_loss.size(), 30u);
  EXPECT_LT(report.lambda_epoch_loss.back(), report.lambda_epoch_loss.front());
  EXPECT_LT(report.tp_epoch_loss.back(), report.tp_epoch_loss.front());
}

TEST(DeepPolicy, BeatsMeanPredictorOnHeldOutSplit) {
  const ReplayBuffer all = synthetic_buffer(1000, 9);
  ReplayBuffer train_split;
  std::vector<ReplayRecord> held;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (i % 10 == 0) {
      held.push_back(all[i]);
    } else {
      train_split.push(all[i]);
    }
  }
  DeepPolicy policy(small_config(60));
  policy.train(train_split);

  double label_mean = 0.0;
  for (const ReplayRecord& r : held) label_mean += r.lambda;
  label_mean /= static_cast<double>(held.size());
  double mse = 0.0, var = 0.0, abs_err = 0.0;
  for (const ReplayRecord& r : held) {
    const auto [lam, t_p] = policy.infer(r.obs);
    mse += (lam - r.lambda) * (lam - r.lambda);
    var += (r.lambda - label_mean) * (r.lambda - label_mean);
    abs_err += std::abs(lam - r.lambda);
  }
  mse /= static_cast<double>(held.size());
  var /= static_cast<double>(held.size());
  abs_err /= static_cast<double>(held.size());
  EXPECT_LT(mse, var);
  EXPECT_LT(abs_err, 0.15);
}

TEST(DeepPolicy, InferenceClampsToPhysicalRanges) {
  ReplayBuffer buf;
  std::mt19937_64 rng(13);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < 128; ++i) {
    Observation o;
    for (int k = 0; k < 6; ++k) o.rel(k) = gauss(rng);
    buf.push(record(o, (i % 2) ? 1.0 : 0.0, (i % 2) ? 1.0 : 0.02));
  }
  DeepPolicy policy(small_config(20));
  policy.train(buf);
  std::mt19937_64 probe(17);
  for (int i = 0; i < 200; ++i) {
    Observation o;
    for (int k = 0; k < 6; ++k) o.rel(k) = 10.0 * gauss(probe);
    const auto [lam, t_p] = policy.infer(o);
    EXPECT_GE(lam, 0.0);
    EXPECT_LE(lam, 1.0);
    EXPECT_GE(t_p, policy.config().t_p_min);
    EXPECT_LE(t_p, policy.config().t_p_max);
  }
}

TEST(DeepPolicy, InferenceIsDeterministicAndSingleForward) {
  const ReplayBuffer buf = synthetic_buffer(128, 21);
  DeepPolicy policy(small_config(10));
  policy.train(buf);
  const Observation o = obs6(0.3, -0.7, 1.1, 0.0, 0.4, -0.2);

  policy.lambda_net().reset_forward_calls();
  policy.tp_net().reset_forward_calls();
  const auto [lam1, tp1] = policy.infer(o);
  EXPECT_EQ(policy.lambda_net().forward_calls(), 1u);
  EXPECT_EQ(policy.tp_net().forward_calls(), 1u);

  const auto [lam2, tp2] = policy.infer(o);
  EXPECT_EQ(lam1, lam2);
  EXPECT_EQ(tp1, tp2);
  EXPECT_EQ(policy.lambda_net().forward_calls(), 2u);
}

TEST(DeepPolicy, TrainingIsReproducibleUnderSeed) {
  const ReplayBuffer buf = synthetic_buffer(256, 31);
  DeepPolicy a(small_config(15));
  DeepPolicy b(small_config(15));
  a.train(buf);
  b.train(buf);
  const Observation o = obs6(0.1, 0.2, -0.3, 0.4, -0.5, 0.6);
  const auto [la, ta] = a.infer(o);
  const auto [lb, tb] = b.infer(o);
  EXPECT_EQ(la, lb);
  EXPECT_EQ(ta, tb);
}

TEST(DeepPolicy, SaveLoadPreservesInference) {
  const ReplayBuffer buf = synthetic_buffer(256, 41);
  DeepPolicy policy(small_config(15));
  policy.train(buf);
  const auto dir =
      std::filesystem::temp_directory_path() / "deep_policy_save";
  std::filesystem::create_directories(dir);
  policy.save(dir.string());
  const DeepPolicy back = DeepPolicy::load(dir.string());
  EXPECT_TRUE(back.trained());
  std::mt19937_64 rng(47);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (int i = 0; i < 20; ++i) {
    Observation o;
    for (int k = 0; k < 6; ++k) o.rel(k) = gauss(rng);
    const auto [l0, t0] = policy.infer(o);
    const auto [l1, t1] = back.infer(o);
    EXPECT_EQ(l0, l1);
    EXPECT_EQ(t0, t1);
  }
  std::filesystem::remove_all(dir);
}

TEST(DeepPolicy, RejectsEmptyBufferAndBadConfig) {
  DeepPolicy policy(small_config());
  EXPECT_THROW(policy.train(ReplayBuffer{}), std::invalid_argument);
  DeepPolicyConfig bad;
  bad.epochs = 0;
  EXPECT_THROW(DeepPolicy{bad}, std::invalid_argument);
  DeepPolicyConfig bad2;
  bad2.t_p_min = 0.5;
  bad2.t_p_max = 0.5;
  EXPECT_THROW(DeepPolicy{bad2}, std::invalid_argument);
}

}  // namespace
}  // namespace hympc
