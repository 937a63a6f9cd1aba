#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "hympc/dynamics.hpp"
#include "hympc/nnet.hpp"

namespace hympc {

using Vec6d = Eigen::Matrix<double, 6, 1>;

/// Relative gate state fed to the distilled policy heads.
struct Observation {
  Vec6d rel = Vec6d::Zero();
};

inline Observation make_observation(const DroneState& drone,
                                    const GateObservation& gate) {
  Observation o;
  o.rel.head<3>() = gate.center - drone.p;
  o.rel.tail<3>() = gate.center_vel - drone.v;
  return o;
}

/// One supervision sample harvested from a search-driven flight.
struct ReplayRecord {
  Observation obs;
  double lambda = 0.5;
  double t_p = 1.0;
  double t = 0.0;  // episode time the sample was taken at
};

/// Flat store of supervision samples with CSV persistence.
/// Rejects records with lambda outside [0, 1], negative t_p/t, or any
/// non-finite field.
class ReplayBuffer {
 public:
  void push(const ReplayRecord& r);
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }
  const ReplayRecord& operator[](std::size_t i) const { return records_[i]; }
  const std::vector<ReplayRecord>& records() const { return records_; }
  void append(const ReplayBuffer& other);

  void save_csv(const std::string& path) const;
  static ReplayBuffer load_csv(const std::string& path);

 private:
  std::vector<ReplayRecord> records_;
};

struct DeepPolicyConfig {
  std::vector<int> hidden{256, 256};
  int epochs = 40;
  int batch_size = 64;
  double lr = 1e-3;
  double momentum = 0.9;
  double t_p_min = 0.02;  // one tick
  double t_p_max = 1.0;   // trustworthy prediction horizon
  std::uint64_t seed = 0;
};

struct PolicyTrainReport {
  std::vector<double> lambda_epoch_loss;  // full-data MSE after each epoch
  std::vector<double> tp_epoch_loss;
  double lambda_loss = 0.0;  // final entries of the curves
  double tp_loss = 0.0;
};

/// Two distilled regression heads over the relative observation: one for the
/// cost mix lambda, one for the traversal time t_p. Inputs are standardized
/// with statistics frozen from the training buffer; outputs are clamped to
/// their physical ranges at inference time.
class DeepPolicy {
 public:
  DeepPolicy() : DeepPolicy(DeepPolicyConfig{}) {}
  explicit DeepPolicy(const DeepPolicyConfig& cfg);

  /// Fits normalization and both heads by minibatch SGD on MSE.
  PolicyTrainReport train(const ReplayBuffer& buf);

  /// One forward pass per head; lambda in [0, 1], t_p in [t_p_min, t_p_max].
  std::pair<double, double> infer(const Observation& o) const;

  bool trained() const { return trained_; }
  const Mlp& lambda_net() const { return theta_; }
  const Mlp& tp_net() const { return rho_; }
  Mlp& lambda_net() { return theta_; }
  Mlp& tp_net() { return rho_; }
  const Vec6d& input_mean() const { return in_mean_; }
  const Vec6d& input_std() const { return in_std_; }
  const DeepPolicyConfig& config() const { return cfg_; }

  /// Writes mlp_theta.nnet, mlp_rho.nnet and normalization.json into dir.
  void save(const std::string& dir) const;
  static DeepPolicy load(const std::string& dir);

 private:
  DeepPolicyConfig cfg_;
  Mlp theta_;
  Mlp rho_;
  Vec6d in_mean_ = Vec6d::Zero();
  Vec6d in_std_ = Vec6d::Ones();
  bool trained_ = false;
};

}  // namespace hympc
