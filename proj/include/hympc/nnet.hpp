#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

namespace hympc {

/// One training batch; samples are columns.
struct TrainBatch {
  Eigen::MatrixXd inputs;
  Eigen::MatrixXd targets;
};

/// Fully connected net with ELU hidden activations and a linear output layer,
/// trained by SGD with momentum on mean squared error.
class Mlp {
 public:
  Mlp() = default;
  /// layer_sizes = {in, hidden..., out}; weights He-uniform, seeded.
  Mlp(std::vector<int> layer_sizes, std::uint64_t seed);

  int input_size() const { return sizes_.front(); }
  int output_size() const { return sizes_.back(); }
  const std::vector<int>& layer_sizes() const { return sizes_; }

  Eigen::VectorXd forward(const Eigen::VectorXd& x) const;
  Eigen::MatrixXd forward_batch(const Eigen::MatrixXd& x) const;

  /// One SGD step on the batch; returns the pre-step mean squared error.
  double train_step(const TrainBatch& batch, double lr, double momentum = 0.0);
  double loss(const TrainBatch& batch) const;
  void gradients(const TrainBatch& batch, std::vector<Eigen::MatrixXd>* dw,
                 std::vector<Eigen::VectorXd>* db) const;

  std::vector<Eigen::MatrixXd>& weights() { return w_; }
  std::vector<Eigen::VectorXd>& biases() { return b_; }
  const std::vector<Eigen::MatrixXd>& weights() const { return w_; }
  const std::vector<Eigen::VectorXd>& biases() const { return b_; }

  /// Zeroes the final layer so a fresh net outputs exactly zero everywhere.
  void zero_output_layer();

  void save(const std::string& path) const;
  static Mlp load(const std::string& path);

  /// Count of single-sample forward passes since the last reset.
  std::size_t forward_calls() const { return forward_calls_; }
  void reset_forward_calls() { forward_calls_ = 0; }

 private:
  void check_io(Eigen::Index rows_in, Eigen::Index rows_out) const;

  std::vector<int> sizes_;
  std::vector<Eigen::MatrixXd> w_;
  std::vector<Eigen::VectorXd> b_;
  std::vector<Eigen::MatrixXd> vw_;
  std::vector<Eigen::VectorXd> vb_;
  mutable std::size_t forward_calls_ = 0;
};

inline Eigen::VectorXd mlp_forward(const Mlp& net, const Eigen::VectorXd& x) {
  return net.forward(x);
}

inline double mlp_train_step(Mlp& net, const TrainBatch& batch, double lr,
                             double momentum = 0.0) {
  return net.train_step(batch, lr, momentum);
}

}  // namespace hympc
