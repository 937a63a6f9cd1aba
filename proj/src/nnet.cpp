#include "hympc/nnet.hpp"

#include <nlohmann/json.hpp>

#include <cmath>
#include <fstream>
#include <random>
#include <stdexcept>

namespace hympc {
namespace {

constexpr const char* kFormat = "hympc-mlp";
constexpr int kVersion = 1;

double elu(double x) { return x > 0.0 ? x : std::expm1(x); }
double elu_grad(double x) { return x > 0.0 ? 1.0 : std::exp(x); }

}  // namespace

Mlp::Mlp(std::vector<int> layer_sizes, std::uint64_t seed)
    : sizes_(std::move(layer_sizes)) {
  if (sizes_.size() < 2) {
    throw std::invalid_argument("Mlp: need at least input and output layers");
  }
  for (int s : sizes_) {
    if (s <= 0) throw std::invalid_argument("Mlp: layer sizes must be positive");
  }
  std::mt19937_64 rng(seed);
  for (std::size_t l = 1; l < sizes_.size(); ++l) {
    const int fan_in = sizes_[l - 1];
    const double bound = std::sqrt(6.0 / fan_in);
    std::uniform_real_distribution<double> u(-bound, bound);
    Eigen::MatrixXd w(sizes_[l], fan_in);
    for (Eigen::Index j = 0; j < w.size(); ++j) w.data()[j] = u(rng);
    w_.push_back(std::move(w));
    b_.push_back(Eigen::VectorXd::Zero(sizes_[l]));
    vw_.push_back(Eigen::MatrixXd::Zero(sizes_[l], fan_in));
    vb_.push_back(Eigen::VectorXd::Zero(sizes_[l]));
  }
}

void Mlp::check_io(Eigen::Index rows_in, Eigen::Index rows_out) const {
  if (w_.empty()) throw std::logic_error("Mlp: uninitialized");
  if (rows_in != input_size()) {
    throw std::invalid_argument("Mlp: input dimension mismatch");
  }
  if (rows_out >= 0 && rows_out != output_size()) {
    throw std::invalid_argument("Mlp: target dimension mismatch");
  }
}

Eigen::VectorXd Mlp::forward(const Eigen::VectorXd& x) const {
  check_io(x.rows(), -1);
  ++forward_calls_;
  Eigen::VectorXd a = x;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    a = (w_[l] * a + b_[l]).eval();
    if (l + 1 < w_.size()) a = a.unaryExpr([](double v) { return elu(v); });
  }
  return a;
}

Eigen::MatrixXd Mlp::forward_batch(const Eigen::MatrixXd& x) const {
  check_io(x.rows(), -1);
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l < w_.size(); ++l) {
    a = ((w_[l] * a).colwise() + b_[l]).eval();
    if (l + 1 < w_.size()) a = a.unaryExpr([](double v) { return elu(v); });
  }
  return a;
}

double Mlp::loss(const TrainBatch& batch) const {
  check_io(batch.inputs.rows(), batch.targets.rows());
  if (batch.inputs.cols() != batch.targets.cols() || batch.inputs.cols() == 0) {
    throw std::invalid_argument("Mlp: batch shape mismatch");
  }
  const Eigen::MatrixXd pred = forward_batch(batch.inputs);
  return (pred - batch.targets).squaredNorm() / batch.inputs.cols();
}

void Mlp::gradients(const TrainBatch& batch, std::vector<Eigen::MatrixXd>* dw,
                    std::vector<Eigen::VectorXd>* db) const {
  check_io(batch.inputs.rows(), batch.targets.rows());
  if (batch.inputs.cols() != batch.targets.cols() || batch.inputs.cols() == 0) {
    throw std::invalid_argument("Mlp: batch shape mismatch");
  }
  const Eigen::Index n = batch.inputs.cols();
  const std::size_t layers = w_.size();

  std::vector<Eigen::MatrixXd> acts(layers + 1);
  std::vector<Eigen::MatrixXd> pre(layers);
  acts[0] = batch.inputs;
  for (std::size_t l = 0; l < layers; ++l) {
    pre[l] = (w_[l] * acts[l]).colwise() + b_[l];
    acts[l + 1] = (l + 1 < layers)
                      ? pre[l].unaryExpr([](double v) { return elu(v); }).eval()
                      : pre[l];
  }

  dw->assign(layers, Eigen::MatrixXd());
  db->assign(layers, Eigen::VectorXd());
  Eigen::MatrixXd delta = 2.0 * (acts[layers] - batch.targets) / double(n);
  for (std::size_t l = layers; l-- > 0;) {
    (*dw)[l] = delta * acts[l].transpose();
    (*db)[l] = delta.rowwise().sum();
    if (l > 0) {
      delta = (w_[l].transpose() * delta).array() *
              pre[l - 1].unaryExpr([](double v) { return elu_grad(v); }).array();
    }
  }
}

double Mlp::train_step(const TrainBatch& batch, double lr, double momentum) {
  const double before = loss(batch);
  if (!std::isfinite(before)) {
    throw std::runtime_error("Mlp: non-finite training loss");
  }
  std::vector<Eigen::MatrixXd> dw;
  std::vector<Eigen::VectorXd> db;
  gradients(batch, &dw, &db);
  for (std::size_t l = 0; l < w_.size(); ++l) {
    vw_[l] = momentum * vw_[l] - lr * dw[l];
    vb_[l] = momentum * vb_[l] - lr * db[l];
    w_[l] += vw_[l];
    b_[l] += vb_[l];
  }
  return before;
}

void Mlp::zero_output_layer() {
  if (w_.empty()) throw std::logic_error("Mlp: uninitialized");
  w_.back().setZero();
  b_.back().setZero();
}

void Mlp::save(const std::string& path) const {
  if (w_.empty()) throw std::logic_error("Mlp: uninitialized");
  nlohmann::json j;
  j["format"] = kFormat;
  j["version"] = kVersion;
  j["layers"] = sizes_;
  auto& jw = j["weights"] = nlohmann::json::array();
  auto& jb = j["biases"] = nlohmann::json::array();
  for (std::size_t l = 0; l < w_.size(); ++l) {
    std::vector<double> flat(w_[l].size());
    // Row-major on disk.
    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic,
                             Eigen::RowMajor>>(flat.data(), w_[l].rows(),
                                               w_[l].cols()) = w_[l];
    jw.push_back(flat);
    jb.push_back(std::vector<double>(b_[l].data(), b_[l].data() + b_[l].size()));
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("Mlp: cannot write " + path);
  out << j.dump(2) << "\n";
}

Mlp Mlp::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("Mlp: cannot read " + path);
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != kFormat) {
    throw std::runtime_error("Mlp: unrecognized file format in " + path);
  }
  if (j.value("version", -1) != kVersion) {
    throw std::runtime_error("Mlp: unsupported version in " + path);
  }
  Mlp net(j.at("layers").get<std::vector<int>>(), 0);
  const auto& jw = j.at("weights");
  const auto& jb = j.at("biases");
  if (jw.size() != net.w_.size() || jb.size() != net.b_.size()) {
    throw std::runtime_error("Mlp: layer count mismatch in " + path);
  }
  for (std::size_t l = 0; l < net.w_.size(); ++l) {
    const auto flat = jw[l].get<std::vector<double>>();
    const auto bias = jb[l].get<std::vector<double>>();
    if (static_cast<Eigen::Index>(flat.size()) != net.w_[l].size() ||
        static_cast<Eigen::Index>(bias.size()) != net.b_[l].size()) {
      throw std::runtime_error("Mlp: parameter shape mismatch in " + path);
    }
    net.w_[l] = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic,
                                               Eigen::Dynamic, Eigen::RowMajor>>(
        flat.data(), net.w_[l].rows(), net.w_[l].cols());
    net.b_[l] = Eigen::Map<const Eigen::VectorXd>(bias.data(), bias.size());
    net.vw_[l].setZero();
    net.vb_[l].setZero();
  }
  return net;
}

}  // namespace hympc
