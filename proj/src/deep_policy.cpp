#include "hympc/deep_policy.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace hympc {
namespace {

constexpr const char* kSidecarFormat = "hympc-deep-policy";
constexpr int kSidecarVersion = 1;

bool record_valid(const ReplayRecord& r) {
  if (!r.obs.rel.allFinite()) return false;
  if (!std::isfinite(r.lambda) || r.lambda < 0.0 || r.lambda > 1.0)
    return false;
  if (!std::isfinite(r.t_p) || r.t_p < 0.0) return false;
  if (!std::isfinite(r.t) || r.t < 0.0) return false;
  return true;
}

void write_csv_double(std::ostream& os, double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  os << buf;
}

}  // namespace

void ReplayBuffer::push(const ReplayRecord& r) {
  if (!record_valid(r)) {
    throw std::invalid_argument("ReplayBuffer: invalid record");
  }
  records_.push_back(r);
}

void ReplayBuffer::append(const ReplayBuffer& other) {
  records_.insert(records_.end(), other.records_.begin(),
                  other.records_.end());
}

void ReplayBuffer::save_csv(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("ReplayBuffer: cannot write " + path);
  out << "o1,o2,o3,o4,o5,o6,lambda,t_p,t\n";
  for (const ReplayRecord& r : records_) {
    for (int i = 0; i < 6; ++i) {
      write_csv_double(out, r.obs.rel(i));
      out << ',';
    }
    write_csv_double(out, r.lambda);
    out << ',';
    write_csv_double(out, r.t_p);
    out << ',';
    write_csv_double(out, r.t);
    out << '\n';
  }
}

ReplayBuffer ReplayBuffer::load_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ReplayBuffer: cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) {
    throw std::runtime_error("ReplayBuffer: empty file " + path);
  }
  if (line.rfind("o1,", 0) != 0) {
    throw std::runtime_error("ReplayBuffer: unrecognized header in " + path);
  }
  ReplayBuffer buf;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string cell;
    double vals[9];
    for (int i = 0; i < 9; ++i) {
      if (!std::getline(row, cell, ',')) {
        throw std::runtime_error("ReplayBuffer: short row in " + path);
      }
      vals[i] = std::stod(cell);
    }
    ReplayRecord r;
    for (int i = 0; i < 6; ++i) r.obs.rel(i) = vals[i];
    r.lambda = vals[6];
    r.t_p = vals[7];
    r.t = vals[8];
    buf.push(r);
  }
  return buf;
}

DeepPolicy::DeepPolicy(const DeepPolicyConfig& cfg) : cfg_(cfg) {
  if (cfg_.epochs <= 0 || cfg_.batch_size <= 0 || cfg_.lr <= 0.0) {
    throw std::invalid_argument("DeepPolicy: bad training configuration");
  }
  if (!(cfg_.t_p_min > 0.0) || !(cfg_.t_p_max > cfg_.t_p_min)) {
    throw std::invalid_argument("DeepPolicy: bad t_p clamp range");
  }
  std::vector<int> sizes;
  sizes.push_back(6);
  sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  sizes.push_back(1);
  theta_ = Mlp(sizes, cfg_.seed);
  rho_ = Mlp(sizes, cfg_.seed + 1);
}

PolicyTrainReport DeepPolicy::train(const ReplayBuffer& buf) {
  if (buf.empty()) throw std::invalid_argument("DeepPolicy: empty buffer");
  const int n = static_cast<int>(buf.size());

  Eigen::MatrixXd inputs(6, n);
  Eigen::MatrixXd lam(1, n), tp(1, n);
  for (int i = 0; i < n; ++i) {
    inputs.col(i) = buf[i].obs.rel;
    lam(0, i) = buf[i].lambda;
    tp(0, i) = buf[i].t_p;
  }

  in_mean_ = inputs.rowwise().mean();
  for (int r = 0; r < 6; ++r) {
    const double var =
        (inputs.row(r).array() - in_mean_(r)).square().sum() / n;
    in_std_(r) = std::max(std::sqrt(var), 1e-8);
    inputs.row(r) = (inputs.row(r).array() - in_mean_(r)) / in_std_(r);
  }

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(cfg_.seed ^ 0x9e3779b97f4a7c15ull);

  PolicyTrainReport report;
  const int bs = std::min(cfg_.batch_size, n);
  TrainBatch batch_l, batch_t;
  batch_l.inputs.resize(6, bs);
  batch_l.targets.resize(1, bs);
  batch_t.inputs.resize(6, bs);
  batch_t.targets.resize(1, bs);
  for (int epoch = 0; epoch < cfg_.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start + bs <= n; start += bs) {
      for (int j = 0; j < bs; ++j) {
        const int idx = order[start + j];
        batch_l.inputs.col(j) = inputs.col(idx);
        batch_l.targets(0, j) = lam(0, idx);
        batch_t.inputs.col(j) = inputs.col(idx);
        batch_t.targets(0, j) = tp(0, idx);
      }
      const double l1 = theta_.train_step(batch_l, cfg_.lr, cfg_.momentum);
      const double l2 = rho_.train_step(batch_t, cfg_.lr, cfg_.momentum);
      if (!std::isfinite(l1) || !std::isfinite(l2)) {
        throw std::runtime_error("DeepPolicy: training diverged");
      }
    }
    report.lambda_epoch_loss.push_back(theta_.loss({inputs, lam}));
    report.tp_epoch_loss.push_back(rho_.loss({inputs, tp}));
  }
  report.lambda_loss = report.lambda_epoch_loss.back();
  report.tp_loss = report.tp_epoch_loss.back();
  trained_ = true;
  return report;
}

std::pair<double, double> DeepPolicy::infer(const Observation& o) const {
  Eigen::VectorXd x(6);
  for (int i = 0; i < 6; ++i) x(i) = (o.rel(i) - in_mean_(i)) / in_std_(i);
  const double lam = std::clamp(theta_.forward(x)(0), 0.0, 1.0);
  const double t_p =
      std::clamp(rho_.forward(x)(0), cfg_.t_p_min, cfg_.t_p_max);
  return {lam, t_p};
}

void DeepPolicy::save(const std::string& dir) const {
  std::filesystem::create_directories(dir);
  theta_.save(dir + "/mlp_theta.nnet");
  rho_.save(dir + "/mlp_rho.nnet");
  nlohmann::json j;
  j["format"] = kSidecarFormat;
  j["version"] = kSidecarVersion;
  j["in_mean"] = std::vector<double>(in_mean_.data(), in_mean_.data() + 6);
  j["in_std"] = std::vector<double>(in_std_.data(), in_std_.data() + 6);
  j["t_p_min"] = cfg_.t_p_min;
  j["t_p_max"] = cfg_.t_p_max;
  j["trained"] = trained_;
  std::ofstream out(dir + "/normalization.json");
  if (!out) {
    throw std::runtime_error("DeepPolicy: cannot write sidecar in " + dir);
  }
  out << j.dump(2) << "\n";
}

DeepPolicy DeepPolicy::load(const std::string& dir) {
  std::ifstream in(dir + "/normalization.json");
  if (!in) {
    throw std::runtime_error("DeepPolicy: cannot read sidecar in " + dir);
  }
  nlohmann::json j;
  in >> j;
  if (j.value("format", "") != kSidecarFormat) {
    throw std::runtime_error("DeepPolicy: unrecognized sidecar in " + dir);
  }
  if (j.value("version", -1) != kSidecarVersion) {
    throw std::runtime_error("DeepPolicy: unsupported sidecar version in " +
                             dir);
  }
  DeepPolicy policy;
  policy.theta_ = Mlp::load(dir + "/mlp_theta.nnet");
  policy.rho_ = Mlp::load(dir + "/mlp_rho.nnet");
  const auto mean = j.at("in_mean").get<std::vector<double>>();
  const auto std = j.at("in_std").get<std::vector<double>>();
  if (mean.size() != 6 || std.size() != 6) {
    throw std::runtime_error("DeepPolicy: bad normalization shape in " + dir);
  }
  for (int i = 0; i < 6; ++i) {
    policy.in_mean_(i) = mean[i];
    policy.in_std_(i) = std[i];
  }
  policy.cfg_.t_p_min = j.at("t_p_min").get<double>();
  policy.cfg_.t_p_max = j.at("t_p_max").get<double>();
  policy.trained_ = j.value("trained", true);
  return policy;
}

}  // namespace hympc
