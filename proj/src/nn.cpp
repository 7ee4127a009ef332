#include "demos/nn.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include <Eigen/QR>

namespace demos {
namespace {

void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument(what);
}

Eigen::MatrixXd orthogonal_matrix(std::size_t rows, std::size_t cols,
                                  double gain, std::mt19937_64& rng) {
  const std::size_t big = std::max(rows, cols);
  const std::size_t small = std::min(rows, cols);
  std::normal_distribution<double> normal(0.0, 1.0);
  Eigen::MatrixXd g(big, small);
  for (Eigen::Index c = 0; c < g.cols(); ++c) {
    for (Eigen::Index r = 0; r < g.rows(); ++r) g(r, c) = normal(rng);
  }
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(g);
  Eigen::MatrixXd q = qr.householderQ() * Eigen::MatrixXd::Identity(big, small);
  const Eigen::MatrixXd r = qr.matrixQR().topRows(small).triangularView<Eigen::Upper>();
  for (std::size_t k = 0; k < small; ++k) {
    if (r(k, k) < 0.0) q.col(k) = -q.col(k);
  }
  if (rows >= cols) return gain * q;
  return gain * q.transpose();
}

}  // namespace

double elu(double x) { return x > 0.0 ? x : std::exp(x) - 1.0; }

Mlp::Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
  require(sizes_.size() >= 2, "an Mlp needs at least input and output sizes");
  std::size_t total = 0;
  for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
    require(sizes_[l] > 0 && sizes_[l + 1] > 0, "layer widths must be positive");
    offsets_.push_back(total);
    total += sizes_[l + 1] * sizes_[l] + sizes_[l + 1];
  }
  params_ = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(total));
}

Mlp Mlp::orthogonal(std::vector<std::size_t> sizes, double output_gain,
                    std::mt19937_64& rng) {
  Mlp net(std::move(sizes));
  for (std::size_t l = 0; l < net.num_layers(); ++l) {
    const bool last = l + 1 == net.num_layers();
    net.weight(l) = orthogonal_matrix(net.sizes_[l + 1], net.sizes_[l],
                                      last ? output_gain : std::sqrt(2.0), rng);
  }
  return net;
}

Eigen::Map<Eigen::MatrixXd> Mlp::weight(std::size_t layer) {
  return {params_.data() + weight_offset(layer),
          static_cast<Eigen::Index>(sizes_[layer + 1]),
          static_cast<Eigen::Index>(sizes_[layer])};
}

Eigen::Map<const Eigen::MatrixXd> Mlp::weight(std::size_t layer) const {
  return {params_.data() + weight_offset(layer),
          static_cast<Eigen::Index>(sizes_[layer + 1]),
          static_cast<Eigen::Index>(sizes_[layer])};
}

Eigen::Map<Eigen::VectorXd> Mlp::bias(std::size_t layer) {
  return {params_.data() + bias_offset(layer),
          static_cast<Eigen::Index>(sizes_[layer + 1])};
}

Eigen::Map<const Eigen::VectorXd> Mlp::bias(std::size_t layer) const {
  return {params_.data() + bias_offset(layer),
          static_cast<Eigen::Index>(sizes_[layer + 1])};
}

Eigen::MatrixXd Mlp::forward(const Eigen::Ref<const Eigen::MatrixXd>& x,
                             Cache* cache) const {
  require(!sizes_.empty(), "forward on an empty Mlp");
  require(static_cast<std::size_t>(x.rows()) == input_dim(),
          "Mlp input has " + std::to_string(x.rows()) + " rows, expected " +
              std::to_string(input_dim()));
  if (cache) {
    cache->inputs.resize(num_layers());
    cache->pre.resize(num_layers());
  }
  Eigen::MatrixXd h = x;
  for (std::size_t l = 0; l < num_layers(); ++l) {
    Eigen::MatrixXd z = weight(l) * h;
    z.colwise() += bias(l);
    if (cache) cache->inputs[l] = std::move(h);
    if (l + 1 < num_layers()) {
      h = (z.array() > 0.0).select(z.array(), z.array().exp() - 1.0).matrix();
    } else {
      h = z;
    }
    if (cache) cache->pre[l] = std::move(z);
  }
  return h;
}

Eigen::MatrixXd Mlp::backward(const Cache& cache,
                              const Eigen::Ref<const Eigen::MatrixXd>& dy,
                              Eigen::VectorXd& grad) const {
  require(cache.pre.size() == num_layers(), "cache does not match this Mlp");
  require(static_cast<std::size_t>(dy.rows()) == output_dim() &&
              dy.cols() == cache.pre.back().cols(),
          "gradient shape does not match the cached forward pass");
  if (grad.size() == 0) grad = Eigen::VectorXd::Zero(params_.size());
  require(grad.size() == params_.size(), "gradient buffer has wrong size");

  Eigen::MatrixXd delta = dy;  // dL/dz of the current layer
  for (std::size_t l = num_layers(); l-- > 0;) {
    if (l + 1 < num_layers()) {
      // elu'(z) = 1 for z > 0, exp(z) = elu(z) + 1 otherwise
      delta.array() *= (cache.pre[l].array() > 0.0)
                           .select(1.0, cache.inputs[l + 1].array() + 1.0);
    }
    Eigen::Map<Eigen::MatrixXd> gw(grad.data() + weight_offset(l),
                                   static_cast<Eigen::Index>(sizes_[l + 1]),
                                   static_cast<Eigen::Index>(sizes_[l]));
    Eigen::Map<Eigen::VectorXd> gb(grad.data() + bias_offset(l),
                                   static_cast<Eigen::Index>(sizes_[l + 1]));
    gw.noalias() += delta * cache.inputs[l].transpose();
    gb += delta.rowwise().sum();
    delta = weight(l).transpose() * delta;
  }
  return delta;
}

double gaussian_entropy(const Eigen::Ref<const Eigen::VectorXd>& log_std) {
  const double c = 0.5 * std::log(2.0 * std::numbers::pi * std::numbers::e);
  return log_std.sum() + c * static_cast<double>(log_std.size());
}

GaussianStats gaussian_log_prob_entropy(
    const Eigen::Ref<const Eigen::MatrixXd>& mean,
    const Eigen::Ref<const Eigen::VectorXd>& log_std,
    const Eigen::Ref<const Eigen::MatrixXd>& actions) {
  require(mean.rows() == log_std.size() && actions.rows() == mean.rows() &&
              actions.cols() == mean.cols(),
          "gaussian: mean, log_std and actions must agree in shape");
  const Eigen::ArrayXd inv_std = (-log_std.array()).exp();
  const double norm = log_std.sum() +
                      0.5 * std::log(2.0 * std::numbers::pi) *
                          static_cast<double>(log_std.size());
  GaussianStats out;
  const Eigen::ArrayXXd z = (actions - mean).array().colwise() * inv_std;
  out.log_prob = (-0.5 * z.square().colwise().sum() - norm).transpose().matrix();
  out.entropy = gaussian_entropy(log_std);
  return out;
}

bool AdamW::step(Eigen::Ref<Eigen::VectorXd> params,
                 const Eigen::Ref<const Eigen::VectorXd>& grad) {
  if (grad.size() != params.size()) {
    throw std::invalid_argument("AdamW: gradient and parameter sizes differ");
  }
  if (!grad.allFinite()) return false;
  if (first_moment.size() != params.size()) {
    first_moment = Eigen::VectorXd::Zero(params.size());
    second_moment = Eigen::VectorXd::Zero(params.size());
  }
  ++step_count;
  params *= 1.0 - learning_rate * weight_decay;
  first_moment = beta1 * first_moment + (1.0 - beta1) * grad;
  second_moment =
      beta2 * second_moment + (1.0 - beta2) * grad.cwiseProduct(grad);
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
  params.array() -= learning_rate * (first_moment.array() / c1) /
                    ((second_moment.array() / c2).sqrt() + epsilon);
  return true;
}

}  // namespace demos
