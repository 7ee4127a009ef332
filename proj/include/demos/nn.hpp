#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include <Eigen/Core>

namespace demos {

/// Fully connected network with elu hidden layers and an identity output.
/// All weights and biases live in one flat vector so optimizers, gradient
/// checks and checkpoints can treat the network as a single tensor. Layer l
/// stores its (out x in) column-major weight followed by its bias.
class Mlp {
 public:
  Mlp() = default;
  /// Zero-initialized network with layer widths `sizes` (input first).
  explicit Mlp(std::vector<std::size_t> sizes);

  /// Orthogonal-style initialization: hidden layers with gain sqrt(2), the
  /// output layer with `output_gain`, zero biases.
  static Mlp orthogonal(std::vector<std::size_t> sizes, double output_gain,
                        std::mt19937_64& rng);

  struct Cache {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
  };

  std::size_t input_dim() const { return sizes_.front(); }
  std::size_t output_dim() const { return sizes_.back(); }
  std::size_t num_layers() const { return sizes_.size() - 1; }
  const std::vector<std::size_t>& sizes() const { return sizes_; }
  std::size_t num_params() const { return static_cast<std::size_t>(params_.size()); }

  Eigen::VectorXd& params() { return params_; }
  const Eigen::VectorXd& params() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> weight(std::size_t layer);
  Eigen::Map<const Eigen::MatrixXd> weight(std::size_t layer) const;
  Eigen::Map<Eigen::VectorXd> bias(std::size_t layer);
  Eigen::Map<const Eigen::VectorXd> bias(std::size_t layer) const;

  /// x is input_dim x batch. Fills `cache` when given.
  Eigen::MatrixXd forward(const Eigen::Ref<const Eigen::MatrixXd>& x,
                          Cache* cache = nullptr) const;

  /// Backpropagates dL/dy. Adds parameter gradients into `grad` (resized and
  /// zeroed if empty) and returns dL/dx.
  Eigen::MatrixXd backward(const Cache& cache,
                           const Eigen::Ref<const Eigen::MatrixXd>& dy,
                           Eigen::VectorXd& grad) const;

 private:
  std::size_t weight_offset(std::size_t layer) const { return offsets_[layer]; }
  std::size_t bias_offset(std::size_t layer) const {
    return offsets_[layer] + sizes_[layer + 1] * sizes_[layer];
  }

  std::vector<std::size_t> sizes_;
  std::vector<std::size_t> offsets_;
  Eigen::VectorXd params_;
};

double elu(double x);

/// Diagonal Gaussian with state-independent log standard deviation.
struct GaussianStats {
  Eigen::VectorXd log_prob;  // one per column
  double entropy = 0.0;
};

/// log N(a | mean, exp(log_std)^2) per column, and the (mean-independent)
/// entropy sum(log_std + 0.5 log(2 pi e)).
GaussianStats gaussian_log_prob_entropy(
    const Eigen::Ref<const Eigen::MatrixXd>& mean,
    const Eigen::Ref<const Eigen::VectorXd>& log_std,
    const Eigen::Ref<const Eigen::MatrixXd>& actions);

double gaussian_entropy(const Eigen::Ref<const Eigen::VectorXd>& log_std);

/// Adaptive-moment optimizer with decoupled weight decay.
struct AdamW {
  double learning_rate = 5e-4;
  double weight_decay = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  long step_count = 0;
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;

  /// Returns false and leaves everything untouched if `grad` is not finite.
  bool step(Eigen::Ref<Eigen::VectorXd> params,
            const Eigen::Ref<const Eigen::VectorXd>& grad);
};

}  // namespace demos
