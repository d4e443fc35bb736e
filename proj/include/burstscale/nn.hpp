#ifndef BURSTSCALE_NN_HPP_
#define BURSTSCALE_NN_HPP_

#include <Eigen/Dense>

#include <cmath>
#include <vector>

#include "burstscale/common.hpp"
#include "burstscale/random.hpp"

namespace burstscale::nn {

/// Fully connected network: tanh hidden layers, linear output. All weights
/// and biases live in one flat parameter vector so optimizers and gradient
/// checks can treat the network as a point in R^P.
template <typename Scalar>
class Mlp {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  /// Activations recorded by forward() for backward().
  struct Tape {
    std::vector<Vector> activations;  // [0] is the input, back() the output
  };

  Mlp() = default;

  /// Zero parameters; `sizes` lists the layer widths from input to output.
  explicit Mlp(std::vector<int> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw ValidationError("mlp: need an input and an output layer");
    Eigen::Index count = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
      if (sizes_[l] < 1 || sizes_[l + 1] < 1) throw ValidationError("mlp: layer widths must be positive");
      count += static_cast<Eigen::Index>(sizes_[l + 1]) * (sizes_[l] + 1);
    }
    params_ = Vector::Zero(count);
  }

  /// Uniform(+-1/sqrt(fan_in)) weights, zero biases; the output layer is scaled by `output_gain`.
  static Mlp initialized(std::vector<int> sizes, Rng& rng, Scalar output_gain = Scalar(1)) {
    Mlp net(std::move(sizes));
    for (std::size_t l = 0; l < net.layers(); ++l) {
      auto w = net.weight(l);
      const double bound = 1.0 / std::sqrt(static_cast<double>(w.cols()));
      const Scalar gain = l + 1 == net.layers() ? output_gain : Scalar(1);
      for (Eigen::Index j = 0; j < w.cols(); ++j) {
        for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = gain * static_cast<Scalar>(uniform(rng, -bound, bound));
      }
    }
    return net;
  }

  std::size_t layers() const noexcept { return sizes_.empty() ? 0 : sizes_.size() - 1; }
  const std::vector<int>& sizes() const noexcept { return sizes_; }
  int inputs() const { return sizes_.front(); }
  int outputs() const { return sizes_.back(); }
  Eigen::Index parameter_count() const noexcept { return params_.size(); }
  Vector& parameters() noexcept { return params_; }
  const Vector& parameters() const noexcept { return params_; }

  Eigen::Map<Matrix> weight(std::size_t l) { return {params_.data() + offset(l), sizes_[l + 1], sizes_[l]}; }
  Eigen::Map<const Matrix> weight(std::size_t l) const {
    return {params_.data() + offset(l), sizes_[l + 1], sizes_[l]};
  }
  Eigen::Map<Vector> bias(std::size_t l) {
    return {params_.data() + offset(l) + Eigen::Index{sizes_[l + 1]} * sizes_[l], sizes_[l + 1]};
  }
  Eigen::Map<const Vector> bias(std::size_t l) const {
    return {params_.data() + offset(l) + Eigen::Index{sizes_[l + 1]} * sizes_[l], sizes_[l + 1]};
  }

  Vector forward(const Vector& x, Tape* tape = nullptr) const {
    if (x.size() != inputs()) throw ValidationError("mlp: input has the wrong dimension");
    if (tape) {
      tape->activations.clear();
      tape->activations.push_back(x);
    }
    Vector a = x;
    for (std::size_t l = 0; l < layers(); ++l) {
      Vector z = weight(l) * a + bias(l);
      if (l + 1 < layers()) z = z.array().tanh().matrix();
      a = std::move(z);
      if (tape) tape->activations.push_back(a);
    }
    return a;
  }

  /// Adds d(loss)/d(parameters) to `grad` given d(loss)/d(output) at the taped input.
  void backward(const Tape& tape, const Vector& grad_output, Vector& grad) const {
    if (grad.size() != params_.size()) grad = Vector::Zero(params_.size());
    Vector delta = grad_output;
    for (std::size_t l = layers(); l-- > 0;) {
      const Vector& a_in = tape.activations[l];
      Eigen::Map<Matrix> gw(grad.data() + offset(l), sizes_[l + 1], sizes_[l]);
      Eigen::Map<Vector> gb(grad.data() + offset(l) + Eigen::Index{sizes_[l + 1]} * sizes_[l], sizes_[l + 1]);
      gw.noalias() += delta * a_in.transpose();
      gb += delta;
      if (l > 0) {
        delta = (weight(l).transpose() * delta).cwiseProduct(
            (Scalar(1) - a_in.array().square()).matrix());
      }
    }
  }

 private:
  Eigen::Index offset(std::size_t l) const {
    Eigen::Index off = 0;
    for (std::size_t i = 0; i < l; ++i) off += Eigen::Index{sizes_[i + 1]} * (sizes_[i] + 1);
    return off;
  }

  std::vector<int> sizes_;
  Vector params_;
};

template <typename Scalar>
class Adam {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  Adam() = default;
  Adam(Eigen::Index size, Scalar learning_rate, Scalar beta1 = Scalar(0.9), Scalar beta2 = Scalar(0.999),
       Scalar epsilon = Scalar(1e-8))
      : lr_(learning_rate),
        beta1_(beta1),
        beta2_(beta2),
        eps_(epsilon),
        m_(Vector::Zero(size)),
        v_(Vector::Zero(size)) {}

  void step(Vector& params, const Vector& grad) {
    ++t_;
    m_ = beta1_ * m_ + (Scalar(1) - beta1_) * grad;
    v_ = beta2_ * v_ + (Scalar(1) - beta2_) * grad.cwiseAbs2();
    const Scalar c1 = Scalar(1) - std::pow(beta1_, static_cast<Scalar>(t_));
    const Scalar c2 = Scalar(1) - std::pow(beta2_, static_cast<Scalar>(t_));
    params_update_ = (lr_ / c1) * m_.array() / ((v_.array() / c2).sqrt() + eps_);
    params -= params_update_;
  }

  long steps() const noexcept { return t_; }

 private:
  Scalar lr_ = Scalar(1e-3), beta1_ = Scalar(0.9), beta2_ = Scalar(0.999), eps_ = Scalar(1e-8);
  Vector m_, v_, params_update_;
  long t_ = 0;
};

}  // namespace burstscale::nn

#endif  // BURSTSCALE_NN_HPP_
