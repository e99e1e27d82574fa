#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace pendulum::agents {

template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using MatrixXf = Mat<float>;
using VectorXf = Vec<float>;

class TrainingDivergence : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

enum class Activation { Relu, Linear, Tanh };

template <typename Scalar>
struct Layer {
  Mat<Scalar> W;  // out x in
  Vec<Scalar> b;
};

/// Parameters (or gradients) of a feed-forward stack.
template <typename Scalar>
using Params = std::vector<Layer<Scalar>>;

/// Activations kept by a forward pass for the backward pass. Samples are
/// columns.
template <typename Scalar>
struct MlpCache {
  std::vector<Mat<Scalar>> inputs;  // input of each layer
  std::vector<Mat<Scalar>> outputs; // post-activation output of each layer
};

template <typename Scalar>
Mat<Scalar> activate(const Mat<Scalar>& z, Activation a) {
  switch (a) {
    case Activation::Relu: return z.cwiseMax(Scalar(0));
    case Activation::Tanh: return z.array().tanh().matrix();
    case Activation::Linear: break;
  }
  return z;
}

/// d(act)/dz expressed through the activation output y.
template <typename Scalar>
Mat<Scalar> activation_grad(const Mat<Scalar>& y, const Mat<Scalar>& dy, Activation a) {
  switch (a) {
    case Activation::Relu: return (y.array() > Scalar(0)).select(dy, Scalar(0));
    case Activation::Tanh: return (dy.array() * (Scalar(1) - y.array().square())).matrix();
    case Activation::Linear: break;
  }
  return dy;
}

/// Rectifier hidden layers with a configurable output activation.
template <typename Scalar>
class Mlp {
public:
  Mlp() = default;

  /// sizes = {in, hidden..., out}. Uniform init in +-1/sqrt(fan_in).
  Mlp(const std::vector<int>& sizes, Activation output, std::mt19937_64& rng)
      : output_(output) {
    if (sizes.size() < 2) throw std::invalid_argument("mlp: need at least input and output size");
    for (int s : sizes) {
      if (s < 1) throw std::invalid_argument("mlp: layer sizes must be positive");
    }
    for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
      const Scalar bound = Scalar(1) / std::sqrt(static_cast<Scalar>(sizes[i]));
      std::uniform_real_distribution<double> u(-bound, bound);
      Layer<Scalar> l;
      l.W = Mat<Scalar>::NullaryExpr(sizes[i + 1], sizes[i], [&] { return Scalar(u(rng)); });
      l.b = Vec<Scalar>::NullaryExpr(sizes[i + 1], [&] { return Scalar(u(rng)); });
      params_.push_back(std::move(l));
    }
  }

  int input_dim() const { return static_cast<int>(params_.front().W.cols()); }
  int output_dim() const { return static_cast<int>(params_.back().W.rows()); }
  Activation output_activation() const { return output_; }
  Activation activation_of(std::size_t layer) const {
    return layer + 1 == params_.size() ? output_ : Activation::Relu;
  }

  Params<Scalar>& params() { return params_; }
  const Params<Scalar>& params() const { return params_; }

  Mat<Scalar> forward(const Mat<Scalar>& x) const {
    check_input(x);
    Mat<Scalar> h = x;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      Mat<Scalar> z = params_[i].W * h;
      z.colwise() += params_[i].b;
      h = activate(z, activation_of(i));
    }
    return h;
  }

  Mat<Scalar> forward(const Mat<Scalar>& x, MlpCache<Scalar>& cache) const {
    check_input(x);
    cache.inputs.resize(params_.size());
    cache.outputs.resize(params_.size());
    const Mat<Scalar>* h = &x;
    for (std::size_t i = 0; i < params_.size(); ++i) {
      cache.inputs[i] = *h;
      Mat<Scalar> z = params_[i].W * *h;
      z.colwise() += params_[i].b;
      cache.outputs[i] = activate(z, activation_of(i));
      h = &cache.outputs[i];
    }
    return cache.outputs.back();
  }

  /// Reverse pass for upstream gradient `dy` (out x batch). Accumulates
  /// parameter gradients into `grads` (same shapes as params; zero-filled if
  /// empty) and returns the gradient with respect to the input.
  Mat<Scalar> backward(const MlpCache<Scalar>& cache, const Mat<Scalar>& dy,
                       Params<Scalar>& grads) const {
    if (grads.empty()) grads = zeros_like(params_);
    Mat<Scalar> g = dy;
    for (std::size_t k = params_.size(); k-- > 0;) {
      const Mat<Scalar> dz = activation_grad(cache.outputs[k], g, activation_of(k));
      grads[k].W.noalias() += dz * cache.inputs[k].transpose();
      grads[k].b += dz.rowwise().sum();
      g.noalias() = params_[k].W.transpose() * dz;
    }
    return g;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : params_) n += l.W.size() + l.b.size();
    return n;
  }

  bool finite() const {
    for (const auto& l : params_) {
      if (!l.W.allFinite() || !l.b.allFinite()) return false;
    }
    return true;
  }

  template <typename Other>
  Mlp<Other> cast() const {
    Mlp<Other> out;
    out.set_output_activation(output_);
    for (const auto& l : params_) {
      out.params().push_back({l.W.template cast<Other>(), l.b.template cast<Other>()});
    }
    return out;
  }

  void set_output_activation(Activation a) { output_ = a; }

  static Params<Scalar> zeros_like(const Params<Scalar>& p) {
    Params<Scalar> z;
    z.reserve(p.size());
    for (const auto& l : p) {
      z.push_back({Mat<Scalar>::Zero(l.W.rows(), l.W.cols()), Vec<Scalar>::Zero(l.b.size())});
    }
    return z;
  }

private:
  void check_input(const Mat<Scalar>& x) const {
    if (params_.empty()) throw std::logic_error("mlp: not initialized");
    if (x.rows() != params_.front().W.cols()) {
      throw std::invalid_argument("mlp: input has " + std::to_string(x.rows()) +
                                  " rows, expected " + std::to_string(params_.front().W.cols()));
    }
  }

  Params<Scalar> params_;
  Activation output_ = Activation::Linear;
};

/// target <- tau * source + (1 - tau) * target
template <typename Scalar>
void soft_update(Mlp<Scalar>& target, const Mlp<Scalar>& source, Scalar tau) {
  auto& t = target.params();
  const auto& s = source.params();
  for (std::size_t i = 0; i < t.size(); ++i) {
    t[i].W = tau * s[i].W + (Scalar(1) - tau) * t[i].W;
    t[i].b = tau * s[i].b + (Scalar(1) - tau) * t[i].b;
  }
}

template <typename Scalar>
Scalar global_norm(const Params<Scalar>& g) {
  Scalar sq = 0;
  for (const auto& l : g) sq += l.W.squaredNorm() + l.b.squaredNorm();
  return std::sqrt(sq);
}

/// Rescales gradients so their global L2 norm is at most `max_norm`.
template <typename Scalar>
void clip_global_norm(Params<Scalar>& g, Scalar max_norm) {
  const Scalar n = global_norm(g);
  if (n > max_norm && n > Scalar(0)) {
    for (auto& l : g) {
      l.W *= max_norm / n;
      l.b *= max_norm / n;
    }
  }
}

template <typename Scalar>
struct AdamConfig {
  Scalar lr = Scalar(3e-4);
  Scalar beta1 = Scalar(0.9);
  Scalar beta2 = Scalar(0.999);
  Scalar eps = Scalar(1e-8);
};

template <typename Scalar>
class Adam {
public:
  Adam() = default;
  Adam(const Params<Scalar>& like, AdamConfig<Scalar> cfg)
      : cfg_(cfg), m_(Mlp<Scalar>::zeros_like(like)), v_(Mlp<Scalar>::zeros_like(like)) {}

  void step(Params<Scalar>& params, const Params<Scalar>& grads) {
    ++t_;
    const Scalar c1 = Scalar(1) - std::pow(cfg_.beta1, static_cast<Scalar>(t_));
    const Scalar c2 = Scalar(1) - std::pow(cfg_.beta2, static_cast<Scalar>(t_));
    const Scalar step = cfg_.lr * std::sqrt(c2) / c1;
    for (std::size_t i = 0; i < params.size(); ++i) {
      update(params[i].W, m_[i].W, v_[i].W, grads[i].W, step);
      update(params[i].b, m_[i].b, v_[i].b, grads[i].b, step);
    }
  }

  long steps() const { return t_; }
  const AdamConfig<Scalar>& config() const { return cfg_; }

private:
  template <typename P, typename G>
  void update(P& p, P& m, P& v, const G& g, Scalar step) {
    m = cfg_.beta1 * m + (Scalar(1) - cfg_.beta1) * g;
    v = cfg_.beta2 * v + (Scalar(1) - cfg_.beta2) * g.cwiseAbs2();
    p.array() -= step * m.array() / (v.array().sqrt() + cfg_.eps);
  }

  AdamConfig<Scalar> cfg_;
  Params<Scalar> m_;
  Params<Scalar> v_;
  long t_ = 0;
};

}  // namespace pendulum::agents
