#pragma once

#include <Eigen/QR>

#include "pendulum/agents/nn.hpp"

namespace pendulum::agents {

/// GRU parameters as three gate layers (z, r, candidate). Each gate's W is
/// [W_g | U_g], acting on [x; h] (z, r) or [x; r*h] (candidate).
template <typename Scalar>
using GruParams = Params<Scalar>;

enum GruGate : std::size_t { kGateZ = 0, kGateR = 1, kGateH = 2 };

template <typename Scalar>
struct GruStepCache {
  Vec<Scalar> x, h, z, r, cand;
};

template <typename Scalar>
Vec<Scalar> sigmoid(const Vec<Scalar>& a) {
  return (Scalar(1) / (Scalar(1) + (-a.array()).exp())).matrix();
}

/// z = s(W_z x + U_z h + b_z), r = s(W_r x + U_r h + b_r),
/// c = tanh(W_h x + U_h (r*h) + b_h), h' = (1 - z)*h + z*c.
template <typename Scalar>
Vec<Scalar> gru_cell(const GruParams<Scalar>& p, const Vec<Scalar>& x, const Vec<Scalar>& h,
                     GruStepCache<Scalar>* cache = nullptr) {
  const auto in = x.size();
  const auto H = h.size();
  const auto& Lz = p[kGateZ];
  const auto& Lr = p[kGateR];
  const auto& Lh = p[kGateH];
  const Vec<Scalar> z = sigmoid<Scalar>(Lz.W.leftCols(in) * x + Lz.W.rightCols(H) * h + Lz.b);
  const Vec<Scalar> r = sigmoid<Scalar>(Lr.W.leftCols(in) * x + Lr.W.rightCols(H) * h + Lr.b);
  const Vec<Scalar> rh = r.cwiseProduct(h);
  const Vec<Scalar> cand =
      (Lh.W.leftCols(in) * x + Lh.W.rightCols(H) * rh + Lh.b).array().tanh().matrix();
  Vec<Scalar> out = (Vec<Scalar>::Ones(H) - z).cwiseProduct(h) + z.cwiseProduct(cand);
  if (cache) *cache = {x, h, z, r, cand};
  return out;
}

/// Backward through one cell. Accumulates into `grads` and returns dL/dh;
/// dL/dx is written to `dx` when given.
template <typename Scalar>
Vec<Scalar> gru_cell_backward(const GruParams<Scalar>& p, const GruStepCache<Scalar>& c,
                              const Vec<Scalar>& dout, GruParams<Scalar>& grads,
                              Vec<Scalar>* dx = nullptr) {
  const auto in = c.x.size();
  const auto H = c.h.size();
  const auto& Lz = p[kGateZ];
  const auto& Lr = p[kGateR];
  const auto& Lh = p[kGateH];

  Vec<Scalar> dh = dout.cwiseProduct(Vec<Scalar>::Ones(H) - c.z);
  const Vec<Scalar> dcand = dout.cwiseProduct(c.z);
  const Vec<Scalar> dz = dout.cwiseProduct(c.cand - c.h);

  const Vec<Scalar> dah = dcand.array() * (Scalar(1) - c.cand.array().square());
  const Vec<Scalar> rh = c.r.cwiseProduct(c.h);
  grads[kGateH].W.leftCols(in).noalias() += dah * c.x.transpose();
  grads[kGateH].W.rightCols(H).noalias() += dah * rh.transpose();
  grads[kGateH].b += dah;
  const Vec<Scalar> drh = Lh.W.rightCols(H).transpose() * dah;
  const Vec<Scalar> dr = drh.cwiseProduct(c.h);
  dh += drh.cwiseProduct(c.r);

  const Vec<Scalar> daz = dz.array() * c.z.array() * (Scalar(1) - c.z.array());
  const Vec<Scalar> dar = dr.array() * c.r.array() * (Scalar(1) - c.r.array());
  grads[kGateZ].W.leftCols(in).noalias() += daz * c.x.transpose();
  grads[kGateZ].W.rightCols(H).noalias() += daz * c.h.transpose();
  grads[kGateZ].b += daz;
  grads[kGateR].W.leftCols(in).noalias() += dar * c.x.transpose();
  grads[kGateR].W.rightCols(H).noalias() += dar * c.h.transpose();
  grads[kGateR].b += dar;
  dh += Lz.W.rightCols(H).transpose() * daz + Lr.W.rightCols(H).transpose() * dar;

  if (dx) {
    *dx = Lz.W.leftCols(in).transpose() * daz + Lr.W.leftCols(in).transpose() * dar +
          Lh.W.leftCols(in).transpose() * dah;
  }
  return dh;
}

/// Random orthogonal n x n matrix (QR of a Gaussian matrix, sign-fixed).
template <typename Scalar>
Mat<Scalar> random_orthogonal(int n, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, 1.0);
  const Mat<double> a = Mat<double>::NullaryExpr(n, n, [&] { return g(rng); });
  Eigen::HouseholderQR<Mat<double>> qr(a);
  Mat<double> q = qr.householderQ();
  const Mat<double> r = qr.matrixQR().template triangularView<Eigen::Upper>();
  for (int i = 0; i < n; ++i) {
    if (r(i, i) < 0) q.col(i) *= -1.0;
  }
  return q.cast<Scalar>();
}

/// Sequence encoder over one episode: h_0 = 0, one step per observation.
/// Weights are fixed at construction unless trained externally.
template <typename Scalar>
class GruEncoder {
public:
  GruEncoder() = default;

  /// Input weights uniform in +-1/sqrt(input_dim); recurrent matrices random
  /// orthogonal scaled to spectral radius `radius`; zero biases.
  GruEncoder(int input_dim, int hidden_dim, std::mt19937_64& rng, Scalar radius = Scalar(0.9))
      : input_dim_(input_dim), hidden_dim_(hidden_dim) {
    if (input_dim < 1 || hidden_dim < 1) throw std::invalid_argument("gru: dimensions must be positive");
    const double bound = 1.0 / std::sqrt(static_cast<double>(input_dim));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (int g = 0; g < 3; ++g) {
      Layer<Scalar> l;
      l.W.resize(hidden_dim, input_dim + hidden_dim);
      l.W.leftCols(input_dim) =
          Mat<Scalar>::NullaryExpr(hidden_dim, input_dim, [&] { return Scalar(u(rng)); });
      l.W.rightCols(hidden_dim) = radius * random_orthogonal<Scalar>(hidden_dim, rng);
      l.b = Vec<Scalar>::Zero(hidden_dim);
      params_.push_back(std::move(l));
    }
    reset();
  }

  /// Zero-weight encoder, for closed-form checks.
  static GruEncoder zeros(int input_dim, int hidden_dim) {
    GruEncoder e;
    e.input_dim_ = input_dim;
    e.hidden_dim_ = hidden_dim;
    for (int g = 0; g < 3; ++g) {
      e.params_.push_back({Mat<Scalar>::Zero(hidden_dim, input_dim + hidden_dim),
                           Vec<Scalar>::Zero(hidden_dim)});
    }
    e.reset();
    return e;
  }

  const Vec<Scalar>& step(const Vec<Scalar>& x) {
    if (x.size() != input_dim_) {
      throw std::invalid_argument("gru: input has " + std::to_string(x.size()) +
                                  " entries, expected " + std::to_string(input_dim_));
    }
    h_ = gru_cell(params_, x, h_);
    return h_;
  }

  void reset() { h_ = Vec<Scalar>::Zero(hidden_dim_); }
  void set_hidden(const Vec<Scalar>& h) { h_ = h; }

  /// [h || obs]
  Vec<Scalar> encode(const Vec<Scalar>& obs) const {
    Vec<Scalar> out(hidden_dim_ + obs.size());
    out << h_, obs;
    return out;
  }

  int input_dim() const { return input_dim_; }
  int hidden_dim() const { return hidden_dim_; }
  const Vec<Scalar>& hidden() const { return h_; }
  GruParams<Scalar>& params() { return params_; }
  const GruParams<Scalar>& params() const { return params_; }

private:
  int input_dim_ = 0;
  int hidden_dim_ = 0;
  GruParams<Scalar> params_;
  Vec<Scalar> h_;
};

}  // namespace pendulum::agents
