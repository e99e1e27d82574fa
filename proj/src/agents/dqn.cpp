#include "pendulum/agents/dqn.hpp"

#include <algorithm>
#include <sstream>

namespace pendulum::agents {

void DqnConfig::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("dqn: gamma must be in [0, 1)");
  if (!(lr > 0.0)) throw std::invalid_argument("dqn: lr must be positive");
  if (!(huber_delta > 0.0)) throw std::invalid_argument("dqn: huber_delta must be positive");
  if (target_sync_period < 0) throw std::invalid_argument("dqn: target_sync_period must be >= 0");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("dqn: tau must be in (0, 1]");
  if (!(eps_start >= eps_end && eps_end >= 0.0 && eps_start <= 1.0)) {
    throw std::invalid_argument("dqn: need 1 >= eps_start >= eps_end >= 0");
  }
  if (eps_decay_steps < 1) throw std::invalid_argument("dqn: eps_decay_steps must be positive");
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("dqn: hidden sizes must be positive");
  }
}

double epsilon_at(long step, const DqnConfig& cfg) {
  if (step <= 0) return cfg.eps_start;
  if (step >= cfg.eps_decay_steps) return cfg.eps_end;
  const double frac = static_cast<double>(step) / static_cast<double>(cfg.eps_decay_steps);
  return cfg.eps_start + frac * (cfg.eps_end - cfg.eps_start);
}

Dqn::Dqn(int state_dim, int n_actions, const DqnConfig& cfg, std::uint64_t seed)
    : cfg_(cfg), n_actions_(n_actions) {
  cfg_.validate();
  if (n_actions < 1) throw std::invalid_argument("dqn: need at least one action");
  std::mt19937_64 rng(seed);
  std::vector<int> sizes{state_dim};
  sizes.insert(sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  sizes.push_back(n_actions);
  online_ = Mlp<float>(sizes, Activation::Linear, rng);
  target_ = online_;
  adam_ = Adam<float>(online_.params(), {static_cast<float>(cfg_.lr)});
}

VectorXf Dqn::q_values(const VectorXf& s) const { return online_.forward(s); }

int Dqn::greedy(const VectorXf& s) const {
  Eigen::Index best = 0;
  q_values(s).maxCoeff(&best);
  return static_cast<int>(best);
}

int Dqn::act(const VectorXf& s, double epsilon, std::mt19937_64& rng) const {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  if (u(rng) < epsilon) {
    std::uniform_int_distribution<int> pick(0, n_actions_ - 1);
    return pick(rng);
  }
  return greedy(s);
}

VectorXf Dqn::targets(const DiscreteBatch& b) const {
  const MatrixXf q2 = target_.forward(b.s2);
  const VectorXf best = q2.colwise().maxCoeff().transpose();
  const float g = static_cast<float>(cfg_.gamma);
  return (b.r.array() + g * (1.0f - b.done.array()) * best.array()).matrix();
}

float Dqn::update(const DiscreteBatch& b, MatrixXf* dstate) {
  const auto n = b.s.cols();
  if (n == 0 || static_cast<std::size_t>(n) != b.a.size() || b.r.size() != n ||
      b.s2.cols() != n || b.done.size() != n) {
    throw std::invalid_argument("dqn: inconsistent batch");
  }
  const VectorXf y = targets(b);
  MlpCache<float> cache;
  const MatrixXf q = online_.forward(b.s, cache);
  MatrixXf dq = MatrixXf::Zero(q.rows(), n);
  const float delta = static_cast<float>(cfg_.huber_delta);
  double loss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int a = b.a[static_cast<std::size_t>(i)];
    if (a < 0 || a >= n_actions_) throw std::invalid_argument("dqn: action out of range");
    const float d = q(a, i) - y[i];
    const float ad = std::abs(d);
    loss += ad <= delta ? 0.5 * d * d : delta * (ad - 0.5 * delta);
    dq(a, i) = std::clamp(d, -delta, delta) / static_cast<float>(n);
  }
  loss /= static_cast<double>(n);
  if (!std::isfinite(loss)) {
    std::ostringstream msg;
    msg << "dqn: non-finite loss at update " << updates_ << " (max |q| " << q.cwiseAbs().maxCoeff()
        << ", max |y| " << y.cwiseAbs().maxCoeff() << ")";
    throw TrainingDivergence(msg.str());
  }
  Params<float> grads;
  MatrixXf dx = online_.backward(cache, dq, grads);
  if (dstate) *dstate = std::move(dx);
  if (cfg_.grad_clip > 0) clip_global_norm(grads, static_cast<float>(cfg_.grad_clip));
  adam_.step(online_.params(), grads);
  ++updates_;
  if (cfg_.target_sync_period > 0) {
    if (updates_ % cfg_.target_sync_period == 0) sync_target();
  } else {
    soft_update(target_, online_, static_cast<float>(cfg_.tau));
  }
  return static_cast<float>(loss);
}

}  // namespace pendulum::agents
