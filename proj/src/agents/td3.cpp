#include "pendulum/agents/td3.hpp"

#include <sstream>

namespace pendulum::agents {

void Td3Config::validate() const {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw std::invalid_argument("td3: gamma must be in [0, 1)");
  if (!(actor_lr > 0.0 && critic_lr > 0.0)) throw std::invalid_argument("td3: learning rates must be positive");
  if (!(tau > 0.0 && tau <= 1.0)) throw std::invalid_argument("td3: tau must be in (0, 1]");
  if (policy_delay < 1) throw std::invalid_argument("td3: policy_delay must be >= 1");
  if (target_noise < 0.0 || noise_clip < 0.0 || explore_noise < 0.0) {
    throw std::invalid_argument("td3: noise scales must be >= 0");
  }
  for (int h : hidden) {
    if (h < 1) throw std::invalid_argument("td3: hidden sizes must be positive");
  }
}

Td3::Td3(int state_dim, int action_dim, const Td3Config& cfg, std::uint64_t seed)
    : cfg_(cfg), state_dim_(state_dim), action_dim_(action_dim), rng_(seed ^ 0x9e3779b97f4a7c15ull) {
  cfg_.validate();
  if (state_dim < 1 || action_dim < 1) throw std::invalid_argument("td3: dimensions must be positive");
  std::mt19937_64 rng(seed);
  std::vector<int> a_sizes{state_dim};
  a_sizes.insert(a_sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  a_sizes.push_back(action_dim);
  std::vector<int> q_sizes{state_dim + action_dim};
  q_sizes.insert(q_sizes.end(), cfg_.hidden.begin(), cfg_.hidden.end());
  q_sizes.push_back(1);
  actor_ = Mlp<float>(a_sizes, Activation::Tanh, rng);
  q1_ = Mlp<float>(q_sizes, Activation::Linear, rng);
  q2_ = Mlp<float>(q_sizes, Activation::Linear, rng);
  actor_t_ = actor_;
  q1_t_ = q1_;
  q2_t_ = q2_;
  actor_opt_ = Adam<float>(actor_.params(), {static_cast<float>(cfg_.actor_lr)});
  q1_opt_ = Adam<float>(q1_.params(), {static_cast<float>(cfg_.critic_lr)});
  q2_opt_ = Adam<float>(q2_.params(), {static_cast<float>(cfg_.critic_lr)});
}

MatrixXf Td3::join(const MatrixXf& s, const MatrixXf& a) {
  MatrixXf x(s.rows() + a.rows(), s.cols());
  x << s, a;
  return x;
}

VectorXf Td3::act(const VectorXf& s) const { return actor_.forward(s); }

VectorXf Td3::explore(const VectorXf& s, std::mt19937_64& rng) const {
  std::normal_distribution<float> n(0.0f, static_cast<float>(cfg_.explore_noise));
  VectorXf a = act(s);
  for (Eigen::Index i = 0; i < a.size(); ++i) a[i] = std::clamp(a[i] + n(rng), -1.0f, 1.0f);
  return a;
}

Td3Losses Td3::update(const ContinuousBatch& b, MatrixXf* dstate) {
  const auto n = b.s.cols();
  if (n == 0 || b.a.cols() != n || b.a.rows() != action_dim_ || b.r.size() != n ||
      b.s2.cols() != n || b.done.size() != n) {
    throw std::invalid_argument("td3: inconsistent batch");
  }
  const float g = static_cast<float>(cfg_.gamma);
  const float clip = static_cast<float>(cfg_.noise_clip);

  // Target policy smoothing.
  std::normal_distribution<float> noise(0.0f, static_cast<float>(cfg_.target_noise));
  last_noise_ = MatrixXf::NullaryExpr(action_dim_, n, [&] { return std::clamp(noise(rng_), -clip, clip); });
  const MatrixXf a2 = (actor_t_.forward(b.s2) + last_noise_).cwiseMax(-1.0f).cwiseMin(1.0f);
  const MatrixXf x2 = join(b.s2, a2);
  const VectorXf qmin = q1_t_.forward(x2).cwiseMin(q2_t_.forward(x2)).transpose();
  const VectorXf y = (b.r.array() + g * (1.0f - b.done.array()) * qmin.array()).matrix();

  const MatrixXf x = join(b.s, b.a);
  MlpCache<float> c1, c2;
  const MatrixXf d1 = q1_.forward(x, c1) - y.transpose();
  const MatrixXf d2 = q2_.forward(x, c2) - y.transpose();
  const float inv = 1.0f / static_cast<float>(n);
  Td3Losses out;
  out.critic = (d1.squaredNorm() + d2.squaredNorm()) * inv;
  if (!std::isfinite(out.critic)) {
    std::ostringstream msg;
    msg << "td3: non-finite critic loss at update " << updates_;
    throw TrainingDivergence(msg.str());
  }
  Params<float> g1, g2;
  MatrixXf dx1 = q1_.backward(c1, 2.0f * inv * d1, g1);
  MatrixXf dx2 = q2_.backward(c2, 2.0f * inv * d2, g2);
  if (dstate) *dstate = dx1.topRows(state_dim_) + dx2.topRows(state_dim_);
  q1_opt_.step(q1_.params(), g1);
  q2_opt_.step(q2_.params(), g2);
  ++updates_;

  if (updates_ % cfg_.policy_delay == 0) {
    MlpCache<float> ca, cq;
    const MatrixXf pa = actor_.forward(b.s, ca);
    const MatrixXf q = q1_.forward(join(b.s, pa), cq);
    out.actor = -q.mean();
    Params<float> unused;
    const MatrixXf dxq = q1_.backward(cq, MatrixXf::Constant(1, n, -inv), unused);
    Params<float> ga;
    actor_.backward(ca, dxq.bottomRows(action_dim_), ga);
    actor_opt_.step(actor_.params(), ga);
    const float tau = static_cast<float>(cfg_.tau);
    soft_update(actor_t_, actor_, tau);
    soft_update(q1_t_, q1_, tau);
    soft_update(q2_t_, q2_, tau);
  }
  return out;
}

}  // namespace pendulum::agents
