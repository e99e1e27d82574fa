#include "pendulum/agents/training.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <exception>
#include <mutex>
#include <optional>
#include <thread>

namespace pendulum::agents {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
  return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

constexpr double kUprightRad = 0.2;

}  // namespace

void TrainConfig::validate() const {
  dqn.validate();
  td3.validate();
  if (batch < 1) throw std::invalid_argument("train: batch must be positive");
  if (buffer_capacity < static_cast<std::size_t>(batch)) {
    throw std::invalid_argument("train: buffer capacity must hold at least one batch");
  }
  if (warmup < 0) throw std::invalid_argument("train: warmup must be >= 0");
  if (episodes < 1) throw std::invalid_argument("train: episodes must be positive");
  if (gru_hidden < 1) throw std::invalid_argument("train: gru_hidden must be positive");
  if (gru_window < 1) throw std::invalid_argument("train: gru_window must be positive");
  if (!(gru_lr > 0.0)) throw std::invalid_argument("train: gru_lr must be positive");
  if (updates_per_step < 1) throw std::invalid_argument("train: updates_per_step must be positive");
  if (snapshot_period < 1) throw std::invalid_argument("train: snapshot_period must be positive");
  if (plateau_window < 1 || plateau_patience < 0) throw std::invalid_argument("train: invalid plateau settings");
}

double LearningCurve::trailing_mean_reward(std::size_t n) const {
  if (episodes.empty()) return 0.0;
  const std::size_t k = std::min(n, episodes.size());
  double sum = 0.0;
  for (std::size_t i = episodes.size() - k; i < episodes.size(); ++i) sum += episodes[i].mean_reward;
  return sum / static_cast<double>(k);
}

// ---------------------------------------------------------------------------

struct Trainer::Learner {
  Learner(const TrainConfig& c, const FeatureSpec& f)
      : cfg(c), features(f), rng(c.seed * 0x9e3779b97f4a7c15ull + 2), buffer(c.buffer_capacity) {
    std::mt19937_64 init(c.seed);
    if (is_recurrent(cfg.algo)) {
      gru.emplace(features.dim(), cfg.gru_hidden, init);
      gru_opt = Adam<float>(gru->params(), {static_cast<float>(cfg.gru_lr)});
    }
    const int state_dim = features.dim() + (gru ? gru->hidden_dim() : 0);
    const std::uint64_t net_seed = init();
    if (action_mode(cfg.algo) == env::ActionMode::Discrete) {
      dqn.emplace(state_dim, kDiscreteActions, cfg.dqn, net_seed);
    } else {
      td3.emplace(state_dim, 1, cfg.td3, net_seed);
    }
  }

  bool ready() const {
    return buffer.size() >= static_cast<std::size_t>(std::max(cfg.warmup, cfg.batch));
  }

  long updates() const { return dqn ? dqn->updates() : td3->updates(); }

  Policy snapshot() const {
    return Policy(cfg.algo, features, gru, dqn ? dqn->online() : td3->actor());
  }

  // Re-encodes windows with the current GRU. Caches per-sample steps for BPTT.
  void encode_windows(const std::vector<ReplayBuffer<Transition>::Entry>& batch, MatrixXf& s,
                      MatrixXf& s2, std::vector<std::vector<GruStepCache<float>>>& caches) const {
    const int H = gru->hidden_dim();
    const int F = features.dim();
    const auto n = static_cast<Eigen::Index>(batch.size());
    s.resize(H + F, n);
    s2.resize(H + F, n);
    caches.assign(batch.size(), {});
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& w = *batch[static_cast<std::size_t>(i)].item.window;
      const auto k = w.xs.cols() - 1;
      VectorXf h = w.h0;
      auto& cache = caches[static_cast<std::size_t>(i)];
      cache.resize(static_cast<std::size_t>(k));
      for (Eigen::Index c = 0; c < k; ++c) {
        h = gru_cell<float>(gru->params(), w.xs.col(c), h, &cache[static_cast<std::size_t>(c)]);
      }
      s.col(i) << h, w.xs.col(k - 1);
      const VectorXf h2 = gru_cell<float>(gru->params(), w.xs.col(k), h);
      s2.col(i) << h2, w.xs.col(k);
    }
  }

  void update() {
    const auto batch = buffer.sample(static_cast<std::size_t>(cfg.batch), rng);
    const auto n = static_cast<Eigen::Index>(batch.size());
    const bool bptt = cfg.train_gru && gru.has_value();
    MatrixXf s, s2;
    std::vector<std::vector<GruStepCache<float>>> caches;
    if (bptt) {
      encode_windows(batch, s, s2, caches);
    } else {
      const auto dim = batch.front().item.s.size();
      s.resize(dim, n);
      s2.resize(dim, n);
      for (Eigen::Index i = 0; i < n; ++i) {
        s.col(i) = batch[static_cast<std::size_t>(i)].item.s;
        s2.col(i) = batch[static_cast<std::size_t>(i)].item.s2;
      }
    }
    VectorXf r(n), done(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const auto& t = batch[static_cast<std::size_t>(i)].item;
      r[i] = t.reward;
      done[i] = t.terminal ? 1.0f : 0.0f;
    }

    MatrixXf dstate;
    if (dqn) {
      DiscreteBatch b{std::move(s), {}, std::move(r), std::move(s2), std::move(done)};
      b.a.reserve(batch.size());
      for (const auto& e : batch) b.a.push_back(e.item.action);
      dqn->update(b, bptt ? &dstate : nullptr);
    } else {
      ContinuousBatch b{std::move(s), MatrixXf(1, n), std::move(r), std::move(s2), std::move(done)};
      for (Eigen::Index i = 0; i < n; ++i) b.a.col(i) = batch[static_cast<std::size_t>(i)].item.action_vec;
      td3->update(b, bptt ? &dstate : nullptr);
    }

    if (bptt) {
      const int H = gru->hidden_dim();
      GruParams<float> grads = Mlp<float>::zeros_like(gru->params());
      for (Eigen::Index i = 0; i < n; ++i) {
        VectorXf dh = dstate.col(i).head(H);
        const auto& cache = caches[static_cast<std::size_t>(i)];
        for (std::size_t c = cache.size(); c-- > 0;) {
          dh = gru_cell_backward<float>(gru->params(), cache[c], dh, grads);
        }
      }
      clip_global_norm(grads, 1.0f);
      gru_opt.step(gru->params(), grads);
    }
  }

  TrainConfig cfg;
  FeatureSpec features;
  std::mt19937_64 rng;
  ReplayBuffer<Transition> buffer;
  std::optional<Dqn> dqn;
  std::optional<Td3> td3;
  std::optional<GruEncoder<float>> gru;
  Adam<float> gru_opt;
};

Trainer::Trainer(const TrainConfig& cfg, const env::FeatureFlags& flags) : cfg_(cfg) {
  cfg_.validate();
  features_.flags = flags;
  features_.scaling = cfg_.scaling;
  learner_ = std::make_unique<Learner>(cfg_, features_);
}

Trainer::~Trainer() = default;

Policy Trainer::policy() const { return learner_->snapshot(); }
const ReplayBuffer<Transition>& Trainer::buffer() const { return learner_->buffer; }
long Trainer::updates() const { return learner_->updates(); }

namespace {

/// Parameter handoff from the learner to the actor.
class SnapshotCell {
public:
  void publish(Policy p) {
    std::lock_guard lock(mutex_);
    latest_ = std::move(p);
    ++version_;
  }
  /// New snapshot if one was published after `seen`.
  std::optional<Policy> take_newer(std::uint64_t& seen) {
    std::lock_guard lock(mutex_);
    if (version_ == seen || !latest_) return std::nullopt;
    seen = version_;
    return latest_;
  }

private:
  std::mutex mutex_;
  std::optional<Policy> latest_;
  std::uint64_t version_ = 0;
};

/// Swaps parameters while keeping the episode's hidden state.
void adopt(Policy& actor, Policy next) {
  std::optional<VectorXf> h;
  if (actor.encoder()) h = actor.encoder()->hidden();
  actor = std::move(next);
  if (h) actor.encoder()->set_hidden(*h);
}

}  // namespace

LearningCurve Trainer::run(env::Environment& env, const EpisodeCallback& on_episode,
                           const std::atomic<bool>* stop) {
  if (env.mode() != action_mode(cfg_.algo)) {
    throw std::invalid_argument("train: environment action mode does not match " + algo_name(cfg_.algo));
  }
  LearningCurve curve;
  const auto t_start = Clock::now();
  Learner& L = *learner_;
  std::mt19937_64 actor_rng(cfg_.seed * 0x9e3779b97f4a7c15ull + 1);
  Policy actor = L.snapshot();
  const bool windows = cfg_.train_gru && L.gru.has_value();
  const bool discrete = L.dqn.has_value();

  std::atomic<long> env_steps{0};
  std::atomic<bool> finished{false};
  std::atomic<bool> snapshot_request{false};
  std::exception_ptr learner_error;
  SnapshotCell cell;
  std::uint64_t seen_version = 0;
  std::thread learner_thread;

  if (cfg_.async) {
    learner_thread = std::thread([&] {
      try {
        while (!finished.load()) {
          if (snapshot_request.exchange(false)) cell.publish(L.snapshot());
          const long cap = env_steps.load() * cfg_.updates_per_step;
          if (!L.ready() || L.updates() >= cap) {
            std::this_thread::sleep_for(std::chrono::microseconds(200));
            continue;
          }
          L.update();
        }
      } catch (...) {
        learner_error = std::current_exception();
        finished = true;
      }
    });
  }

  auto stop_requested = [&] { return (stop && stop->load()) || (cfg_.async && finished.load()); };

  double best_trailing = -1e300;
  int best_episode = 0;
  try {
    for (int ep = 0; ep < cfg_.episodes && !stop_requested(); ++ep) {
      const auto t_ep = Clock::now();
      actor.reset();
      auto obs = env.reset();
      VectorXf x = L.features(obs);
      VectorXf s = actor.observe(obs);
      // Per-episode history for GRU windows: hs[j] is the hidden state after
      // j observations, xs_hist[j] the features of observation j + 1.
      std::vector<VectorXf> hs, xs_hist;
      if (windows) {
        hs.push_back(VectorXf::Zero(L.gru->hidden_dim()));
        hs.push_back(actor.encoder()->hidden());
        xs_hist.push_back(x);
      }
      EpisodeRecord rec;
      rec.episode = ep;
      int upright = 0;
      bool done = false;
      while (!done && !stop_requested()) {
        const long step_no = env_steps.load();
        env::Action a;
        if (discrete) {
          a = actor.choose(s, epsilon_at(step_no, cfg_.dqn), actor_rng);
        } else if (step_no < cfg_.warmup) {
          std::uniform_real_distribution<double> u(-1.0, 1.0);
          a = env::ContinuousAction{u(actor_rng)};
        } else {
          a = actor.choose(s, cfg_.td3.explore_noise, actor_rng);
        }
        const auto res = env.step(a);
        const VectorXf x2 = L.features(res.observation);
        const VectorXf s2 = actor.observe(res.observation);

        Transition t;
        t.s = s;
        t.s2 = s2;
        t.reward = static_cast<float>(res.reward);
        t.terminal = false;  // episodes end on a time limit only
        if (const auto* d = std::get_if<env::DiscreteAction>(&a)) {
          t.action = d->index;
        } else {
          t.action_vec = VectorXf::Constant(1, static_cast<float>(std::get<env::ContinuousAction>(a).position));
        }
        if (windows) {
          xs_hist.push_back(x2);
          hs.push_back(actor.encoder()->hidden());
          const int t_idx = static_cast<int>(xs_hist.size()) - 2;  // index of s's observation
          const int j = std::max(0, t_idx - cfg_.gru_window + 1);
          auto w = std::make_shared<SequenceWindow>();
          w->h0 = hs[static_cast<std::size_t>(j)];
          w->xs.resize(x2.size(), t_idx - j + 2);
          for (int c = j; c <= t_idx + 1; ++c) w->xs.col(c - j) = xs_hist[static_cast<std::size_t>(c)];
          t.window = std::move(w);
        }
        L.buffer.push(std::move(t));
        const long now_steps = env_steps.fetch_add(1) + 1;

        if (!cfg_.async) {
          for (int u = 0; u < cfg_.updates_per_step && L.ready(); ++u) L.update();
          if (now_steps % cfg_.snapshot_period == 0) adopt(actor, L.snapshot());
        } else {
          if (now_steps % cfg_.snapshot_period == 0) snapshot_request = true;
          if (auto next = cell.take_newer(seen_version)) adopt(actor, std::move(*next));
        }

        rec.ret += res.reward;
        ++rec.steps;
        if (std::abs(env::theta_up_from_bottom(res.observation.theta())) < kUprightRad) ++upright;
        done = res.done;
        s = s2;
      }
      if (rec.steps == 0) break;
      rec.wall_ms = ms_since(t_ep);
      rec.mean_reward = rec.ret / rec.steps;
      rec.upright_fraction = static_cast<double>(upright) / rec.steps;
      curve.episodes.push_back(rec);
      if (on_episode) on_episode(rec);

      if (cfg_.plateau_patience > 0 &&
          static_cast<int>(curve.episodes.size()) >= cfg_.plateau_window) {
        const double trailing = curve.trailing_mean_reward(static_cast<std::size_t>(cfg_.plateau_window));
        if (trailing > best_trailing + 1e-3) {
          best_trailing = trailing;
          best_episode = ep;
        } else if (ep - best_episode >= cfg_.plateau_patience) {
          curve.status = "plateau";
          break;
        }
      }
    }
    if (stop && stop->load() && curve.status == "ok") curve.status = "stopped";
  } catch (const env::ConnectionLost& e) {
    curve.status = "connection_lost";
    curve.error = e.what();
  } catch (const TrainingDivergence& e) {
    curve.status = "diverged";
    curve.error = e.what();
  }

  finished = true;
  if (learner_thread.joinable()) learner_thread.join();
  if (learner_error) {
    try {
      std::rethrow_exception(learner_error);
    } catch (const TrainingDivergence& e) {
      curve.status = "diverged";
      curve.error = e.what();
    }
  }
  curve.env_steps = env_steps.load();
  curve.updates = L.updates();
  curve.wall_s = ms_since(t_start) / 1000.0;
  return curve;
}

// ---------------------------------------------------------------------------

RolloutStats rollout(env::Environment& env, const ActFn& act, double upright_threshold,
                     int settle_from) {
  RolloutStats out;
  auto obs = env.reset();
  int settled = 0, settled_up = 0;
  double elapsed = 0.0;
  bool done = false;
  while (!done) {
    const auto res = env.step(act(obs));
    ++out.steps;
    out.ret += res.reward;
    elapsed += res.info.step_duration;
    const bool up = std::abs(env::theta_up_from_bottom(res.observation.theta())) < upright_threshold;
    if (up && out.time_to_upright < 0) {
      out.time_to_upright = out.steps;
      out.time_to_upright_s = elapsed;
    }
    if (out.steps > settle_from) {
      ++settled;
      settled_up += up;
    }
    obs = res.observation;
    done = res.done;
  }
  out.mean_reward = out.ret / out.steps;
  out.upright_fraction = settled > 0 ? static_cast<double>(settled_up) / settled : 0.0;
  return out;
}

RolloutStats rollout(env::Environment& env, Policy& policy, double upright_threshold,
                     int settle_from) {
  policy.reset();
  return rollout(env, [&policy](const env::ObservationVector& o) { return policy.act(o); },
                 upright_threshold, settle_from);
}

void write_curve_csv(const std::string& path, const LearningCurve& curve) {
  std::FILE* f = std::fopen(path.c_str(), "w");
  if (!f) throw std::runtime_error("cannot write " + path);
  std::fprintf(f, "episode,return,steps,wall_ms\n");
  for (const auto& e : curve.episodes) {
    std::fprintf(f, "%d,%.6f,%d,%.3f\n", e.episode, e.ret, e.steps, e.wall_ms);
  }
  if (std::fclose(f) != 0) throw std::runtime_error("failed writing " + path);
}

}  // namespace pendulum::agents
