#include <cstdio>
#include <filesystem>
#include <random>

#include "commands.hpp"
#include "pendulum/agents/training.hpp"
#include "support.hpp"

namespace pendulum::cli {

namespace {

/// Hanging start with a small random tilt, so sim episodes differ.
PendulumState hanging_start(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> tilt(-0.05, 0.05);
  PendulumState s;
  s.theta = tilt(rng);
  return s;
}

}  // namespace

int cmd_eval(const EvalOptions& o) {
  config::RunConfig cfg = load_config(o.config);
  const EnvVariant variant = parse_variant(o.env);
  if (o.episodes < 1) throw UsageError("--episodes must be positive");
  if (o.clock) cfg.clock = *o.clock;

  std::optional<agents::Policy> policy;
  const bool random_policy = o.policy == "random";
  if (!random_policy) {
    if (!std::filesystem::exists(o.policy)) throw UsageError("policy file not found: " + o.policy);
    try {
      policy = agents::Policy::load(o.policy);
    } catch (const std::runtime_error& e) {
      throw UsageError(e.what());
    }
    cfg.env.mode = agents::action_mode(policy->algo());
    cfg.env.features = policy->features().flags;
  }
  cfg.firmware.mode = cfg.env.mode;
  if (policy) cfg.train.algo = policy->algo();
  else cfg.train.algo = cfg.env.mode == env::ActionMode::Discrete ? agents::Algo::Dqn : agents::Algo::Td3;
  cfg.validate();

  std::mt19937_64 rng(static_cast<std::uint64_t>(o.seed));
  auto act_random = [&](const env::ObservationVector&) -> env::Action {
    if (cfg.env.mode == env::ActionMode::Discrete) {
      return env::DiscreteAction{std::uniform_int_distribution<int>(0, agents::kDiscreteActions - 1)(rng)};
    }
    return env::ContinuousAction{std::uniform_real_distribution<double>(-1.0, 1.0)(rng)};
  };

  std::optional<EnvHandle> wire;
  if (variant == EnvVariant::Wire) {
    wire = make_env(cfg, variant, o.broker, config::clock_factor(cfg.clock), "eval-" + std::to_string(cfg.env.device_id));
  }

  std::vector<agents::RolloutStats> results;
  for (int ep = 0; ep < o.episodes && !stop_flag().load(); ++ep) {
    std::optional<EnvHandle> sim;
    env::Environment* e = nullptr;
    if (wire) {
      e = wire->env.get();
    } else {
      cfg.env.seed = static_cast<std::uint64_t>(o.seed) + static_cast<std::uint64_t>(ep);
      sim = make_env(cfg, variant, "", 1.0, "", hanging_start(rng));
      e = sim->env.get();
    }
    const auto r = random_policy ? agents::rollout(*e, act_random) : agents::rollout(*e, *policy);
    results.push_back(r);
    std::printf("episode %d: return %.1f, time to upright %d steps (%.2f s), upright %.1f%% of steps 100-%d\n",
                ep + 1, r.ret, r.time_to_upright, r.time_to_upright_s, 100.0 * r.upright_fraction, r.steps);
  }
  if (results.empty()) return kExitFailure;

  double ret = 0.0, frac = 0.0, ttu = 0.0, ttu_s = 0.0;
  int reached = 0, within_100 = 0;
  for (const auto& r : results) {
    ret += r.ret;
    frac += r.upright_fraction;
    if (r.time_to_upright >= 0) {
      ++reached;
      ttu += r.time_to_upright;
      ttu_s += r.time_to_upright_s;
      if (r.time_to_upright <= 100) ++within_100;
    }
  }
  const double n = static_cast<double>(results.size());
  std::printf("mean return %.2f\n", ret / n);
  std::printf("upright fraction %.3f\n", frac / n);
  if (reached > 0) {
    std::printf("time to upright %.1f steps (%.2f s), reached in %d/%zu, within 100 steps in %d/%zu\n",
                ttu / reached, ttu_s / reached, reached, results.size(), within_100, results.size());
  } else {
    std::printf("time to upright: never reached\n");
  }

  if (!o.json_out.empty()) {
    nlohmann::json j;
    j["policy"] = o.policy;
    j["env"] = variant_name(variant);
    j["episodes"] = results.size();
    j["mean_return"] = ret / n;
    j["upright_fraction"] = frac / n;
    j["reached_upright"] = reached;
    j["within_100_steps"] = within_100;
    j["mean_time_to_upright_steps"] = reached ? ttu / reached : -1.0;
    j["mean_time_to_upright_s"] = reached ? ttu_s / reached : -1.0;
    nlohmann::json eps = nlohmann::json::array();
    for (const auto& r : results) {
      eps.push_back({{"return", r.ret}, {"steps", r.steps}, {"time_to_upright", r.time_to_upright},
                     {"time_to_upright_s", r.time_to_upright_s}, {"upright_fraction", r.upright_fraction}});
    }
    j["per_episode"] = eps;
    write_json(o.json_out, j);
  }
  return kExitOk;
}

}  // namespace pendulum::cli
