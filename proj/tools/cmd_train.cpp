#include <cstdio>
#include <filesystem>

#include "commands.hpp"
#include "pendulum/agents/training.hpp"
#include "support.hpp"

namespace pendulum::cli {

namespace fs = std::filesystem;

int cmd_train(const TrainOptions& o) {
  config::RunConfig cfg = load_config(o.config);
  const EnvVariant variant = parse_variant(o.env);
  try {
    cfg.train.algo = agents::parse_algo(o.algo);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  cfg.env.mode = agents::action_mode(cfg.train.algo);
  cfg.firmware.mode = cfg.env.mode;
  cfg.env.delay = variant == EnvVariant::SimDelayed ? DelayModel::paper_uniform() : DelayModel::none();
  if (o.clock) cfg.clock = *o.clock;
  if (o.episodes) cfg.train.episodes = *o.episodes;
  if (o.seed) {
    if (*o.seed < 0) throw UsageError("--seed must be >= 0");
    cfg.train.seed = static_cast<std::uint64_t>(*o.seed);
    cfg.env.seed = static_cast<std::uint64_t>(*o.seed);
  }
  if (o.async) cfg.train.async = true;
  cfg.validate();

  const std::string started = utc_timestamp();
  const std::string run_id = agents::algo_name(cfg.train.algo) + "-" + variant_name(variant) + "-s" +
                             std::to_string(cfg.train.seed) + "-" + config::config_hash(cfg).substr(0, 8);
  const fs::path dir = fs::path(o.out) / run_id;
  fs::create_directories(dir);

  nlohmann::json manifest;
  manifest["run_id"] = run_id;
  manifest["algorithm"] = agents::algo_name(cfg.train.algo);
  manifest["env"] = variant_name(variant);
  manifest["delay_model"] = cfg.env.delay.name();
  manifest["seed"] = cfg.train.seed;
  manifest["config"] = config::to_json(cfg);
  manifest["config_hash"] = config::config_hash(cfg);
  manifest["git_revision"] = git_revision();
  manifest["started"] = started;
  if (variant == EnvVariant::Wire) manifest["broker"] = o.broker;

  agents::LearningCurve curve;
  try {
    EnvHandle h = make_env(cfg, variant, o.broker, config::clock_factor(cfg.clock), "agent-" + std::to_string(cfg.env.device_id));
    agents::Trainer trainer(cfg.train, cfg.env.features);
    curve = trainer.run(*h.env, [&](const agents::EpisodeRecord& r) {
      if (!o.quiet && (r.episode + 1) % 10 == 0) {
        std::fprintf(stderr, "episode %d return %.1f mean reward %.3f upright %.2f\n", r.episode + 1,
                     r.ret, r.mean_reward, r.upright_fraction);
      }
    }, &stop_flag());
    trainer.policy().save((dir / "policy.json").string());
  } catch (const transport::TransportError& e) {
    curve.status = "connection_lost";
    curve.error = e.what();
  } catch (const env::ConnectionLost& e) {
    curve.status = "connection_lost";
    curve.error = e.what();
  }

  agents::write_curve_csv((dir / "curve.csv").string(), curve);
  manifest["finished"] = utc_timestamp();
  manifest["status"] = curve.status;
  if (!curve.error.empty()) manifest["error"] = curve.error;
  manifest["episodes"] = curve.episodes.size();
  manifest["env_steps"] = curve.env_steps;
  manifest["updates"] = curve.updates;
  manifest["wall_s"] = curve.wall_s;
  manifest["trailing50_mean_reward"] = curve.trailing_mean_reward(50);
  write_json((dir / "manifest.json").string(), manifest);

  std::printf("%s\n", dir.string().c_str());
  std::printf("status %s, %zu episodes, last-50 mean reward %.3f\n", curve.status.c_str(),
              curve.episodes.size(), curve.trailing_mean_reward(50));
  const bool ok = curve.status == "ok" || curve.status == "stopped" || curve.status == "plateau";
  if (!ok) std::fprintf(stderr, "train: %s\n", curve.error.c_str());
  return ok ? kExitOk : kExitFailure;
}

}  // namespace pendulum::cli
