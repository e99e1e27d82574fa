// pendulum: virtual rig service, training, evaluation and wire benchmarks.

#include <cstdio>
#include <exception>

#include <CLI11.hpp>

#include "commands.hpp"
#include "support.hpp"

using namespace pendulum;
using namespace pendulum::cli;

int main(int argc, char** argv) {
  CLI::App app{"Rotary pendulum rig, learners and tools"};
  app.require_subcommand(1);

  RigOptions rig;
  auto* rig_cmd = app.add_subcommand("rig", "Run a broker and virtual rigs on TCP");
  rig_cmd->add_option("--config", rig.config, "Settings file")->check(CLI::ExistingFile);
  rig_cmd->add_option("--devices", rig.devices, "Number of virtual rigs")->check(CLI::PositiveNumber);
  rig_cmd->add_option("--clock", rig.clock, "real or accel:N");
  rig_cmd->add_option("--port", rig.port, "Broker port (0 picks a free one)");
  rig_cmd->add_option("--connect", rig.connect, "Use an existing broker host:port");
  rig_cmd->add_option("--duration", rig.duration_s, "Stop after this many wall seconds");

  TrainOptions train;
  auto* train_cmd = app.add_subcommand("train", "Train an agent and write curve.csv and manifest.json");
  train_cmd->add_option("--config", train.config, "Settings file")->check(CLI::ExistingFile);
  train_cmd->add_option("--algo", train.algo, "dqn, rdqn, td3 or rtd3");
  train_cmd->add_option("--env", train.env, "sim, sim-delayed or wire");
  train_cmd->add_option("--broker", train.broker, "host:port for --env wire");
  train_cmd->add_option("--clock", train.clock, "real or accel:N, matching the rig");
  train_cmd->add_option("--episodes", train.episodes, "Episode budget");
  train_cmd->add_option("--seed", train.seed, "Seed for learner and environment");
  train_cmd->add_option("--out", train.out, "Output directory");
  train_cmd->add_flag("--async", train.async, "Learner on its own thread");
  train_cmd->add_flag("--quiet", train.quiet, "No progress lines");

  EvalOptions eval;
  auto* eval_cmd = app.add_subcommand("eval", "Greedy rollouts of a saved policy");
  eval_cmd->add_option("--policy", eval.policy, "Policy file, or 'random'")->required();
  eval_cmd->add_option("--config", eval.config, "Settings file")->check(CLI::ExistingFile);
  eval_cmd->add_option("--env", eval.env, "sim, sim-delayed or wire");
  eval_cmd->add_option("--broker", eval.broker, "host:port for --env wire");
  eval_cmd->add_option("--clock", eval.clock, "real or accel:N, matching the rig");
  eval_cmd->add_option("--episodes", eval.episodes, "Number of episodes");
  eval_cmd->add_option("--seed", eval.seed, "Seed for start states");
  eval_cmd->add_option("--json", eval.json_out, "Also write results as JSON");

  BenchOptions bench;
  auto* bench_cmd = app.add_subcommand("bench", "Observation age and delivery latency over the loopback wire");
  bench_cmd->add_option("--config", bench.config, "Settings file")->check(CLI::ExistingFile);
  bench_cmd->add_option("--steps", bench.steps, "Environment steps");
  bench_cmd->add_option("--latency-ms", bench.latency_ms, "Rig uplink base latency");
  bench_cmd->add_option("--jitter-ms", bench.jitter_ms, "Rig uplink jitter");
  bench_cmd->add_option("--drop", bench.drop, "Rig uplink drop probability");
  bench_cmd->add_option("--bin-ms", bench.bin_ms, "Histogram bin width");
  bench_cmd->add_option("--seed", bench.seed, "Action seed");
  bench_cmd->add_option("--out", bench.out, "Histogram CSV path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitUsage;
  }

  install_signal_handlers();
  try {
    if (*rig_cmd) return cmd_rig(rig);
    if (*train_cmd) return cmd_train(train);
    if (*eval_cmd) return cmd_eval(eval);
    if (*bench_cmd) return cmd_bench(bench);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitUsage;
  } catch (const config::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return kExitUsage;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitFailure;
  }
  return kExitUsage;
}
