#pragma once

#include <optional>
#include <string>

namespace pendulum::cli {

struct RigOptions {
  std::string config;
  std::optional<int> devices;
  std::optional<std::string> clock;
  std::optional<int> port;
  std::string connect;      // existing broker instead of starting one
  double duration_s = 0.0;  // 0 = until signalled
};

struct TrainOptions {
  std::string config;
  std::string algo = "dqn";
  std::string env = "sim";
  std::string broker;
  std::optional<std::string> clock;
  std::optional<int> episodes;
  std::optional<long long> seed;
  std::string out = "runs";
  bool async = false;
  bool quiet = false;
};

struct EvalOptions {
  std::string config;
  std::string policy;  // file, or "random"
  std::string env = "sim";
  std::string broker;
  std::optional<std::string> clock;
  int episodes = 10;
  long long seed = 0;
  std::string json_out;
};

struct BenchOptions {
  std::string config;
  int steps = 500;
  std::optional<double> latency_ms;
  std::optional<double> jitter_ms;
  std::optional<double> drop;
  double bin_ms = 1.0;
  long long seed = 0;
  std::string out = "bench.csv";
};

int cmd_rig(const RigOptions& o);
int cmd_train(const TrainOptions& o);
int cmd_eval(const EvalOptions& o);
int cmd_bench(const BenchOptions& o);

}  // namespace pendulum::cli
