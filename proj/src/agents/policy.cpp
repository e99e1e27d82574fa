#include "pendulum/agents/policy.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace pendulum::agents {

using nlohmann::json;

std::string algo_name(Algo algo) {
  switch (algo) {
    case Algo::Dqn: return "dqn";
    case Algo::RDqn: return "rdqn";
    case Algo::Td3: return "td3";
    case Algo::RTd3: return "rtd3";
  }
  return "?";
}

Algo parse_algo(const std::string& name) {
  if (name == "dqn") return Algo::Dqn;
  if (name == "rdqn") return Algo::RDqn;
  if (name == "td3") return Algo::Td3;
  if (name == "rtd3") return Algo::RTd3;
  throw std::invalid_argument("unknown algorithm '" + name + "' (dqn, rdqn, td3, rtd3)");
}

bool is_recurrent(Algo algo) { return algo == Algo::RDqn || algo == Algo::RTd3; }

env::ActionMode action_mode(Algo algo) {
  return algo == Algo::Dqn || algo == Algo::RDqn ? env::ActionMode::Discrete
                                                 : env::ActionMode::Continuous;
}

Policy::Policy(Algo algo, FeatureSpec features, std::optional<GruEncoder<float>> encoder,
               Mlp<float> net)
    : algo_(algo), features_(features), encoder_(std::move(encoder)), net_(std::move(net)) {
  if (is_recurrent(algo_) != encoder_.has_value()) {
    throw std::invalid_argument("policy: recurrent algorithms need an encoder and others must not have one");
  }
  if (encoder_ && encoder_->input_dim() != features_.dim()) {
    throw std::invalid_argument("policy: encoder input does not match the feature size");
  }
  if (net_.input_dim() != state_dim()) throw std::invalid_argument("policy: network input does not match the state size");
}

int Policy::state_dim() const {
  return features_.dim() + (encoder_ ? encoder_->hidden_dim() : 0);
}

void Policy::reset() {
  if (encoder_) encoder_->reset();
}

VectorXf Policy::observe(const env::ObservationVector& obs) {
  const VectorXf x = features_(obs);
  if (!encoder_) return x;
  encoder_->step(x);
  return encoder_->encode(x);
}

env::Action Policy::choose(const VectorXf& state, double explore, std::mt19937_64& rng) const {
  if (action_mode(algo_) == env::ActionMode::Discrete) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (explore > 0.0 && u(rng) < explore) {
      std::uniform_int_distribution<int> pick(0, kDiscreteActions - 1);
      return env::DiscreteAction{pick(rng)};
    }
    Eigen::Index best = 0;
    net_.forward(state).col(0).maxCoeff(&best);
    return env::DiscreteAction{static_cast<int>(best)};
  }
  double a = net_.forward(state)(0, 0);
  if (explore > 0.0) {
    std::normal_distribution<double> n(0.0, explore);
    a += n(rng);
  }
  return env::ContinuousAction{std::clamp(a, -1.0, 1.0)};
}

env::Action Policy::act(const env::ObservationVector& obs) {
  std::mt19937_64 unused;
  return choose(observe(obs), 0.0, unused);
}

namespace {

json params_to_json(const Params<float>& p) {
  json layers = json::array();
  for (const auto& l : p) {
    std::vector<float> w(l.W.data(), l.W.data() + l.W.size());
    std::vector<float> b(l.b.data(), l.b.data() + l.b.size());
    layers.push_back({{"rows", l.W.rows()}, {"cols", l.W.cols()}, {"W", w}, {"b", b}});
  }
  return layers;
}

Params<float> params_from_json(const json& j) {
  Params<float> out;
  for (const auto& l : j) {
    const auto rows = l.at("rows").get<Eigen::Index>();
    const auto cols = l.at("cols").get<Eigen::Index>();
    const auto w = l.at("W").get<std::vector<float>>();
    const auto b = l.at("b").get<std::vector<float>>();
    if (static_cast<Eigen::Index>(w.size()) != rows * cols || static_cast<Eigen::Index>(b.size()) != rows) {
      throw std::runtime_error("policy file: layer shape mismatch");
    }
    out.push_back({Eigen::Map<const MatrixXf>(w.data(), rows, cols),
                   Eigen::Map<const VectorXf>(b.data(), rows)});
  }
  return out;
}

const char* activation_name(Activation a) {
  switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Linear: break;
  }
  return "linear";
}

Activation parse_activation(const std::string& s) {
  if (s == "relu") return Activation::Relu;
  if (s == "tanh") return Activation::Tanh;
  if (s == "linear") return Activation::Linear;
  throw std::runtime_error("policy file: unknown activation " + s);
}

}  // namespace

void Policy::save(const std::string& path) const {
  json j;
  j["format"] = "pendulum-policy/1";
  j["algo"] = algo_name(algo_);
  j["scaling"] = features_.scaling == FeatureScaling::Raw ? "raw" : "normalized";
  const auto& f = features_.flags;
  j["features"] = {{"pend_velocity", f.pend_velocity},
                   {"pend_acceleration", f.pend_acceleration},
                   {"arm_velocity", f.arm_velocity},
                   {"time_since_last_action", f.time_since_last_action},
                   {"observation_age", f.observation_age}};
  j["net"] = {{"output", activation_name(net_.output_activation())},
              {"layers", params_to_json(net_.params())}};
  if (encoder_) {
    j["gru"] = {{"input_dim", encoder_->input_dim()},
                {"hidden_dim", encoder_->hidden_dim()},
                {"gates", params_to_json(encoder_->params())}};
  }
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write policy file " + path);
  out << j.dump();
  if (!out) throw std::runtime_error("failed writing policy file " + path);
}

Policy Policy::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open policy file " + path);
  json j;
  try {
    in >> j;
    if (j.at("format") != "pendulum-policy/1") throw std::runtime_error("unsupported format");
    FeatureSpec spec;
    spec.scaling = j.at("scaling") == "raw" ? FeatureScaling::Raw : FeatureScaling::Normalized;
    const auto& f = j.at("features");
    spec.flags.pend_velocity = f.at("pend_velocity");
    spec.flags.pend_acceleration = f.at("pend_acceleration");
    spec.flags.arm_velocity = f.at("arm_velocity");
    spec.flags.time_since_last_action = f.at("time_since_last_action");
    spec.flags.observation_age = f.at("observation_age");
    Mlp<float> net;
    net.set_output_activation(parse_activation(j.at("net").at("output")));
    net.params() = params_from_json(j.at("net").at("layers"));
    std::optional<GruEncoder<float>> enc;
    if (j.contains("gru")) {
      const auto& g = j.at("gru");
      auto e = GruEncoder<float>::zeros(g.at("input_dim"), g.at("hidden_dim"));
      e.params() = params_from_json(g.at("gates"));
      enc = std::move(e);
    }
    return Policy(parse_algo(j.at("algo")), spec, std::move(enc), std::move(net));
  } catch (const json::exception& e) {
    throw std::runtime_error("malformed policy file " + path + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw std::runtime_error("malformed policy file " + path + ": " + e.what());
  }
}

}  // namespace pendulum::agents
