#include "pendulum/agents/features.hpp"

#include <cmath>

namespace pendulum::agents {

namespace {
constexpr float kVelocityScale = 4.0f;
constexpr float kAccelerationScale = 40.0f;
constexpr float kTimeScale = 0.2f;
}  // namespace

int FeatureSpec::dim() const {
  const int n = static_cast<int>(flags.count());
  return scaling == FeatureScaling::Normalized ? n + 1 : n;
}

VectorXf FeatureSpec::operator()(const env::ObservationVector& obs) const {
  if (scaling == FeatureScaling::Raw) {
    const auto v = obs.values(flags);
    VectorXf out(static_cast<Eigen::Index>(v.size()));
    for (std::size_t i = 0; i < v.size(); ++i) out[static_cast<Eigen::Index>(i)] = static_cast<float>(v[i]);
    return out;
  }
  VectorXf out(dim());
  Eigen::Index i = 0;
  const double theta = obs.theta();
  out[i++] = static_cast<float>(std::sin(theta));
  out[i++] = static_cast<float>(std::cos(theta));
  out[i++] = static_cast<float>(obs.servo_position);
  if (flags.pend_velocity) out[i++] = static_cast<float>(obs.pend_velocity) / kVelocityScale;
  if (flags.pend_acceleration) out[i++] = static_cast<float>(obs.pend_acceleration) / kAccelerationScale;
  if (flags.arm_velocity) out[i++] = static_cast<float>(obs.arm_velocity) / kVelocityScale;
  if (flags.time_since_last_action) out[i++] = static_cast<float>(obs.time_since_last_action) / kTimeScale;
  if (flags.observation_age) out[i++] = static_cast<float>(obs.observation_age) / kTimeScale;
  return out;
}

}  // namespace pendulum::agents
