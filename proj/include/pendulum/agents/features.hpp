#pragma once

#include "pendulum/agents/nn.hpp"
#include "pendulum/env.hpp"

namespace pendulum::agents {

enum class FeatureScaling { Normalized, Raw };

/// Maps an environment observation to the network input.
///
/// Normalized: encoder count -> (sin theta, cos theta), velocities / 4 rev/s,
/// acceleration / 40 rev/s^2, times / 0.2 s. Raw: the exposed values as-is.
struct FeatureSpec {
  env::FeatureFlags flags;
  FeatureScaling scaling = FeatureScaling::Normalized;

  int dim() const;
  VectorXf operator()(const env::ObservationVector& obs) const;
};

}  // namespace pendulum::agents
