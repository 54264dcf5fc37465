#pragma once

#include <string_view>

#include "dino/core_math.hpp"

namespace dino {

/// Which balance the controller maintains.
///  - dino:  e_fake held above e_real (k grows while e_real > gamma * e_fake)
///  - began: e_real held above e_fake (k grows while gamma * e_real > e_fake)
enum class BalanceDirection { dino, began };

std::string_view to_string(BalanceDirection d);
BalanceDirection balance_direction_from_string(std::string_view s);

inline constexpr double kDefaultGain = 0.001;

/// Proportional controller for the emphasis placed on fake-sample energy.
/// The same type backs both k (Reverse player) and mu (Forward player) in
/// bidirectional training.
struct ControllerState {
  double k = 0.0;
  double gamma = 0.8;
  double gain = kDefaultGain;
  BalanceDirection direction = BalanceDirection::dino;

  /// Throws InvalidArgument unless k in [0,1], gamma in [0,1), gain > 0.
  void validate() const;
};

/// One proportional step with the output clamped to [0,1]. Energies are plain
/// detached values, so nothing here can carry gradient.
ControllerState update(const ControllerState& state, Energy e_real, Energy e_fake);

/// e_real / e_fake - gamma; zero at balance. Returns a signed infinity (and logs
/// a warning) when e_fake == 0.
double equilibrium_residual(const ControllerState& state, Energy e_real, Energy e_fake);

}  // namespace dino
