#include "dino/balance_controller.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <string>

#include "dino/errors.hpp"

namespace dino {

std::string_view to_string(BalanceDirection d) {
  return d == BalanceDirection::dino ? "dino" : "began";
}

BalanceDirection balance_direction_from_string(std::string_view s) {
  if (s == "dino") return BalanceDirection::dino;
  if (s == "began") return BalanceDirection::began;
  throw UsageError("unknown balance direction '" + std::string(s) + "' (allowed: dino, began)");
}

void ControllerState::validate() const {
  if (!(k >= 0.0 && k <= 1.0)) {
    throw InvalidArgument("controller k must lie in [0,1], got " + std::to_string(k));
  }
  if (!(gamma >= 0.0 && gamma < 1.0)) {
    throw InvalidArgument("controller gamma must lie in [0,1), got " + std::to_string(gamma));
  }
  if (!(gain > 0.0) || !std::isfinite(gain)) {
    throw InvalidArgument("controller gain must be > 0, got " + std::to_string(gain));
  }
}

ControllerState update(const ControllerState& state, Energy e_real, Energy e_fake) {
  const double real = e_real.value();
  const double fake = e_fake.value();
  const double error = state.direction == BalanceDirection::dino
                           ? real - state.gamma * fake
                           : state.gamma * real - fake;
  ControllerState next = state;
  next.k = std::clamp(state.k + state.gain * error, 0.0, 1.0);
  return next;
}

double equilibrium_residual(const ControllerState& state, Energy e_real, Energy e_fake) {
  if (e_fake.value() == 0.0) {
    std::cerr << "warning: equilibrium_residual with zero fake energy\n";
    // 0/0 reports -inf.
    return e_real.value() > 0.0 ? std::numeric_limits<double>::infinity()
                                : -std::numeric_limits<double>::infinity();
  }
  return e_real.value() / e_fake.value() - state.gamma;
}

}  // namespace dino
