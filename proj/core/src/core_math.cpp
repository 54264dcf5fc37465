#include "dino/core_math.hpp"

#include <cmath>
#include <sstream>

#include "dino/errors.hpp"

namespace dino {

namespace {

void require_same_shape(const torch::Tensor& pred, const torch::Tensor& target, const char* op) {
  if (pred.sizes() != target.sizes()) {
    std::ostringstream msg;
    msg << op << ": shape mismatch " << pred.sizes() << " vs " << target.sizes();
    throw InvalidArgument(msg.str());
  }
}

void require_weight(double w, const char* name) {
  if (!(w >= 0.0) || !std::isfinite(w)) {
    throw InvalidArgument(std::string(name) + " must be finite and >= 0");
  }
}

}  // namespace

Energy::Energy(double value) : value_(value) {
  if (!std::isfinite(value) || value < 0.0) {
    throw InvalidArgument("energy must be finite and >= 0, got " + std::to_string(value));
  }
}

Energy Energy::from(const torch::Tensor& scalar) {
  return Energy(scalar.detach().item<double>());
}

Margin::Margin(double m) : m_(m) { require_weight(m, "margin"); }

torch::Tensor mse_energy(const torch::Tensor& pred, const torch::Tensor& target) {
  require_same_shape(pred, target, "mse_energy");
  return (pred - target).square().mean();
}

torch::Tensor l1_energy(const torch::Tensor& pred, const torch::Tensor& target) {
  require_same_shape(pred, target, "l1_energy");
  // d|u|/du = sign(u), and sign(0) == 0.
  return (pred - target).abs().mean();
}

torch::Tensor margin_hinge(const torch::Tensor& energy, Margin m) {
  // relu' is 0 at the origin, so the gradient is also 0 exactly at e == m.
  return torch::relu(m.value() - energy);
}

double margin_hinge(Energy energy, Margin m) {
  return std::max(0.0, m.value() - energy.value());
}

torch::Tensor reverse_loss(const torch::Tensor& e_real, const torch::Tensor& e_fake, double k,
                           Margin m) {
  return e_real + k * margin_hinge(e_fake, m);
}

double reverse_loss(Energy e_real, Energy e_fake, double k, Margin m) {
  return e_real.value() + k * margin_hinge(e_fake, m);
}

torch::Tensor forward_loss(const torch::Tensor& e_fake, const torch::Tensor& e_l1,
                           double l1_weight) {
  require_weight(l1_weight, "l1_weight");
  if (l1_weight == 0.0) {
    return e_fake;
  }
  return e_fake + l1_weight * e_l1;
}

double forward_loss(Energy e_fake, Energy e_l1, double l1_weight) {
  require_weight(l1_weight, "l1_weight");
  return e_fake.value() + l1_weight * e_l1.value();
}

torch::Tensor began_discriminator_loss(const torch::Tensor& e_real, const torch::Tensor& e_fake,
                                       double k) {
  return e_real - k * e_fake;
}

}  // namespace dino
