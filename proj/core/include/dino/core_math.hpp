#pragma once

#include <torch/torch.h>

namespace dino {

/// Detached, non-negative reconstruction energy. Constructed from a scalar
/// tensor or a plain double; negative or non-finite values are rejected.
class Energy {
 public:
  Energy() = default;
  explicit Energy(double value);
  static Energy from(const torch::Tensor& scalar);

  double value() const noexcept { return value_; }

 private:
  double value_ = 0.0;
};

/// Margin of the hinge term: the largest energy still credited to a fake sample.
class Margin {
 public:
  explicit Margin(double m);
  double value() const noexcept { return m_; }

 private:
  double m_;
};

// All reductions are means over every element, so margins and balance ratios
// do not depend on image resolution or channel count.

/// Mean squared difference. Throws InvalidArgument on shape mismatch.
torch::Tensor mse_energy(const torch::Tensor& pred, const torch::Tensor& target);

/// Mean absolute difference; the subgradient at a zero difference is 0.
torch::Tensor l1_energy(const torch::Tensor& pred, const torch::Tensor& target);

/// max(0, m - e). Gradient w.r.t. e is -1 below the margin and 0 at or above it.
torch::Tensor margin_hinge(const torch::Tensor& energy, Margin m);
double margin_hinge(Energy energy, Margin m);

/// Discriminator (Reverse network) loss: e_real + k * max(0, m - e_fake).
/// `e_fake` must be computed from a detached generator output so that no
/// gradient reaches the Forward network.
torch::Tensor reverse_loss(const torch::Tensor& e_real, const torch::Tensor& e_fake, double k,
                           Margin m);
double reverse_loss(Energy e_real, Energy e_fake, double k, Margin m);

/// Generator (Forward network) loss: e_fake + l1_weight * e_l1.
torch::Tensor forward_loss(const torch::Tensor& e_fake, const torch::Tensor& e_l1,
                           double l1_weight);
double forward_loss(Energy e_fake, Energy e_l1, double l1_weight);

/// Discriminator loss of the BEGAN-direction baseline: e_real - k * e_fake (no margin).
torch::Tensor began_discriminator_loss(const torch::Tensor& e_real, const torch::Tensor& e_fake,
                                       double k);

}  // namespace dino
