#pragma once

// Direct, loop-based PSNR and SSIM used as oracles for the library versions.

#include <cmath>
#include <vector>

#include <torch/torch.h>

namespace dino::test {

inline double reference_psnr(const torch::Tensor& a, const torch::Tensor& b, double max = 255.0) {
  const auto x = a.to(torch::kFloat64).flatten();
  const auto y = b.to(torch::kFloat64).flatten();
  const auto* px = x.data_ptr<double>();
  const auto* py = y.data_ptr<double>();
  double sse = 0;
  for (std::int64_t i = 0; i < x.numel(); ++i) sse += (px[i] - py[i]) * (px[i] - py[i]);
  const double mse = sse / static_cast<double>(x.numel());
  if (mse == 0) return 99.0;
  return std::min(99.0, 10.0 * std::log10(max * max / mse));
}

/// Per-window SSIM with a freshly built 11x11 Gaussian (sigma 1.5), every
/// valid window position, averaged, then averaged over channels.
inline double reference_ssim(const torch::Tensor& a, const torch::Tensor& b, double L = 255.0) {
  auto x = a.to(torch::kFloat64).contiguous();
  auto y = b.to(torch::kFloat64).contiguous();
  if (x.dim() == 2) {
    x = x.unsqueeze(0);
    y = y.unsqueeze(0);
  }
  constexpr int K = 11;
  double w[K][K];
  double total = 0;
  for (int i = 0; i < K; ++i)
    for (int j = 0; j < K; ++j) {
      const double d2 = (i - 5) * (i - 5) + (j - 5) * (j - 5);
      w[i][j] = std::exp(-d2 / (2 * 1.5 * 1.5));
      total += w[i][j];
    }
  for (auto& row : w)
    for (double& v : row) v /= total;
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  const auto C = x.size(0), H = x.size(1), W = x.size(2);
  auto X = x.accessor<double, 3>();
  auto Y = y.accessor<double, 3>();
  double channel_sum = 0;
  for (std::int64_t c = 0; c < C; ++c) {
    double sum = 0;
    std::int64_t count = 0;
    for (std::int64_t r = 0; r + K <= H; ++r) {
      for (std::int64_t q = 0; q + K <= W; ++q) {
        double mx = 0, my = 0;
        for (int i = 0; i < K; ++i)
          for (int j = 0; j < K; ++j) {
            mx += w[i][j] * X[c][r + i][q + j];
            my += w[i][j] * Y[c][r + i][q + j];
          }
        double vx = 0, vy = 0, cov = 0;
        for (int i = 0; i < K; ++i)
          for (int j = 0; j < K; ++j) {
            const double dx = X[c][r + i][q + j] - mx;
            const double dy = Y[c][r + i][q + j] - my;
            vx += w[i][j] * dx * dx;
            vy += w[i][j] * dy * dy;
            cov += w[i][j] * dx * dy;
          }
        sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
    }
    channel_sum += sum / static_cast<double>(count);
  }
  return channel_sum / static_cast<double>(C);
}

}  // namespace dino::test
