#pragma once

#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "dino/data.hpp"
#include "dino/networks.hpp"

namespace dino {

/// Value reported for identical images, where the true PSNR is infinite.
inline constexpr double kPsnrCap = 99.0;

/// 10 * log10(max_value^2 / MSE), capped at kPsnrCap.
double psnr(const torch::Tensor& a, const torch::Tensor& b, double max_value = 255.0);

/// Gaussian-window SSIM (11x11, sigma 1.5, valid positions only) with
/// C1 = (0.01 L)^2 and C2 = (0.03 L)^2. Accepts [H,W] or [C,H,W]; multi-channel
/// inputs report the mean over channels.
double ssim(const torch::Tensor& a, const torch::Tensor& b, double data_range = 255.0);

/// Normalized 1-D Gaussian taps used by ssim().
std::vector<double> ssim_gaussian_window(int size = 11, double sigma = 1.5);

/// Extra full-reference metric evaluated on 8-bit-range images.
struct MetricPlugin {
  std::string name;
  std::function<double(const torch::Tensor&, const torch::Tensor&)> score;
};

struct SampleScore {
  std::string name;
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<bool> correct;
};

struct EvalReport {
  double psnr = 0.0;
  double ssim = 0.0;
  std::optional<double> oracle_accuracy;
  std::map<std::string, double> extra;
  std::vector<SampleScore> samples;

  nlohmann::json to_json() const;
  static EvalReport from_json(const nlohmann::json& j);
};

/// Maps a batch to predictions in the evaluated direction's output domain.
using Predictor = std::function<torch::Tensor(const Batch&)>;

struct EvalOptions {
  int batch_size = 16;
  bool reverse = false;  // evaluate y -> x instead of x -> y
  std::vector<MetricPlugin> plugins;
};

/// Scores predictions against ground truth over `indices`. PSNR and SSIM are
/// computed on [0,255]-range images; oracle accuracy is filled in for synthetic
/// datasets carrying meta attributes.
EvalReport evaluate(const Predictor& predict, const PairedDataset& data,
                    const std::vector<std::size_t>& indices, const EvalOptions& opts = {});

/// Convenience: evaluates a translator in inference mode.
EvalReport evaluate_translator(Translator& net, const PairedDataset& data,
                               const std::vector<std::size_t>& indices,
                               const EvalOptions& opts = {}, Stream stream = Stream::standard);

/// Fraction of `indices` whose translation decodes to the ground-truth
/// attributes. Throws UsageError for non-synthetic data.
double semantic_consistency(Translator& net, const PairedDataset& data,
                            const std::vector<std::size_t>& indices, int batch_size = 16,
                            bool reverse = false, Stream stream = Stream::standard);

}  // namespace dino
