#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

namespace dino {

/// Shape plan of a U-Net translator.
///
/// The encoder has `encoder_layers` convolutions: the first keeps the input
/// resolution, each later one halves it (4x4 kernels, stride 2). The decoder has
/// 2 * (encoder_layers - 1) 3x3 convolutions grouped in pairs; the first conv of
/// each pair follows a nearest-neighbour 2x upsample and a concatenation with the
/// encoder output of matching resolution. Channel widths double from
/// `base_width` and are capped at 8 * base_width.
struct UNetSpec {
  int in_channels = 3;
  int out_channels = 3;
  int base_width = 64;
  int encoder_layers = 7;
  int image_size = 256;
  bool instance_norm = true;
  bool dropout = false;
  double dropout_p = 0.5;
  /// Number of decoder convs shared by both heads of a branched network.
  int branch_layer = 3;

  int decoder_layers() const { return 2 * (encoder_layers - 1); }
  int encoder_width(int layer) const;

  /// 7-layer encoder / 12-layer decoder for 256x256 images.
  static UNetSpec image_plan(int in_channels, int out_channels);
  /// 4-layer encoder / 6-layer decoder for 32x32 synthetic domains.
  static UNetSpec toy_plan(int in_channels, int out_channels);

  /// Throws InvalidArgument naming the first layer the plan cannot serve.
  void validate() const;

  /// Flat `key=value` lines, used as checkpoint metadata.
  std::string to_text() const;
  static UNetSpec from_text(std::string_view text);

  bool operator==(const UNetSpec&) const = default;
};

enum class Stream { standard, disc, gen };

std::string_view to_string(Stream s);

/// Disjoint, exhaustive partition of a translator's trainable parameters.
struct ParameterGroups {
  std::vector<torch::Tensor> encoder;
  std::vector<torch::Tensor> trunk;
  std::vector<torch::Tensor> disc_head;
  std::vector<torch::Tensor> gen_head;

  std::size_t total() const {
    return encoder.size() + trunk.size() + disc_head.size() + gen_head.size();
  }
};

struct TranslateTrace {
  torch::Tensor trunk;   // activation after the last shared decoder layer
  torch::Tensor output;
};

namespace detail {

class EncoderLayerImpl : public torch::nn::Module {
 public:
  EncoderLayerImpl(int in, int out, bool downsample, bool norm);
  torch::Tensor forward(const torch::Tensor& x);

 private:
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::InstanceNorm2d norm_{nullptr};
};
TORCH_MODULE(EncoderLayer);

class DecoderLayerImpl : public torch::nn::Module {
 public:
  struct Options {
    int in = 0;
    int out = 0;
    int skip_index = -1;  // encoder output concatenated after upsampling; -1 for none
    bool norm = true;
    bool output = false;  // final layer: tanh, no norm
    bool dropout = false;
    double dropout_p = 0.5;
  };

  explicit DecoderLayerImpl(const Options& opts);
  torch::Tensor forward(const torch::Tensor& h, const std::vector<torch::Tensor>& skips);

 private:
  Options opts_;
  torch::nn::Conv2d conv_{nullptr};
  torch::nn::InstanceNorm2d norm_{nullptr};
  torch::nn::Dropout dropout_{nullptr};
};
TORCH_MODULE(DecoderLayer);

}  // namespace detail

/// Encoder-decoder translator with skip connections, optionally with a decoder
/// that splits after `spec.branch_layer` convs into a discriminative and a
/// generative head. Registered submodules are named `encoder`, `trunk`,
/// `disc_head` and `gen_head`, so parameter names carry their group.
class TranslatorImpl : public torch::nn::Module {
 public:
  TranslatorImpl(const UNetSpec& spec, bool branched, std::uint64_t seed);

  /// `Stream::standard` is the single stream of an unbranched network and the
  /// generative stream of a branched one. disc/gen on an unbranched network
  /// throws UsageError.
  torch::Tensor forward(const torch::Tensor& x, Stream stream = Stream::standard);
  TranslateTrace trace(const torch::Tensor& x, Stream stream = Stream::standard);

  ParameterGroups parameter_groups() const;
  std::int64_t parameter_count() const;

  const UNetSpec& spec() const { return spec_; }
  bool branched() const { return branched_; }

  /// Re-draws every weight from the seeded initializer.
  void reset_parameters(std::uint64_t seed);

 private:
  void check_input(const torch::Tensor& x) const;
  std::vector<torch::Tensor> encode(const torch::Tensor& x);
  static torch::Tensor run(torch::nn::ModuleList& layers, torch::Tensor h,
                           const std::vector<torch::Tensor>& skips);

  UNetSpec spec_;
  bool branched_;
  torch::nn::ModuleList encoder_;
  torch::nn::ModuleList trunk_;
  torch::nn::ModuleList disc_head_;
  torch::nn::ModuleList gen_head_;
};
TORCH_MODULE(Translator);

/// Builds and initializes a translator (zero-mean normal weights, std 0.02).
Translator build_unet(const UNetSpec& spec, bool branched, std::uint64_t seed = 0);

/// Deep copy with identical parameters and buffers.
Translator clone_translator(const Translator& net);

/// Copies parameter values of `src` into `dst`; both must share a spec.
void copy_parameters(const Translator& src, Translator& dst);

/// Snapshot of every named parameter, for bit-exact before/after comparisons.
std::map<std::string, torch::Tensor> snapshot_parameters(const Translator& net);

}  // namespace dino
