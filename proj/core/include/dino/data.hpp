#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <torch/torch.h>

namespace dino {

/// Which side of a toy pair carries the extra, non-semantic detail.
///  - informative_target: x is a label map, y a textured photo (label -> photo)
///  - informative_source: x is a textured photo, y a label map (photo -> sketch)
///  - involutive:         x is a textured photo, y its negation
enum class ToyDirection { informative_target, informative_source, involutive };

std::string_view to_string(ToyDirection d);
ToyDirection toy_direction_from_string(std::string_view s);

/// Image modality of one side of a toy pair.
enum class ToyModality { label_map, photo, negated_photo };

enum class Side { source, target };

struct ToyDomainSpec {
  int image_size = 32;
  int grid = 8;      // positions per axis
  int colors = 4;    // palette size, <= 8
  int shapes = 2;    // 0 = filled square, 1 = plus
  int textures = 4;  // photo texture variants (nuisance detail, not semantic)
  ToyDirection direction = ToyDirection::informative_target;
  std::uint64_t seed = 0;

  int state_count() const { return grid * grid * colors * shapes; }
  int shape_size() const { return image_size / 4; }
  int channels(Side side) const;
  ToyModality modality(Side side) const;

  /// Throws UsageError for an empty attribute space, InvalidArgument for a
  /// layout that does not fit the image.
  void validate() const;

  bool operator==(const ToyDomainSpec&) const = default;
};

/// Semantic attributes of a toy scene. `index` enumerates the space as
/// ((row * grid + col) * colors + color) * shapes + shape.
struct ToyAttributes {
  int row = 0;
  int col = 0;
  int color = 0;
  int shape = 0;

  int index(const ToyDomainSpec& spec) const;
  static ToyAttributes from_index(int index, const ToyDomainSpec& spec);
  bool operator==(const ToyAttributes&) const = default;
};

struct ToyMeta {
  ToyAttributes attributes;
  int texture = 0;
};

struct PairedSample {
  torch::Tensor x;  // [C,H,W] float32 in [-1,1]
  torch::Tensor y;
  std::string name;
  std::optional<ToyMeta> meta;
};

/// Texture variant assigned to a state; a pure function of (spec.seed, state index).
int toy_texture_for(const ToyDomainSpec& spec, const ToyAttributes& attributes);

/// Binary [H,W] mask of the scene's shape.
torch::Tensor render_toy_mask(const ToyDomainSpec& spec, const ToyAttributes& a);
torch::Tensor render_toy_image(const ToyDomainSpec& spec, const ToyAttributes& a, int texture,
                               ToyModality modality);

/// Deterministic render of the pair for `attributes` (texture from toy_texture_for).
/// Throws InvalidArgument when an attribute is out of range.
PairedSample generate_toy_pair(const ToyDomainSpec& spec, const ToyAttributes& attributes);

/// Pixels that differ from the modality's background, as a bool [H,W] mask.
torch::Tensor toy_silhouette(const torch::Tensor& image, ToyModality modality);

struct DecodeResult {
  ToyAttributes attributes;
  double score = 0.0;  // exp(-mse / 0.01) against the best template; 1.0 for a clean render
  double mse = 0.0;
};

/// Exact nearest-template decoder over the enumerable attribute space (and
/// texture variants for photo modalities). Ties go to the lowest state index.
class ToyOracle {
 public:
  ToyOracle(const ToyDomainSpec& spec, Side side);

  DecodeResult decode(const torch::Tensor& image) const;

  const ToyDomainSpec& spec() const { return spec_; }
  Side side() const { return side_; }

 private:
  struct Template {
    int state;
    std::vector<double> pixels;
  };

  ToyDomainSpec spec_;
  Side side_;
  std::int64_t numel_;
  std::vector<Template> templates_;
};

/// One-off decode; prefer ToyOracle when decoding many images.
DecodeResult oracle_decode(const torch::Tensor& image, const ToyDomainSpec& spec,
                           Side side = Side::target);

/// uint8 images are mapped to [-1,1] by v / 127.5 - 1; floating images are
/// clamped to [-1,1]. Idempotent.
torch::Tensor normalize_image(const torch::Tensor& image);

/// [-1,1] float [C,H,W] -> 8-bit range doubles, no rounding.
torch::Tensor denormalize_to_8bit(const torch::Tensor& image);

/// Immutable paired dataset. Folder-backed entries are decoded lazily.
class PairedDataset {
 public:
  PairedDataset() = default;

  static PairedDataset from_samples(std::vector<PairedSample> samples,
                                    std::optional<ToyDomainSpec> toy = std::nullopt);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  PairedSample get(std::size_t index) const;
  const std::string& name(std::size_t index) const { return entries_.at(index).name; }

  bool synthetic() const { return toy_.has_value(); }
  const std::optional<ToyDomainSpec>& toy_spec() const { return toy_; }

  /// Names listed in {root}/train.txt or test.txt, when present.
  const std::vector<std::size_t>& train_indices() const { return train_; }
  const std::vector<std::size_t>& test_indices() const { return test_; }
  void set_split(std::vector<std::size_t> train, std::vector<std::size_t> test);

  int image_size() const { return image_size_; }

  friend PairedDataset load_paired_folder(const std::filesystem::path&,
                                          const std::filesystem::path&, int);
  friend PairedDataset load_dataset_root(const std::filesystem::path&, int);

 private:
  struct Entry {
    std::string name;
    std::filesystem::path path_x;
    std::filesystem::path path_y;
    std::optional<PairedSample> sample;
    std::optional<ToyMeta> meta;
  };

  std::vector<Entry> entries_;
  std::optional<ToyDomainSpec> toy_;
  std::vector<std::size_t> train_;
  std::vector<std::size_t> test_;
  int image_size_ = 0;
};

/// In-memory toy dataset with one sample per attribute state and a seeded
/// train/test split.
PairedDataset make_toy_dataset(const ToyDomainSpec& spec, double test_fraction = 0.2);

/// Pairs {path_x}/{name}.png with {path_y}/{name}.png, sorted by name, resized to
/// size x size. Missing folders are treated as empty; a name present on only one
/// side raises InvalidArgument naming it.
PairedDataset load_paired_folder(const std::filesystem::path& path_x,
                                 const std::filesystem::path& path_y, int size);

/// Loads {root}/x, {root}/y, and when present {root}/toy.txt, meta.jsonl,
/// train.txt and test.txt written by the synth command.
PairedDataset load_dataset_root(const std::filesystem::path& root, int size = 0);

/// Deterministic split: a seeded Fisher-Yates permutation of [0, n).
std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double test_fraction, std::uint64_t seed);

struct Batch {
  torch::Tensor x;  // [N,C,H,W]
  torch::Tensor y;
};

Batch make_batch(const PairedDataset& data, const std::vector<std::size_t>& indices);

/// Writes PNGs under {root}/x and {root}/y plus toy.txt, meta.jsonl, train.txt, test.txt.
void write_toy_dataset(const PairedDataset& data, const std::filesystem::path& root);

void write_png(const torch::Tensor& image, const std::filesystem::path& path);
torch::Tensor read_png(const std::filesystem::path& path, int size);

std::string toy_spec_to_text(const ToyDomainSpec& spec);
ToyDomainSpec toy_spec_from_text(std::string_view text);

}  // namespace dino
