#include "dino/data.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <random>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dino/errors.hpp"

namespace fs = std::filesystem;

namespace dino {

namespace {

constexpr double kTextureAmplitude = 0.2;
constexpr double kScoreScale = 0.01;
constexpr double kBackgroundLevel = -0.8;
// Label backgrounds sit at -1; photo backgrounds stay at or below -0.6 while
// every palette colour has a channel at or above 0.6.
constexpr double kLabelThreshold = -0.9;
constexpr double kPhotoThreshold = 0.0;

// RGB in [-1,1]; every entry stays inside (-1, 1] after texture modulation.
constexpr std::array<std::array<double, 3>, 8> kPalette{{
    {0.8, -0.6, -0.6},
    {-0.6, 0.8, -0.6},
    {-0.6, -0.6, 0.8},
    {0.8, 0.8, -0.6},
    {0.8, -0.6, 0.8},
    {-0.6, 0.8, 0.8},
    {0.8, 0.8, 0.8},
    {0.1, 0.1, 0.1},
}};

double label_level(int color, int colors) {
  if (colors == 1) return 1.0;
  return -0.5 + 1.5 * static_cast<double>(color) / static_cast<double>(colors - 1);
}

double texture_value(int texture, int r, int c) {
  bool on = false;
  switch (texture) {
    case 0: on = r % 2 == 1; break;
    case 1: on = c % 2 == 1; break;
    case 2: on = (r + c) % 2 == 1; break;
    default: on = (r / 2 + c / 2) % 2 == 1; break;
  }
  return on ? kTextureAmplitude : -kTextureAmplitude;
}

int position_step(const ToyDomainSpec& spec) {
  return (spec.image_size - spec.shape_size()) / spec.grid;
}

int position_offset(const ToyDomainSpec& spec) {
  return (spec.image_size - spec.shape_size() - position_step(spec) * (spec.grid - 1)) / 2;
}

void check_attributes(const ToyDomainSpec& spec, const ToyAttributes& a) {
  auto bad = [](const char* what, int v, int n) {
    throw InvalidArgument(std::string("toy attribute ") + what + "=" + std::to_string(v) +
                          " outside [0," + std::to_string(n) + ")");
  };
  if (a.row < 0 || a.row >= spec.grid) bad("row", a.row, spec.grid);
  if (a.col < 0 || a.col >= spec.grid) bad("col", a.col, spec.grid);
  if (a.color < 0 || a.color >= spec.colors) bad("color", a.color, spec.colors);
  if (a.shape < 0 || a.shape >= spec.shapes) bad("shape", a.shape, spec.shapes);
}

std::vector<double> to_doubles(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU, torch::kDouble).contiguous();
  return {c.data_ptr<double>(), c.data_ptr<double>() + c.numel()};
}

std::string sample_name(int index) {
  std::ostringstream out;
  out << 's';
  out.width(5);
  out.fill('0');
  out << index;
  return out.str();
}

std::vector<std::string> read_lines(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError(path.string(), "cannot open for reading");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError(path.string(), "cannot open for writing");
  out << text;
  if (!out) throw IoError(path.string(), "write failed");
}

std::vector<std::string> png_stems(const fs::path& dir) {
  std::vector<std::string> names;
  if (!fs::exists(dir)) return names;
  if (!fs::is_directory(dir)) throw IoError(dir.string(), "not a directory");
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ".png") {
      names.push_back(entry.path().stem().string());
    }
  }
  std::sort(names.begin(), names.end());
  return names;
}

}  // namespace

std::string_view to_string(ToyDirection d) {
  switch (d) {
    case ToyDirection::informative_target: return "informative_target";
    case ToyDirection::informative_source: return "informative_source";
    case ToyDirection::involutive: return "involutive";
  }
  return "?";
}

ToyDirection toy_direction_from_string(std::string_view s) {
  if (s == "informative_target") return ToyDirection::informative_target;
  if (s == "informative_source") return ToyDirection::informative_source;
  if (s == "involutive") return ToyDirection::involutive;
  throw UsageError("unknown toy direction '" + std::string(s) +
                   "' (allowed: informative_target, informative_source, involutive)");
}

ToyModality ToyDomainSpec::modality(Side side) const {
  switch (direction) {
    case ToyDirection::informative_target:
      return side == Side::source ? ToyModality::label_map : ToyModality::photo;
    case ToyDirection::informative_source:
      return side == Side::source ? ToyModality::photo : ToyModality::label_map;
    case ToyDirection::involutive:
      return side == Side::source ? ToyModality::photo : ToyModality::negated_photo;
  }
  return ToyModality::photo;
}

int ToyDomainSpec::channels(Side side) const {
  return modality(side) == ToyModality::label_map ? 1 : 3;
}

void ToyDomainSpec::validate() const {
  if (grid < 1 || colors < 1 || shapes < 1 || textures < 1) {
    throw UsageError("toy attribute space is empty (grid, colors, shapes and textures must be >= 1)");
  }
  if (colors > static_cast<int>(kPalette.size())) {
    throw InvalidArgument("toy palette holds at most " + std::to_string(kPalette.size()) +
                          " colors");
  }
  if (shapes > 2) throw InvalidArgument("toy shape set holds at most 2 shapes");
  if (textures > 4) throw InvalidArgument("toy textures hold at most 4 variants");
  if (image_size < 8) throw InvalidArgument("toy image_size must be >= 8");
  if (position_step(*this) < 1) {
    throw InvalidArgument("toy grid " + std::to_string(grid) + " does not fit a " +
                          std::to_string(image_size) + "px image");
  }
}

int ToyAttributes::index(const ToyDomainSpec& spec) const {
  return ((row * spec.grid + col) * spec.colors + color) * spec.shapes + shape;
}

ToyAttributes ToyAttributes::from_index(int index, const ToyDomainSpec& spec) {
  if (index < 0 || index >= spec.state_count()) {
    throw InvalidArgument("toy state index " + std::to_string(index) + " out of range");
  }
  ToyAttributes a;
  a.shape = index % spec.shapes;
  index /= spec.shapes;
  a.color = index % spec.colors;
  index /= spec.colors;
  a.col = index % spec.grid;
  a.row = index / spec.grid;
  return a;
}

int toy_texture_for(const ToyDomainSpec& spec, const ToyAttributes& attributes) {
  std::seed_seq seq{static_cast<std::uint32_t>(spec.seed),
                    static_cast<std::uint32_t>(spec.seed >> 32),
                    static_cast<std::uint32_t>(attributes.index(spec))};
  std::mt19937 rng(seq);
  return static_cast<int>(rng() % static_cast<std::uint32_t>(spec.textures));
}

torch::Tensor render_toy_mask(const ToyDomainSpec& spec, const ToyAttributes& a) {
  spec.validate();
  check_attributes(spec, a);
  const int S = spec.image_size;
  const int s = spec.shape_size();
  const int top = position_offset(spec) + a.row * position_step(spec);
  const int left = position_offset(spec) + a.col * position_step(spec);
  auto mask = torch::zeros({S, S}, torch::kBool);
  auto acc = mask.accessor<bool, 2>();
  const int arm_lo = s / 4;
  const int arm_hi = arm_lo + s / 2;
  for (int r = 0; r < s; ++r) {
    for (int c = 0; c < s; ++c) {
      const bool inside = a.shape == 0 || (r >= arm_lo && r < arm_hi) || (c >= arm_lo && c < arm_hi);
      if (inside) acc[top + r][left + c] = true;
    }
  }
  return mask;
}

torch::Tensor render_toy_image(const ToyDomainSpec& spec, const ToyAttributes& a, int texture,
                               ToyModality modality) {
  const auto mask = render_toy_mask(spec, a);
  if (texture < 0 || texture >= spec.textures) {
    throw InvalidArgument("toy texture " + std::to_string(texture) + " out of range");
  }
  const int S = spec.image_size;
  const auto m = mask.accessor<bool, 2>();
  if (modality == ToyModality::label_map) {
    auto img = torch::full({1, S, S}, -1.0f);
    auto acc = img.accessor<float, 3>();
    const auto level = static_cast<float>(label_level(a.color, spec.colors));
    for (int r = 0; r < S; ++r)
      for (int c = 0; c < S; ++c)
        if (m[r][c]) acc[0][r][c] = level;
    return img;
  }
  // The texture covers the background as well, so it is a photo-wide detail
  // that the label map cannot predict.
  auto img = torch::empty({3, S, S});
  auto acc = img.accessor<float, 3>();
  const auto& rgb = kPalette[static_cast<std::size_t>(a.color)];
  for (int r = 0; r < S; ++r) {
    for (int c = 0; c < S; ++c) {
      if (!m[r][c]) {
        const auto bg = static_cast<float>(kBackgroundLevel + texture_value(texture, r, c));
        for (int ch = 0; ch < 3; ++ch) acc[ch][r][c] = bg;
        continue;
      }
      for (int ch = 0; ch < 3; ++ch) {
        const double v = std::min(1.0, rgb[static_cast<std::size_t>(ch)] + texture_value(texture, r, c));
        acc[ch][r][c] = static_cast<float>(v);
      }
    }
  }
  return modality == ToyModality::negated_photo ? -img : img;
}

PairedSample generate_toy_pair(const ToyDomainSpec& spec, const ToyAttributes& attributes) {
  spec.validate();
  check_attributes(spec, attributes);
  const int texture = toy_texture_for(spec, attributes);
  PairedSample s;
  s.x = render_toy_image(spec, attributes, texture, spec.modality(Side::source));
  s.y = render_toy_image(spec, attributes, texture, spec.modality(Side::target));
  s.name = sample_name(attributes.index(spec));
  s.meta = ToyMeta{attributes, texture};
  return s;
}

torch::Tensor toy_silhouette(const torch::Tensor& image, ToyModality modality) {
  switch (modality) {
    case ToyModality::label_map: return (image > kLabelThreshold).any(0);
    case ToyModality::photo: return (image > kPhotoThreshold).any(0);
    case ToyModality::negated_photo: return (image < -kPhotoThreshold).any(0);
  }
  return {};
}

ToyOracle::ToyOracle(const ToyDomainSpec& spec, Side side) : spec_(spec), side_(side) {
  spec_.validate();
  const auto modality = spec_.modality(side_);
  const int variants = modality == ToyModality::label_map ? 1 : spec_.textures;
  numel_ = static_cast<std::int64_t>(spec_.channels(side_)) * spec_.image_size * spec_.image_size;
  templates_.reserve(static_cast<std::size_t>(spec_.state_count() * variants));
  for (int state = 0; state < spec_.state_count(); ++state) {
    const auto a = ToyAttributes::from_index(state, spec_);
    for (int t = 0; t < variants; ++t) {
      templates_.push_back({state, to_doubles(render_toy_image(spec_, a, t, modality))});
    }
  }
}

DecodeResult ToyOracle::decode(const torch::Tensor& image) const {
  const int C = spec_.channels(side_);
  const int S = spec_.image_size;
  auto img = image.dim() == 4 && image.size(0) == 1 ? image.squeeze(0) : image;
  if (img.dim() != 3 || img.size(0) != C || img.size(1) != S || img.size(2) != S) {
    std::ostringstream msg;
    msg << "oracle_decode expects a [" << C << "," << S << "," << S << "] image, got "
        << image.sizes();
    throw InvalidArgument(msg.str());
  }
  const auto pixels = to_doubles(img);
  double best = std::numeric_limits<double>::infinity();
  int best_state = 0;
  for (const auto& t : templates_) {
    double sse = 0.0;
    const double* a = pixels.data();
    const double* b = t.pixels.data();
    std::int64_t i = 0;
    for (; i < numel_; ++i) {
      const double d = a[i] - b[i];
      sse += d * d;
      // Early abandon keeps exact ties intact: only strictly worse sums stop.
      if (sse > best) break;
    }
    if (i == numel_ && (sse < best || (sse == best && t.state < best_state))) {
      best = sse;
      best_state = t.state;
    }
  }
  DecodeResult r;
  r.attributes = ToyAttributes::from_index(best_state, spec_);
  r.mse = best / static_cast<double>(numel_);
  r.score = std::exp(-r.mse / kScoreScale);
  return r;
}

DecodeResult oracle_decode(const torch::Tensor& image, const ToyDomainSpec& spec, Side side) {
  return ToyOracle(spec, side).decode(image);
}

torch::Tensor normalize_image(const torch::Tensor& image) {
  if (image.scalar_type() == torch::kByte) {
    return image.to(torch::kFloat) / 127.5f - 1.0f;
  }
  return image.to(torch::kFloat).clamp(-1.0, 1.0);
}

torch::Tensor denormalize_to_8bit(const torch::Tensor& image) {
  return (image.detach().to(torch::kDouble).clamp(-1.0, 1.0) + 1.0) * 127.5;
}

PairedDataset PairedDataset::from_samples(std::vector<PairedSample> samples,
                                          std::optional<ToyDomainSpec> toy) {
  PairedDataset d;
  d.toy_ = std::move(toy);
  for (auto& s : samples) {
    if (d.image_size_ == 0) d.image_size_ = static_cast<int>(s.x.size(-1));
    Entry e;
    e.name = s.name;
    e.meta = s.meta;
    e.sample = std::move(s);
    d.entries_.push_back(std::move(e));
  }
  std::vector<std::size_t> all(d.entries_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  d.train_ = all;
  d.test_ = all;
  return d;
}

PairedSample PairedDataset::get(std::size_t index) const {
  const Entry& e = entries_.at(index);
  if (e.sample) return *e.sample;
  PairedSample s;
  s.x = read_png(e.path_x, image_size_);
  s.y = read_png(e.path_y, image_size_);
  s.name = e.name;
  s.meta = e.meta;
  return s;
}

void PairedDataset::set_split(std::vector<std::size_t> train, std::vector<std::size_t> test) {
  for (auto i : train)
    if (i >= entries_.size()) throw InvalidArgument("split index out of range");
  for (auto i : test)
    if (i >= entries_.size()) throw InvalidArgument("split index out of range");
  train_ = std::move(train);
  test_ = std::move(test);
}

std::pair<std::vector<std::size_t>, std::vector<std::size_t>> split_indices(
    std::size_t n, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction >= 0.0 && test_fraction <= 1.0)) {
    throw InvalidArgument("test_fraction must lie in [0,1]");
  }
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    std::swap(perm[i - 1], perm[rng() % i]);
  }
  const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(n)));
  std::vector<std::size_t> test(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_test));
  std::vector<std::size_t> train(perm.begin() + static_cast<std::ptrdiff_t>(n_test), perm.end());
  std::sort(test.begin(), test.end());
  std::sort(train.begin(), train.end());
  return {train, test};
}

PairedDataset make_toy_dataset(const ToyDomainSpec& spec, double test_fraction) {
  spec.validate();
  std::vector<PairedSample> samples;
  samples.reserve(static_cast<std::size_t>(spec.state_count()));
  for (int i = 0; i < spec.state_count(); ++i) {
    samples.push_back(generate_toy_pair(spec, ToyAttributes::from_index(i, spec)));
  }
  auto d = PairedDataset::from_samples(std::move(samples), spec);
  auto [train, test] = split_indices(d.size(), test_fraction, spec.seed);
  d.set_split(std::move(train), std::move(test));
  return d;
}

PairedDataset load_paired_folder(const fs::path& path_x, const fs::path& path_y, int size) {
  const auto xs = png_stems(path_x);
  const auto ys = png_stems(path_y);
  std::vector<std::string> orphans;
  std::set_symmetric_difference(xs.begin(), xs.end(), ys.begin(), ys.end(),
                                std::back_inserter(orphans));
  if (!orphans.empty()) {
    const bool in_x = std::binary_search(xs.begin(), xs.end(), orphans.front());
    throw InvalidArgument("unmatched file '" + orphans.front() + ".png': present in " +
                          (in_x ? path_x : path_y).string() + " but not in " +
                          (in_x ? path_y : path_x).string());
  }
  PairedDataset d;
  d.image_size_ = size;
  for (const auto& name : xs) {
    PairedDataset::Entry e;
    e.name = name;
    e.path_x = path_x / (name + ".png");
    e.path_y = path_y / (name + ".png");
    d.entries_.push_back(std::move(e));
  }
  if (d.image_size_ <= 0 && !d.entries_.empty()) {
    d.image_size_ = static_cast<int>(read_png(d.entries_.front().path_x, 0).size(-1));
  }
  std::vector<std::size_t> all(d.entries_.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  d.train_ = all;
  d.test_ = all;
  return d;
}

std::string toy_spec_to_text(const ToyDomainSpec& spec) {
  std::ostringstream out;
  out << "image_size=" << spec.image_size << '\n'
      << "grid=" << spec.grid << '\n'
      << "colors=" << spec.colors << '\n'
      << "shapes=" << spec.shapes << '\n'
      << "textures=" << spec.textures << '\n'
      << "direction=" << to_string(spec.direction) << '\n'
      << "seed=" << spec.seed << '\n';
  return out.str();
}

ToyDomainSpec toy_spec_from_text(std::string_view text) {
  ToyDomainSpec s;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw InvalidArgument("toy spec: malformed line '" + line + "'");
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    if (key == "image_size") s.image_size = std::stoi(value);
    else if (key == "grid") s.grid = std::stoi(value);
    else if (key == "colors") s.colors = std::stoi(value);
    else if (key == "shapes") s.shapes = std::stoi(value);
    else if (key == "textures") s.textures = std::stoi(value);
    else if (key == "direction") s.direction = toy_direction_from_string(value);
    else if (key == "seed") s.seed = std::stoull(value);
    else throw InvalidArgument("toy spec: unknown key '" + key + "'");
  }
  return s;
}

PairedDataset load_dataset_root(const fs::path& root, int size) {
  if (!fs::is_directory(root)) throw IoError(root.string(), "dataset root not found");
  std::optional<ToyDomainSpec> toy;
  if (fs::exists(root / "toy.txt")) {
    std::ifstream in(root / "toy.txt");
    std::stringstream buf;
    buf << in.rdbuf();
    toy = toy_spec_from_text(buf.str());
    if (size <= 0) size = toy->image_size;
  }
  auto d = load_paired_folder(root / "x", root / "y", size);
  d.toy_ = toy;

  std::map<std::string, std::size_t> by_name;
  for (std::size_t i = 0; i < d.entries_.size(); ++i) by_name[d.entries_[i].name] = i;

  if (fs::exists(root / "meta.jsonl")) {
    std::size_t line_no = 0;
    for (const auto& line : read_lines(root / "meta.jsonl")) {
      ++line_no;
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(line);
      } catch (const nlohmann::json::exception& e) {
        throw IoError((root / "meta.jsonl").string(),
                      "line " + std::to_string(line_no) + ": " + e.what());
      }
      const auto it = by_name.find(j.at("name").get<std::string>());
      if (it == by_name.end()) continue;
      ToyMeta m;
      m.attributes.row = j.at("row").get<int>();
      m.attributes.col = j.at("col").get<int>();
      m.attributes.color = j.at("color").get<int>();
      m.attributes.shape = j.at("shape").get<int>();
      m.texture = j.value("texture", 0);
      d.entries_[it->second].meta = m;
    }
  }

  auto read_split = [&](const char* file) {
    std::vector<std::size_t> idx;
    for (const auto& name : read_lines(root / file)) {
      const auto it = by_name.find(name);
      if (it == by_name.end()) {
        throw InvalidArgument(std::string(file) + " names unknown sample '" + name + "'");
      }
      idx.push_back(it->second);
    }
    return idx;
  };
  if (fs::exists(root / "train.txt") && fs::exists(root / "test.txt")) {
    auto train = read_split("train.txt");
    auto test = read_split("test.txt");
    d.set_split(std::move(train), std::move(test));
  }
  return d;
}

Batch make_batch(const PairedDataset& data, const std::vector<std::size_t>& indices) {
  if (indices.empty()) throw InvalidArgument("make_batch: empty index list");
  std::vector<torch::Tensor> xs;
  std::vector<torch::Tensor> ys;
  xs.reserve(indices.size());
  ys.reserve(indices.size());
  for (auto i : indices) {
    auto s = data.get(i);
    xs.push_back(s.x);
    ys.push_back(s.y);
  }
  return {torch::stack(xs), torch::stack(ys)};
}

void write_png(const torch::Tensor& image, const fs::path& path) {
  auto img = image.dim() == 4 ? image.squeeze(0) : image;
  if (img.dim() != 3 || (img.size(0) != 1 && img.size(0) != 3)) {
    throw InvalidArgument("write_png expects a [1|3,H,W] image");
  }
  auto u8 = denormalize_to_8bit(img).round().to(torch::kByte).permute({1, 2, 0}).contiguous();
  const int H = static_cast<int>(u8.size(0));
  const int W = static_cast<int>(u8.size(1));
  const int C = static_cast<int>(u8.size(2));
  cv::Mat mat(H, W, C == 1 ? CV_8UC1 : CV_8UC3, u8.data_ptr<std::uint8_t>());
  cv::Mat out;
  if (C == 3) {
    cv::cvtColor(mat, out, cv::COLOR_RGB2BGR);
  } else {
    out = mat;
  }
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  // Fixed compression level so reruns are byte-identical.
  if (!cv::imwrite(path.string(), out, {cv::IMWRITE_PNG_COMPRESSION, 6})) {
    throw IoError(path.string(), "failed to write PNG");
  }
}

torch::Tensor read_png(const fs::path& path, int size) {
  cv::Mat mat = cv::imread(path.string(), cv::IMREAD_UNCHANGED);
  if (mat.empty()) throw IoError(path.string(), "failed to decode image");
  if (mat.depth() != CV_8U) {
    mat.convertTo(mat, CV_8U, mat.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
  }
  if (mat.channels() == 4) {
    cv::cvtColor(mat, mat, cv::COLOR_BGRA2RGB);
  } else if (mat.channels() == 3) {
    cv::cvtColor(mat, mat, cv::COLOR_BGR2RGB);
  }
  if (size > 0 && (mat.rows != size || mat.cols != size)) {
    cv::Mat resized;
    cv::resize(mat, resized, cv::Size(size, size), 0, 0, cv::INTER_AREA);
    mat = resized;
  }
  if (!mat.isContinuous()) mat = mat.clone();
  auto t = torch::from_blob(mat.data, {mat.rows, mat.cols, mat.channels()}, torch::kByte)
               .permute({2, 0, 1})
               .clone();
  return normalize_image(t);
}

void write_toy_dataset(const PairedDataset& data, const fs::path& root) {
  if (!data.synthetic()) throw UsageError("write_toy_dataset: dataset is not synthetic");
  std::error_code ec;
  fs::create_directories(root / "x", ec);
  fs::create_directories(root / "y", ec);
  if (ec) throw IoError(root.string(), "cannot create dataset directories: " + ec.message());

  std::ostringstream meta;
  for (std::size_t i = 0; i < data.size(); ++i) {
    const auto s = data.get(i);
    write_png(s.x, root / "x" / (s.name + ".png"));
    write_png(s.y, root / "y" / (s.name + ".png"));
    nlohmann::json j;
    j["name"] = s.name;
    if (s.meta) {
      j["row"] = s.meta->attributes.row;
      j["col"] = s.meta->attributes.col;
      j["color"] = s.meta->attributes.color;
      j["shape"] = s.meta->attributes.shape;
      j["texture"] = s.meta->texture;
    }
    meta << j.dump() << '\n';
  }
  write_text(root / "meta.jsonl", meta.str());
  write_text(root / "toy.txt", toy_spec_to_text(*data.toy_spec()));
  auto names = [&](const std::vector<std::size_t>& idx) {
    std::string out;
    for (auto i : idx) out += data.name(i) + '\n';
    return out;
  };
  write_text(root / "train.txt", names(data.train_indices()));
  write_text(root / "test.txt", names(data.test_indices()));
}

}  // namespace dino
