#include "dino/networks.hpp"

#include <algorithm>
#include <sstream>

#include "dino/errors.hpp"

namespace dino {

namespace {

constexpr double kInitStd = 0.02;

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw InvalidArgument("UNetSpec: bad boolean for " + std::string(key) + ": " + std::string(v));
}

}  // namespace

int UNetSpec::encoder_width(int layer) const {
  return base_width * std::min(1 << std::min(layer, 3), 8);
}

UNetSpec UNetSpec::image_plan(int in_channels, int out_channels) {
  UNetSpec s;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.base_width = 64;
  s.encoder_layers = 7;
  s.image_size = 256;
  return s;
}

UNetSpec UNetSpec::toy_plan(int in_channels, int out_channels) {
  UNetSpec s;
  s.in_channels = in_channels;
  s.out_channels = out_channels;
  s.base_width = 8;
  s.encoder_layers = 4;
  s.image_size = 32;
  return s;
}

void UNetSpec::validate() const {
  if (in_channels < 1 || out_channels < 1) {
    throw InvalidArgument("UNetSpec: channel counts must be >= 1");
  }
  if (base_width < 1) {
    throw InvalidArgument("UNetSpec: base_width must be >= 1");
  }
  if (encoder_layers < 2) {
    throw InvalidArgument("UNetSpec: need at least 2 encoder layers");
  }
  if (image_size < 1) {
    throw InvalidArgument("UNetSpec: image_size must be >= 1");
  }
  if (!(dropout_p >= 0.0 && dropout_p < 1.0)) {
    throw InvalidArgument("UNetSpec: dropout_p must lie in [0,1)");
  }
  int size = image_size;
  for (int layer = 1; layer < encoder_layers; ++layer) {
    if (size % 2 != 0 || size < 2) {
      throw InvalidArgument("UNetSpec: encoder layer " + std::to_string(layer) +
                            " cannot downsample a " + std::to_string(size) + "x" +
                            std::to_string(size) + " input (image_size " +
                            std::to_string(image_size) + ")");
    }
    size /= 2;
  }
  if (instance_norm && size < 2) {
    throw InvalidArgument("UNetSpec: encoder layer " + std::to_string(encoder_layers - 1) +
                          " produces 1x1 maps, too small for instance normalization");
  }
}

std::string UNetSpec::to_text() const {
  std::ostringstream out;
  out << "in_channels=" << in_channels << '\n'
      << "out_channels=" << out_channels << '\n'
      << "base_width=" << base_width << '\n'
      << "encoder_layers=" << encoder_layers << '\n'
      << "image_size=" << image_size << '\n'
      << "instance_norm=" << (instance_norm ? "true" : "false") << '\n'
      << "dropout=" << (dropout ? "true" : "false") << '\n'
      << "dropout_p=" << dropout_p << '\n'
      << "branch_layer=" << branch_layer << '\n';
  return out.str();
}

UNetSpec UNetSpec::from_text(std::string_view text) {
  UNetSpec s;
  std::istringstream in{std::string(text)};
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw InvalidArgument("UNetSpec: malformed line '" + line + "'");
    }
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 1);
    try {
      if (key == "in_channels") s.in_channels = std::stoi(value);
      else if (key == "out_channels") s.out_channels = std::stoi(value);
      else if (key == "base_width") s.base_width = std::stoi(value);
      else if (key == "encoder_layers") s.encoder_layers = std::stoi(value);
      else if (key == "image_size") s.image_size = std::stoi(value);
      else if (key == "instance_norm") s.instance_norm = parse_bool(key, value);
      else if (key == "dropout") s.dropout = parse_bool(key, value);
      else if (key == "dropout_p") s.dropout_p = std::stod(value);
      else if (key == "branch_layer") s.branch_layer = std::stoi(value);
      else throw InvalidArgument("UNetSpec: unknown key '" + key + "'");
    } catch (const std::logic_error& e) {
      if (dynamic_cast<const InvalidArgument*>(&e)) throw;
      throw InvalidArgument("UNetSpec: bad value for " + key + ": " + value);
    }
  }
  return s;
}

std::string_view to_string(Stream s) {
  switch (s) {
    case Stream::standard: return "standard";
    case Stream::disc: return "disc";
    case Stream::gen: return "gen";
  }
  return "?";
}

namespace detail {

EncoderLayerImpl::EncoderLayerImpl(int in, int out, bool downsample, bool norm) {
  auto opts = downsample ? torch::nn::Conv2dOptions(in, out, 4).stride(2).padding(1)
                         : torch::nn::Conv2dOptions(in, out, 3).stride(1).padding(1);
  conv_ = register_module("conv", torch::nn::Conv2d(opts));
  if (norm) {
    norm_ = register_module(
        "norm", torch::nn::InstanceNorm2d(torch::nn::InstanceNorm2dOptions(out).affine(true)));
  }
}

torch::Tensor EncoderLayerImpl::forward(const torch::Tensor& x) {
  auto h = conv_->forward(x);
  if (norm_) h = norm_->forward(h);
  return torch::leaky_relu(h, 0.2);
}

DecoderLayerImpl::DecoderLayerImpl(const Options& opts) : opts_(opts) {
  conv_ = register_module(
      "conv", torch::nn::Conv2d(torch::nn::Conv2dOptions(opts.in, opts.out, 3).padding(1)));
  if (opts.norm && !opts.output) {
    norm_ = register_module("norm", torch::nn::InstanceNorm2d(
                                        torch::nn::InstanceNorm2dOptions(opts.out).affine(true)));
  }
  if (opts.dropout && !opts.output) {
    dropout_ = register_module("dropout", torch::nn::Dropout(opts.dropout_p));
  }
}

torch::Tensor DecoderLayerImpl::forward(const torch::Tensor& h,
                                        const std::vector<torch::Tensor>& skips) {
  torch::Tensor in = h;
  if (opts_.skip_index >= 0) {
    auto up = torch::upsample_nearest2d(h, std::vector<int64_t>{h.size(2) * 2, h.size(3) * 2});
    in = torch::cat({up, skips.at(static_cast<std::size_t>(opts_.skip_index))}, 1);
  }
  auto out = conv_->forward(in);
  if (opts_.output) return torch::tanh(out);
  if (norm_) out = norm_->forward(out);
  out = torch::relu(out);
  if (dropout_) out = dropout_->forward(out);
  return out;
}

}  // namespace detail

namespace {

detail::DecoderLayer make_decoder_layer(const UNetSpec& spec, int layer /* 1-based */) {
  const int block = (layer - 1) / 2;
  const bool first_in_block = (layer - 1) % 2 == 0;
  const int skip = spec.encoder_layers - 2 - block;
  const int width = spec.encoder_width(skip);
  const bool last = layer == spec.decoder_layers();

  detail::DecoderLayerImpl::Options opts;
  if (first_in_block) {
    const int below = block == 0 ? spec.encoder_width(spec.encoder_layers - 1)
                                 : spec.encoder_width(skip + 1);
    opts.in = below + width;
    opts.skip_index = skip;
  } else {
    opts.in = width;
  }
  opts.out = last ? spec.out_channels : width;
  opts.norm = spec.instance_norm;
  opts.output = last;
  opts.dropout = spec.dropout && first_in_block;
  opts.dropout_p = spec.dropout_p;
  return detail::DecoderLayer(opts);
}

}  // namespace

TranslatorImpl::TranslatorImpl(const UNetSpec& spec, bool branched, std::uint64_t seed)
    : spec_(spec), branched_(branched) {
  spec_.validate();
  const int decoder_layers = spec_.decoder_layers();
  if (branched_ && (spec_.branch_layer < 1 || spec_.branch_layer >= decoder_layers)) {
    throw InvalidArgument("branch_layer must lie in [1, " + std::to_string(decoder_layers - 1) +
                          "], got " + std::to_string(spec_.branch_layer));
  }

  encoder_ = register_module("encoder", torch::nn::ModuleList());
  trunk_ = register_module("trunk", torch::nn::ModuleList());
  disc_head_ = register_module("disc_head", torch::nn::ModuleList());
  gen_head_ = register_module("gen_head", torch::nn::ModuleList());

  for (int i = 0; i < spec_.encoder_layers; ++i) {
    const int in = i == 0 ? spec_.in_channels : spec_.encoder_width(i - 1);
    // First layer stays unnormalized, as in the usual pix2pix encoder.
    encoder_->push_back(
        detail::EncoderLayer(in, spec_.encoder_width(i), i > 0, spec_.instance_norm && i > 0));
  }
  const int shared = branched_ ? spec_.branch_layer : decoder_layers;
  for (int layer = 1; layer <= decoder_layers; ++layer) {
    if (layer <= shared) {
      trunk_->push_back(make_decoder_layer(spec_, layer));
    } else {
      disc_head_->push_back(make_decoder_layer(spec_, layer));
      gen_head_->push_back(make_decoder_layer(spec_, layer));
    }
  }
  reset_parameters(seed);
}

void TranslatorImpl::reset_parameters(std::uint64_t seed) {
  torch::NoGradGuard no_grad;
  auto gen = at::detail::createCPUGenerator(seed);
  for (auto& item : named_parameters()) {
    const std::string& name = item.key();
    auto& p = item.value();
    const bool is_norm = name.find(".norm.") != std::string::npos;
    const bool is_bias = name.size() >= 4 && name.compare(name.size() - 4, 4, "bias") == 0;
    if (is_bias) {
      p.zero_();
    } else if (is_norm) {
      p.normal_(1.0, kInitStd, gen);
    } else {
      p.normal_(0.0, kInitStd, gen);
    }
  }
}

void TranslatorImpl::check_input(const torch::Tensor& x) const {
  if (x.dim() != 4 || x.size(1) != spec_.in_channels || x.size(2) != spec_.image_size ||
      x.size(3) != spec_.image_size) {
    std::ostringstream msg;
    msg << "translator expects [N," << spec_.in_channels << "," << spec_.image_size << ","
        << spec_.image_size << "] input, got " << x.sizes();
    throw InvalidArgument(msg.str());
  }
}

std::vector<torch::Tensor> TranslatorImpl::encode(const torch::Tensor& x) {
  std::vector<torch::Tensor> outs;
  outs.reserve(encoder_->size());
  torch::Tensor h = x;
  for (const auto& m : *encoder_) {
    h = m->as<detail::EncoderLayerImpl>()->forward(h);
    outs.push_back(h);
  }
  return outs;
}

torch::Tensor TranslatorImpl::run(torch::nn::ModuleList& layers, torch::Tensor h,
                                  const std::vector<torch::Tensor>& skips) {
  for (const auto& m : *layers) {
    h = m->as<detail::DecoderLayerImpl>()->forward(h, skips);
  }
  return h;
}

TranslateTrace TranslatorImpl::trace(const torch::Tensor& x, Stream stream) {
  check_input(x);
  if (!branched_ && stream != Stream::standard) {
    throw UsageError("stream '" + std::string(to_string(stream)) +
                     "' requires a branched translator");
  }
  const auto skips = encode(x);
  TranslateTrace t;
  t.trunk = run(trunk_, skips.back(), skips);
  if (!branched_) {
    t.output = t.trunk;
  } else if (stream == Stream::disc) {
    t.output = run(disc_head_, t.trunk, skips);
  } else {
    t.output = run(gen_head_, t.trunk, skips);
  }
  return t;
}

torch::Tensor TranslatorImpl::forward(const torch::Tensor& x, Stream stream) {
  return trace(x, stream).output;
}

ParameterGroups TranslatorImpl::parameter_groups() const {
  ParameterGroups g;
  g.encoder = encoder_->parameters();
  g.trunk = trunk_->parameters();
  g.disc_head = disc_head_->parameters();
  g.gen_head = gen_head_->parameters();
  return g;
}

std::int64_t TranslatorImpl::parameter_count() const {
  std::int64_t n = 0;
  for (const auto& p : parameters()) n += p.numel();
  return n;
}

Translator build_unet(const UNetSpec& spec, bool branched, std::uint64_t seed) {
  return Translator(spec, branched, seed);
}

Translator clone_translator(const Translator& net) {
  Translator copy(net->spec(), net->branched(), 0);
  copy_parameters(net, copy);
  copy->train(net->is_training());
  return copy;
}

void copy_parameters(const Translator& src, Translator& dst) {
  if (!(src->spec() == dst->spec()) || src->branched() != dst->branched()) {
    throw InvalidArgument("copy_parameters: translator layouts differ");
  }
  torch::NoGradGuard no_grad;
  auto from = src->named_parameters();
  for (auto& item : dst->named_parameters()) {
    item.value().copy_(from[item.key()]);
  }
  auto from_buffers = src->named_buffers();
  for (auto& item : dst->named_buffers()) {
    item.value().copy_(from_buffers[item.key()]);
  }
}

std::map<std::string, torch::Tensor> snapshot_parameters(const Translator& net) {
  std::map<std::string, torch::Tensor> out;
  for (const auto& item : net->named_parameters()) {
    out.emplace(item.key(), item.value().detach().clone());
  }
  return out;
}

}  // namespace dino
