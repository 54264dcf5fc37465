#include "dino/trainer.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <random>
#include <sstream>

#include "dino/core_math.hpp"
#include "dino/errors.hpp"
#include "dino/metrics.hpp"

namespace fs = std::filesystem;

namespace dino {

namespace {

/// Sets requires_grad(false) on a parameter set for the guard's lifetime.
class FreezeGuard {
 public:
  explicit FreezeGuard(std::vector<torch::Tensor> params) : params_(std::move(params)) {
    for (auto& p : params_) p.set_requires_grad(false);
  }
  FreezeGuard(const FreezeGuard&) = delete;
  FreezeGuard& operator=(const FreezeGuard&) = delete;
  ~FreezeGuard() {
    for (auto& p : params_) p.set_requires_grad(true);
  }

 private:
  std::vector<torch::Tensor> params_;
};

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

double parse_double(std::string_view key, std::string_view v) {
  double out = 0.0;
  const auto* first = v.data();
  const auto* last = v.data() + v.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  if (ec != std::errc() || ptr != last) {
    throw UsageError("config key '" + std::string(key) + "': expected a number, got '" +
                     std::string(v) + "'");
  }
  return out;
}

std::int64_t parse_int(std::string_view key, std::string_view v) {
  std::int64_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw UsageError("config key '" + std::string(key) + "': expected an integer, got '" +
                     std::string(v) + "'");
  }
  return out;
}

bool parse_bool(std::string_view key, std::string_view v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw UsageError("config key '" + std::string(key) + "': expected true or false, got '" +
                   std::string(v) + "'");
}

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

void check_loss(double value, const char* name, const StepReport& partial) {
  if (!std::isfinite(value) || std::abs(value) > kDivergenceThreshold) {
    throw DivergedTraining(std::string("training diverged at step ") +
                               std::to_string(partial.step) + ": " + name + " = " +
                               format_double(value),
                           partial);
  }
}

std::vector<torch::Tensor> concat(std::initializer_list<const std::vector<torch::Tensor>*> parts) {
  std::vector<torch::Tensor> out;
  for (const auto* p : parts) out.insert(out.end(), p->begin(), p->end());
  return out;
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

void reseed(std::uint64_t seed, std::int64_t step) {
  torch::manual_seed(seed * 1000003ULL + static_cast<std::uint64_t>(step));
}

}  // namespace

std::string_view to_string(TrainMode m) {
  switch (m) {
    case TrainMode::unidirectional: return "unidirectional";
    case TrainMode::bidirectional: return "bidirectional";
    case TrainMode::began_variant: return "began_variant";
  }
  return "?";
}

TrainMode train_mode_from_string(std::string_view s) {
  if (s == "unidirectional") return TrainMode::unidirectional;
  if (s == "bidirectional") return TrainMode::bidirectional;
  if (s == "began_variant") return TrainMode::began_variant;
  throw UsageError("config key 'mode': unknown value '" + std::string(s) +
                   "' (allowed: unidirectional, bidirectional, began_variant)");
}

// ---------------------------------------------------------------------------
// TrainConfig

const std::vector<std::string>& TrainConfig::keys() {
  static const std::vector<std::string> k{
      "mode",          "margin",          "gamma",        "gamma_g",       "gain",
      "gain_f",        "l1_weight",       "bidirectional_l1", "learning_rate", "adam_beta1",
      "adam_beta2",    "batch_size",      "steps",        "seed",          "branch_layer",
      "dropout",       "base_width",      "encoder_layers", "checkpoint_every", "data",
      "run_id"};
  return k;
}

void TrainConfig::set(std::string_view key, std::string_view value) {
  value = trim(value);
  if (key == "mode") mode = train_mode_from_string(value);
  else if (key == "margin") margin = parse_double(key, value);
  else if (key == "gamma") gamma = parse_double(key, value);
  else if (key == "gamma_g") gamma_g = parse_double(key, value);
  else if (key == "gain") gain = parse_double(key, value);
  else if (key == "gain_f") gain_f = parse_double(key, value);
  else if (key == "l1_weight") l1_weight = parse_double(key, value);
  else if (key == "bidirectional_l1") bidirectional_l1 = parse_bool(key, value);
  else if (key == "learning_rate") learning_rate = parse_double(key, value);
  else if (key == "adam_beta1") adam_beta1 = parse_double(key, value);
  else if (key == "adam_beta2") adam_beta2 = parse_double(key, value);
  else if (key == "batch_size") batch_size = static_cast<int>(parse_int(key, value));
  else if (key == "steps") steps = parse_int(key, value);
  else if (key == "seed") seed = static_cast<std::uint64_t>(parse_int(key, value));
  else if (key == "branch_layer") branch_layer = static_cast<int>(parse_int(key, value));
  else if (key == "dropout") dropout = parse_bool(key, value);
  else if (key == "base_width") base_width = static_cast<int>(parse_int(key, value));
  else if (key == "encoder_layers") encoder_layers = static_cast<int>(parse_int(key, value));
  else if (key == "checkpoint_every") checkpoint_every = parse_int(key, value);
  else if (key == "data") data = std::string(value);
  else if (key == "run_id") run_id = std::string(value);
  else {
    std::string allowed;
    for (const auto& k : keys()) allowed += (allowed.empty() ? "" : ", ") + k;
    throw UsageError("unknown config key '" + std::string(key) + "' (allowed: " + allowed + ")");
  }
}

void TrainConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& rule) {
    throw InvalidArgument("config key '" + key + "': " + rule);
  };
  if (!(margin >= 0.0) || !std::isfinite(margin)) fail("margin", "must be >= 0");
  if (!(gamma >= 0.0 && gamma < 1.0)) fail("gamma", "must lie in [0,1)");
  if (!(gamma_g >= 0.0 && gamma_g < 1.0)) fail("gamma_g", "must lie in [0,1)");
  if (!(gain > 0.0) || !std::isfinite(gain)) fail("gain", "must be > 0");
  if (!(gain_f > 0.0) || !std::isfinite(gain_f)) fail("gain_f", "must be > 0");
  if (!(l1_weight >= 0.0) || !std::isfinite(l1_weight)) fail("l1_weight", "must be >= 0");
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate", "must be > 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1", "must lie in [0,1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2", "must lie in [0,1)");
  if (batch_size < 1) fail("batch_size", "must be >= 1");
  if (steps < 0) fail("steps", "must be >= 0");
  if (checkpoint_every < 1) fail("checkpoint_every", "must be >= 1");
  if (base_width < 1) fail("base_width", "must be >= 1");
  if (encoder_layers < 2) fail("encoder_layers", "must be >= 2");
  if (branch_layer < 1 || branch_layer >= 2 * (encoder_layers - 1)) {
    fail("branch_layer", "must lie in [1, " + std::to_string(2 * (encoder_layers - 1) - 1) + "]");
  }
}

std::string TrainConfig::to_text() const {
  std::ostringstream out;
  out << "mode = " << to_string(mode) << '\n'
      << "margin = " << format_double(margin) << '\n'
      << "gamma = " << format_double(gamma) << '\n'
      << "gamma_g = " << format_double(gamma_g) << '\n'
      << "gain = " << format_double(gain) << '\n'
      << "gain_f = " << format_double(gain_f) << '\n'
      << "l1_weight = " << format_double(l1_weight) << '\n'
      << "bidirectional_l1 = " << (bidirectional_l1 ? "true" : "false") << '\n'
      << "learning_rate = " << format_double(learning_rate) << '\n'
      << "adam_beta1 = " << format_double(adam_beta1) << '\n'
      << "adam_beta2 = " << format_double(adam_beta2) << '\n'
      << "batch_size = " << batch_size << '\n'
      << "steps = " << steps << '\n'
      << "seed = " << seed << '\n'
      << "branch_layer = " << branch_layer << '\n'
      << "dropout = " << (dropout ? "true" : "false") << '\n'
      << "base_width = " << base_width << '\n'
      << "encoder_layers = " << encoder_layers << '\n'
      << "checkpoint_every = " << checkpoint_every << '\n';
  if (!data.empty()) out << "data = " << data << '\n';
  if (!run_id.empty()) out << "run_id = " << run_id << '\n';
  return out.str();
}

TrainConfig TrainConfig::from_text(std::string_view text) {
  TrainConfig cfg;
  std::istringstream in{std::string(text)};
  std::string raw;
  int line_no = 0;
  while (std::getline(in, raw)) {
    ++line_no;
    std::string_view line = raw;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty() || line.front() == '[') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError("config line " + std::to_string(line_no) + ": expected 'key = value'");
    }
    cfg.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return cfg;
}

// ---------------------------------------------------------------------------
// StepReport

bool StepReport::finite() const {
  auto ok = [](double v) { return std::isfinite(v); };
  auto ok_opt = [](const std::optional<double>& v) { return !v || std::isfinite(*v); };
  return ok(e_real) && ok(e_fake) && ok(k) && ok(loss_R) && ok(loss_F) && ok_opt(f_real) &&
         ok_opt(f_fake) && ok_opt(mu);
}

nlohmann::json StepReport::to_json() const {
  nlohmann::json j;
  j["step"] = step;
  j["e_real"] = e_real;
  j["e_fake"] = e_fake;
  j["k"] = k;
  j["residual"] = std::isfinite(residual) ? nlohmann::json(residual) : nlohmann::json();
  j["loss_R"] = loss_R;
  j["loss_F"] = loss_F;
  if (mu) {
    j["mu"] = *mu;
    j["f_real"] = *f_real;
    j["f_fake"] = *f_fake;
  }
  return j;
}

StepReport StepReport::from_json(const nlohmann::json& j) {
  StepReport r;
  r.step = j.at("step").get<std::int64_t>();
  r.e_real = j.at("e_real").get<double>();
  r.e_fake = j.at("e_fake").get<double>();
  r.k = j.at("k").get<double>();
  r.residual = j.at("residual").is_null() ? std::numeric_limits<double>::infinity()
                                          : j.at("residual").get<double>();
  r.loss_R = j.at("loss_R").get<double>();
  r.loss_F = j.at("loss_F").get<double>();
  if (j.contains("mu")) {
    r.mu = j.at("mu").get<double>();
    r.f_real = j.at("f_real").get<double>();
    r.f_fake = j.at("f_fake").get<double>();
  }
  return r;
}

// ---------------------------------------------------------------------------
// Players and steps

Player::Player(Translator n, const TrainConfig& cfg) : net(std::move(n)) {
  optimizer = std::make_unique<torch::optim::Adam>(
      net->parameters(), torch::optim::AdamOptions(cfg.learning_rate)
                             .betas(std::make_tuple(cfg.adam_beta1, cfg.adam_beta2)));
}

Players make_players(const TrainConfig& cfg, int x_channels, int y_channels, int image_size) {
  cfg.validate();
  const bool branched = cfg.mode == TrainMode::bidirectional;
  auto spec_for = [&](int in, int out) {
    UNetSpec s;
    s.in_channels = in;
    s.out_channels = out;
    s.base_width = cfg.base_width;
    s.encoder_layers = cfg.encoder_layers;
    s.image_size = image_size;
    s.dropout = cfg.dropout;
    s.branch_layer = cfg.branch_layer;
    return s;
  };
  Players p;
  p.forward = Player(build_unet(spec_for(x_channels, y_channels), branched, cfg.seed * 2 + 1), cfg);
  p.reverse = Player(build_unet(spec_for(y_channels, x_channels), branched, cfg.seed * 2 + 2), cfg);
  return p;
}

ControllerState initial_k(const TrainConfig& cfg) {
  ControllerState s;
  s.k = 0.0;
  s.gamma = cfg.gamma;
  s.gain = cfg.gain;
  s.direction = cfg.mode == TrainMode::began_variant ? BalanceDirection::began : BalanceDirection::dino;
  return s;
}

ControllerState initial_mu(const TrainConfig& cfg) {
  ControllerState s;
  s.k = 0.0;
  s.gamma = cfg.gamma_g;
  s.gain = cfg.gain_f;
  s.direction = BalanceDirection::dino;
  return s;
}

DiscriminatorResult discriminator_update(Players& p, const Batch& batch, const TrainConfig& cfg,
                                         const ControllerState& ctrl) {
  auto& F = p.forward.net;
  auto& R = p.reverse.net;
  torch::Tensor fake;
  {
    torch::NoGradGuard no_grad;
    fake = F->forward(batch.x);
  }
  p.reverse.optimizer->zero_grad();
  const auto e_real = mse_energy(R->forward(batch.y), batch.x);
  const auto e_fake = mse_energy(R->forward(fake), batch.x);
  const auto loss = cfg.mode == TrainMode::began_variant
                        ? began_discriminator_loss(e_real, e_fake, ctrl.k)
                        : reverse_loss(e_real, e_fake, ctrl.k, Margin(cfg.margin));
  DiscriminatorResult r;
  r.e_real = e_real.item<double>();
  r.e_fake = e_fake.item<double>();
  r.loss = loss.item<double>();
  StepReport partial;
  partial.e_real = r.e_real;
  partial.e_fake = r.e_fake;
  partial.loss_R = r.loss;
  partial.k = ctrl.k;
  check_loss(r.loss, "loss_R", partial);
  loss.backward();
  p.reverse.optimizer->step();
  return r;
}

double generator_update(Players& p, const Batch& batch, const TrainConfig& cfg) {
  auto& F = p.forward.net;
  auto& R = p.reverse.net;
  FreezeGuard freeze_reverse(R->parameters());
  p.forward.optimizer->zero_grad();
  const auto fake = F->forward(batch.x);
  const auto e_fake = mse_energy(R->forward(fake), batch.x);
  const auto e_l1 = cfg.l1_weight > 0.0 ? l1_energy(fake, batch.y) : torch::Tensor();
  const auto loss = forward_loss(e_fake, e_l1, cfg.l1_weight);
  const double value = loss.item<double>();
  StepReport partial;
  partial.loss_F = value;
  check_loss(value, "loss_F", partial);
  loss.backward();
  p.forward.optimizer->step();
  return value;
}

namespace {

StepReport single_direction_step(Players& p, const Batch& batch, const TrainConfig& cfg,
                                 ControllerState& ctrl, std::int64_t step) {
  const auto start = std::chrono::steady_clock::now();
  StepReport report;
  report.step = step;
  try {
    const auto d = discriminator_update(p, batch, cfg, ctrl);
    report.e_real = d.e_real;
    report.e_fake = d.e_fake;
    report.loss_R = d.loss;
    report.k = ctrl.k;
    report.loss_F = generator_update(p, batch, cfg);
  } catch (const DivergedTraining& e) {
    report.k = ctrl.k;
    throw DivergedTraining(e.what(), report);
  }
  const Energy real(report.e_real);
  const Energy fake(report.e_fake);
  report.residual = report.e_fake > 0.0 ? equilibrium_residual(ctrl, real, fake)
                                        : std::numeric_limits<double>::infinity();
  ctrl = update(ctrl, real, fake);
  report.k = ctrl.k;
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

}  // namespace

StepReport train_step_unidirectional(Players& p, const Batch& batch, const TrainConfig& cfg,
                                     ControllerState& ctrl, std::int64_t step) {
  if (cfg.mode == TrainMode::began_variant || ctrl.direction != BalanceDirection::dino) {
    throw UsageError("train_step_unidirectional needs mode=unidirectional and a dino controller");
  }
  return single_direction_step(p, batch, cfg, ctrl, step);
}

StepReport train_step_began_variant(Players& p, const Batch& batch, const TrainConfig& cfg,
                                    ControllerState& ctrl, std::int64_t step) {
  if (cfg.mode != TrainMode::began_variant || ctrl.direction != BalanceDirection::began) {
    throw UsageError("train_step_began_variant needs mode=began_variant and a began controller");
  }
  return single_direction_step(p, batch, cfg, ctrl, step);
}

BidirectionalDiscResult bidirectional_discriminator_stage(Players& p, const Batch& batch,
                                                          const TrainConfig& cfg,
                                                          const ControllerState& k,
                                                          const ControllerState& mu) {
  auto& F = p.forward.net;
  auto& R = p.reverse.net;
  torch::Tensor fake_y;
  torch::Tensor fake_x;
  {
    torch::NoGradGuard no_grad;
    fake_y = F->forward(batch.x, Stream::gen);
    fake_x = R->forward(batch.y, Stream::gen);
  }
  p.forward.optimizer->zero_grad();
  p.reverse.optimizer->zero_grad();
  const Margin m(cfg.margin);
  const auto r_real = mse_energy(R->forward(batch.y, Stream::disc), batch.x);
  const auto r_fake = mse_energy(R->forward(fake_y, Stream::disc), batch.x);
  const auto f_real = mse_energy(F->forward(batch.x, Stream::disc), batch.y);
  const auto f_fake = mse_energy(F->forward(fake_x, Stream::disc), batch.y);
  const auto r_loss = reverse_loss(r_real, r_fake, k.k, m);
  const auto f_loss = reverse_loss(f_real, f_fake, mu.k, m);

  BidirectionalDiscResult r;
  r.r_real = r_real.item<double>();
  r.r_fake = r_fake.item<double>();
  r.r_loss = r_loss.item<double>();
  r.f_real = f_real.item<double>();
  r.f_fake = f_fake.item<double>();
  r.f_loss = f_loss.item<double>();
  StepReport partial;
  partial.e_real = r.r_real;
  partial.e_fake = r.r_fake;
  partial.loss_R = r.r_loss;
  partial.loss_F = r.f_loss;
  check_loss(r.r_loss, "loss_R (discriminator role)", partial);
  check_loss(r.f_loss, "loss_F (discriminator role)", partial);
  // The two losses share no parameters, so one backward pass serves both.
  (r_loss + f_loss).backward();
  p.forward.optimizer->step();
  p.reverse.optimizer->step();
  return r;
}

std::pair<double, double> bidirectional_generator_stage(Players& p, const Batch& batch,
                                                        const TrainConfig& cfg) {
  auto& F = p.forward.net;
  auto& R = p.reverse.net;
  const auto gF = F->parameter_groups();
  const auto gR = R->parameter_groups();
  const double l1 = cfg.bidirectional_l1 ? cfg.l1_weight : 0.0;
  p.forward.optimizer->zero_grad();
  p.reverse.optimizer->zero_grad();

  torch::Tensor r_loss;
  {
    FreezeGuard freeze_other(F->parameters());
    FreezeGuard freeze_encoder(concat({&gR.encoder, &gR.disc_head}));
    const auto fake_x = R->forward(batch.y, Stream::gen);
    const auto e = mse_energy(F->forward(fake_x, Stream::disc), batch.y);
    r_loss = forward_loss(e, l1 > 0.0 ? l1_energy(fake_x, batch.x) : torch::Tensor(), l1);
    StepReport partial;
    partial.loss_R = r_loss.item<double>();
    check_loss(partial.loss_R, "loss_R (generator role)", partial);
    r_loss.backward();
  }
  torch::Tensor f_loss;
  {
    FreezeGuard freeze_other(R->parameters());
    FreezeGuard freeze_encoder(concat({&gF.encoder, &gF.disc_head}));
    const auto fake_y = F->forward(batch.x, Stream::gen);
    const auto e = mse_energy(R->forward(fake_y, Stream::disc), batch.x);
    f_loss = forward_loss(e, l1 > 0.0 ? l1_energy(fake_y, batch.y) : torch::Tensor(), l1);
    StepReport partial;
    partial.loss_F = f_loss.item<double>();
    check_loss(partial.loss_F, "loss_F (generator role)", partial);
    f_loss.backward();
  }
  // Both gradients are taken before either network moves.
  p.reverse.optimizer->step();
  p.forward.optimizer->step();
  return {r_loss.item<double>(), f_loss.item<double>()};
}

StepReport train_step_bidirectional(Players& p, const Batch& batch, const TrainConfig& cfg,
                                    ControllerState& k, ControllerState& mu, std::int64_t step) {
  if (!p.forward.net->branched() || !p.reverse.net->branched()) {
    throw UsageError("bidirectional training requires branched networks");
  }
  const auto start = std::chrono::steady_clock::now();
  StepReport report;
  report.step = step;
  report.k = k.k;
  report.mu = mu.k;
  try {
    const auto d = bidirectional_discriminator_stage(p, batch, cfg, k, mu);
    report.e_real = d.r_real;
    report.e_fake = d.r_fake;
    report.f_real = d.f_real;
    report.f_fake = d.f_fake;
    report.loss_R = d.r_loss;
    report.loss_F = d.f_loss;
    const auto [r_gen, f_gen] = bidirectional_generator_stage(p, batch, cfg);
    report.loss_R += r_gen;
    report.loss_F += f_gen;
  } catch (const DivergedTraining& e) {
    throw DivergedTraining(e.what(), report);
  }
  report.residual = report.e_fake > 0.0
                        ? equilibrium_residual(k, Energy(report.e_real), Energy(report.e_fake))
                        : std::numeric_limits<double>::infinity();
  k = update(k, Energy(report.e_real), Energy(report.e_fake));
  mu = update(mu, Energy(*report.f_real), Energy(*report.f_fake));
  report.k = k.k;
  report.mu = mu.k;
  report.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

// ---------------------------------------------------------------------------
// Training state, checkpoints

TrainState make_train_state(const TrainConfig& cfg, int x_channels, int y_channels,
                            int image_size) {
  TrainState s;
  s.config = cfg;
  s.players = make_players(cfg, x_channels, y_channels, image_size);
  s.k = initial_k(cfg);
  s.mu = initial_mu(cfg);
  s.step = 0;
  return s;
}

StepReport train_step(TrainState& state, const Batch& batch) {
  reseed(state.config.seed, state.step);
  StepReport r;
  switch (state.config.mode) {
    case TrainMode::unidirectional:
      r = train_step_unidirectional(state.players, batch, state.config, state.k, state.step);
      break;
    case TrainMode::began_variant:
      r = train_step_began_variant(state.players, batch, state.config, state.k, state.step);
      break;
    case TrainMode::bidirectional:
      r = train_step_bidirectional(state.players, batch, state.config, state.k, state.mu,
                                   state.step);
      break;
  }
  ++state.step;
  return r;
}

namespace {

void write_net(torch::serialize::OutputArchive& archive, const Translator& net) {
  for (const auto& item : net->named_parameters()) archive.write(item.key(), item.value());
  for (const auto& item : net->named_buffers()) archive.write(item.key(), item.value(), true);
}

void read_net(torch::serialize::InputArchive& archive, Translator& net, const std::string& file) {
  torch::NoGradGuard no_grad;
  for (auto& item : net->named_parameters()) {
    torch::Tensor t;
    if (!archive.try_read(item.key(), t)) {
      throw IoError(file, "checkpoint lacks parameter '" + item.key() + "'");
    }
    if (t.sizes() != item.value().sizes()) {
      throw IoError(file, "parameter '" + item.key() + "' has the wrong shape");
    }
    item.value().copy_(t);
  }
  for (auto& item : net->named_buffers()) {
    torch::Tensor t;
    if (archive.try_read(item.key(), t, true)) item.value().copy_(t);
  }
}

std::string controller_text(const ControllerState& c) {
  return "k=" + format_double(c.k) + "\ngamma=" + format_double(c.gamma) +
         "\ngain=" + format_double(c.gain) + "\ndirection=" + std::string(to_string(c.direction)) +
         "\n";
}

ControllerState controller_from_text(const std::string& text) {
  ControllerState c;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const auto key = line.substr(0, eq);
    const auto value = line.substr(eq + 1);
    if (key == "k") c.k = parse_double(key, value);
    else if (key == "gamma") c.gamma = parse_double(key, value);
    else if (key == "gain") c.gain = parse_double(key, value);
    else if (key == "direction") c.direction = balance_direction_from_string(value);
  }
  return c;
}

std::string read_string(torch::serialize::InputArchive& archive, const std::string& key,
                        const std::string& file) {
  c10::IValue v;
  if (!archive.try_read(key, v) || !v.isString()) {
    throw IoError(file, "checkpoint lacks metadata '" + key + "'");
  }
  return v.toStringRef();
}

}  // namespace

void save_checkpoint(const TrainState& state, const fs::path& file) {
  torch::serialize::OutputArchive archive;
  archive.write("format", c10::IValue(std::string("dino-checkpoint-1")));
  archive.write("config", c10::IValue(state.config.to_text()));
  archive.write("forward_spec", c10::IValue(state.players.forward.net->spec().to_text()));
  archive.write("reverse_spec", c10::IValue(state.players.reverse.net->spec().to_text()));
  archive.write("branched", c10::IValue(std::string(state.players.forward.net->branched() ? "true" : "false")));
  archive.write("step", c10::IValue(std::to_string(state.step)));
  archive.write("controller_k", c10::IValue(controller_text(state.k)));
  archive.write("controller_mu", c10::IValue(controller_text(state.mu)));

  torch::serialize::OutputArchive fwd;
  write_net(fwd, state.players.forward.net);
  archive.write("forward", fwd);
  torch::serialize::OutputArchive rev;
  write_net(rev, state.players.reverse.net);
  archive.write("reverse", rev);

  torch::serialize::OutputArchive fwd_opt;
  state.players.forward.optimizer->save(fwd_opt);
  archive.write("forward_optim", fwd_opt);
  torch::serialize::OutputArchive rev_opt;
  state.players.reverse.optimizer->save(rev_opt);
  archive.write("reverse_optim", rev_opt);

  std::error_code ec;
  if (file.has_parent_path()) fs::create_directories(file.parent_path(), ec);
  if (ec) throw IoError(file.parent_path().string(), "cannot create directory: " + ec.message());
  try {
    archive.save_to(file.string());
  } catch (const c10::Error& e) {
    throw IoError(file.string(), std::string("cannot write checkpoint: ") + e.what_without_backtrace());
  }
}

namespace {

torch::serialize::InputArchive open_archive(const fs::path& file) {
  if (!fs::exists(file)) throw IoError(file.string(), "checkpoint not found");
  torch::serialize::InputArchive archive;
  try {
    archive.load_from(file.string());
  } catch (const c10::Error& e) {
    throw IoError(file.string(), std::string("cannot read checkpoint: ") + e.what_without_backtrace());
  }
  if (read_string(archive, "format", file.string()) != "dino-checkpoint-1") {
    throw IoError(file.string(), "unsupported checkpoint format");
  }
  return archive;
}

Translator read_translator(torch::serialize::InputArchive& archive, const std::string& which,
                           const std::string& file) {
  const auto spec = UNetSpec::from_text(read_string(archive, which + "_spec", file));
  const bool branched = read_string(archive, "branched", file) == "true";
  auto net = build_unet(spec, branched, 0);
  torch::serialize::InputArchive sub;
  if (!archive.try_read(which, sub)) throw IoError(file, "checkpoint lacks '" + which + "' network");
  read_net(sub, net, file);
  return net;
}

}  // namespace

TrainState load_checkpoint(const fs::path& file) {
  auto archive = open_archive(file);
  const std::string f = file.string();
  TrainState s;
  s.config = TrainConfig::from_text(read_string(archive, "config", f));
  s.step = std::stoll(read_string(archive, "step", f));
  s.k = controller_from_text(read_string(archive, "controller_k", f));
  s.mu = controller_from_text(read_string(archive, "controller_mu", f));

  auto fwd = read_translator(archive, "forward", f);
  auto rev = read_translator(archive, "reverse", f);
  // Rebuild with the config's seed-independent layout and check that it matches the stored specs.
  const auto expected = make_players(s.config, fwd->spec().in_channels, fwd->spec().out_channels,
                                     fwd->spec().image_size);
  if (!(expected.forward.net->spec() == fwd->spec()) ||
      !(expected.reverse.net->spec() == rev->spec())) {
    throw IoError(f, "network specs stored in the checkpoint do not match its config");
  }
  s.players.forward = Player(fwd, s.config);
  s.players.reverse = Player(rev, s.config);
  torch::serialize::InputArchive fwd_opt;
  torch::serialize::InputArchive rev_opt;
  if (!archive.try_read("forward_optim", fwd_opt) || !archive.try_read("reverse_optim", rev_opt)) {
    throw IoError(f, "checkpoint lacks optimizer state");
  }
  s.players.forward.optimizer->load(fwd_opt);
  s.players.reverse.optimizer->load(rev_opt);
  return s;
}

Translator load_translator(const fs::path& file, std::string_view which) {
  if (which != "forward" && which != "reverse") {
    throw UsageError("load_translator: which must be 'forward' or 'reverse'");
  }
  auto archive = open_archive(file);
  return read_translator(archive, std::string(which), file.string());
}

// ---------------------------------------------------------------------------
// fit

std::vector<std::size_t> batch_indices(const std::vector<std::size_t>& train, int batch_size,
                                       std::uint64_t seed, std::int64_t step) {
  if (train.empty()) throw InvalidArgument("batch_indices: empty training split");
  const auto n = static_cast<std::uint64_t>(train.size());
  std::vector<std::size_t> out;
  out.reserve(static_cast<std::size_t>(batch_size));
  std::uint64_t cached_epoch = ~0ULL;
  std::vector<std::size_t> perm;
  for (int j = 0; j < batch_size; ++j) {
    const auto pos = static_cast<std::uint64_t>(step) * static_cast<std::uint64_t>(batch_size) +
                     static_cast<std::uint64_t>(j);
    const auto epoch = pos / n;
    if (epoch != cached_epoch) {
      perm = train;
      std::mt19937_64 rng(seed ^ (0x9E3779B97F4A7C15ULL * (epoch + 1)));
      for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[rng() % i]);
      cached_epoch = epoch;
    }
    out.push_back(perm[static_cast<std::size_t>(pos % n)]);
  }
  return out;
}

std::string default_run_id(const TrainConfig& cfg) {
  // Keys a resume may change do not enter the id, so a longer rerun of the
  // same config lands in the same directory.
  TrainConfig c = cfg;
  c.run_id.clear();
  c.steps = 0;
  c.checkpoint_every = 1;
  std::ostringstream out;
  out << to_string(c.mode) << "-s" << c.seed << '-' << std::hex;
  out.width(8);
  out.fill('0');
  out << (fnv1a(c.to_text()) & 0xffffffffULL);
  return out.str();
}

std::vector<StepReport> read_metrics_log(const fs::path& file) {
  std::ifstream in(file);
  if (!in) throw IoError(file.string(), "cannot open metrics log");
  std::vector<StepReport> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      out.push_back(StepReport::from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& e) {
      throw IoError(file.string(), "line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

FitResult fit(const PairedDataset& data, const TrainConfig& cfg, const FitOptions& opts) {
  cfg.validate();
  if (data.empty() || data.train_indices().empty()) {
    throw InvalidArgument("fit: dataset has no training samples");
  }
  std::error_code ec;
  fs::create_directories(opts.run_dir, ec);
  if (ec) throw IoError(opts.run_dir.string(), "cannot create run directory: " + ec.message());

  const auto first = data.get(data.train_indices().front());
  FitResult result;
  TrainState& state = result.state;
  if (opts.resume) {
    state = load_checkpoint(*opts.resume);
    TrainConfig stored = state.config;
    stored.steps = cfg.steps;
    stored.checkpoint_every = cfg.checkpoint_every;
    stored.data = cfg.data;
    stored.run_id = cfg.run_id;
    if (!(stored == cfg)) {
      throw InvalidArgument("fit: resume config differs from the checkpoint's config");
    }
    state.config = cfg;
  } else {
    state = make_train_state(cfg, static_cast<int>(first.x.size(0)),
                             static_cast<int>(first.y.size(0)), static_cast<int>(first.x.size(-1)));
  }

  result.metrics_log = opts.run_dir / "metrics.jsonl";
  const auto timing_path = opts.run_dir / "timing.jsonl";
  {
    std::ofstream cfg_out(opts.run_dir / "config.ini", std::ios::binary);
    if (!cfg_out) throw IoError((opts.run_dir / "config.ini").string(), "cannot write config");
    cfg_out << cfg.to_text();
  }

  // Keep exactly the first state.step records of any existing log.
  std::vector<std::string> kept;
  if (opts.resume && fs::exists(result.metrics_log)) {
    std::ifstream in(result.metrics_log);
    std::string line;
    while (static_cast<std::int64_t>(kept.size()) < state.step && std::getline(in, line)) {
      kept.push_back(line);
    }
  }
  std::ofstream log(result.metrics_log, std::ios::binary | std::ios::trunc);
  if (!log) throw IoError(result.metrics_log.string(), "cannot open metrics log");
  for (const auto& line : kept) log << line << '\n';
  std::ofstream timing(timing_path, std::ios::binary | (opts.resume ? std::ios::app : std::ios::trunc));

  auto checkpoint = [&](std::int64_t step) {
    const auto path = opts.run_dir / ("step_" + std::to_string(step)) / "checkpoint.pt";
    save_checkpoint(state, path);
    result.checkpoints.push_back(path);
  };
  if (!opts.resume) checkpoint(0);

  while (state.step < cfg.steps) {
    const auto idx = batch_indices(data.train_indices(), cfg.batch_size, cfg.seed, state.step);
    const auto batch = make_batch(data, idx);
    StepReport report;
    try {
      report = train_step(state, batch);
    } catch (const DivergedTraining&) {
      log.flush();
      timing.flush();
      throw;
    }
    log << report.to_json().dump() << '\n';
    timing << nlohmann::json{{"step", report.step}, {"wall_time", report.wall_time}}.dump() << '\n';
    if (!log) throw IoError(result.metrics_log.string(), "write failed");
    if (opts.on_step) opts.on_step(report, state);
    if (!opts.quiet && (state.step % 100 == 0 || state.step == cfg.steps)) {
      std::cerr << "step " << state.step << "/" << cfg.steps << " e_real=" << report.e_real
                << " e_fake=" << report.e_fake << " k=" << report.k
                << (report.mu ? " mu=" + format_double(*report.mu) : std::string()) << '\n';
    }
    result.reports.push_back(report);
    if (state.step % cfg.checkpoint_every == 0 || state.step == cfg.steps) checkpoint(state.step);
  }
  log.flush();

  if (opts.evaluate_at_end && !data.test_indices().empty()) {
    nlohmann::json summary;
    summary["steps"] = state.step;
    summary["k"] = state.k.k;
    if (cfg.mode == TrainMode::bidirectional) summary["mu"] = state.mu.k;
    auto fwd = evaluate_translator(state.players.forward.net, data, data.test_indices()).to_json();
    fwd.erase("samples");
    summary["forward"] = fwd;
    if (cfg.mode == TrainMode::bidirectional) {
      EvalOptions eo;
      eo.reverse = true;
      auto rev = evaluate_translator(state.players.reverse.net, data, data.test_indices(), eo).to_json();
      rev.erase("samples");
      summary["reverse"] = rev;
    }
    std::ofstream out(opts.run_dir / "summary.json", std::ios::binary);
    if (!out) throw IoError((opts.run_dir / "summary.json").string(), "cannot write summary");
    out << summary.dump(2) << '\n';
    result.summary = summary;
  }
  return result;
}

}  // namespace dino
