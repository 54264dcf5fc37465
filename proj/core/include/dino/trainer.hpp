#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>
#include <torch/torch.h>

#include "dino/balance_controller.hpp"
#include "dino/data.hpp"
#include "dino/networks.hpp"

namespace dino {

enum class TrainMode { unidirectional, bidirectional, began_variant };

std::string_view to_string(TrainMode m);
TrainMode train_mode_from_string(std::string_view s);

/// Any loss that is non-finite or above this magnitude aborts training.
inline constexpr double kDivergenceThreshold = 1e6;

struct TrainConfig {
  TrainMode mode = TrainMode::unidirectional;
  double margin = 0.2;
  double gamma = 0.8;    // k controller (gamma_D in bidirectional mode)
  double gamma_g = 0.8;  // mu controller, bidirectional only
  double gain = kDefaultGain;    // lambda_R
  double gain_f = kDefaultGain;  // lambda_F, bidirectional only
  double l1_weight = 100.0;
  bool bidirectional_l1 = false;
  double learning_rate = 0.0002;
  double adam_beta1 = 0.5;
  double adam_beta2 = 0.999;
  int batch_size = 8;
  std::int64_t steps = 2000;
  std::uint64_t seed = 0;
  int branch_layer = 3;
  bool dropout = false;
  int base_width = 8;
  int encoder_layers = 4;
  std::int64_t checkpoint_every = 500;
  std::string data;    // dataset root, used by the CLI
  std::string run_id;  // empty: derived from the config

  /// Throws InvalidArgument naming the offending key.
  void validate() const;

  /// Flat `key = value` text; parse(serialize(c)) == c.
  std::string to_text() const;
  static TrainConfig from_text(std::string_view text);

  /// Applies one key; throws UsageError for unknown keys and bad values,
  /// listing what is allowed.
  void set(std::string_view key, std::string_view value);

  static const std::vector<std::string>& keys();

  bool operator==(const TrainConfig&) const = default;
};

/// Per-step telemetry. In bidirectional mode e_real/e_fake/k belong to the
/// Reverse player's discriminator role and the f_* fields plus mu to the
/// Forward player's. Controller values are the ones after this step's update.
struct StepReport {
  std::int64_t step = 0;
  double e_real = 0.0;
  double e_fake = 0.0;
  double k = 0.0;
  double residual = 0.0;
  double loss_R = 0.0;
  double loss_F = 0.0;
  std::optional<double> f_real;
  std::optional<double> f_fake;
  std::optional<double> mu;
  double wall_time = 0.0;  // seconds, not part of the deterministic log

  bool finite() const;
  /// Deterministic fields only (no wall time).
  nlohmann::json to_json() const;
  static StepReport from_json(const nlohmann::json& j);
};

class DivergedTraining : public std::runtime_error {
 public:
  DivergedTraining(const std::string& what, StepReport last)
      : std::runtime_error(what), last_(std::move(last)) {}
  const StepReport& last_report() const { return last_; }

 private:
  StepReport last_;
};

/// A translator and its Adam optimizer.
struct Player {
  Translator net{nullptr};
  std::unique_ptr<torch::optim::Adam> optimizer;

  Player() = default;
  Player(Translator n, const TrainConfig& cfg);
};

/// Forward (x -> y) and Reverse (y -> x) players of one run.
struct Players {
  Player forward;
  Player reverse;
};

/// Builds both players for the dataset's shapes. Bidirectional mode builds
/// branched networks.
Players make_players(const TrainConfig& cfg, int x_channels, int y_channels, int image_size);

/// Discriminator role: R minimizes reverse_loss on (R(y), R(F(x) detached)).
/// Only Reverse-network parameters change. Returns the detached energies and loss.
struct DiscriminatorResult {
  double e_real = 0.0;
  double e_fake = 0.0;
  double loss = 0.0;
};
DiscriminatorResult discriminator_update(Players& p, const Batch& batch, const TrainConfig& cfg,
                                         const ControllerState& ctrl);

/// Generator role: F minimizes forward_loss through a frozen R. Only Forward-network
/// parameters change. Returns the loss.
double generator_update(Players& p, const Batch& batch, const TrainConfig& cfg);

StepReport train_step_unidirectional(Players& p, const Batch& batch, const TrainConfig& cfg,
                                     ControllerState& ctrl, std::int64_t step = 0);

/// BEGAN-direction baseline: discriminator loss e_real - k * e_fake and a
/// began-direction controller.
StepReport train_step_began_variant(Players& p, const Batch& batch, const TrainConfig& cfg,
                                    ControllerState& ctrl, std::int64_t step = 0);

struct BidirectionalDiscResult {
  double r_real = 0.0, r_fake = 0.0, r_loss = 0.0;
  double f_real = 0.0, f_fake = 0.0, f_loss = 0.0;
};

/// Both players as discriminators, through their disc heads, against the other
/// player's detached gen-stream output. Gen heads are untouched.
BidirectionalDiscResult bidirectional_discriminator_stage(Players& p, const Batch& batch,
                                                          const TrainConfig& cfg,
                                                          const ControllerState& k,
                                                          const ControllerState& mu);

/// Both players as generators: R minimizes L(F_disc(R_gen(y)), y) and F minimizes
/// L(R_disc(F_gen(x)), x). The acting generator's encoder and the whole opposing
/// network are frozen, so only trunk and gen-head parameters change.
std::pair<double, double> bidirectional_generator_stage(Players& p, const Batch& batch,
                                                        const TrainConfig& cfg);

StepReport train_step_bidirectional(Players& p, const Batch& batch, const TrainConfig& cfg,
                                    ControllerState& k, ControllerState& mu,
                                    std::int64_t step = 0);

/// Controllers initialized from the config (k = mu = 0).
ControllerState initial_k(const TrainConfig& cfg);
ControllerState initial_mu(const TrainConfig& cfg);

/// Complete training state: networks, optimizer moments, controllers, step.
struct TrainState {
  TrainConfig config;
  Players players;
  ControllerState k;
  ControllerState mu;
  std::int64_t step = 0;
};

TrainState make_train_state(const TrainConfig& cfg, int x_channels, int y_channels,
                            int image_size);

/// Single-archive checkpoint: key-value metadata (config, both network specs,
/// controllers, step) plus parameter blobs keyed `forward/<group>.<layer>...`
/// and `reverse/...`, plus Adam state.
void save_checkpoint(const TrainState& state, const std::filesystem::path& file);
TrainState load_checkpoint(const std::filesystem::path& file);

/// Loads only the network for inference. `which` is "forward" or "reverse".
Translator load_translator(const std::filesystem::path& file, std::string_view which = "forward");

/// One step in the configured mode, including the per-step RNG reseed.
StepReport train_step(TrainState& state, const Batch& batch);

/// Indices of the batch used at `step`: consecutive slices of per-epoch
/// seeded permutations of the training split.
std::vector<std::size_t> batch_indices(const std::vector<std::size_t>& train, int batch_size,
                                       std::uint64_t seed, std::int64_t step);

struct FitOptions {
  std::filesystem::path run_dir;               // {root}/{run_id}
  std::optional<std::filesystem::path> resume;  // checkpoint file to continue from
  std::function<void(const StepReport&, const TrainState&)> on_step;
  bool evaluate_at_end = true;
  bool quiet = true;
};

struct FitResult {
  std::vector<StepReport> reports;  // steps run by this call
  std::vector<std::filesystem::path> checkpoints;
  std::filesystem::path metrics_log;
  std::optional<nlohmann::json> summary;
  TrainState state;
};

/// Runs cfg.steps steps. Writes {run_dir}/metrics.jsonl (one record per step),
/// {run_dir}/timing.jsonl, checkpoints at {run_dir}/step_{n}/checkpoint.pt
/// (initial, every cfg.checkpoint_every steps, final), and summary.json.
/// On divergence the partial log stays on disk and DivergedTraining is rethrown.
FitResult fit(const PairedDataset& data, const TrainConfig& cfg, const FitOptions& opts);

/// Run directory name derived from the config when cfg.run_id is empty.
std::string default_run_id(const TrainConfig& cfg);

/// Reads a metrics.jsonl file.
std::vector<StepReport> read_metrics_log(const std::filesystem::path& file);

}  // namespace dino
