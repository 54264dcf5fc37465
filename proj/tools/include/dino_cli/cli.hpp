#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "dino/data.hpp"
#include "dino/metrics.hpp"
#include "dino/trainer.hpp"

namespace dino::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kDiverged = 3, kIo = 4 };

/// Everything needed to rerun a training run: the full config (including the
/// dataset path and seed) and the hash of the code that produced it.
struct RunManifest {
  std::string run_id;
  std::string config;  // TrainConfig::to_text()
  std::string code_hash;
  std::uint64_t seed = 0;
  std::string started;   // UTC, ISO 8601
  std::string finished;  // empty while running or after divergence
  std::string status;    // running | completed | diverged
  std::map<std::string, std::string> artifacts;

  nlohmann::json to_json() const;
  static RunManifest from_json(const nlohmann::json& j);
};

/// SHA-1 over the library and tool sources, fixed at configure time.
std::string code_hash();

void write_manifest(const RunManifest& m, const std::filesystem::path& file);
RunManifest read_manifest(const std::filesystem::path& file);

/// $DINO_RUNS_DIR, or ./runs when unset.
std::filesystem::path default_runs_root();

/// Highest-numbered step_{n}/checkpoint.pt in a run directory.
std::filesystem::path latest_checkpoint(const std::filesystem::path& run_dir);

struct SynthOptions {
  std::filesystem::path out;
  ToyDomainSpec spec;
  double test_fraction = 0.2;
};

/// Writes a toy dataset; returns the number of semantic states.
int cmd_synth(const SynthOptions& opts, std::ostream& out);

struct TrainOptions {
  std::optional<std::filesystem::path> config;
  std::vector<std::string> overrides;  // key=value
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out_root;
  std::optional<std::int64_t> steps_override;
  std::optional<std::filesystem::path> data;
  bool resume = false;
  bool force = false;
  bool quiet = false;
};

/// Trains into {root}/{run_id}; returns the run directory.
std::filesystem::path cmd_train(const TrainOptions& opts, std::ostream& out);

struct EvalCommandOptions {
  std::filesystem::path target;  // run directory or checkpoint file
  std::optional<std::filesystem::path> data;
  std::string split = "test";  // test | train | all
  bool reverse = false;
  bool ground_truth = false;  // score the targets themselves (sanity baseline)
  int grid = 0;               // rows of condition | generated | ground truth tiles
  std::optional<std::filesystem::path> out;  // report json; default {run}/eval.json
  int batch_size = 16;
};

EvalReport cmd_eval(const EvalCommandOptions& opts, std::ostream& out);

/// Markdown table: Direction, PSNR, SSIM, Oracle Acc.
std::string format_table(const EvalReport& report, const std::string& direction);

/// Writes controller.png and energy.png; an empty log warns and writes nothing.
std::vector<std::filesystem::path> cmd_plot(const std::filesystem::path& run_dir,
                                            const std::optional<std::filesystem::path>& out_dir,
                                            std::ostream& out, std::ostream& err);

/// Entry point shared by main() and the tests. Never throws.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dino::cli
