#include <chrono>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "dino/errors.hpp"
#include "dino_cli/cli.hpp"

namespace fs = std::filesystem;

namespace dino::cli {

namespace {

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

std::string read_text(const fs::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError(file.string(), "cannot open for reading");
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

std::string absolute_string(const fs::path& p) {
  return fs::weakly_canonical(fs::absolute(p)).string();
}

// [C,H,W] in [-1,1] -> 8-bit BGR tile, grey images replicated to 3 channels.
cv::Mat to_tile(const torch::Tensor& image) {
  auto t = denormalize_to_8bit(image.detach().to(torch::kCPU)).round().clamp(0, 255);
  if (t.size(0) == 1) t = t.expand({3, t.size(1), t.size(2)});
  t = t.flip({0}).permute({1, 2, 0}).to(torch::kUInt8).contiguous();
  cv::Mat m(static_cast<int>(t.size(0)), static_cast<int>(t.size(1)), CV_8UC3, t.data_ptr());
  return m.clone();
}

}  // namespace

int cmd_synth(const SynthOptions& opts, std::ostream& out) {
  opts.spec.validate();
  if (opts.out.empty()) throw UsageError("synth: --out is required");
  if (!(opts.test_fraction >= 0.0 && opts.test_fraction < 1.0)) {
    throw UsageError("synth: --test-fraction must lie in [0, 1)");
  }
  const auto data = make_toy_dataset(opts.spec, opts.test_fraction);
  write_toy_dataset(data, opts.out);
  const int states = opts.spec.state_count();
  out << "attribute space: " << states << " states (" << opts.spec.grid << "x" << opts.spec.grid
      << " grid, " << opts.spec.colors << " colors, " << opts.spec.shapes << " shapes)\n"
      << "wrote " << data.size() << " pairs (" << data.train_indices().size() << " train, "
      << data.test_indices().size() << " test) to " << opts.out.string() << '\n';
  return states;
}

fs::path cmd_train(const TrainOptions& opts, std::ostream& out) {
  TrainConfig cfg;
  if (opts.config) cfg = TrainConfig::from_text(read_text(*opts.config));
  for (const auto& kv : opts.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (opts.seed) cfg.seed = *opts.seed;
  if (opts.steps_override) cfg.steps = *opts.steps_override;
  if (opts.data) cfg.data = opts.data->string();
  if (cfg.data.empty()) throw UsageError("train: no dataset (set 'data' in the config or pass --data)");
  // Relative dataset paths are resolved against the config file's directory.
  fs::path data_path = cfg.data;
  if (data_path.is_relative() && opts.config && !opts.data) {
    data_path = opts.config->parent_path() / data_path;
  }
  if (!fs::is_directory(data_path)) throw IoError(data_path.string(), "dataset directory not found");
  cfg.data = absolute_string(data_path);
  cfg.validate();
  if (opts.resume && opts.force) throw UsageError("train: --resume and --force are exclusive");

  const auto run_id = cfg.run_id.empty() ? default_run_id(cfg) : cfg.run_id;
  const auto root = opts.out_root ? *opts.out_root : default_runs_root();
  const auto run_dir = root / run_id;
  const auto manifest_path = run_dir / "manifest.json";
  const bool exists = fs::exists(manifest_path) || fs::exists(run_dir / "metrics.jsonl");

  FitOptions fo;
  fo.run_dir = run_dir;
  fo.quiet = opts.quiet;
  RunManifest manifest;
  if (exists && opts.resume) {
    fo.resume = latest_checkpoint(run_dir);
    manifest = fs::exists(manifest_path) ? read_manifest(manifest_path) : RunManifest{};
    out << "resuming " << run_id << " from " << fo.resume->string() << '\n';
  } else if (exists && !opts.force) {
    throw UsageError("run directory " + run_dir.string() +
                     " already exists (pass --resume to continue or --force to overwrite)");
  } else {
    if (exists) {
      std::error_code ec;
      fs::remove_all(run_dir, ec);
      if (ec) throw IoError(run_dir.string(), "cannot clear run directory: " + ec.message());
    }
    manifest.started = utc_now();
  }
  std::error_code ec;
  fs::create_directories(run_dir, ec);
  if (ec) throw IoError(run_dir.string(), "cannot create run directory: " + ec.message());

  manifest.run_id = run_id;
  manifest.config = cfg.to_text();
  manifest.code_hash = code_hash();
  manifest.seed = cfg.seed;
  manifest.finished.clear();
  manifest.status = "running";
  manifest.artifacts = {{"config", "config.ini"},
                        {"metrics_log", "metrics.jsonl"},
                        {"timing_log", "timing.jsonl"},
                        {"data", cfg.data}};
  write_manifest(manifest, manifest_path);

  const auto data = load_dataset_root(cfg.data);
  out << "run " << run_id << ": " << to_string(cfg.mode) << ", " << cfg.steps << " steps, "
      << data.train_indices().size() << " training pairs -> " << run_dir.string() << '\n';
  try {
    const auto result = fit(data, cfg, fo);
    manifest.status = "completed";
    manifest.finished = utc_now();
    if (!result.checkpoints.empty()) {
      manifest.artifacts["checkpoint"] = fs::relative(result.checkpoints.back(), run_dir).string();
    }
    if (result.summary) {
      manifest.artifacts["summary"] = "summary.json";
      const auto fwd = EvalReport::from_json(result.summary->at("forward"));
      out << format_table(fwd, "x -> y");
      if (result.summary->contains("reverse")) {
        out << format_table(EvalReport::from_json(result.summary->at("reverse")), "y -> x");
      }
    }
    write_manifest(manifest, manifest_path);
  } catch (const DivergedTraining&) {
    manifest.status = "diverged";
    write_manifest(manifest, manifest_path);
    throw;
  }
  return run_dir;
}

std::string format_table(const EvalReport& r, const std::string& direction) {
  std::ostringstream s;
  s << std::fixed;
  s << "| Direction | PSNR ↑ | SSIM ↑ | Oracle Acc. ↑ |\n"
    << "|-----------|--------|--------|---------------|\n"
    << "| " << std::left << std::setw(9) << direction << " | " << std::setprecision(2)
    << std::setw(6) << r.psnr << " | " << std::setprecision(4) << std::setw(6) << r.ssim << " | ";
  if (r.oracle_accuracy) {
    s << std::setprecision(4) << std::setw(13) << *r.oracle_accuracy;
  } else {
    s << std::setw(13) << "n/a";
  }
  s << " |\n";
  return s.str();
}

EvalReport cmd_eval(const EvalCommandOptions& opts, std::ostream& out) {
  if (opts.grid < 0) throw UsageError("eval: --grid must be >= 0");
  if (opts.split != "test" && opts.split != "train" && opts.split != "all") {
    throw UsageError("eval: --split must be test, train or all");
  }

  fs::path report_dir;
  std::optional<TrainState> state;
  std::string data_root;
  if (opts.ground_truth) {
    if (!opts.data) throw UsageError("eval: --ground-truth needs --data");
    report_dir = opts.target.empty() ? fs::path(".") : opts.target;
  } else {
    if (opts.target.empty()) throw UsageError("eval: a run directory or checkpoint is required");
    if (!fs::exists(opts.target)) throw IoError(opts.target.string(), "no such run or checkpoint");
    const auto ckpt = fs::is_directory(opts.target) ? latest_checkpoint(opts.target) : opts.target;
    report_dir = fs::is_directory(opts.target) ? opts.target : ckpt.parent_path();
    state = load_checkpoint(ckpt);
    data_root = state->config.data;
  }
  if (opts.data) data_root = opts.data->string();
  if (data_root.empty()) throw UsageError("eval: the checkpoint names no dataset; pass --data");
  const auto data = load_dataset_root(data_root);

  std::vector<std::size_t> indices;
  if (opts.split == "test") indices = data.test_indices();
  else if (opts.split == "train") indices = data.train_indices();
  else for (std::size_t i = 0; i < data.size(); ++i) indices.push_back(i);
  if (indices.empty()) throw UsageError("eval: the '" + opts.split + "' split is empty");

  Translator net{nullptr};
  if (state) {
    net = opts.reverse ? state->players.reverse.net : state->players.forward.net;
    const auto first = data.get(indices.front());
    const auto& in = opts.reverse ? first.y : first.x;
    const auto& spec = net->spec();
    if (in.size(0) != spec.in_channels || in.size(-1) != spec.image_size) {
      throw InvalidArgument("eval: dataset images are " + std::to_string(in.size(0)) + "x" +
                            std::to_string(in.size(-1)) + "px but the network expects " +
                            std::to_string(spec.in_channels) + "x" +
                            std::to_string(spec.image_size) + "px");
    }
    net->eval();
  }
  const Predictor predict = [&](const Batch& b) -> torch::Tensor {
    if (opts.ground_truth) return opts.reverse ? b.x : b.y;
    torch::NoGradGuard ng;
    return net->forward(opts.reverse ? b.y : b.x);
  };
  dino::EvalOptions eo;
  eo.batch_size = opts.batch_size;
  eo.reverse = opts.reverse;
  const auto report = evaluate(predict, data, indices, eo);

  const std::string direction = opts.reverse ? "y -> x" : "x -> y";
  out << format_table(report, direction);
  const auto report_path = opts.out ? *opts.out : report_dir / "eval.json";
  {
    std::ofstream f(report_path, std::ios::binary);
    if (!f) throw IoError(report_path.string(), "cannot write report");
    f << report.to_json().dump(2) << '\n';
  }
  out << "report: " << report_path.string() << '\n';

  if (opts.grid > 0) {
    const auto n = std::min<std::size_t>(static_cast<std::size_t>(opts.grid), indices.size());
    std::vector<std::size_t> rows(indices.begin(), indices.begin() + static_cast<std::ptrdiff_t>(n));
    const auto batch = make_batch(data, rows);
    const auto pred = predict(batch);
    const auto& cond = opts.reverse ? batch.y : batch.x;
    const auto& truth = opts.reverse ? batch.x : batch.y;
    std::vector<cv::Mat> lines;
    for (std::size_t i = 0; i < n; ++i) {
      const auto j = static_cast<std::int64_t>(i);
      cv::Mat line;
      cv::hconcat(std::vector<cv::Mat>{to_tile(cond[j]), to_tile(pred[j]), to_tile(truth[j])}, line);
      lines.push_back(line);
    }
    cv::Mat grid;
    cv::vconcat(lines, grid);
    const auto grid_path = report_path.parent_path() / (report_path.stem().string() + "_grid.png");
    if (!cv::imwrite(grid_path.string(), grid)) throw IoError(grid_path.string(), "cannot write grid");
    out << "grid: " << grid_path.string() << " (" << n << " rows: condition | generated | ground truth)\n";
  }
  return report;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual inverse network training for paired domain translation"};
  app.require_subcommand(1);

  SynthOptions synth;
  std::string synth_direction = "informative_target";
  auto* s = app.add_subcommand("synth", "write a synthetic paired toy dataset");
  s->add_option("--out", synth.out, "output directory")->required();
  s->add_option("--seed", synth.spec.seed, "texture and split seed");
  s->add_option("--image-size", synth.spec.image_size);
  s->add_option("--grid", synth.spec.grid, "position grid side");
  s->add_option("--colors", synth.spec.colors);
  s->add_option("--shapes", synth.spec.shapes);
  s->add_option("--textures", synth.spec.textures);
  s->add_option("--direction", synth_direction,
                "informative_target | informative_source | involutive");
  s->add_option("--test-fraction", synth.test_fraction);

  TrainOptions train;
  std::string train_config, train_out, train_data;
  std::uint64_t train_seed = 0;
  std::int64_t train_steps = 0;
  auto* t = app.add_subcommand("train", "train a run from a config file");
  auto* t_config = t->add_option("--config", train_config, "flat key = value config file");
  auto* t_seed = t->add_option("--seed", train_seed);
  auto* t_out = t->add_option("--out", train_out, "runs root (default $DINO_RUNS_DIR or ./runs)");
  auto* t_steps = t->add_option("--steps-override", train_steps);
  auto* t_data = t->add_option("--data", train_data, "dataset root (overrides the config)");
  t->add_option("--set", train.overrides, "key=value config override (repeatable)");
  t->add_flag("--resume", train.resume, "continue from the run's latest checkpoint");
  t->add_flag("--force", train.force, "overwrite an existing run directory");
  t->add_flag("--quiet", train.quiet);

  EvalCommandOptions ev;
  std::string eval_target, eval_data, eval_out;
  auto* e = app.add_subcommand("eval", "evaluate a run or checkpoint");
  e->add_option("target", eval_target, "run directory or checkpoint file");
  auto* e_data = e->add_option("--data", eval_data, "dataset root (default: the run's)");
  e->add_option("--split", ev.split, "test | train | all");
  e->add_flag("--reverse", ev.reverse, "evaluate the y -> x network");
  e->add_flag("--ground-truth", ev.ground_truth, "score ground truth as the prediction");
  e->add_option("--grid", ev.grid, "write an N-row image grid");
  auto* e_out = e->add_option("--out", eval_out, "report path (default {run}/eval.json)");
  e->add_option("--batch-size", ev.batch_size);

  std::string plot_run, plot_out;
  auto* p = app.add_subcommand("plot", "draw controller and energy traces of a run");
  p->add_option("run", plot_run, "run directory")->required();
  auto* p_out = p->add_option("--out", plot_out, "output directory (default: the run)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& ex) {
    out << app.help();
    return kOk;
  } catch (const CLI::ParseError& ex) {
    err << "usage error: " << ex.what() << '\n' << app.help();
    return kUsage;
  }

  try {
    if (s->parsed()) {
      synth.spec.direction = toy_direction_from_string(synth_direction);
      cmd_synth(synth, out);
    } else if (t->parsed()) {
      if (*t_config) train.config = train_config;
      if (*t_seed) train.seed = train_seed;
      if (*t_out) train.out_root = train_out;
      if (*t_steps) train.steps_override = train_steps;
      if (*t_data) train.data = train_data;
      cmd_train(train, out);
    } else if (e->parsed()) {
      ev.target = eval_target;
      if (*e_data) ev.data = eval_data;
      if (*e_out) ev.out = eval_out;
      cmd_eval(ev, out);
    } else if (p->parsed()) {
      std::optional<fs::path> dir;
      if (*p_out) dir = plot_out;
      cmd_plot(plot_run, dir, out, err);
    }
  } catch (const UsageError& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kUsage;
  } catch (const InvalidArgument& ex) {
    err << "usage error: " << ex.what() << '\n';
    return kUsage;
  } catch (const DivergedTraining& ex) {
    err << "diverged: " << ex.what() << '\n';
    return kDiverged;
  } catch (const IoError& ex) {
    err << "i/o error: " << ex.what() << '\n';
    return kIo;
  } catch (const std::exception& ex) {
    // Torch serialization and filesystem errors surface here.
    err << "i/o error: " << ex.what() << '\n';
    return kIo;
  }
  return kOk;
}

}  // namespace dino::cli
