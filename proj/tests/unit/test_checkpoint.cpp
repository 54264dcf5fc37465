#include "support/doctest_torch.hpp"

#include <fstream>

#include "dino/errors.hpp"
#include "dino/trainer.hpp"
#include "support/temp_dir.hpp"
#include "support/tiny.hpp"

using namespace dino;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

std::size_t line_count(const fs::path& p) {
  const auto s = slurp(p);
  return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n'));
}

FitOptions quiet_run(const fs::path& dir) {
  FitOptions o;
  o.run_dir = dir;
  o.evaluate_at_end = false;
  return o;
}

}  // namespace

TEST_CASE("resume from a checkpoint equals an uninterrupted run") {
  const auto data = make_toy_dataset(test::tiny_toy(ToyDirection::involutive));
  for (auto mode : {TrainMode::unidirectional, TrainMode::bidirectional, TrainMode::began_variant}) {
    CAPTURE(to_string(mode));
    test::TempDir dir("resume");
    auto cfg = test::tiny_config(mode);
    cfg.steps = 6;
    cfg.checkpoint_every = 3;
    const auto full = fit(data, cfg, quiet_run(dir.path() / "full"));

    auto half = cfg;
    half.steps = 3;
    fit(data, half, quiet_run(dir.path() / "split"));
    auto opts = quiet_run(dir.path() / "split");
    opts.resume = dir.path() / "split" / "step_3" / "checkpoint.pt";
    const auto resumed = fit(data, cfg, opts);

    CHECK(resumed.reports.size() == 3);
    CHECK(slurp(dir.path() / "full" / "metrics.jsonl") == slurp(dir.path() / "split" / "metrics.jsonl"));
    CHECK(line_count(dir.path() / "split" / "metrics.jsonl") == 6);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(resumed.reports[i].to_json() == full.reports[i + 3].to_json());
    }
    const auto a = snapshot_parameters(full.state.players.forward.net);
    const auto b = snapshot_parameters(resumed.state.players.forward.net);
    for (const auto& [name, t] : a) CHECK(torch::equal(t, b.at(name)));
    CHECK(full.state.k.k == resumed.state.k.k);
    CHECK(full.state.mu.k == resumed.state.mu.k);
  }
}

TEST_CASE("resume refuses a different config") {
  const auto data = make_toy_dataset(test::tiny_toy());
  test::TempDir dir("mismatch");
  auto cfg = test::tiny_config();
  cfg.steps = 3;
  fit(data, cfg, quiet_run(dir.path()));
  auto other = cfg;
  other.gamma = 0.5;
  auto opts = quiet_run(dir.path());
  opts.resume = dir.path() / "step_3" / "checkpoint.pt";
  CHECK_THROWS_AS(fit(data, other, opts), InvalidArgument);
}

TEST_CASE("steps = 0 gives an empty log and an initial checkpoint") {
  const auto data = make_toy_dataset(test::tiny_toy());
  test::TempDir dir("zero");
  auto cfg = test::tiny_config();
  cfg.steps = 0;
  const auto r = fit(data, cfg, quiet_run(dir.path()));
  CHECK(r.reports.empty());
  CHECK(line_count(dir.path() / "metrics.jsonl") == 0);
  REQUIRE(r.checkpoints.size() == 1);
  CHECK(fs::exists(dir.path() / "step_0" / "checkpoint.pt"));
  CHECK(load_checkpoint(r.checkpoints.front()).step == 0);
}

TEST_CASE("log line count equals steps; checkpoints land on schedule; summary written") {
  const auto data = make_toy_dataset(test::tiny_toy());
  test::TempDir dir("log");
  auto cfg = test::tiny_config();
  cfg.steps = 7;
  cfg.checkpoint_every = 3;
  FitOptions o;
  o.run_dir = dir.path();
  const auto r = fit(data, cfg, o);
  CHECK(line_count(dir.path() / "metrics.jsonl") == 7);
  CHECK(line_count(dir.path() / "timing.jsonl") == 7);
  for (int s : {0, 3, 6, 7}) CHECK(fs::exists(dir.path() / ("step_" + std::to_string(s)) / "checkpoint.pt"));
  CHECK(read_metrics_log(dir.path() / "metrics.jsonl").size() == 7);
  CHECK(fs::exists(dir.path() / "summary.json"));
  REQUIRE(r.summary);
  CHECK(r.summary->at("forward").contains("oracle_accuracy"));
  CHECK(TrainConfig::from_text(slurp(dir.path() / "config.ini")) == cfg);
}

TEST_CASE("checkpoint round-trip restores networks, controllers and optimizer moments") {
  const auto data = make_toy_dataset(test::tiny_toy(ToyDirection::involutive));
  test::TempDir dir("ckpt");
  auto cfg = test::tiny_config(TrainMode::bidirectional);
  auto st = test::tiny_state(cfg, data);
  for (int s = 0; s < 2; ++s) train_step(st, test::tiny_batch(data, s));
  const auto file = dir.path() / "c.pt";
  save_checkpoint(st, file);
  auto back = load_checkpoint(file);
  CHECK(back.step == 2);
  CHECK(back.config == cfg);
  CHECK(back.k.k == st.k.k);
  CHECK(back.mu.k == st.mu.k);
  CHECK(back.players.forward.net->branched());
  const auto r1 = train_step(st, test::tiny_batch(data, 2));
  const auto r2 = train_step(back, test::tiny_batch(data, 2));
  CHECK(r1.to_json() == r2.to_json());

  auto net = load_translator(file, "reverse");
  CHECK(net->spec() == st.players.reverse.net->spec());
  CHECK_THROWS_AS(load_translator(file, "sideways"), UsageError);
}

TEST_CASE("unreadable checkpoints raise I/O errors naming the path") {
  test::TempDir dir("bad");
  CHECK_THROWS_AS(load_checkpoint(dir.path() / "missing.pt"), IoError);
  const auto junk = dir.path() / "junk.pt";
  std::ofstream(junk) << "not a checkpoint";
  try {
    load_checkpoint(junk);
    FAIL("expected IoError");
  } catch (const IoError& e) {
    CHECK(e.path() == junk.string());
  }
}

TEST_CASE("divergence keeps the partial log") {
  auto spec = test::tiny_toy();
  auto toy = make_toy_dataset(spec);
  std::vector<PairedSample> samples;
  for (std::size_t i = 0; i < toy.size(); ++i) samples.push_back(toy.get(i));
  samples[5].x = samples[5].x.clone();
  samples[5].x[0][0][0] = std::numeric_limits<float>::quiet_NaN();
  auto data = PairedDataset::from_samples(samples, spec);
  std::vector<std::size_t> all(samples.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  data.set_split(all, {});

  test::TempDir dir("diverge");
  auto cfg = test::tiny_config();
  cfg.batch_size = 1;
  cfg.steps = 20;
  try {
    fit(data, cfg, quiet_run(dir.path()));
    FAIL("expected DivergedTraining");
  } catch (const DivergedTraining& e) {
    const auto step = e.last_report().step;
    CHECK(line_count(dir.path() / "metrics.jsonl") == static_cast<std::size_t>(step));
    CHECK(batch_indices(all, 1, cfg.seed, step).front() == 5);
  }
}
