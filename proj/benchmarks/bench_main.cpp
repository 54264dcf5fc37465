#include <benchmark/benchmark.h>

#include "dino/data.hpp"
#include "dino/metrics.hpp"
#include "dino/trainer.hpp"

using namespace dino;

namespace {

const PairedDataset& toy_data() {
  static const auto data = make_toy_dataset(ToyDomainSpec{});
  return data;
}

void BM_TrainStep(benchmark::State& state) {
  TrainConfig cfg;
  cfg.mode = static_cast<TrainMode>(state.range(0));
  ToyDomainSpec spec;
  spec.direction = ToyDirection::involutive;
  const auto data = make_toy_dataset(spec);
  auto ts = make_train_state(cfg, 3, 3, 32);
  std::int64_t step = 0;
  for (auto _ : state) {
    const auto batch = make_batch(data, batch_indices(data.train_indices(), cfg.batch_size, 0, step++));
    benchmark::DoNotOptimize(train_step(ts, batch));
  }
  state.SetLabel(std::string(to_string(cfg.mode)));
}
BENCHMARK(BM_TrainStep)->Arg(0)->Arg(1)->Arg(2)->Unit(benchmark::kMillisecond);

void BM_Ssim(benchmark::State& state) {
  const auto n = state.range(0);
  auto g = at::make_generator<at::CPUGeneratorImpl>(1);
  const auto a = torch::rand({3, n, n}, g) * 255;
  const auto b = torch::rand({3, n, n}, g) * 255;
  for (auto _ : state) benchmark::DoNotOptimize(ssim(a, b));
}
BENCHMARK(BM_Ssim)->Arg(32)->Arg(256)->Unit(benchmark::kMicrosecond);

void BM_OracleDecode(benchmark::State& state) {
  ToyDomainSpec spec;
  const ToyOracle oracle(spec, Side::target);
  const auto& data = toy_data();
  auto g = at::make_generator<at::CPUGeneratorImpl>(2);
  std::size_t i = 0;
  for (auto _ : state) {
    const auto y = data.get(i++ % data.size()).y;
    const auto noisy = y + 0.1 * torch::randn(y.sizes(), g);
    benchmark::DoNotOptimize(oracle.decode(noisy));
  }
}
BENCHMARK(BM_OracleDecode)->Unit(benchmark::kMicrosecond);

void BM_SemanticConsistency(benchmark::State& state) {
  const auto& data = toy_data();
  auto net = build_unet(UNetSpec::toy_plan(1, 3), false, 0);
  for (auto _ : state) benchmark::DoNotOptimize(semantic_consistency(net, data, data.test_indices()));
}
BENCHMARK(BM_SemanticConsistency)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
