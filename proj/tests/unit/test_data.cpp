#include "support/doctest_torch.hpp"

#include <fstream>
#include <limits>

#include "dino/data.hpp"
#include "dino/errors.hpp"
#include "support/temp_dir.hpp"

using namespace dino;

namespace {

constexpr ToyDirection kDirections[] = {ToyDirection::informative_target,
                                        ToyDirection::informative_source,
                                        ToyDirection::involutive};

ToyDomainSpec spec_for(ToyDirection d) {
  ToyDomainSpec s;
  s.direction = d;
  return s;
}

// Reference decoder: plain SSE over every template, first minimum wins.
int brute_force_decode(const torch::Tensor& image, const ToyDomainSpec& spec, Side side) {
  const auto modality = spec.modality(side);
  const int variants = modality == ToyModality::label_map ? 1 : spec.textures;
  const auto img = image.to(torch::kFloat64);
  double best = std::numeric_limits<double>::infinity();
  int best_state = -1;
  for (int state = 0; state < spec.state_count(); ++state) {
    const auto a = ToyAttributes::from_index(state, spec);
    for (int t = 0; t < variants; ++t) {
      const double sse =
          (render_toy_image(spec, a, t, modality).to(torch::kFloat64) - img).square().sum().item<double>();
      if (sse < best) {
        best = sse;
        best_state = state;
      }
    }
  }
  return best_state;
}

}  // namespace

TEST_CASE("default space has 512 states and enumerates bijectively") {
  const ToyDomainSpec s;
  CHECK(s.state_count() == 512);
  for (int i = 0; i < s.state_count(); ++i) CHECK(ToyAttributes::from_index(i, s).index(s) == i);
}

TEST_CASE("generation is deterministic") {
  for (auto d : kDirections) {
    const auto s = spec_for(d);
    const ToyAttributes a{3, 5, 2, 1};
    const auto p = generate_toy_pair(s, a);
    const auto q = generate_toy_pair(s, a);
    CHECK(torch::equal(p.x, q.x));
    CHECK(torch::equal(p.y, q.y));
    CHECK(p.name == q.name);
    REQUIRE(p.meta);
    CHECK(p.meta->attributes == a);
  }
}

TEST_CASE("channels follow the direction") {
  CHECK(generate_toy_pair(spec_for(ToyDirection::informative_target), {}).x.size(0) == 1);
  CHECK(generate_toy_pair(spec_for(ToyDirection::informative_target), {}).y.size(0) == 3);
  CHECK(generate_toy_pair(spec_for(ToyDirection::informative_source), {}).y.size(0) == 1);
  const auto inv = generate_toy_pair(spec_for(ToyDirection::involutive), {});
  CHECK(torch::equal(inv.y, -inv.x));
}

TEST_CASE("silhouettes of both sides equal the rendered mask") {
  for (auto d : kDirections) {
    const auto s = spec_for(d);
    for (int state = 0; state < s.state_count(); state += 7) {
      const auto a = ToyAttributes::from_index(state, s);
      const auto p = generate_toy_pair(s, a);
      const auto mask = render_toy_mask(s, a);
      CHECK(torch::equal(toy_silhouette(p.x, s.modality(Side::source)), mask));
      CHECK(torch::equal(toy_silhouette(p.y, s.modality(Side::target)), mask));
    }
  }
}

TEST_CASE("out-of-range attributes and empty spaces are rejected") {
  const ToyDomainSpec s;
  CHECK_THROWS_AS(generate_toy_pair(s, {8, 0, 0, 0}), InvalidArgument);
  CHECK_THROWS_AS(generate_toy_pair(s, {0, -1, 0, 0}), InvalidArgument);
  CHECK_THROWS_AS(generate_toy_pair(s, {0, 0, 4, 0}), InvalidArgument);
  CHECK_THROWS_AS(generate_toy_pair(s, {0, 0, 0, 2}), InvalidArgument);
  ToyDomainSpec empty;
  empty.grid = 0;
  CHECK_THROWS_AS(empty.validate(), UsageError);
}

TEST_CASE("oracle round-trip over the whole attribute space, both sides") {
  for (auto d : kDirections) {
    const auto s = spec_for(d);
    const ToyOracle src(s, Side::source);
    const ToyOracle tgt(s, Side::target);
    int wrong = 0;
    for (int state = 0; state < s.state_count(); ++state) {
      const auto a = ToyAttributes::from_index(state, s);
      const auto p = generate_toy_pair(s, a);
      const auto rx = src.decode(p.x);
      const auto ry = tgt.decode(p.y);
      if (!(rx.attributes == a) || !(ry.attributes == a)) ++wrong;
      if (rx.score != 1.0 || ry.score != 1.0) ++wrong;
    }
    CHECK(wrong == 0);
  }
}

TEST_CASE("oracle is robust to sigma 0.05 noise") {
  for (auto d : kDirections) {
    const auto s = spec_for(d);
    const ToyOracle tgt(s, Side::target);
    auto g = at::make_generator<at::CPUGeneratorImpl>(77);
    int wrong = 0;
    for (int state = 0; state < s.state_count(); state += 3) {
      const auto a = ToyAttributes::from_index(state, s);
      const auto y = generate_toy_pair(s, a).y;
      const auto noisy = y + 0.05 * torch::randn(y.sizes(), g);
      if (!(tgt.decode(noisy).attributes == a)) ++wrong;
    }
    CHECK(wrong == 0);
  }
}

TEST_CASE("oracle agrees with a brute-force decoder, including ties") {
  const auto s = spec_for(ToyDirection::informative_source);
  auto g = at::make_generator<at::CPUGeneratorImpl>(5);
  std::vector<std::pair<torch::Tensor, Side>> cases{
      {torch::zeros({3, 32, 32}), Side::source},
      {torch::zeros({1, 32, 32}), Side::target},
      {torch::full({1, 32, 32}, -1.0f), Side::target},  // background only: every state ties
  };
  for (int i = 0; i < 4; ++i) cases.push_back({torch::rand({1, 32, 32}, g) * 2 - 1, Side::target});
  cases.push_back({torch::rand({3, 32, 32}, g) * 2 - 1, Side::source});
  for (const auto& [img, side] : cases) {
    const auto r = ToyOracle(s, side).decode(img);
    CHECK(r.attributes.index(s) == brute_force_decode(img, s, side));
    CHECK(r.score == doctest::Approx(std::exp(-r.mse / 0.01)));
    CHECK(r.score < 1.0);
  }
}

TEST_CASE("normalization is idempotent and maps 8-bit to [-1,1]") {
  auto u8 = torch::arange(0, 256, torch::kInt64).to(torch::kUInt8).reshape({1, 16, 16});
  const auto n = normalize_image(u8);
  CHECK(n.min().item<float>() == -1.0f);
  CHECK(n.max().item<float>() == 1.0f);
  CHECK(torch::equal(normalize_image(n), n));
  const auto wide = torch::linspace(-3, 3, 64).reshape({1, 8, 8});
  CHECK(torch::equal(normalize_image(normalize_image(wide)), normalize_image(wide)));
  CHECK(torch::allclose(denormalize_to_8bit(n).to(torch::kFloat64), u8.to(torch::kFloat64), 0, 1e-4));
}

TEST_CASE("splits are a pure function of (n, fraction, seed)") {
  const auto a = split_indices(512, 0.2, 3);
  const auto b = split_indices(512, 0.2, 3);
  const auto c = split_indices(512, 0.2, 4);
  CHECK(a == b);
  CHECK(a != c);
  CHECK(a.first.size() + a.second.size() == 512);
  std::vector<std::size_t> all = a.first;
  all.insert(all.end(), a.second.begin(), a.second.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < all.size(); ++i) CHECK(all[i] == i);

  const auto d1 = make_toy_dataset(ToyDomainSpec{});
  const auto d2 = make_toy_dataset(ToyDomainSpec{});
  CHECK(d1.test_indices() == d2.test_indices());
  CHECK(d1.size() == 512);
}

TEST_CASE("paired folders: empty, orphan, value range") {
  test::TempDir dir("folders");
  const auto x = dir.path() / "x";
  const auto y = dir.path() / "y";
  CHECK(load_paired_folder(x, y, 32).empty());
  std::filesystem::create_directories(x);
  std::filesystem::create_directories(y);
  CHECK(load_paired_folder(x, y, 32).empty());

  const auto p = generate_toy_pair(ToyDomainSpec{}, {1, 2, 3, 1});
  write_png(p.x, x / "a.png");
  write_png(p.y, y / "a.png");
  write_png(p.x, x / "b.png");
  try {
    load_paired_folder(x, y, 32);
    FAIL("expected InvalidArgument");
  } catch (const InvalidArgument& e) {
    CHECK(std::string(e.what()).find("b") != std::string::npos);
  }
  write_png(p.y, y / "b.png");
  const auto data = load_paired_folder(x, y, 16);
  REQUIRE(data.size() == 2);
  const auto s = data.get(0);
  CHECK(s.x.sizes() == torch::IntArrayRef({1, 16, 16}));
  CHECK(s.y.sizes() == torch::IntArrayRef({3, 16, 16}));
  CHECK(s.y.min().item<float>() >= -1.0f);
  CHECK(s.y.max().item<float>() <= 1.0f);
  CHECK(data.train_indices().size() == 2);
  CHECK(data.test_indices().size() == 2);
}

TEST_CASE("toy datasets round-trip through disk") {
  test::TempDir dir("roundtrip");
  ToyDomainSpec spec;
  spec.direction = ToyDirection::informative_source;
  spec.seed = 9;
  const auto mem = make_toy_dataset(spec);
  write_toy_dataset(mem, dir.path());
  const auto disk = load_dataset_root(dir.path());
  REQUIRE(disk.size() == mem.size());
  REQUIRE(disk.synthetic());
  CHECK(*disk.toy_spec() == spec);
  CHECK(disk.train_indices() == mem.train_indices());
  CHECK(disk.test_indices() == mem.test_indices());
  const ToyOracle oracle(spec, Side::target);
  for (std::size_t i = 0; i < disk.size(); i += 37) {
    const auto a = mem.get(i);
    const auto b = disk.get(i);
    CHECK(a.name == b.name);
    CHECK((a.x - b.x).abs().max().item<float>() <= 1.0f / 127.5f);
    CHECK((a.y - b.y).abs().max().item<float>() <= 1.0f / 127.5f);
    REQUIRE(b.meta);
    CHECK(oracle.decode(b.y).attributes == b.meta->attributes);
  }
  // A second write is byte-identical.
  test::TempDir again("roundtrip2");
  write_toy_dataset(mem, again.path());
  for (const char* f : {"meta.jsonl", "train.txt", "test.txt", "toy.txt", "x/s00007.png"}) {
    std::ifstream a(dir.path() / f, std::ios::binary), b(again.path() / f, std::ios::binary);
    const std::string sa((std::istreambuf_iterator<char>(a)), {}), sb((std::istreambuf_iterator<char>(b)), {});
    CHECK(sa == sb);
    CHECK_FALSE(sa.empty());
  }
}

TEST_CASE("batches stack samples in index order") {
  const auto data = make_toy_dataset(ToyDomainSpec{});
  const auto b = make_batch(data, {4, 1});
  CHECK(b.x.sizes() == torch::IntArrayRef({2, 1, 32, 32}));
  CHECK(torch::equal(b.y[0], data.get(4).y));
  CHECK(torch::equal(b.y[1], data.get(1).y));
}
