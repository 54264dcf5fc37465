#include "dino/metrics.hpp"

#include <cmath>
#include <numeric>
#include <sstream>

#include "dino/errors.hpp"

namespace dino {

namespace {

struct Plane {
  int h = 0;
  int w = 0;
  std::vector<double> v;
};

std::vector<Plane> planes_of(const torch::Tensor& t) {
  auto img = t.detach().to(torch::kCPU, torch::kDouble).contiguous();
  if (img.dim() == 2) img = img.unsqueeze(0);
  if (img.dim() != 3) throw InvalidArgument("ssim expects an [H,W] or [C,H,W] image");
  std::vector<Plane> out;
  const int C = static_cast<int>(img.size(0));
  const int H = static_cast<int>(img.size(1));
  const int W = static_cast<int>(img.size(2));
  const double* p = img.data_ptr<double>();
  for (int c = 0; c < C; ++c) {
    Plane pl{H, W, std::vector<double>(p + static_cast<std::ptrdiff_t>(c) * H * W,
                                        p + static_cast<std::ptrdiff_t>(c + 1) * H * W)};
    out.push_back(std::move(pl));
  }
  return out;
}

// Valid-mode separable filter.
Plane filter_valid(const Plane& in, const std::vector<double>& g) {
  const int k = static_cast<int>(g.size());
  const int oh = in.h - k + 1;
  const int ow = in.w - k + 1;
  std::vector<double> rows(static_cast<std::size_t>(in.h) * ow);
  for (int r = 0; r < in.h; ++r) {
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[i] * in.v[static_cast<std::size_t>(r) * in.w + c + i];
      rows[static_cast<std::size_t>(r) * ow + c] = s;
    }
  }
  Plane out{oh, ow, std::vector<double>(static_cast<std::size_t>(oh) * ow)};
  for (int r = 0; r < oh; ++r) {
    for (int c = 0; c < ow; ++c) {
      double s = 0.0;
      for (int i = 0; i < k; ++i) s += g[i] * rows[static_cast<std::size_t>(r + i) * ow + c];
      out.v[static_cast<std::size_t>(r) * ow + c] = s;
    }
  }
  return out;
}

Plane product(const Plane& a, const Plane& b) {
  Plane out{a.h, a.w, std::vector<double>(a.v.size())};
  for (std::size_t i = 0; i < a.v.size(); ++i) out.v[i] = a.v[i] * b.v[i];
  return out;
}

double ssim_plane(const Plane& a, const Plane& b, const std::vector<double>& g, double L) {
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  const auto mu_a = filter_valid(a, g);
  const auto mu_b = filter_valid(b, g);
  const auto e_aa = filter_valid(product(a, a), g);
  const auto e_bb = filter_valid(product(b, b), g);
  const auto e_ab = filter_valid(product(a, b), g);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_a.v.size(); ++i) {
    const double ma = mu_a.v[i];
    const double mb = mu_b.v[i];
    const double var_a = e_aa.v[i] - ma * ma;
    const double var_b = e_bb.v[i] - mb * mb;
    const double cov = e_ab.v[i] - ma * mb;
    total += ((2 * ma * mb + c1) * (2 * cov + c2)) /
             ((ma * ma + mb * mb + c1) * (var_a + var_b + c2));
  }
  return total / static_cast<double>(mu_a.v.size());
}

}  // namespace

double psnr(const torch::Tensor& a, const torch::Tensor& b, double max_value) {
  if (a.sizes() != b.sizes()) {
    std::ostringstream msg;
    msg << "psnr: shape mismatch " << a.sizes() << " vs " << b.sizes();
    throw InvalidArgument(msg.str());
  }
  if (!(max_value > 0.0)) throw InvalidArgument("psnr: max_value must be > 0");
  const double mse = (a.detach().to(torch::kDouble) - b.detach().to(torch::kDouble))
                         .square()
                         .mean()
                         .item<double>();
  if (mse == 0.0) return kPsnrCap;
  return std::min(kPsnrCap, 10.0 * std::log10(max_value * max_value / mse));
}

std::vector<double> ssim_gaussian_window(int size, double sigma) {
  std::vector<double> g(static_cast<std::size_t>(size));
  const double centre = (size - 1) / 2.0;
  for (int i = 0; i < size; ++i) {
    const double d = i - centre;
    g[static_cast<std::size_t>(i)] = std::exp(-(d * d) / (2.0 * sigma * sigma));
  }
  const double sum = std::accumulate(g.begin(), g.end(), 0.0);
  for (auto& v : g) v /= sum;
  return g;
}

double ssim(const torch::Tensor& a, const torch::Tensor& b, double data_range) {
  if (a.sizes() != b.sizes()) {
    std::ostringstream msg;
    msg << "ssim: shape mismatch " << a.sizes() << " vs " << b.sizes();
    throw InvalidArgument(msg.str());
  }
  const auto g = ssim_gaussian_window();
  const auto pa = planes_of(a);
  const auto pb = planes_of(b);
  if (pa.front().h < static_cast<int>(g.size()) || pa.front().w < static_cast<int>(g.size())) {
    throw InvalidArgument("ssim: image smaller than the " + std::to_string(g.size()) + "x" +
                          std::to_string(g.size()) + " window");
  }
  double total = 0.0;
  for (std::size_t c = 0; c < pa.size(); ++c) total += ssim_plane(pa[c], pb[c], g, data_range);
  return total / static_cast<double>(pa.size());
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["psnr"] = psnr;
  j["ssim"] = ssim;
  j["oracle_accuracy"] = oracle_accuracy ? nlohmann::json(*oracle_accuracy) : nlohmann::json();
  j["extra"] = extra;
  auto arr = nlohmann::json::array();
  for (const auto& s : samples) {
    nlohmann::json e;
    e["name"] = s.name;
    e["psnr"] = s.psnr;
    e["ssim"] = s.ssim;
    e["correct"] = s.correct ? nlohmann::json(*s.correct) : nlohmann::json();
    arr.push_back(std::move(e));
  }
  j["samples"] = std::move(arr);
  return j;
}

EvalReport EvalReport::from_json(const nlohmann::json& j) {
  EvalReport r;
  r.psnr = j.at("psnr").get<double>();
  r.ssim = j.at("ssim").get<double>();
  if (j.contains("oracle_accuracy") && !j.at("oracle_accuracy").is_null())
    r.oracle_accuracy = j.at("oracle_accuracy").get<double>();
  if (j.contains("extra")) r.extra = j.at("extra").get<std::map<std::string, double>>();
  // Summaries drop the per-sample breakdown.
  if (!j.contains("samples")) return r;
  for (const auto& e : j.at("samples")) {
    SampleScore s;
    s.name = e.at("name").get<std::string>();
    s.psnr = e.at("psnr").get<double>();
    s.ssim = e.at("ssim").get<double>();
    if (!e.at("correct").is_null()) s.correct = e.at("correct").get<bool>();
    r.samples.push_back(std::move(s));
  }
  return r;
}

EvalReport evaluate(const Predictor& predict, const PairedDataset& data,
                    const std::vector<std::size_t>& indices, const EvalOptions& opts) {
  if (opts.batch_size < 1) throw InvalidArgument("evaluate: batch_size must be >= 1");
  std::optional<ToyOracle> oracle;
  if (data.synthetic()) oracle.emplace(*data.toy_spec(), opts.reverse ? Side::source : Side::target);

  EvalReport report;
  std::size_t correct = 0;
  std::size_t decoded = 0;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(opts.batch_size)) {
    const auto end = std::min(indices.size(), start + static_cast<std::size_t>(opts.batch_size));
    std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                   indices.begin() + static_cast<std::ptrdiff_t>(end));
    Batch batch = make_batch(data, chunk);
    if (opts.reverse) std::swap(batch.x, batch.y);
    torch::Tensor pred;
    {
      torch::NoGradGuard no_grad;
      pred = predict(batch).detach();
    }
    if (pred.sizes() != batch.y.sizes()) {
      std::ostringstream msg;
      msg << "evaluate: prediction shape " << pred.sizes() << " does not match target "
          << batch.y.sizes();
      throw InvalidArgument(msg.str());
    }
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto p8 = denormalize_to_8bit(pred[static_cast<std::int64_t>(i)]);
      const auto t8 = denormalize_to_8bit(batch.y[static_cast<std::int64_t>(i)]);
      SampleScore s;
      s.name = data.name(chunk[i]);
      s.psnr = psnr(p8, t8, 255.0);
      s.ssim = ssim(p8, t8, 255.0);
      for (const auto& plugin : opts.plugins) report.extra[plugin.name] += plugin.score(p8, t8);
      if (oracle) {
        const auto sample = data.get(chunk[i]);
        if (sample.meta) {
          const bool ok = oracle->decode(pred[static_cast<std::int64_t>(i)]).attributes ==
                          sample.meta->attributes;
          s.correct = ok;
          correct += ok ? 1 : 0;
          ++decoded;
        }
      }
      report.psnr += s.psnr;
      report.ssim += s.ssim;
      report.samples.push_back(std::move(s));
    }
  }
  if (!report.samples.empty()) {
    const auto n = static_cast<double>(report.samples.size());
    report.psnr /= n;
    report.ssim /= n;
    for (auto& [name, v] : report.extra) v /= n;
  }
  if (decoded > 0) {
    report.oracle_accuracy = static_cast<double>(correct) / static_cast<double>(decoded);
  }
  return report;
}

EvalReport evaluate_translator(Translator& net, const PairedDataset& data,
                               const std::vector<std::size_t>& indices, const EvalOptions& opts,
                               Stream stream) {
  const bool was_training = net->is_training();
  net->eval();
  const Predictor predict = [&](const Batch& b) { return net->forward(b.x, stream); };
  auto report = evaluate(predict, data, indices, opts);
  net->train(was_training);
  return report;
}

double semantic_consistency(Translator& net, const PairedDataset& data,
                            const std::vector<std::size_t>& indices, int batch_size, bool reverse,
                            Stream stream) {
  if (!data.synthetic()) {
    throw UsageError("semantic_consistency requires a synthetic dataset with meta attributes");
  }
  if (indices.empty()) return 0.0;
  const ToyOracle oracle(*data.toy_spec(), reverse ? Side::source : Side::target);
  const bool was_training = net->is_training();
  net->eval();
  torch::NoGradGuard no_grad;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < indices.size(); start += static_cast<std::size_t>(batch_size)) {
    const auto end = std::min(indices.size(), start + static_cast<std::size_t>(batch_size));
    std::vector<std::size_t> chunk(indices.begin() + static_cast<std::ptrdiff_t>(start),
                                   indices.begin() + static_cast<std::ptrdiff_t>(end));
    const auto batch = make_batch(data, chunk);
    const auto out = net->forward(reverse ? batch.y : batch.x, stream);
    for (std::size_t i = 0; i < chunk.size(); ++i) {
      const auto meta = data.get(chunk[i]).meta;
      if (!meta) throw UsageError("sample '" + data.name(chunk[i]) + "' has no meta attributes");
      if (oracle.decode(out[static_cast<std::int64_t>(i)]).attributes == meta->attributes) ++correct;
    }
  }
  net->train(was_training);
  return static_cast<double>(correct) / static_cast<double>(indices.size());
}

}  // namespace dino
