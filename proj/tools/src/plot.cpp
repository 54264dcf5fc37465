#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "dino/errors.hpp"
#include "dino_cli/cli.hpp"

namespace fs = std::filesystem;

namespace dino::cli {

namespace {

constexpr int kWidth = 900;
constexpr int kHeight = 500;
constexpr int kLeft = 80, kRight = 180, kTop = 40, kBottom = 60;

struct Series {
  std::string label;
  cv::Scalar color;  // BGR
  std::vector<double> values;
};

std::string tick_label(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

// Plain line chart; no anti-aliasing so the output is byte-stable.
cv::Mat line_chart(const std::string& title, const std::vector<double>& steps,
                   const std::vector<Series>& series) {
  cv::Mat img(kHeight, kWidth, CV_8UC3, cv::Scalar(255, 255, 255));
  const int w = kWidth - kLeft - kRight;
  const int h = kHeight - kTop - kBottom;
  double lo = 0.0, hi = 0.0;
  for (const auto& s : series)
    for (double v : s.values) hi = std::max(hi, v);
  if (hi <= lo) hi = lo + 1e-3;
  hi *= 1.05;
  const double x0 = steps.front();
  const double x1 = std::max(steps.back(), x0 + 1.0);
  auto px = [&](double step, double v) {
    return cv::Point(kLeft + static_cast<int>(std::lround((step - x0) / (x1 - x0) * w)),
                     kTop + h - static_cast<int>(std::lround((v - lo) / (hi - lo) * h)));
  };

  const auto black = cv::Scalar(0, 0, 0);
  const auto grey = cv::Scalar(220, 220, 220);
  for (int i = 0; i <= 4; ++i) {
    const double v = lo + (hi - lo) * i / 4.0;
    const auto p = px(x0, v);
    cv::line(img, p, cv::Point(kLeft + w, p.y), grey, 1, cv::LINE_8);
    cv::putText(img, tick_label(v), cv::Point(8, p.y + 5), cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1,
                cv::LINE_8);
    const double s = x0 + (x1 - x0) * i / 4.0;
    const auto q = px(s, lo);
    cv::putText(img, tick_label(std::round(s)), cv::Point(q.x - 10, kTop + h + 20),
                cv::FONT_HERSHEY_SIMPLEX, 0.4, black, 1, cv::LINE_8);
  }
  cv::rectangle(img, cv::Point(kLeft, kTop), cv::Point(kLeft + w, kTop + h), black, 1, cv::LINE_8);
  cv::putText(img, title, cv::Point(kLeft, 25), cv::FONT_HERSHEY_SIMPLEX, 0.6, black, 1, cv::LINE_8);
  cv::putText(img, "step", cv::Point(kLeft + w / 2 - 15, kHeight - 15), cv::FONT_HERSHEY_SIMPLEX,
              0.5, black, 1, cv::LINE_8);

  int legend_y = kTop + 10;
  for (const auto& s : series) {
    std::vector<cv::Point> pts;
    pts.reserve(s.values.size());
    for (std::size_t i = 0; i < s.values.size(); ++i) pts.push_back(px(steps[i], s.values[i]));
    if (pts.size() == 1) pts.push_back(pts.front());
    cv::polylines(img, pts, false, s.color, 1, cv::LINE_8);
    cv::line(img, cv::Point(kLeft + w + 15, legend_y), cv::Point(kLeft + w + 40, legend_y), s.color,
             2, cv::LINE_8);
    cv::putText(img, s.label, cv::Point(kLeft + w + 48, legend_y + 5), cv::FONT_HERSHEY_SIMPLEX,
                0.45, black, 1, cv::LINE_8);
    legend_y += 22;
  }
  return img;
}

void save(const cv::Mat& img, const fs::path& file) {
  if (!cv::imwrite(file.string(), img)) throw IoError(file.string(), "cannot write plot");
}

}  // namespace

std::vector<fs::path> cmd_plot(const fs::path& run_dir, const std::optional<fs::path>& out_dir,
                               std::ostream& out, std::ostream& err) {
  const auto log = run_dir / "metrics.jsonl";
  if (!fs::exists(log)) throw IoError(log.string(), "no metrics log");
  const auto reports = read_metrics_log(log);
  if (reports.empty()) {
    err << "warning: " << log.string() << " is empty; nothing to plot\n";
    return {};
  }
  const auto dir = out_dir ? *out_dir : run_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError(dir.string(), "cannot create output directory: " + ec.message());

  std::vector<double> steps;
  Series k{"k", {200, 80, 0}, {}}, mu{"mu", {0, 0, 200}, {}};
  Series er{"e_real", {200, 80, 0}, {}}, ef{"e_fake", {0, 0, 200}, {}};
  Series fr{"f_real", {0, 150, 0}, {}}, ff{"f_fake", {160, 0, 160}, {}};
  const bool bidirectional = reports.front().mu.has_value();
  for (const auto& r : reports) {
    steps.push_back(static_cast<double>(r.step + 1));
    k.values.push_back(r.k);
    er.values.push_back(r.e_real);
    ef.values.push_back(r.e_fake);
    if (bidirectional) {
      mu.values.push_back(r.mu.value_or(0.0));
      fr.values.push_back(r.f_real.value_or(0.0));
      ff.values.push_back(r.f_fake.value_or(0.0));
    }
  }
  std::vector<Series> controllers{k};
  std::vector<Series> energies{er, ef};
  if (bidirectional) {
    controllers.push_back(mu);
    energies.push_back(fr);
    energies.push_back(ff);
  }
  const std::vector<fs::path> files{dir / "controller.png", dir / "energy.png"};
  save(line_chart("controller output", steps, controllers), files[0]);
  save(line_chart("reconstruction energies", steps, energies), files[1]);
  for (const auto& f : files) out << "wrote " << f.string() << '\n';
  return files;
}

}  // namespace dino::cli
