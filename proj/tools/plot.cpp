#include "plot.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>

#include <opencv2/imgcodecs.hpp>
#include <opencv2/imgproc.hpp>

#include "joined/pipeline.hpp"

namespace joined::tools {

namespace {

const cv::Scalar kColors[] = {{200, 80, 30}, {40, 140, 40}, {30, 30, 200},
                              {150, 50, 150}, {0, 150, 200}, {90, 90, 90}};

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

std::optional<double> number(const std::string& s) {
  if (s.empty()) return std::nullopt;
  try {
    std::size_t used = 0;
    const double v = std::stod(s, &used);
    if (used != s.size()) return std::nullopt;
    return v;
  } catch (const std::exception&) {
    return std::nullopt;
  }
}

cv::Mat tile_rgb(const Tensor& img, int size) {
  cv::Mat m(img.h(), img.w(), CV_8UC3);
  for (int y = 0; y < img.h(); ++y) {
    for (int x = 0; x < img.w(); ++x) {
      for (int c = 0; c < 3; ++c) {
        const float v = std::clamp(img(0, c, y, x), 0.0f, 1.0f);
        m.at<cv::Vec3b>(y, x)[2 - c] = static_cast<std::uint8_t>(std::lround(v * 255));
      }
    }
  }
  cv::Mat out;
  cv::resize(m, out, {size, size}, 0, 0, cv::INTER_AREA);
  return out;
}

cv::Mat tile_maps(const Tensor& t, int size, bool color) {
  cv::Mat m = cv::Mat::zeros(std::max(1, t.h()), std::max(1, t.w()), CV_8UC3);
  for (int y = 0; y < t.h(); ++y) {
    for (int x = 0; x < t.w(); ++x) {
      auto& px = m.at<cv::Vec3b>(y, x);
      if (!color) {
        const auto v = static_cast<std::uint8_t>(std::lround(std::clamp(t(0, 0, y, x), 0.0f, 1.0f) * 255));
        px = {v, v, v};
      } else {
        px[2] = static_cast<std::uint8_t>(std::lround(std::clamp(t(0, 0, y, x), 0.0f, 1.0f) * 255));
        px[1] = static_cast<std::uint8_t>(std::lround(std::clamp(t(0, 1, y, x), 0.0f, 1.0f) * 255));
      }
    }
  }
  cv::Mat out;
  cv::resize(m, out, {size, size}, 0, 0, cv::INTER_NEAREST);
  return out;
}

cv::Mat tile_mask(const LabelMask& mask, int size) {
  cv::Mat m(mask.h(), mask.w(), CV_8UC3, cv::Scalar(0, 0, 0));
  for (int y = 0; y < mask.h(); ++y) {
    for (int x = 0; x < mask.w(); ++x) {
      if (mask(y, x) == Label::OD) m.at<cv::Vec3b>(y, x) = {60, 160, 230};
      if (mask(y, x) == Label::OC) m.at<cv::Vec3b>(y, x) = {255, 255, 255};
    }
  }
  cv::Mat out;
  cv::resize(m, out, {size, size}, 0, 0, cv::INTER_NEAREST);
  return out;
}

}  // namespace

void plot_loss_csv(const std::filesystem::path& csv, const std::filesystem::path& png) {
  std::ifstream in(csv);
  if (!in) throw InputError("cannot open " + csv.string());
  std::string line;
  if (!std::getline(in, line)) throw InputError(csv.string() + ": empty file");
  const auto header = split(line);
  std::vector<std::vector<std::optional<double>>> cols(header.size());
  while (std::getline(in, line)) {
    auto cells = split(line);
    cells.resize(header.size());
    for (std::size_t i = 0; i < header.size(); ++i) cols[i].push_back(number(cells[i]));
  }
  if (cols.empty() || cols[0].empty()) throw InputError(csv.string() + ": no rows");

  double xmin = std::numeric_limits<double>::max(), xmax = -xmin;
  double ymin = 0.0, ymax = -std::numeric_limits<double>::max();
  std::vector<std::size_t> series;
  for (std::size_t c = 1; c < cols.size(); ++c) {
    bool any = false;
    for (std::size_t r = 0; r < cols[c].size(); ++r) {
      if (!cols[c][r] || !cols[0][r]) continue;
      any = true;
      ymax = std::max(ymax, *cols[c][r]);
      ymin = std::min(ymin, *cols[c][r]);
    }
    if (any) series.push_back(c);
  }
  for (const auto& x : cols[0]) {
    if (x) {
      xmin = std::min(xmin, *x);
      xmax = std::max(xmax, *x);
    }
  }
  if (series.empty()) throw InputError(csv.string() + ": no numeric series");
  if (xmax <= xmin) xmax = xmin + 1;
  if (ymax <= ymin) ymax = ymin + 1;

  const int W = 720, H = 440, L = 60, R = 140, T = 20, B = 40;
  cv::Mat img(H, W, CV_8UC3, cv::Scalar(255, 255, 255));
  auto px = [&](double x, double y) {
    return cv::Point(L + static_cast<int>((x - xmin) / (xmax - xmin) * (W - L - R)),
                     H - B - static_cast<int>((y - ymin) / (ymax - ymin) * (H - T - B)));
  };
  cv::rectangle(img, {L, T}, {W - R, H - B}, cv::Scalar(0, 0, 0));
  for (int k = 0; k <= 4; ++k) {
    const double y = ymin + (ymax - ymin) * k / 4.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", y);
    cv::putText(img, buf, {4, px(xmin, y).y + 4}, cv::FONT_HERSHEY_SIMPLEX, 0.4, {0, 0, 0});
  }
  cv::putText(img, header[0], {W / 2 - 20, H - 10}, cv::FONT_HERSHEY_SIMPLEX, 0.5, {0, 0, 0});
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto c = series[s];
    const auto color = kColors[s % std::size(kColors)];
    std::optional<cv::Point> prev;
    for (std::size_t r = 0; r < cols[c].size(); ++r) {
      if (!cols[c][r] || !cols[0][r]) {
        prev.reset();
        continue;
      }
      const auto p = px(*cols[0][r], *cols[c][r]);
      if (prev) cv::line(img, *prev, p, color, 1, cv::LINE_AA);
      prev = p;
    }
    const int ly = T + 20 + 20 * static_cast<int>(s);
    cv::line(img, {W - R + 10, ly - 4}, {W - R + 30, ly - 4}, color, 2);
    cv::putText(img, header[c], {W - R + 36, ly}, cv::FONT_HERSHEY_SIMPLEX, 0.45, {0, 0, 0});
  }
  if (!cv::imwrite(png.string(), img)) throw std::runtime_error("cannot write " + png.string());
}

void plot_panel(nn::JsdmNet<float>& coarse, nn::FsmNet<float>* fsm, const FundusSample& s,
                const config::RunConfig& cfg, const std::filesystem::path& png) {
  constexpr int kTile = 256;
  const auto r = pipeline::run_coarse(coarse, s.image, cfg);
  std::vector<cv::Mat> tiles{tile_rgb(s.image, kTile)};
  if (!r.distance.empty()) tiles.push_back(tile_maps(r.distance, kTile, false));
  if (!r.heatmap.empty()) tiles.push_back(tile_maps(r.heatmap, kTile, true));
  tiles.push_back(tile_mask(pipeline::to_original(r.mask, r), kTile));
  if (fsm) tiles.push_back(tile_mask(pipeline::run_fine_seg(*fsm, s.image, r, cfg), kTile));
  cv::Mat row;
  cv::hconcat(tiles, row);
  if (!cv::imwrite(png.string(), row)) throw std::runtime_error("cannot write " + png.string());
}

}  // namespace joined::tools
