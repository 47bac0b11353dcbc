#pragma once

// Minimal static SVG emitter for the result plots. Output is plain text with
// fixed formatting so reruns diff cleanly.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <span>
#include <string>
#include <vector>

namespace rvesel::svg {

inline std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.6g", v);
  return buf;
}

struct Frame {
  double width = 640, height = 420;
  double left = 60, right = 20, top = 30, bottom = 45;
  double x_min = 0, x_max = 1, y_min = 0, y_max = 1;

  double px(double x) const {
    return left + (x - x_min) / (x_max - x_min) * (width - left - right);
  }
  double py(double y) const {
    return height - bottom - (y - y_min) / (y_max - y_min) * (height - top - bottom);
  }
};

class Canvas {
 public:
  explicit Canvas(const Frame& frame) : frame_(frame) {
    body_ += "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(frame.width) +
             "\" height=\"" + num(frame.height) + "\">\n";
    body_ += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  }

  void axes(const std::string& x_label, const std::string& y_label,
            const std::string& title) {
    line(frame_.x_min, frame_.y_min, frame_.x_max, frame_.y_min, "#333", 1.0, true);
    line(frame_.x_min, frame_.y_min, frame_.x_min, frame_.y_max, "#333", 1.0, true);
    text(frame_.width / 2, frame_.height - 8, x_label, "middle");
    raw("<text x=\"14\" y=\"" + num(frame_.height / 2) +
        "\" text-anchor=\"middle\" font-size=\"12\" font-family=\"sans-serif\" transform=\"rotate(-90 14 " +
        num(frame_.height / 2) + ")\">" + y_label + "</text>\n");
    text(frame_.width / 2, 18, title, "middle");
    for (int t = 0; t <= 4; ++t) {
      const double fx = frame_.x_min + (frame_.x_max - frame_.x_min) * t / 4.0;
      const double fy = frame_.y_min + (frame_.y_max - frame_.y_min) * t / 4.0;
      text(frame_.px(fx), frame_.height - frame_.bottom + 16, num(fx), "middle", 10);
      text(frame_.left - 6, frame_.py(fy) + 3, num(fy), "end", 10);
    }
  }

  void line(double x1, double y1, double x2, double y2, const std::string& color,
            double width = 1.0, bool data_coords = true) {
    const double ax = data_coords ? frame_.px(x1) : x1;
    const double ay = data_coords ? frame_.py(y1) : y1;
    const double bx = data_coords ? frame_.px(x2) : x2;
    const double by = data_coords ? frame_.py(y2) : y2;
    body_ += "<line x1=\"" + num(ax) + "\" y1=\"" + num(ay) + "\" x2=\"" + num(bx) +
             "\" y2=\"" + num(by) + "\" stroke=\"" + color + "\" stroke-width=\"" +
             num(width) + "\"/>\n";
  }

  void rect(double x, double y, double w, double h, const std::string& fill,
            double opacity = 1.0) {
    const double px0 = frame_.px(x);
    const double py1 = frame_.py(y + h);
    const double pw = frame_.px(x + w) - px0;
    const double ph = frame_.py(y) - py1;
    body_ += "<rect x=\"" + num(px0) + "\" y=\"" + num(py1) + "\" width=\"" + num(pw) +
             "\" height=\"" + num(ph) + "\" fill=\"" + fill + "\" fill-opacity=\"" +
             num(opacity) + "\"/>\n";
  }

  void circle(double x, double y, double r, const std::string& color, double opacity = 0.7) {
    body_ += "<circle cx=\"" + num(frame_.px(x)) + "\" cy=\"" + num(frame_.py(y)) +
             "\" r=\"" + num(r) + "\" fill=\"" + color + "\" fill-opacity=\"" + num(opacity) +
             "\"/>\n";
  }

  void text(double px, double py, const std::string& s, const std::string& anchor = "start",
            int size = 12) {
    body_ += "<text x=\"" + num(px) + "\" y=\"" + num(py) + "\" text-anchor=\"" + anchor +
             "\" font-size=\"" + std::to_string(size) + "\" font-family=\"sans-serif\">" + s +
             "</text>\n";
  }

  void raw(const std::string& s) { body_ += s; }

  void write(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    out << body_ << "</svg>\n";
  }

  const Frame& frame() const { return frame_; }

 private:
  Frame frame_;
  std::string body_;
};

/// Two overlaid histograms on a common binning.
inline void write_histogram(const std::string& path, std::span<const double> first,
                            std::span<const double> second, const std::string& first_name,
                            const std::string& second_name, const std::string& title) {
  double lo = 1e300, hi = -1e300;
  for (double v : first) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  for (double v : second) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  if (!(hi > lo)) {
    lo -= 0.5;
    hi += 0.5;
  }
  const int bins = 30;
  const double bin_w = (hi - lo) / bins;
  std::vector<double> h1(bins, 0.0), h2(bins, 0.0);
  const auto fill = [&](std::span<const double> data, std::vector<double>& h) {
    for (double v : data) {
      int b = static_cast<int>((v - lo) / bin_w);
      b = std::clamp(b, 0, bins - 1);
      h[static_cast<std::size_t>(b)] += 1.0 / static_cast<double>(data.size());
    }
  };
  fill(first, h1);
  fill(second, h2);
  double peak = 1e-12;
  for (int b = 0; b < bins; ++b)
    peak = std::max({peak, h1[static_cast<std::size_t>(b)], h2[static_cast<std::size_t>(b)]});

  Frame frame;
  frame.x_min = lo;
  frame.x_max = hi;
  frame.y_min = 0.0;
  frame.y_max = peak * 1.1;
  Canvas canvas(frame);
  for (int b = 0; b < bins; ++b) {
    canvas.rect(lo + b * bin_w, 0.0, bin_w, h1[static_cast<std::size_t>(b)], "#4477aa", 0.45);
    canvas.rect(lo + b * bin_w, 0.0, bin_w, h2[static_cast<std::size_t>(b)], "#cc6677", 0.45);
  }
  canvas.axes("value", "fraction per bin", title);
  canvas.text(frame.width - 180, 40, first_name + " (blue)", "start", 11);
  canvas.text(frame.width - 180, 56, second_name + " (red)", "start", 11);
  canvas.write(path);
}

/// Scatter with a shaded vertical acceptance band [band_lo, band_hi] in x.
inline void write_scatter(const std::string& path, std::span<const double> xs,
                          std::span<const double> ys, double band_lo, double band_hi,
                          const std::string& x_label, const std::string& y_label,
                          const std::string& title) {
  double xlo = 1e300, xhi = -1e300, ylo = 1e300, yhi = -1e300;
  for (double v : xs) {
    xlo = std::min(xlo, v);
    xhi = std::max(xhi, v);
  }
  for (double v : ys) {
    ylo = std::min(ylo, v);
    yhi = std::max(yhi, v);
  }
  const double xpad = 0.05 * (xhi - xlo + 1e-12);
  const double ypad = 0.05 * (yhi - ylo + 1e-12);
  Frame frame;
  frame.x_min = xlo - xpad;
  frame.x_max = xhi + xpad;
  frame.y_min = ylo - ypad;
  frame.y_max = yhi + ypad;
  Canvas canvas(frame);
  canvas.rect(std::max(band_lo, frame.x_min), frame.y_min,
              std::min(band_hi, frame.x_max) - std::max(band_lo, frame.x_min),
              frame.y_max - frame.y_min, "#88cc88", 0.25);
  for (std::size_t k = 0; k < xs.size(); ++k) canvas.circle(xs[k], ys[k], 2.0, "#4477aa");
  canvas.axes(x_label, y_label, title);
  canvas.write(path);
}

/// log-log variance decay with the fitted power law.
inline void write_loglog(const std::string& path, std::span<const double> sizes,
                         std::span<const double> variances, double slope,
                         const std::string& title) {
  std::vector<double> lx, ly;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    lx.push_back(std::log10(sizes[k]));
    ly.push_back(std::log10(variances[k]));
  }
  Frame frame;
  frame.x_min = *std::min_element(lx.begin(), lx.end()) - 0.1;
  frame.x_max = *std::max_element(lx.begin(), lx.end()) + 0.1;
  frame.y_min = *std::min_element(ly.begin(), ly.end()) - 0.2;
  frame.y_max = *std::max_element(ly.begin(), ly.end()) + 0.2;
  Canvas canvas(frame);
  const double mean_x = (lx.front() + lx.back()) / 2.0;
  const double mean_y = (ly.front() + ly.back()) / 2.0;
  canvas.line(frame.x_min, mean_y + slope * (frame.x_min - mean_x), frame.x_max,
              mean_y + slope * (frame.x_max - mean_x), "#cc6677", 1.5);
  for (std::size_t k = 0; k < lx.size(); ++k) canvas.circle(lx[k], ly[k], 3.5, "#4477aa");
  canvas.axes("log10 L", "log10 Var", title + " (slope " + num(slope) + ")");
  canvas.write(path);
}

}  // namespace rvesel::svg
