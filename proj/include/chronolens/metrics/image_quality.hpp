#pragma once

#include <array>
#include <cmath>
#include <limits>
#include <string>
#include <vector>

#include "chronolens/core/error.hpp"
#include "chronolens/scene/frames.hpp"

namespace chronolens::metrics {

using scene::RgbFrame;

inline void require_same_dims(const RgbFrame& a, const RgbFrame& b, const char* op) {
  if (a.width() != b.width() || a.height() != b.height()) {
    throw UsageError(std::string(op) + ": dimension mismatch " + std::to_string(a.width()) + "x" +
                     std::to_string(a.height()) + " vs " + std::to_string(b.width()) + "x" +
                     std::to_string(b.height()));
  }
}

/// Peak signal-to-noise ratio in dB over all pixels and channels, MAX = 255.
/// Identical images return +infinity.
inline double psnr(const RgbFrame& reference, const RgbFrame& candidate) {
  require_same_dims(reference, candidate, "psnr");
  const auto a = reference.bytes();
  const auto b = candidate.bytes();
  double sse = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    sse += d * d;
  }
  const double mse = sse / static_cast<double>(a.size());
  if (mse == 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(255.0 * 255.0 / mse);
}

struct SsimParams {
  int window = 11;
  double sigma = 1.5;
  double k1 = 0.01;
  double k2 = 0.03;
  double dynamic_range = 255.0;
};

namespace detail {

inline std::vector<double> luminance_plane(const RgbFrame& f) {
  const auto px = f.bytes();
  std::vector<double> y(static_cast<std::size_t>(f.width()) * f.height());
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] = 0.299 * px[3 * i] + 0.587 * px[3 * i + 1] + 0.114 * px[3 * i + 2];
  }
  return y;
}

inline std::vector<double> gaussian_kernel_1d(int size, double sigma) {
  std::vector<double> k(size);
  const double c = (size - 1) / 2.0;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    k[i] = std::exp(-((i - c) * (i - c)) / (2.0 * sigma * sigma));
    sum += k[i];
  }
  for (auto& v : k) v /= sum;
  return k;
}

// Separable "valid" filtering: output is (w-k+1) x (h-k+1).
inline std::vector<double> filter_valid(const std::vector<double>& img, int w, int h,
                                        const std::vector<double>& k) {
  const int n = static_cast<int>(k.size());
  const int ow = w - n + 1;
  const int oh = h - n + 1;
  std::vector<double> tmp(static_cast<std::size_t>(ow) * h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * img[static_cast<std::size_t>(y) * w + x + i];
      tmp[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(ow) * oh);
  for (int y = 0; y < oh; ++y) {
    for (int x = 0; x < ow; ++x) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) s += k[i] * tmp[static_cast<std::size_t>(y + i) * ow + x];
      out[static_cast<std::size_t>(y) * ow + x] = s;
    }
  }
  return out;
}

}  // namespace detail

/// Mean SSIM on the BT.601 luminance channel, Gaussian window, averaged over
/// every window position fully inside the image.
inline double ssim(const RgbFrame& reference, const RgbFrame& candidate, const SsimParams& p = {}) {
  require_same_dims(reference, candidate, "ssim");
  const int w = reference.width();
  const int h = reference.height();
  if (w < p.window || h < p.window) {
    throw UsageError("ssim: image " + std::to_string(w) + "x" + std::to_string(h) +
                     " smaller than the " + std::to_string(p.window) + "px window");
  }
  const auto x = detail::luminance_plane(reference);
  const auto y = detail::luminance_plane(candidate);
  std::vector<double> xx(x.size()), yy(x.size()), xy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    xx[i] = x[i] * x[i];
    yy[i] = y[i] * y[i];
    xy[i] = x[i] * y[i];
  }
  const auto k = detail::gaussian_kernel_1d(p.window, p.sigma);
  const auto mu_x = detail::filter_valid(x, w, h, k);
  const auto mu_y = detail::filter_valid(y, w, h, k);
  const auto e_xx = detail::filter_valid(xx, w, h, k);
  const auto e_yy = detail::filter_valid(yy, w, h, k);
  const auto e_xy = detail::filter_valid(xy, w, h, k);
  const double c1 = (p.k1 * p.dynamic_range) * (p.k1 * p.dynamic_range);
  const double c2 = (p.k2 * p.dynamic_range) * (p.k2 * p.dynamic_range);
  double total = 0.0;
  for (std::size_t i = 0; i < mu_x.size(); ++i) {
    const double mx = mu_x[i];
    const double my = mu_y[i];
    const double var_x = e_xx[i] - mx * mx;
    const double var_y = e_yy[i] - my * my;
    const double cov = e_xy[i] - mx * my;
    const double num = (2.0 * mx * my + c1) * (2.0 * cov + c2);
    const double den = (mx * mx + my * my + c1) * (var_x + var_y + c2);
    total += num / den;
  }
  return total / static_cast<double>(mu_x.size());
}

}  // namespace chronolens::metrics
