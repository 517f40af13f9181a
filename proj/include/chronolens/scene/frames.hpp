#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "chronolens/core/digest.hpp"
#include "chronolens/core/error.hpp"

namespace chronolens::scene {

struct Rgb {
  std::uint8_t r = 0, g = 0, b = 0;
  friend bool operator==(const Rgb&, const Rgb&) = default;
};

/// Row-major 8-bit RGB image.
class RgbFrame {
 public:
  RgbFrame() = default;

  RgbFrame(int width, int height, Rgb fill = {}, double capture_time_s = 0.0)
      : width_(width), height_(height), capture_time_s_(capture_time_s) {
    check_dims(width, height);
    pixels_.resize(static_cast<std::size_t>(width) * height * 3);
    for (std::size_t i = 0; i < pixels_.size(); i += 3) {
      pixels_[i] = fill.r;
      pixels_[i + 1] = fill.g;
      pixels_[i + 2] = fill.b;
    }
  }

  RgbFrame(int width, int height, std::vector<std::uint8_t> pixels, double capture_time_s = 0.0)
      : width_(width), height_(height), capture_time_s_(capture_time_s), pixels_(std::move(pixels)) {
    check_dims(width, height);
    if (pixels_.size() != static_cast<std::size_t>(width) * height * 3) {
      throw DataError("rgb frame: pixel buffer length " + std::to_string(pixels_.size()) +
                      " != width*height*3");
    }
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  bool empty() const noexcept { return pixels_.empty(); }
  double capture_time_s() const noexcept { return capture_time_s_; }
  void set_capture_time_s(double t) noexcept { capture_time_s_ = t; }

  std::span<const std::uint8_t> bytes() const noexcept { return pixels_; }
  std::span<std::uint8_t> bytes() noexcept { return pixels_; }

  Rgb at(int x, int y) const {
    const std::size_t i = index(x, y);
    return {pixels_[i], pixels_[i + 1], pixels_[i + 2]};
  }

  void set(int x, int y, Rgb c) {
    const std::size_t i = index(x, y);
    pixels_[i] = c.r;
    pixels_[i + 1] = c.g;
    pixels_[i + 2] = c.b;
  }

  /// Pixel content only; capture time is metadata.
  friend bool operator==(const RgbFrame& a, const RgbFrame& b) {
    return a.width_ == b.width_ && a.height_ == b.height_ && a.pixels_ == b.pixels_;
  }

 private:
  static void check_dims(int w, int h) {
    if (w <= 0 || h <= 0) {
      throw DataError("rgb frame: dimensions must be positive, got " + std::to_string(w) + "x" +
                      std::to_string(h));
    }
  }
  std::size_t index(int x, int y) const {
    return (static_cast<std::size_t>(y) * width_ + x) * 3;
  }

  int width_ = 0;
  int height_ = 0;
  double capture_time_s_ = 0.0;
  std::vector<std::uint8_t> pixels_;
};

/// Temperature grid in degrees Celsius.
class ThermalFrame {
 public:
  static constexpr double kMinPlausibleC = -40.0;
  static constexpr double kMaxPlausibleC = 150.0;

  ThermalFrame() = default;

  ThermalFrame(int width, int height, std::vector<double> temps, double capture_time_s = 0.0,
               std::optional<double> ambient_hint_c = std::nullopt)
      : width_(width),
        height_(height),
        capture_time_s_(capture_time_s),
        ambient_hint_c_(ambient_hint_c),
        temps_(std::move(temps)) {
    if (width <= 0 || height <= 0) throw DataError("thermal frame: dimensions must be positive");
    if (temps_.size() != static_cast<std::size_t>(width) * height) {
      throw DataError("thermal frame: buffer length " + std::to_string(temps_.size()) +
                      " != width*height");
    }
    for (std::size_t i = 0; i < temps_.size(); ++i) {
      const double t = temps_[i];
      if (!std::isfinite(t) || t < kMinPlausibleC || t > kMaxPlausibleC) {
        throw DataError("thermal frame: temps[" + std::to_string(i) + "] = " + std::to_string(t) +
                        " outside plausible range [-40, 150] C");
      }
    }
  }

  static ThermalFrame uniform(int width, int height, double temp_c, double capture_time_s = 0.0) {
    return ThermalFrame(width, height,
                        std::vector<double>(static_cast<std::size_t>(width) * height, temp_c),
                        capture_time_s);
  }

  int width() const noexcept { return width_; }
  int height() const noexcept { return height_; }
  std::size_t size() const noexcept { return temps_.size(); }
  double capture_time_s() const noexcept { return capture_time_s_; }
  std::optional<double> ambient_hint_c() const noexcept { return ambient_hint_c_; }
  std::span<const double> temps() const noexcept { return temps_; }
  double at(int x, int y) const { return temps_[static_cast<std::size_t>(y) * width_ + x]; }

  friend bool operator==(const ThermalFrame&, const ThermalFrame&) = default;

 private:
  int width_ = 0;
  int height_ = 0;
  double capture_time_s_ = 0.0;
  std::optional<double> ambient_hint_c_;
  std::vector<double> temps_;
};

/// Unitless thermal grid in [0, 1], produced by normalize_thermal.
struct NormalizedThermal {
  int width = 0;
  int height = 0;
  std::vector<double> values;
};

/// Boolean grid shared by contact masks and trace regions.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> cells;

  Mask() = default;
  Mask(int w, int h) : width(w), height(h), cells(static_cast<std::size_t>(w) * h, 0) {}

  bool at(int x, int y) const { return cells[static_cast<std::size_t>(y) * width + x] != 0; }
  void set(int x, int y, bool v = true) {
    cells[static_cast<std::size_t>(y) * width + x] = v ? 1 : 0;
  }
  std::size_t popcount() const {
    std::size_t n = 0;
    for (auto c : cells) n += c != 0;
    return n;
  }
  friend bool operator==(const Mask&, const Mask&) = default;
};

/// Axis-aligned pixel rectangle.
struct Rect {
  int x = 0, y = 0, w = 0, h = 0;
  friend bool operator==(const Rect&, const Rect&) = default;
};

inline Mask rect_mask(int width, int height, const Rect& r) {
  if (r.w <= 0 || r.h <= 0 || r.x < 0 || r.y < 0 || r.x + r.w > width || r.y + r.h > height) {
    throw DataError("rect (" + std::to_string(r.x) + "," + std::to_string(r.y) + "," +
                    std::to_string(r.w) + "," + std::to_string(r.h) + ") outside " +
                    std::to_string(width) + "x" + std::to_string(height) + " grid");
  }
  Mask m(width, height);
  for (int y = r.y; y < r.y + r.h; ++y)
    for (int x = r.x; x < r.x + r.w; ++x) m.set(x, y);
  return m;
}

inline double mask_iou(const Mask& a, const Mask& b) {
  if (a.width != b.width || a.height != b.height) throw UsageError("mask_iou: dimension mismatch");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.cells.size(); ++i) {
    inter += (a.cells[i] && b.cells[i]);
    uni += (a.cells[i] || b.cells[i]);
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

/// Content hash of pixels and dimensions; independent of file encoding.
inline void hash_into(Sha256& h, const RgbFrame& f) {
  h.field("rgb");
  h.update_u64(static_cast<std::uint64_t>(f.width()));
  h.update_u64(static_cast<std::uint64_t>(f.height()));
  h.update(f.bytes());
}

}  // namespace chronolens::scene
