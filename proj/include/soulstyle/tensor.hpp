#pragma once

#include <vector>
#include <cmath>
#include <cstddef>

#include "soulstyle/errors.hpp"

namespace soulstyle {

// Planar (channel-major) float image. Pixel values are expected in [0,1]
// when the image represents actual pixels; intermediate network
// activations reuse the same container without that constraint.
struct Image {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Image() = default;
  Image(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w), data(static_cast<size_t>(c) * h * w, fill) {}

  double& at(int c, int y, int x) {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[(static_cast<size_t>(c) * height + y) * width + x];
  }
  size_t size() const { return data.size(); }
  bool same_shape(const Image& o) const {
    return channels == o.channels && height == o.height && width == o.width;
  }
};

// H x W map in [0,1] marking the target object region.
struct Mask {
  int height = 0;
  int width = 0;
  std::vector<double> values;

  Mask() = default;
  Mask(int h, int w, double fill = 0.0)
      : height(h), width(w), values(static_cast<size_t>(h) * w, fill) {}

  double& at(int y, int x) { return values[static_cast<size_t>(y) * width + x]; }
  double at(int y, int x) const { return values[static_cast<size_t>(y) * width + x]; }
};

inline void require_valid_pixels(const Image& img, const char* what) {
  if (img.channels <= 0 || img.height <= 0 || img.width <= 0)
    throw InvalidInput(std::string(what) + ": empty image");
  for (double v : img.data)
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw InvalidInput(std::string(what) + ": pixel value outside [0,1] or non-finite");
}

inline void require_valid_mask(const Mask& m, const char* what) {
  if (m.height <= 0 || m.width <= 0) throw InvalidInput(std::string(what) + ": empty mask");
  for (double v : m.values)
    if (!std::isfinite(v) || v < 0.0 || v > 1.0)
      throw InvalidInput(std::string(what) + ": mask value outside [0,1] or non-finite");
}

}  // namespace soulstyle
