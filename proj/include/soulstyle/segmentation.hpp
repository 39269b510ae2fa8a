#pragma once

#include <optional>
#include <string>
#include <vector>

#include "soulstyle/tensor.hpp"

namespace soulstyle::segmentation {

enum class ProviderKind { external_model, file, synthetic };
enum class ShapeKind { rect, ellipse };

// Rectangle/ellipse in normalized [0,1] image coordinates (center + size).
struct ShapeSpec {
  ShapeKind shape = ShapeKind::rect;
  double cx = 0.5, cy = 0.5, w = 0.5, h = 0.5;
};

struct MaskProvider {
  ProviderKind kind = ProviderKind::synthetic;
  std::string endpoint_url;   // external_model
  std::string file_path;      // file
  ShapeSpec shape;            // synthetic

  static MaskProvider from_file(std::string path);
  static MaskProvider from_endpoint(std::string url);
  static MaskProvider from_shape(ShapeSpec spec);
};

// Resolves the object mask for an image. The external adapter posts the
// image and the referring expression to a segmentation endpoint, treats the
// returned score grid as logits (sigmoid then clamp) and bilinearly resizes
// to the image size. Throws on provider failure.
Mask get_mask(const Image& image, const std::string& object_text, const MaskProvider& provider);

// Score-grid postprocessing used by the external adapter: sigmoid, clamp to
// [0,1], bilinear resize to (out_h, out_w). Split out so it can be checked
// against a hand-computed grid.
Mask scores_to_mask(const std::vector<double>& scores, int score_h, int score_w,
                    int out_h, int out_w);

// value >= threshold -> 1, else 0. Threshold must lie in (0,1).
Mask binarize(const Mask& mask, double threshold);

// Mean of the mask values inside the (x, y, w, h) box.
double patch_mask_mean(const Mask& mask, int x, int y, int w, int h);

}  // namespace soulstyle::segmentation
