#include "soulstyle/segmentation.hpp"

#include <algorithm>
#include <cmath>

#include <httplib.h>
#include <json.hpp>

#include "soulstyle/imageio.hpp"
#include "soulstyle/kernels.hpp"

namespace soulstyle::segmentation {

namespace {

std::string base64_encode(const std::vector<unsigned char>& bytes) {
  static const char* table =
      "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  for (size_t i = 0; i < bytes.size(); i += 3) {
    uint32_t chunk = bytes[i] << 16;
    if (i + 1 < bytes.size()) chunk |= bytes[i + 1] << 8;
    if (i + 2 < bytes.size()) chunk |= bytes[i + 2];
    out += table[(chunk >> 18) & 63];
    out += table[(chunk >> 12) & 63];
    out += i + 1 < bytes.size() ? table[(chunk >> 6) & 63] : '=';
    out += i + 2 < bytes.size() ? table[chunk & 63] : '=';
  }
  return out;
}

Mask synthetic_mask(const Image& image, const ShapeSpec& spec) {
  Mask mask(image.height, image.width);
  const double hw = spec.w / 2.0, hh = spec.h / 2.0;
  for (int y = 0; y < image.height; ++y) {
    const double py = (y + 0.5) / image.height;
    for (int x = 0; x < image.width; ++x) {
      const double px = (x + 0.5) / image.width;
      bool inside;
      if (spec.shape == ShapeKind::rect) {
        inside = std::abs(px - spec.cx) <= hw && std::abs(py - spec.cy) <= hh;
      } else {
        const double dx = (px - spec.cx) / hw, dy = (py - spec.cy) / hh;
        inside = dx * dx + dy * dy <= 1.0;
      }
      mask.at(y, x) = inside ? 1.0 : 0.0;
    }
  }
  return mask;
}

Mask external_mask(const Image& image, const std::string& object_text,
                   const std::string& endpoint_url) {
  if (object_text.empty())
    throw InvalidInput("get_mask: empty object text for external provider");
  httplib::Client client(endpoint_url);
  client.set_read_timeout(60, 0);
  const nlohmann::json request = {
      {"text", object_text},
      {"height", image.height},
      {"width", image.width},
      {"image_png_base64", base64_encode(imageio::encode_png(image))},
  };
  auto res = client.Post("/segment", request.dump(), "application/json");
  if (!res)
    throw BackendError("segmentation endpoint unreachable: " + httplib::to_string(res.error()));
  if (res->status < 200 || res->status >= 300)
    throw BackendError("segmentation endpoint returned status " + std::to_string(res->status));
  const auto body = nlohmann::json::parse(res->body, nullptr, false);
  if (body.is_discarded())
    throw BackendError("segmentation endpoint returned non-JSON body");
  try {
    const int sh = body.at("height").get<int>();
    const int sw = body.at("width").get<int>();
    const auto scores = body.at("scores").get<std::vector<double>>();
    if (sh <= 0 || sw <= 0 || scores.size() != static_cast<size_t>(sh) * sw)
      throw BackendError("segmentation endpoint score grid shape mismatch");
    return scores_to_mask(scores, sh, sw, image.height, image.width);
  } catch (const nlohmann::json::exception& e) {
    throw BackendError(std::string("segmentation endpoint response malformed: ") + e.what());
  }
}

}  // namespace

MaskProvider MaskProvider::from_file(std::string path) {
  MaskProvider p;
  p.kind = ProviderKind::file;
  p.file_path = std::move(path);
  return p;
}

MaskProvider MaskProvider::from_endpoint(std::string url) {
  MaskProvider p;
  p.kind = ProviderKind::external_model;
  p.endpoint_url = std::move(url);
  return p;
}

MaskProvider MaskProvider::from_shape(ShapeSpec spec) {
  MaskProvider p;
  p.kind = ProviderKind::synthetic;
  p.shape = spec;
  return p;
}

Mask get_mask(const Image& image, const std::string& object_text, const MaskProvider& provider) {
  require_valid_pixels(image, "get_mask");
  switch (provider.kind) {
    case ProviderKind::synthetic:
      return synthetic_mask(image, provider.shape);
    case ProviderKind::file: {
      Mask mask = imageio::load_mask(provider.file_path);
      if (mask.height != image.height || mask.width != image.width)
        throw IoError("mask file " + provider.file_path + " is " +
                      std::to_string(mask.width) + "x" + std::to_string(mask.height) +
                      " but image is " + std::to_string(image.width) + "x" +
                      std::to_string(image.height));
      return mask;
    }
    case ProviderKind::external_model:
      return external_mask(image, object_text, provider.endpoint_url);
  }
  throw InvalidInput("get_mask: unknown provider kind");
}

Mask scores_to_mask(const std::vector<double>& scores, int score_h, int score_w,
                    int out_h, int out_w) {
  Image grid(1, score_h, score_w);
  for (int i = 0; i < score_h * score_w; ++i)
    grid.data[i] = std::clamp(1.0 / (1.0 + std::exp(-scores[i])), 0.0, 1.0);
  const Image resized = kernels::bilinear_resize(grid, out_h, out_w);
  Mask mask(out_h, out_w);
  for (size_t i = 0; i < mask.values.size(); ++i)
    mask.values[i] = std::clamp(resized.data[i], 0.0, 1.0);
  return mask;
}

Mask binarize(const Mask& mask, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0))
    throw InvalidInput("binarize: threshold must lie in (0,1)");
  require_valid_mask(mask, "binarize");
  Mask out = mask;
  for (double& v : out.values) v = v >= threshold ? 1.0 : 0.0;
  return out;
}

double patch_mask_mean(const Mask& mask, int x, int y, int w, int h) {
  if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > mask.width || y + h > mask.height)
    throw InvalidInput("patch_mask_mean: box outside mask bounds");
  double acc = 0.0;
  for (int yy = y; yy < y + h; ++yy)
    for (int xx = x; xx < x + w; ++xx) acc += mask.at(yy, xx);
  return acc / (static_cast<double>(w) * h);
}

}  // namespace soulstyle::segmentation
