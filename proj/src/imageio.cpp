#include "soulstyle/imageio.hpp"

#include <algorithm>
#include <cmath>

#include <opencv2/imgcodecs.hpp>

namespace soulstyle::imageio {

namespace {
cv::Mat to_bgr8(const Image& image) {
  cv::Mat mat(image.height, image.width, CV_8UC3);
  for (int y = 0; y < image.height; ++y)
    for (int x = 0; x < image.width; ++x) {
      auto& px = mat.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) {
        const double v = std::clamp(image.at(c, y, x), 0.0, 1.0);
        px[2 - c] = static_cast<unsigned char>(std::lround(v * 255.0));
      }
    }
  return mat;
}
}  // namespace

Image load_image(const std::string& path) {
  const cv::Mat mat = cv::imread(path, cv::IMREAD_COLOR);
  if (mat.empty()) throw IoError("cannot read image: " + path);
  Image image(3, mat.rows, mat.cols);
  for (int y = 0; y < mat.rows; ++y)
    for (int x = 0; x < mat.cols; ++x) {
      const auto& px = mat.at<cv::Vec3b>(y, x);
      for (int c = 0; c < 3; ++c) image.at(c, y, x) = px[2 - c] / 255.0;
    }
  return image;
}

void save_image(const std::string& path, const Image& image) {
  if (!cv::imwrite(path, to_bgr8(image)))
    throw IoError("cannot write image: " + path);
}

Mask load_mask(const std::string& path) {
  const cv::Mat mat = cv::imread(path, cv::IMREAD_GRAYSCALE);
  if (mat.empty()) throw IoError("cannot read mask: " + path);
  Mask mask(mat.rows, mat.cols);
  for (int y = 0; y < mat.rows; ++y)
    for (int x = 0; x < mat.cols; ++x)
      mask.at(y, x) = mat.at<unsigned char>(y, x) / 255.0;
  return mask;
}

void save_mask(const std::string& path, const Mask& mask) {
  cv::Mat mat(mask.height, mask.width, CV_8UC1);
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x) {
      const double v = std::clamp(mask.at(y, x), 0.0, 1.0);
      mat.at<unsigned char>(y, x) = static_cast<unsigned char>(std::lround(v * 255.0));
    }
  if (!cv::imwrite(path, mat)) throw IoError("cannot write mask: " + path);
}

std::vector<unsigned char> encode_png(const Image& image) {
  std::vector<unsigned char> buf;
  if (!cv::imencode(".png", to_bgr8(image), buf))
    throw IoError("PNG encoding failed");
  return buf;
}

}  // namespace soulstyle::imageio
