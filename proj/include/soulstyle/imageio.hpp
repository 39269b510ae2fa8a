#pragma once

#include <string>
#include <vector>

#include "soulstyle/tensor.hpp"

namespace soulstyle::imageio {

// 8-bit RGB PNG in, [0,1] planar image out. Throws IoError.
Image load_image(const std::string& path);
void save_image(const std::string& path, const Image& image);

// 8-bit grayscale PNG, 255 = target.
Mask load_mask(const std::string& path);
void save_mask(const std::string& path, const Mask& mask);

// PNG bytes of the image, for wire transfer.
std::vector<unsigned char> encode_png(const Image& image);

}  // namespace soulstyle::imageio
