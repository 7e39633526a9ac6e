#pragma once

#include <string>

#include "sfea/image.hpp"

namespace sfea {

// 8-bit RGB PNG <-> ImageTensor, bytes mapped linearly to [0,1]. Unreadable
// or malformed files raise DataError.
ImageTensor read_image_png(const std::string& path);
void write_image_png(const ImageTensor& img, const std::string& path);

// Masks travel as single-channel 8-bit PNG whose pixel value is the class
// index. Predicted masks are argmax-discretized on write.
MaskTensor read_mask_png(const std::string& path, int num_classes);
void write_mask_png(const MaskTensor& mask, const std::string& path);

}  // namespace sfea
