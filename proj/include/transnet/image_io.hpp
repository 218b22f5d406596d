#ifndef TRANSNET_IMAGE_IO_HPP
#define TRANSNET_IMAGE_IO_HPP

#include <string>

#include "transnet/tensor.hpp"

namespace transnet {

// 8-bit PNG I/O and bilinear resizing. Values map linearly between byte
// 0..255 and [0,1].

Tensor load_image_rgb(const std::string& path);   // (1,3,H,W)
Tensor load_image_gray(const std::string& path);  // (1,1,H,W)
void save_image_rgb(const std::string& path, const Tensor& t);
void save_image_gray(const std::string& path, const Tensor& t);

// Identity when the size already matches.
Tensor resize_bilinear(const Tensor& t, int out_h, int out_w);

}  // namespace transnet

#endif
