#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

namespace g2cl {

// 3-channel image, row-major interleaved RGB, values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  std::vector<float> data;  // height * width * 3

  Image() = default;
  Image(int h, int w) : height(h), width(w), data(static_cast<std::size_t>(h) * w * 3, 0.0f) {}

  float& at(int y, int x, int c) { return data[(static_cast<std::size_t>(y) * width + x) * 3 + c]; }
  float at(int y, int x, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * 3 + c];
  }

  bool empty() const { return height <= 0 || width <= 0; }

  friend bool operator==(const Image&, const Image&) = default;
};

// Binary PPM (P6, maxval 255). Pixel values are quantized to 8 bits on write.
void write_ppm(const std::filesystem::path& path, const Image& image);
Image read_ppm(const std::filesystem::path& path);

// Bilinear resize (pixel-center aligned). Same-size resize returns a copy.
Image resize_bilinear(const Image& src, int height, int width);

Image flip_horizontal(const Image& src);

// Round every value to the nearest 8-bit level, as a PPM round trip would.
void quantize_8bit(Image& image);

}  // namespace g2cl
