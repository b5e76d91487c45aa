#ifndef PFD_IMAGE_HPP_
#define PFD_IMAGE_HPP_

#include <filesystem>
#include <vector>

namespace pfd {

// Interleaved H x W x C image with values in [0, 1].
struct Image {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> pixels;

  Image() = default;
  Image(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c), pixels(static_cast<std::size_t>(h) * w * c, fill) {}

  double& at(int y, int x, int c) {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  double at(int y, int x, int c) const {
    return pixels[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }

  bool operator==(const Image&) const = default;
};

// Rounds every pixel to the nearest k/255; 8-bit PNG storage is then lossless.
void quantize_8bit(Image& image);

// 8-bit PNG (gray for C=1, RGB for C=3). Throws std::runtime_error on I/O failure.
void write_png(const std::filesystem::path& path, const Image& image);
Image read_png(const std::filesystem::path& path);

}  // namespace pfd

#endif  // PFD_IMAGE_HPP_
