#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace rgm {

// Interleaved row-major byte image, 1 (gray) or 3 (RGB) channels.
struct Image {
  int width = 0;
  int height = 0;
  int channels = 0;
  std::vector<std::uint8_t> data;

  Image() = default;
  Image(int w, int h, int c, std::uint8_t fill = 0)
      : width(w), height(h), channels(c),
        data(static_cast<std::size_t>(w) * h * c, fill) {}

  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  bool in_bounds(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height;
  }
  void set_rgb(int x, int y, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    at(x, y, 0) = r;
    at(x, y, 1) = g;
    at(x, y, 2) = b;
  }
};

// Binary PPM (P6) / PGM (P5), maxval 255. Encoding is byte-exact:
// "P6\n<w> <h>\n255\n" followed by the payload.
std::vector<std::uint8_t> encode_ppm(const Image& img);
std::vector<std::uint8_t> encode_pgm(const Image& img);
Image decode_ppm(const std::vector<std::uint8_t>& bytes);
Image decode_pgm(const std::vector<std::uint8_t>& bytes);
// Dispatches on the magic (P5/P6).
Image decode_pnm(const std::vector<std::uint8_t>& bytes);

void save_ppm(const std::string& path, const Image& img);
void save_pgm(const std::string& path, const Image& img);
Image load_image(const std::string& path);

std::vector<std::uint8_t> read_file(const std::string& path);
void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes);

// Bilinear resample to (out_w, out_h); values stay within [0,255].
Image resize_bilinear(const Image& img, int out_w, int out_h);

}  // namespace rgm
