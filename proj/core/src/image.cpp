#include "rgm/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace rgm {

namespace {

void append_header(std::vector<std::uint8_t>& out, const char* magic,
                   const Image& img) {
  char buf[64];
  int n = std::snprintf(buf, sizeof buf, "%s\n%d %d\n255\n", magic, img.width,
                        img.height);
  out.insert(out.end(), buf, buf + n);
}

struct Cursor {
  const std::vector<std::uint8_t>& bytes;
  std::size_t pos = 0;

  int peek() const {
    return pos < bytes.size() ? static_cast<int>(bytes[pos]) : -1;
  }
  int get() { return pos < bytes.size() ? static_cast<int>(bytes[pos++]) : -1; }

  void skip_space_and_comments() {
    for (;;) {
      int c = peek();
      if (c == '#') {
        while (c != '\n' && c != -1) c = get();
      } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
        get();
      } else {
        return;
      }
    }
  }

  int read_int() {
    skip_space_and_comments();
    int c = peek();
    if (c < '0' || c > '9') throw std::runtime_error("pnm: malformed header");
    long v = 0;
    while (c >= '0' && c <= '9') {
      v = v * 10 + (c - '0');
      if (v > 1 << 24) throw std::runtime_error("pnm: dimension overflow");
      get();
      c = peek();
    }
    return static_cast<int>(v);
  }
};

Image decode_with_magic(const std::vector<std::uint8_t>& bytes,
                        const char* magic, int channels) {
  Cursor cur{bytes};
  if (cur.get() != magic[0] || cur.get() != magic[1])
    throw std::runtime_error("pnm: bad magic");
  int w = cur.read_int();
  int h = cur.read_int();
  int maxval = cur.read_int();
  if (w <= 0 || h <= 0) throw std::runtime_error("pnm: bad dimensions");
  if (maxval != 255) throw std::runtime_error("pnm: only maxval 255 supported");
  int c = cur.get();
  if (c != ' ' && c != '\t' && c != '\r' && c != '\n')
    throw std::runtime_error("pnm: malformed header");
  std::size_t need = static_cast<std::size_t>(w) * h * channels;
  if (bytes.size() - cur.pos < need)
    throw std::runtime_error("pnm: truncated payload");
  Image img(w, h, channels);
  std::copy_n(bytes.begin() + static_cast<std::ptrdiff_t>(cur.pos), need,
              img.data.begin());
  return img;
}

}  // namespace

std::vector<std::uint8_t> encode_ppm(const Image& img) {
  if (img.channels != 3) throw std::invalid_argument("encode_ppm: need 3 channels");
  std::vector<std::uint8_t> out;
  out.reserve(img.data.size() + 32);
  append_header(out, "P6", img);
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

std::vector<std::uint8_t> encode_pgm(const Image& img) {
  if (img.channels != 1) throw std::invalid_argument("encode_pgm: need 1 channel");
  std::vector<std::uint8_t> out;
  out.reserve(img.data.size() + 32);
  append_header(out, "P5", img);
  out.insert(out.end(), img.data.begin(), img.data.end());
  return out;
}

Image decode_ppm(const std::vector<std::uint8_t>& bytes) {
  return decode_with_magic(bytes, "P6", 3);
}

Image decode_pgm(const std::vector<std::uint8_t>& bytes) {
  return decode_with_magic(bytes, "P5", 1);
}

Image decode_pnm(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 2) throw std::runtime_error("pnm: too short");
  if (bytes[0] == 'P' && bytes[1] == '6') return decode_ppm(bytes);
  if (bytes[0] == 'P' && bytes[1] == '5') return decode_pgm(bytes);
  throw std::runtime_error("pnm: bad magic");
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open " + path);
  return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in),
                                   std::istreambuf_iterator<char>());
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
  if (!out) throw std::runtime_error("write failed: " + path);
}

void save_ppm(const std::string& path, const Image& img) {
  write_file(path, encode_ppm(img));
}

void save_pgm(const std::string& path, const Image& img) {
  write_file(path, encode_pgm(img));
}

Image load_image(const std::string& path) { return decode_pnm(read_file(path)); }

Image resize_bilinear(const Image& img, int out_w, int out_h) {
  if (img.width <= 0 || img.height <= 0)
    throw std::invalid_argument("resize: empty source");
  Image out(out_w, out_h, img.channels);
  const double sx = static_cast<double>(img.width) / out_w;
  const double sy = static_cast<double>(img.height) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    double fy = (oy + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(img.height - 1));
    int y0 = static_cast<int>(std::floor(fy));
    int y1 = std::min(y0 + 1, img.height - 1);
    double wy = fy - y0;
    for (int ox = 0; ox < out_w; ++ox) {
      double fx = (ox + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(img.width - 1));
      int x0 = static_cast<int>(std::floor(fx));
      int x1 = std::min(x0 + 1, img.width - 1);
      double wx = fx - x0;
      for (int c = 0; c < img.channels; ++c) {
        double v = (1 - wy) * ((1 - wx) * img.at(x0, y0, c) + wx * img.at(x1, y0, c)) +
                   wy * ((1 - wx) * img.at(x0, y1, c) + wx * img.at(x1, y1, c));
        out.at(ox, oy, c) = static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 255.0)));
      }
    }
  }
  return out;
}

}  // namespace rgm
