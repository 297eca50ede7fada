#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <string>
#include <vector>

#include "placerec/error.hpp"

namespace placerec {

/// Grayscale image, row-major, values in whatever range the source used.
struct GrayImage {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<double> pixels;

  GrayImage() = default;
  GrayImage(std::size_t w, std::size_t h, double fill = 0.0) : width(w), height(h), pixels(w * h, fill) {}

  double& at(std::size_t x, std::size_t y) { return pixels[y * width + x]; }
  double at(std::size_t x, std::size_t y) const { return pixels[y * width + x]; }
};

inline double luminance(double r, double g, double b) { return 0.299 * r + 0.587 * g + 0.114 * b; }

namespace detail {

inline std::size_t read_pnm_int(std::istream& in) {
  int c = in.get();
  while (c != EOF) {
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
    } else if (!std::isspace(c)) {
      break;
    }
    c = in.get();
  }
  if (c == EOF || !std::isdigit(c)) fail(ErrorKind::ParseError, "malformed PNM header");
  std::size_t v = 0;
  while (c != EOF && std::isdigit(c)) {
    v = v * 10 + static_cast<std::size_t>(c - '0');
    c = in.get();
  }
  return v;  // the single whitespace after the value has been consumed
}

}  // namespace detail

/// Reads binary or ASCII PGM/PPM (P2, P3, P5, P6). Colour goes through `luminance`.
inline GrayImage read_pnm(std::istream& in) {
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in || magic[0] != 'P' || (magic[1] != '2' && magic[1] != '3' && magic[1] != '5' && magic[1] != '6')) {
    fail(ErrorKind::ParseError, "not a PGM/PPM image");
  }
  const bool color = magic[1] == '3' || magic[1] == '6';
  const bool ascii = magic[1] == '2' || magic[1] == '3';
  std::size_t w = detail::read_pnm_int(in);
  std::size_t h = detail::read_pnm_int(in);
  std::size_t maxval = detail::read_pnm_int(in);
  if (w == 0 || h == 0 || maxval == 0 || maxval > 65535) fail(ErrorKind::ParseError, "bad PNM dimensions");

  const std::size_t channels = color ? 3 : 1;
  const std::size_t bytes = maxval > 255 ? 2 : 1;
  std::vector<double> samples(w * h * channels);
  if (ascii) {
    for (auto& s : samples) {
      if (!(in >> s)) fail(ErrorKind::ParseError, "truncated PNM data");
    }
  } else {
    std::vector<unsigned char> raw(samples.size() * bytes);
    in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!in) fail(ErrorKind::ParseError, "truncated PNM data");
    for (std::size_t i = 0; i < samples.size(); ++i) {
      samples[i] = bytes == 1 ? raw[i] : (raw[2 * i] << 8) | raw[2 * i + 1];
    }
  }
  GrayImage img(w, h);
  for (std::size_t i = 0; i < w * h; ++i) {
    img.pixels[i] = color ? luminance(samples[3 * i], samples[3 * i + 1], samples[3 * i + 2]) : samples[i];
  }
  return img;
}

inline GrayImage read_pnm(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open image '" + path + "'");
  return read_pnm(in);
}

/// Writes 8-bit binary PGM, clamping to [0,255].
inline void write_pgm(std::ostream& os, const GrayImage& img) {
  os << "P5\n" << img.width << ' ' << img.height << "\n255\n";
  for (double v : img.pixels) {
    double c = std::round(v < 0 ? 0 : (v > 255 ? 255 : v));
    os.put(static_cast<char>(static_cast<unsigned char>(c)));
  }
}

}  // namespace placerec
