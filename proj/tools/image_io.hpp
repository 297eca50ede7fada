#pragma once

#include <string>

#include "placerec/error.hpp"
#include "placerec/image.hpp"

#ifdef PLACEREC_WITH_OPENCV
#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>
#endif

namespace placerec::cli {

inline bool has_pnm_extension(const std::string& path) {
  const auto dot = path.rfind('.');
  if (dot == std::string::npos) return false;
  std::string ext = path.substr(dot + 1);
  for (auto& c : ext) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return ext == "pgm" || ext == "ppm" || ext == "pnm";
}

/// PGM/PPM natively; other formats go through OpenCV when the tool was built with it.
/// Colour is always reduced with our own luminance weights, never the decoder's.
inline GrayImage load_image(const std::string& path) {
  if (has_pnm_extension(path)) return read_pnm(path);
#ifdef PLACEREC_WITH_OPENCV
  cv::Mat bgr = cv::imread(path, cv::IMREAD_COLOR);
  if (bgr.empty()) fail(ErrorKind::IoError, "cannot decode image '" + path + "'");
  GrayImage img(static_cast<std::size_t>(bgr.cols), static_cast<std::size_t>(bgr.rows));
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y)) = luminance(row[x][2], row[x][1], row[x][0]);
    }
  }
  return img;
#else
  fail(ErrorKind::IoError, "'" + path + "': only PGM/PPM images are supported in this build");
#endif
}

}  // namespace placerec::cli
