#include "ocsb/image.hpp"

#include <opencv2/core.hpp>
#include <opencv2/imgcodecs.hpp>

#include "ocsb/error.hpp"

namespace ocsb {

Image::Image(int w, int h, uint8_t fill) : width(w), height(h) {
  if (w <= 0 || h <= 0) throw ValidationError("image dimensions must be positive");
  pixels.assign(static_cast<size_t>(w) * static_cast<size_t>(h) * 3, fill);
}

Image read_image(const std::filesystem::path& path) {
  cv::Mat bgr = cv::imread(path.string(), cv::IMREAD_COLOR);
  if (bgr.empty()) throw ValidationError("cannot read image '" + path.string() + "'");
  Image img(bgr.cols, bgr.rows);
  for (int y = 0; y < bgr.rows; ++y) {
    const auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < bgr.cols; ++x) {
      img.at(x, y, 0) = row[x][2];
      img.at(x, y, 1) = row[x][1];
      img.at(x, y, 2) = row[x][0];
    }
  }
  return img;
}

void write_image(const Image& img, const std::filesystem::path& path) {
  cv::Mat bgr(img.height, img.width, CV_8UC3);
  for (int y = 0; y < img.height; ++y) {
    auto* row = bgr.ptr<cv::Vec3b>(y);
    for (int x = 0; x < img.width; ++x) {
      row[x] = cv::Vec3b(img.at(x, y, 2), img.at(x, y, 1), img.at(x, y, 0));
    }
  }
  if (!cv::imwrite(path.string(), bgr)) {
    throw Error("cannot write image '" + path.string() + "'");
  }
}

}  // namespace ocsb
