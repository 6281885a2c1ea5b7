#include "ocsb/roi.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "ocsb/error.hpp"

namespace ocsb {

uint8_t round_pixel(double v) {
  const double r = std::round(v);  // half away from zero
  return static_cast<uint8_t>(std::clamp(r, 0.0, 255.0));
}

Point Landmarks::mass_center() const {
  Point c;
  for (const Point& p : points()) {
    c.x += p.x;
    c.y += p.y;
  }
  return {c.x / 5.0, c.y / 5.0};
}

Landmarks Similarity::apply(const Landmarks& lm) const {
  return {apply(lm.left_eye), apply(lm.right_eye), apply(lm.nose), apply(lm.mouth_left),
          apply(lm.mouth_right)};
}

Similarity Similarity::inverse() const {
  const double det = a * a + b * b;
  const double ia = a / det;
  const double ib = -b / det;
  // p = inv(R) (p' - t)
  return {ia, ib, -(ia * tx - ib * ty), -(ib * tx + ia * ty)};
}

double Similarity::scale() const { return std::hypot(a, b); }

double Similarity::rotation_degrees() const { return std::atan2(b, a) * 180.0 / std::numbers::pi; }

Similarity eye_alignment(const Landmarks& lm, double eye_distance) {
  const double dx = lm.right_eye.x - lm.left_eye.x;
  const double dy = lm.right_eye.y - lm.left_eye.y;
  const double d2 = dx * dx + dy * dy;
  if (!(d2 > 0.0) || !std::isfinite(d2)) {
    throw GeometryError("eye landmarks coincide; alignment is undefined");
  }
  // Maps (dx, dy) onto (eye_distance, 0).
  return {eye_distance * dx / d2, -eye_distance * dy / d2, 0.0, 0.0};
}

namespace {

double sample_bilinear(const Image& img, double x, double y, int c) {
  const double fx0 = std::floor(x);
  const double fy0 = std::floor(y);
  const auto x0 = static_cast<int>(fx0);
  const auto y0 = static_cast<int>(fy0);
  const double fx = x - fx0;
  const double fy = y - fy0;
  auto px = [&](int xx, int yy) -> double {
    if (xx < 0 || yy < 0 || xx >= img.width || yy >= img.height) return 0.0;
    return img.at(xx, yy, c);
  };
  return (1.0 - fx) * (1.0 - fy) * px(x0, y0) + fx * (1.0 - fy) * px(x0 + 1, y0) +
         (1.0 - fx) * fy * px(x0, y0 + 1) + fx * fy * px(x0 + 1, y0 + 1);
}

}  // namespace

AlignedFace align(const Image& img, const Landmarks& lm) {
  if (img.empty()) throw ValidationError("align: empty image");
  Similarity t = eye_alignment(lm);

  const std::array<Point, 4> corners = {
      Point{0.0, 0.0}, Point{img.width - 1.0, 0.0}, Point{0.0, img.height - 1.0},
      Point{img.width - 1.0, img.height - 1.0}};
  double min_x = 1e300, min_y = 1e300, max_x = -1e300, max_y = -1e300;
  for (const Point& c : corners) {
    const Point p = t.apply(c);
    min_x = std::min(min_x, p.x);
    min_y = std::min(min_y, p.y);
    max_x = std::max(max_x, p.x);
    max_y = std::max(max_y, p.y);
  }
  // Integer shift keeps an identity transform exact.
  t.tx = -std::floor(min_x);
  t.ty = -std::floor(min_y);
  const int width = static_cast<int>(std::ceil(max_x + t.tx)) + 1;
  const int height = static_cast<int>(std::ceil(max_y + t.ty)) + 1;

  AlignedFace out{Image(width, height), t.apply(lm), t};
  const Similarity inv = t.inverse();
  for (int v = 0; v < height; ++v) {
    for (int u = 0; u < width; ++u) {
      const Point s = inv.apply(Point{static_cast<double>(u), static_cast<double>(v)});
      if (s.x <= -1.0 || s.y <= -1.0 || s.x >= img.width || s.y >= img.height) continue;
      for (int c = 0; c < 3; ++c) out.image.at(u, v, c) = round_pixel(sample_bilinear(img, s.x, s.y, c));
    }
  }
  return out;
}

std::vector<std::string> landmark_issues(const Image& img, const Landmarks& lm) {
  static constexpr const char* kNames[] = {"left_eye", "right_eye", "nose", "mouth_left",
                                           "mouth_right"};
  std::vector<std::string> issues;
  const auto pts = lm.points();
  for (size_t i = 0; i < pts.size(); ++i) {
    const Point p = pts[i];
    if (!(p.x >= 0.0 && p.y >= 0.0 && p.x <= img.width - 1.0 && p.y <= img.height - 1.0)) {
      issues.push_back(std::string(kNames[i]) + " (" + std::to_string(p.x) + ", " +
                       std::to_string(p.y) + ") outside " + std::to_string(img.width) + "x" +
                       std::to_string(img.height) + " image");
    }
  }
  if (lm.left_eye == lm.right_eye) issues.emplace_back("eye landmarks coincide");
  return issues;
}

Image crop_centered(const Image& img, Point center, int size) {
  const double half = (size - 1) / 2.0;
  const auto x0 = static_cast<int>(std::round(center.x - half));
  const auto y0 = static_cast<int>(std::round(center.y - half));
  Image out(size, size);
  for (int y = 0; y < size; ++y) {
    const int sy = y0 + y;
    if (sy < 0 || sy >= img.height) continue;
    for (int x = 0; x < size; ++x) {
      const int sx = x0 + x;
      if (sx < 0 || sx >= img.width) continue;
      for (int c = 0; c < 3; ++c) out.at(x, y, c) = img.at(sx, sy, c);
    }
  }
  return out;
}

Image crop_face(const Image& aligned, const Landmarks& lm) {
  return crop_centered(aligned, lm.mass_center(), kFaceCropSize);
}

Image crop_ocular(const Image& aligned, Point eye_center) {
  return crop_centered(aligned, eye_center, kOcularCropSize);
}

Image gamma_correct(const Image& img, double gamma) {
  if (!(gamma > 0.0)) throw ValidationError("gamma must be positive");
  std::array<uint8_t, 256> lut{};
  for (int p = 0; p < 256; ++p) {
    lut[static_cast<size_t>(p)] = round_pixel(255.0 * std::pow(p / 255.0, gamma));
  }
  Image out = img;
  for (uint8_t& v : out.pixels) v = lut[v];
  return out;
}

Image mirror(const Image& img) {
  Image out = img;
  for (int y = 0; y < img.height; ++y) {
    for (int x = 0; x < img.width; ++x) {
      for (int c = 0; c < 3; ++c) out.at(img.width - 1 - x, y, c) = img.at(x, y, c);
    }
  }
  return out;
}

std::vector<Image> augment(const Image& img) {
  const Image flipped = mirror(img);
  std::vector<Image> out;
  out.reserve(kAugmentVariants.size());
  for (const AugmentVariant& v : kAugmentVariants) {
    const Image& base = v.mirrored ? flipped : img;
    out.push_back(v.gamma == 1.0 ? base : gamma_correct(base, v.gamma));
  }
  return out;
}

Image resize_bilinear(const Image& img, int width, int height) {
  if (img.empty()) throw ValidationError("resize: empty image");
  if (width <= 0 || height <= 0) throw ValidationError("resize: target dims must be positive");
  if (width == img.width && height == img.height) return img;
  Image out(width, height);
  const double sx = static_cast<double>(img.width) / width;
  const double sy = static_cast<double>(img.height) / height;
  for (int v = 0; v < height; ++v) {
    const double y = std::clamp((v + 0.5) * sy - 0.5, 0.0, img.height - 1.0);
    const auto y0 = static_cast<int>(std::floor(y));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double fy = y - y0;
    for (int u = 0; u < width; ++u) {
      const double x = std::clamp((u + 0.5) * sx - 0.5, 0.0, img.width - 1.0);
      const auto x0 = static_cast<int>(std::floor(x));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double fx = x - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1.0 - fx) * img.at(x0, y0, c) + fx * img.at(x1, y0, c);
        const double bottom = (1.0 - fx) * img.at(x0, y1, c) + fx * img.at(x1, y1, c);
        out.at(u, v, c) = round_pixel((1.0 - fy) * top + fy * bottom);
      }
    }
  }
  return out;
}

}  // namespace ocsb
