#pragma once

#include <array>
#include <string>
#include <vector>

#include "ocsb/image.hpp"

namespace ocsb {

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

/// Five-point landmarks in pixel coordinates (integer coordinates are pixel centers).
struct Landmarks {
  Point left_eye;
  Point right_eye;
  Point nose;
  Point mouth_left;
  Point mouth_right;

  std::array<Point, 5> points() const {
    return {left_eye, right_eye, nose, mouth_left, mouth_right};
  }
  Point mass_center() const;
};

/// x' = a*x - b*y + tx,  y' = b*x + a*y + ty.
struct Similarity {
  double a = 1.0;
  double b = 0.0;
  double tx = 0.0;
  double ty = 0.0;

  Point apply(Point p) const { return {a * p.x - b * p.y + tx, b * p.x + a * p.y + ty}; }
  Landmarks apply(const Landmarks& lm) const;
  Similarity inverse() const;
  double scale() const;
  double rotation_degrees() const;
};

inline constexpr double kInterEyeDistance = 105.0;
inline constexpr int kFaceCropSize = 224;
inline constexpr int kOcularCropSize = 113;

/// Rotation + scale that maps the eye axis onto the horizontal with the given
/// eye distance (no translation). Throws GeometryError for coincident eyes.
Similarity eye_alignment(const Landmarks& lm, double eye_distance = kInterEyeDistance);

struct AlignedFace {
  Image image;          // canvas holding the whole transformed input
  Landmarks landmarks;  // transformed landmarks on that canvas
  Similarity transform; // input -> canvas
};

/// Rotate and scale so the eyes are horizontal and kInterEyeDistance apart.
/// Bilinear sampling, zero outside the input.
AlignedFace align(const Image& img, const Landmarks& lm);

/// Landmarks outside the image (reported, never clamped).
std::vector<std::string> landmark_issues(const Image& img, const Landmarks& lm);

/// size x size window whose center is `center`; top-left corner at
/// round(center - (size - 1) / 2). Outside pixels are zero.
Image crop_centered(const Image& img, Point center, int size);

Image crop_face(const Image& aligned, const Landmarks& lm);
Image crop_ocular(const Image& aligned, Point eye_center);

/// round(255 * (p / 255)^gamma) per channel value.
Image gamma_correct(const Image& img, double gamma);

Image mirror(const Image& img);

struct AugmentVariant {
  bool mirrored;
  double gamma;
};

/// Output order of augment(). Index 1 is the untouched input.
inline constexpr std::array<AugmentVariant, 6> kAugmentVariants = {{
    {false, 0.5}, {false, 1.0}, {false, 1.5}, {true, 0.5}, {true, 1.0}, {true, 1.5},
}};
inline constexpr int kIdentityVariant = 1;

/// {original, mirrored} x {gamma 0.5, 1, 1.5} in kAugmentVariants order.
std::vector<Image> augment(const Image& img);

/// Bilinear, half-pixel centers, edge clamped.
Image resize_bilinear(const Image& img, int width, int height);

/// Round half away from zero and clamp into [0, 255].
uint8_t round_pixel(double v);

}  // namespace ocsb
