#include "test_support.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace ocsbtest {

Tensor Gen::tensor(Shape4 shape, float lo, float hi) {
  Tensor t(shape);
  for (float& v : t.values()) v = value(lo, hi);
  return t;
}

std::vector<float> Gen::floats(size_t n, float lo, float hi) {
  std::vector<float> v(n);
  for (float& x : v) x = value(lo, hi);
  return v;
}

ocsb::Image Gen::image(int w, int h) {
  ocsb::Image img(w, h);
  for (uint8_t& p : img.pixels) p = static_cast<uint8_t>(integer(0, 255));
  return img;
}

double rel_error(std::span<const float> got, std::span<const double> want, double floor) {
  if (got.size() != want.size()) return INFINITY;
  double num = 0.0, den = floor;
  for (size_t i = 0; i < got.size(); ++i) {
    num = std::max(num, std::abs(static_cast<double>(got[i]) - want[i]));
    den = std::max(den, std::abs(want[i]));
  }
  return num / den;
}

double rel_error(std::span<const float> got, std::span<const float> want, double floor) {
  std::vector<double> w(want.begin(), want.end());
  return rel_error(got, w, floor);
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         std::memcmp(a.data(), b.data(), static_cast<size_t>(a.size()) * sizeof(float)) == 0;
}

std::vector<double> naive_conv(const Tensor& x, const Tensor& kernel, std::span<const float> bias,
                               const ConvGeom& g, Shape4* out_shape) {
  const auto [N, C, H, W] = x.shape();
  const auto [O, Cg, KH, KW] = kernel.shape();
  const int64_t OH = (H + g.pad.top + g.pad.bottom - KH) / g.stride_h + 1;
  const int64_t OW = (W + g.pad.left + g.pad.right - KW) / g.stride_w + 1;
  const int64_t out_per_group = O / g.groups;
  std::vector<double> out(static_cast<size_t>(N * O * OH * OW));
  for (int64_t n = 0; n < N; ++n)
    for (int64_t o = 0; o < O; ++o) {
      const int64_t grp = o / out_per_group;
      for (int64_t oy = 0; oy < OH; ++oy)
        for (int64_t ox = 0; ox < OW; ++ox) {
          double acc = bias.empty() ? 0.0 : bias[static_cast<size_t>(o)];
          for (int64_t ci = 0; ci < Cg; ++ci)
            for (int64_t ky = 0; ky < KH; ++ky)
              for (int64_t kx = 0; kx < KW; ++kx) {
                const int64_t iy = oy * g.stride_h - g.pad.top + ky;
                const int64_t ix = ox * g.stride_w - g.pad.left + kx;
                if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
                acc += static_cast<double>(x.at(n, grp * Cg + ci, iy, ix)) *
                       kernel.at(o, ci, ky, kx);
              }
          out[static_cast<size_t>(((n * O + o) * OH + oy) * OW + ox)] = acc;
        }
    }
  if (out_shape) *out_shape = {N, O, OH, OW};
  return out;
}

std::vector<double> naive_max_pool(const Tensor& x, const ocsb::PoolParams& p, Shape4* out_shape) {
  const auto [N, C, H, W] = x.shape();
  const int64_t OH = (H + p.pad.top + p.pad.bottom - p.window_h) / p.stride_h + 1;
  const int64_t OW = (W + p.pad.left + p.pad.right - p.window_w) / p.stride_w + 1;
  std::vector<double> out;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c)
      for (int64_t oy = 0; oy < OH; ++oy)
        for (int64_t ox = 0; ox < OW; ++ox) {
          double best = -INFINITY;
          for (int64_t ky = 0; ky < p.window_h; ++ky)
            for (int64_t kx = 0; kx < p.window_w; ++kx) {
              const int64_t iy = oy * p.stride_h - p.pad.top + ky;
              const int64_t ix = ox * p.stride_w - p.pad.left + kx;
              if (iy < 0 || ix < 0 || iy >= H || ix >= W) continue;
              best = std::max(best, static_cast<double>(x.at(n, c, iy, ix)));
            }
          out.push_back(best);
        }
  if (out_shape) *out_shape = {N, C, OH, OW};
  return out;
}

std::vector<double> naive_gap(const Tensor& x) {
  const auto [N, C, H, W] = x.shape();
  std::vector<double> out;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (int64_t y = 0; y < H; ++y)
        for (int64_t xx = 0; xx < W; ++xx) s += x.at(n, c, y, xx);
      out.push_back(s / static_cast<double>(H * W));
    }
  return out;
}

std::vector<double> naive_gdc(const Tensor& x, const Tensor& kernel) {
  const auto [N, C, H, W] = x.shape();
  std::vector<double> out;
  for (int64_t n = 0; n < N; ++n)
    for (int64_t c = 0; c < C; ++c) {
      double s = 0.0;
      for (int64_t y = 0; y < H; ++y)
        for (int64_t xx = 0; xx < W; ++xx)
          s += static_cast<double>(x.at(n, c, y, xx)) * kernel.at(c, 0, y, xx);
      out.push_back(s);
    }
  return out;
}

std::vector<double> naive_fc(std::span<const float> x, std::span<const float> w,
                             std::span<const float> b, int64_t out) {
  const auto in = static_cast<int64_t>(x.size());
  std::vector<double> y(static_cast<size_t>(out));
  for (int64_t o = 0; o < out; ++o) {
    double s = b.empty() ? 0.0 : b[static_cast<size_t>(o)];
    for (int64_t i = 0; i < in; ++i)
      s += static_cast<double>(w[static_cast<size_t>(o * in + i)]) * x[static_cast<size_t>(i)];
    y[static_cast<size_t>(o)] = s;
  }
  return y;
}

std::vector<double> naive_batchnorm(std::span<const double> x, Shape4 shape,
                                    const ocsb::BnParams& bn) {
  std::vector<double> out(x.begin(), x.end());
  for (int64_t n = 0; n < shape.n; ++n)
    for (int64_t c = 0; c < shape.c; ++c) {
      const auto ci = static_cast<size_t>(c);
      const double denom = std::sqrt(static_cast<double>(bn.running_var[ci]) + bn.epsilon);
      for (int64_t i = 0; i < shape.plane(); ++i) {
        auto& v = out[static_cast<size_t>((n * shape.c + c) * shape.plane() + i)];
        v = (v - bn.running_mean[ci]) / denom * bn.gamma[ci] + bn.beta[ci];
      }
    }
  return out;
}

ConvCase random_conv_case(Gen& gen, ConvFlavor flavor) {
  if (flavor == ConvFlavor::kAny) {
    flavor = static_cast<ConvFlavor>(gen.integer(0, 3));
  }
  int groups = 1, cin = 1, cout = 1, k = 3;
  switch (flavor) {
    case ConvFlavor::kDense:
      cin = gen.integer(1, 9);
      cout = gen.integer(1, 19);
      k = gen.integer(1, 5);
      break;
    case ConvFlavor::kDepthwise:
      cin = cout = groups = gen.integer(1, 12);
      k = gen.integer(1, 5);
      break;
    case ConvFlavor::kPointwise:
      cin = gen.integer(1, 24);
      cout = gen.integer(1, 24);
      k = 1;
      break;
    case ConvFlavor::kGrouped:
    case ConvFlavor::kAny:
      groups = gen.integer(2, 4);
      cin = groups * gen.integer(1, 4);
      cout = groups * gen.integer(1, 4);
      k = gen.integer(1, 4);
      break;
  }
  const int kh = k;
  const int kw = flavor == ConvFlavor::kPointwise ? 1 : (gen.coin() ? k : gen.integer(1, 4));
  ocsb::ConvParams p;
  p.groups = groups;
  if (flavor != ConvFlavor::kPointwise) {
    p.stride_h = gen.integer(1, 3);
    p.stride_w = gen.coin() ? p.stride_h : gen.integer(1, 3);
    p.pad = {gen.integer(0, kh - 1), gen.integer(0, kh - 1), gen.integer(0, kw - 1),
             gen.integer(0, kw - 1)};
  }
  const int h = gen.integer(std::max(1, kh - p.pad.top - p.pad.bottom), 23);
  const int w = gen.integer(std::max(1, kw - p.pad.left - p.pad.right), 40);
  p.kernel = gen.tensor({cout, cin / groups, kh, kw});
  if (gen.integer(0, 3) != 0) p.bias = gen.floats(static_cast<size_t>(cout));
  const int batch = gen.integer(0, 4) == 0 ? 2 : 1;
  return {gen.tensor({batch, cin, h, w}), std::move(p)};
}

TempDir::TempDir() {
  static std::mt19937_64 rng(std::random_device{}());
  const auto base = std::filesystem::temp_directory_path();
  for (int attempt = 0; attempt < 100; ++attempt) {
    auto candidate = base / ("ocsb-test-" + std::to_string(rng()));
    if (std::filesystem::create_directory(candidate)) {
      path_ = candidate;
      return;
    }
  }
  throw std::runtime_error("cannot create a temporary directory");
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw std::runtime_error("cannot write " + p.string());
}

namespace {

void blob(ocsb::Image& img, ocsb::Point c, double r, std::array<uint8_t, 3> colour) {
  const int x0 = std::max(0, static_cast<int>(c.x - r) - 1);
  const int x1 = std::min(img.width - 1, static_cast<int>(c.x + r) + 1);
  const int y0 = std::max(0, static_cast<int>(c.y - r) - 1);
  const int y1 = std::min(img.height - 1, static_cast<int>(c.y + r) + 1);
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x) {
      const double dx = x - c.x, dy = y - c.y;
      if (dx * dx + dy * dy > r * r) continue;
      for (int ch = 0; ch < 3; ++ch) img.at(x, y, ch) = colour[static_cast<size_t>(ch)];
    }
}

}  // namespace

ocsb::Image synthetic_face(int w, int h, const ocsb::Landmarks& lm, uint8_t tone, uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<int> noise(-12, 12);
  ocsb::Image img(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) {
        const int base = 40 + (x * 3 + y * 2 + c * 50) % 90;
        img.at(x, y, c) = static_cast<uint8_t>(std::clamp(base + noise(rng), 0, 255));
      }
  const ocsb::Point centre = lm.mass_center();
  const double eye_dist = std::hypot(lm.right_eye.x - lm.left_eye.x, lm.right_eye.y - lm.left_eye.y);
  blob(img, centre, eye_dist * 1.1, {tone, static_cast<uint8_t>(tone * 3 / 4), static_cast<uint8_t>(tone / 2)});
  blob(img, lm.left_eye, eye_dist * 0.18, {250, 250, 250});
  blob(img, lm.right_eye, eye_dist * 0.18, {250, 250, 250});
  blob(img, lm.left_eye, eye_dist * 0.08, {20, 30, 60});
  blob(img, lm.right_eye, eye_dist * 0.08, {20, 30, 60});
  blob(img, lm.nose, eye_dist * 0.10, {static_cast<uint8_t>(tone / 2), 60, 50});
  blob(img, lm.mouth_left, eye_dist * 0.09, {170, 40, 50});
  blob(img, lm.mouth_right, eye_dist * 0.09, {170, 40, 50});
  return img;
}

ocsb::Landmarks random_landmarks(Gen& gen, int w, int h) {
  const double d = gen.real(0.18, 0.32) * std::min(w, h);
  const double angle = gen.real(-0.35, 0.35);
  const double cx = w / 2.0 + gen.real(-0.08, 0.08) * w;
  const double cy = h / 2.0 + gen.real(-0.08, 0.08) * h;
  const double ca = std::cos(angle), sa = std::sin(angle);
  auto place = [&](double u, double v) {
    return ocsb::Point{cx + ca * u * d - sa * v * d, cy + sa * u * d + ca * v * d};
  };
  return {place(-0.5, -0.3), place(0.5, -0.3), place(0.0, 0.2), place(-0.35, 0.65),
          place(0.35, 0.65)};
}

void stamp(ocsb::Image& img, ocsb::Point c, double sigma) {
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x) {
      const double d2 = (x - c.x) * (x - c.x) + (y - c.y) * (y - c.y);
      const double v = 255.0 * std::exp(-d2 / (2 * sigma * sigma));
      img.at(x, y, 0) = std::max(img.at(x, y, 0), ocsb::round_pixel(v));
    }
}

ocsb::Point centroid(const ocsb::Image& img, ocsb::Point around, int radius) {
  double sx = 0, sy = 0, sw = 0;
  for (int y = static_cast<int>(around.y) - radius; y <= static_cast<int>(around.y) + radius; ++y)
    for (int x = static_cast<int>(around.x) - radius; x <= static_cast<int>(around.x) + radius; ++x) {
      if (x < 0 || y < 0 || x >= img.width || y >= img.height) continue;
      const double w = img.at(x, y, 0);
      sx += w * x;
      sy += w * y;
      sw += w;
    }
  return {sx / sw, sy / sw};
}

ocsb::DatasetManifest write_synthetic_dataset(const std::filesystem::path& dir, int count,
                                              Gen& gen) {
  std::filesystem::create_directories(dir / "img");
  ocsb::DatasetManifest m;
  m.base_dir = dir;
  for (int i = 0; i < count; ++i) {
    const int w = gen.integer(150, 220);
    const int h = gen.integer(150, 220);
    ocsb::SampleRecord r;
    r.path = "img/face_" + std::to_string(i) + ".png";
    r.fold = i % ocsb::kFoldCount;
    r.subject_id = "s" + std::to_string(i);
    r.album_id = "a" + std::to_string(r.fold) + "_" + std::to_string(i / 10);
    r.gender = gen.integer(0, 1);
    r.age_group = gen.integer(0, 7);
    r.landmarks = random_landmarks(gen, w, h);
    const auto tone = static_cast<uint8_t>(gen.integer(120, 230));
    ocsb::write_image(synthetic_face(w, h, r.landmarks, tone, gen.bits()), dir / r.path);
    m.samples.push_back(std::move(r));
  }
  write_file(dir / "manifest.csv", ocsb::manifest_to_csv(m));
  return m;
}

}  // namespace ocsbtest
