#include "ocsb/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string>

#if defined(__FMA__)
#include <immintrin.h>
#endif

#include "ocsb/error.hpp"

namespace ocsb {
namespace {

typedef float vf8 __attribute__((vector_size(32)));

inline vf8 load8(const float* p) {
  vf8 v;
  std::memcpy(&v, p, sizeof(v));
  return v;
}

inline void store8(float* p, vf8 v) { std::memcpy(p, &v, sizeof(v)); }

inline vf8 splat8(float x) { return vf8{x, x, x, x, x, x, x, x}; }

// Fused multiply-add where the target has it. Either way the accumulation
// order is fixed, so results are reproducible on a given build.
inline vf8 fmadd8(vf8 a, vf8 b, vf8 c) {
#if defined(__FMA__)
  return reinterpret_cast<vf8>(_mm256_fmadd_ps(reinterpret_cast<__m256>(a), reinterpret_cast<__m256>(b),
                                               reinterpret_cast<__m256>(c)));
#else
  return a * b + c;
#endif
}

std::string where(std::string_view layer) {
  return layer.empty() ? std::string("conv2d") : std::string(layer);
}

void check_conv(const Shape4& in, const ConvParams& p, std::string_view layer) {
  const Shape4& k = p.kernel.shape();
  if (p.groups <= 0) throw ConfigError(where(layer) + ": groups must be positive");
  if (p.stride_h <= 0 || p.stride_w <= 0) throw ConfigError(where(layer) + ": stride must be positive");
  if (p.pad.top < 0 || p.pad.bottom < 0 || p.pad.left < 0 || p.pad.right < 0) {
    throw ConfigError(where(layer) + ": negative padding");
  }
  if (k.n % p.groups != 0) {
    throw ShapeError(where(layer) + ": out channels " + std::to_string(k.n) +
                     " not divisible by groups " + std::to_string(p.groups));
  }
  if (in.c != k.c * p.groups) {
    throw ShapeError(where(layer) + ": input has " + std::to_string(in.c) +
                     " channels, kernel " + k.str() + " with groups " +
                     std::to_string(p.groups) + " expects " + std::to_string(k.c * p.groups));
  }
  if (!p.bias.empty() && static_cast<int64_t>(p.bias.size()) != k.n) {
    throw ShapeError(where(layer) + ": bias length " + std::to_string(p.bias.size()) +
                     " != out channels " + std::to_string(k.n));
  }
}

// Zero-padded input split into stride phases. Phase (py, px) holds
// padded(y * sh + py, x * sw + px), so tap (kh, kw) of output column x reads
// phase (kh % sh, kw % sw) at (oy + kh / sh, x + kw / sw): every stride turns
// into contiguous loads. Rows and row count leave room for whole tiles.
struct PhaseBuffer {
  std::vector<float> data;
  int64_t cols = 0;
  int64_t channel_stride = 0;
  std::vector<int64_t> tap_offset;  // per (kh, kw), relative to a channel base
};

constexpr int64_t kMaxTileCols = 16;
constexpr int64_t kMaxTileRows = 4;

void make_phases(PhaseBuffer& b, const float* in, int64_t cin, int64_t H, int64_t W, int64_t KH,
                 int64_t KW, int sh, int sw, const Padding& pad, int64_t OH, int64_t OW,
                 int64_t tile_rows) {
  const int64_t rows = (OH + tile_rows - 1) / tile_rows * tile_rows + (KH - 1) / sh;
  b.cols = (OW + kMaxTileCols - 1) / kMaxTileCols * kMaxTileCols + (KW - 1) / sw;
  const int64_t phase_size = rows * b.cols;
  b.channel_stride = phase_size * sh * sw;
  // Every element is written below, so stale contents need no clearing.
  b.data.resize(static_cast<size_t>(b.channel_stride * cin));
  b.tap_offset.clear();
  for (int64_t kh = 0; kh < KH; ++kh) {
    for (int64_t kw = 0; kw < KW; ++kw) {
      b.tap_offset.push_back(((kh % sh) * sw + kw % sw) * phase_size + (kh / sh) * b.cols + kw / sw);
    }
  }
  for (int64_t ci = 0; ci < cin; ++ci) {
    const float* src = in + ci * H * W;
    for (int py = 0; py < sh; ++py) {
      for (int px = 0; px < sw; ++px) {
        float* dst = b.data.data() + ci * b.channel_stride + (py * sw + px) * phase_size;
        // Columns x whose source column x * sw + px - left lies in [0, W).
        const int64_t c0 = pad.left - px;
        const int64_t x_lo = std::min(b.cols, c0 <= 0 ? int64_t{0} : (c0 + sw - 1) / sw);
        const int64_t last = W - 1 + pad.left - px;
        const int64_t x_hi = std::max(x_lo, last < 0 ? int64_t{0} : std::min(b.cols, last / sw + 1));
        for (int64_t y = 0; y < rows; ++y) {
          float* drow = dst + y * b.cols;
          const int64_t r = y * sh + py - pad.top;
          if (r < 0 || r >= H) {
            std::fill(drow, drow + b.cols, 0.0f);
            continue;
          }
          std::fill(drow, drow + x_lo, 0.0f);
          std::fill(drow + x_hi, drow + b.cols, 0.0f);
          const float* from = src + r * W + px - pad.left;
          // Literal strides let the compiler vectorize the common cases.
          if (sw == 1) {
            std::copy(from + x_lo, from + x_hi, drow + x_lo);
          } else if (sw == 2) {
            for (int64_t x = x_lo; x < x_hi; ++x) drow[x] = from[2 * x];
          } else {
            for (int64_t x = x_lo; x < x_hi; ++x) drow[x] = from[x * sw];
          }
        }
      }
    }
  }
}

struct TileSink {
  float* out_group;
  int64_t OH;
  int64_t OW;
  const float* bias;    // per group output channel, or null
  Activation act;
  const float* slopes;  // prelu, per group output channel
};

inline vf8 activate(vf8 v, Activation act, float slope) {
  const vf8 zero = splat8(0.0f);
  switch (act) {
    case Activation::kNone:
      return v;
    case Activation::kRelu:
      return v > zero ? v : zero;
    case Activation::kRelu6: {
      const vf8 six = splat8(6.0f);
      const vf8 t = v < zero ? zero : v;
      return six < t ? six : t;
    }
    case Activation::kPrelu:
      return v >= zero ? v : splat8(slope) * v;
  }
  return v;
}

// CO output channels by R rows by V vectors of output columns. Each element
// accumulates in the canonical order (input channel, kernel row, kernel
// column) from zero; bias and activation follow.
template <int CO, int R, int V>
inline void conv_tile(const PhaseBuffer& b, const float* packed, int64_t cin, int64_t taps,
                      int64_t co0, int64_t oy, int64_t x0, const TileSink& sink, int64_t rows,
                      int64_t cols) {
  vf8 acc[CO][R][V];
  for (int j = 0; j < CO; ++j)
    for (int r = 0; r < R; ++r)
      for (int v = 0; v < V; ++v) acc[j][r][v] = splat8(0.0f);
  const float* base = b.data.data() + oy * b.cols + x0;
  const int64_t* off = b.tap_offset.data();
  for (int64_t ci = 0; ci < cin; ++ci) {
    const float* chan = base + ci * b.channel_stride;
    const float* w = packed + ci * taps * CO;
    for (int64_t t = 0; t < taps; ++t) {
      const float* src = chan + off[t];
      vf8 x[R][V];
      for (int r = 0; r < R; ++r)
        for (int v = 0; v < V; ++v) x[r][v] = load8(src + r * b.cols + 8 * v);
      for (int j = 0; j < CO; ++j) {
        const vf8 wv = splat8(w[t * CO + j]);
        for (int r = 0; r < R; ++r)
          for (int v = 0; v < V; ++v) acc[j][r][v] = fmadd8(wv, x[r][v], acc[j][r][v]);
      }
    }
  }
  for (int j = 0; j < CO; ++j) {
    const int64_t co = co0 + j;
    const float slope = sink.act == Activation::kPrelu ? sink.slopes[co] : 0.0f;
    for (int r = 0; r < R && r < rows; ++r) {
      float* dst = sink.out_group + co * sink.OH * sink.OW + (oy + r) * sink.OW + x0;
      float tmp[8 * V];
      float* to = cols == 8 * V ? dst : tmp;
      for (int v = 0; v < V; ++v) {
        vf8 y = acc[j][r][v];
        if (sink.bias != nullptr) y = y + splat8(sink.bias[co]);
        store8(to + 8 * v, activate(y, sink.act, slope));
      }
      if (to == tmp) std::memcpy(dst, tmp, static_cast<size_t>(cols) * sizeof(float));
    }
  }
}

// Weights for output channels [co0, co0+CO) as [ci][kh][kw][j].
template <int CO>
std::vector<float> pack_block(const float* kernel, int64_t co0, int64_t per) {
  std::vector<float> packed(static_cast<size_t>(per * CO));
  for (int j = 0; j < CO; ++j) {
    const float* src = kernel + (co0 + j) * per;
    for (int64_t i = 0; i < per; ++i) packed[static_cast<size_t>(i * CO + j)] = src[i];
  }
  return packed;
}

// Tiles covering columns [cx0, cx1) of rows [oy, oy + rows).
template <int CO, int R, int V>
void conv_rows(const PhaseBuffer& b, const std::vector<float>& packed, int64_t co0, int64_t cin,
               int64_t taps, const TileSink& sink, int64_t oy, int64_t rows, int64_t cx0,
               int64_t cx1) {
  constexpr int64_t kCols = 8 * V;
  for (int64_t x0 = cx0; x0 < cx1; x0 += kCols) {
    conv_tile<CO, R, V>(b, packed.data(), cin, taps, co0, oy, x0, sink, rows,
                        std::min(kCols, cx1 - x0));
  }
}

void conv_group(PhaseBuffer& b, const float* in_group, int64_t H, int64_t W, const float* kernel,
                int64_t cout_g, int64_t cin_g, int64_t KH, int64_t KW, int sh, int sw,
                const Padding& pad, const TileSink& sink) {
  const int64_t OH = sink.OH;
  const int64_t OW = sink.OW;
  make_phases(b, in_group, cin_g, H, W, KH, KW, sh, sw, pad, OH, OW,
              cout_g == 1 ? kMaxTileRows : 1);
  const int64_t taps = KH * KW;
  const int64_t per = cin_g * taps;
  if (cout_g == 1) {
    // Depthwise and other single-output groups: block over rows instead.
    const auto packed = pack_block<1>(kernel, 0, per);
    for (int64_t oy = 0; oy < OH; oy += kMaxTileRows) {
      conv_rows<1, kMaxTileRows, 2>(b, packed, 0, cin_g, taps, sink, oy,
                                    std::min(kMaxTileRows, OH - oy), 0, OW);
    }
    return;
  }
  constexpr int kWide = 8;
  constexpr int kNarrow = 4;
  std::vector<std::pair<int, std::vector<float>>> packs;
  int64_t co = 0;
  for (; co + kWide <= cout_g; co += kWide) packs.emplace_back(kWide, pack_block<kWide>(kernel, co, per));
  for (; co + kNarrow <= cout_g; co += kNarrow) {
    packs.emplace_back(kNarrow, pack_block<kNarrow>(kernel, co, per));
  }
  for (; co < cout_g; ++co) packs.emplace_back(1, pack_block<1>(kernel, co, per));
  // Column chunks keep the input slice of one row in cache across all blocks.
  constexpr int64_t kChunk = 256;
  for (int64_t oy = 0; oy < OH; ++oy) {
    for (int64_t cx0 = 0; cx0 < OW; cx0 += kChunk) {
      const int64_t cx1 = std::min(OW, cx0 + kChunk);
      int64_t c = 0;
      for (const auto& [width, packed] : packs) {
        if (width == kWide) conv_rows<kWide, 1, 2>(b, packed, c, cin_g, taps, sink, oy, 1, cx0, cx1);
        else if (width == kNarrow) conv_rows<kNarrow, 1, 2>(b, packed, c, cin_g, taps, sink, oy, 1, cx0, cx1);
        else conv_rows<1, 1, 2>(b, packed, c, cin_g, taps, sink, oy, 1, cx0, cx1);
        c += width;
      }
    }
  }
}

}  // namespace

Shape4 conv2d_output_shape(const Shape4& in, const ConvParams& p) {
  const int64_t oh =
      window_output_extent(in.h, p.pad.top + p.pad.bottom, p.kernel_h(), p.stride_h);
  const int64_t ow =
      window_output_extent(in.w, p.pad.left + p.pad.right, p.kernel_w(), p.stride_w);
  return {in.n, p.out_channels(), oh, ow};
}

Tensor conv2d(const Tensor& input, const ConvParams& p, std::string_view layer) {
  return conv2d(input, p, Epilogue{}, layer);
}

Tensor conv2d(const Tensor& input, const ConvParams& p, const Epilogue& epilogue,
              std::string_view layer) {
  const Shape4& in = input.shape();
  check_conv(in, p, layer);
  const Shape4 os = conv2d_output_shape(in, p);
  if (os.h <= 0 || os.w <= 0) {
    throw ConfigError(where(layer) + ": zero-sized output for input " + in.str() + " kernel " +
                      p.kernel.shape().str());
  }
  if (epilogue.act == Activation::kPrelu && static_cast<int64_t>(epilogue.slopes.size()) != os.c) {
    throw ShapeError(where(layer) + ": " + std::to_string(epilogue.slopes.size()) +
                     " prelu slopes for " + std::to_string(os.c) + " channels");
  }
  Tensor out(os);
  const int64_t cin_g = p.kernel.shape().c;
  const int64_t cout_g = os.c / p.groups;
  const int64_t KH = p.kernel_h();
  const int64_t KW = p.kernel_w();
  const int64_t per = cin_g * KH * KW;
  // A 1x1 unpadded stride-1 conv is pixel-independent: run it over the flattened plane.
  const bool flat = p.stride_h == 1 && p.stride_w == 1 && KH == 1 && KW == 1 && p.pad == Padding{};
  PhaseBuffer work;
  for (int64_t n = 0; n < in.n; ++n) {
    for (int64_t g = 0; g < p.groups; ++g) {
      const float* in_group = input.plane(n, g * cin_g);
      const float* kernel = p.kernel.data() + g * cout_g * per;
      TileSink sink{out.plane(n, g * cout_g),
                    flat ? 1 : os.h,
                    flat ? os.plane() : os.w,
                    p.bias.empty() ? nullptr : p.bias.data() + g * cout_g,
                    epilogue.act,
                    epilogue.slopes.empty() ? nullptr : epilogue.slopes.data() + g * cout_g};
      if (flat) {
        conv_group(work, in_group, 1, in.h * in.w, kernel, cout_g, cin_g, 1, 1, 1, 1, Padding{}, sink);
      } else {
        conv_group(work, in_group, in.h, in.w, kernel, cout_g, cin_g, KH, KW, p.stride_h, p.stride_w,
                   p.pad, sink);
      }
    }
  }
  return out;
}

Tensor pointwise_conv(const Tensor& input, const ConvParams& p, std::string_view layer) {
  if (p.kernel_h() != 1 || p.kernel_w() != 1 || p.stride_h != 1 || p.stride_w != 1) {
    throw ConfigError(where(layer) + ": pointwise conv needs a 1x1 kernel with stride 1, got " +
                      p.kernel.shape().str());
  }
  return conv2d(input, p, layer);
}

ConvParams fold_batchnorm(const ConvParams& conv, const BnParams& bn) {
  const int64_t oc = conv.out_channels();
  const auto n = static_cast<size_t>(oc);
  if (bn.gamma.size() != n || bn.beta.size() != n || bn.running_mean.size() != n ||
      bn.running_var.size() != n) {
    throw ShapeError("fold_batchnorm: batch norm has " + std::to_string(bn.gamma.size()) +
                     " channels, conv has " + std::to_string(oc));
  }
  ConvParams out = conv;
  const int64_t per = conv.kernel.shape().c * conv.kernel_h() * conv.kernel_w();
  out.bias.assign(n, 0.0f);
  for (size_t c = 0; c < n; ++c) {
    if (bn.running_var[c] < 0.0f) throw ConfigError("fold_batchnorm: negative running variance");
    const float scale = bn.gamma[c] / std::sqrt(bn.running_var[c] + bn.epsilon);
    float* k = out.kernel.data() + static_cast<int64_t>(c) * per;
    for (int64_t i = 0; i < per; ++i) k[i] *= scale;
    const float b = conv.bias.empty() ? 0.0f : conv.bias[c];
    out.bias[c] = (b - bn.running_mean[c]) * scale + bn.beta[c];
  }
  return out;
}

Tensor batchnorm(Tensor input, const BnParams& bn) {
  const Shape4 s = input.shape();
  const auto n = static_cast<size_t>(s.c);
  if (bn.gamma.size() != n || bn.beta.size() != n || bn.running_mean.size() != n ||
      bn.running_var.size() != n) {
    throw ShapeError("batchnorm: parameter length does not match " + std::to_string(s.c) +
                     " channels");
  }
  for (int64_t b = 0; b < s.n; ++b) {
    for (int64_t c = 0; c < s.c; ++c) {
      const auto ci = static_cast<size_t>(c);
      const float inv = 1.0f / std::sqrt(bn.running_var[ci] + bn.epsilon);
      float* plane = input.plane(b, c);
      for (int64_t i = 0; i < s.plane(); ++i) {
        plane[i] = (plane[i] - bn.running_mean[ci]) * inv * bn.gamma[ci] + bn.beta[ci];
      }
    }
  }
  return input;
}

Tensor relu(Tensor input) {
  for (float& v : input.values()) v = v > 0.0f ? v : 0.0f;
  return input;
}

Tensor relu6(Tensor input) {
  for (float& v : input.values()) v = std::min(std::max(v, 0.0f), 6.0f);
  return input;
}

Tensor prelu(Tensor input, std::span<const float> slopes) {
  const Shape4 s = input.shape();
  if (static_cast<int64_t>(slopes.size()) != s.c) {
    throw ShapeError("prelu: " + std::to_string(slopes.size()) + " slopes for " +
                     std::to_string(s.c) + " channels");
  }
  for (int64_t b = 0; b < s.n; ++b) {
    for (int64_t c = 0; c < s.c; ++c) {
      const float a = slopes[static_cast<size_t>(c)];
      float* plane = input.plane(b, c);
      for (int64_t i = 0; i < s.plane(); ++i) {
        plane[i] = plane[i] >= 0.0f ? plane[i] : a * plane[i];
      }
    }
  }
  return input;
}

Tensor max_pool(const Tensor& input, const PoolParams& p) {
  const Shape4 s = input.shape();
  if (p.window_h <= 0 || p.window_w <= 0 || p.stride_h <= 0 || p.stride_w <= 0) {
    throw ConfigError("max_pool: window and stride must be positive");
  }
  const int64_t oh = window_output_extent(s.h, p.pad.top + p.pad.bottom, p.window_h, p.stride_h);
  const int64_t ow = window_output_extent(s.w, p.pad.left + p.pad.right, p.window_w, p.stride_w);
  if (oh <= 0 || ow <= 0) {
    throw ConfigError("max_pool: window " + std::to_string(p.window_h) + "x" +
                      std::to_string(p.window_w) + " larger than padded input " + s.str());
  }
  Tensor out({s.n, s.c, oh, ow});
  constexpr float lowest = -std::numeric_limits<float>::infinity();
  // Column maxima over the window rows first, then maxima along each row.
  std::vector<float> col(static_cast<size_t>(s.w));
  for (int64_t b = 0; b < s.n; ++b) {
    for (int64_t c = 0; c < s.c; ++c) {
      const float* in = input.plane(b, c);
      float* o = out.plane(b, c);
      for (int64_t oy = 0; oy < oh; ++oy) {
        const int64_t y0 = std::max<int64_t>(oy * p.stride_h - p.pad.top, 0);
        const int64_t y1 = std::min<int64_t>(oy * p.stride_h - p.pad.top + p.window_h, s.h);
        if (y1 <= y0) {
          std::fill(o + oy * ow, o + (oy + 1) * ow, lowest);
          continue;
        }
        std::copy(in + y0 * s.w, in + (y0 + 1) * s.w, col.begin());
        for (int64_t y = y0 + 1; y < y1; ++y) {
          const float* row = in + y * s.w;
          for (int64_t x = 0; x < s.w; ++x) col[x] = col[x] < row[x] ? row[x] : col[x];
        }
        for (int64_t ox = 0; ox < ow; ++ox) {
          const int64_t x0 = std::max<int64_t>(ox * p.stride_w - p.pad.left, 0);
          const int64_t x1 = std::min<int64_t>(ox * p.stride_w - p.pad.left + p.window_w, s.w);
          float m = lowest;
          for (int64_t x = x0; x < x1; ++x) m = m < col[x] ? col[x] : m;
          o[oy * ow + ox] = m;
        }
      }
    }
  }
  return out;
}

Tensor global_avg_pool(const Tensor& input) {
  const Shape4 s = input.shape();
  if (s.plane() == 0) throw ShapeError("global_avg_pool: empty spatial extent");
  Tensor out({s.n, s.c, 1, 1});
  const auto count = static_cast<float>(s.plane());
  for (int64_t b = 0; b < s.n; ++b) {
    for (int64_t c = 0; c < s.c; ++c) {
      const float* in = input.plane(b, c);
      float sum = 0.0f;
      for (int64_t i = 0; i < s.plane(); ++i) sum += in[i];
      out.at(b, c, 0, 0) = sum / count;
    }
  }
  return out;
}

Tensor global_depthwise_conv(const Tensor& input, const Tensor& kernel,
                             std::span<const float> bias) {
  const Shape4 s = input.shape();
  const Shape4& k = kernel.shape();
  if (k.n != s.c || k.c != 1) {
    throw ShapeError("global_depthwise_conv: kernel " + k.str() + " for input " + s.str());
  }
  if (k.h != s.h || k.w != s.w) {
    throw ShapeError("global_depthwise_conv: kernel spatial " + std::to_string(k.h) + "x" +
                     std::to_string(k.w) + " != input spatial " + std::to_string(s.h) + "x" +
                     std::to_string(s.w));
  }
  if (!bias.empty() && static_cast<int64_t>(bias.size()) != s.c) {
    throw ShapeError("global_depthwise_conv: bias length mismatch");
  }
  Tensor out({s.n, s.c, 1, 1});
  for (int64_t b = 0; b < s.n; ++b) {
    for (int64_t c = 0; c < s.c; ++c) {
      const float* in = input.plane(b, c);
      const float* w = kernel.plane(c, 0);
      float acc = 0.0f;
      for (int64_t i = 0; i < s.plane(); ++i) acc += w[i] * in[i];
      if (!bias.empty()) acc += bias[static_cast<size_t>(c)];
      out.at(b, c, 0, 0) = acc;
    }
  }
  return out;
}

std::vector<float> fully_connected(std::span<const float> input, std::span<const float> weights,
                                   std::span<const float> bias, int64_t out_features) {
  const auto in = static_cast<int64_t>(input.size());
  if (out_features <= 0) throw ConfigError("fully_connected: no outputs");
  if (static_cast<int64_t>(weights.size()) != in * out_features) {
    throw ShapeError("fully_connected: weights hold " + std::to_string(weights.size()) +
                     " values, expected " + std::to_string(out_features) + "x" +
                     std::to_string(in));
  }
  if (!bias.empty() && static_cast<int64_t>(bias.size()) != out_features) {
    throw ShapeError("fully_connected: bias length mismatch");
  }
  std::vector<float> out(static_cast<size_t>(out_features));
  constexpr int64_t kRows = 8;
  int64_t o = 0;
  // Independent rows interleaved; each row still sums in input order.
  for (; o + kRows <= out_features; o += kRows) {
    float acc[kRows] = {};
    const float* w = weights.data() + o * in;
    for (int64_t i = 0; i < in; ++i) {
      const float x = input[static_cast<size_t>(i)];
      for (int64_t r = 0; r < kRows; ++r) acc[r] += w[r * in + i] * x;
    }
    for (int64_t r = 0; r < kRows; ++r) out[static_cast<size_t>(o + r)] = acc[r];
  }
  for (; o < out_features; ++o) {
    float acc = 0.0f;
    const float* w = weights.data() + o * in;
    for (int64_t i = 0; i < in; ++i) acc += w[i] * input[static_cast<size_t>(i)];
    out[static_cast<size_t>(o)] = acc;
  }
  if (!bias.empty()) {
    for (int64_t r = 0; r < out_features; ++r) {
      out[static_cast<size_t>(r)] += bias[static_cast<size_t>(r)];
    }
  }
  return out;
}

Tensor fully_connected(const Tensor& input, std::span<const float> weights,
                       std::span<const float> bias, int64_t out_features) {
  const Shape4 s = input.shape();
  const int64_t per = s.c * s.h * s.w;
  std::vector<float> data;
  data.reserve(static_cast<size_t>(s.n * out_features));
  for (int64_t b = 0; b < s.n; ++b) {
    std::span<const float> row(input.data() + b * per, static_cast<size_t>(per));
    auto y = fully_connected(row, weights, bias, out_features);
    data.insert(data.end(), y.begin(), y.end());
  }
  return Tensor({s.n, out_features, 1, 1}, std::move(data));
}

Tensor residual_add(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("residual_add: " + a.shape().str() + " vs " + b.shape().str());
  }
  Tensor out = a;
  float* o = out.data();
  const float* y = b.data();
  for (int64_t i = 0; i < out.size(); ++i) o[i] += y[i];
  return out;
}

Tensor concat_channels(std::span<const Tensor* const> parts) {
  if (parts.empty()) throw ShapeError("concat_channels: nothing to concatenate");
  const Shape4 first = parts.front()->shape();
  int64_t channels = 0;
  for (const Tensor* t : parts) {
    const Shape4& s = t->shape();
    if (s.n != first.n || s.h != first.h || s.w != first.w) {
      throw ShapeError("concat_channels: " + s.str() + " vs " + first.str());
    }
    channels += s.c;
  }
  Tensor out({first.n, channels, first.h, first.w});
  for (int64_t b = 0; b < first.n; ++b) {
    int64_t c0 = 0;
    for (const Tensor* t : parts) {
      const int64_t count = t->shape().c * first.plane();
      std::copy_n(t->plane(b, 0), count, out.plane(b, c0));
      c0 += t->shape().c;
    }
  }
  return out;
}

std::vector<float> softmax(std::span<const float> v) {
  std::vector<float> out(v.size());
  if (v.empty()) return out;
  const float m = *std::max_element(v.begin(), v.end());
  double sum = 0.0;
  for (size_t i = 0; i < v.size(); ++i) {
    out[i] = std::exp(v[i] - m);
    sum += out[i];
  }
  for (float& x : out) x = static_cast<float>(x / sum);
  return out;
}

}  // namespace ocsb
