#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "ocsb/tensor.hpp"

namespace ocsb {

struct Padding {
  int top = 0;
  int bottom = 0;
  int left = 0;
  int right = 0;

  static constexpr Padding uniform(int p) { return {p, p, p, p}; }
  friend constexpr bool operator==(const Padding&, const Padding&) = default;
};

/// Convolution weights and geometry. kernel is (out_ch, in_ch/groups, kh, kw).
struct ConvParams {
  Tensor kernel;
  std::vector<float> bias;  // empty or out_ch entries
  int stride_h = 1;
  int stride_w = 1;
  Padding pad;
  int groups = 1;

  int64_t out_channels() const { return kernel.shape().n; }
  int64_t in_channels() const { return kernel.shape().c * groups; }
  int64_t kernel_h() const { return kernel.shape().h; }
  int64_t kernel_w() const { return kernel.shape().w; }
  bool is_depthwise() const {
    return groups == in_channels() && out_channels() == in_channels() && groups > 1;
  }
};

struct BnParams {
  std::vector<float> gamma;
  std::vector<float> beta;
  std::vector<float> running_mean;
  std::vector<float> running_var;
  float epsilon = 1e-5f;
};

struct PoolParams {
  int window_h = 2;
  int window_w = 2;
  int stride_h = 2;
  int stride_w = 2;
  Padding pad;
};

/// Output extent of a sliding window: floor((in + pad - k) / s) + 1.
/// Returns 0 or less when the window does not fit.
constexpr int64_t window_output_extent(int64_t in, int64_t pad_total, int64_t k, int64_t stride) {
  const int64_t span = in + pad_total - k;
  return span < 0 ? 0 : span / stride + 1;
}

Shape4 conv2d_output_shape(const Shape4& input, const ConvParams& p);

// Every convolution accumulates each output element in weight-tensor order
// (input channel, kernel row, kernel column) starting from zero, with padded
// taps contributing zero, then adds the bias. Products are fused
// multiply-adds when the target supports them.

enum class Activation { kNone, kRelu, kRelu6, kPrelu };

/// Activation applied to each output element after the bias, with the same
/// arithmetic as relu(), relu6() and prelu().
struct Epilogue {
  Activation act = Activation::kNone;
  std::span<const float> slopes;  // prelu only, one per output channel
};

Tensor conv2d(const Tensor& input, const ConvParams& p, std::string_view layer = {});
Tensor conv2d(const Tensor& input, const ConvParams& p, const Epilogue& epilogue,
              std::string_view layer = {});
Tensor pointwise_conv(const Tensor& input, const ConvParams& p, std::string_view layer = {});

/// Fold inference-mode batch norm into the preceding convolution.
/// scale = gamma / sqrt(var + eps); kernel' = kernel * scale; bias' = (bias - mean) * scale + beta.
ConvParams fold_batchnorm(const ConvParams& conv, const BnParams& bn);

/// Unfolded inference-mode batch norm over channels.
Tensor batchnorm(Tensor input, const BnParams& bn);

Tensor relu(Tensor input);
Tensor relu6(Tensor input);
Tensor prelu(Tensor input, std::span<const float> slopes);

Tensor max_pool(const Tensor& input, const PoolParams& p);
Tensor global_avg_pool(const Tensor& input);

/// Per-channel weighted sum over the full spatial extent; kernel is (C, 1, H, W).
Tensor global_depthwise_conv(const Tensor& input, const Tensor& kernel,
                             std::span<const float> bias = {});

/// weights is row-major (out, in). Accumulates in input order, then adds bias.
std::vector<float> fully_connected(std::span<const float> input, std::span<const float> weights,
                                   std::span<const float> bias, int64_t out_features);

/// Batched form: input (N, in, 1, 1) or any tensor flattened per batch entry.
Tensor fully_connected(const Tensor& input, std::span<const float> weights,
                       std::span<const float> bias, int64_t out_features);

Tensor residual_add(const Tensor& a, const Tensor& b);

/// Concatenate along the channel axis.
Tensor concat_channels(std::span<const Tensor* const> parts);

std::vector<float> softmax(std::span<const float> v);

}  // namespace ocsb
