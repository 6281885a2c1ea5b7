#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace ocsb {

/// NCHW dimensions.
struct Shape4 {
  int64_t n = 0;
  int64_t c = 0;
  int64_t h = 0;
  int64_t w = 0;

  constexpr int64_t size() const { return n * c * h * w; }
  constexpr int64_t plane() const { return h * w; }
  friend constexpr bool operator==(const Shape4&, const Shape4&) = default;

  std::string str() const;
};

/// Dense float32 tensor in batch, channel, row, column order.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape4 shape, float fill = 0.0f);
  Tensor(Shape4 shape, std::vector<float> data);

  const Shape4& shape() const { return shape_; }
  int64_t size() const { return static_cast<int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float& at(int64_t n, int64_t c, int64_t h, int64_t w) {
    return data_[static_cast<size_t>(((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
  }
  float at(int64_t n, int64_t c, int64_t h, int64_t w) const {
    return data_[static_cast<size_t>(((n * shape_.c + c) * shape_.h + h) * shape_.w + w)];
  }

  /// Pointer to the (n, c) plane.
  float* plane(int64_t n, int64_t c) { return data_.data() + (n * shape_.c + c) * shape_.plane(); }
  const float* plane(int64_t n, int64_t c) const {
    return data_.data() + (n * shape_.c + c) * shape_.plane();
  }

  /// Same data, new dims; element counts must agree.
  Tensor reshaped(Shape4 shape) &&;
  Tensor reshaped(Shape4 shape) const&;

  /// The n-th batch entry as a 1×C×H×W tensor.
  Tensor batch_slice(int64_t n) const;

  bool all_finite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape4 shape_;
  std::vector<float> data_;
};

/// Stack 1×C×H×W tensors into an N×C×H×W batch.
Tensor stack_batch(std::span<const Tensor> items);

}  // namespace ocsb
