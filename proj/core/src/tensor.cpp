#include "ocsb/tensor.hpp"

#include <cmath>
#include <sstream>
#include <utility>

#include "ocsb/error.hpp"

namespace ocsb {

std::string Shape4::str() const {
  std::ostringstream os;
  os << n << "x" << c << "x" << h << "x" << w;
  return os.str();
}

Tensor::Tensor(Shape4 shape, float fill) : shape_(shape) {
  if (shape.n < 0 || shape.c < 0 || shape.h < 0 || shape.w < 0) {
    throw ShapeError("negative tensor dimension " + shape.str());
  }
  data_.assign(static_cast<size_t>(shape.size()), fill);
}

Tensor::Tensor(Shape4 shape, std::vector<float> data) : shape_(shape), data_(std::move(data)) {
  if (static_cast<int64_t>(data_.size()) != shape.size()) {
    throw ShapeError("tensor " + shape.str() + " needs " + std::to_string(shape.size()) +
                     " values, got " + std::to_string(data_.size()));
  }
}

Tensor Tensor::reshaped(Shape4 shape) && {
  if (shape.size() != size()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  return Tensor(shape, std::move(data_));
}

Tensor Tensor::reshaped(Shape4 shape) const& {
  Tensor copy = *this;
  return std::move(copy).reshaped(shape);
}

Tensor Tensor::batch_slice(int64_t n) const {
  if (n < 0 || n >= shape_.n) throw ShapeError("batch index out of range");
  const int64_t per = shape_.c * shape_.h * shape_.w;
  std::vector<float> out(data_.begin() + n * per, data_.begin() + (n + 1) * per);
  return Tensor({1, shape_.c, shape_.h, shape_.w}, std::move(out));
}

bool Tensor::all_finite() const {
  for (float v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) return {};
  const Shape4 first = items.front().shape();
  if (first.n != 1) throw ShapeError("stack_batch expects 1xCxHxW items");
  std::vector<float> data;
  data.reserve(static_cast<size_t>(first.size() * static_cast<int64_t>(items.size())));
  for (const Tensor& t : items) {
    if (t.shape() != first) {
      throw ShapeError("stack_batch: " + t.shape().str() + " vs " + first.str());
    }
    data.insert(data.end(), t.values().begin(), t.values().end());
  }
  return Tensor({static_cast<int64_t>(items.size()), first.c, first.h, first.w}, std::move(data));
}

}  // namespace ocsb
