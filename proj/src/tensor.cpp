#include "lrc/tensor.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>

#include "lrc/error.hpp"

namespace lrc {

std::int64_t shape_numel(const Shape& shape) {
  if (shape.empty()) throw Error(ErrorKind::ShapeMismatch, "tensor rank must be >= 1");
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 1) throw Error(ErrorKind::ShapeMismatch, "tensor dimensions must be >= 1, got " + shape_to_string(shape));
    if (n > std::numeric_limits<std::int64_t>::max() / d)
      throw Error(ErrorKind::ShapeMismatch, "tensor shape overflows: " + shape_to_string(shape));
    n *= d;
  }
  return n;
}

std::string shape_to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

Tensor::Tensor(Shape shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(shape_numel(shape_)), 0.0f);
}

Tensor::Tensor(Shape shape, std::vector<float> data) : shape_(std::move(shape)), data_(std::move(data)) {
  const auto n = shape_numel(shape_);
  if (static_cast<std::int64_t>(data_.size()) != n)
    throw Error(ErrorKind::ShapeMismatch, "tensor data length " + std::to_string(data_.size()) +
                                              " does not match shape " + shape_to_string(shape_));
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](float v) { return std::isfinite(v); });
}

bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept {
  if (a.shape_ != b.shape_ || a.data_.size() != b.data_.size()) return false;
  return a.data_.empty() || std::memcmp(a.data_.data(), b.data_.data(), a.data_.size() * sizeof(float)) == 0;
}

TensorStats tensor_stats(const Tensor& t) {
  TensorStats st;
  st.element_count = t.numel();
  bool seen = false;
  for (float v : t.data()) {
    if ((std::bit_cast<std::uint32_t>(v) & 0x7fffffffu) != 0) ++st.nonzero_count;
    if (!std::isfinite(v)) {
      ++st.nonfinite_count;
      continue;
    }
    const double d = v;
    st.l1_sum += std::fabs(d);
    if (!seen) {
      st.min = st.max = d;
      seen = true;
    } else {
      st.min = std::min(st.min, d);
      st.max = std::max(st.max, d);
    }
  }
  return st;
}

}  // namespace lrc
