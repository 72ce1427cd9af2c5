#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace lrc {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major float32 array. The constructor enforces rank >= 1,
/// every dimension >= 1 and data.size() == product(shape).
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);  // zero-filled
  Tensor(Shape shape, std::vector<float> data);

  const Shape& shape() const noexcept { return shape_; }
  std::int64_t rank() const noexcept { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t numel() const noexcept { return static_cast<std::int64_t>(data_.size()); }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  float operator[](std::size_t i) const { return data_[i]; }
  float& operator[](std::size_t i) { return data_[i]; }

  bool all_finite() const noexcept;

  // Bitwise equality: distinguishes +0/-0 and compares NaN payloads.
  friend bool bitwise_equal(const Tensor& a, const Tensor& b) noexcept;

 private:
  Shape shape_;
  std::vector<float> data_;
};

struct TensorStats {
  std::int64_t element_count = 0;
  std::int64_t nonzero_count = 0;
  std::int64_t nonfinite_count = 0;  // NaN or Inf; excluded from l1/min/max
  double l1_sum = 0.0;
  double min = 0.0;
  double max = 0.0;
};

TensorStats tensor_stats(const Tensor& t);

}  // namespace lrc
