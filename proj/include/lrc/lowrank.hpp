#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <variant>
#include <vector>

#include "lrc/tensor.hpp"

namespace lrc {

/// Row-major float32 matrix.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::int64_t rows, std::int64_t cols);  // zero-filled
  Matrix(std::int64_t rows, std::int64_t cols, std::vector<float> data);

  static Matrix identity(std::int64_t n);

  std::int64_t rows() const noexcept { return rows_; }
  std::int64_t cols() const noexcept { return cols_; }

  float operator()(std::int64_t r, std::int64_t c) const { return data_[static_cast<std::size_t>(r * cols_ + c)]; }
  float& operator()(std::int64_t r, std::int64_t c) { return data_[static_cast<std::size_t>(r * cols_ + c)]; }

  std::span<const float> data() const noexcept { return data_; }
  std::span<float> data() noexcept { return data_; }

  Matrix transposed() const;
  double frobenius_norm() const;

 private:
  std::int64_t rows_ = 0;
  std::int64_t cols_ = 0;
  std::vector<float> data_;
};

/// A ≈ U·diag(s)·Vᵀ with U m×k, V n×k (columns are singular vectors).
struct SvdFactors {
  Matrix u;
  std::vector<float> s;
  Matrix v;

  std::int64_t rank() const noexcept { return static_cast<std::int64_t>(s.size()); }
};

struct FixedRank {
  std::int64_t k = 1;
};
struct EnergyRank {
  double fraction = 1.0;  // in (0, 1]
};
struct FullRank {};

using RankPolicy = std::variant<FixedRank, EnergyRank, FullRank>;

inline constexpr std::int64_t kMaxSvdShortSide = 4096;
inline constexpr int kMaxJacobiSweeps = 60;

SvdFactors full_svd(const Matrix& a);
SvdFactors truncated_svd(const Matrix& a, const RankPolicy& policy);

// Smallest k whose cumulative squared-singular-value share reaches fraction.
std::int64_t energy_rank(std::span<const float> singular_values, double fraction);

Matrix reconstruct(const SvdFactors& f);

enum class ReshapeMode { Table1, NearSquare };

const char* to_string(ReshapeMode mode);
ReshapeMode reshape_mode_from_string(std::string_view s);

/// Matrix dimensions used to factor a conv kernel of shape [O, I, Kh, Kw].
/// Table1 gives (I·Kh·Kw, O); NearSquare gives the largest divisor of numel
/// not exceeding floor(sqrt(numel)) as the row count.
std::pair<std::int64_t, std::int64_t> reshape_for_svd(std::int64_t numel, const Shape& conv_shape,
                                                      ReshapeMode mode);

/// Kernel tensor -> matrix under the given mode. Table1 maps element
/// W[o, r] (r flattened over I, Kh, Kw) to M[r, o].
Matrix conv_to_matrix(const Tensor& w, ReshapeMode mode);
Tensor matrix_to_conv(const Matrix& m, const Shape& conv_shape, ReshapeMode mode);

}  // namespace lrc
