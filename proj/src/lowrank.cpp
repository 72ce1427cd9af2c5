#include "lrc/lowrank.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "lrc/error.hpp"

namespace lrc {

Matrix::Matrix(std::int64_t rows, std::int64_t cols) : rows_(rows), cols_(cols) {
  if (rows < 1 || cols < 1) throw Error(ErrorKind::ShapeMismatch, "matrix dimensions must be >= 1");
  data_.assign(static_cast<std::size_t>(rows * cols), 0.0f);
}

Matrix::Matrix(std::int64_t rows, std::int64_t cols, std::vector<float> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows < 1 || cols < 1) throw Error(ErrorKind::ShapeMismatch, "matrix dimensions must be >= 1");
  if (static_cast<std::int64_t>(data_.size()) != rows * cols)
    throw Error(ErrorKind::ShapeMismatch, "matrix data length does not match " + std::to_string(rows) +
                                              "x" + std::to_string(cols));
}

Matrix Matrix::identity(std::int64_t n) {
  Matrix m(n, n);
  for (std::int64_t i = 0; i < n; ++i) m(i, i) = 1.0f;
  return m;
}

Matrix Matrix::transposed() const {
  Matrix t(cols_, rows_);
  for (std::int64_t r = 0; r < rows_; ++r)
    for (std::int64_t c = 0; c < cols_; ++c) t(c, r) = (*this)(r, c);
  return t;
}

double Matrix::frobenius_norm() const {
  double acc = 0.0;
  for (float v : data_) acc += static_cast<double>(v) * v;
  return std::sqrt(acc);
}

namespace {

// Column-major double matrix used inside the Jacobi iteration.
struct Columns {
  std::int64_t rows = 0;
  std::int64_t cols = 0;
  std::vector<double> data;

  double* col(std::int64_t j) { return data.data() + j * rows; }
  const double* col(std::int64_t j) const { return data.data() + j * rows; }
};

double dot(const double* a, const double* b, std::int64_t n) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < n; ++i) acc += a[i] * b[i];
  return acc;
}

void rotate(double* p, double* q, std::int64_t n, double c, double s) {
  for (std::int64_t i = 0; i < n; ++i) {
    const double x = p[i];
    const double y = q[i];
    p[i] = c * x - s * y;
    q[i] = s * x + c * y;
  }
}

// Fills columns of `basis` flagged in `missing` with unit vectors orthogonal
// to every other column, drawing candidates from the canonical basis.
void complete_orthonormal(Columns& basis, const std::vector<bool>& missing) {
  const std::int64_t n = basis.rows;
  std::vector<std::int64_t> accepted;
  for (std::int64_t j = 0; j < basis.cols; ++j)
    if (!missing[static_cast<std::size_t>(j)]) accepted.push_back(j);

  std::int64_t candidate = 0;
  std::vector<double> v(static_cast<std::size_t>(n));
  for (std::int64_t j = 0; j < basis.cols; ++j) {
    if (!missing[static_cast<std::size_t>(j)]) continue;
    for (; candidate < n; ++candidate) {
      std::fill(v.begin(), v.end(), 0.0);
      v[static_cast<std::size_t>(candidate)] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (auto a : accepted) {
          const double proj = dot(basis.col(a), v.data(), n);
          const double* col = basis.col(a);
          for (std::int64_t i = 0; i < n; ++i) v[static_cast<std::size_t>(i)] -= proj * col[i];
        }
      }
      const double norm = std::sqrt(dot(v.data(), v.data(), n));
      if (norm > 0.5) {
        double* out = basis.col(j);
        for (std::int64_t i = 0; i < n; ++i) out[i] = v[static_cast<std::size_t>(i)] / norm;
        accepted.push_back(j);
        ++candidate;
        break;
      }
    }
  }
}

// One-sided Jacobi on a tall (rows >= cols) matrix given column-major.
// Returns singular values (unsorted), left vectors in g, right vectors in v.
std::vector<double> jacobi_svd_tall(Columns& g, Columns& v) {
  const std::int64_t m = g.rows;
  const std::int64_t n = g.cols;
  v.rows = n;
  v.cols = n;
  v.data.assign(static_cast<std::size_t>(n * n), 0.0);
  for (std::int64_t i = 0; i < n; ++i) v.col(i)[i] = 1.0;

  const double norm_sq = dot(g.data.data(), g.data.data(), m * n);
  const double abs_floor = 1e-30 * norm_sq;
  constexpr double rel_tol = 1e-12;

  int sweep = 0;
  for (;; ++sweep) {
    if (sweep == kMaxJacobiSweeps)
      throw ConvergenceError(sweep, "svd did not converge after " + std::to_string(sweep) + " sweeps");
    bool rotated = false;
    for (std::int64_t p = 0; p + 1 < n; ++p) {
      for (std::int64_t q = p + 1; q < n; ++q) {
        double* gp = g.col(p);
        double* gq = g.col(q);
        const double alpha = dot(gp, gp, m);
        const double beta = dot(gq, gq, m);
        const double gamma = dot(gp, gq, m);
        if (std::fabs(gamma) <= rel_tol * std::sqrt(alpha * beta) || std::fabs(gamma) <= abs_floor) continue;
        rotated = true;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::fabs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        rotate(gp, gq, m, c, s);
        rotate(v.col(p), v.col(q), n, c, s);
      }
    }
    if (!rotated) break;
  }

  std::vector<double> sigma(static_cast<std::size_t>(n));
  for (std::int64_t j = 0; j < n; ++j) sigma[static_cast<std::size_t>(j)] = std::sqrt(dot(g.col(j), g.col(j), m));
  return sigma;
}

void check_svd_input(const Matrix& a) {
  if (std::min(a.rows(), a.cols()) > kMaxSvdShortSide)
    throw Error(ErrorKind::InvalidArgument, "svd input short side exceeds " + std::to_string(kMaxSvdShortSide));
  for (float x : a.data())
    if (!std::isfinite(x)) throw Error(ErrorKind::NonFinite, "svd input contains NaN or Inf");
}

}  // namespace

SvdFactors full_svd(const Matrix& a) {
  check_svd_input(a);
  const bool transpose = a.rows() < a.cols();
  const std::int64_t m = transpose ? a.cols() : a.rows();
  const std::int64_t n = transpose ? a.rows() : a.cols();

  Columns g{m, n, std::vector<double>(static_cast<std::size_t>(m * n))};
  for (std::int64_t r = 0; r < a.rows(); ++r)
    for (std::int64_t c = 0; c < a.cols(); ++c) {
      const double x = a(r, c);
      if (transpose) g.col(r)[c] = x;
      else g.col(c)[r] = x;
    }

  Columns v;
  const auto sigma = jacobi_svd_tall(g, v);

  std::vector<std::int64_t> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto x, auto y) {
    return sigma[static_cast<std::size_t>(x)] > sigma[static_cast<std::size_t>(y)];
  });

  const double sigma_max = n > 0 ? sigma[static_cast<std::size_t>(order[0])] : 0.0;
  const double cutoff = sigma_max * 1e-13;

  Columns left{m, n, std::vector<double>(static_cast<std::size_t>(m * n))};
  Columns right{n, n, std::vector<double>(static_cast<std::size_t>(n * n))};
  std::vector<double> s(static_cast<std::size_t>(n));
  std::vector<bool> missing(static_cast<std::size_t>(n), false);
  for (std::int64_t j = 0; j < n; ++j) {
    const auto src = order[static_cast<std::size_t>(j)];
    const double sv = sigma[static_cast<std::size_t>(src)];
    s[static_cast<std::size_t>(j)] = sv;
    std::copy_n(v.col(src), n, right.col(j));
    if (sv > cutoff && sv > 0.0) {
      const double* in = g.col(src);
      double* out = left.col(j);
      for (std::int64_t i = 0; i < m; ++i) out[i] = in[i] / sv;
    } else {
      missing[static_cast<std::size_t>(j)] = true;
    }
  }
  complete_orthonormal(left, missing);

  // For the wide case the roles of the two bases swap.
  Columns& u_cols = transpose ? right : left;
  Columns& v_cols = transpose ? left : right;

  // Deterministic signs: the largest-magnitude entry of each U column is
  // non-negative, earliest index winning ties.
  for (std::int64_t j = 0; j < n; ++j) {
    double* uc = u_cols.col(j);
    std::int64_t best = 0;
    for (std::int64_t i = 1; i < u_cols.rows; ++i)
      if (std::fabs(uc[i]) > std::fabs(uc[best])) best = i;
    if (uc[best] < 0.0) {
      for (std::int64_t i = 0; i < u_cols.rows; ++i) uc[i] = -uc[i];
      double* vc = v_cols.col(j);
      for (std::int64_t i = 0; i < v_cols.rows; ++i) vc[i] = -vc[i];
    }
  }

  SvdFactors f;
  f.u = Matrix(a.rows(), n);
  f.v = Matrix(a.cols(), n);
  f.s.resize(static_cast<std::size_t>(n));
  for (std::int64_t j = 0; j < n; ++j) {
    f.s[static_cast<std::size_t>(j)] = static_cast<float>(s[static_cast<std::size_t>(j)]);
    for (std::int64_t i = 0; i < a.rows(); ++i) f.u(i, j) = static_cast<float>(u_cols.col(j)[i]);
    for (std::int64_t i = 0; i < a.cols(); ++i) f.v(i, j) = static_cast<float>(v_cols.col(j)[i]);
  }
  return f;
}

std::int64_t energy_rank(std::span<const float> singular_values, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw Error(ErrorKind::InvalidArgument, "energy fraction must be in (0, 1]");
  if (singular_values.empty()) throw Error(ErrorKind::InvalidArgument, "no singular values");
  double total = 0.0;
  for (float s : singular_values) total += static_cast<double>(s) * s;
  if (total == 0.0) return 1;
  const double target = fraction * total;
  double cumulative = 0.0;
  for (std::size_t i = 0; i < singular_values.size(); ++i) {
    cumulative += static_cast<double>(singular_values[i]) * singular_values[i];
    if (cumulative >= target) return static_cast<std::int64_t>(i + 1);
  }
  return static_cast<std::int64_t>(singular_values.size());
}

SvdFactors truncated_svd(const Matrix& a, const RankPolicy& policy) {
  const std::int64_t min_dim = std::min(a.rows(), a.cols());
  if (const auto* fixed = std::get_if<FixedRank>(&policy)) {
    if (fixed->k < 1 || fixed->k > min_dim)
      throw Error(ErrorKind::InvalidArgument, "fixed rank " + std::to_string(fixed->k) +
                                                  " outside [1, " + std::to_string(min_dim) + "]");
  }
  if (const auto* energy = std::get_if<EnergyRank>(&policy)) {
    if (!(energy->fraction > 0.0 && energy->fraction <= 1.0))
      throw Error(ErrorKind::InvalidArgument, "energy fraction must be in (0, 1]");
  }

  SvdFactors full = full_svd(a);
  std::int64_t k = min_dim;
  if (const auto* fixed = std::get_if<FixedRank>(&policy)) k = fixed->k;
  else if (const auto* energy = std::get_if<EnergyRank>(&policy)) k = energy_rank(full.s, energy->fraction);
  if (k == min_dim) return full;

  SvdFactors out;
  out.u = Matrix(a.rows(), k);
  out.v = Matrix(a.cols(), k);
  out.s.assign(full.s.begin(), full.s.begin() + k);
  for (std::int64_t i = 0; i < a.rows(); ++i)
    for (std::int64_t j = 0; j < k; ++j) out.u(i, j) = full.u(i, j);
  for (std::int64_t i = 0; i < a.cols(); ++i)
    for (std::int64_t j = 0; j < k; ++j) out.v(i, j) = full.v(i, j);
  return out;
}

Matrix reconstruct(const SvdFactors& f) {
  const std::int64_t k = f.rank();
  if (k < 1 || f.u.cols() != k || f.v.cols() != k)
    throw Error(ErrorKind::ShapeMismatch, "svd factor shapes disagree: u has " + std::to_string(f.u.cols()) +
                                              " columns, v has " + std::to_string(f.v.cols()) + ", s has " +
                                              std::to_string(k) + " values");
  Matrix out(f.u.rows(), f.v.rows());
  std::vector<double> scaled(static_cast<std::size_t>(k));
  for (std::int64_t i = 0; i < f.u.rows(); ++i) {
    for (std::int64_t r = 0; r < k; ++r)
      scaled[static_cast<std::size_t>(r)] = static_cast<double>(f.u(i, r)) * f.s[static_cast<std::size_t>(r)];
    for (std::int64_t j = 0; j < f.v.rows(); ++j) {
      double acc = 0.0;
      for (std::int64_t r = 0; r < k; ++r) acc += scaled[static_cast<std::size_t>(r)] * f.v(j, r);
      out(i, j) = static_cast<float>(acc);
    }
  }
  return out;
}

const char* to_string(ReshapeMode mode) {
  return mode == ReshapeMode::Table1 ? "table1" : "near-square";
}

ReshapeMode reshape_mode_from_string(std::string_view s) {
  if (s == "table1") return ReshapeMode::Table1;
  if (s == "near-square") return ReshapeMode::NearSquare;
  throw Error(ErrorKind::InvalidArgument, "unknown reshape mode \"" + std::string(s) + "\"");
}

std::pair<std::int64_t, std::int64_t> reshape_for_svd(std::int64_t numel, const Shape& conv_shape,
                                                      ReshapeMode mode) {
  if (conv_shape.size() != 4)
    throw Error(ErrorKind::ShapeMismatch, "conv shape must be [O,I,Kh,Kw], got " + shape_to_string(conv_shape));
  if (numel < 1 || shape_numel(conv_shape) != numel)
    throw Error(ErrorKind::ShapeMismatch, "element count " + std::to_string(numel) + " does not match " +
                                              shape_to_string(conv_shape));
  if (mode == ReshapeMode::Table1) return {numel / conv_shape[0], conv_shape[0]};
  auto rows = static_cast<std::int64_t>(std::sqrt(static_cast<double>(numel)));
  while (rows * rows > numel) --rows;
  while ((rows + 1) * (rows + 1) <= numel) ++rows;
  while (numel % rows != 0) --rows;
  return {rows, numel / rows};
}

Matrix conv_to_matrix(const Tensor& w, ReshapeMode mode) {
  const auto [rows, cols] = reshape_for_svd(w.numel(), w.shape(), mode);
  const auto data = w.data();
  if (mode == ReshapeMode::NearSquare) return Matrix(rows, cols, {data.begin(), data.end()});
  Matrix m(rows, cols);
  for (std::int64_t o = 0; o < cols; ++o)
    for (std::int64_t r = 0; r < rows; ++r) m(r, o) = data[static_cast<std::size_t>(o * rows + r)];
  return m;
}

Tensor matrix_to_conv(const Matrix& m, const Shape& conv_shape, ReshapeMode mode) {
  const auto numel = shape_numel(conv_shape);
  const auto [rows, cols] = reshape_for_svd(numel, conv_shape, mode);
  if (m.rows() != rows || m.cols() != cols)
    throw Error(ErrorKind::ShapeMismatch, "matrix " + std::to_string(m.rows()) + "x" + std::to_string(m.cols()) +
                                              " does not reshape to " + shape_to_string(conv_shape));
  if (mode == ReshapeMode::NearSquare) return Tensor(conv_shape, {m.data().begin(), m.data().end()});
  Tensor w(conv_shape);
  for (std::int64_t o = 0; o < cols; ++o)
    for (std::int64_t r = 0; r < rows; ++r) w[static_cast<std::size_t>(o * rows + r)] = m(r, o);
  return w;
}

}  // namespace lrc
