#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <vector>

namespace dssl {

/// Dense row-major matrix of doubles. Vectors are 1xN or Nx1 tensors and
/// scalars are 1x1.
class Tensor {
 public:
  Tensor() = default;
  Tensor(std::size_t rows, std::size_t cols, double fill = 0.0);
  Tensor(std::size_t rows, std::size_t cols, std::vector<double> data);

  static Tensor from_rows(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor scalar(double v) { return Tensor(1, 1, v); }
  static Tensor identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }
  bool same_shape(const Tensor& o) const noexcept { return rows_ == o.rows_ && cols_ == o.cols_; }

  double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }
  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r) { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const { return {data_.data() + r * cols_, cols_}; }

  /// Value of a 1x1 tensor.
  double item() const;
  bool all_finite() const noexcept;
  void fill(double v);

  bool operator==(const Tensor& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// Plain kernels. Both the graph and the graph-free paths call these so the two
// produce bit-identical results.

Tensor matmul(const Tensor& a, const Tensor& b);     // a * b
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a * b^T
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // a^T * b
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// x + b broadcast over rows, b is 1 x cols.
Tensor add_row_bias(const Tensor& x, const Tensor& b);
Tensor relu(const Tensor& x);
Tensor concat_cols(const Tensor& a, const Tensor& b);
Tensor slice_cols(const Tensor& a, std::size_t begin, std::size_t end);
/// Rows picked by index, in the given order.
Tensor gather_rows(const Tensor& a, std::span<const std::size_t> idx);

inline constexpr double kNormEps = 1e-12;

/// Each row divided by (its Euclidean norm + kNormEps).
Tensor l2_normalize_rows(const Tensor& x);
/// Each column divided by (its Euclidean norm + kNormEps).
Tensor l2_normalize_cols(const Tensor& x);

double sum(const Tensor& x);
double frobenius_norm(const Tensor& x);
Tensor column_means(const Tensor& x);

}  // namespace dssl
