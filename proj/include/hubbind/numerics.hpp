#pragma once

#include <cstddef>
#include <functional>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace hubbind {

/// Dense row-major matrix of doubles.
///
/// Vectors are represented as 1 x n (row) matrices. All free functions in this
/// header are pure; none keep state between calls.
class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0);
  Matrix(std::size_t rows, std::size_t cols, std::vector<double> data);
  Matrix(std::initializer_list<std::initializer_list<double>> rows);

  static Matrix identity(std::size_t n);

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  double& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  double operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<double> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const double> row(std::size_t r) const noexcept {
    return {data_.data() + r * cols_, cols_};
  }

  std::span<double> flat() noexcept { return data_; }
  std::span<const double> flat() const noexcept { return data_; }
  const std::vector<double>& data() const noexcept { return data_; }

  bool all_finite() const noexcept;
  std::string shape_str() const;

  friend bool operator==(const Matrix&, const Matrix&) = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---- linear algebra -------------------------------------------------------

Matrix matmul(const Matrix& a, const Matrix& b);
/// a^T * b without materializing the transpose.
Matrix matmul_tn(const Matrix& a, const Matrix& b);
/// a * b^T without materializing the transpose.
Matrix matmul_nt(const Matrix& a, const Matrix& b);
Matrix transpose(const Matrix& a);

Matrix add(const Matrix& a, const Matrix& b);
Matrix sub(const Matrix& a, const Matrix& b);
Matrix scale(const Matrix& a, double s);
Matrix hadamard(const Matrix& a, const Matrix& b);
/// Adds a 1 x cols bias row to every row of x.
Matrix add_row_broadcast(const Matrix& x, const Matrix& bias);
/// Column sums as a 1 x cols row.
Matrix sum_rows(const Matrix& x);

double dot(std::span<const double> a, std::span<const double> b);
double norm2(std::span<const double> a);
double frobenius_norm(const Matrix& a);
double max_abs_diff(const Matrix& a, const Matrix& b);

// ---- activations ----------------------------------------------------------

/// GELU, tanh approximation:
///   0.5 x (1 + tanh(sqrt(2/pi) (x + 0.044715 x^3)))
Matrix gelu_forward(const Matrix& x);
/// Returns up * dGELU/dx evaluated at x.
Matrix gelu_backward(const Matrix& x, const Matrix& up);

Matrix tanh_forward(const Matrix& x);
/// Backward in terms of the forward *input* x.
Matrix tanh_backward(const Matrix& x, const Matrix& up);

// ---- normalization --------------------------------------------------------

inline constexpr double kNormEps = 1e-12;

/// Each row divided by max(||row||, eps).
Matrix l2_normalize_rows(const Matrix& x, double eps = kNormEps);
/// Vector-Jacobian product of l2_normalize_rows at x.
Matrix l2_normalize_rows_backward(const Matrix& x, const Matrix& up, double eps = kNormEps);

/// Row-wise softmax with per-row max subtraction.
Matrix softmax_rows(const Matrix& x);
/// Row-wise log(sum(exp(row))), stabilized. Returns rows x 1.
Matrix logsumexp_rows(const Matrix& x);

// ---- gradient checking ----------------------------------------------------

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::size_t worst_param_index = 0;
  double eps = 0.0;
};

using ScalarFn = std::function<double(const Matrix&)>;

/// Central-difference check of analytic_grad against loss_fn at params.
///
/// rel_err_i = |g_fd - g_an| / max(|g_fd|, |g_an|, 1e-8). Throws NumericError
/// if loss_fn returns a non-finite value at any probe point.
GradCheckReport finite_difference_check(const ScalarFn& loss_fn, const Matrix& params,
                                        const Matrix& analytic_grad, double eps = 1e-6);

}  // namespace hubbind
