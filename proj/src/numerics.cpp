#include "hubbind/numerics.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hubbind/errors.hpp"

namespace hubbind {

namespace {

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() + " vs " +
                     b.shape_str());
  }
}

constexpr double kSqrt2OverPi = 0.7978845608028654;
constexpr double kGeluCubic = 0.044715;

}  // namespace

Matrix::Matrix(std::size_t rows, std::size_t cols, double fill)
    : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

Matrix::Matrix(std::size_t rows, std::size_t cols, std::vector<double> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (data_.size() != rows * cols) {
    throw ShapeError("Matrix: data length " + std::to_string(data_.size()) + " != " +
                     std::to_string(rows) + "x" + std::to_string(cols));
  }
}

Matrix::Matrix(std::initializer_list<std::initializer_list<double>> rows) {
  rows_ = rows.size();
  cols_ = rows_ == 0 ? 0 : rows.begin()->size();
  data_.reserve(rows_ * cols_);
  for (const auto& r : rows) {
    if (r.size() != cols_) throw ShapeError("Matrix: ragged initializer list");
    data_.insert(data_.end(), r.begin(), r.end());
  }
}

Matrix Matrix::identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

bool Matrix::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

std::string Matrix::shape_str() const {
  std::ostringstream os;
  os << '(' << rows_ << 'x' << cols_ << ')';
  return os.str();
}

Matrix matmul(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: inner dimensions differ " + a.shape_str() + " * " + b.shape_str());
  }
  Matrix out(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    auto orow = out.row(i);
    for (std::size_t k = 0; k < a.cols(); ++k) {
      const double aik = a(i, k);
      if (aik == 0.0) continue;
      auto brow = b.row(k);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aik * brow[j];
    }
  }
  return out;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
  if (a.rows() != b.rows()) {
    throw ShapeError("matmul_tn: row counts differ " + a.shape_str() + " vs " + b.shape_str());
  }
  Matrix out(a.cols(), b.cols());
  for (std::size_t k = 0; k < a.rows(); ++k) {
    auto arow = a.row(k);
    auto brow = b.row(k);
    for (std::size_t i = 0; i < a.cols(); ++i) {
      const double aki = arow[i];
      if (aki == 0.0) continue;
      auto orow = out.row(i);
      for (std::size_t j = 0; j < b.cols(); ++j) orow[j] += aki * brow[j];
    }
  }
  return out;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) {
    throw ShapeError("matmul_nt: column counts differ " + a.shape_str() + " vs " + b.shape_str());
  }
  Matrix out(a.rows(), b.rows());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.rows(); ++j) out(i, j) = dot(a.row(i), b.row(j));
  }
  return out;
}

Matrix transpose(const Matrix& a) {
  Matrix out(a.cols(), a.rows());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < a.cols(); ++j) out(j, i) = a(i, j);
  return out;
}

Matrix add(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "add");
  Matrix out = a;
  auto o = out.flat();
  auto bf = b.flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] += bf[i];
  return out;
}

Matrix sub(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a;
  auto o = out.flat();
  auto bf = b.flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] -= bf[i];
  return out;
}

Matrix scale(const Matrix& a, double s) {
  Matrix out = a;
  for (double& v : out.flat()) v *= s;
  return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a;
  auto o = out.flat();
  auto bf = b.flat();
  for (std::size_t i = 0; i < o.size(); ++i) o[i] *= bf[i];
  return out;
}

Matrix add_row_broadcast(const Matrix& x, const Matrix& bias) {
  if (bias.rows() != 1 || bias.cols() != x.cols()) {
    throw ShapeError("add_row_broadcast: bias " + bias.shape_str() + " does not fit " +
                     x.shape_str());
  }
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) r[j] += bias(0, j);
  }
  return out;
}

Matrix sum_rows(const Matrix& x) {
  Matrix out(1, x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    for (std::size_t j = 0; j < r.size(); ++j) out(0, j) += r[j];
  }
  return out;
}

double dot(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ShapeError("dot: length mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

double frobenius_norm(const Matrix& a) { return norm2(a.flat()); }

double max_abs_diff(const Matrix& a, const Matrix& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(a.flat()[i] - b.flat()[i]));
  return m;
}

Matrix gelu_forward(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.flat()) {
    const double u = kSqrt2OverPi * (v + kGeluCubic * v * v * v);
    v = 0.5 * v * (1.0 + std::tanh(u));
  }
  return out;
}

Matrix gelu_backward(const Matrix& x, const Matrix& up) {
  require_same_shape(x, up, "gelu_backward");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double v = x.flat()[i];
    const double u = kSqrt2OverPi * (v + kGeluCubic * v * v * v);
    const double t = std::tanh(u);
    const double du = kSqrt2OverPi * (1.0 + 3.0 * kGeluCubic * v * v);
    const double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
    out.flat()[i] = up.flat()[i] * d;
  }
  return out;
}

Matrix tanh_forward(const Matrix& x) {
  Matrix out = x;
  for (double& v : out.flat()) v = std::tanh(v);
  return out;
}

Matrix tanh_backward(const Matrix& x, const Matrix& up) {
  require_same_shape(x, up, "tanh_backward");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double t = std::tanh(x.flat()[i]);
    out.flat()[i] = up.flat()[i] * (1.0 - t * t);
  }
  return out;
}

Matrix l2_normalize_rows(const Matrix& x, double eps) {
  if (!(eps > 0.0)) throw ConfigError("l2_normalize_rows: eps must be > 0");
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    const double n = std::max(norm2(r), eps);
    for (double& v : r) v /= n;
  }
  return out;
}

Matrix l2_normalize_rows_backward(const Matrix& x, const Matrix& up, double eps) {
  require_same_shape(x, up, "l2_normalize_rows_backward");
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto xr = x.row(i);
    auto ur = up.row(i);
    auto orow = out.row(i);
    const double n = norm2(xr);
    if (n < eps) {
      // Clamped branch: y = x / eps is linear in x.
      for (std::size_t j = 0; j < xr.size(); ++j) orow[j] = ur[j] / eps;
      continue;
    }
    // dy/dx = (I - y y^T) / n
    const double proj = dot(xr, ur) / (n * n);
    for (std::size_t j = 0; j < xr.size(); ++j) orow[j] = (ur[j] - xr[j] * proj) / n;
  }
  return out;
}

Matrix softmax_rows(const Matrix& x) {
  Matrix out = x;
  for (std::size_t i = 0; i < out.rows(); ++i) {
    auto r = out.row(i);
    if (r.empty()) continue;
    const double m = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double& v : r) {
      v = std::exp(v - m);
      s += v;
    }
    for (double& v : r) v /= s;
  }
  return out;
}

Matrix logsumexp_rows(const Matrix& x) {
  Matrix out(x.rows(), 1);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    auto r = x.row(i);
    if (r.empty()) {
      out(i, 0) = -INFINITY;
      continue;
    }
    const double m = *std::max_element(r.begin(), r.end());
    double s = 0.0;
    for (double v : r) s += std::exp(v - m);
    out(i, 0) = m + std::log(s);
  }
  return out;
}

GradCheckReport finite_difference_check(const ScalarFn& loss_fn, const Matrix& params,
                                        const Matrix& analytic_grad, double eps) {
  if (!(eps > 0.0 && eps <= 1e-2)) {
    throw ConfigError("finite_difference_check: eps must lie in (0, 1e-2]");
  }
  if (params.rows() != analytic_grad.rows() || params.cols() != analytic_grad.cols()) {
    throw ShapeError("finite_difference_check: gradient shape " + analytic_grad.shape_str() +
                     " != params " + params.shape_str());
  }
  GradCheckReport report;
  report.eps = eps;
  Matrix probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = params.flat()[i];
    probe.flat()[i] = orig + eps;
    const double plus = loss_fn(probe);
    probe.flat()[i] = orig - eps;
    const double minus = loss_fn(probe);
    probe.flat()[i] = orig;
    if (!std::isfinite(plus) || !std::isfinite(minus)) {
      throw NumericError("finite_difference_check: non-finite loss at parameter " +
                         std::to_string(i));
    }
    const double fd = (plus - minus) / (2.0 * eps);
    const double an = analytic_grad.flat()[i];
    const double denom = std::max({std::abs(fd), std::abs(an), 1e-8});
    const double rel = std::abs(fd - an) / denom;
    if (rel > report.max_rel_error) {
      report.max_rel_error = rel;
      report.worst_param_index = i;
    }
  }
  return report;
}

}  // namespace hubbind
