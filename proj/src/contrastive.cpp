#include "hubbind/contrastive.hpp"

#include <algorithm>
#include <cmath>

#include "hubbind/errors.hpp"

namespace hubbind {

namespace {

void require_pair(const Matrix& q, const Matrix& k, const char* op) {
  if (q.rows() != k.rows() || q.cols() != k.cols()) {
    throw ShapeError(std::string(op) + ": q " + q.shape_str() + " and k " + k.shape_str() +
                     " differ in shape");
  }
  if (q.rows() == 0) throw ConfigError(std::string(op) + ": empty batch");
}

}  // namespace

TemperatureParam::TemperatureParam(Mode mode, double tau, double clamp_min, double clamp_max)
    : mode_(mode), clamp_min_(clamp_min), clamp_max_(clamp_max) {
  if (!(tau > 0.0) || !std::isfinite(tau)) throw ConfigError("temperature must be > 0");
  if (!(clamp_min > 0.0 && clamp_min <= clamp_max))
    throw ConfigError("temperature clamp must satisfy 0 < min <= max");
  log_tau_ = std::clamp(std::log(tau), std::log(clamp_min_), std::log(clamp_max_));
}

TemperatureParam TemperatureParam::fixed(double tau) {
  // Fixed temperatures are taken as given; the clamp only binds learnable ones.
  return TemperatureParam(Mode::kFixed, tau, std::min(tau, kDefaultClampMin),
                          std::max(tau, kDefaultClampMax));
}

TemperatureParam TemperatureParam::learnable(double init_tau, double clamp_min, double clamp_max) {
  return TemperatureParam(Mode::kLearnable, init_tau, clamp_min, clamp_max);
}

TemperatureParam TemperatureParam::restore(Mode mode, double log_tau, double clamp_min,
                                           double clamp_max) {
  TemperatureParam t(mode, std::exp(log_tau), clamp_min, clamp_max);
  t.log_tau_ = std::clamp(log_tau, std::log(clamp_min), std::log(clamp_max));
  return t;
}

double TemperatureParam::value() const noexcept { return std::exp(log_tau_); }

void TemperatureParam::set_log_tau(double log_tau) {
  if (mode_ == Mode::kFixed) return;
  if (!std::isfinite(log_tau)) throw NumericError("temperature update is not finite");
  log_tau_ = std::clamp(log_tau, std::log(clamp_min_), std::log(clamp_max_));
}

Matrix similarity_matrix(const Matrix& q, const Matrix& k) {
  if (q.rows() != k.rows() || q.cols() != k.cols()) {
    throw ShapeError("similarity_matrix: q " + q.shape_str() + " and k " + k.shape_str() +
                     " differ in shape");
  }
  return matmul_nt(q, k);
}

LossOutput info_nce(const Matrix& q, const Matrix& k, const TemperatureParam& temp) {
  require_pair(q, k, "info_nce");
  const std::size_t n = q.rows();
  const double tau = temp.value();
  const double inv_n = 1.0 / static_cast<double>(n);

  const Matrix sim = similarity_matrix(q, k);
  const Matrix logits = scale(sim, 1.0 / tau);
  const Matrix lse = logsumexp_rows(logits);

  LossOutput out;
  for (std::size_t i = 0; i < n; ++i) out.loss += lse(i, 0) - logits(i, i);
  out.loss *= inv_n;

  // d loss / d logits = (softmax - I) / n
  Matrix dlogits = softmax_rows(logits);
  for (std::size_t i = 0; i < n; ++i) dlogits(i, i) -= 1.0;
  for (double& v : dlogits.flat()) v *= inv_n;

  const Matrix dsim = scale(dlogits, 1.0 / tau);
  out.grad_q = matmul(dsim, k);
  out.grad_k = matmul_tn(dsim, q);
  if (temp.is_learnable()) {
    double g = 0.0;
    for (std::size_t i = 0; i < dlogits.size(); ++i) g -= dlogits.flat()[i] * logits.flat()[i];
    out.grad_log_tau = g;
  }
  return out;
}

LossOutput symmetric_info_nce(const Matrix& q, const Matrix& k, const TemperatureParam& temp) {
  LossOutput fwd = info_nce(q, k, temp);
  const LossOutput bwd = info_nce(k, q, temp);
  fwd.loss += bwd.loss;
  fwd.grad_q = add(fwd.grad_q, bwd.grad_k);
  fwd.grad_k = add(fwd.grad_k, bwd.grad_q);
  fwd.grad_log_tau += bwd.grad_log_tau;
  return fwd;
}

LossOutput l2_regression_loss(const Matrix& q, const Matrix& k) {
  require_pair(q, k, "l2_regression_loss");
  const double inv_n = 1.0 / static_cast<double>(q.rows());
  const Matrix diff = sub(q, k);
  LossOutput out;
  out.loss = dot(diff.flat(), diff.flat()) * inv_n;
  out.grad_q = scale(diff, 2.0 * inv_n);
  out.grad_k = scale(diff, -2.0 * inv_n);
  return out;
}

LossOutput accumulate(LossOutput a, const LossOutput& b, double weight) {
  a.loss += weight * b.loss;
  a.grad_q = a.grad_q.empty() ? scale(b.grad_q, weight) : add(a.grad_q, scale(b.grad_q, weight));
  a.grad_k = a.grad_k.empty() ? scale(b.grad_k, weight) : add(a.grad_k, scale(b.grad_k, weight));
  a.grad_log_tau += weight * b.grad_log_tau;
  return a;
}

}  // namespace hubbind
