#pragma once

#include "hubbind/numerics.hpp"

namespace hubbind {

/// Softmax temperature, fixed or learned in log space.
///
/// The stored log_tau always satisfies log(clamp_min) <= log_tau <= log(clamp_max),
/// so value() is exp(log_tau) with no further clamping.
class TemperatureParam {
 public:
  enum class Mode { kFixed, kLearnable };

  static constexpr double kDefaultClampMin = 0.01;
  static constexpr double kDefaultClampMax = 5.0;

  static TemperatureParam fixed(double tau);
  /// Learnable, initialized at tau (0.07 is the usual CLIP-style init).
  static TemperatureParam learnable(double init_tau = 0.07, double clamp_min = kDefaultClampMin,
                                    double clamp_max = kDefaultClampMax);

  /// Rebuilds a parameter from its stored log value (exact round-trip).
  static TemperatureParam restore(Mode mode, double log_tau, double clamp_min, double clamp_max);

  Mode mode() const noexcept { return mode_; }
  bool is_learnable() const noexcept { return mode_ == Mode::kLearnable; }
  double value() const noexcept;
  double log_tau() const noexcept { return log_tau_; }
  double clamp_min() const noexcept { return clamp_min_; }
  double clamp_max() const noexcept { return clamp_max_; }

  /// Sets log_tau, clamped into [log clamp_min, log clamp_max]. No-op when fixed.
  void set_log_tau(double log_tau);

  friend bool operator==(const TemperatureParam&, const TemperatureParam&) = default;

 private:
  TemperatureParam(Mode mode, double tau, double clamp_min, double clamp_max);

  Mode mode_ = Mode::kFixed;
  double log_tau_ = 0.0;
  double clamp_min_ = kDefaultClampMin;
  double clamp_max_ = kDefaultClampMax;
};

struct LossOutput {
  double loss = 0.0;
  Matrix grad_q;
  Matrix grad_k;
  double grad_log_tau = 0.0;  // always 0 for a fixed temperature
};

/// S(i, j) = q_i . k_j
Matrix similarity_matrix(const Matrix& q, const Matrix& k);

/// One-directional InfoNCE with in-batch negatives, averaged over rows:
///   L = mean_i [ -q_i.k_i / tau + log sum_j exp(q_i.k_j / tau) ]
/// Negatives are the other rows of k only.
LossOutput info_nce(const Matrix& q, const Matrix& k, const TemperatureParam& temp);

/// info_nce(q, k) + info_nce(k, q).
LossOutput symmetric_info_nce(const Matrix& q, const Matrix& k, const TemperatureParam& temp);

/// mean_i ||q_i - k_i||^2
LossOutput l2_regression_loss(const Matrix& q, const Matrix& k);

/// a + weight * b, summing every field.
LossOutput accumulate(LossOutput a, const LossOutput& b, double weight);

}  // namespace hubbind
