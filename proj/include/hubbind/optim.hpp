#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace hubbind {

struct AdamWConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

/// First/second moment buffers plus the number of updates applied so far.
struct Moments {
  std::vector<double> first;
  std::vector<double> second;
  std::size_t step = 0;

  explicit Moments(std::size_t n = 0) : first(n, 0.0), second(n, 0.0) {}
  friend bool operator==(const Moments&, const Moments&) = default;
};

/// One AdamW update with decoupled weight decay and bias correction:
///   p <- p (1 - lr wd) - lr mhat / (sqrt(vhat) + eps)
/// Increments moments.step. Throws NumericError, leaving everything untouched,
/// if any gradient is non-finite.
void adamw_step(std::span<double> params, std::span<const double> grads, Moments& moments,
                const AdamWConfig& config);

double global_norm(const std::vector<std::span<const double>>& grads);

/// Rescales all blocks by max_norm / g when their joint l2 norm g exceeds
/// max_norm. Returns the pre-clip norm.
double clip_global_norm(const std::vector<std::span<double>>& grads, double max_norm);

}  // namespace hubbind
