#include "hubbind/optim.hpp"

#include <cmath>
#include <string>

#include "hubbind/errors.hpp"

namespace hubbind {

void adamw_step(std::span<double> params, std::span<const double> grads, Moments& moments,
                const AdamWConfig& config) {
  if (params.size() != grads.size() || moments.first.size() != params.size() ||
      moments.second.size() != params.size()) {
    throw ShapeError("adamw_step: params (" + std::to_string(params.size()) + "), grads (" +
                     std::to_string(grads.size()) + ") and moments (" +
                     std::to_string(moments.first.size()) + ") differ in length");
  }
  if (!(config.learning_rate > 0.0)) throw ConfigError("adamw_step: learning rate must be > 0");
  for (double g : grads)
    if (!std::isfinite(g)) throw NumericError("adamw_step: non-finite gradient");

  const auto t = static_cast<double>(moments.step + 1);
  const double bc1 = 1.0 - std::pow(config.beta1, t);
  const double bc2 = 1.0 - std::pow(config.beta2, t);
  const double decay = 1.0 - config.learning_rate * config.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    double& m = moments.first[i];
    double& v = moments.second[i];
    m = config.beta1 * m + (1.0 - config.beta1) * grads[i];
    v = config.beta2 * v + (1.0 - config.beta2) * grads[i] * grads[i];
    const double mhat = m / bc1;
    const double vhat = v / bc2;
    params[i] = params[i] * decay - config.learning_rate * mhat / (std::sqrt(vhat) + config.epsilon);
  }
  ++moments.step;
}

double global_norm(const std::vector<std::span<const double>>& grads) {
  double s = 0.0;
  for (auto block : grads)
    for (double g : block) s += g * g;
  return std::sqrt(s);
}

double clip_global_norm(const std::vector<std::span<double>>& grads, double max_norm) {
  if (!(max_norm > 0.0)) throw ConfigError("clip_global_norm: max_norm must be > 0");
  std::vector<std::span<const double>> view(grads.begin(), grads.end());
  const double norm = global_norm(view);
  if (norm > max_norm) {
    const double s = max_norm / norm;
    for (auto block : grads)
      for (double& g : block) g *= s;
  }
  return norm;
}

}  // namespace hubbind
