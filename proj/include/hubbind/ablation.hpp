#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <string_view>
#include <vector>

#include "hubbind/experiment.hpp"
#include "hubbind/json_io.hpp"
#include "hubbind/report.hpp"

namespace hubbind {

enum class AblationAxis {
  kTemperature,
  kProjectionHead,
  kEpochs,
  kBatchSize,
  kHubCapacity,
  kNoiseStrength,
  kAlignment,
  kLossMix,
};

std::string to_string(AblationAxis axis);
AblationAxis axis_from_string(std::string_view s);
const std::vector<AblationAxis>& all_axes();

/// Grid values are JSON scalars: numbers, or strings such as "learnable" and "mlp".
std::vector<ojson> default_grid(AblationAxis axis);

/// Copy of base with only the axis changed. Throws ConfigError for values the
/// axis cannot take.
///   temperature      "learnable" (init 0.07) or a fixed tau, applied to every pair
///   projection_head  "linear" | "mlp", every encoder
///   epochs           train.epochs
///   batch_size       every pair
///   hub_capacity     width of the hub encoder's single hidden layer
///   noise_strength   hub obs_noise_scale
///   alignment        every pair's hub/spoke latent correlation
///   loss_mix         m in [0, 1]: infonce_weight = 1 - m, l2_weight = m
ExperimentConfig apply_axis(const ExperimentConfig& base, AblationAxis axis, const ojson& value);

/// "learnable", "0.05", "mlp", "256".
std::string grid_label(const ojson& value);

struct AblationSuite {
  AblationAxis axis = AblationAxis::kTemperature;
  std::vector<ojson> grid;
  std::vector<std::uint64_t> seeds{0};

  void validate() const;
};

struct AblationSpec {
  ExperimentConfig base;
  std::vector<AblationSuite> suites;
};

/// Suite file:
///   { "base": "desk.json" | {...inline config...},
///     "overrides": {...JSON merge patch applied to base...},
///     "seeds": [0, 1],
///     "axes": ["epochs", {"axis": "temperature", "grid": [...], "seeds": [...]}] | "all" }
/// Relative base paths resolve against base_dir.
AblationSpec parse_ablation_spec(const ojson& j, const std::filesystem::path& base_dir);
AblationSpec load_ablation_spec(const std::filesystem::path& path);

struct AblationCell {
  std::string value;
  std::uint64_t seed = 0;
  bool ok = false;
  std::string error;  // empty when ok
  MetricsReport report;
};

struct AblationResult {
  AblationAxis axis = AblationAxis::kTemperature;
  std::vector<std::string> values;  // grid labels, in grid order
  std::vector<AblationCell> cells;  // value-major, then seed

  /// axis,axis_value,seed,status,metric,value rows (one per metric of each ok cell,
  /// one "error" row per failed cell).
  std::string long_csv() const;
  /// axis,value,metric,mean,std,n_ok,n_failed over seeds.
  std::string summary_csv() const;
  ojson summary_json() const;
};

using CellCallback = std::function<void(const AblationCell&)>;

/// Runs every (grid value x seed) cell. A failing cell is recorded and the
/// suite continues. jobs > 1 runs cells on that many threads; the result does
/// not depend on jobs.
AblationResult run_ablation(const ExperimentConfig& base, const AblationSuite& suite,
                            std::size_t jobs = 1, const CellCallback& on_cell = {});

}  // namespace hubbind
