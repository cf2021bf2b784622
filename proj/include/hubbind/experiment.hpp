#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "hubbind/evaluation.hpp"
#include "hubbind/json_io.hpp"
#include "hubbind/trainer.hpp"
#include "hubbind/world.hpp"

namespace hubbind {

struct EncoderSpec {
  std::vector<std::size_t> hidden_widths{64};
  HeadKind head = HeadKind::kLinear;
  Activation activation = Activation::kGelu;
};

/// Everything needed to reproduce one run: world, encoders, training, evaluation.
struct ExperimentConfig {
  std::uint64_t seed = 0;
  WorldConfig world;
  std::size_t embed_dim = 32;
  std::map<std::string, EncoderSpec, std::less<>> encoders;
  TrainConfig train;
  EvalPlan eval;

  /// Input dims come from the world's observers.
  ArchMap archs(const WorldSpec& world) const;
};

/// Strict parse: unknown keys and missing required fields raise ConfigError
/// naming the offending field.
ExperimentConfig parse_experiment(const ojson& j);
ExperimentConfig load_experiment(const std::filesystem::path& path);

/// Canonical JSON form (every field explicit, fixed order).
ojson experiment_to_json(const ExperimentConfig& config);

/// 16 hex digits of FNV-1a over the canonical JSON.
std::string config_hash(const ExperimentConfig& config);

/// Copy of config with every seed replaced.
ExperimentConfig with_seed(ExperimentConfig config, std::uint64_t seed);

struct ExperimentResult {
  WorldSpec world;
  TrainState state;
  MetricsReport report;  // training summary + evaluation metrics + meta
};

/// make_world -> train_run -> run_eval_plan, all from config.seed.
ExperimentResult run_experiment(const ExperimentConfig& config);

/// Evaluation only, on encoders from a previous run.
MetricsReport evaluate_experiment(const ExperimentConfig& config, const WorldSpec& world,
                                  const EncoderMap& encoders);

/// The bundled desk-scale configuration (same content as configs/desk.json).
ExperimentConfig desk_config();

}  // namespace hubbind
