#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hubbind/contrastive.hpp"
#include "hubbind/encoder.hpp"
#include "hubbind/json_io.hpp"
#include "hubbind/optim.hpp"
#include "hubbind/report.hpp"
#include "hubbind/world.hpp"

namespace hubbind {

using ArchMap = std::map<std::string, EncoderArch, std::less<>>;
using EncoderMap = std::map<std::string, EncoderParams, std::less<>>;

/// One (hub, spoke) training pair.
struct PairConfig {
  std::string spoke;
  std::size_t batch_size = 64;
  TemperatureParam temperature = TemperatureParam::fixed(0.2);
  /// >1 draws batches from a fixed pool of samples that is cycled this many
  /// times per epoch; 1 draws fresh samples every step.
  double replication_factor = 1.0;
  double infonce_weight = 1.0;
  double l2_weight = 0.0;
  /// Correlation between hub and spoke within-class latent offsets (1 = same latent).
  double alignment = 1.0;
};

struct TrainConfig {
  std::vector<PairConfig> pairs;
  std::size_t epochs = 30;
  std::size_t steps_per_epoch = 60;
  std::size_t warmup_epochs = 1;
  double learning_rate = 2e-3;
  double weight_decay = 0.05;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double grad_clip_norm = 1.0;
  bool hub_frozen = false;
  /// One temperature (the first pair's) shared by every pair.
  bool shared_temperature = false;
  std::uint64_t seed = 0;

  std::size_t total_steps() const noexcept { return epochs * steps_per_epoch; }
  void validate() const;
};

struct LossRecord {
  std::size_t step = 0;
  std::string spoke;
  double loss = 0.0;
  double tau = 0.0;

  friend bool operator==(const LossRecord&, const LossRecord&) = default;
};

struct TrainState {
  EncoderMap encoders;
  std::map<std::string, Moments, std::less<>> moments;
  std::vector<TemperatureParam> temperatures;  // one per pair, or one if shared
  std::vector<Moments> temperature_moments;
  std::size_t step = 0;
  std::vector<LossRecord> history;

  const EncoderParams& encoder(std::string_view name) const;

  friend bool operator==(const TrainState&, const TrainState&) = default;
};

/// Fresh state for config: every modality named by the hub or a pair gets an
/// encoder initialized from (config.seed, modality name). Entries of
/// preset replace the corresponding initial encoders (e.g. a pretrained hub).
TrainState init_state(const WorldSpec& world, const ArchMap& archs, const TrainConfig& config,
                      const EncoderMap& preset = {});

/// Advances state by up to num_steps optimizer steps, stopping at
/// config.total_steps(). Batches depend only on (seed, pair, step), so
/// splitting a run into several calls is step-identical to one call.
/// Throws NumericError naming the step if the loss becomes non-finite.
void train_steps(TrainState& state, const WorldSpec& world, const TrainConfig& config,
                 std::size_t num_steps);

struct TrainResult {
  TrainState state;
  MetricsReport report;
};

TrainResult train_run(const WorldSpec& world, const ArchMap& archs, const TrainConfig& config,
                      const EncoderMap& preset = {});

/// Loss summaries: first/last step loss and first/last epoch mean per pair.
MetricsReport summarize_training(const TrainState& state, const TrainConfig& config);

/// The label-free batch a pair sees at its k-th step (exposed for tests).
PairBatch pair_batch_for_step(const WorldSpec& world, const TrainConfig& config,
                              std::size_t pair_index, std::size_t pair_step);

/// CSV "step,pair,loss,tau".
std::string history_csv(const TrainState& state);

ojson arch_to_json(const EncoderArch& arch);
EncoderArch arch_from_json(const ojson& j);

/// Checkpoints are JSON; doubles are written in shortest round-trip form so a
/// save/load cycle is bit-exact. context is stored verbatim for callers.
void save_checkpoint(const TrainState& state, const std::filesystem::path& path,
                     const ojson& context = ojson::object());
TrainState load_checkpoint(const std::filesystem::path& path, ojson* context = nullptr);
/// Additionally rejects (ConfigError) encoders whose arch differs from expected.
TrainState load_checkpoint(const std::filesystem::path& path, const ArchMap& expected,
                           ojson* context = nullptr);

}  // namespace hubbind
