#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "hubbind/numerics.hpp"
#include "hubbind/random.hpp"

namespace hubbind {

enum class Nonlinearity { kTanh, kGelu, kIdentity };

std::string to_string(Nonlinearity n);
Nonlinearity nonlinearity_from_string(std::string_view s);

struct ModalityId {
  int id = 0;
  std::string name;

  friend bool operator==(const ModalityId&, const ModalityId&) = default;
};

/// How one modality "sees" a latent:
///   obs = act(W z + b) + obs_noise_scale * u B^T
/// u is a standard-normal draw private to the modality and sample; the basis B
/// (obs_dim x noise_dim, unit columns) confines that nuisance to noise_dim
/// directions. An identity basis gives plain isotropic noise.
struct ModalityObserver {
  ModalityId modality;
  Matrix weight;       // obs_dim x latent_dim
  Matrix bias;         // 1 x obs_dim
  Matrix noise_basis;  // obs_dim x noise_dim
  Nonlinearity nonlinearity = Nonlinearity::kTanh;
  double obs_noise_scale = 0.0;

  std::size_t obs_dim() const noexcept { return weight.rows(); }
  std::size_t noise_dim() const noexcept { return noise_basis.cols(); }

  /// Noiseless observation of each latent row.
  Matrix observe_clean(const Matrix& latents) const;
  /// noise holds the standard-normal draws u (n x noise_dim).
  Matrix observe(const Matrix& latents, const Matrix& noise) const;

  friend bool operator==(const ModalityObserver&, const ModalityObserver&) = default;
};

struct ModalityConfig {
  std::string name;
  std::size_t obs_dim = 16;
  Nonlinearity nonlinearity = Nonlinearity::kTanh;
  double obs_noise_scale = 0.05;
  /// Rank of the private nuisance; 0 means isotropic noise over all obs_dim directions.
  std::size_t noise_dim = 0;
  bool hub = false;
};

struct WorldConfig {
  std::size_t latent_dim = 16;
  std::size_t num_classes = 10;
  double within_class_scale = 0.5;
  /// Standard deviation of the isotropic class-mean prior, before separability rescaling.
  double class_mean_scale = 1.0;
  /// Observer weights are N(0, observer_gain^2 / latent_dim).
  double observer_gain = 1.0;
  std::vector<ModalityConfig> modalities;

  /// hub(32) plus spokes T(24), M1(20), M2(16).
  static WorldConfig desk_default();
};

/// Immutable synthetic multimodal world: class means in latent space plus the
/// per-modality observers.
struct WorldSpec {
  std::size_t latent_dim = 0;
  std::size_t num_classes = 0;
  Matrix class_means;  // C x latent_dim
  double within_class_scale = 0.0;
  std::vector<ModalityObserver> modalities;
  int hub_id = 0;
  std::uint64_t seed = 0;

  const ModalityObserver& hub() const { return modalities.at(static_cast<std::size_t>(hub_id)); }
  /// Throws ConfigError for unknown names.
  const ModalityObserver& find(std::string_view name) const;
  const ModalityObserver& get(const ModalityId& id) const;
  bool has(std::string_view name) const noexcept;

  /// Stream namespaces. Training and evaluation draws never share a stream.
  RngStream train_stream(std::string_view name) const;
  RngStream eval_stream(std::string_view name) const;

  friend bool operator==(const WorldSpec&, const WorldSpec&) = default;
};

WorldSpec make_world(const WorldConfig& config, std::uint64_t seed);

/// Versioned JSON document with fixed field order.
std::string world_to_json(const WorldSpec& world);
WorldSpec world_from_json(std::string_view text);

/// Label-free view of a PairBatch; the only thing the trainer consumes.
struct PairView {
  const Matrix& hub_obs;
  const Matrix& spoke_obs;
};

struct PairBatch {
  Matrix hub_obs;
  Matrix spoke_obs;
  ModalityId spoke;
  std::vector<int> class_labels;  // evaluation only
  Matrix hub_latents;
  Matrix spoke_latents;  // equal to hub_latents when alignment == 1
  Matrix hub_noise;      // standard-normal nuisance draws (n x noise_dim)
  Matrix spoke_noise;

  std::size_t size() const noexcept { return hub_obs.rows(); }
  PairView training_view() const noexcept { return {hub_obs, spoke_obs}; }
};

/// Draws n aligned (hub, spoke) observation pairs. Classes are assigned
/// round-robin starting at class_offset.
///
/// alignment in [0, 1] sets the correlation between the within-class offsets
/// of the hub latent and the spoke latent; 1 means both observe the same
/// latent. The stream must live in the "train/" namespace.
PairBatch sample_pair_batch(const WorldSpec& world, const ModalityId& spoke, std::size_t n,
                            RngStream& stream, double alignment = 1.0,
                            std::size_t class_offset = 0);

struct PromptSet {
  Matrix obs;               // (C * P) x obs_dim
  std::vector<int> classes;  // class per row: P rows of class 0, then class 1, ...
};

/// P "prompt" observations per class, drawn near the class mean with latent
/// noise within_class_scale / 4 unless latent_noise overrides it.
PromptSet class_prototypes(const WorldSpec& world, const ModalityId& modality, std::size_t P,
                           RngStream& stream, std::optional<double> latent_noise = std::nullopt);

struct LabeledEvalSet {
  ModalityId modality;
  Matrix obs;
  std::vector<int> labels;
  Matrix latents;
};

/// Balanced labeled set, labels round-robin. Latents come from
/// stream/"latent" and observation noise from stream/"noise/<modality>", so
/// two modalities sampled from equally named streams observe the same latents
/// row for row. The stream must live in the "eval/" namespace.
LabeledEvalSet make_eval_set(const WorldSpec& world, const ModalityId& modality,
                             std::size_t n_per_class, const RngStream& stream);

}  // namespace hubbind
