#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "hubbind/encoder.hpp"
#include "hubbind/report.hpp"
#include "hubbind/trainer.hpp"
#include "hubbind/world.hpp"

namespace hubbind {

// ---- zero-shot ------------------------------------------------------------

/// One unit-norm row per class: the renormalized mean of that class's prompt embeddings.
struct PrototypeBank {
  ModalityId modality;
  Matrix prototypes;  // C x d
};

PrototypeBank build_prototypes(const WorldSpec& world, const ModalityId& modality,
                               const EncoderParams& encoder, std::size_t prompts_per_class,
                               RngStream& stream);

/// Prototype bank from already-embedded prompts (rows grouped by classes[i]).
PrototypeBank prototypes_from_embeddings(const ModalityId& modality, const Matrix& embeddings,
                                         const std::vector<int>& classes, std::size_t num_classes);

/// Argmax of cosine similarity against each prototype; ties go to the lowest class.
std::vector<int> zero_shot_classify(const Matrix& queries, const PrototypeBank& bank);

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels);

using ModalityPair = std::pair<std::string, std::string>;

/// Unordered (hub, spoke) pairs the state was trained on.
std::vector<ModalityPair> trained_pairs(const WorldSpec& world, const TrainConfig& config);

/// True when data and prompt differ and were never trained directly against each other.
bool is_emergent(const std::string& data, const std::string& prompt,
                 const std::vector<ModalityPair>& trained);

struct ZeroShotResult {
  double accuracy = 0.0;
  bool emergent = false;
  std::size_t n = 0;
};

struct ZeroShotOptions {
  std::size_t n_per_class = 100;
  std::size_t prompts_per_class = 16;
  std::string stream_tag = "zeroshot";
};

/// Classifies a fresh eval set of data_modality against prompt_modality's
/// prototype bank. emergent is false (a warning, not an error) when the two
/// modalities were trained together.
ZeroShotResult emergent_zero_shot_accuracy(const WorldSpec& world, const EncoderMap& encoders,
                                           const std::string& data_modality,
                                           const std::string& prompt_modality,
                                           const std::vector<ModalityPair>& trained,
                                           const ZeroShotOptions& options = {});

// ---- retrieval ------------------------------------------------------------

struct RetrievalIndex {
  ModalityId modality;
  Matrix embeddings;  // N x d, unit-norm rows
  std::vector<int> ids;

  /// Validates unit norms and id uniqueness.
  static RetrievalIndex build(ModalityId modality, Matrix embeddings, std::vector<int> ids);
  std::size_t size() const noexcept { return ids.size(); }
};

struct Hit {
  int id = 0;
  double similarity = 0.0;
};

/// Top-k items by cosine similarity, ties broken by ascending id.
std::vector<Hit> top_k(const RetrievalIndex& index, std::span<const double> query, std::size_t k);

/// recall@K for each K: fraction of queries whose ground-truth id ranks in the top K.
std::map<std::size_t, double> cross_modal_recall_at_k(const RetrievalIndex& index,
                                                      const Matrix& queries,
                                                      const std::vector<int>& ground_truth,
                                                      const std::vector<std::size_t>& ks);

// ---- few-shot probes -------------------------------------------------------

struct ProbeConfig {
  std::size_t iterations = 500;
  double learning_rate = 0.1;
};

/// Multinomial logistic regression trained by full-batch gradient descent on
/// fixed features; returns accuracy on the eval set. Every class in
/// [0, num_classes) must appear among the training labels.
double few_shot_probe(const Matrix& train_x, const std::vector<int>& train_y, const Matrix& eval_x,
                      const std::vector<int>& eval_y, std::size_t num_classes,
                      const ProbeConfig& config = {});

/// First k rows of each class, in class order.
std::pair<Matrix, std::vector<int>> take_shots(const Matrix& x, const std::vector<int>& y,
                                               std::size_t k, std::size_t num_classes);

// ---- composition -----------------------------------------------------------

inline constexpr double kArithmeticWeight = 0.5;
inline constexpr double kEnsembleWeight = 0.95;

/// normalize(w e1 + (1 - w) e2). Throws NumericError when the sum vanishes.
std::vector<double> embed_arithmetic(std::span<const double> e1, std::span<const double> e2,
                                     double w = kArithmeticWeight);
/// Same combination with the ensembling default weight.
std::vector<double> modality_ensemble(std::span<const double> e_a, std::span<const double> e_b,
                                      double w = kEnsembleWeight);
/// Row-wise embed_arithmetic.
Matrix combine_rows(const Matrix& a, const Matrix& b, double w);

struct ArithmeticResult {
  double hit_rate = 0.0;       // top-k contains both query classes
  double baseline_rate = 0.0;  // same queries scored against permuted class pairs
  std::size_t queries = 0;
};

struct ArithmeticOptions {
  std::size_t queries = 200;
  std::size_t top_k = 10;
  std::size_t index_per_class = 20;
  double weight = kArithmeticWeight;
  std::string stream_tag = "arithmetic";
};

/// Composes (class-a item of modality_a, class-b item of modality_b), a != b,
/// and retrieves from a hub index.
ArithmeticResult arithmetic_composition(const WorldSpec& world, const EncoderMap& encoders,
                                        const std::string& modality_a,
                                        const std::string& modality_b,
                                        const ArithmeticOptions& options = {});

// ---- experiment-level evaluation -------------------------------------------

struct RetrievalSpec {
  std::string query;
  std::string index;
};

struct EnsembleSpec {
  std::string query_a;
  std::string query_b;
  std::string index;
  std::vector<double> weights{0.0, 0.5, kEnsembleWeight, 1.0};
};

struct EvalPlan {
  std::vector<ModalityPair> zero_shot;  // (data, prompt)
  std::size_t n_per_class = 100;
  std::size_t prompts_per_class = 16;
  std::vector<RetrievalSpec> retrieval;
  std::size_t retrieval_items = 200;
  std::vector<std::size_t> recall_ks{1, 5, 10};
  std::vector<std::string> few_shot_modalities;
  std::vector<std::size_t> few_shot_ks{1, 2, 4, 8};
  std::size_t few_shot_eval_per_class = 50;
  std::vector<ModalityPair> arithmetic;  // (modality_a, modality_b)
  std::size_t arithmetic_queries = 200;
  std::vector<EnsembleSpec> ensemble;
  ProbeConfig probe;

  void validate(const WorldSpec& world) const;
};

/// Runs every evaluation in plan. Read-only with respect to encoders.
MetricsReport run_eval_plan(const WorldSpec& world, const EncoderMap& encoders,
                            const EvalPlan& plan, const std::vector<ModalityPair>& trained);

/// Trains only the spokes of config against a fixed, externally supplied hub
/// encoder, then runs plan. extra_encoders (e.g. a prompt encoder from an
/// earlier stage) are installed unchanged unless config trains them.
MetricsReport frozen_hub_eval(const EncoderParams& hub, const WorldSpec& world,
                              const ArchMap& archs, TrainConfig config, const EvalPlan& plan,
                              const EncoderMap& extra_encoders = {});

}  // namespace hubbind
