#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "hubbind/numerics.hpp"

namespace hubbind {

enum class HeadKind { kLinear, kMlp };
enum class Activation { kGelu, kTanh };

std::string to_string(HeadKind h);
std::string to_string(Activation a);
HeadKind head_from_string(std::string_view s);
Activation activation_from_string(std::string_view s);

/// MLP trunk (hidden_widths, each followed by activation) and a projection
/// head into the shared embed_dim space. The mlp head is
/// Linear(h, h) -> GELU -> Linear(h, d).
struct EncoderArch {
  std::size_t input_dim = 0;
  std::vector<std::size_t> hidden_widths;
  std::size_t embed_dim = 0;
  HeadKind head = HeadKind::kLinear;
  Activation activation = Activation::kGelu;

  void validate() const;
  friend bool operator==(const EncoderArch&, const EncoderArch&) = default;
};

/// y = x W + b, W is in x out.
struct Dense {
  Matrix weight;
  Matrix bias;  // 1 x out

  friend bool operator==(const Dense&, const Dense&) = default;
};

struct EncoderParams {
  EncoderArch arch;
  std::vector<Dense> layers;
  bool frozen = false;

  friend bool operator==(const EncoderParams&, const EncoderParams&) = default;
};

/// Gradients laid out exactly like EncoderParams::layers.
struct EncoderGrads {
  std::vector<Dense> layers;
};

struct ForwardCache {
  std::vector<Matrix> inputs;  // input to each layer
  std::vector<Matrix> pre;     // pre-activation output of each layer
  Matrix raw;                  // embeddings before normalization
};

struct Encoded {
  Matrix embeddings;  // unit-norm rows
  ForwardCache cache;
};

/// Glorot-uniform weights, zero biases.
EncoderParams init_encoder(const EncoderArch& arch, std::uint64_t seed);

Encoded encode(const EncoderParams& params, const Matrix& obs);
/// Embeddings only.
Matrix embed(const EncoderParams& params, const Matrix& obs);

/// Gradient of sum(grad_embeddings * embeddings) with respect to every
/// parameter. A frozen encoder gets an all-zero gradient.
EncoderGrads encode_backward(const EncoderParams& params, const ForwardCache& cache,
                             const Matrix& grad_embeddings);

EncoderGrads zero_grads(const EncoderParams& params);
std::size_t parameter_count(const EncoderParams& params);

/// Flat views in a fixed order: for each layer, weight then bias.
std::vector<double> flatten(const std::vector<Dense>& layers);
void unflatten(std::vector<Dense>& layers, std::span<const double> flat);

}  // namespace hubbind
