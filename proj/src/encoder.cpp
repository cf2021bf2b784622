#include "hubbind/encoder.hpp"

#include <cmath>

#include "hubbind/errors.hpp"
#include "hubbind/random.hpp"

namespace hubbind {

namespace {

enum class LayerAct { kNone, kGelu, kTanh };

LayerAct layer_activation(const EncoderArch& arch, std::size_t layer) {
  const std::size_t trunk = arch.hidden_widths.size();
  if (layer < trunk) return arch.activation == Activation::kGelu ? LayerAct::kGelu : LayerAct::kTanh;
  if (arch.head == HeadKind::kMlp && layer == trunk) return LayerAct::kGelu;
  return LayerAct::kNone;
}

std::size_t layer_count(const EncoderArch& arch) {
  return arch.hidden_widths.size() + (arch.head == HeadKind::kMlp ? 2 : 1);
}

/// (fan_in, fan_out) of every layer implied by arch.
std::vector<std::pair<std::size_t, std::size_t>> layer_shapes(const EncoderArch& arch) {
  std::vector<std::pair<std::size_t, std::size_t>> shapes;
  std::size_t in = arch.input_dim;
  for (std::size_t w : arch.hidden_widths) {
    shapes.emplace_back(in, w);
    in = w;
  }
  if (arch.head == HeadKind::kMlp) shapes.emplace_back(in, in);
  shapes.emplace_back(in, arch.embed_dim);
  return shapes;
}

Matrix activate(LayerAct act, const Matrix& x) {
  switch (act) {
    case LayerAct::kGelu:
      return gelu_forward(x);
    case LayerAct::kTanh:
      return tanh_forward(x);
    case LayerAct::kNone:
      break;
  }
  return x;
}

Matrix activate_backward(LayerAct act, const Matrix& pre, const Matrix& up) {
  switch (act) {
    case LayerAct::kGelu:
      return gelu_backward(pre, up);
    case LayerAct::kTanh:
      return tanh_backward(pre, up);
    case LayerAct::kNone:
      break;
  }
  return up;
}

}  // namespace

std::string to_string(HeadKind h) { return h == HeadKind::kLinear ? "linear" : "mlp"; }
std::string to_string(Activation a) { return a == Activation::kGelu ? "gelu" : "tanh"; }

HeadKind head_from_string(std::string_view s) {
  if (s == "linear") return HeadKind::kLinear;
  if (s == "mlp") return HeadKind::kMlp;
  throw ConfigError("unknown head '" + std::string(s) + "' (expected linear|mlp)");
}

Activation activation_from_string(std::string_view s) {
  if (s == "gelu") return Activation::kGelu;
  if (s == "tanh") return Activation::kTanh;
  throw ConfigError("unknown activation '" + std::string(s) + "' (expected gelu|tanh)");
}

void EncoderArch::validate() const {
  if (input_dim == 0) throw ConfigError("encoder: input_dim must be >= 1");
  if (embed_dim == 0) throw ConfigError("encoder: embed_dim must be >= 1");
  for (std::size_t w : hidden_widths)
    if (w == 0) throw ConfigError("encoder: hidden widths must be >= 1");
}

EncoderParams init_encoder(const EncoderArch& arch, std::uint64_t seed) {
  arch.validate();
  EncoderParams p;
  p.arch = arch;
  RngStream stream(seed, "init/encoder");
  for (auto [fan_in, fan_out] : layer_shapes(arch)) {
    const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
    Dense d{Matrix(fan_in, fan_out), Matrix(1, fan_out)};
    for (double& v : d.weight.flat()) v = stream.uniform(-a, a);
    p.layers.push_back(std::move(d));
  }
  return p;
}

Encoded encode(const EncoderParams& params, const Matrix& obs) {
  if (obs.cols() != params.arch.input_dim) {
    throw ShapeError("encode: observation width " + std::to_string(obs.cols()) +
                     " != encoder input_dim " + std::to_string(params.arch.input_dim));
  }
  if (params.layers.size() != layer_count(params.arch))
    throw ShapeError("encode: layer count does not match arch");

  Encoded out;
  Matrix h = obs;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Matrix pre = add_row_broadcast(matmul(h, layer.weight), layer.bias);
    out.cache.inputs.push_back(std::move(h));
    h = activate(layer_activation(params.arch, l), pre);
    out.cache.pre.push_back(std::move(pre));
  }
  out.cache.raw = std::move(h);
  out.embeddings = l2_normalize_rows(out.cache.raw);
  return out;
}

Matrix embed(const EncoderParams& params, const Matrix& obs) {
  return encode(params, obs).embeddings;
}

EncoderGrads zero_grads(const EncoderParams& params) {
  EncoderGrads g;
  for (const auto& l : params.layers)
    g.layers.push_back({Matrix(l.weight.rows(), l.weight.cols()), Matrix(1, l.bias.cols())});
  return g;
}

EncoderGrads encode_backward(const EncoderParams& params, const ForwardCache& cache,
                             const Matrix& grad_embeddings) {
  if (cache.pre.size() != params.layers.size() || cache.inputs.size() != params.layers.size())
    throw ShapeError("encode_backward: cache does not match encoder");
  if (grad_embeddings.rows() != cache.raw.rows() || grad_embeddings.cols() != cache.raw.cols()) {
    throw ShapeError("encode_backward: gradient " + grad_embeddings.shape_str() +
                     " does not match embeddings " + cache.raw.shape_str());
  }
  EncoderGrads g = zero_grads(params);
  if (params.frozen) return g;

  Matrix up = l2_normalize_rows_backward(cache.raw, grad_embeddings);
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    up = activate_backward(layer_activation(params.arch, l), cache.pre[l], up);
    g.layers[l].weight = matmul_tn(cache.inputs[l], up);
    g.layers[l].bias = sum_rows(up);
    if (l > 0) up = matmul_nt(up, params.layers[l].weight);
  }
  return g;
}

std::size_t parameter_count(const EncoderParams& params) {
  std::size_t n = 0;
  for (const auto& l : params.layers) n += l.weight.size() + l.bias.size();
  return n;
}

std::vector<double> flatten(const std::vector<Dense>& layers) {
  std::vector<double> flat;
  for (const auto& l : layers) {
    flat.insert(flat.end(), l.weight.data().begin(), l.weight.data().end());
    flat.insert(flat.end(), l.bias.data().begin(), l.bias.data().end());
  }
  return flat;
}

void unflatten(std::vector<Dense>& layers, std::span<const double> flat) {
  std::size_t off = 0;
  for (auto& l : layers) {
    for (Matrix* m : {&l.weight, &l.bias}) {
      if (off + m->size() > flat.size()) throw ShapeError("unflatten: too few values");
      std::copy_n(flat.begin() + static_cast<std::ptrdiff_t>(off), m->size(), m->flat().begin());
      off += m->size();
    }
  }
  if (off != flat.size()) throw ShapeError("unflatten: too many values");
}

}  // namespace hubbind
