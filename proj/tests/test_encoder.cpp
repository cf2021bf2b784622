#include <doctest.h>

#include <cmath>

#include "hubbind/encoder.hpp"
#include "hubbind/errors.hpp"
#include "pipeline_check.hpp"
#include "support.hpp"

using namespace hubbind;

TEST_CASE("init_encoder: deterministic, zero biases, Glorot variance") {
  const EncoderArch arch{256, {256}, 32, HeadKind::kMlp, Activation::kGelu};
  const EncoderParams a = init_encoder(arch, 4);
  CHECK(a == init_encoder(arch, 4));
  CHECK(!(a == init_encoder(arch, 5)));
  for (const auto& l : a.layers)
    for (double b : l.bias.flat()) CHECK(b == 0.0);

  const Matrix& w = a.layers[0].weight;  // 256 x 256
  const double lim = std::sqrt(6.0 / 512.0);
  double mean = 0.0, sq = 0.0;
  for (double v : w.flat()) {
    CHECK(std::abs(v) <= lim);
    mean += v;
    sq += v * v;
  }
  mean /= static_cast<double>(w.size());
  const double var = sq / static_cast<double>(w.size()) - mean * mean;
  CHECK(std::abs(var - lim * lim / 3.0) <= 0.2 * lim * lim / 3.0);
}

TEST_CASE("layer layout follows the arch") {
  const EncoderParams lin = init_encoder({10, {16, 8}, 4, HeadKind::kLinear, Activation::kTanh}, 0);
  REQUIRE(lin.layers.size() == 3);
  CHECK(lin.layers[0].weight.rows() == 10);
  CHECK(lin.layers[2].weight.cols() == 4);
  const EncoderParams mlp = init_encoder({10, {16}, 4, HeadKind::kMlp, Activation::kGelu}, 0);
  REQUIRE(mlp.layers.size() == 3);
  CHECK(mlp.layers[1].weight.rows() == 16);
  CHECK(mlp.layers[1].weight.cols() == 16);
  CHECK(parameter_count(mlp) == 10 * 16 + 16 + 16 * 16 + 16 + 16 * 4 + 4);
  CHECK_THROWS_AS(init_encoder({0, {}, 4, HeadKind::kLinear, Activation::kGelu}, 0), ConfigError);
}

TEST_CASE("encode: unit rows, identity head, scale invariance, shape errors") {
  oracle::Random rng(21);
  const EncoderParams p = init_encoder({7, {9}, 5, HeadKind::kMlp, Activation::kGelu}, 1);
  const Matrix x = rng.matrix(6, 7);
  const Encoded e = encode(p, x);
  for (std::size_t i = 0; i < 6; ++i) CHECK(std::abs(norm2(e.embeddings.row(i)) - 1.0) <= 1e-10);
  CHECK(e.embeddings == embed(p, x));
  CHECK_THROWS_AS(encode(p, rng.matrix(2, 6)), ShapeError);

  EncoderParams id = init_encoder({5, {}, 5, HeadKind::kLinear, Activation::kGelu}, 0);
  id.layers[0].weight = Matrix::identity(5);
  const Matrix y = rng.matrix(4, 5);
  CHECK(max_abs_diff(embed(id, y), l2_normalize_rows(y)) <= 1e-15);

  const EncoderParams lin = init_encoder({5, {}, 3, HeadKind::kLinear, Activation::kGelu}, 2);
  Matrix doubled = y;
  for (double& v : doubled.row(1)) v *= 2.0;
  const Matrix a = embed(lin, y), b = embed(lin, doubled);
  for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(a(1, j) - b(1, j)) <= 1e-14);
}

TEST_CASE("encode_backward: frozen and zero upstream give zero gradients") {
  oracle::Random rng(22);
  EncoderParams p = init_encoder({4, {6}, 3, HeadKind::kMlp, Activation::kGelu}, 3);
  const Matrix x = rng.matrix(5, 4);
  const Encoded e = encode(p, x);
  auto all_zero = [](const EncoderGrads& g) {
    for (const auto& l : g.layers) {
      for (double v : l.weight.flat())
        if (v != 0.0) return false;
      for (double v : l.bias.flat())
        if (v != 0.0) return false;
    }
    return true;
  };
  CHECK(all_zero(encode_backward(p, e.cache, Matrix(5, 3))));
  CHECK(!all_zero(encode_backward(p, e.cache, rng.matrix(5, 3))));
  p.frozen = true;
  CHECK(all_zero(encode_backward(p, e.cache, rng.matrix(5, 3))));
  CHECK_THROWS_AS(encode_backward(p, e.cache, Matrix(4, 3)), ShapeError);
}

TEST_CASE("flatten/unflatten round-trip") {
  const EncoderParams p = init_encoder({4, {6}, 3, HeadKind::kMlp, Activation::kTanh}, 8);
  EncoderParams q = init_encoder({4, {6}, 3, HeadKind::kMlp, Activation::kTanh}, 9);
  const auto flat = flatten(p.layers);
  CHECK(flat.size() == parameter_count(p));
  unflatten(q.layers, flat);
  CHECK(q.layers == p.layers);
}

TEST_CASE("end-to-end gradients pass finite differences for every arch variant") {
  for (const auto& v : pipeline::arch_variants()) {
    CAPTURE(v.name);
    CHECK(pipeline::max_rel_error(v, 31) <= 1e-4);
    CHECK(pipeline::max_rel_error(v, 32, Activation::kTanh) <= 1e-4);
  }
}
