#include <doctest.h>

#include <cmath>

#include "hubbind/errors.hpp"
#include "hubbind/numerics.hpp"
#include "support.hpp"

using namespace hubbind;

TEST_CASE("matmul: identity, hand sums, and the triple-loop oracle") {
  const Matrix m{{1.5, -2.0}, {0.25, 4.0}};
  CHECK(matmul(Matrix::identity(2), m) == m);
  CHECK(matmul(Matrix{{1, 2}, {3, 4}}, Matrix{{1}, {1}}) == Matrix{{3}, {7}});

  oracle::Random rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = rng.matrix(3, 4);
    const Matrix b = rng.matrix(4, 2);
    const Matrix want = oracle::from_grid(oracle::matmul(oracle::to_grid(a), oracle::to_grid(b)));
    CHECK(max_abs_diff(matmul(a, b), want) <= 1e-12);
    CHECK(max_abs_diff(matmul_tn(transpose(a), b), want) <= 1e-12);
    CHECK(max_abs_diff(matmul_nt(a, transpose(b)), want) <= 1e-12);
  }
}

TEST_CASE("matmul rejects mismatched shapes") {
  CHECK_THROWS_AS(matmul(Matrix(2, 3), Matrix(2, 3)), ShapeError);
  CHECK_THROWS_AS(add(Matrix(2, 3), Matrix(3, 2)), ShapeError);
}

TEST_CASE("matmul is associative within 1e-10") {
  oracle::Random rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = rng.matrix(4, 5), b = rng.matrix(5, 3), c = rng.matrix(3, 6);
    CHECK(max_abs_diff(matmul(matmul(a, b), c), matmul(a, matmul(b, c))) <= 1e-10);
  }
}

TEST_CASE("gelu: fixed point, asymptote, and finite-difference backward") {
  CHECK(gelu_forward(Matrix{{0.0}})(0, 0) == 0.0);
  CHECK(std::abs(gelu_forward(Matrix{{10.0}})(0, 0) - 10.0) <= 1e-4);

  oracle::Random rng(13);
  const Matrix x = rng.matrix(3, 5, 1.5);
  const Matrix up = rng.matrix(3, 5);
  const auto loss = [&](const Matrix& p) {
    const Matrix y = gelu_forward(p);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.flat()[i] * up.flat()[i];
    return s;
  };
  CHECK(finite_difference_check(loss, x, gelu_backward(x, up)).max_rel_error <= 1e-6);
}

TEST_CASE("tanh backward matches finite differences") {
  oracle::Random rng(14);
  const Matrix x = rng.matrix(4, 3);
  const Matrix up = rng.matrix(4, 3);
  const auto loss = [&](const Matrix& p) {
    const Matrix y = tanh_forward(p);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.flat()[i] * up.flat()[i];
    return s;
  };
  CHECK(finite_difference_check(loss, x, tanh_backward(x, up)).max_rel_error <= 1e-6);
}

TEST_CASE("l2_normalize_rows: 3-4-5, zero row, idempotence, backward") {
  const Matrix n = l2_normalize_rows(Matrix{{3, 4}});
  CHECK(std::abs(n(0, 0) - 0.6) <= 1e-15);
  CHECK(std::abs(n(0, 1) - 0.8) <= 1e-15);
  CHECK(l2_normalize_rows(Matrix{{0, 0, 0}}) == Matrix{{0, 0, 0}});

  oracle::Random rng(15);
  const Matrix x = rng.matrix(4, 8);
  const Matrix once = l2_normalize_rows(x);
  CHECK(max_abs_diff(l2_normalize_rows(once), once) <= 1e-12);
  for (std::size_t i = 0; i < once.rows(); ++i) CHECK(std::abs(norm2(once.row(i)) - 1.0) <= 1e-12);

  const Matrix up = rng.matrix(4, 8);
  const auto loss = [&](const Matrix& p) {
    const Matrix y = l2_normalize_rows(p);
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += y.flat()[i] * up.flat()[i];
    return s;
  };
  CHECK(finite_difference_check(loss, x, l2_normalize_rows_backward(x, up)).max_rel_error <= 1e-6);
}

TEST_CASE("softmax_rows: uniform, closed form, stability, shift invariance") {
  const Matrix u = softmax_rows(Matrix{{2, 2, 2, 2}});
  for (double v : u.flat()) CHECK(std::abs(v - 0.25) <= 1e-15);

  const Matrix s = softmax_rows(Matrix{{0.0, std::log(3.0)}});
  CHECK(std::abs(s(0, 0) - 0.25) <= 1e-12);
  CHECK(std::abs(s(0, 1) - 0.75) <= 1e-12);

  const Matrix big = softmax_rows(Matrix{{1000.0, 0.0}});
  CHECK(big.all_finite());
  CHECK(std::abs(big(0, 0) - 1.0) <= 1e-12);
  CHECK(big(0, 1) <= 1e-300);

  oracle::Random rng(16);
  const Matrix x = rng.matrix(5, 7, 3.0);
  Matrix shifted = x;
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (double& v : shifted.row(i)) v += 10.0 * static_cast<double>(i) - 17.0;
  const Matrix a = softmax_rows(x);
  CHECK(max_abs_diff(a, softmax_rows(shifted)) <= 1e-12);
  for (std::size_t i = 0; i < a.rows(); ++i) {
    double sum = 0.0;
    for (double v : a.row(i)) sum += v;
    CHECK(std::abs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("logsumexp_rows agrees with the direct formula") {
  const Matrix x{{0.1, -0.7, 2.0}, {1.0, 1.0, 1.0}};
  const Matrix l = logsumexp_rows(x);
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double s = 0.0;
    for (double v : x.row(i)) s += std::exp(v);
    CHECK(std::abs(l(i, 0) - std::log(s)) <= 1e-12);
  }
}

TEST_CASE("finite_difference_check: quadratic passes, doubled gradient is caught") {
  oracle::Random rng(17);
  const Matrix p = rng.matrix(3, 4);
  const auto half_sq = [](const Matrix& m) {
    double s = 0.0;
    for (double v : m.flat()) s += v * v;
    return 0.5 * s;
  };
  const GradCheckReport ok = finite_difference_check(half_sq, p, p);
  CHECK(ok.max_rel_error <= 1e-8);
  CHECK(ok.eps > 0.0);

  const GradCheckReport bad = finite_difference_check(half_sq, p, scale(p, 2.0));
  CHECK(std::abs(bad.max_rel_error - 0.5) <= 1e-6);
}

TEST_CASE("finite_difference_check validates eps and aborts on non-finite losses") {
  const Matrix p{{1.0, 2.0}};
  const auto f = [](const Matrix& m) { return m(0, 0); };
  CHECK_THROWS_AS(finite_difference_check(f, p, p, 0.0), ConfigError);
  CHECK_THROWS_AS(finite_difference_check(f, p, p, 0.1), ConfigError);
  const auto nan_loss = [](const Matrix&) { return std::nan(""); };
  CHECK_THROWS_AS(finite_difference_check(nan_loss, p, p), NumericError);
}
