#pragma once

// Independent reference implementations for tests. Everything here is written
// with plain loops over std::vector and draws its randomness from <random>, so
// no code is shared with the library paths under test.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "hubbind/numerics.hpp"

namespace oracle {

using Grid = std::vector<std::vector<double>>;

inline Grid to_grid(const hubbind::Matrix& m) {
  Grid g(m.rows(), std::vector<double>(m.cols()));
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) g[i][j] = m(i, j);
  return g;
}

inline hubbind::Matrix from_grid(const Grid& g) {
  hubbind::Matrix m(g.size(), g.empty() ? 0 : g[0].size());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) m(i, j) = g[i][j];
  return m;
}

inline Grid matmul(const Grid& a, const Grid& b) {
  Grid c(a.size(), std::vector<double>(b[0].size(), 0.0));
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b[0].size(); ++j)
      for (std::size_t t = 0; t < b.size(); ++t) c[i][j] += a[i][t] * b[t][j];
  return c;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

/// InfoNCE evaluated term by term: mean_i -log(exp(q_i.k_i/t) / sum_j exp(q_i.k_j/t)).
/// Straight exponentials, no max subtraction; fine for |logits| <= 1/0.05.
inline double info_nce(const Grid& q, const Grid& k, double tau) {
  double total = 0.0;
  for (std::size_t i = 0; i < q.size(); ++i) {
    double denom = 0.0;
    for (std::size_t j = 0; j < k.size(); ++j) denom += std::exp(dot(q[i], k[j]) / tau);
    const double numer = std::exp(dot(q[i], k[i]) / tau);
    total += -std::log(numer / denom);
  }
  return total / static_cast<double>(q.size());
}

/// Ranks every item by (similarity desc, id asc) with a full sort and reports
/// the fraction of queries whose target lands in the first K.
inline double recall_at_k(const Grid& index, const std::vector<int>& ids, const Grid& queries,
                          const std::vector<int>& targets, std::size_t K) {
  std::size_t hits = 0;
  for (std::size_t q = 0; q < queries.size(); ++q) {
    std::vector<std::pair<double, int>> scored;
    for (std::size_t i = 0; i < index.size(); ++i) scored.emplace_back(dot(queries[q], index[i]), ids[i]);
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
      return a.first != b.first ? a.first > b.first : a.second < b.second;
    });
    for (std::size_t r = 0; r < K; ++r)
      if (scored[r].second == targets[q]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(queries.size());
}

/// Cosine argmax with explicit norms; lowest class wins ties.
inline std::vector<int> cosine_classify(const Grid& queries, const Grid& prototypes) {
  std::vector<int> out;
  for (const auto& q : queries) {
    int best = 0;
    double best_s = -1e300;
    for (std::size_t c = 0; c < prototypes.size(); ++c) {
      const double s = dot(q, prototypes[c]) /
                       (std::sqrt(dot(q, q)) * std::sqrt(dot(prototypes[c], prototypes[c])));
      if (s > best_s) {
        best_s = s;
        best = static_cast<int>(c);
      }
    }
    out.push_back(best);
  }
  return out;
}

class Random {
 public:
  explicit Random(std::uint64_t seed) : gen_(seed) {}

  double normal() { return std::normal_distribution<double>(0.0, 1.0)(gen_); }
  double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(gen_); }
  std::size_t index(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(gen_); }

  hubbind::Matrix matrix(std::size_t r, std::size_t c, double scale = 1.0) {
    hubbind::Matrix m(r, c);
    for (double& v : m.flat()) v = scale * normal();
    return m;
  }

  hubbind::Matrix unit_rows(std::size_t r, std::size_t c) {
    hubbind::Matrix m = matrix(r, c);
    for (std::size_t i = 0; i < r; ++i) {
      double n = 0.0;
      for (std::size_t j = 0; j < c; ++j) n += m(i, j) * m(i, j);
      n = std::sqrt(n);
      for (std::size_t j = 0; j < c; ++j) m(i, j) /= n;
    }
    return m;
  }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

/// First n rows of an n x n identity padded to d columns: orthonormal rows.
inline hubbind::Matrix orthonormal_rows(std::size_t n, std::size_t d) {
  hubbind::Matrix m(n, d);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

/// Fresh empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("hubbind_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace oracle
