#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>

#include "hubbind/errors.hpp"
#include "hubbind/evaluation.hpp"
#include "hubbind/experiment.hpp"
#include "support.hpp"

using namespace hubbind;

namespace {

struct Untrained {
  ExperimentConfig config = desk_config();
  WorldSpec world = make_world(config.world, 0);
  EncoderMap encoders = init_state(world, config.archs(world), config.train).encoders;
};

}  // namespace

TEST_CASE("prototypes: P=1 is the prompt embedding, rows unit-norm, degenerate mean rejected") {
  Untrained u;
  const ModalityId t = u.world.find("T").modality;
  RngStream s1 = u.world.eval_stream("p1");
  const PrototypeBank one = build_prototypes(u.world, t, u.encoders.at("T"), 1, s1);
  RngStream s1b = u.world.eval_stream("p1");
  const PromptSet prompts = class_prototypes(u.world, t, 1, s1b);
  CHECK(max_abs_diff(one.prototypes, embed(u.encoders.at("T"), prompts.obs)) <= 1e-12);

  RngStream s16 = u.world.eval_stream("p16");
  const PrototypeBank many = build_prototypes(u.world, t, u.encoders.at("T"), 16, s16);
  CHECK(many.prototypes.rows() == 10);
  for (std::size_t c = 0; c < 10; ++c) CHECK(std::abs(norm2(many.prototypes.row(c)) - 1.0) <= 1e-10);

  const Matrix opposite{{1.0, 0.0}, {-1.0, 0.0}, {0.0, 1.0}};
  CHECK_THROWS_AS(prototypes_from_embeddings(t, opposite, {0, 0, 1}, 2), NumericError);
  CHECK_THROWS_AS(prototypes_from_embeddings(t, opposite, {0, 0, 0}, 2), ConfigError);
}

TEST_CASE("zero_shot_classify: self-match, rescaling, ties, loop oracle") {
  oracle::Random rng(51);
  PrototypeBank bank{{1, "T"}, rng.unit_rows(6, 5)};
  CHECK(zero_shot_classify(bank.prototypes, bank) == std::vector<int>{0, 1, 2, 3, 4, 5});

  // Positive rescaling of a query before normalization leaves the argmax alone.
  const Matrix q = rng.matrix(20, 5);
  const auto base = zero_shot_classify(l2_normalize_rows(q), bank);
  Matrix scaled = q;
  for (std::size_t i = 0; i < 20; ++i)
    for (double& v : scaled.row(i)) v *= 0.1 + static_cast<double>(i);
  CHECK(zero_shot_classify(l2_normalize_rows(scaled), bank) == base);
  CHECK(base == oracle::cosine_classify(oracle::to_grid(q), oracle::to_grid(bank.prototypes)));

  PrototypeBank dup{{1, "T"}, Matrix{{1, 0}, {1, 0}, {0, 1}}};
  CHECK(zero_shot_classify(Matrix{{1, 0}}, dup) == std::vector<int>{0});

  CHECK(accuracy({0, 1, 2, 2}, {0, 1, 1, 2}) == 0.75);
}

TEST_CASE("emergent flag follows the trained-pair registry") {
  Untrained u;
  const auto trained = trained_pairs(u.world, u.config.train);
  CHECK(is_emergent("M1", "T", trained));
  CHECK(!is_emergent("M1", "hub", trained));
  CHECK(!is_emergent("hub", "T", trained));
  CHECK(!is_emergent("M1", "M1", trained));
  CHECK(is_emergent("M2", "M1", trained));
}

TEST_CASE("untrained encoders sit near chance on average") {
  // Single seeds are noisy because an untrained model fixes one random
  // class-to-prototype map for all samples; averaged they center on 1/C.
  double sum = 0.0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    ExperimentConfig c = with_seed(desk_config(), seed);
    const WorldSpec w = make_world(c.world, seed);
    const EncoderMap enc = init_state(w, c.archs(w), c.train).encoders;
    ZeroShotOptions opt;
    const auto r = emergent_zero_shot_accuracy(w, enc, "M1", "T", trained_pairs(w, c.train), opt);
    CHECK(r.n == 1000);
    CHECK(r.emergent);
    sum += r.accuracy;
  }
  const double sigma = std::sqrt(0.1 * 0.9 / 1000.0);
  CHECK(std::abs(sum / 5.0 - 0.1) <= 3.0 * sigma);
}

TEST_CASE("recall@K: exact match, K = N, monotone, full-sort oracle, errors") {
  oracle::Random rng(52);
  for (int trial = 0; trial < 25; ++trial) {
    const std::size_t n = 3 + rng.index(20), d = 2 + rng.index(6);
    Matrix items = rng.unit_rows(n, d);
    if (trial % 5 == 0) std::ranges::copy(items.row(0), items.row(1).begin());
    std::vector<int> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(100 + 3 * i);
    const RetrievalIndex index = RetrievalIndex::build({0, "hub"}, items, ids);

    const Matrix queries = rng.unit_rows(n, d);
    std::vector<int> targets(n);
    for (std::size_t i = 0; i < n; ++i) targets[i] = ids[rng.index(n)];
    std::vector<std::size_t> ks;
    for (std::size_t k = 1; k <= n; ++k) ks.push_back(k);
    const auto recall = cross_modal_recall_at_k(index, queries, targets, ks);
    double prev = 0.0;
    for (std::size_t k : ks) {
      const double want = oracle::recall_at_k(oracle::to_grid(items), ids, oracle::to_grid(queries), targets, k);
      CHECK(recall.at(k) == want);
      CHECK(recall.at(k) >= prev);
      prev = recall.at(k);
    }
    CHECK(recall.at(n) == 1.0);

    const auto self = cross_modal_recall_at_k(index, items, ids, {1});
    if (trial % 5 != 0) CHECK(self.at(1) == 1.0);
  }

  const RetrievalIndex small = RetrievalIndex::build({0, "hub"}, oracle::orthonormal_rows(3, 3), {0, 1, 2});
  CHECK_THROWS_AS(cross_modal_recall_at_k(small, oracle::orthonormal_rows(3, 3), {0, 1, 2}, {4}), ConfigError);
  CHECK_THROWS_AS(cross_modal_recall_at_k(small, oracle::orthonormal_rows(3, 3), {0, 1, 2}, {0}), ConfigError);
  CHECK_THROWS_AS(cross_modal_recall_at_k(small, oracle::orthonormal_rows(1, 3), {7}, {1}), ConfigError);
  CHECK_THROWS_AS(RetrievalIndex::build({0, "hub"}, Matrix{{2, 0}}, {0}), NumericError);
  CHECK_THROWS_AS(RetrievalIndex::build({0, "hub"}, oracle::orthonormal_rows(2, 2), {1, 1}), ConfigError);
}

TEST_CASE("top_k ties go to the lower id") {
  const RetrievalIndex index = RetrievalIndex::build({0, "hub"}, Matrix{{1, 0}, {1, 0}, {0, 1}}, {9, 4, 2});
  const std::vector<double> q{1.0, 0.0};
  const auto hits = top_k(index, q, 3);
  CHECK(hits[0].id == 4);
  CHECK(hits[1].id == 9);
  CHECK(hits[2].id == 2);
}

TEST_CASE("few-shot probe: memorization, shuffled labels, missing class") {
  oracle::Random rng(53);
  const std::size_t C = 4, k = 3;
  Matrix centers = rng.unit_rows(C, 6);
  Matrix x(C * k, 6);
  std::vector<int> y(C * k);
  for (std::size_t i = 0; i < C * k; ++i) {
    y[i] = static_cast<int>(i % C);
    for (std::size_t j = 0; j < 6; ++j) x(i, j) = 3.0 * centers(i % C, j) + 0.05 * rng.normal();
  }
  CHECK(few_shot_probe(x, y, x, y, C) == 1.0);

  const auto [shots, labels] = take_shots(x, y, 2, C);
  CHECK(shots.rows() == 8);
  CHECK(labels == std::vector<int>{0, 0, 1, 1, 2, 2, 3, 3});

  // Random labels on a separate eval set: accuracy within 3 sigma of chance.
  const std::size_t n_eval = 2000;
  Matrix ex(n_eval, 6);
  std::vector<int> ey(n_eval);
  for (std::size_t i = 0; i < n_eval; ++i) {
    ey[i] = static_cast<int>(rng.index(C));
    for (std::size_t j = 0; j < 6; ++j) ex(i, j) = 3.0 * centers(i % C, j) + 0.05 * rng.normal();
  }
  const double acc = few_shot_probe(x, y, ex, ey, C);
  CHECK(std::abs(acc - 0.25) <= 3.0 * std::sqrt(0.25 * 0.75 / n_eval));

  std::vector<int> missing = y;
  for (int& l : missing)
    if (l == 3) l = 2;
  CHECK_THROWS_AS(few_shot_probe(x, missing, x, y, C), ConfigError);
}

TEST_CASE("embed_arithmetic and ensembling") {
  oracle::Random rng(54);
  const Matrix e = rng.unit_rows(2, 7);
  const auto same = embed_arithmetic(e.row(0), e.row(0));
  for (std::size_t j = 0; j < 7; ++j) CHECK(std::abs(same[j] - e(0, j)) <= 1e-15);
  const auto end = embed_arithmetic(e.row(0), e.row(1), 1.0);
  for (std::size_t j = 0; j < 7; ++j) CHECK(std::abs(end[j] - e(0, j)) <= 1e-15);
  const auto ens = modality_ensemble(e.row(1), e.row(1));
  for (std::size_t j = 0; j < 7; ++j) CHECK(std::abs(ens[j] - e(1, j)) <= 1e-15);

  // Output is unit-norm and in span{e1, e2}: its residual after projecting onto the span is 0.
  const auto mid = embed_arithmetic(e.row(0), e.row(1), 0.3);
  CHECK(std::abs(norm2(mid) - 1.0) <= 1e-12);
  const double c = dot(e.row(0), e.row(1));
  const double a0 = dot(mid, e.row(0)), a1 = dot(mid, e.row(1));
  const double alpha = (a0 - c * a1) / (1 - c * c), beta = (a1 - c * a0) / (1 - c * c);
  for (std::size_t j = 0; j < 7; ++j) CHECK(std::abs(mid[j] - alpha * e(0, j) - beta * e(1, j)) <= 1e-12);

  const std::vector<double> up{1.0, 0.0}, down{-1.0, 0.0};
  CHECK_THROWS_AS(embed_arithmetic(up, down, 0.5), NumericError);
  CHECK_THROWS_AS(embed_arithmetic(up, down, 1.5), ConfigError);
}

TEST_CASE("run_eval_plan emits every configured metric and is read-only") {
  Untrained u;
  EvalPlan plan = u.config.eval;
  plan.n_per_class = 20;
  plan.retrieval = {{"M1", "M2"}};
  plan.retrieval_items = 50;
  plan.arithmetic = {{"M1", "M2"}};
  plan.arithmetic_queries = 40;
  plan.ensemble = {{"M1", "T", "hub"}};
  plan.few_shot_eval_per_class = 10;
  plan.probe.iterations = 50;
  const EncoderMap before = u.encoders;
  const auto trained = trained_pairs(u.world, u.config.train);
  const MetricsReport r = run_eval_plan(u.world, u.encoders, plan, trained);
  CHECK(u.encoders == before);
  CHECK(r == run_eval_plan(u.world, u.encoders, plan, trained));

  CHECK(r.has("zeroshot.M1_vs_T.accuracy"));
  CHECK(r.flag("zeroshot.M1_vs_T.emergent"));
  CHECK(!r.flag("zeroshot.M1_vs_hub.emergent"));
  for (const char* k : {"1", "5", "10"}) {
    CHECK(r.has(std::string("retrieval.M1_to_M2.recall@") + k));
    CHECK(r.has(std::string("retrieval.M1_to_M2.shuffled_recall@") + k));
  }
  for (const char* w : {"w0", "w0.5", "w0.95", "w1"}) CHECK(r.has(std::string("ensemble.M1+T_to_hub.") + w + ".recall@10"));
  for (const char* k : {"k1", "k2", "k4", "k8"}) CHECK(r.has(std::string("fewshot.M1.") + k + ".accuracy"));
  CHECK(r.has("arithmetic.M1+M2.hit_rate"));
  CHECK(r.has("arithmetic.M1+M2.baseline_rate"));

  EvalPlan bad = plan;
  bad.zero_shot = {{"M1", "nope"}};
  CHECK_THROWS_AS(run_eval_plan(u.world, u.encoders, bad, trained), ConfigError);
}

TEST_CASE("frozen_hub_eval keeps the supplied hub and is deterministic") {
  ExperimentConfig c = desk_config();
  c.train.epochs = 2;
  c.train.steps_per_epoch = 10;
  const WorldSpec w = make_world(c.world, 0);
  const ArchMap archs = c.archs(w);
  const EncoderParams hub = init_encoder(archs.at("hub"), 99);
  EvalPlan plan;
  plan.zero_shot = {{"M1", "T"}};
  plan.n_per_class = 20;
  const MetricsReport a = frozen_hub_eval(hub, w, archs, c.train, plan);
  CHECK(a == frozen_hub_eval(hub, w, archs, c.train, plan));
  CHECK(a.has("zeroshot.M1_vs_T.accuracy"));

  EncoderParams wrong = init_encoder({7, {4}, 32, HeadKind::kLinear, Activation::kGelu}, 0);
  CHECK_THROWS_AS(frozen_hub_eval(wrong, w, archs, c.train, plan), ConfigError);
}
