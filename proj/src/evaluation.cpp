#include "hubbind/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "hubbind/errors.hpp"
#include "hubbind/json_io.hpp"

namespace hubbind {

namespace {

constexpr double kUnitNormTol = 1e-9;

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

Matrix first_rows(const Matrix& m, std::size_t n) {
  Matrix out(n, m.cols());
  std::copy_n(m.flat().begin(), n * m.cols(), out.flat().begin());
  return out;
}

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t j = 1; j < v.size(); ++j)
    if (v[j] > v[best]) best = j;
  return best;
}

std::string k_name(std::size_t k) { return std::to_string(k); }

std::string weight_name(double w) { return format_double(w); }

}  // namespace

PrototypeBank prototypes_from_embeddings(const ModalityId& modality, const Matrix& embeddings,
                                         const std::vector<int>& classes, std::size_t num_classes) {
  if (classes.size() != embeddings.rows())
    throw ShapeError("prototypes: one class index per embedding row is required");
  Matrix sums(num_classes, embeddings.cols());
  std::vector<std::size_t> counts(num_classes, 0);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    const auto c = static_cast<std::size_t>(classes[i]);
    if (classes[i] < 0 || c >= num_classes) throw ConfigError("prototypes: class index out of range");
    auto dst = sums.row(c);
    auto src = embeddings.row(i);
    for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    ++counts[c];
  }
  for (std::size_t c = 0; c < num_classes; ++c) {
    if (counts[c] == 0) throw ConfigError("prototypes: class " + std::to_string(c) + " has no prompts");
    if (norm2(sums.row(c)) < 1e-9 * static_cast<double>(counts[c]))
      throw NumericError("prototypes: class " + std::to_string(c) + " mean embedding is degenerate");
  }
  return {modality, l2_normalize_rows(sums)};
}

PrototypeBank build_prototypes(const WorldSpec& world, const ModalityId& modality,
                               const EncoderParams& encoder, std::size_t prompts_per_class,
                               RngStream& stream) {
  const PromptSet prompts = class_prototypes(world, modality, prompts_per_class, stream);
  return prototypes_from_embeddings(modality, embed(encoder, prompts.obs), prompts.classes,
                                    world.num_classes);
}

std::vector<int> zero_shot_classify(const Matrix& queries, const PrototypeBank& bank) {
  if (queries.cols() != bank.prototypes.cols())
    throw ShapeError("zero_shot_classify: query dim " + std::to_string(queries.cols()) +
                     " != prototype dim " + std::to_string(bank.prototypes.cols()));
  const Matrix q = l2_normalize_rows(queries);
  const Matrix sims = matmul_nt(q, bank.prototypes);
  std::vector<int> pred(q.rows());
  for (std::size_t i = 0; i < q.rows(); ++i) pred[i] = static_cast<int>(argmax_lowest(sims.row(i)));
  return pred;
}

double accuracy(const std::vector<int>& predicted, const std::vector<int>& labels) {
  if (predicted.size() != labels.size()) throw ShapeError("accuracy: length mismatch");
  if (labels.empty()) throw ConfigError("accuracy: empty label set");
  std::size_t ok = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) ok += predicted[i] == labels[i];
  return static_cast<double>(ok) / static_cast<double>(labels.size());
}

std::vector<ModalityPair> trained_pairs(const WorldSpec& world, const TrainConfig& config) {
  std::vector<ModalityPair> out;
  for (const auto& p : config.pairs) out.emplace_back(world.hub().modality.name, p.spoke);
  return out;
}

bool is_emergent(const std::string& data, const std::string& prompt,
                 const std::vector<ModalityPair>& trained) {
  if (data == prompt) return false;
  return std::none_of(trained.begin(), trained.end(), [&](const ModalityPair& p) {
    return (p.first == data && p.second == prompt) || (p.first == prompt && p.second == data);
  });
}

ZeroShotResult emergent_zero_shot_accuracy(const WorldSpec& world, const EncoderMap& encoders,
                                           const std::string& data_modality,
                                           const std::string& prompt_modality,
                                           const std::vector<ModalityPair>& trained,
                                           const ZeroShotOptions& options) {
  const auto& data_obs = world.find(data_modality);
  const auto& prompt_obs = world.find(prompt_modality);
  auto enc = [&](const std::string& name) -> const EncoderParams& {
    auto it = encoders.find(name);
    if (it == encoders.end()) throw ConfigError("no encoder for modality '" + name + "'");
    return it->second;
  };

  RngStream prompt_stream = world.eval_stream(options.stream_tag + "/prompts/" + prompt_modality);
  const PrototypeBank bank = build_prototypes(world, prompt_obs.modality, enc(prompt_modality),
                                              options.prompts_per_class, prompt_stream);
  const LabeledEvalSet set =
      make_eval_set(world, data_obs.modality, options.n_per_class,
                    world.eval_stream(options.stream_tag + "/data/" + data_modality));
  const auto pred = zero_shot_classify(embed(enc(data_modality), set.obs), bank);

  ZeroShotResult r;
  r.accuracy = accuracy(pred, set.labels);
  r.emergent = is_emergent(data_modality, prompt_modality, trained);
  r.n = set.labels.size();
  return r;
}

RetrievalIndex RetrievalIndex::build(ModalityId modality, Matrix embeddings, std::vector<int> ids) {
  if (ids.size() != embeddings.rows()) throw ShapeError("RetrievalIndex: one id per row required");
  for (std::size_t i = 0; i < embeddings.rows(); ++i) {
    if (std::abs(norm2(embeddings.row(i)) - 1.0) > kUnitNormTol)
      throw NumericError("RetrievalIndex: row " + std::to_string(i) + " is not unit-norm");
  }
  std::set<int> seen(ids.begin(), ids.end());
  if (seen.size() != ids.size()) throw ConfigError("RetrievalIndex: ids must be unique");
  return {std::move(modality), std::move(embeddings), std::move(ids)};
}

std::vector<Hit> top_k(const RetrievalIndex& index, std::span<const double> query, std::size_t k) {
  if (k > index.size())
    throw ConfigError("top_k: K=" + std::to_string(k) + " exceeds index size " +
                      std::to_string(index.size()));
  std::vector<Hit> hits(index.size());
  for (std::size_t i = 0; i < index.size(); ++i)
    hits[i] = {index.ids[i], dot(index.embeddings.row(i), query)};
  auto better = [](const Hit& a, const Hit& b) {
    return a.similarity != b.similarity ? a.similarity > b.similarity : a.id < b.id;
  };
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(), better);
  hits.resize(k);
  return hits;
}

std::map<std::size_t, double> cross_modal_recall_at_k(const RetrievalIndex& index,
                                                      const Matrix& queries,
                                                      const std::vector<int>& ground_truth,
                                                      const std::vector<std::size_t>& ks) {
  if (queries.rows() != ground_truth.size())
    throw ShapeError("recall@K: one ground-truth id per query required");
  if (queries.cols() != index.embeddings.cols()) throw ShapeError("recall@K: dimension mismatch");
  if (ks.empty()) throw ConfigError("recall@K: empty K list");
  for (std::size_t k : ks) {
    if (k == 0 || k > index.size())
      throw ConfigError("recall@K: K=" + std::to_string(k) + " must lie in [1, " +
                        std::to_string(index.size()) + "]");
  }
  std::map<int, std::size_t> row_of;
  for (std::size_t i = 0; i < index.size(); ++i) row_of[index.ids[i]] = i;
  for (int id : ground_truth)
    if (!row_of.contains(id)) throw ConfigError("recall@K: ground-truth id " + std::to_string(id) + " not in index");

  const Matrix q = l2_normalize_rows(queries);
  const Matrix sims = matmul_nt(q, index.embeddings);
  std::map<std::size_t, std::size_t> hits;
  for (std::size_t i = 0; i < q.rows(); ++i) {
    const std::size_t t = row_of.at(ground_truth[i]);
    const double st = sims(i, t);
    const int tid = ground_truth[i];
    // Rank = number of items ordered strictly ahead of the target.
    std::size_t ahead = 0;
    for (std::size_t j = 0; j < index.size(); ++j) {
      if (j == t) continue;
      const double s = sims(i, j);
      if (s > st || (s == st && index.ids[j] < tid)) ++ahead;
    }
    for (std::size_t k : ks)
      if (ahead < k) ++hits[k];
  }
  std::map<std::size_t, double> out;
  for (std::size_t k : ks) out[k] = static_cast<double>(hits[k]) / static_cast<double>(q.rows());
  return out;
}

double few_shot_probe(const Matrix& train_x, const std::vector<int>& train_y, const Matrix& eval_x,
                      const std::vector<int>& eval_y, std::size_t num_classes,
                      const ProbeConfig& config) {
  if (train_x.rows() != train_y.size() || eval_x.rows() != eval_y.size())
    throw ShapeError("few_shot_probe: one label per row required");
  if (train_x.cols() != eval_x.cols()) throw ShapeError("few_shot_probe: feature dims differ");
  if (train_x.rows() == 0) throw ConfigError("few_shot_probe: no training shots");
  std::vector<bool> present(num_classes, false);
  for (int y : train_y) {
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes)
      throw ConfigError("few_shot_probe: label out of range");
    present[static_cast<std::size_t>(y)] = true;
  }
  for (std::size_t c = 0; c < num_classes; ++c)
    if (!present[c]) throw ConfigError("few_shot_probe: class " + std::to_string(c) + " has no shots");

  const std::size_t n = train_x.rows();
  Matrix w(train_x.cols(), num_classes);
  Matrix b(1, num_classes);
  for (std::size_t it = 0; it < config.iterations; ++it) {
    Matrix g = softmax_rows(add_row_broadcast(matmul(train_x, w), b));
    for (std::size_t i = 0; i < n; ++i) g(i, static_cast<std::size_t>(train_y[i])) -= 1.0;
    const double s = config.learning_rate / static_cast<double>(n);
    w = sub(w, scale(matmul_tn(train_x, g), s));
    b = sub(b, scale(sum_rows(g), s));
  }
  const Matrix logits = add_row_broadcast(matmul(eval_x, w), b);
  std::vector<int> pred(eval_x.rows());
  for (std::size_t i = 0; i < eval_x.rows(); ++i) pred[i] = static_cast<int>(argmax_lowest(logits.row(i)));
  return accuracy(pred, eval_y);
}

std::pair<Matrix, std::vector<int>> take_shots(const Matrix& x, const std::vector<int>& y,
                                               std::size_t k, std::size_t num_classes) {
  if (x.rows() != y.size()) throw ShapeError("take_shots: one label per row required");
  std::vector<std::size_t> taken(num_classes, 0);
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < y.size(); ++i) {
    const auto c = static_cast<std::size_t>(y[i]);
    if (c < num_classes && taken[c] < k) {
      ++taken[c];
      rows.push_back(i);
    }
  }
  for (std::size_t c = 0; c < num_classes; ++c)
    if (taken[c] < k) throw ConfigError("take_shots: class " + std::to_string(c) + " has fewer than k rows");
  std::sort(rows.begin(), rows.end(), [&](std::size_t a, std::size_t b) {
    return y[a] != y[b] ? y[a] < y[b] : a < b;
  });
  Matrix out(rows.size(), x.cols());
  std::vector<int> labels;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    std::ranges::copy(x.row(rows[i]), out.row(i).begin());
    labels.push_back(y[rows[i]]);
  }
  return {std::move(out), std::move(labels)};
}

std::vector<double> embed_arithmetic(std::span<const double> e1, std::span<const double> e2,
                                     double w) {
  if (e1.size() != e2.size()) throw ShapeError("embed_arithmetic: dimension mismatch");
  if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("embed_arithmetic: weight must lie in [0, 1]");
  std::vector<double> out(e1.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = w * e1[i] + (1.0 - w) * e2[i];
  const double n = norm2(out);
  if (n < 1e-12) throw NumericError("embed_arithmetic: combination has zero norm");
  for (double& v : out) v /= n;
  return out;
}

std::vector<double> modality_ensemble(std::span<const double> e_a, std::span<const double> e_b,
                                      double w) {
  return embed_arithmetic(e_a, e_b, w);
}

Matrix combine_rows(const Matrix& a, const Matrix& b, double w) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) throw ShapeError("combine_rows: shape mismatch");
  Matrix out(a.rows(), a.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    const auto r = embed_arithmetic(a.row(i), b.row(i), w);
    std::ranges::copy(r, out.row(i).begin());
  }
  return out;
}

ArithmeticResult arithmetic_composition(const WorldSpec& world, const EncoderMap& encoders,
                                        const std::string& modality_a,
                                        const std::string& modality_b,
                                        const ArithmeticOptions& options) {
  const std::size_t C = world.num_classes;
  if (options.queries == 0) throw ConfigError("arithmetic: need at least one query");
  auto enc = [&](const std::string& name) -> const EncoderParams& {
    auto it = encoders.find(name);
    if (it == encoders.end()) throw ConfigError("no encoder for modality '" + name + "'");
    return it->second;
  };
  const auto& hub = world.hub().modality;
  const std::string tag = options.stream_tag + "/" + modality_a + "+" + modality_b;

  const LabeledEvalSet index_set =
      make_eval_set(world, hub, options.index_per_class, world.eval_stream(tag + "/index"));
  std::vector<int> ids(index_set.labels.size());
  std::iota(ids.begin(), ids.end(), 0);
  const RetrievalIndex index =
      RetrievalIndex::build(hub, embed(enc(hub.name), index_set.obs), std::move(ids));

  const std::size_t per_class = ceil_div(options.queries, C);
  const LabeledEvalSet set_a = make_eval_set(world, world.find(modality_a).modality, per_class,
                                             world.eval_stream(tag + "/a"));
  const LabeledEvalSet set_b = make_eval_set(world, world.find(modality_b).modality, per_class,
                                             world.eval_stream(tag + "/b"));
  const Matrix emb_a = embed(enc(modality_a), set_a.obs);
  const Matrix emb_b = embed(enc(modality_b), set_b.obs);

  // Query q pairs class a = q mod C with a different class b. Eval-set labels
  // are round-robin, so the j-th item of class c sits at row j*C + c.
  std::vector<std::pair<int, int>> classes(options.queries);
  std::vector<std::set<int>> retrieved(options.queries);
  for (std::size_t q = 0; q < options.queries; ++q) {
    const std::size_t j = q / C;
    const std::size_t a = q % C;
    const std::size_t b = (a + 1 + j % (C - 1)) % C;
    classes[q] = {static_cast<int>(a), static_cast<int>(b)};
    const auto composed = embed_arithmetic(emb_a.row(j * C + a), emb_b.row(j * C + b), options.weight);
    for (const Hit& h : top_k(index, composed, options.top_k))
      retrieved[q].insert(index_set.labels[static_cast<std::size_t>(h.id)]);
  }

  std::vector<std::size_t> perm(options.queries);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  RngStream perm_stream = world.eval_stream(tag + "/permutation");
  for (std::size_t i = perm.size(); i > 1; --i) std::swap(perm[i - 1], perm[perm_stream.index(i)]);

  auto contains_both = [&](std::size_t q, std::pair<int, int> cls) {
    return retrieved[q].contains(cls.first) && retrieved[q].contains(cls.second);
  };
  std::size_t hits = 0, baseline = 0;
  for (std::size_t q = 0; q < options.queries; ++q) {
    hits += contains_both(q, classes[q]);
    baseline += contains_both(q, classes[perm[q]]);
  }
  ArithmeticResult r;
  r.queries = options.queries;
  r.hit_rate = static_cast<double>(hits) / static_cast<double>(options.queries);
  r.baseline_rate = static_cast<double>(baseline) / static_cast<double>(options.queries);
  return r;
}

void EvalPlan::validate(const WorldSpec& world) const {
  auto check = [&](const std::string& m) {
    if (!world.has(m)) throw ConfigError("eval plan: unknown modality '" + m + "'");
  };
  for (const auto& [d, p] : zero_shot) check(d), check(p);
  for (const auto& r : retrieval) check(r.query), check(r.index);
  for (const auto& m : few_shot_modalities) check(m);
  for (const auto& [a, b] : arithmetic) check(a), check(b);
  for (const auto& e : ensemble) {
    check(e.query_a), check(e.query_b), check(e.index);
    if (e.weights.empty()) throw ConfigError("eval plan: ensemble weight sweep is empty");
    for (double w : e.weights)
      if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("eval plan: ensemble weights must lie in [0, 1]");
  }
  if (n_per_class == 0 || prompts_per_class == 0 || retrieval_items == 0 || few_shot_eval_per_class == 0)
    throw ConfigError("eval plan: counts must be >= 1");
  for (std::size_t k : recall_ks)
    if (k == 0 || k > retrieval_items) throw ConfigError("eval plan: recall K must lie in [1, retrieval_items]");
  for (std::size_t k : few_shot_ks)
    if (k == 0) throw ConfigError("eval plan: few-shot k must be >= 1");
}

MetricsReport run_eval_plan(const WorldSpec& world, const EncoderMap& encoders,
                            const EvalPlan& plan, const std::vector<ModalityPair>& trained) {
  plan.validate(world);
  MetricsReport rep;
  auto enc = [&](const std::string& name) -> const EncoderParams& {
    auto it = encoders.find(name);
    if (it == encoders.end()) throw ConfigError("no encoder for modality '" + name + "'");
    return it->second;
  };

  for (const auto& [data, prompt] : plan.zero_shot) {
    ZeroShotOptions opt;
    opt.n_per_class = plan.n_per_class;
    opt.prompts_per_class = plan.prompts_per_class;
    const auto r = emergent_zero_shot_accuracy(world, encoders, data, prompt, trained, opt);
    const std::string key = "zeroshot." + data + "_vs_" + prompt;
    rep.set(key + ".accuracy", r.accuracy);
    rep.set_flag(key + ".emergent", r.emergent);
  }

  auto paired_items = [&](const std::string& tag, const std::string& modality) {
    const std::size_t per_class = ceil_div(plan.retrieval_items, world.num_classes);
    const auto set = make_eval_set(world, world.find(modality).modality, per_class, world.eval_stream(tag));
    return first_rows(embed(enc(modality), set.obs), plan.retrieval_items);
  };
  std::vector<int> item_ids(plan.retrieval_items);
  std::iota(item_ids.begin(), item_ids.end(), 0);

  for (const auto& r : plan.retrieval) {
    const std::string tag = "retrieval/" + r.query + "-" + r.index;
    const auto index = RetrievalIndex::build(world.find(r.index).modality, paired_items(tag, r.index), item_ids);
    const Matrix queries = paired_items(tag, r.query);
    const auto recall = cross_modal_recall_at_k(index, queries, item_ids, plan.recall_ks);
    const std::string key = "retrieval." + r.query + "_to_" + r.index;
    for (const auto& [k, v] : recall) rep.set(key + ".recall@" + k_name(k), v);
    // Control: the same rankings scored against permuted targets sit at chance, K/N.
    std::vector<int> shuffled = item_ids;
    RngStream perm_stream = world.eval_stream(tag + "/shuffle");
    for (std::size_t i = shuffled.size(); i > 1; --i) std::swap(shuffled[i - 1], shuffled[perm_stream.index(i)]);
    const auto control = cross_modal_recall_at_k(index, queries, shuffled, plan.recall_ks);
    for (const auto& [k, v] : control) rep.set(key + ".shuffled_recall@" + k_name(k), v);
    rep.set_flag(key + ".emergent", is_emergent(r.query, r.index, trained));
  }

  for (const auto& e : plan.ensemble) {
    const std::string tag = "ensemble/" + e.query_a + "+" + e.query_b + "-" + e.index;
    const auto index = RetrievalIndex::build(world.find(e.index).modality, paired_items(tag, e.index), item_ids);
    const Matrix qa = paired_items(tag, e.query_a);
    const Matrix qb = paired_items(tag, e.query_b);
    const std::string key = "ensemble." + e.query_a + "+" + e.query_b + "_to_" + e.index;
    for (double w : e.weights) {
      const auto recall = cross_modal_recall_at_k(index, combine_rows(qa, qb, w), item_ids, plan.recall_ks);
      for (const auto& [k, v] : recall) rep.set(key + ".w" + weight_name(w) + ".recall@" + k_name(k), v);
    }
  }

  for (const auto& m : plan.few_shot_modalities) {
    const auto& mod = world.find(m).modality;
    const std::size_t kmax = *std::max_element(plan.few_shot_ks.begin(), plan.few_shot_ks.end());
    const auto train_set = make_eval_set(world, mod, kmax, world.eval_stream("fewshot/train/" + m));
    const auto eval_set = make_eval_set(world, mod, plan.few_shot_eval_per_class, world.eval_stream("fewshot/eval/" + m));
    const Matrix train_emb = embed(enc(m), train_set.obs);
    const Matrix eval_emb = embed(enc(m), eval_set.obs);
    for (std::size_t k : plan.few_shot_ks) {
      auto [x, y] = take_shots(train_emb, train_set.labels, k, world.num_classes);
      rep.set("fewshot." + m + ".k" + k_name(k) + ".accuracy",
              few_shot_probe(x, y, eval_emb, eval_set.labels, world.num_classes, plan.probe));
    }
  }

  for (const auto& [a, b] : plan.arithmetic) {
    ArithmeticOptions opt;
    opt.queries = plan.arithmetic_queries;
    const auto r = arithmetic_composition(world, encoders, a, b, opt);
    const std::string key = "arithmetic." + a + "+" + b;
    rep.set(key + ".hit_rate", r.hit_rate);
    rep.set(key + ".baseline_rate", r.baseline_rate);
  }
  return rep;
}

MetricsReport frozen_hub_eval(const EncoderParams& hub, const WorldSpec& world,
                              const ArchMap& archs, TrainConfig config, const EvalPlan& plan,
                              const EncoderMap& extra_encoders) {
  const std::string& hub_name = world.hub().modality.name;
  if (hub.arch.input_dim != world.hub().obs_dim())
    throw ShapeError("frozen_hub_eval: hub encoder input_dim " + std::to_string(hub.arch.input_dim) +
                     " != hub observation dim " + std::to_string(world.hub().obs_dim()));
  ArchMap all_archs = archs;
  all_archs[hub_name] = hub.arch;
  EncoderMap preset = extra_encoders;
  for (const auto& [name, p] : extra_encoders) all_archs[name] = p.arch;
  preset[hub_name] = hub;
  config.hub_frozen = true;

  TrainResult run = train_run(world, all_archs, config, preset);
  auto trained = trained_pairs(world, config);
  for (const auto& [name, p] : extra_encoders)
    if (name != hub_name) trained.emplace_back(hub_name, name);

  MetricsReport rep = run.report;
  rep.merge(run_eval_plan(world, run.state.encoders, plan, trained));
  return rep;
}

}  // namespace hubbind
