// bind: command-line runner for hub-anchored contrastive binding experiments.
//
// Exit codes: 0 ok, 2 configuration error, 3 numeric failure, 4 I/O error.

#include <CLI11.hpp>

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "hubbind/ablation.hpp"
#include "hubbind/errors.hpp"
#include "hubbind/evaluation.hpp"
#include "hubbind/experiment.hpp"
#include "hubbind/json_io.hpp"
#include "hubbind/trainer.hpp"
#include "hubbind/world.hpp"

#ifndef HUBBIND_VERSION
#define HUBBIND_VERSION "unknown"
#endif

namespace fs = std::filesystem;
using namespace hubbind;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitNumeric = 3;
constexpr int kExitIo = 4;

struct Options {
  std::string config;
  std::string out = "out";
  std::string checkpoint;
  std::optional<std::uint64_t> seed;
  std::size_t k = 10;
  std::string compose;
  double w = 0.5;
  std::string index = "hub";
  std::string query;
  std::optional<std::size_t> item;
  std::optional<std::size_t> items;
  std::size_t jobs = 1;
};

ExperimentConfig resolve_config(const Options& o) {
  ExperimentConfig c = o.config.empty() ? desk_config() : load_experiment(o.config);
  if (o.seed) c = with_seed(std::move(c), *o.seed);
  return c;
}

std::string provenance_line(const ExperimentConfig& c) {
  return "# config_hash=" + config_hash(c) + " seed=" + std::to_string(c.seed) + "\n";
}

void write_manifest(const fs::path& dir, const std::string& command, const ExperimentConfig& c,
                    const std::vector<std::string>& files, const ojson& extra = ojson::object()) {
  ojson m;
  m["format"] = "hubbind.manifest";
  m["version"] = 1;
  m["command"] = command;
  m["config_hash"] = config_hash(c);
  m["seed"] = c.seed;
  m["code_version"] = HUBBIND_VERSION;
  m["files"] = files;
  for (const auto& [k, v] : extra.items()) m[k] = v;
  write_text_file(dir / "manifest.json", m.dump(2) + "\n");
}

/// Checkpoint plus the config it was trained with (unless --config overrides it).
struct LoadedRun {
  ExperimentConfig config;
  WorldSpec world;
  EncoderMap encoders;
  bool trained = false;
};

LoadedRun load_run(const Options& o) {
  LoadedRun run;
  if (o.checkpoint.empty()) {
    run.config = resolve_config(o);
    run.world = make_world(run.config.world, run.config.seed);
    run.encoders = init_state(run.world, run.config.archs(run.world), run.config.train).encoders;
    return run;
  }
  ojson context;
  (void)load_checkpoint(o.checkpoint, &context);
  if (!o.config.empty()) {
    run.config = load_experiment(o.config);
  } else {
    if (!context.contains("config"))
      throw ConfigError("checkpoint '" + o.checkpoint + "' carries no config; pass --config");
    run.config = parse_experiment(context.at("config"));
  }
  if (o.seed) run.config = with_seed(std::move(run.config), *o.seed);
  run.world = make_world(run.config.world, run.config.seed);
  run.encoders = load_checkpoint(o.checkpoint, run.config.archs(run.world)).encoders;
  run.trained = true;
  return run;
}

int cmd_worldgen(const Options& o) {
  const ExperimentConfig c = resolve_config(o);
  const WorldSpec world = make_world(c.world, c.seed);
  const fs::path out = o.out;
  write_text_file(out / "world.json", world_to_json(world));
  write_manifest(out, "worldgen", c, {"world.json"});
  std::cout << "wrote " << (out / "world.json").string() << "\n";
  return 0;
}

int cmd_train(const Options& o) {
  const ExperimentConfig c = resolve_config(o);
  const WorldSpec world = make_world(c.world, c.seed);
  const TrainResult r = train_run(world, c.archs(world), c.train);
  const fs::path out = o.out;

  ojson context;
  context["config"] = experiment_to_json(c);
  context["config_hash"] = config_hash(c);
  context["seed"] = c.seed;
  save_checkpoint(r.state, out / "checkpoint.json", context);
  write_text_file(out / "train_log.csv", provenance_line(c) + history_csv(r.state));

  MetricsReport summary = r.report;
  summary.set_meta("config_hash", config_hash(c));
  summary.set_meta("seed", std::to_string(c.seed));
  write_text_file(out / "train_report.json", summary.to_json());
  write_manifest(out, "train", c, {"checkpoint.json", "train_log.csv", "train_report.json"});

  for (const auto& p : c.train.pairs) {
    const std::string key = "train." + p.spoke;
    std::cout << p.spoke << ": loss " << format_double(summary.get(key + ".loss_first")) << " -> "
              << format_double(summary.get(key + ".loss_last")) << "\n";
  }
  std::cout << "wrote " << out.string() << "\n";
  return 0;
}

int cmd_eval(const Options& o) {
  const LoadedRun run = load_run(o);
  const MetricsReport rep = evaluate_experiment(run.config, run.world, run.encoders);
  const fs::path out = o.out;
  write_text_file(out / "eval_report.json", rep.to_json());
  write_text_file(out / "eval_report.csv", provenance_line(run.config) + rep.to_csv());
  write_manifest(out, "eval", run.config, {"eval_report.json", "eval_report.csv"},
                 {{"checkpoint", o.checkpoint.empty() ? "untrained" : o.checkpoint}});
  for (const auto& [k, v] : rep.metrics()) std::cout << k << " = " << format_double(v) << "\n";
  return 0;
}

/// "M1:3+M2:17" -> {("M1", 3), ("M2", 17)}
std::vector<std::pair<std::string, std::size_t>> parse_compose(const std::string& spec) {
  std::vector<std::pair<std::string, std::size_t>> terms;
  std::stringstream ss(spec);
  std::string term;
  while (std::getline(ss, term, '+')) {
    const auto colon = term.find(':');
    if (colon == std::string::npos || colon == 0 || colon + 1 == term.size())
      throw ConfigError("--compose: term '" + term + "' must look like MODALITY:ID");
    const std::string id = term.substr(colon + 1);
    if (id.find_first_not_of("0123456789") != std::string::npos)
      throw ConfigError("--compose: id '" + id + "' is not a non-negative integer");
    terms.emplace_back(term.substr(0, colon), std::stoull(id));
  }
  if (terms.size() != 2) throw ConfigError("--compose: expected exactly two terms joined by '+'");
  return terms;
}

int cmd_retrieve(const Options& o) {
  const LoadedRun run = load_run(o);
  const WorldSpec& world = run.world;
  const std::size_t n = o.items.value_or(run.config.eval.retrieval_items);
  if (n == 0) throw ConfigError("--items must be >= 1");
  if (o.k == 0 || o.k > n) throw ConfigError("--k must lie in [1, " + std::to_string(n) + "]");

  // Every modality observes the same latents row for row, so item i of one
  // modality and item i of another depict the same underlying instance.
  const std::size_t per_class = (n + world.num_classes - 1) / world.num_classes;
  const RngStream stream = world.eval_stream("retrieve");
  auto items_of = [&](const std::string& modality) {
    auto enc = run.encoders.find(modality);
    if (enc == run.encoders.end()) throw ConfigError("no encoder for modality '" + modality + "'");
    const LabeledEvalSet set = make_eval_set(world, world.find(modality).modality, per_class, stream);
    const Matrix emb = embed(enc->second, set.obs);
    Matrix out(n, emb.cols());
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < emb.cols(); ++j) out(i, j) = emb(i, j);
    return out;
  };
  auto check_id = [&](std::size_t id) {
    if (id >= n) throw ConfigError("item id " + std::to_string(id) + " is out of range [0, " +
                                   std::to_string(n) + ")");
  };

  std::vector<int> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = static_cast<int>(i);
  const RetrievalIndex index = RetrievalIndex::build(world.find(o.index).modality, items_of(o.index), ids);

  std::vector<double> query;
  if (!o.compose.empty()) {
    const auto terms = parse_compose(o.compose);
    check_id(terms[0].second);
    check_id(terms[1].second);
    const Matrix a = items_of(terms[0].first);
    const Matrix b = items_of(terms[1].first);
    query = embed_arithmetic(a.row(terms[0].second), b.row(terms[1].second), o.w);
  } else {
    if (!o.item) throw ConfigError("retrieve needs --item ID or --compose A:ID+B:ID");
    check_id(*o.item);
    const Matrix q = items_of(o.query.empty() ? o.index : o.query);
    const auto row = q.row(*o.item);
    query.assign(row.begin(), row.end());
  }

  std::cout << "rank,id,similarity\n";
  std::size_t rank = 1;
  for (const Hit& h : top_k(index, query, o.k))
    std::cout << rank++ << ',' << h.id << ',' << format_double(h.similarity) << "\n";
  return 0;
}

int cmd_ablate(const Options& o) {
  if (o.config.empty()) throw ConfigError("ablate needs --config SUITE.json");
  AblationSpec spec = load_ablation_spec(o.config);
  if (o.seed) {
    for (auto& s : spec.suites) s.seeds = {*o.seed};
  }
  const fs::path out = o.out;
  const std::string hash = config_hash(spec.base);

  ojson summary;
  summary["format"] = "hubbind.ablation";
  summary["version"] = 1;
  summary["base_config_hash"] = hash;
  summary["suites"] = ojson::array();
  std::string summary_csv;
  std::vector<std::string> files;
  std::size_t failures = 0;
  for (const auto& suite : spec.suites) {
    const std::string axis = to_string(suite.axis);
    const AblationResult r = run_ablation(spec.base, suite, o.jobs, [&](const AblationCell& cell) {
      std::cerr << axis << '=' << cell.value << " seed=" << cell.seed << ' '
                << (cell.ok ? "ok" : "FAILED: " + cell.error) << "\n";
    });
    for (const auto& cell : r.cells) failures += cell.ok ? 0 : 1;
    const std::string long_name = "ablation_" + axis + ".csv";
    write_text_file(out / long_name, "# base_config_hash=" + hash + "\n" + r.long_csv());
    files.push_back(long_name);
    const std::string s = r.summary_csv();
    summary_csv += summary_csv.empty() ? s : s.substr(s.find('\n') + 1);
    summary["suites"].push_back(r.summary_json());
  }
  write_text_file(out / "summary.csv", "# base_config_hash=" + hash + "\n" + summary_csv);
  write_text_file(out / "summary.json", summary.dump(2) + "\n");
  files.push_back("summary.csv");
  files.push_back("summary.json");
  write_manifest(out, "ablate", spec.base, files, {{"failed_cells", failures}});
  std::cout << "wrote " << out.string() << " (" << failures << " failed cells)\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Train and evaluate hub-anchored multimodal embeddings on a synthetic world."};
  app.require_subcommand(1);
  Options o;

  auto add_common = [&](CLI::App* sub, bool checkpoint) {
    sub->add_option("--config", o.config, "experiment config JSON (default: bundled desk config)");
    sub->add_option("--seed", o.seed, "override the config seed");
    if (checkpoint) sub->add_option("--checkpoint", o.checkpoint, "checkpoint.json from `bind train`");
  };

  auto* worldgen = app.add_subcommand("worldgen", "write the synthetic world for a config");
  add_common(worldgen, false);
  worldgen->add_option("--out", o.out, "output directory");

  auto* train = app.add_subcommand("train", "train encoders; writes checkpoint, log and manifest");
  add_common(train, false);
  train->add_option("--out", o.out, "output directory");

  auto* eval = app.add_subcommand("eval", "evaluate a checkpoint (or fresh encoders without one)");
  add_common(eval, true);
  eval->add_option("--out", o.out, "output directory");

  auto* retrieve = app.add_subcommand("retrieve", "top-K cross-modal retrieval; prints rank,id,similarity");
  add_common(retrieve, true);
  retrieve->add_option("--index", o.index, "index modality");
  retrieve->add_option("--query", o.query, "query modality (default: index modality)");
  retrieve->add_option("--item", o.item, "query item id");
  retrieve->add_option("--compose", o.compose, "compose two items, e.g. M1:3+M2:17");
  retrieve->add_option("--w", o.w, "weight of the first composed term")->check(CLI::Range(0.0, 1.0));
  retrieve->add_option("--k", o.k, "number of results");
  retrieve->add_option("--items", o.items, "index size (default: eval.retrieval_items)");

  auto* ablate = app.add_subcommand("ablate", "run an ablation suite");
  ablate->add_option("--config", o.config, "ablation suite JSON")->required();
  ablate->add_option("--seed", o.seed, "run every suite with this single seed");
  ablate->add_option("--out", o.out, "output directory");
  ablate->add_option("--jobs", o.jobs, "parallel cells")->check(CLI::PositiveNumber);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : kExitConfig;
  }

  try {
    if (*worldgen) return cmd_worldgen(o);
    if (*train) return cmd_train(o);
    if (*eval) return cmd_eval(o);
    if (*retrieve) return cmd_retrieve(o);
    if (*ablate) return cmd_ablate(o);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
