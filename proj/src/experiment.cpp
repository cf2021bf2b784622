#include "hubbind/experiment.hpp"

#include <cstdio>
#include <set>

#include "hubbind/errors.hpp"
#include "hubbind/random.hpp"

namespace hubbind {

namespace {

/// Reads one JSON object field by field and rejects keys nobody asked for.
class FieldReader {
 public:
  FieldReader(const ojson& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError("config: '" + display() + "' must be an object");
  }

  bool has(const std::string& key) {
    seen_.insert(key);
    return j_.contains(key);
  }

  const ojson& node(const std::string& key) {
    if (!has(key)) throw ConfigError("config: missing required field '" + field(key) + "'");
    return j_.at(key);
  }

  template <class T>
  T req(const std::string& key) {
    return convert<T>(node(key), key);
  }

  template <class T>
  T opt(const std::string& key, T fallback) {
    if (!has(key)) return fallback;
    return convert<T>(j_.at(key), key);
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (const auto& [k, v] : j_.items()) {
      if (!seen_.contains(k)) throw ConfigError("config: unknown field '" + field(k) + "'");
    }
  }

 private:
  std::string display() const { return path_.empty() ? "<root>" : path_; }

  template <class T>
  T convert(const ojson& v, const std::string& key) {
    try {
      if constexpr (std::is_unsigned_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
          throw ConfigError("config: field '" + field(key) + "' must be a non-negative integer");
      }
      return v.get<T>();
    } catch (const ojson::exception&) {
      throw ConfigError("config: field '" + field(key) + "' has the wrong type");
    }
  }

  const ojson& j_;
  std::string path_;
  std::set<std::string> seen_;
};

TemperatureParam parse_temperature(const ojson& v, const std::string& field) {
  if (v.is_number()) return TemperatureParam::fixed(v.get<double>());
  if (v.is_string() && v.get<std::string>() == "learnable") return TemperatureParam::learnable(0.07);
  if (v.is_object()) {
    FieldReader r(v, field);
    const double init = r.opt<double>("learnable_init", 0.07);
    const double lo = r.opt<double>("clamp_min", TemperatureParam::kDefaultClampMin);
    const double hi = r.opt<double>("clamp_max", TemperatureParam::kDefaultClampMax);
    r.finish();
    return TemperatureParam::learnable(init, lo, hi);
  }
  throw ConfigError("config: field '" + field +
                    "' must be a number, \"learnable\", or {learnable_init, clamp_min, clamp_max}");
}

ojson temperature_json(const TemperatureParam& t) {
  if (!t.is_learnable()) return t.value();
  ojson j;
  j["learnable_init"] = t.value();
  j["clamp_min"] = t.clamp_min();
  j["clamp_max"] = t.clamp_max();
  return j;
}

std::vector<ModalityPair> parse_pairs(const ojson& v, const std::string& field) {
  std::vector<ModalityPair> out;
  if (!v.is_array()) throw ConfigError("config: field '" + field + "' must be an array of pairs");
  for (const auto& p : v) {
    if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string())
      throw ConfigError("config: entries of '" + field + "' must be [\"a\", \"b\"] pairs");
    out.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
  }
  return out;
}

ojson pairs_json(const std::vector<ModalityPair>& pairs) {
  ojson a = ojson::array();
  for (const auto& [x, y] : pairs) a.push_back({x, y});
  return a;
}

WorldConfig parse_world(const ojson& j) {
  FieldReader r(j, "world");
  WorldConfig w;
  w.latent_dim = r.opt<std::size_t>("latent_dim", w.latent_dim);
  w.num_classes = r.opt<std::size_t>("num_classes", w.num_classes);
  w.within_class_scale = r.opt<double>("within_class_scale", w.within_class_scale);
  w.class_mean_scale = r.opt<double>("class_mean_scale", w.class_mean_scale);
  w.observer_gain = r.opt<double>("observer_gain", w.observer_gain);
  const ojson& mods = r.node("modalities");
  if (!mods.is_array()) throw ConfigError("config: field 'world.modalities' must be an array");
  for (std::size_t i = 0; i < mods.size(); ++i) {
    FieldReader m(mods[i], "world.modalities[" + std::to_string(i) + "]");
    ModalityConfig mc;
    mc.name = m.req<std::string>("name");
    mc.obs_dim = m.req<std::size_t>("obs_dim");
    mc.nonlinearity = nonlinearity_from_string(m.opt<std::string>("nonlinearity", "tanh"));
    mc.obs_noise_scale = m.opt<double>("obs_noise_scale", mc.obs_noise_scale);
    mc.noise_dim = m.opt<std::size_t>("noise_dim", mc.noise_dim);
    mc.hub = m.opt<bool>("hub", false);
    m.finish();
    w.modalities.push_back(std::move(mc));
  }
  r.finish();
  return w;
}

TrainConfig parse_train(const ojson& j) {
  FieldReader r(j, "train");
  TrainConfig t;
  t.epochs = r.req<std::size_t>("epochs");
  t.steps_per_epoch = r.req<std::size_t>("steps_per_epoch");
  t.warmup_epochs = r.opt<std::size_t>("warmup_epochs", t.warmup_epochs);
  t.learning_rate = r.opt<double>("learning_rate", t.learning_rate);
  t.weight_decay = r.opt<double>("weight_decay", t.weight_decay);
  if (r.has("betas")) {
    const auto betas = r.req<std::vector<double>>("betas");
    if (betas.size() != 2) throw ConfigError("config: field 'train.betas' must hold two numbers");
    t.beta1 = betas[0];
    t.beta2 = betas[1];
  }
  t.grad_clip_norm = r.opt<double>("grad_clip_norm", t.grad_clip_norm);
  t.hub_frozen = r.opt<bool>("hub_frozen", t.hub_frozen);
  t.shared_temperature = r.opt<bool>("shared_temperature", t.shared_temperature);
  const ojson& pairs = r.node("pairs");
  if (!pairs.is_array()) throw ConfigError("config: field 'train.pairs' must be an array");
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const std::string path = "train.pairs[" + std::to_string(i) + "]";
    FieldReader p(pairs[i], path);
    PairConfig pc;
    pc.spoke = p.req<std::string>("spoke");
    pc.batch_size = p.opt<std::size_t>("batch_size", pc.batch_size);
    if (p.has("temperature")) pc.temperature = parse_temperature(p.node("temperature"), path + ".temperature");
    pc.replication_factor = p.opt<double>("replication_factor", pc.replication_factor);
    pc.infonce_weight = p.opt<double>("infonce_weight", pc.infonce_weight);
    pc.l2_weight = p.opt<double>("l2_weight", pc.l2_weight);
    pc.alignment = p.opt<double>("alignment", pc.alignment);
    p.finish();
    t.pairs.push_back(std::move(pc));
  }
  r.finish();
  return t;
}

EvalPlan parse_eval(const ojson& j) {
  FieldReader r(j, "eval");
  EvalPlan e;
  if (r.has("zero_shot")) e.zero_shot = parse_pairs(r.node("zero_shot"), "eval.zero_shot");
  e.n_per_class = r.opt<std::size_t>("n_per_class", e.n_per_class);
  e.prompts_per_class = r.opt<std::size_t>("prompts_per_class", e.prompts_per_class);
  if (r.has("retrieval")) {
    const ojson& arr = r.node("retrieval");
    if (!arr.is_array()) throw ConfigError("config: field 'eval.retrieval' must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      FieldReader x(arr[i], "eval.retrieval[" + std::to_string(i) + "]");
      e.retrieval.push_back({x.req<std::string>("query"), x.req<std::string>("index")});
      x.finish();
    }
  }
  e.retrieval_items = r.opt<std::size_t>("retrieval_items", e.retrieval_items);
  e.recall_ks = r.opt<std::vector<std::size_t>>("recall_ks", e.recall_ks);
  if (r.has("few_shot")) {
    FieldReader f(r.node("few_shot"), "eval.few_shot");
    e.few_shot_modalities = f.req<std::vector<std::string>>("modalities");
    e.few_shot_ks = f.opt<std::vector<std::size_t>>("ks", e.few_shot_ks);
    e.few_shot_eval_per_class = f.opt<std::size_t>("eval_per_class", e.few_shot_eval_per_class);
    f.finish();
  }
  if (r.has("arithmetic")) e.arithmetic = parse_pairs(r.node("arithmetic"), "eval.arithmetic");
  e.arithmetic_queries = r.opt<std::size_t>("arithmetic_queries", e.arithmetic_queries);
  if (r.has("ensemble")) {
    const ojson& arr = r.node("ensemble");
    if (!arr.is_array()) throw ConfigError("config: field 'eval.ensemble' must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      FieldReader x(arr[i], "eval.ensemble[" + std::to_string(i) + "]");
      EnsembleSpec s;
      s.query_a = x.req<std::string>("query_a");
      s.query_b = x.req<std::string>("query_b");
      s.index = x.req<std::string>("index");
      s.weights = x.opt<std::vector<double>>("weights", s.weights);
      x.finish();
      e.ensemble.push_back(std::move(s));
    }
  }
  if (r.has("probe")) {
    FieldReader p(r.node("probe"), "eval.probe");
    e.probe.iterations = p.opt<std::size_t>("iterations", e.probe.iterations);
    e.probe.learning_rate = p.opt<double>("learning_rate", e.probe.learning_rate);
    p.finish();
  }
  r.finish();
  return e;
}

}  // namespace

ArchMap ExperimentConfig::archs(const WorldSpec& world) const {
  ArchMap out;
  for (const auto& [name, spec] : encoders) {
    EncoderArch a;
    a.input_dim = world.find(name).obs_dim();
    a.hidden_widths = spec.hidden_widths;
    a.embed_dim = embed_dim;
    a.head = spec.head;
    a.activation = spec.activation;
    out.emplace(name, std::move(a));
  }
  return out;
}

ExperimentConfig parse_experiment(const ojson& j) {
  FieldReader r(j, "");
  ExperimentConfig c;
  c.seed = r.req<std::uint64_t>("seed");
  c.world = parse_world(r.node("world"));
  c.embed_dim = r.req<std::size_t>("embed_dim");
  {
    const ojson& encs = r.node("encoders");
    if (!encs.is_object()) throw ConfigError("config: field 'encoders' must be an object");
    for (const auto& [name, v] : encs.items()) {
      FieldReader e(v, "encoders." + name);
      EncoderSpec s;
      s.hidden_widths = e.opt<std::vector<std::size_t>>("hidden_widths", s.hidden_widths);
      s.head = head_from_string(e.opt<std::string>("head", "linear"));
      s.activation = activation_from_string(e.opt<std::string>("activation", "gelu"));
      e.finish();
      c.encoders.emplace(name, std::move(s));
    }
  }
  c.train = parse_train(r.node("train"));
  c.train.seed = c.seed;
  if (r.has("eval")) c.eval = parse_eval(r.node("eval"));
  r.finish();

  // Cross-field checks that do not need a materialized world.
  std::set<std::string> names;
  for (const auto& m : c.world.modalities) names.insert(m.name);
  for (const auto& [name, s] : c.encoders)
    if (!names.contains(name)) throw ConfigError("config: encoder for unknown modality '" + name + "'");
  for (const auto& m : c.world.modalities)
    if (!c.encoders.contains(m.name)) throw ConfigError("config: missing encoder for modality '" + m.name + "'");
  c.train.validate();

  // The world is cheap to build, so materialize it once to catch hub and
  // modality-name mistakes before anything starts training.
  const WorldSpec world = make_world(c.world, c.seed);
  for (const auto& p : c.train.pairs) {
    if (world.find(p.spoke).modality.id == world.hub_id) throw ConfigError("config: train pair spoke '" + p.spoke + "' is the hub");
  }
  c.eval.validate(world);
  return c;
}

ExperimentConfig load_experiment(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw ConfigError("config: '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_experiment(j);
}

ojson experiment_to_json(const ExperimentConfig& c) {
  ojson j;
  j["seed"] = c.seed;
  ojson w;
  w["latent_dim"] = c.world.latent_dim;
  w["num_classes"] = c.world.num_classes;
  w["within_class_scale"] = c.world.within_class_scale;
  w["class_mean_scale"] = c.world.class_mean_scale;
  w["observer_gain"] = c.world.observer_gain;
  ojson mods = ojson::array();
  for (const auto& m : c.world.modalities) {
    ojson o;
    o["name"] = m.name;
    o["obs_dim"] = m.obs_dim;
    o["nonlinearity"] = to_string(m.nonlinearity);
    o["obs_noise_scale"] = m.obs_noise_scale;
    o["noise_dim"] = m.noise_dim;
    o["hub"] = m.hub;
    mods.push_back(std::move(o));
  }
  w["modalities"] = std::move(mods);
  j["world"] = std::move(w);
  j["embed_dim"] = c.embed_dim;
  ojson encs = ojson::object();
  for (const auto& [name, s] : c.encoders) {
    ojson e;
    e["hidden_widths"] = s.hidden_widths;
    e["head"] = to_string(s.head);
    e["activation"] = to_string(s.activation);
    encs[name] = std::move(e);
  }
  j["encoders"] = std::move(encs);

  ojson t;
  t["epochs"] = c.train.epochs;
  t["steps_per_epoch"] = c.train.steps_per_epoch;
  t["warmup_epochs"] = c.train.warmup_epochs;
  t["learning_rate"] = c.train.learning_rate;
  t["weight_decay"] = c.train.weight_decay;
  t["betas"] = {c.train.beta1, c.train.beta2};
  t["grad_clip_norm"] = c.train.grad_clip_norm;
  t["hub_frozen"] = c.train.hub_frozen;
  t["shared_temperature"] = c.train.shared_temperature;
  ojson pairs = ojson::array();
  for (const auto& p : c.train.pairs) {
    ojson o;
    o["spoke"] = p.spoke;
    o["batch_size"] = p.batch_size;
    o["temperature"] = temperature_json(p.temperature);
    o["replication_factor"] = p.replication_factor;
    o["infonce_weight"] = p.infonce_weight;
    o["l2_weight"] = p.l2_weight;
    o["alignment"] = p.alignment;
    pairs.push_back(std::move(o));
  }
  t["pairs"] = std::move(pairs);
  j["train"] = std::move(t);

  const EvalPlan& e = c.eval;
  ojson ev;
  ev["zero_shot"] = pairs_json(e.zero_shot);
  ev["n_per_class"] = e.n_per_class;
  ev["prompts_per_class"] = e.prompts_per_class;
  ojson ret = ojson::array();
  for (const auto& r : e.retrieval) ret.push_back({{"query", r.query}, {"index", r.index}});
  ev["retrieval"] = std::move(ret);
  ev["retrieval_items"] = e.retrieval_items;
  ev["recall_ks"] = e.recall_ks;
  ev["few_shot"] = {{"modalities", e.few_shot_modalities},
                    {"ks", e.few_shot_ks},
                    {"eval_per_class", e.few_shot_eval_per_class}};
  ev["arithmetic"] = pairs_json(e.arithmetic);
  ev["arithmetic_queries"] = e.arithmetic_queries;
  ojson ens = ojson::array();
  for (const auto& s : e.ensemble)
    ens.push_back({{"query_a", s.query_a}, {"query_b", s.query_b}, {"index", s.index}, {"weights", s.weights}});
  ev["ensemble"] = std::move(ens);
  ev["probe"] = {{"iterations", e.probe.iterations}, {"learning_rate", e.probe.learning_rate}};
  j["eval"] = std::move(ev);
  return j;
}

std::string config_hash(const ExperimentConfig& config) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(fnv1a64(experiment_to_json(config).dump())));
  return buf;
}

ExperimentConfig with_seed(ExperimentConfig config, std::uint64_t seed) {
  config.seed = seed;
  config.train.seed = seed;
  return config;
}

MetricsReport evaluate_experiment(const ExperimentConfig& config, const WorldSpec& world,
                                  const EncoderMap& encoders) {
  MetricsReport rep = run_eval_plan(world, encoders, config.eval, trained_pairs(world, config.train));
  rep.set_meta("config_hash", config_hash(config));
  rep.set_meta("seed", std::to_string(config.seed));
  return rep;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  ExperimentResult r;
  r.world = make_world(config.world, config.seed);
  TrainResult tr = train_run(r.world, config.archs(r.world), config.train);
  r.state = std::move(tr.state);
  r.report = std::move(tr.report);
  r.report.merge(evaluate_experiment(config, r.world, r.state.encoders));
  return r;
}

ExperimentConfig desk_config() {
  ExperimentConfig c;
  c.seed = 0;
  c.world = WorldConfig::desk_default();
  c.embed_dim = 32;
  for (const auto& m : c.world.modalities) c.encoders[m.name] = EncoderSpec{};
  c.train.epochs = 30;
  c.train.steps_per_epoch = 60;
  PairConfig t;
  t.spoke = "T";
  PairConfig m1;
  m1.spoke = "M1";
  c.train.pairs = {t, m1};
  c.eval.zero_shot = {{"M1", "T"}, {"T", "M1"}, {"M1", "M1"}, {"M1", "hub"}};
  c.eval.few_shot_modalities = {"M1"};
  return c;
}

}  // namespace hubbind
