#include "hubbind/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <optional>

#include "hubbind/errors.hpp"
#include "hubbind/random.hpp"

namespace hubbind {

namespace {

constexpr int kCheckpointVersion = 1;

std::uint64_t encoder_seed(std::uint64_t seed, std::string_view name) {
  return mix64(seed ^ fnv1a64(name));
}

std::size_t ceil_div(std::size_t a, std::size_t b) { return (a + b - 1) / b; }

std::size_t pool_size(const TrainConfig& config, const PairConfig& pair) {
  const std::size_t steps_per_pair = ceil_div(config.steps_per_epoch, config.pairs.size());
  const double samples = static_cast<double>(steps_per_pair * pair.batch_size);
  const auto pool = static_cast<std::size_t>(std::ceil(samples / pair.replication_factor));
  return std::max(pool, pair.batch_size);
}

PairBatch make_pool(const WorldSpec& world, const TrainConfig& config, const PairConfig& pair) {
  RngStream stream = world.train_stream("pool/" + pair.spoke);
  return sample_pair_batch(world, world.find(pair.spoke).modality, pool_size(config, pair), stream,
                           pair.alignment);
}

PairBatch select_rows(const PairBatch& src, const std::vector<std::size_t>& rows) {
  auto pick = [&](const Matrix& m) {
    Matrix out(rows.size(), m.cols());
    for (std::size_t i = 0; i < rows.size(); ++i) std::ranges::copy(m.row(rows[i]), out.row(i).begin());
    return out;
  };
  PairBatch b;
  b.spoke = src.spoke;
  b.hub_obs = pick(src.hub_obs);
  b.spoke_obs = pick(src.spoke_obs);
  b.hub_latents = pick(src.hub_latents);
  b.spoke_latents = pick(src.spoke_latents);
  b.hub_noise = pick(src.hub_noise);
  b.spoke_noise = pick(src.spoke_noise);
  for (std::size_t r : rows) b.class_labels.push_back(src.class_labels[r]);
  return b;
}

/// Rows of the pool visited by a pair's k-th batch. The pool is traversed in
/// passes, each pass a fresh permutation.
std::vector<std::size_t> pool_rows(const WorldSpec& world, const PairConfig& pair,
                                   std::size_t pool, std::size_t pair_step) {
  std::vector<std::size_t> rows;
  rows.reserve(pair.batch_size);
  std::optional<std::size_t> cached_pass;
  std::vector<std::size_t> perm(pool);
  for (std::size_t t = pair_step * pair.batch_size; rows.size() < pair.batch_size; ++t) {
    const std::size_t pass = t / pool;
    if (cached_pass != pass) {
      std::iota(perm.begin(), perm.end(), std::size_t{0});
      RngStream s = world.train_stream("pool/" + pair.spoke + "/pass/" + std::to_string(pass));
      for (std::size_t i = pool; i > 1; --i) std::swap(perm[i - 1], perm[s.index(i)]);
      cached_pass = pass;
    }
    rows.push_back(perm[t % pool]);
  }
  return rows;
}

PairBatch fresh_batch(const WorldSpec& world, const PairConfig& pair, std::size_t pair_step) {
  RngStream stream = world.train_stream("pair/" + pair.spoke + "/" + std::to_string(pair_step));
  return sample_pair_batch(world, world.find(pair.spoke).modality, pair.batch_size, stream,
                           pair.alignment, (pair_step * pair.batch_size) % world.num_classes);
}

void apply_adamw(EncoderParams& params, const EncoderGrads& grads, Moments& moments,
                 const AdamWConfig& opt) {
  std::vector<double> flat = flatten(params.layers);
  const std::vector<double> g = flatten(grads.layers);
  adamw_step(flat, g, moments, opt);
  unflatten(params.layers, flat);
}

void validate_against_world(const WorldSpec& world, const ArchMap& archs,
                            const TrainConfig& config) {
  config.validate();
  const std::string& hub = world.hub().modality.name;
  if (!archs.contains(hub)) throw ConfigError("no encoder arch for hub modality '" + hub + "'");
  std::optional<std::size_t> embed;
  for (const auto& [name, arch] : archs) {
    const auto& obs = world.find(name);
    if (arch.input_dim != obs.obs_dim()) {
      throw ConfigError("encoder '" + name + "' input_dim " + std::to_string(arch.input_dim) +
                        " != observation dim " + std::to_string(obs.obs_dim()));
    }
    if (embed && *embed != arch.embed_dim)
      throw ConfigError("all encoders must share one embed_dim");
    embed = arch.embed_dim;
    arch.validate();
  }
  for (const auto& p : config.pairs) {
    const auto& obs = world.find(p.spoke);
    if (obs.modality.id == world.hub_id) throw ConfigError("pair spoke must not be the hub");
    if (!archs.contains(p.spoke)) throw ConfigError("no encoder arch for spoke '" + p.spoke + "'");
  }
}

ojson moments_to_json(const Moments& m) {
  ojson j;
  j["step"] = m.step;
  j["first"] = m.first;
  j["second"] = m.second;
  return j;
}

Moments moments_from_json(const ojson& j) {
  Moments m;
  m.step = j.at("step").get<std::size_t>();
  m.first = j.at("first").get<std::vector<double>>();
  m.second = j.at("second").get<std::vector<double>>();
  if (m.first.size() != m.second.size()) throw IoError("checkpoint: moment buffers differ in size");
  return m;
}

ojson temperature_to_json(const TemperatureParam& t) {
  ojson j;
  j["mode"] = t.is_learnable() ? "learnable" : "fixed";
  j["log_tau"] = t.log_tau();
  j["clamp_min"] = t.clamp_min();
  j["clamp_max"] = t.clamp_max();
  return j;
}

TemperatureParam temperature_from_json(const ojson& j) {
  const auto mode = j.at("mode").get<std::string>();
  if (mode != "fixed" && mode != "learnable")
    throw IoError("checkpoint: unknown temperature mode '" + mode + "'");
  return TemperatureParam::restore(
      mode == "fixed" ? TemperatureParam::Mode::kFixed : TemperatureParam::Mode::kLearnable,
      j.at("log_tau").get<double>(), j.at("clamp_min").get<double>(),
      j.at("clamp_max").get<double>());
}

}  // namespace

void TrainConfig::validate() const {
  if (pairs.empty()) throw ConfigError("train: at least one pair is required");
  if (steps_per_epoch == 0) throw ConfigError("train: steps_per_epoch must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("train: learning_rate must be > 0");
  if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("train: betas must lie in [0, 1)");
  if (!(grad_clip_norm > 0.0)) throw ConfigError("train: grad_clip_norm must be > 0");
  for (const auto& p : pairs) {
    if (p.batch_size == 0) throw ConfigError("train: batch_size must be >= 1");
    if (!(p.replication_factor >= 1.0)) throw ConfigError("train: replication_factor must be >= 1");
    if (p.infonce_weight < 0.0 || p.l2_weight < 0.0)
      throw ConfigError("train: loss weights must be >= 0");
    if (p.infonce_weight == 0.0 && p.l2_weight == 0.0)
      throw ConfigError("train: pair '" + p.spoke + "' has no active loss");
    if (!(p.alignment >= 0.0 && p.alignment <= 1.0))
      throw ConfigError("train: alignment must lie in [0, 1]");
  }
}

const EncoderParams& TrainState::encoder(std::string_view name) const {
  auto it = encoders.find(name);
  if (it == encoders.end()) throw ConfigError("no encoder for modality '" + std::string(name) + "'");
  return it->second;
}

TrainState init_state(const WorldSpec& world, const ArchMap& archs, const TrainConfig& config,
                      const EncoderMap& preset) {
  validate_against_world(world, archs, config);
  TrainState state;
  const std::string& hub = world.hub().modality.name;
  for (const auto& [name, arch] : archs) {
    EncoderParams p = init_encoder(arch, encoder_seed(config.seed, name));
    if (auto it = preset.find(name); it != preset.end()) {
      if (it->second.arch.input_dim != arch.input_dim || it->second.arch.embed_dim != arch.embed_dim)
        throw ConfigError("preset encoder '" + name + "' does not fit the world/embedding");
      p = it->second;
    }
    p.frozen = (name == hub) && config.hub_frozen;
    state.moments.emplace(name, Moments(parameter_count(p)));
    state.encoders.emplace(name, std::move(p));
  }
  for (const auto& [name, params] : preset) {
    if (!state.encoders.contains(name))
      throw ConfigError("preset encoder '" + name + "' has no arch entry");
  }
  const std::size_t n_temps = config.shared_temperature ? 1 : config.pairs.size();
  for (std::size_t i = 0; i < n_temps; ++i) {
    state.temperatures.push_back(config.pairs[i].temperature);
    state.temperature_moments.emplace_back(1);
  }
  return state;
}

PairBatch pair_batch_for_step(const WorldSpec& world, const TrainConfig& config,
                              std::size_t pair_index, std::size_t pair_step) {
  const PairConfig& pair = config.pairs.at(pair_index);
  if (pair.replication_factor <= 1.0) return fresh_batch(world, pair, pair_step);
  const PairBatch pool = make_pool(world, config, pair);
  return select_rows(pool, pool_rows(world, pair, pool.size(), pair_step));
}

void train_steps(TrainState& state, const WorldSpec& world, const TrainConfig& config,
                 std::size_t num_steps) {
  config.validate();
  const std::string& hub_name = world.hub().modality.name;
  const std::size_t num_pairs = config.pairs.size();
  const std::size_t end = std::min(config.total_steps(), state.step + num_steps);
  const std::size_t warmup_steps = config.warmup_epochs * config.steps_per_epoch;

  std::vector<std::optional<PairBatch>> pools(num_pairs);
  for (std::size_t p = 0; p < num_pairs; ++p)
    if (config.pairs[p].replication_factor > 1.0) pools[p] = make_pool(world, config, config.pairs[p]);

  auto enc_it = [&](const std::string& name) {
    auto it = state.encoders.find(name);
    if (it == state.encoders.end()) throw ConfigError("state has no encoder for '" + name + "'");
    return it;
  };

  while (state.step < end) {
    const std::size_t step = state.step;
    const std::size_t pi = step % num_pairs;
    const std::size_t pair_step = step / num_pairs;
    const PairConfig& pair = config.pairs[pi];
    const std::size_t ti = config.shared_temperature ? 0 : pi;
    TemperatureParam& temp = state.temperatures.at(ti);

    const PairBatch batch = pools[pi] ? select_rows(*pools[pi], pool_rows(world, pair, pools[pi]->size(), pair_step))
                                      : fresh_batch(world, pair, pair_step);
    const PairView view = batch.training_view();

    EncoderParams& hub = enc_it(hub_name)->second;
    EncoderParams& spoke = enc_it(pair.spoke)->second;
    const Encoded eq = encode(hub, view.hub_obs);
    const Encoded ek = encode(spoke, view.spoke_obs);

    LossOutput total;
    if (pair.infonce_weight > 0.0)
      total = accumulate(std::move(total), symmetric_info_nce(eq.embeddings, ek.embeddings, temp),
                         pair.infonce_weight);
    if (pair.l2_weight > 0.0)
      total = accumulate(std::move(total), l2_regression_loss(eq.embeddings, ek.embeddings),
                         pair.l2_weight);
    if (!std::isfinite(total.loss))
      throw NumericError("training diverged: non-finite loss at step " + std::to_string(step));

    EncoderGrads hub_grads = encode_backward(hub, eq.cache, total.grad_q);
    EncoderGrads spoke_grads = encode_backward(spoke, ek.cache, total.grad_k);
    double grad_log_tau = total.grad_log_tau;

    std::vector<std::span<double>> blocks;
    auto add_blocks = [&](EncoderGrads& g) {
      for (auto& l : g.layers) {
        blocks.push_back(l.weight.flat());
        blocks.push_back(l.bias.flat());
      }
    };
    if (!hub.frozen) add_blocks(hub_grads);
    if (!spoke.frozen) add_blocks(spoke_grads);
    if (temp.is_learnable()) blocks.emplace_back(&grad_log_tau, 1);
    clip_global_norm(blocks, config.grad_clip_norm);

    AdamWConfig opt;
    opt.learning_rate = config.learning_rate;
    if (warmup_steps > 0)
      opt.learning_rate *= std::min(1.0, static_cast<double>(step + 1) / static_cast<double>(warmup_steps));
    opt.beta1 = config.beta1;
    opt.beta2 = config.beta2;
    opt.weight_decay = config.weight_decay;

    if (!hub.frozen) apply_adamw(hub, hub_grads, state.moments.at(hub_name), opt);
    if (!spoke.frozen) apply_adamw(spoke, spoke_grads, state.moments.at(pair.spoke), opt);
    const double tau_used = temp.value();
    if (temp.is_learnable()) {
      AdamWConfig topt = opt;
      topt.weight_decay = 0.0;
      double log_tau = temp.log_tau();
      adamw_step(std::span<double>(&log_tau, 1), std::span<const double>(&grad_log_tau, 1),
                 state.temperature_moments.at(ti), topt);
      temp.set_log_tau(log_tau);
    }

    state.history.push_back({step, pair.spoke, total.loss, tau_used});
    ++state.step;
  }
}

TrainResult train_run(const WorldSpec& world, const ArchMap& archs, const TrainConfig& config,
                      const EncoderMap& preset) {
  TrainResult r{init_state(world, archs, config, preset), {}};
  train_steps(r.state, world, config, config.total_steps());
  r.report = summarize_training(r.state, config);
  return r;
}

MetricsReport summarize_training(const TrainState& state, const TrainConfig& config) {
  MetricsReport rep;
  rep.set("train.steps", static_cast<double>(state.step));
  for (std::size_t p = 0; p < config.pairs.size(); ++p) {
    const std::string& spoke = config.pairs[p].spoke;
    const std::string key = "train." + spoke + ".";
    std::vector<const LossRecord*> recs;
    for (const auto& r : state.history)
      if (r.spoke == spoke) recs.push_back(&r);
    rep.set(key + "steps", static_cast<double>(recs.size()));
    if (recs.empty()) continue;
    rep.set(key + "loss_first", recs.front()->loss);
    rep.set(key + "loss_last", recs.back()->loss);
    rep.set(key + "tau_last", state.temperatures.at(config.shared_temperature ? 0 : p).value());
    const std::size_t first_epoch = recs.front()->step / config.steps_per_epoch;
    const std::size_t last_epoch = recs.back()->step / config.steps_per_epoch;
    double s_first = 0, s_last = 0;
    std::size_t n_first = 0, n_last = 0;
    for (const auto* r : recs) {
      const std::size_t e = r->step / config.steps_per_epoch;
      if (e == first_epoch) s_first += r->loss, ++n_first;
      if (e == last_epoch) s_last += r->loss, ++n_last;
    }
    rep.set(key + "epoch_first_mean", s_first / static_cast<double>(n_first));
    rep.set(key + "epoch_last_mean", s_last / static_cast<double>(n_last));
  }
  return rep;
}

std::string history_csv(const TrainState& state) {
  std::string out = "step,pair,loss,tau\n";
  for (const auto& r : state.history) {
    out += std::to_string(r.step) + "," + r.spoke + "," + format_double(r.loss) + "," +
           format_double(r.tau) + "\n";
  }
  return out;
}

ojson arch_to_json(const EncoderArch& arch) {
  ojson j;
  j["input_dim"] = arch.input_dim;
  j["hidden_widths"] = arch.hidden_widths;
  j["embed_dim"] = arch.embed_dim;
  j["head"] = to_string(arch.head);
  j["activation"] = to_string(arch.activation);
  return j;
}

EncoderArch arch_from_json(const ojson& j) {
  EncoderArch a;
  a.input_dim = j.at("input_dim").get<std::size_t>();
  a.hidden_widths = j.at("hidden_widths").get<std::vector<std::size_t>>();
  a.embed_dim = j.at("embed_dim").get<std::size_t>();
  a.head = head_from_string(j.at("head").get<std::string>());
  a.activation = activation_from_string(j.at("activation").get<std::string>());
  return a;
}

void save_checkpoint(const TrainState& state, const std::filesystem::path& path,
                     const ojson& context) {
  ojson j;
  j["format"] = "hubbind.checkpoint";
  j["version"] = kCheckpointVersion;
  j["step"] = state.step;
  ojson encs = ojson::object();
  for (const auto& [name, p] : state.encoders) {
    ojson e;
    e["arch"] = arch_to_json(p.arch);
    e["frozen"] = p.frozen;
    e["params"] = flatten(p.layers);
    e["moments"] = moments_to_json(state.moments.at(name));
    encs[name] = std::move(e);
  }
  j["encoders"] = std::move(encs);
  ojson temps = ojson::array();
  for (std::size_t i = 0; i < state.temperatures.size(); ++i) {
    ojson t = temperature_to_json(state.temperatures[i]);
    t["moments"] = moments_to_json(state.temperature_moments.at(i));
    temps.push_back(std::move(t));
  }
  j["temperatures"] = std::move(temps);
  ojson hist = ojson::array();
  for (const auto& r : state.history) hist.push_back({r.step, r.spoke, r.loss, r.tau});
  j["history"] = std::move(hist);
  j["context"] = context;
  write_text_file(path, j.dump() + "\n");
}

TrainState load_checkpoint(const std::filesystem::path& path, ojson* context) {
  const ojson j = parse_json(read_text_file(path), "checkpoint");
  require_format(j, "hubbind.checkpoint", kCheckpointVersion);
  try {
    TrainState s;
    s.step = j.at("step").get<std::size_t>();
    for (const auto& [name, e] : j.at("encoders").items()) {
      EncoderParams p = init_encoder(arch_from_json(e.at("arch")), 0);
      p.frozen = e.at("frozen").get<bool>();
      const auto flat = e.at("params").get<std::vector<double>>();
      if (flat.size() != parameter_count(p))
        throw IoError("checkpoint: encoder '" + name + "' has " + std::to_string(flat.size()) +
                      " parameters, arch needs " + std::to_string(parameter_count(p)));
      unflatten(p.layers, flat);
      Moments m = moments_from_json(e.at("moments"));
      if (m.first.size() != flat.size())
        throw IoError("checkpoint: moment buffers of '" + name + "' do not match parameters");
      s.moments.emplace(name, std::move(m));
      s.encoders.emplace(name, std::move(p));
    }
    for (const auto& t : j.at("temperatures")) {
      s.temperatures.push_back(temperature_from_json(t));
      s.temperature_moments.push_back(moments_from_json(t.at("moments")));
    }
    for (const auto& r : j.at("history")) {
      s.history.push_back({r.at(0).get<std::size_t>(), r.at(1).get<std::string>(),
                           r.at(2).get<double>(), r.at(3).get<double>()});
    }
    if (context) *context = j.at("context");
    return s;
  } catch (const ojson::exception& e) {
    throw IoError(std::string("checkpoint: malformed: ") + e.what());
  } catch (const ShapeError& e) {
    throw IoError(std::string("checkpoint: corrupt: ") + e.what());
  }
}

TrainState load_checkpoint(const std::filesystem::path& path, const ArchMap& expected,
                           ojson* context) {
  TrainState s = load_checkpoint(path, context);
  for (const auto& [name, arch] : expected) {
    auto it = s.encoders.find(name);
    if (it == s.encoders.end())
      throw ConfigError("checkpoint has no encoder for '" + name + "'");
    if (!(it->second.arch == arch))
      throw ConfigError("checkpoint encoder '" + name + "' arch does not match the expected arch");
  }
  return s;
}

}  // namespace hubbind
