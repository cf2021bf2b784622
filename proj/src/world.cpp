#include "hubbind/world.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "hubbind/errors.hpp"
#include "hubbind/json_io.hpp"

namespace hubbind {

namespace {

constexpr int kWorldFormatVersion = 1;
constexpr int kMaxSeparabilityAttempts = 16;

double min_pairwise_distance(const Matrix& means) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t a = 0; a < means.rows(); ++a) {
    for (std::size_t b = a + 1; b < means.rows(); ++b) {
      double s = 0.0;
      for (std::size_t j = 0; j < means.cols(); ++j) {
        const double d = means(a, j) - means(b, j);
        s += d * d;
      }
      best = std::min(best, std::sqrt(s));
    }
  }
  return best;
}

Matrix apply_nonlinearity(Nonlinearity n, const Matrix& x) {
  switch (n) {
    case Nonlinearity::kTanh:
      return tanh_forward(x);
    case Nonlinearity::kGelu:
      return gelu_forward(x);
    case Nonlinearity::kIdentity:
      return x;
  }
  return x;
}

void require_namespace(const RngStream& stream, std::string_view prefix, const char* op) {
  if (stream.name().rfind(prefix, 0) != 0) {
    throw ConfigError(std::string(op) + ": stream '" + stream.name() + "' is not in the '" +
                      std::string(prefix) + "' namespace");
  }
}

/// Latent rows for the given classes: mean + scale * noise.
Matrix latents_for(const WorldSpec& world, const std::vector<int>& classes, const Matrix& noise,
                   double scale) {
  Matrix z(classes.size(), world.latent_dim);
  for (std::size_t i = 0; i < classes.size(); ++i) {
    auto mean = world.class_means.row(static_cast<std::size_t>(classes[i]));
    for (std::size_t j = 0; j < world.latent_dim; ++j) z(i, j) = mean[j] + scale * noise(i, j);
  }
  return z;
}

}  // namespace

std::string to_string(Nonlinearity n) {
  switch (n) {
    case Nonlinearity::kTanh:
      return "tanh";
    case Nonlinearity::kGelu:
      return "gelu";
    case Nonlinearity::kIdentity:
      return "identity";
  }
  return "?";
}

Nonlinearity nonlinearity_from_string(std::string_view s) {
  if (s == "tanh") return Nonlinearity::kTanh;
  if (s == "gelu") return Nonlinearity::kGelu;
  if (s == "identity") return Nonlinearity::kIdentity;
  throw ConfigError("unknown nonlinearity '" + std::string(s) + "'");
}

Matrix ModalityObserver::observe_clean(const Matrix& latents) const {
  return apply_nonlinearity(nonlinearity, add_row_broadcast(matmul_nt(latents, weight), bias));
}

Matrix ModalityObserver::observe(const Matrix& latents, const Matrix& noise) const {
  Matrix obs = observe_clean(latents);
  if (noise.rows() != obs.rows() || noise.cols() != noise_dim()) {
    throw ShapeError("observe: noise " + noise.shape_str() + " does not fit " +
                     std::to_string(obs.rows()) + " rows of noise_dim " +
                     std::to_string(noise_dim()));
  }
  const Matrix nuisance = matmul_nt(noise, noise_basis);
  for (std::size_t i = 0; i < obs.size(); ++i) obs.flat()[i] += obs_noise_scale * nuisance.flat()[i];
  return obs;
}

WorldConfig WorldConfig::desk_default() {
  WorldConfig c;
  c.modalities = {
      {"hub", 32, Nonlinearity::kTanh, 0.05, 0, true},
      {"T", 24, Nonlinearity::kTanh, 0.02, 0, false},
      // The sensor-like spokes carry a strong rank-4 private nuisance that only
      // hub alignment teaches an encoder to discard.
      {"M1", 20, Nonlinearity::kTanh, 2.0, 4, false},
      {"M2", 16, Nonlinearity::kTanh, 2.0, 4, false},
  };
  return c;
}

const ModalityObserver& WorldSpec::find(std::string_view name) const {
  for (const auto& m : modalities)
    if (m.modality.name == name) return m;
  throw ConfigError("unknown modality '" + std::string(name) + "'");
}

const ModalityObserver& WorldSpec::get(const ModalityId& id) const {
  if (id.id < 0 || static_cast<std::size_t>(id.id) >= modalities.size() ||
      modalities[static_cast<std::size_t>(id.id)].modality.name != id.name) {
    throw ConfigError("unknown modality '" + id.name + "' (id " + std::to_string(id.id) + ")");
  }
  return modalities[static_cast<std::size_t>(id.id)];
}

bool WorldSpec::has(std::string_view name) const noexcept {
  return std::any_of(modalities.begin(), modalities.end(),
                     [&](const ModalityObserver& m) { return m.modality.name == name; });
}

RngStream WorldSpec::train_stream(std::string_view name) const {
  return RngStream(seed, "train/" + std::string(name));
}

RngStream WorldSpec::eval_stream(std::string_view name) const {
  return RngStream(seed, "eval/" + std::string(name));
}

WorldSpec make_world(const WorldConfig& config, std::uint64_t seed) {
  if (config.latent_dim < 2) throw ConfigError("make_world: latent_dim must be >= 2");
  if (config.num_classes < 2) throw ConfigError("make_world: num_classes must be >= 2");
  if (!(config.within_class_scale > 0.0))
    throw ConfigError("make_world: within_class_scale must be > 0");
  if (!(config.class_mean_scale > 0.0))
    throw ConfigError("make_world: class_mean_scale must be > 0");
  if (config.modalities.size() < 2) throw ConfigError("make_world: need at least 2 modalities");
  const auto hubs = std::count_if(config.modalities.begin(), config.modalities.end(),
                                  [](const ModalityConfig& m) { return m.hub; });
  if (hubs != 1) throw ConfigError("make_world: exactly one modality must be the hub");

  WorldSpec world;
  world.latent_dim = config.latent_dim;
  world.num_classes = config.num_classes;
  world.within_class_scale = config.within_class_scale;
  world.seed = seed;

  const double required = 4.0 * config.within_class_scale;
  bool separated = false;
  for (int attempt = 0; attempt < kMaxSeparabilityAttempts && !separated; ++attempt) {
    RngStream means_stream(seed, "world/class_means/" + std::to_string(attempt));
    Matrix means =
        means_stream.normal_matrix(config.num_classes, config.latent_dim, config.class_mean_scale);
    const double d = min_pairwise_distance(means);
    if (!(d > 0.0) || !std::isfinite(d)) continue;
    if (d < required) means = scale(means, required / d);
    // Rounding in the rescale can land a hair under the bound.
    if (min_pairwise_distance(means) < required) means = scale(means, 1.0 + 1e-12);
    if (min_pairwise_distance(means) >= required) {
      world.class_means = std::move(means);
      separated = true;
    }
  }
  if (!separated) throw NumericError("make_world: could not satisfy class separability");

  std::vector<std::string> seen;
  for (std::size_t i = 0; i < config.modalities.size(); ++i) {
    const auto& mc = config.modalities[i];
    if (mc.name.empty()) throw ConfigError("make_world: modality name must be non-empty");
    if (std::find(seen.begin(), seen.end(), mc.name) != seen.end())
      throw ConfigError("make_world: duplicate modality '" + mc.name + "'");
    seen.push_back(mc.name);
    if (mc.obs_dim == 0) throw ConfigError("make_world: obs_dim must be >= 1");
    if (mc.obs_noise_scale < 0.0) throw ConfigError("make_world: obs_noise_scale must be >= 0");

    RngStream obs_stream(seed, "world/observer/" + mc.name);
    ModalityObserver obs;
    obs.modality = {static_cast<int>(i), mc.name};
    obs.weight = obs_stream.normal_matrix(
        mc.obs_dim, config.latent_dim,
        config.observer_gain / std::sqrt(static_cast<double>(config.latent_dim)));
    obs.bias = obs_stream.normal_matrix(1, mc.obs_dim, 0.1);
    if (mc.noise_dim == 0 || mc.noise_dim >= mc.obs_dim) {
      obs.noise_basis = Matrix::identity(mc.obs_dim);
    } else {
      obs.noise_basis = l2_normalize_rows(obs_stream.normal_matrix(mc.noise_dim, mc.obs_dim));
      obs.noise_basis = transpose(obs.noise_basis);
    }
    obs.nonlinearity = mc.nonlinearity;
    obs.obs_noise_scale = mc.obs_noise_scale;
    world.modalities.push_back(std::move(obs));
    if (mc.hub) world.hub_id = static_cast<int>(i);
  }
  return world;
}

std::string world_to_json(const WorldSpec& world) {
  ojson j;
  j["format"] = "hubbind.world";
  j["version"] = kWorldFormatVersion;
  j["seed"] = world.seed;
  j["latent_dim"] = world.latent_dim;
  j["num_classes"] = world.num_classes;
  j["within_class_scale"] = world.within_class_scale;
  j["hub"] = world.hub().modality.name;
  j["class_means"] = matrix_to_json(world.class_means);
  ojson mods = ojson::array();
  for (const auto& m : world.modalities) {
    ojson o;
    o["name"] = m.modality.name;
    o["id"] = m.modality.id;
    o["nonlinearity"] = to_string(m.nonlinearity);
    o["obs_noise_scale"] = m.obs_noise_scale;
    o["weight"] = matrix_to_json(m.weight);
    o["bias"] = matrix_to_json(m.bias);
    o["noise_basis"] = matrix_to_json(m.noise_basis);
    mods.push_back(std::move(o));
  }
  j["modalities"] = std::move(mods);
  return j.dump(1);
}

WorldSpec world_from_json(std::string_view text) {
  const ojson j = parse_json(text, "world");
  require_format(j, "hubbind.world", kWorldFormatVersion);
  try {
    WorldSpec w;
    w.seed = j.at("seed").get<std::uint64_t>();
    w.latent_dim = j.at("latent_dim").get<std::size_t>();
    w.num_classes = j.at("num_classes").get<std::size_t>();
    w.within_class_scale = j.at("within_class_scale").get<double>();
    w.class_means = matrix_from_json(j.at("class_means"));
    const auto hub = j.at("hub").get<std::string>();
    for (const auto& o : j.at("modalities")) {
      ModalityObserver m;
      m.modality = {o.at("id").get<int>(), o.at("name").get<std::string>()};
      m.nonlinearity = nonlinearity_from_string(o.at("nonlinearity").get<std::string>());
      m.obs_noise_scale = o.at("obs_noise_scale").get<double>();
      m.weight = matrix_from_json(o.at("weight"));
      m.bias = matrix_from_json(o.at("bias"));
      m.noise_basis = matrix_from_json(o.at("noise_basis"));
      if (m.weight.cols() != w.latent_dim || m.bias.cols() != m.weight.rows() ||
          m.noise_basis.rows() != m.weight.rows())
        throw IoError("world: observer '" + m.modality.name + "' has inconsistent shapes");
      if (m.modality.id != static_cast<int>(w.modalities.size()))
        throw IoError("world: modality ids must be consecutive");
      if (m.modality.name == hub) w.hub_id = m.modality.id;
      w.modalities.push_back(std::move(m));
    }
    if (!w.has(hub)) throw IoError("world: hub modality '" + hub + "' not listed");
    if (w.class_means.rows() != w.num_classes || w.class_means.cols() != w.latent_dim)
      throw IoError("world: class_means shape does not match header");
    return w;
  } catch (const ojson::exception& e) {
    throw IoError(std::string("world: malformed document: ") + e.what());
  }
}

PairBatch sample_pair_batch(const WorldSpec& world, const ModalityId& spoke, std::size_t n,
                            RngStream& stream, double alignment, std::size_t class_offset) {
  require_namespace(stream, "train/", "sample_pair_batch");
  const auto& spoke_obs = world.get(spoke);
  if (spoke.id == world.hub_id) throw ConfigError("sample_pair_batch: spoke must not be the hub");
  if (n == 0) throw ConfigError("sample_pair_batch: n must be >= 1");
  if (!(alignment >= 0.0 && alignment <= 1.0))
    throw ConfigError("sample_pair_batch: alignment must lie in [0, 1]");

  PairBatch b;
  b.spoke = spoke;
  b.class_labels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    b.class_labels[i] = static_cast<int>((class_offset + i) % world.num_classes);

  const Matrix eps = stream.normal_matrix(n, world.latent_dim);
  b.hub_latents = latents_for(world, b.class_labels, eps, world.within_class_scale);
  if (alignment == 1.0) {
    b.spoke_latents = b.hub_latents;
  } else {
    const Matrix fresh = stream.normal_matrix(n, world.latent_dim);
    const double c = std::sqrt(1.0 - alignment * alignment);
    Matrix mixed = add(scale(eps, alignment), scale(fresh, c));
    b.spoke_latents = latents_for(world, b.class_labels, mixed, world.within_class_scale);
  }
  b.hub_noise = stream.normal_matrix(n, world.hub().noise_dim());
  b.spoke_noise = stream.normal_matrix(n, spoke_obs.noise_dim());
  b.hub_obs = world.hub().observe(b.hub_latents, b.hub_noise);
  b.spoke_obs = spoke_obs.observe(b.spoke_latents, b.spoke_noise);
  return b;
}

PromptSet class_prototypes(const WorldSpec& world, const ModalityId& modality, std::size_t P,
                           RngStream& stream, std::optional<double> latent_noise) {
  if (P == 0) throw ConfigError("class_prototypes: P must be >= 1");
  const auto& obs = world.get(modality);
  const double noise_scale = latent_noise.value_or(world.within_class_scale / 4.0);

  PromptSet out;
  out.classes.reserve(world.num_classes * P);
  for (std::size_t c = 0; c < world.num_classes; ++c)
    for (std::size_t p = 0; p < P; ++p) out.classes.push_back(static_cast<int>(c));

  const Matrix eps = stream.normal_matrix(out.classes.size(), world.latent_dim);
  const Matrix z = latents_for(world, out.classes, eps, noise_scale);
  out.obs = obs.observe(z, stream.normal_matrix(z.rows(), obs.noise_dim()));
  return out;
}

LabeledEvalSet make_eval_set(const WorldSpec& world, const ModalityId& modality,
                             std::size_t n_per_class, const RngStream& stream) {
  require_namespace(stream, "eval/", "make_eval_set");
  if (n_per_class == 0) throw ConfigError("make_eval_set: n_per_class must be >= 1");
  const auto& obs = world.get(modality);
  const std::size_t n = n_per_class * world.num_classes;

  LabeledEvalSet set;
  set.modality = modality;
  set.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) set.labels[i] = static_cast<int>(i % world.num_classes);

  RngStream latent_stream = stream.child("latent");
  RngStream noise_stream = stream.child("noise/" + modality.name);
  const Matrix eps = latent_stream.normal_matrix(n, world.latent_dim);
  set.latents = latents_for(world, set.labels, eps, world.within_class_scale);
  set.obs = obs.observe(set.latents, noise_stream.normal_matrix(n, obs.noise_dim()));
  return set;
}

}  // namespace hubbind
