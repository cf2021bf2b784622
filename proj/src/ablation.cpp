#include "hubbind/ablation.hpp"

#include <atomic>
#include <cmath>
#include <map>
#include <mutex>
#include <sstream>
#include <thread>

#include "hubbind/errors.hpp"

namespace hubbind {

namespace {

const std::vector<std::pair<AblationAxis, std::string>>& axis_names() {
  static const std::vector<std::pair<AblationAxis, std::string>> names = {
      {AblationAxis::kTemperature, "temperature"},
      {AblationAxis::kProjectionHead, "projection_head"},
      {AblationAxis::kEpochs, "epochs"},
      {AblationAxis::kBatchSize, "batch_size"},
      {AblationAxis::kHubCapacity, "hub_capacity"},
      {AblationAxis::kNoiseStrength, "noise_strength"},
      {AblationAxis::kAlignment, "alignment"},
      {AblationAxis::kLossMix, "loss_mix"},
  };
  return names;
}

double number(AblationAxis axis, const ojson& v) {
  if (!v.is_number())
    throw ConfigError("ablation: " + to_string(axis) + " value " + v.dump() + " must be a number");
  return v.get<double>();
}

std::size_t count(AblationAxis axis, const ojson& v) {
  const double d = number(axis, v);
  if (!(d >= 1.0) || d != std::floor(d))
    throw ConfigError("ablation: " + to_string(axis) + " value " + v.dump() +
                      " must be a positive integer");
  return static_cast<std::size_t>(d);
}

void csv_field(std::ostream& os, const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) {
    os << s;
    return;
  }
  os << '"';
  for (char c : s) {
    if (c == '"') os << '"';
    os << (c == '\n' ? ' ' : c);
  }
  os << '"';
}

struct MetricStats {
  std::vector<double> values;

  double mean() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s / static_cast<double>(values.size());
  }
  /// Sample standard deviation; 0 for a single seed.
  double stddev() const {
    if (values.size() < 2) return 0.0;
    const double m = mean();
    double s = 0.0;
    for (double v : values) s += (v - m) * (v - m);
    return std::sqrt(s / static_cast<double>(values.size() - 1));
  }
};

struct ValueSummary {
  std::size_t ok = 0;
  std::size_t failed = 0;
  std::map<std::string, MetricStats> metrics;
};

std::vector<ValueSummary> summarize(const AblationResult& r) {
  std::vector<ValueSummary> out(r.values.size());
  std::map<std::string, std::size_t> index;
  for (std::size_t i = 0; i < r.values.size(); ++i) index.emplace(r.values[i], i);
  for (const auto& cell : r.cells) {
    ValueSummary& s = out.at(index.at(cell.value));
    if (!cell.ok) {
      ++s.failed;
      continue;
    }
    ++s.ok;
    for (const auto& [k, v] : cell.report.metrics()) s.metrics[k].values.push_back(v);
    for (const auto& [k, v] : cell.report.flags()) s.metrics[k].values.push_back(v ? 1.0 : 0.0);
  }
  return out;
}

}  // namespace

std::string to_string(AblationAxis axis) {
  for (const auto& [a, n] : axis_names())
    if (a == axis) return n;
  return "?";
}

AblationAxis axis_from_string(std::string_view s) {
  for (const auto& [a, n] : axis_names())
    if (n == s) return a;
  throw ConfigError("ablation: unknown axis '" + std::string(s) + "'");
}

const std::vector<AblationAxis>& all_axes() {
  static const std::vector<AblationAxis> axes = [] {
    std::vector<AblationAxis> v;
    for (const auto& [a, n] : axis_names()) v.push_back(a);
    return v;
  }();
  return axes;
}

std::vector<ojson> default_grid(AblationAxis axis) {
  switch (axis) {
    case AblationAxis::kTemperature:
      return {"learnable", 0.05, 0.07, 0.2, 1.0};
    case AblationAxis::kProjectionHead:
      return {"linear", "mlp"};
    case AblationAxis::kEpochs:
      return {10, 20, 30};
    case AblationAxis::kBatchSize:
      return {8, 64, 256};
    case AblationAxis::kHubCapacity:
      return {16, 64, 256};
    case AblationAxis::kNoiseStrength:
      return {0.0, 0.05, 0.2, 0.5};
    case AblationAxis::kAlignment:
      return {1.0, 0.75, 0.5, 0.0};
    case AblationAxis::kLossMix:
      return {0.0, 0.5, 1.0};
  }
  return {};
}

ExperimentConfig apply_axis(const ExperimentConfig& base, AblationAxis axis, const ojson& value) {
  ExperimentConfig c = base;
  switch (axis) {
    case AblationAxis::kTemperature: {
      const bool learnable = value.is_string() && value.get<std::string>() == "learnable";
      const double tau = learnable ? 0.07 : number(axis, value);
      if (!(tau > 0.0)) throw ConfigError("ablation: temperature must be > 0");
      const TemperatureParam t =
          learnable ? TemperatureParam::learnable(tau) : TemperatureParam::fixed(tau);
      for (auto& p : c.train.pairs) p.temperature = t;
      break;
    }
    case AblationAxis::kProjectionHead: {
      if (!value.is_string()) throw ConfigError("ablation: projection_head value must be a string");
      const HeadKind h = head_from_string(value.get<std::string>());
      for (auto& [name, spec] : c.encoders) spec.head = h;
      break;
    }
    case AblationAxis::kEpochs:
      c.train.epochs = count(axis, value);
      break;
    case AblationAxis::kBatchSize: {
      const std::size_t b = count(axis, value);
      for (auto& p : c.train.pairs) p.batch_size = b;
      break;
    }
    case AblationAxis::kHubCapacity: {
      const std::size_t w = count(axis, value);
      for (const auto& m : c.world.modalities)
        if (m.hub) c.encoders.at(m.name).hidden_widths = {w};
      break;
    }
    case AblationAxis::kNoiseStrength: {
      const double s = number(axis, value);
      if (!(s >= 0.0)) throw ConfigError("ablation: noise_strength must be >= 0");
      for (auto& m : c.world.modalities)
        if (m.hub) m.obs_noise_scale = s;
      break;
    }
    case AblationAxis::kAlignment: {
      const double a = number(axis, value);
      if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("ablation: alignment must lie in [0, 1]");
      for (auto& p : c.train.pairs) p.alignment = a;
      break;
    }
    case AblationAxis::kLossMix: {
      const double m = number(axis, value);
      if (!(m >= 0.0 && m <= 1.0)) throw ConfigError("ablation: loss_mix must lie in [0, 1]");
      for (auto& p : c.train.pairs) {
        p.infonce_weight = 1.0 - m;
        p.l2_weight = m;
      }
      break;
    }
  }
  return c;
}

std::string grid_label(const ojson& value) {
  if (value.is_string()) return value.get<std::string>();
  if (value.is_number_integer() || value.is_number_unsigned()) return value.dump();
  if (value.is_number()) return format_double(value.get<double>());
  throw ConfigError("ablation: grid values must be numbers or strings, got " + value.dump());
}

void AblationSuite::validate() const {
  if (grid.empty()) throw ConfigError("ablation: " + to_string(axis) + " grid must be non-empty");
  if (seeds.empty()) throw ConfigError("ablation: " + to_string(axis) + " needs at least one seed");
  std::vector<std::string> labels;
  for (const auto& v : grid) {
    const std::string l = grid_label(v);
    for (const auto& seen : labels)
      if (seen == l) throw ConfigError("ablation: duplicate grid value '" + l + "'");
    labels.push_back(l);
  }
}

AblationSpec parse_ablation_spec(const ojson& j, const std::filesystem::path& base_dir) {
  if (!j.is_object()) throw ConfigError("ablation: suite must be a JSON object");
  for (const auto& [k, v] : j.items()) {
    if (k != "base" && k != "overrides" && k != "seeds" && k != "axes")
      throw ConfigError("ablation: unknown field '" + k + "'");
  }
  if (!j.contains("base")) throw ConfigError("ablation: missing required field 'base'");
  if (!j.contains("axes")) throw ConfigError("ablation: missing required field 'axes'");

  ojson base;
  const ojson& b = j.at("base");
  if (b.is_string()) {
    std::filesystem::path p = b.get<std::string>();
    if (p.is_relative()) p = base_dir / p;
    try {
      base = ojson::parse(read_text_file(p));
    } catch (const ojson::parse_error& e) {
      throw ConfigError("ablation: base config '" + p.string() + "' is not valid JSON: " + e.what());
    }
  } else if (b.is_object()) {
    base = b;
  } else {
    throw ConfigError("ablation: 'base' must be a path or an inline config object");
  }
  if (j.contains("overrides")) {
    if (!j.at("overrides").is_object()) throw ConfigError("ablation: 'overrides' must be an object");
    base.merge_patch(j.at("overrides"));
  }

  AblationSpec spec;
  spec.base = parse_experiment(base);

  auto parse_seeds = [](const ojson& v, const std::string& where) {
    if (!v.is_array() || v.empty()) throw ConfigError("ablation: '" + where + "' must be a non-empty array");
    std::vector<std::uint64_t> out;
    for (const auto& s : v) {
      if (!s.is_number_unsigned() && !(s.is_number_integer() && s.get<long long>() >= 0))
        throw ConfigError("ablation: seeds must be non-negative integers");
      out.push_back(s.get<std::uint64_t>());
    }
    return out;
  };
  std::vector<std::uint64_t> seeds{spec.base.seed};
  if (j.contains("seeds")) seeds = parse_seeds(j.at("seeds"), "seeds");

  const ojson& axes = j.at("axes");
  if (axes.is_string() && axes.get<std::string>() == "all") {
    for (AblationAxis a : all_axes()) spec.suites.push_back({a, default_grid(a), seeds});
  } else if (axes.is_array()) {
    for (const auto& entry : axes) {
      AblationSuite s;
      s.seeds = seeds;
      if (entry.is_string()) {
        s.axis = axis_from_string(entry.get<std::string>());
        s.grid = default_grid(s.axis);
      } else if (entry.is_object()) {
        for (const auto& [k, v] : entry.items())
          if (k != "axis" && k != "grid" && k != "seeds")
            throw ConfigError("ablation: unknown field 'axes[]." + k + "'");
        if (!entry.contains("axis") || !entry.at("axis").is_string())
          throw ConfigError("ablation: missing required field 'axes[].axis'");
        s.axis = axis_from_string(entry.at("axis").get<std::string>());
        s.grid = default_grid(s.axis);
        if (entry.contains("grid")) {
          if (!entry.at("grid").is_array()) throw ConfigError("ablation: 'grid' must be an array");
          s.grid.assign(entry.at("grid").begin(), entry.at("grid").end());
        }
        if (entry.contains("seeds")) s.seeds = parse_seeds(entry.at("seeds"), "axes[].seeds");
      } else {
        throw ConfigError("ablation: entries of 'axes' must be axis names or objects");
      }
      s.validate();
      // Reject bad values now rather than as failed cells.
      for (const auto& v : s.grid) (void)apply_axis(spec.base, s.axis, v);
      spec.suites.push_back(std::move(s));
    }
  } else {
    throw ConfigError("ablation: 'axes' must be \"all\" or an array");
  }
  if (spec.suites.empty()) throw ConfigError("ablation: 'axes' is empty");
  return spec;
}

AblationSpec load_ablation_spec(const std::filesystem::path& path) {
  const std::string text = read_text_file(path);
  ojson j;
  try {
    j = ojson::parse(text);
  } catch (const ojson::parse_error& e) {
    throw ConfigError("ablation: '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parse_ablation_spec(j, path.parent_path());
}

AblationResult run_ablation(const ExperimentConfig& base, const AblationSuite& suite,
                            std::size_t jobs, const CellCallback& on_cell) {
  suite.validate();
  AblationResult result;
  result.axis = suite.axis;
  for (const auto& v : suite.grid) result.values.push_back(grid_label(v));
  for (std::size_t i = 0; i < suite.grid.size(); ++i) {
    for (std::uint64_t seed : suite.seeds) {
      AblationCell cell;
      cell.value = result.values[i];
      cell.seed = seed;
      result.cells.push_back(std::move(cell));
    }
  }

  auto run_cell = [&](std::size_t idx) {
    AblationCell& cell = result.cells[idx];
    const ojson& value = suite.grid[idx / suite.seeds.size()];
    try {
      const ExperimentConfig c = with_seed(apply_axis(base, suite.axis, value), cell.seed);
      cell.report = run_experiment(c).report;
      cell.report.set_meta("ablation.axis", to_string(suite.axis));
      cell.report.set_meta("ablation.value", cell.value);
      cell.ok = true;
    } catch (const std::exception& e) {
      cell.ok = false;
      cell.error = e.what();
    }
  };

  std::mutex callback_mutex;
  auto finish = [&](std::size_t idx) {
    if (!on_cell) return;
    std::lock_guard<std::mutex> lock(callback_mutex);
    on_cell(result.cells[idx]);
  };

  const std::size_t n = result.cells.size();
  if (jobs <= 1) {
    for (std::size_t i = 0; i < n; ++i) {
      run_cell(i);
      finish(i);
    }
    return result;
  }
  // Each worker writes only its own cells, so the merged result is keyed by
  // cell index and independent of scheduling.
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> workers;
  for (std::size_t t = 0; t < std::min(jobs, n); ++t) {
    workers.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        run_cell(i);
        finish(i);
      }
    });
  }
  for (auto& w : workers) w.join();
  return result;
}

std::string AblationResult::long_csv() const {
  std::ostringstream os;
  os << "axis,axis_value,seed,status,metric,value\n";
  const std::string ax = to_string(axis);
  for (const auto& cell : cells) {
    if (!cell.ok) {
      os << ax << ',';
      csv_field(os, cell.value);
      os << ',' << cell.seed << ",error,";
      csv_field(os, cell.error);
      os << ",\n";
      continue;
    }
    for (const auto& [k, v] : cell.report.metrics()) {
      os << ax << ',';
      csv_field(os, cell.value);
      os << ',' << cell.seed << ",ok," << k << ',' << format_double(v) << '\n';
    }
    for (const auto& [k, v] : cell.report.flags()) {
      os << ax << ',';
      csv_field(os, cell.value);
      os << ',' << cell.seed << ",ok," << k << ',' << (v ? 1 : 0) << '\n';
    }
  }
  return os.str();
}

std::string AblationResult::summary_csv() const {
  std::ostringstream os;
  os << "axis,value,metric,mean,std,n_ok,n_failed\n";
  const std::string ax = to_string(axis);
  const auto summary = summarize(*this);
  for (std::size_t i = 0; i < values.size(); ++i) {
    const ValueSummary& s = summary[i];
    if (s.metrics.empty()) {
      os << ax << ',';
      csv_field(os, values[i]);
      os << ",,,," << s.ok << ',' << s.failed << '\n';
    }
    for (const auto& [k, st] : s.metrics) {
      os << ax << ',';
      csv_field(os, values[i]);
      os << ',' << k << ',' << format_double(st.mean()) << ',' << format_double(st.stddev()) << ','
         << s.ok << ',' << s.failed << '\n';
    }
  }
  return os.str();
}

ojson AblationResult::summary_json() const {
  ojson j;
  j["axis"] = to_string(axis);
  const auto summary = summarize(*this);
  ojson rows = ojson::array();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const ValueSummary& s = summary[i];
    ojson row;
    row["value"] = values[i];
    row["n_ok"] = s.ok;
    row["n_failed"] = s.failed;
    ojson metrics = ojson::object();
    for (const auto& [k, st] : s.metrics)
      metrics[k] = {{"mean", st.mean()}, {"std", st.stddev()}};
    row["metrics"] = std::move(metrics);
    ojson errors = ojson::array();
    for (const auto& cell : cells)
      if (cell.value == values[i] && !cell.ok)
        errors.push_back({{"seed", cell.seed}, {"error", cell.error}});
    row["errors"] = std::move(errors);
    rows.push_back(std::move(row));
  }
  j["rows"] = std::move(rows);
  return j;
}

}  // namespace hubbind
