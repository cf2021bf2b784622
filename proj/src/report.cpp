#include "hubbind/report.hpp"

#include <cmath>

#include "hubbind/errors.hpp"
#include "hubbind/json_io.hpp"

namespace hubbind {

void MetricsReport::set(std::string_view name, double value) {
  if (!std::isfinite(value))
    throw NumericError("metric '" + std::string(name) + "' is not finite");
  metrics_.insert_or_assign(std::string(name), value);
}

void MetricsReport::set_flag(std::string_view name, bool value) {
  flags_.insert_or_assign(std::string(name), value);
}

void MetricsReport::set_meta(std::string_view name, std::string value) {
  meta_.insert_or_assign(std::string(name), std::move(value));
}

double MetricsReport::get(std::string_view name) const {
  auto it = metrics_.find(name);
  if (it == metrics_.end()) throw ConfigError("no metric '" + std::string(name) + "'");
  return it->second;
}

bool MetricsReport::flag(std::string_view name) const {
  auto it = flags_.find(name);
  if (it == flags_.end()) throw ConfigError("no flag '" + std::string(name) + "'");
  return it->second;
}

bool MetricsReport::has(std::string_view name) const { return metrics_.find(name) != metrics_.end(); }

const std::string& MetricsReport::meta(std::string_view name) const {
  auto it = meta_.find(name);
  if (it == meta_.end()) throw ConfigError("no metadata '" + std::string(name) + "'");
  return it->second;
}

void MetricsReport::merge(const MetricsReport& other, std::string_view prefix) {
  const std::string p(prefix);
  for (const auto& [k, v] : other.metrics_) metrics_.insert_or_assign(p + k, v);
  for (const auto& [k, v] : other.flags_) flags_.insert_or_assign(p + k, v);
  for (const auto& [k, v] : other.meta_) meta_.insert_or_assign(p + k, v);
}

std::string MetricsReport::to_json() const {
  ojson j;
  j["format"] = "hubbind.metrics";
  j["version"] = 1;
  ojson meta = ojson::object();
  for (const auto& [k, v] : meta_) meta[k] = v;
  ojson metrics = ojson::object();
  for (const auto& [k, v] : metrics_) metrics[k] = v;
  ojson flags = ojson::object();
  for (const auto& [k, v] : flags_) flags[k] = v;
  j["meta"] = std::move(meta);
  j["metrics"] = std::move(metrics);
  j["flags"] = std::move(flags);
  return j.dump(2) + "\n";
}

std::string MetricsReport::to_csv() const {
  std::string out = "metric,value\n";
  for (const auto& [k, v] : metrics_) out += k + "," + format_double(v) + "\n";
  for (const auto& [k, v] : flags_) out += k + "," + (v ? "1" : "0") + "\n";
  return out;
}

}  // namespace hubbind
