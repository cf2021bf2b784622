#pragma once

#include <map>
#include <string>
#include <string_view>

namespace hubbind {

/// Named scalar results of one experiment.
///
/// Keys are kept sorted, so the JSON and CSV forms are canonical: equal
/// reports serialize to equal bytes.
class MetricsReport {
 public:
  /// Throws NumericError for non-finite values.
  void set(std::string_view name, double value);
  void set_flag(std::string_view name, bool value);
  void set_meta(std::string_view name, std::string value);

  double get(std::string_view name) const;
  bool flag(std::string_view name) const;
  bool has(std::string_view name) const;
  const std::string& meta(std::string_view name) const;

  const std::map<std::string, double, std::less<>>& metrics() const noexcept { return metrics_; }
  const std::map<std::string, bool, std::less<>>& flags() const noexcept { return flags_; }
  const std::map<std::string, std::string, std::less<>>& metadata() const noexcept {
    return meta_;
  }

  /// Copies every entry of other under "<prefix><name>".
  void merge(const MetricsReport& other, std::string_view prefix = "");

  std::string to_json() const;
  /// metric,value rows; flags as 0/1; metadata is omitted.
  std::string to_csv() const;

  friend bool operator==(const MetricsReport&, const MetricsReport&) = default;

 private:
  std::map<std::string, double, std::less<>> metrics_;
  std::map<std::string, bool, std::less<>> flags_;
  std::map<std::string, std::string, std::less<>> meta_;
};

}  // namespace hubbind
