#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace jemlab {

// Human reference levels quoted for annotation only; nothing is computed from them.
inline constexpr double kTwoAfcHumanCeiling = 0.83;
inline constexpr double kKappaHumanCeiling = 0.39;
inline constexpr double kShapeBiasHumanReference = 0.96;
inline constexpr double kSoftLabelCeilingNats = 0.55;

struct MetricValue {
  std::string name;
  std::optional<double> value;  // empty means undefined
  std::string note;             // reason when undefined
};

/// Named scalar metrics for one trained model.
struct MetricsReport {
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::string dataset;
  std::string status = "ok";
  std::vector<MetricValue> metrics;

  void set(const std::string& name, double value);
  void set_undefined(const std::string& name, const std::string& reason);
  std::optional<double> get(const std::string& name) const;
  bool has(const std::string& name) const;
};

/// Reference level for a metric name, if one is attached.
std::optional<double> human_reference(const std::string& metric);

/// CSV with header `alpha,seed,dataset,metric,value,reference,status,note`.
/// When `timestamp` is set it goes on a leading `#` line, the only
/// nondeterministic bytes in the file.
std::string reports_to_csv(const std::vector<MetricsReport>& reports, const std::optional<std::string>& timestamp);
std::string reports_to_json(const std::vector<MetricsReport>& reports, const std::optional<std::string>& timestamp);

void write_reports(const std::vector<MetricsReport>& reports, const std::filesystem::path& csv_path,
                   const std::filesystem::path& json_path, bool with_timestamp);

/// Shortest round-trippable decimal form of a double.
std::string format_number(double v);

/// Current UTC time in ISO 8601.
std::string utc_timestamp();

}  // namespace jemlab
