#include "jemlab/report.hpp"

#include <charconv>
#include <chrono>
#include <ctime>
#include <fstream>
#include <map>
#include <sstream>

#include <json.hpp>

#include "jemlab/error.hpp"

namespace jemlab {

void MetricsReport::set(const std::string& name, double value) {
  for (auto& m : metrics) {
    if (m.name == name) {
      m.value = value;
      m.note.clear();
      return;
    }
  }
  metrics.push_back({name, value, {}});
}

void MetricsReport::set_undefined(const std::string& name, const std::string& reason) {
  for (auto& m : metrics) {
    if (m.name == name) {
      m.value.reset();
      m.note = reason;
      return;
    }
  }
  metrics.push_back({name, std::nullopt, reason});
}

std::optional<double> MetricsReport::get(const std::string& name) const {
  for (const auto& m : metrics) {
    if (m.name == name) return m.value;
  }
  return std::nullopt;
}

bool MetricsReport::has(const std::string& name) const {
  for (const auto& m : metrics) {
    if (m.name == name) return true;
  }
  return false;
}

std::optional<double> human_reference(const std::string& metric) {
  static const std::map<std::string, double> refs{
      {"two_afc", kTwoAfcHumanCeiling},
      {"error_consistency", kKappaHumanCeiling},
      {"shape_bias", kShapeBiasHumanReference},
      {"shape_bias_all", kShapeBiasHumanReference},
      {"soft_label_ce", kSoftLabelCeilingNats},
  };
  auto it = refs.find(metric);
  if (it == refs.end()) return std::nullopt;
  return it->second;
}

std::string format_number(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

std::string utc_timestamp() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string reports_to_csv(const std::vector<MetricsReport>& reports, const std::optional<std::string>& timestamp) {
  std::ostringstream os;
  if (timestamp) os << "# generated " << *timestamp << "\n";
  os << "alpha,seed,dataset,metric,value,reference,status,note\n";
  for (const auto& r : reports) {
    if (r.metrics.empty()) {
      os << format_number(r.alpha) << ',' << r.seed << ',' << csv_field(r.dataset) << ",,,," << csv_field(r.status)
         << ",\n";
      continue;
    }
    for (const auto& m : r.metrics) {
      const auto ref = human_reference(m.name);
      os << format_number(r.alpha) << ',' << r.seed << ',' << csv_field(r.dataset) << ',' << csv_field(m.name) << ','
         << (m.value ? format_number(*m.value) : std::string()) << ',' << (ref ? format_number(*ref) : std::string())
         << ',' << csv_field(r.status) << ',' << csv_field(m.note) << '\n';
    }
  }
  return os.str();
}

std::string reports_to_json(const std::vector<MetricsReport>& reports, const std::optional<std::string>& timestamp) {
  nlohmann::ordered_json doc;
  if (timestamp) doc["generated"] = *timestamp;
  auto& refs = doc["references"];
  refs["two_afc"] = kTwoAfcHumanCeiling;
  refs["error_consistency"] = kKappaHumanCeiling;
  refs["shape_bias"] = kShapeBiasHumanReference;
  refs["soft_label_ce"] = kSoftLabelCeilingNats;
  doc["runs"] = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json run;
    run["alpha"] = r.alpha;
    run["seed"] = r.seed;
    run["dataset"] = r.dataset;
    run["status"] = r.status;
    auto& ms = run["metrics"];
    ms = nlohmann::ordered_json::object();
    for (const auto& m : r.metrics) {
      nlohmann::ordered_json entry;
      entry["value"] = m.value ? nlohmann::ordered_json(*m.value) : nlohmann::ordered_json(nullptr);
      if (!m.note.empty()) entry["note"] = m.note;
      ms[m.name] = entry;
    }
    doc["runs"].push_back(run);
  }
  return doc.dump(2) + "\n";
}

void write_reports(const std::vector<MetricsReport>& reports, const std::filesystem::path& csv_path,
                   const std::filesystem::path& json_path, bool with_timestamp) {
  const auto ts = with_timestamp ? std::optional<std::string>(utc_timestamp()) : std::nullopt;
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw IoError("cannot write " + p.string());
    out << text;
    if (!out) throw IoError("write failed for " + p.string());
  };
  if (!csv_path.empty()) write(csv_path, reports_to_csv(reports, ts));
  if (!json_path.empty()) write(json_path, reports_to_json(reports, ts));
}

}  // namespace jemlab
