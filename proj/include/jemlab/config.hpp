#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "jemlab/dataset.hpp"
#include "jemlab/network.hpp"
#include "jemlab/trainer.hpp"

namespace jemlab {

/// Flat key=value run configuration with section prefixes (train.alpha=0.5).
/// Every key has a registered default; unknown keys are a ConfigError.
class RunConfig {
 public:
  /// All registered keys at their defaults.
  RunConfig();

  /// Lines of `key = value`; blank lines and lines starting with '#' are
  /// skipped. A repeated key within one text is an error.
  static RunConfig parse(const std::string& text, const std::string& source = "config");
  static RunConfig read(const std::filesystem::path& path);

  /// Merges the keys of `text` over the current values.
  void merge(const std::string& text, const std::string& source);
  void set(const std::string& key, const std::string& value);
  /// Applies one `key=value` override.
  void apply(const std::string& assignment);

  bool known(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;
  double number(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  std::uint64_t seed(const std::string& key) const;
  bool flag(const std::string& key) const;
  std::vector<double> numbers(const std::string& key) const;
  std::vector<std::uint64_t> seeds(const std::string& key) const;
  std::vector<std::size_t> counts(const std::string& key) const;
  std::vector<std::string> words(const std::string& key) const;

  /// The resolved config, one `key=value` per line in key order.
  std::string to_string() const;
  void write(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::string> values_;
};

/// sgld.clip=auto clips chains to the clip box for image data only.
TrainConfig train_config(const RunConfig& cfg, bool images);

/// Network for `data` as selected by net.kind (auto, mlp, conv).
NetworkSpec network_spec(const RunConfig& cfg, const Dataset& data);

/// Loads the training set at data.path: a mixture2d directory (points.csv) or
/// a cue-conflict directory (labels.csv), whose congruent images are used.
/// ConfigError when the path is unset or holds neither.
Dataset load_training_data(const RunConfig& cfg);

}  // namespace jemlab
