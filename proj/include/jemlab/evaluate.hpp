#pragma once

#include <optional>
#include <string>
#include <vector>

#include "jemlab/alignmetrics.hpp"
#include "jemlab/oracle.hpp"
#include "jemlab/report.hpp"
#include "jemlab/synthdata.hpp"

namespace jemlab {

/// Benchmark data a model can be scored against. Any member may be absent;
/// metrics whose data is missing are rejected by evaluate_metrics.
struct EvalData {
  std::optional<Dataset> labeled;  // plain held-out accuracy
  std::optional<LabeledPoints2D> points;
  std::optional<SoftLabelSet> soft_labels;
  std::optional<CueConflictSet> cue_conflict;
  std::optional<PerceptualSet> perceptual;
  std::optional<ProbeSet> probe;
  /// Grid for density_tv; must cover the mixture's support for a fair score.
  Grid density_grid = Grid::box(2, -7.0, 7.0, 96);
  ProbeOptions probe_options;
  double relief_ridge = 1.0;
  double saliency_ceiling = 1.0;
  std::size_t saliency_images = 64;  // cap on images averaged
};

/// Every metric name evaluate_metrics understands.
const std::vector<std::string>& known_metrics();

/// Names the data a metric needs, e.g. "cue-conflict set"; ConfigError for unknown names.
std::string metric_requirement(const std::string& metric);

/// True when `data` carries what `metric` needs.
bool metric_available(const std::string& metric, const EvalData& data);

/// Layer whose activations feed the linear probes: the one before the final affine.
std::size_t probe_layer(const NetworkSpec& spec);

/// Activations of `layer` for every row of `inputs`, flattened to [N x D].
Tensor layer_features(const EnergyModel& model, const Tensor& inputs, std::size_t layer);

/// Computes each requested metric into `report`. A metric that is undefined
/// for this model/data pair (input shape mismatch, empty denominator, ...) is
/// recorded as undefined with the reason rather than thrown. Unknown names
/// and missing data throw ConfigError before anything is computed.
void evaluate_metrics(const EnergyModel& model, const EvalData& data, const std::vector<std::string>& metrics,
                      MetricsReport& report);

/// Density TV between the model's exact density and the mixture, both on `grid`.
double mixture_density_tv(const EnergyModel& model, const Mixture2D& mixture, const Grid& grid);

}  // namespace jemlab
