#include "jemlab/evaluate.hpp"

#include <algorithm>
#include <cmath>

#include "jemlab/energy.hpp"
#include "jemlab/error.hpp"

namespace jemlab {

namespace {

constexpr std::size_t kChunk = 512;

const std::vector<std::pair<std::string, std::string>>& metric_table() {
  static const std::vector<std::pair<std::string, std::string>> table = {
      {"accuracy", "labeled dataset"},
      {"soft_label_ce", "soft-label set"},
      {"soft_label_kl", "soft-label set"},
      {"soft_label_top1", "soft-label set"},
      {"error_consistency", "soft-label set"},
      {"shape_bias", "cue-conflict set"},
      {"shape_bias_all", "cue-conflict set"},
      {"saliency_alignment", "cue-conflict set"},
      {"two_afc", "perceptual set"},
      {"jnd_map", "perceptual set"},
      {"probe_gloss_acc", "probe set"},
      {"probe_lighting_acc", "probe set"},
      {"probe_relief_r2", "probe set"},
      {"rating_correlation", "probe set"},
      {"density_tv", "mixture points"},
  };
  return table;
}

Tensor slice_rows(const Tensor& t, std::size_t first, std::size_t count) {
  Shape s = t.shape();
  s[0] = count;
  const std::size_t w = t.row_size();
  auto d = t.data();
  return Tensor(std::move(s), std::vector<double>(d.begin() + static_cast<std::ptrdiff_t>(first * w),
                                                  d.begin() + static_cast<std::ptrdiff_t>((first + count) * w)));
}

Tensor gather_rows(const Tensor& t, std::span<const std::size_t> idx) {
  Shape s = t.shape();
  s[0] = idx.size();
  std::vector<double> out;
  out.reserve(idx.size() * t.row_size());
  for (auto i : idx) {
    auto r = t.row_span(i);
    out.insert(out.end(), r.begin(), r.end());
  }
  return Tensor(std::move(s), std::move(out));
}

// Throws UndefinedError (recorded, not fatal) when the inputs do not fit the model.
void require_input(const EnergyModel& model, const Tensor& inputs, const std::string& what) {
  const Shape per(inputs.shape().begin() + 1, inputs.shape().end());
  if (per != model.input_shape()) {
    throw UndefinedError(what + " inputs are " + shape_string(per) + " but the model takes " +
                         shape_string(model.input_shape()));
  }
}

std::vector<std::size_t> predict_all(const EnergyModel& model, const Tensor& inputs) {
  std::vector<std::size_t> out;
  out.reserve(inputs.dim(0));
  for (std::size_t first = 0; first < inputs.dim(0); first += kChunk) {
    const auto n = std::min(kChunk, inputs.dim(0) - first);
    const auto p = predict(model, slice_rows(inputs, first, n));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

Tensor posteriors_all(const EnergyModel& model, const Tensor& inputs) {
  std::vector<double> out;
  for (std::size_t first = 0; first < inputs.dim(0); first += kChunk) {
    const auto n = std::min(kChunk, inputs.dim(0) - first);
    const auto p = class_posteriors(model, slice_rows(inputs, first, n));
    out.insert(out.end(), p.data().begin(), p.data().end());
  }
  return Tensor(Shape{inputs.dim(0), model.classes()}, std::move(out));
}

void require_classes(const EnergyModel& model, std::size_t classes, const std::string& what) {
  if (model.classes() != classes) {
    throw UndefinedError(what + " has " + std::to_string(classes) + " classes but the model has " +
                         std::to_string(model.classes()));
  }
}

double compute(const std::string& name, const EnergyModel& model, const EvalData& data) {
  if (name == "accuracy") {
    const Dataset& d = *data.labeled;
    require_input(model, d.inputs, "labeled");
    const auto pred = predict_all(model, d.inputs);
    std::size_t hit = 0;
    for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == d.labels[i];
    return static_cast<double>(hit) / static_cast<double>(pred.size());
  }
  if (name.rfind("soft_label_", 0) == 0 || name == "error_consistency") {
    const SoftLabelSet& s = *data.soft_labels;
    require_input(model, s.stimuli, "soft-label");
    require_classes(model, s.classes, "soft-label set");
    if (name == "error_consistency") {
      CorrectnessTable t;
      const auto pred = predict_all(model, s.stimuli);
      t.dataset.assign(s.size(), 0);
      t.condition = s.conditions;
      for (std::size_t i = 0; i < s.size(); ++i) t.model.push_back(pred[i] == s.labels[i]);
      for (std::size_t h = 0; h < s.observers; ++h) {
        std::vector<bool> c;
        for (std::size_t i = 0; i < s.size(); ++i) c.push_back(s.responses[h * s.size() + i] == s.labels[i]);
        t.observers.push_back(std::move(c));
      }
      return error_consistency(t);
    }
    const Tensor probs = posteriors_all(model, s.stimuli);
    if (name == "soft_label_ce") return soft_label_ce(probs, s.counts);
    if (name == "soft_label_kl") return soft_label_kl(probs, s.counts);
    return soft_label_top1(probs, s.counts);
  }
  if (name == "shape_bias" || name == "shape_bias_all") {
    const CueConflictSet& c = *data.cue_conflict;
    require_input(model, c.images, "cue-conflict");
    require_classes(model, c.classes, "cue-conflict set");
    const auto idx = c.conflict_indices();
    if (idx.empty()) throw UndefinedError("cue-conflict set has no conflict images");
    const auto pred = predict_all(model, gather_rows(c.images, idx));
    std::vector<std::size_t> shape, texture;
    for (auto i : idx) {
      shape.push_back(c.shape_labels[i]);
      texture.push_back(c.texture_labels[i]);
    }
    return name == "shape_bias" ? shape_bias(pred, shape, texture) : shape_bias_all(pred, shape, texture);
  }
  if (name == "saliency_alignment") {
    const CueConflictSet& c = *data.cue_conflict;
    require_input(model, c.images, "cue-conflict");
    const std::size_t n = std::min(c.size(), data.saliency_images);
    if (n == 0) throw UndefinedError("no images for saliency");
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      total += saliency_alignment(saliency_map(model, c.images.row(i)), c.importance.row(i), data.saliency_ceiling);
    }
    return total / static_cast<double>(n);
  }
  if (name == "two_afc" || name == "jnd_map") {
    const PerceptualSet& p = *data.perceptual;
    require_input(model, p.references, "perceptual");
    const auto layers = default_feature_layers(model.spec());
    if (name == "two_afc") {
      std::vector<double> da, db;
      for (std::size_t t = 0; t < p.triplets(); ++t) {
        const Tensor trip = p.triplet_images.row(t);
        const Tensor ref = trip.row(0);
        da.push_back(perceptual_distance(model, ref, trip.row(1), layers));
        db.push_back(perceptual_distance(model, ref, trip.row(2), layers));
      }
      return two_afc(da, db, p.triplet_choice);
    }
    std::vector<double> d;
    for (std::size_t q = 0; q < p.pairs(); ++q) {
      const Tensor pair = p.pair_images.row(q);
      d.push_back(perceptual_distance(model, pair.row(0), pair.row(1), layers));
    }
    return jnd_map(d, p.pair_same);
  }
  if (name.rfind("probe_", 0) == 0 || name == "rating_correlation") {
    const ProbeSet& ps = *data.probe;
    require_input(model, ps.images, "probe");
    const Tensor feats = layer_features(model, ps.images, probe_layer(model.spec()));
    if (name == "probe_gloss_acc") return probe_classify(feats, ps.gloss, data.probe_options).accuracy;
    if (name == "probe_lighting_acc") return probe_classify(feats, ps.lighting, data.probe_options).accuracy;
    if (name == "probe_relief_r2") return probe_regress(feats, ps.relief, data.relief_ridge, data.probe_options);
    const auto margin = probe_classify(feats, ps.gloss, data.probe_options).binary_margin();
    return rating_correlation(margin, ps.rating);
  }
  if (name == "density_tv") {
    if (model.input_shape() != Shape{2}) throw UndefinedError("density_tv needs a 2-D input model");
    return mixture_density_tv(model, data.points->mixture, data.density_grid);
  }
  throw ConfigError("unknown metric '" + name + "'");
}

}  // namespace

const std::vector<std::string>& known_metrics() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> v;
    for (const auto& [n, _] : metric_table()) v.push_back(n);
    return v;
  }();
  return names;
}

std::string metric_requirement(const std::string& metric) {
  for (const auto& [n, req] : metric_table()) {
    if (n == metric) return req;
  }
  std::string valid;
  for (const auto& n : known_metrics()) valid += (valid.empty() ? "" : ", ") + n;
  throw ConfigError("unknown metric '" + metric + "' (valid: " + valid + ")");
}

bool metric_available(const std::string& metric, const EvalData& data) {
  const auto req = metric_requirement(metric);
  if (req == "labeled dataset") return data.labeled.has_value();
  if (req == "soft-label set") return data.soft_labels.has_value();
  if (req == "cue-conflict set") return data.cue_conflict.has_value();
  if (req == "perceptual set") return data.perceptual.has_value();
  if (req == "probe set") return data.probe.has_value();
  return data.points.has_value();
}

std::size_t probe_layer(const NetworkSpec& spec) {
  if (spec.layers.size() < 2) throw UndefinedError("network has no hidden layer to probe");
  return spec.layers.size() - 2;
}

Tensor layer_features(const EnergyModel& model, const Tensor& inputs, std::size_t layer) {
  std::vector<double> out;
  std::size_t width = 0;
  for (std::size_t first = 0; first < inputs.dim(0); first += kChunk) {
    const auto n = std::min(kChunk, inputs.dim(0) - first);
    const auto f = features(model, slice_rows(inputs, first, n), {layer}).front();
    width = f.row_size();
    out.insert(out.end(), f.data().begin(), f.data().end());
  }
  return Tensor(Shape{inputs.dim(0), width}, std::move(out));
}

void evaluate_metrics(const EnergyModel& model, const EvalData& data, const std::vector<std::string>& metrics,
                      MetricsReport& report) {
  if (metrics.empty()) throw ConfigError("no metrics requested");
  for (const auto& m : metrics) {
    if (!metric_available(m, data)) throw ConfigError("metric '" + m + "' needs a " + metric_requirement(m));
  }
  for (const auto& m : metrics) {
    try {
      report.set(m, compute(m, model, data));
    } catch (const UndefinedError& e) {
      report.set_undefined(m, e.what());
    } catch (const AlignmentError& e) {
      report.set_undefined(m, e.what());
    }
  }
}

double mixture_density_tv(const EnergyModel& model, const Mixture2D& mixture, const Grid& grid) {
  return density_tv(exact_density(model, grid), mixture_density(mixture, grid), grid);
}

}  // namespace jemlab
