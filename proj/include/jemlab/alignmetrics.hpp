#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "jemlab/network.hpp"

namespace jemlab {

// Metrics that throw UndefinedError do so when the quantity does not exist
// for the given input (empty denominator, constant sequence, ...).

// ---- soft labels ----------------------------------------------------------------

inline constexpr double kProbFloor = 1e-12;

/// Mean over stimuli of -sum_y p_hum(y) log max(p_model(y), 1e-12); both [N x K].
double soft_label_ce(const Tensor& model_probs, const Tensor& human_counts);
/// Mean KL(p_hum || p_model) = soft_label_ce - mean human entropy.
double soft_label_kl(const Tensor& model_probs, const Tensor& human_counts);
/// Mean entropy of the normalized human rows.
double mean_human_entropy(const Tensor& human_counts);
/// Fraction of stimuli where the model's top class is a most frequent human answer.
double soft_label_top1(const Tensor& model_probs, const Tensor& human_counts);

// ---- error consistency ---------------------------------------------------------

/// Chance-corrected agreement (o - e) / (1 - e) of two correctness patterns,
/// e = p q + (1 - p)(1 - q); defined as 0 when e = 1.
double kappa_contribution(const std::vector<bool>& model_correct, const std::vector<bool>& human_correct);

/// Correctness of a model and of every observer on a common stimulus list,
/// each stimulus tagged with a dataset and a condition.
struct CorrectnessTable {
  std::vector<std::size_t> dataset;    // per stimulus
  std::vector<std::size_t> condition;  // per stimulus
  std::vector<bool> model;             // per stimulus
  std::vector<std::vector<bool>> observers;
};

/// Mean over datasets of the mean over observers of the mean over conditions
/// of kappa_contribution. AlignmentError when the patterns do not line up.
double error_consistency(const CorrectnessTable& table);

// ---- shape bias -------------------------------------------------------------------

/// Among predictions that match the shape or the texture cue, the fraction
/// matching shape. Rows must have shape != texture.
double shape_bias(std::span<const std::size_t> predictions, std::span<const std::size_t> shape_labels,
                  std::span<const std::size_t> texture_labels);
/// Fraction of all rows classified by shape.
double shape_bias_all(std::span<const std::size_t> predictions, std::span<const std::size_t> shape_labels,
                      std::span<const std::size_t> texture_labels);

// ---- perceptual ---------------------------------------------------------------------

/// Distance between per-layer activations of two single inputs: per layer,
/// unit-normalize the channel vector at every position, take the mean squared
/// difference over positions and channels, then sum layers with equal weight.
/// Activations are [1 x C x H x W], [C x H x W], [1 x D] or [D].
double feature_distance(std::span<const Tensor> a, std::span<const Tensor> b);

/// feature_distance of the model's activations after `layer_ids`.
double perceptual_distance(const EnergyModel& model, const Tensor& a, const Tensor& b,
                           const std::vector<std::size_t>& layer_ids);

/// Model picks A when d_a < d_b, B when d_b < d_a; exact ties score 0.5.
/// `choice[i]` is 0 when A is the reference answer.
double two_afc(std::span<const double> d_a, std::span<const double> d_b, std::span<const std::size_t> choice);

/// Average precision of retrieving "same" pairs when ranked by ascending
/// distance; ties keep input order.
double jnd_map(std::span<const double> distances, const std::vector<bool>& same);

/// Leaky-ReLU layers of a network: the default perceptual feature layers.
std::vector<std::size_t> default_feature_layers(const NetworkSpec& spec);

// ---- probes -------------------------------------------------------------------------

struct ProbeOptions {
  std::size_t folds = 5;
  std::uint64_t seed = 0;
  double l2 = 1e-2;
  std::size_t max_iters = 3000;
  double tol = 1e-7;
};

struct ProbeResult {
  double accuracy = 0.0;
  /// Out-of-fold class scores [N x K], before the softmax.
  Tensor decision_values;
  std::size_t classes = 0;

  /// Signed margin score[1] - score[0] per row (binary probes).
  std::vector<double> binary_margin() const;
};

/// Cross-validated multinomial logistic probe on per-fold standardized features.
ProbeResult probe_classify(const Tensor& features, std::span<const std::size_t> labels, const ProbeOptions& opts = {});

struct RidgeModel {
  std::vector<double> mean, scale;  // feature standardization
  std::vector<double> weights;
  double intercept = 0.0;

  std::vector<double> predict(const Tensor& features) const;
};

/// Closed-form ridge on standardized features with an unpenalized intercept.
RidgeModel ridge_fit(const Tensor& features, std::span<const double> targets, double ridge);

/// 1 - SS_res / SS_tot.
double r_squared(std::span<const double> targets, std::span<const double> predictions);

/// Out-of-fold R^2 of ridge regression.
double probe_regress(const Tensor& features, std::span<const double> targets, double ridge,
                     const ProbeOptions& opts = {});

// ---- correlation -------------------------------------------------------------------

double pearson(std::span<const double> a, std::span<const double> b);
/// Pearson correlation of average ranks.
double spearman(std::span<const double> a, std::span<const double> b);
std::vector<double> average_ranks(std::span<const double> values);

/// Pearson correlation between probe decision values and human ratings.
double rating_correlation(std::span<const double> decision_values, std::span<const double> ratings);

// ---- saliency ------------------------------------------------------------------------

enum class SaliencyMode { class_logit, marginal_energy };

/// |d s / d x| summed over channels for one image [C x H x W] -> [H x W], where
/// s is the predicted class logit or the marginal energy.
Tensor saliency_map(const EnergyModel& model, const Tensor& image, SaliencyMode mode = SaliencyMode::class_logit);

/// Spearman correlation of the two maps divided by `ceiling`.
double saliency_alignment(const Tensor& map, const Tensor& reference, double ceiling = 1.0);

}  // namespace jemlab
