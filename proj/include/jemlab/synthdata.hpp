#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "jemlab/dataset.hpp"
#include "jemlab/oracle.hpp"
#include "jemlab/tensor.hpp"

namespace jemlab {

// Synthetic stand-ins for human benchmark data. The "observers" here are
// Bayes-posterior samplers over known generative models, not real people.
// Every generator is a pure function of its arguments.

// ---- 2-D Gaussian mixture ---------------------------------------------------

/// Isotropic Gaussian mixture with equal priors.
struct Mixture2D {
  std::vector<std::array<double, 2>> means;
  double stddev = 1.0;

  std::size_t classes() const { return means.size(); }
  /// log p(x) of the full mixture.
  double log_density(double x, double y) const;
  /// p(y | x) for every component.
  std::vector<double> posterior(double x, double y) const;
};

/// Mixture density restricted to, and normalized on, the grid box.
Tensor mixture_density(const Mixture2D& mixture, const Grid& grid);

struct LabeledPoints2D {
  Tensor points;  // [N x 2]
  std::vector<std::size_t> labels;
  Mixture2D mixture;
};

/// K components on a circle of radius `separation`, labels drawn uniformly.
LabeledPoints2D gen_mixture2d(std::size_t k, std::size_t n, double separation, std::uint64_t seed,
                              double stddev = 1.0);

/// Fraction of points whose closed-form posterior argmax equals the label.
double bayes_accuracy(const LabeledPoints2D& data);

Dataset to_dataset(const LabeledPoints2D& data, const std::string& id = "mixture2d");

/// points.csv (x,y,label) and mixture.csv (component,mean_x,mean_y,stddev).
void save_points(const LabeledPoints2D& data, const std::filesystem::path& dir);
LabeledPoints2D load_points(const std::filesystem::path& dir);

// ---- cue conflict -------------------------------------------------------------

inline constexpr std::size_t kMaxCueClasses = 6;

const char* shape_name(std::size_t i);
const char* texture_name(std::size_t i);

struct CueConflictSet {
  Tensor images;  // [N x 1 x S x S], background -1, texture in [0, 1]
  std::vector<std::size_t> shape_labels;
  std::vector<std::size_t> texture_labels;
  std::vector<bool> congruent;
  Tensor importance;  // [N x S x S], 1 on the shape outline
  std::size_t classes = 0;

  std::size_t size() const { return shape_labels.size(); }
  /// Congruent images labeled by their (shared) class.
  Dataset congruent_dataset() const;
  /// Indices of the conflict images.
  std::vector<std::size_t> conflict_indices() const;
};

/// Congruent image i pairs shape i with texture i (classes cycle); conflict
/// images cycle through the K(K-1) ordered pairs (i, j), i != j.
CueConflictSet gen_cue_conflict(std::size_t k, std::size_t size, std::size_t n_congruent, std::size_t n_conflict,
                                std::uint64_t seed);

/// Shape mask of class `shape` at `size` pixels. The image spans [-1, 1]; the
/// center is offset by (2cx, 2cy) and `radius` is in the same units.
std::vector<bool> shape_mask(std::size_t shape, std::size_t size, double cx, double cy, double radius);

/// images.jtns, importance.jtns, labels.csv (image_id,shape,texture,congruent).
void save_cue_conflict(const CueConflictSet& set, const std::filesystem::path& dir);
CueConflictSet load_cue_conflict(const std::filesystem::path& dir);

// ---- soft labels and observers ----------------------------------------------

struct SoftLabelSet {
  Tensor stimuli;                   // [N x 2]
  std::vector<std::size_t> labels;  // generating component of each stimulus
  std::vector<std::size_t> conditions;
  Tensor counts;     // [N x K] response counts
  Tensor posterior;  // [N x K] exact posterior, may be empty for loaded human data
  /// responses[h * N + s]: observer h's answer to stimulus s.
  std::vector<std::size_t> responses;
  std::size_t observers = 0;
  std::size_t classes = 0;

  std::size_t size() const { return labels.size(); }
};

/// Default per-condition stimulus perturbations.
std::vector<double> default_condition_noise();

/// Each point appears once per condition, displaced by N(0, noise_c^2); each
/// observer answers every stimulus with a draw from the exact posterior there.
SoftLabelSet gen_soft_labels(const LabeledPoints2D& points, std::size_t observers, std::uint64_t seed,
                             const std::vector<double>& condition_noise = default_condition_noise());

/// stimuli.csv (stimulus_id,x,y,label,condition), softlabels.csv
/// (stimulus_id,count_0..), observers.csv (observer_id,stimulus_id,response),
/// posterior.csv (stimulus_id,p_0..).
void save_soft_labels(const SoftLabelSet& set, const std::filesystem::path& dir);
SoftLabelSet load_soft_labels(const std::filesystem::path& dir);

// ---- perceptual judgments -----------------------------------------------------

struct PerceptualSet {
  Tensor references;  // [R x 1 x S x S]
  Tensor triplet_images;  // [T x 3 x 1 x S x S]: reference, A, B
  std::vector<double> mag_a, mag_b;
  std::vector<std::size_t> triplet_choice;  // 0: A is closer, 1: B
  Tensor pair_images;  // [P x 2 x 1 x S x S]
  std::vector<double> pair_magnitude;
  std::vector<bool> pair_same;
  double threshold = 0.0;

  std::size_t triplets() const { return triplet_choice.size(); }
  std::size_t pairs() const { return pair_same.size(); }
};

/// Smooth patch in [-1, 1] built from a few low-frequency waves.
Tensor smooth_patch(std::size_t size, Rng& rng);

/// Blur mixed in with weight min(1, magnitude), plus N(0, magnitude^2) noise, clamped to [-1, 1].
Tensor distort(const Tensor& patch, double magnitude, Rng& rng);

/// One triplet per reference and unordered level pair (A/B order randomized),
/// one pair per reference and level; "same" iff magnitude < threshold.
PerceptualSet gen_perceptual(std::size_t refs, const std::vector<double>& levels, std::uint64_t seed,
                             std::size_t size = 16, double threshold = 0.15);

/// triplets.jtns, triplets.csv (triplet_id,mag_a,mag_b,choice),
/// pairs.jtns, pairs.csv (pair_id,magnitude,same), meta.csv (key,value).
void save_perceptual(const PerceptualSet& set, const std::filesystem::path& dir);
PerceptualSet load_perceptual(const std::filesystem::path& dir);

// ---- probe set ----------------------------------------------------------------

inline constexpr std::size_t kLightingDirections = 6;

struct ProbeSet {
  Tensor images;  // [N x 1 x S x S]
  std::vector<std::size_t> gloss;     // 0 matte, 1 glossy
  std::vector<std::size_t> lighting;  // one of kLightingDirections
  std::vector<double> relief;         // bump height in [0, 1]
  std::vector<double> rating;         // graded gloss rating in [1, 6]

  std::size_t size() const { return gloss.size(); }
};

/// Shaded bumpy surfaces: relief scales the bumps, lighting picks the light
/// azimuth, gloss adds a specular lobe; ratings are noisy gloss judgments.
ProbeSet gen_probeset(std::size_t n, std::size_t size, std::uint64_t seed);

/// images.jtns, attributes.csv (stimulus_id,gloss,lighting,relief,rating).
void save_probeset(const ProbeSet& set, const std::filesystem::path& dir);
ProbeSet load_probeset(const std::filesystem::path& dir);

/// Regular files directly inside `dir`, sorted by name.
std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& dir);

}  // namespace jemlab
