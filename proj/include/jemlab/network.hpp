#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jemlab/autodiff.hpp"
#include "jemlab/rng.hpp"
#include "jemlab/tensor.hpp"

namespace jemlab {

enum class LayerKind : std::uint32_t {
  affine = 1,
  conv2d = 2,
  leaky_relu = 3,
  flatten = 4,
  mean_pool = 5,
};

std::string to_string(LayerKind kind);

struct LayerSpec {
  LayerKind kind = LayerKind::affine;
  std::size_t out = 0;      // affine: output features; conv2d: output channels
  std::size_t kernel = 0;   // conv2d only
  std::size_t stride = 1;   // conv2d only
  std::size_t padding = 0;  // conv2d only
  double slope = 0.2;       // leaky_relu only

  static LayerSpec make_affine(std::size_t out) { return {LayerKind::affine, out, 0, 1, 0, 0.0}; }
  static LayerSpec make_conv(std::size_t out, std::size_t k, std::size_t stride, std::size_t pad) {
    return {LayerKind::conv2d, out, k, stride, pad, 0.0};
  }
  static LayerSpec make_leaky_relu(double slope = 0.2) { return {LayerKind::leaky_relu, 0, 0, 1, 0, slope}; }
  static LayerSpec make_flatten() { return {LayerKind::flatten, 0, 0, 1, 0, 0.0}; }
  static LayerSpec make_mean_pool() { return {LayerKind::mean_pool, 0, 0, 1, 0, 0.0}; }

  friend bool operator==(const LayerSpec&, const LayerSpec&) = default;
};

/// Architecture of the logit network f(x). There are deliberately no
/// normalization layers; dropout (train mode only) follows each activation.
struct NetworkSpec {
  Shape input_shape;  // per-sample shape, e.g. {2} or {1, 16, 16}
  std::vector<LayerSpec> layers;
  std::size_t classes = 0;
  double dropout = 0.0;

  /// Per-sample output shape of every layer. Throws ConfigError on an
  /// incompatible chain, a final layer without `classes` outputs, or a
  /// dropout rate outside [0, 0.04].
  std::vector<Shape> validate() const;

  friend bool operator==(const NetworkSpec&, const NetworkSpec&) = default;
};

/// 2 -> hidden -> hidden -> classes with leaky-ReLU activations.
NetworkSpec mlp_spec(std::size_t input_dim, std::size_t hidden, std::size_t classes, double slope = 0.2);

/// Three conv/leaky-ReLU stages (stride 1, 2, 2; the strided kernels are 3x3 on
/// odd sizes and 4x4 on even ones), global mean pool, affine head.
NetworkSpec conv_spec(std::size_t channels, std::size_t size, std::vector<std::size_t> widths, std::size_t classes,
                      double slope = 0.2);

/// Logit network with its parameters. Parameters are stored per layer in
/// layer order (affine: weight, bias; conv2d: kernel).
class EnergyModel {
 public:
  EnergyModel() = default;
  EnergyModel(NetworkSpec spec, std::vector<Tensor> params);

  const NetworkSpec& spec() const { return spec_; }
  std::size_t classes() const { return spec_.classes; }
  const Shape& input_shape() const { return spec_.input_shape; }
  std::size_t input_size() const { return shape_numel(spec_.input_shape); }

  const std::vector<Tensor>& params() const { return params_; }
  std::vector<Tensor>& params() { return params_; }
  std::size_t param_count() const;
  const std::string& param_name(std::size_t i) const { return names_.at(i); }

  /// Index of the first parameter owned by `layer`, if it has any.
  std::optional<std::size_t> first_param_of(std::size_t layer) const { return layer_param_.at(layer); }

 private:
  void index_params();

  NetworkSpec spec_;
  std::vector<Tensor> params_;
  std::vector<std::string> names_;
  std::vector<std::optional<std::size_t>> layer_param_;
};

/// Fan-in scaled uniform initialization, U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
EnergyModel build(const NetworkSpec& spec, std::uint64_t seed);

struct ForwardOptions {
  bool train = false;  // enables dropout
  Rng* rng = nullptr;  // required when train && dropout > 0
};

/// Parameters placed on a tape, either tracked or as constants.
struct BoundParams {
  std::vector<ad::Var> vars;
};

BoundParams bind_params(ad::Tape& tape, const EnergyModel& model, bool track);

/// Records f(x) for a batch [B x input_shape] on `tape`. When `taps` is given
/// it receives the output Var of every layer.
ad::Var forward_on(const EnergyModel& model, const BoundParams& params, ad::Var batch,
                   const ForwardOptions& opts = {}, std::vector<ad::Var>* taps = nullptr);

/// Logits [B x K] for a batch [B x input_shape].
Tensor forward(const EnergyModel& model, const Tensor& batch, const ForwardOptions& opts = {});

/// Activations after each requested layer (per-batch tensors), in request order.
std::vector<Tensor> features(const EnergyModel& model, const Tensor& batch, const std::vector<std::size_t>& layer_ids);

// ---- checkpoints ----------------------------------------------------------

struct Checkpoint {
  static constexpr std::uint32_t kVersion = 1;

  EnergyModel model;
  double alpha = 0.0;
  std::uint64_t step = 0;
  std::optional<std::vector<Tensor>> first_moments;
  std::optional<std::vector<Tensor>> second_moments;
  std::uint64_t adam_steps = 0;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt);
Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Convenience wrappers for a bare model (alpha 0, step 0, no optimizer state).
void save(const EnergyModel& model, const std::filesystem::path& path);
EnergyModel load(const std::filesystem::path& path);

/// Checks that `batch` is [B x input_shape] for this model; returns B.
std::size_t batch_size_for(const EnergyModel& model, const Tensor& batch);

}  // namespace jemlab
