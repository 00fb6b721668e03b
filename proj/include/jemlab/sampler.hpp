#pragma once

#include <deque>
#include <vector>

#include "jemlab/network.hpp"
#include "jemlab/rng.hpp"

namespace jemlab {

/// Anything SGLD can run on: an unnormalized log density over input batches.
class EnergyLandscape {
 public:
  virtual ~EnergyLandscape() = default;
  /// Per-row score d/dx log p(x) = -dE/dx, same shape as the batch.
  virtual Tensor score(const Tensor& batch) const = 0;
  /// Per-row energy E(x) -> [B].
  virtual Tensor energy(const Tensor& batch) const = 0;
};

/// Marginal energy of a logit network.
class ModelLandscape final : public EnergyLandscape {
 public:
  explicit ModelLandscape(const EnergyModel& model) : model_(model) {}
  Tensor score(const Tensor& batch) const override;
  Tensor energy(const Tensor& batch) const override;

 private:
  const EnergyModel& model_;
};

/// E(x) = curvature * ||x||^2 / 2, row-wise.
class QuadraticLandscape final : public EnergyLandscape {
 public:
  explicit QuadraticLandscape(double curvature = 1.0) : curvature_(curvature) {}
  Tensor score(const Tensor& batch) const override;
  Tensor energy(const Tensor& batch) const override;

 private:
  double curvature_;
};

enum class StepDecay { linear, constant };

struct SgldConfig {
  std::size_t steps = 20;
  double step_size = 1.0;
  double noise = 1e-2;
  bool clip = false;
  double clip_lo = -1.0;
  double clip_hi = 1.0;
  StepDecay decay = StepDecay::linear;

  void validate() const;
};

/// x' = x + step * score(x) + noise * N(0, I), optionally clamped to the clip box.
Tensor sgld_step(const EnergyLandscape& landscape, const Tensor& x, double step, double noise, Rng& rng,
                 bool clip = false, double clip_lo = -1.0, double clip_hi = 1.0);

/// Textbook Langevin coupling: drift eta/2 and noise variance eta.
Tensor langevin_step(const EnergyLandscape& landscape, const Tensor& x, double eta, Rng& rng);

/// Step size used at iteration t of an L-step chain.
double step_at(const SgldConfig& cfg, std::size_t t, std::size_t total);

/// Runs cfg.steps iterations with lambda_t = lambda * (1 - t/L) (or constant).
Tensor sample_chain(const EnergyLandscape& landscape, const Tensor& x0, const SgldConfig& cfg, Rng& rng);

/// Trajectory [x_0, ..., x_steps] for test-time refinement.
std::vector<Tensor> refine(const EnergyLandscape& landscape, const Tensor& x, std::size_t steps, const SgldConfig& cfg,
                           Rng& rng, StepDecay decay = StepDecay::constant);

struct BufferConfig {
  std::size_t capacity = 10000;
  double reinit = 0.05;
};

/// FIFO store of past negatives with a uniform-on-box initializer.
class ReplayBuffer {
 public:
  ReplayBuffer(Shape sample_shape, std::vector<double> lo, std::vector<double> hi, BufferConfig cfg = {});
  static ReplayBuffer uniform_box(Shape sample_shape, double lo, double hi, BufferConfig cfg = {});

  /// Each slot independently: fresh sample with probability `reinit` (always
  /// when empty), otherwise a copy of a uniformly chosen stored sample.
  Tensor draw(std::size_t batch, Rng& rng) const;
  Tensor fresh(std::size_t batch, Rng& rng) const;
  void push(const Tensor& samples);

  std::size_t size() const { return store_.size(); }
  std::size_t capacity() const { return cfg_.capacity; }
  const BufferConfig& config() const { return cfg_; }
  const Shape& sample_shape() const { return shape_; }
  /// Stored sample i, oldest first.
  Tensor at(std::size_t i) const;

 private:
  Shape shape_;
  std::vector<double> lo_, hi_;
  BufferConfig cfg_;
  std::deque<std::vector<double>> store_;
};

}  // namespace jemlab
