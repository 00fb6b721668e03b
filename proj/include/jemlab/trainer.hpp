#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jemlab/dataset.hpp"
#include "jemlab/error.hpp"
#include "jemlab/network.hpp"
#include "jemlab/report.hpp"
#include "jemlab/sampler.hpp"

namespace jemlab {

// ---- losses ---------------------------------------------------------------

/// Mean negative log posterior with label smoothing: mass 1-s on the true
/// class and s/(K-1) on each other class. Logits are [B x K].
ad::Var disc_loss_on(ad::Var logits, std::span<const std::size_t> labels, double smoothing);

/// mean E(x+) - mean E(x-) over marginal energies; both logit batches [B x K].
ad::Var cd_loss_on(ad::Var logits_pos, ad::Var logits_neg);

double disc_loss(const EnergyModel& model, const Tensor& x, std::span<const std::size_t> labels,
                 double smoothing = 0.0);
double cd_loss(const EnergyModel& model, const Tensor& x_pos, const Tensor& x_neg);

/// Parameter gradient of cd_loss; negatives are constants.
std::vector<Tensor> cd_gradient(const EnergyModel& model, const Tensor& x_pos, const Tensor& x_neg);

/// c = gD / (gG + eps); a plain number, never differentiated.
double grad_balance(double g_d, double g_g, double eps);

double combined_loss(double alpha, double c, double l_g, double l_d);

/// Euclidean norm over the concatenation of every tensor.
double global_norm(std::span<const Tensor> tensors);

// ---- optimizer ------------------------------------------------------------

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AdamState {
  std::vector<Tensor> m, v;
  std::uint64_t t = 0;

  static AdamState zeros_like(std::span<const Tensor> params);
};

/// Bias-corrected Adam. Throws DivergenceError on a non-finite gradient,
/// before any parameter is touched.
void adam_step(std::vector<Tensor>& params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamConfig& cfg = {});

// ---- configuration --------------------------------------------------------

enum class Selection { final_iterate, best_holdout };

struct TrainConfig {
  double alpha = 0.0;
  double lr = 1e-4;
  std::size_t batch = 64;
  std::size_t negatives = 0;  // 0: same as batch
  std::size_t iters = 0;
  std::size_t warmup = 1000;
  double smoothing = 0.0;
  double input_noise = 0.05;
  double balance_eps = 1e-8;
  AdamConfig adam;
  SgldConfig sgld;
  BufferConfig buffer;
  std::uint64_t seed = 0;
  bool augment = true;  // crop + flip, image datasets only
  std::size_t crop_pad = 2;
  std::size_t eval_every = 0;  // 0: once per epoch
  Selection select = Selection::final_iterate;

  void validate() const;
  std::size_t negative_count() const { return negatives ? negatives : batch; }
};

/// Linear ramp to `base` over `warmup`, then cosine decay to zero at `total`.
double lr_at(std::size_t t, double base, std::size_t warmup, std::size_t total);

// ---- batches --------------------------------------------------------------

/// Walks a shuffled permutation of the dataset, reshuffling when exhausted.
class BatchSampler {
 public:
  explicit BatchSampler(std::size_t n) : n_(n) {}
  std::vector<std::size_t> next(std::size_t batch, Rng& rng);

 private:
  std::size_t n_;
  std::vector<std::size_t> order_;
  std::size_t pos_ = 0;
};

struct Batch {
  Tensor x;
  std::vector<std::size_t> y;
};

/// Gathers the next batch, applies crop/flip (images) and Gaussian input noise.
Batch make_batch(const Dataset& data, BatchSampler& sampler, const TrainConfig& cfg, Rng& rng);

/// Random crop from an edge-padded copy plus a coin-flip horizontal mirror, per image.
void augment_images(Tensor& images, std::size_t pad, Rng& rng);

// ---- training -------------------------------------------------------------

struct TrainRecord {
  std::size_t iter = 0;
  double loss = 0.0;
  double l_d = 0.0;
  double l_g = 0.0;
  double c = 0.0;
  double g_d = 0.0;
  double g_g = 0.0;
  double lr = 0.0;
  double holdout_acc = 0.0;
};

struct TrainLog {
  std::vector<TrainRecord> records;
  std::optional<std::string> divergence;  // set when the run aborted

  std::string to_csv() const;
  void write_csv(const std::filesystem::path& path) const;
};

/// State of one Algorithm-1 run: model, optimizer moments, replay buffer and
/// the single random stream every stochastic step draws from.
class Trainer {
 public:
  Trainer(EnergyModel model, const Dataset& data, TrainConfig cfg);

  /// One iteration on an already prepared batch. Throws DivergenceError or
  /// SamplerDivergence without modifying the model.
  TrainRecord step(const Batch& batch);

  /// Draws the next batch from `data` with this trainer's stream and runs step().
  TrainRecord step(const Dataset& data);

  const EnergyModel& model() const { return model_; }
  EnergyModel& model() { return model_; }
  const AdamState& adam() const { return adam_; }
  AdamState& adam() { return adam_; }
  const ReplayBuffer& buffer() const { return buffer_; }
  Rng& rng() { return rng_; }
  BatchSampler& sampler() { return sampler_; }
  const TrainConfig& config() const { return cfg_; }
  std::size_t iteration() const { return iter_; }

  /// Update direction of the last step (what Adam received).
  const std::vector<Tensor>& last_update_grad() const { return last_grad_; }

  Checkpoint checkpoint() const;

 private:
  EnergyModel model_;
  TrainConfig cfg_;
  AdamState adam_;
  ReplayBuffer buffer_;
  Rng rng_;
  BatchSampler sampler_;
  std::size_t iter_ = 0;
  std::vector<Tensor> last_grad_;
};

/// Seed of the trainer's stream; the model is built from cfg.seed itself.
std::uint64_t trainer_stream_seed(std::uint64_t seed);

double accuracy(const EnergyModel& model, const Dataset& data);

struct TrainResult {
  EnergyModel model;
  TrainLog log;
  Checkpoint checkpoint;
};

/// Raised by train(); carries the model as it stood before the failing step.
class TrainingDiverged : public DivergenceError {
 public:
  TrainingDiverged(const std::string& what, Checkpoint last_good, TrainLog log)
      : DivergenceError(what), last_good(std::move(last_good)), log(std::move(log)) {}
  Checkpoint last_good;
  TrainLog log;
};

/// Runs cfg.iters iterations from build(cfg_net, cfg.seed) or `init`.
/// `holdout` may be empty, in which case the held-out accuracy column is 0.
TrainResult train(const Dataset& train_set, const Dataset& holdout, const NetworkSpec& net, const TrainConfig& cfg,
                  std::optional<EnergyModel> init = std::nullopt);

// ---- alpha sweeps ---------------------------------------------------------

/// The 11-point grid 0.0, 0.1, ..., 1.0.
std::vector<double> default_alpha_grid();

using Evaluator = std::function<void(const EnergyModel&, MetricsReport&)>;

struct SweepRun {
  double alpha = 0.0;
  std::uint64_t seed = 0;
  std::filesystem::path dir;
  std::filesystem::path checkpoint;
  MetricsReport report;
  bool ok = false;
};

struct SweepOptions {
  std::vector<double> alphas = default_alpha_grid();
  std::vector<std::uint64_t> seeds{0};
  std::filesystem::path out_dir;
  std::size_t threads = 0;  // 0: JEMLAB_THREADS or hardware concurrency
  bool timestamp = true;
  /// Called with each run directory before training starts.
  std::function<void(const std::filesystem::path&, const TrainConfig&)> on_run_dir;
};

/// Directory name of one run, e.g. "alpha_0.30_seed_0".
std::string run_dir_name(double alpha, std::uint64_t seed);

/// Trains one model per (alpha, seed) with otherwise identical configs. Each
/// run gets its own directory (checkpoint, train_log.csv); failures are
/// recorded in the report status and do not stop the sweep. Writes
/// sweep.csv and sweep.json to out_dir. Results are ordered by (alpha, seed).
std::vector<SweepRun> sweep_alpha(const Dataset& train_set, const Dataset& holdout, const NetworkSpec& net,
                                  const TrainConfig& base, const SweepOptions& opts, const Evaluator& evaluate);

/// Worker count: explicit request, else JEMLAB_THREADS, else hardware concurrency; at least 1.
std::size_t worker_count(std::size_t requested, std::size_t jobs);

}  // namespace jemlab
