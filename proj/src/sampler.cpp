#include "jemlab/sampler.hpp"

#include <algorithm>
#include <cmath>

#include "jemlab/energy.hpp"
#include "jemlab/error.hpp"

namespace jemlab {

Tensor ModelLandscape::score(const Tensor& batch) const {
  Tensor g = marginal_energy_input_grad(model_, batch);
  for (auto& v : g.data()) v = -v;
  return g;
}

Tensor ModelLandscape::energy(const Tensor& batch) const { return marginal_energies(model_, batch); }

Tensor QuadraticLandscape::score(const Tensor& batch) const {
  Tensor g = batch;
  for (auto& v : g.data()) v *= -curvature_;
  return g;
}

Tensor QuadraticLandscape::energy(const Tensor& batch) const {
  const std::size_t b = batch.dim(0);
  Tensor out(Shape{b});
  for (std::size_t i = 0; i < b; ++i) {
    double s = 0.0;
    for (double v : batch.row_span(i)) s += v * v;
    out[i] = 0.5 * curvature_ * s;
  }
  return out;
}

void SgldConfig::validate() const {
  if (steps < 1) throw ConfigError("sgld steps must be >= 1");
  if (!(step_size >= 0.0)) throw ConfigError("sgld step size must be >= 0");
  if (!(noise >= 0.0)) throw ConfigError("sgld noise must be >= 0");
  if (clip && !(clip_lo < clip_hi)) throw ConfigError("sgld clip range is empty");
}

namespace {

void check_finite(const Tensor& t, const char* what, double step, double noise) {
  std::size_t bad = 0, first = 0;
  for (std::size_t i = 0; i < t.size(); ++i) {
    if (!std::isfinite(t[i])) {
      if (bad == 0) first = i;
      ++bad;
    }
  }
  if (bad) {
    throw SamplerDivergence(std::string("sampler diverged: ") + std::to_string(bad) + " non-finite " + what +
                            " entries (first at flat index " + std::to_string(first) + "), step=" +
                            std::to_string(step) + " noise=" + std::to_string(noise));
  }
}

}  // namespace

Tensor sgld_step(const EnergyLandscape& landscape, const Tensor& x, double step, double noise, Rng& rng, bool clip,
                 double clip_lo, double clip_hi) {
  if (!(step >= 0.0) || !(noise >= 0.0)) throw UsageError("sgld step and noise must be non-negative");
  Tensor out = x;
  if (step != 0.0) {
    const Tensor g = landscape.score(x);
    check_finite(g, "gradient", step, noise);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += step * g[i];
  }
  if (noise != 0.0) {
    for (auto& v : out.data()) v += noise * rng.normal();
  }
  check_finite(out, "sample", step, noise);
  if (clip) {
    for (auto& v : out.data()) v = std::clamp(v, clip_lo, clip_hi);
  }
  return out;
}

Tensor langevin_step(const EnergyLandscape& landscape, const Tensor& x, double eta, Rng& rng) {
  return sgld_step(landscape, x, eta / 2.0, std::sqrt(eta), rng);
}

double step_at(const SgldConfig& cfg, std::size_t t, std::size_t total) {
  if (cfg.decay == StepDecay::constant) return cfg.step_size;
  return cfg.step_size * (1.0 - static_cast<double>(t) / static_cast<double>(total));
}

Tensor sample_chain(const EnergyLandscape& landscape, const Tensor& x0, const SgldConfig& cfg, Rng& rng) {
  cfg.validate();
  Tensor x = x0;
  for (std::size_t t = 0; t < cfg.steps; ++t) {
    x = sgld_step(landscape, x, step_at(cfg, t, cfg.steps), cfg.noise, rng, cfg.clip, cfg.clip_lo, cfg.clip_hi);
  }
  return x;
}

std::vector<Tensor> refine(const EnergyLandscape& landscape, const Tensor& x, std::size_t steps, const SgldConfig& cfg,
                           Rng& rng, StepDecay decay) {
  SgldConfig c = cfg;
  c.decay = decay;
  std::vector<Tensor> traj;
  traj.reserve(steps + 1);
  traj.push_back(x);
  for (std::size_t t = 0; t < steps; ++t) {
    traj.push_back(sgld_step(landscape, traj.back(), step_at(c, t, steps), c.noise, rng, c.clip, c.clip_lo, c.clip_hi));
  }
  return traj;
}

ReplayBuffer::ReplayBuffer(Shape sample_shape, std::vector<double> lo, std::vector<double> hi, BufferConfig cfg)
    : shape_(std::move(sample_shape)), lo_(std::move(lo)), hi_(std::move(hi)), cfg_(cfg) {
  const auto n = shape_numel(shape_);
  if (lo_.size() != n || hi_.size() != n) throw ConfigError("replay buffer init box does not match sample shape");
  if (cfg_.capacity == 0) throw ConfigError("replay buffer capacity must be positive");
  if (!(cfg_.reinit >= 0.0 && cfg_.reinit <= 1.0)) throw ConfigError("replay buffer reinit probability outside [0,1]");
  for (std::size_t i = 0; i < n; ++i) {
    if (!(lo_[i] < hi_[i])) throw ConfigError("replay buffer init box is empty");
  }
}

ReplayBuffer ReplayBuffer::uniform_box(Shape sample_shape, double lo, double hi, BufferConfig cfg) {
  const auto n = shape_numel(sample_shape);
  return ReplayBuffer(std::move(sample_shape), std::vector<double>(n, lo), std::vector<double>(n, hi), cfg);
}

Tensor ReplayBuffer::fresh(std::size_t batch, Rng& rng) const {
  Shape s{batch};
  s.insert(s.end(), shape_.begin(), shape_.end());
  Tensor out(s);
  const auto n = lo_.size();
  for (std::size_t b = 0; b < batch; ++b) {
    for (std::size_t i = 0; i < n; ++i) out[b * n + i] = rng.uniform(lo_[i], hi_[i]);
  }
  return out;
}

Tensor ReplayBuffer::draw(std::size_t batch, Rng& rng) const {
  if (batch == 0) throw UsageError("buffer draw of zero samples");
  Shape s{batch};
  s.insert(s.end(), shape_.begin(), shape_.end());
  Tensor out(s);
  const auto n = lo_.size();
  for (std::size_t b = 0; b < batch; ++b) {
    auto row = out.row_span(b);
    if (store_.empty() || rng.bernoulli(cfg_.reinit)) {
      for (std::size_t i = 0; i < n; ++i) row[i] = rng.uniform(lo_[i], hi_[i]);
    } else {
      const auto& src = store_[rng.index(store_.size())];
      std::copy(src.begin(), src.end(), row.begin());
    }
  }
  return out;
}

void ReplayBuffer::push(const Tensor& samples) {
  if (samples.rank() != shape_.size() + 1 || !std::equal(shape_.begin(), shape_.end(), samples.shape().begin() + 1)) {
    throw DimensionError("buffer push of shape " + shape_string(samples.shape()) + ", samples are " +
                         shape_string(shape_));
  }
  for (std::size_t b = 0; b < samples.dim(0); ++b) {
    auto row = samples.row_span(b);
    store_.emplace_back(row.begin(), row.end());
    if (store_.size() > cfg_.capacity) store_.pop_front();
  }
}

Tensor ReplayBuffer::at(std::size_t i) const {
  return Tensor(shape_, store_.at(i));
}

}  // namespace jemlab
