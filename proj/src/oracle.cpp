#include "jemlab/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jemlab/energy.hpp"
#include "jemlab/error.hpp"
#include "jemlab/trainer.hpp"

namespace jemlab {

namespace {

constexpr std::size_t kChunk = 4096;

}  // namespace

Grid Grid::box(std::size_t dims, double lo, double hi, std::size_t n) {
  Grid g{std::vector<double>(dims, lo), std::vector<double>(dims, hi), std::vector<std::size_t>(dims, n)};
  g.validate();
  return g;
}

void Grid::validate() const {
  if (n.empty() || n.size() > 3) throw ConfigError("grid dimension must be 1, 2 or 3");
  if (lo.size() != n.size() || hi.size() != n.size()) throw ConfigError("grid bounds do not match its dimension");
  double total = 1.0;
  for (std::size_t i = 0; i < n.size(); ++i) {
    if (!(lo[i] < hi[i])) throw ConfigError("grid bounds must satisfy lo < hi");
    if (n[i] < 2) throw ConfigError("grid resolution must be >= 2");
    total *= static_cast<double>(n[i]);
  }
  if (total > static_cast<double>(kMaxGridCells)) {
    throw ConfigError("grid has " + std::to_string(static_cast<unsigned long long>(total)) + " cells, budget is " +
                      std::to_string(kMaxGridCells));
  }
}

std::size_t Grid::cells() const {
  std::size_t c = 1;
  for (auto v : n) c *= v;
  return c;
}

double Grid::cell_volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < n.size(); ++i) v *= width(i);
  return v;
}

double Grid::volume() const {
  double v = 1.0;
  for (std::size_t i = 0; i < n.size(); ++i) v *= hi[i] - lo[i];
  return v;
}

Tensor Grid::centers(std::size_t first, std::size_t count) const {
  const std::size_t d = dims();
  Tensor out(Shape{count, d});
  std::vector<std::size_t> idx(d);
  for (std::size_t c = 0; c < count; ++c) {
    std::size_t flat = first + c;
    for (std::size_t k = d; k-- > 0;) {
      idx[k] = flat % n[k];
      flat /= n[k];
    }
    for (std::size_t k = 0; k < d; ++k) {
      out[c * d + k] = lo[k] + (static_cast<double>(idx[k]) + 0.5) * width(k);
    }
  }
  return out;
}

std::optional<std::size_t> Grid::cell_of(std::span<const double> x) const {
  if (x.size() != dims()) throw DimensionError("point dimension does not match grid");
  std::size_t flat = 0;
  for (std::size_t k = 0; k < dims(); ++k) {
    if (!(x[k] >= lo[k] && x[k] <= hi[k])) return std::nullopt;
    auto i = static_cast<std::size_t>((x[k] - lo[k]) / width(k));
    i = std::min(i, n[k] - 1);
    flat = flat * n[k] + i;
  }
  return flat;
}

Grid Grid::refined(std::size_t factor) const {
  Grid g = *this;
  for (auto& v : g.n) v *= factor;
  g.validate();
  return g;
}

namespace {

std::vector<double> negative_energies(const EnergyLandscape& landscape, const Grid& grid) {
  grid.validate();
  std::vector<double> out;
  out.reserve(grid.cells());
  for (std::size_t first = 0; first < grid.cells(); first += kChunk) {
    const std::size_t count = std::min(kChunk, grid.cells() - first);
    const Tensor e = landscape.energy(grid.centers(first, count));
    for (double v : e.data()) out.push_back(-v);
  }
  return out;
}

// Streaming log-sum-exp in a fixed order.
double stream_logsumexp(std::span<const double> values) {
  double m = -std::numeric_limits<double>::infinity();
  double s = 0.0;
  for (double v : values) {
    if (!std::isfinite(v)) throw DivergenceError("non-finite energy on the oracle grid");
    if (v > m) {
      s = s * std::exp(m - v) + 1.0;
      m = v;
    } else {
      s += std::exp(v - m);
    }
  }
  return m + std::log(s);
}

void check_model_dims(const EnergyModel& model, const Grid& grid) {
  if (model.input_shape().size() != 1 || model.input_size() != grid.dims()) {
    throw DimensionError("model input " + shape_string(model.input_shape()) + " does not match a " +
                         std::to_string(grid.dims()) + "-d grid");
  }
}

}  // namespace

double log_partition(const EnergyLandscape& landscape, const Grid& grid) {
  const auto neg = negative_energies(landscape, grid);
  return stream_logsumexp(neg) + std::log(grid.cell_volume());
}

double log_partition(const EnergyModel& model, const Grid& grid) {
  check_model_dims(model, grid);
  return log_partition(ModelLandscape(model), grid);
}

double partition_function(const EnergyModel& model, const Grid& grid) { return std::exp(log_partition(model, grid)); }

Tensor density_from_log(std::span<const double> log_values, const Grid& grid) {
  if (log_values.size() != grid.cells()) throw DimensionError("field size does not match grid cells");
  const double log_z = stream_logsumexp(log_values) + std::log(grid.cell_volume());
  Tensor out(grid.field_shape());
  for (std::size_t i = 0; i < log_values.size(); ++i) out[i] = std::exp(log_values[i] - log_z);
  return out;
}

Tensor exact_density(const EnergyLandscape& landscape, const Grid& grid) {
  return density_from_log(negative_energies(landscape, grid), grid);
}

Tensor exact_density(const EnergyModel& model, const Grid& grid) {
  check_model_dims(model, grid);
  return exact_density(ModelLandscape(model), grid);
}

namespace {

// Accumulates sum_i w_i dE(x_i)/dtheta into `acc`.
void accumulate_weighted_grad(const EnergyModel& model, const Tensor& x, std::span<const double> w,
                              std::vector<Tensor>& acc) {
  ad::Tape tape;
  auto params = bind_params(tape, model, true);
  auto e = marginal_energy_on(forward_on(model, params, tape.constant(x)));
  Tensor wt(Shape{w.size()}, std::vector<double>(w.begin(), w.end()));
  tape.backward(ad::sum(ad::mul(e, tape.constant(std::move(wt)))));
  for (std::size_t i = 0; i < params.vars.size(); ++i) {
    const Tensor g = tape.grad(params.vars[i]);
    for (std::size_t j = 0; j < g.size(); ++j) acc[i][j] += g[j];
  }
}

}  // namespace

std::vector<Tensor> exact_ml_gradient(const EnergyModel& model, const Grid& grid, const Tensor& data) {
  check_model_dims(model, grid);
  const std::size_t m = batch_size_for(model, data);
  if (m == 0) throw UsageError("empty data batch");
  std::vector<Tensor> data_term, model_term;
  for (const auto& p : model.params()) {
    data_term.emplace_back(p.shape());
    model_term.emplace_back(p.shape());
  }
  accumulate_weighted_grad(model, data, std::vector<double>(m, 1.0 / static_cast<double>(m)), data_term);

  const Tensor density = exact_density(model, grid);
  const double vol = grid.cell_volume();
  std::vector<double> w;
  for (std::size_t first = 0; first < grid.cells(); first += kChunk) {
    const std::size_t count = std::min(kChunk, grid.cells() - first);
    w.resize(count);
    for (std::size_t i = 0; i < count; ++i) w[i] = density[first + i] * vol;
    accumulate_weighted_grad(model, grid.centers(first, count), w, model_term);
  }
  for (std::size_t i = 0; i < data_term.size(); ++i) {
    for (std::size_t j = 0; j < data_term[i].size(); ++j) data_term[i][j] -= model_term[i][j];
  }
  return data_term;
}

Divergence density_divergence(const Tensor& samples, const Tensor& density, const Grid& grid) {
  grid.validate();
  if (density.size() != grid.cells()) throw DimensionError("density field does not match grid");
  if (samples.rank() != 2 || samples.dim(1) != grid.dims()) throw DimensionError("samples must be [M x d]");
  const std::size_t m = samples.dim(0);
  if (m == 0) throw UsageError("no samples");
  std::vector<double> hist(grid.cells(), 0.0);
  std::size_t outside = 0;
  for (std::size_t i = 0; i < m; ++i) {
    if (auto c = grid.cell_of(samples.row_span(i))) {
      hist[*c] += 1.0;
    } else {
      ++outside;
    }
  }
  const double vol = grid.cell_volume();
  const double inv_m = 1.0 / static_cast<double>(m);
  Divergence d;
  d.outside = static_cast<double>(outside) * inv_m;
  double l1 = d.outside;
  for (std::size_t c = 0; c < hist.size(); ++c) {
    const double ph = hist[c] * inv_m;
    const double p = density[c] * vol;
    l1 += std::abs(ph - p);
    if (ph > 0.0) d.kl += ph * std::log((ph + kKlSmoothing) / (p + kKlSmoothing));
  }
  d.tv = 0.5 * l1;
  return d;
}

Divergence density_divergence(const Tensor& samples, const EnergyModel& model, const Grid& grid) {
  return density_divergence(samples, exact_density(model, grid), grid);
}

double density_tv(const Tensor& p, const Tensor& q, const Grid& grid) {
  if (p.size() != grid.cells() || q.size() != grid.cells()) throw DimensionError("density fields do not match grid");
  double l1 = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) l1 += std::abs(p[i] - q[i]);
  return 0.5 * l1 * grid.cell_volume();
}

Tensor sample_density(const Tensor& density, const Grid& grid, std::size_t count, Rng& rng) {
  if (density.size() != grid.cells()) throw DimensionError("density field does not match grid");
  std::vector<double> cdf(density.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < density.size(); ++i) {
    acc += density[i];
    cdf[i] = acc;
  }
  const std::size_t d = grid.dims();
  Tensor out(Shape{count, d});
  for (std::size_t s = 0; s < count; ++s) {
    const double u = rng.uniform() * acc;
    auto it = std::upper_bound(cdf.begin(), cdf.end(), u);
    std::size_t flat = std::min<std::size_t>(static_cast<std::size_t>(it - cdf.begin()), cdf.size() - 1);
    const Tensor center = grid.centers(flat, 1);
    for (std::size_t k = 0; k < d; ++k) {
      out[s * d + k] = center[k] + (rng.uniform() - 0.5) * grid.width(k);
    }
  }
  return out;
}

double gradient_cosine(std::span<const Tensor> a, std::span<const Tensor> b) {
  if (a.size() != b.size()) throw DimensionError("gradient sets differ in length");
  double dot = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (a[i].shape() != b[i].shape()) throw DimensionError("gradient shapes differ");
    for (std::size_t j = 0; j < a[i].size(); ++j) dot += a[i][j] * b[i][j];
  }
  const double na = global_norm(a), nb = global_norm(b);
  if (na == 0.0 || nb == 0.0) throw UndefinedError("cosine similarity with a zero gradient");
  return dot / (na * nb);
}

Tensor grid_negatives(const EnergyModel& model, const Grid& grid, std::size_t count, std::size_t steps, double eta,
                      Rng& rng) {
  check_model_dims(model, grid);
  const std::size_t d = grid.dims();
  Tensor x(Shape{count, d});
  for (std::size_t i = 0; i < count; ++i) {
    for (std::size_t k = 0; k < d; ++k) x[i * d + k] = rng.uniform(grid.lo[k], grid.hi[k]);
  }
  const ModelLandscape land(model);
  for (std::size_t t = 0; t < steps; ++t) {
    x = langevin_step(land, x, eta, rng);
    for (std::size_t i = 0; i < count; ++i) {
      for (std::size_t k = 0; k < d; ++k) x[i * d + k] = std::clamp(x[i * d + k], grid.lo[k], grid.hi[k]);
    }
  }
  return x;
}

OracleCheckReport oracle_check(const EnergyModel& model, const Tensor& data, const OracleCheckConfig& cfg) {
  cfg.grid.validate();
  OracleCheckReport r;
  r.log_z = log_partition(model, cfg.grid);
  r.z = std::exp(r.log_z);
  const Tensor density = exact_density(model, cfg.grid);
  double mass = 0.0;
  for (double v : density.data()) mass += v;
  r.normalization_residual = std::abs(mass * cfg.grid.cell_volume() - 1.0);

  Rng rng(cfg.seed);
  const Tensor neg = grid_negatives(model, cfg.grid, cfg.negatives, cfg.chain_steps, cfg.langevin_eta, rng);
  auto cd = cd_gradient(model, data, neg);
  if (cfg.flip_cd_sign) {
    for (auto& t : cd) {
      for (auto& v : t.data()) v = -v;
    }
  }
  const auto exact = exact_ml_gradient(model, cfg.grid, data);
  r.cosine = gradient_cosine(cd, exact);
  const auto div = density_divergence(neg, density, cfg.grid);
  r.tv = div.tv;
  r.kl = div.kl;

  if (!(r.normalization_residual <= cfg.tol_normalization)) {
    r.violations.push_back("normalization residual " + format_number(r.normalization_residual) + " > " +
                           format_number(cfg.tol_normalization));
  }
  if (!(r.cosine >= cfg.tol_cosine)) {
    r.violations.push_back("CD/exact gradient cosine " + format_number(r.cosine) + " < " +
                           format_number(cfg.tol_cosine));
  }
  if (cfg.tol_tv && !(r.tv <= *cfg.tol_tv)) {
    r.violations.push_back("sample TV " + format_number(r.tv) + " > " + format_number(*cfg.tol_tv));
  }
  return r;
}

}  // namespace jemlab
