#pragma once

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "jemlab/network.hpp"
#include "jemlab/rng.hpp"
#include "jemlab/sampler.hpp"

namespace jemlab {

// Exact quantities on a box of at most three input dimensions. Every density
// here is the model's density restricted to the grid box: the integral over
// R^d is replaced by midpoint quadrature over the box.

inline constexpr std::size_t kMaxGridCells = 10'000'000;

/// Axis-aligned box split into n[i] equal cells per dimension; cells are
/// enumerated row-major with the last dimension fastest.
struct Grid {
  std::vector<double> lo, hi;
  std::vector<std::size_t> n;

  static Grid box(std::size_t dims, double lo, double hi, std::size_t n);

  void validate() const;
  std::size_t dims() const { return n.size(); }
  std::size_t cells() const;
  double cell_volume() const;
  double volume() const;
  double width(std::size_t dim) const { return (hi[dim] - lo[dim]) / static_cast<double>(n[dim]); }

  /// Cell centers [count x d] for cells [first, first + count).
  Tensor centers(std::size_t first, std::size_t count) const;
  Tensor centers() const { return centers(0, cells()); }

  /// Flat index of the cell containing x, or nothing when x is outside the box.
  std::optional<std::size_t> cell_of(std::span<const double> x) const;

  /// Same box with every resolution multiplied by `factor`.
  Grid refined(std::size_t factor) const;

  /// Shape of a field over the cells, e.g. {n0, n1}.
  Shape field_shape() const { return Shape(n.begin(), n.end()); }
};

/// log Z = log sum_cells vol * exp(-E(center)), accumulated in log space in cell order.
double log_partition(const EnergyLandscape& landscape, const Grid& grid);
double log_partition(const EnergyModel& model, const Grid& grid);
/// Z itself; may overflow to inf where log_partition does not.
double partition_function(const EnergyModel& model, const Grid& grid);

/// Normalized density per cell (shape grid.field_shape()); sum(p) * vol = 1.
Tensor exact_density(const EnergyLandscape& landscape, const Grid& grid);
Tensor exact_density(const EnergyModel& model, const Grid& grid);

/// Normalizes per-cell log densities (unnormalized) into a density field.
Tensor density_from_log(std::span<const double> log_values, const Grid& grid);

/// Exact gradient of the negative log likelihood restricted to the box:
/// mean_data dE/dtheta - sum_cells p * vol * dE/dtheta, with E the marginal energy.
std::vector<Tensor> exact_ml_gradient(const EnergyModel& model, const Grid& grid, const Tensor& data);

struct Divergence {
  double tv = 0.0;
  double kl = 0.0;
  double outside = 0.0;  // fraction of samples that fell outside the box
};

inline constexpr double kKlSmoothing = 1e-9;

/// Histogram of `samples` [M x d] against the density field `density`.
/// TV = (sum_cells |P^ - P| + outside mass) / 2 over cell masses;
/// KL(P^ || P) with both masses smoothed by kKlSmoothing.
Divergence density_divergence(const Tensor& samples, const Tensor& density, const Grid& grid);
Divergence density_divergence(const Tensor& samples, const EnergyModel& model, const Grid& grid);

/// Half the L1 distance between two density fields on the same grid.
double density_tv(const Tensor& p, const Tensor& q, const Grid& grid);

/// Inverse-CDF draws from a density field, uniform within the chosen cell.
Tensor sample_density(const Tensor& density, const Grid& grid, std::size_t count, Rng& rng);

/// Cosine similarity of two parameter-gradient sets, flattened.
double gradient_cosine(std::span<const Tensor> a, std::span<const Tensor> b);

// ---- combined check --------------------------------------------------------

struct OracleCheckConfig {
  Grid grid = Grid::box(2, -4.0, 4.0, 128);
  std::size_t negatives = 512;
  std::size_t chain_steps = 200;
  double langevin_eta = 1e-3;  // negatives use drift eta/2 and noise sqrt(eta)
  std::uint64_t seed = 0;
  double tol_normalization = 1e-9;
  double tol_cosine = 0.9;
  std::optional<double> tol_tv;  // unset: reported only
  bool flip_cd_sign = false;     // fault injection for the gate itself
};

struct OracleCheckReport {
  double log_z = 0.0;
  double z = 0.0;
  double normalization_residual = 0.0;
  double cosine = 0.0;
  double tv = 0.0;
  double kl = 0.0;
  std::vector<std::string> violations;

  bool pass() const { return violations.empty(); }
};

/// Langevin negatives started uniformly on the grid box and clipped to it.
Tensor grid_negatives(const EnergyModel& model, const Grid& grid, std::size_t count, std::size_t steps, double eta,
                      Rng& rng);

/// Z, normalization residual, CD-vs-exact gradient cosine (data = `data`) and
/// the TV of the Langevin negatives against the exact density.
OracleCheckReport oracle_check(const EnergyModel& model, const Tensor& data, const OracleCheckConfig& cfg);

}  // namespace jemlab
