#pragma once

#include <span>
#include <vector>

#include "jemlab/network.hpp"

namespace jemlab {

// Energies read off the logits f(x):
//   joint     E(x, y) = -f(x)[y]
//   marginal  E(x)    = -logsumexp_y f(x)[y]
//   posterior p(y|x)  = softmax(f(x))[y]
// The partition function is never formed here; normalized input densities
// live in the oracle module.

double joint_energy(const EnergyModel& model, const Tensor& x, std::size_t y);
double marginal_energy(const EnergyModel& model, const Tensor& x);
Tensor class_posterior(const EnergyModel& model, const Tensor& x);

/// [E(x,y) - E(x)] + log p(y|x); zero up to rounding for every model.
double decomposition_residual(const EnergyModel& model, const Tensor& x, std::size_t y);

/// Marginal energy of each row of a batch -> [B].
Tensor marginal_energies(const EnergyModel& model, const Tensor& batch);
/// Class posteriors of each row -> [B x K].
Tensor class_posteriors(const EnergyModel& model, const Tensor& batch);
/// Most probable class per row.
std::vector<std::size_t> predict(const EnergyModel& model, const Tensor& batch);

/// Gradient of sum_b E(x_b) with respect to the batch; row b is dE(x_b)/dx_b.
Tensor marginal_energy_input_grad(const EnergyModel& model, const Tensor& batch);

// Logit-level helpers.
double joint_energy_from_logits(std::span<const double> logits, std::size_t y);
double marginal_energy_from_logits(std::span<const double> logits);
std::vector<double> softmax(std::span<const double> logits);
std::vector<double> log_softmax(std::span<const double> logits);

/// Recorded marginal energies -E(x) for logits [B x K] -> [B].
ad::Var marginal_energy_on(ad::Var logits);

}  // namespace jemlab
