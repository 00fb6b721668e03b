#include "jemlab/energy.hpp"

#include <algorithm>
#include <cmath>

#include "jemlab/error.hpp"

namespace jemlab {

namespace {

// Accepts a single sample (model input shape) or a batch of one.
Tensor as_batch(const EnergyModel& model, const Tensor& x) {
  if (x.shape() == model.input_shape()) {
    Shape s{1};
    s.insert(s.end(), x.shape().begin(), x.shape().end());
    return x.reshaped(std::move(s));
  }
  if (batch_size_for(model, x) != 1) throw DimensionError("expected a single input, got a batch");
  return x;
}

std::vector<double> single_logits(const EnergyModel& model, const Tensor& x) {
  const Tensor out = forward(model, as_batch(model, x));
  return out.values();
}

void check_label(const EnergyModel& model, std::size_t y) {
  if (y >= model.classes()) {
    throw UsageError("label " + std::to_string(y) + " out of range for " + std::to_string(model.classes()) +
                     " classes");
  }
}

}  // namespace

double joint_energy_from_logits(std::span<const double> logits, std::size_t y) {
  if (y >= logits.size()) throw UsageError("label out of range");
  return -logits[y];
}

double marginal_energy_from_logits(std::span<const double> logits) { return -ad::logsumexp(logits); }

std::vector<double> log_softmax(std::span<const double> logits) {
  const double lse = ad::logsumexp(logits);
  std::vector<double> out(logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i) out[i] = logits[i] - lse;
  return out;
}

std::vector<double> softmax(std::span<const double> logits) {
  auto out = log_softmax(logits);
  for (auto& v : out) v = std::exp(v);
  return out;
}

double joint_energy(const EnergyModel& model, const Tensor& x, std::size_t y) {
  check_label(model, y);
  return joint_energy_from_logits(single_logits(model, x), y);
}

double marginal_energy(const EnergyModel& model, const Tensor& x) {
  return marginal_energy_from_logits(single_logits(model, x));
}

Tensor class_posterior(const EnergyModel& model, const Tensor& x) {
  auto p = softmax(single_logits(model, x));
  const std::size_t k = p.size();
  return Tensor(Shape{k}, std::move(p));
}

double decomposition_residual(const EnergyModel& model, const Tensor& x, std::size_t y) {
  check_label(model, y);
  const auto logits = single_logits(model, x);
  const double joint = joint_energy_from_logits(logits, y);
  const double marginal = marginal_energy_from_logits(logits);
  return (joint - marginal) + log_softmax(logits)[y];
}

Tensor marginal_energies(const EnergyModel& model, const Tensor& batch) {
  const Tensor logits = forward(model, batch);
  const std::size_t b = logits.dim(0);
  Tensor out(Shape{b});
  for (std::size_t i = 0; i < b; ++i) out[i] = marginal_energy_from_logits(logits.row_span(i));
  return out;
}

Tensor class_posteriors(const EnergyModel& model, const Tensor& batch) {
  Tensor logits = forward(model, batch);
  for (std::size_t i = 0; i < logits.dim(0); ++i) {
    auto row = logits.row_span(i);
    const auto p = softmax(row);
    std::copy(p.begin(), p.end(), row.begin());
  }
  return logits;
}

std::vector<std::size_t> predict(const EnergyModel& model, const Tensor& batch) {
  const Tensor logits = forward(model, batch);
  std::vector<std::size_t> out(logits.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto row = logits.row_span(i);
    out[i] = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
  }
  return out;
}

ad::Var marginal_energy_on(ad::Var logits) { return ad::scale(ad::logsumexp(logits), -1.0); }

Tensor marginal_energy_input_grad(const EnergyModel& model, const Tensor& batch) {
  ad::Tape tape;
  auto params = bind_params(tape, model, false);
  auto x = tape.variable(batch);
  auto energy = ad::sum(marginal_energy_on(forward_on(model, params, x)));
  tape.backward(energy);
  return tape.grad(x);
}

}  // namespace jemlab
