#include <doctest.h>

#include <cmath>

#include "jemlab/energy.hpp"
#include "jemlab/error.hpp"
#include "support.hpp"

using namespace jemlab;

namespace {

// Model whose logits are `logits` for every input (zero weights, bias = logits).
EnergyModel logit_model(std::vector<double> logits) {
  const std::size_t k = logits.size();
  NetworkSpec spec;
  spec.input_shape = {1};
  spec.classes = k;
  spec.layers = {LayerSpec::make_affine(k)};
  return EnergyModel(spec, {Tensor(Shape{k, 1}), Tensor(Shape{k}, std::move(logits))});
}

const Tensor kX = Tensor::vector({0.0});

}  // namespace

TEST_CASE("joint energy is the negated logit") {
  const auto m = logit_model({2, -1});
  CHECK(joint_energy(m, kX, 0) == -2.0);
  CHECK(joint_energy(m, kX, 1) == 1.0);
  CHECK(joint_energy(logit_model({0, 0, 0}), kX, 2) == 0.0);
  CHECK_THROWS_AS(joint_energy(m, kX, 2), UsageError);
}

TEST_CASE("marginal energy is the negated logsumexp") {
  CHECK(marginal_energy(logit_model({0, 0}), kX) == doctest::Approx(-std::log(2.0)).epsilon(1e-15));
  CHECK(marginal_energy(logit_model({4.5}), kX) == -4.5);
  CHECK(marginal_energy(logit_model({1000, -1000}), kX) == -1000.0);
}

TEST_CASE("class posterior hand values and shift invariance") {
  CHECK(class_posterior(logit_model({0, 0}), kX) == Tensor::vector({0.5, 0.5}));
  const auto p = class_posterior(logit_model({std::log(3.0), 0}), kX);
  CHECK(p[0] == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.25).epsilon(1e-15));
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> l(2 + rng.index(5));
    for (auto& v : l) v = 5 * rng.normal();
    auto shifted = l;
    const double c = 50 * rng.normal();
    for (auto& v : shifted) v += c;
    const auto a = class_posterior(logit_model(l), kX);
    const auto b = class_posterior(logit_model(shifted), kX);
    for (std::size_t k = 0; k < l.size(); ++k) CHECK(std::abs(a[k] - b[k]) < 1e-12);
  }
}

TEST_CASE("decomposition residual vanishes") {
  CHECK(std::abs(decomposition_residual(logit_model({2, -1}), kX, 0)) < 1e-15);
  CHECK(decomposition_residual(logit_model({3.7}), kX, 0) == 0.0);
  Rng rng(2);
  for (std::size_t n = 0; n < 40; ++n) {
    const auto spec = testing::random_spec(n, rng);
    const auto model = build(spec, n);
    const Tensor x = testing::random_tensor(spec.input_shape, rng, 2.0);
    for (std::size_t y = 0; y < spec.classes; ++y) CHECK(std::abs(decomposition_residual(model, x, y)) < 1e-10);
  }
}

TEST_CASE("marginal energy strictly decreases when a logit increases") {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> l(2 + rng.index(4));
    for (auto& v : l) v = 3 * rng.normal();
    auto up = l;
    up[rng.index(l.size())] += 0.1 + rng.uniform();
    CHECK(marginal_energy(logit_model(up), kX) < marginal_energy(logit_model(l), kX));
  }
}

TEST_CASE("batched helpers agree with the single-input forms") {
  const auto model = build(mlp_spec(2, 8, 3), 4);
  Rng rng(4);
  const Tensor batch = testing::random_tensor({5, 2}, rng);
  const Tensor e = marginal_energies(model, batch);
  const Tensor p = class_posteriors(model, batch);
  const auto pred = predict(model, batch);
  for (std::size_t b = 0; b < 5; ++b) {
    CHECK(e[b] == marginal_energy(model, batch.row(b)));
    CHECK(p.row(b) == class_posterior(model, batch.row(b)));
    auto row = p.row_span(b);
    CHECK(pred[b] == static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin()));
  }
}

TEST_CASE("input gradient of the marginal energy matches central differences") {
  const auto model = build(mlp_spec(2, 8, 3), 5);
  Rng rng(5);
  const Tensor batch = testing::random_tensor({3, 2}, rng);
  const Tensor g = marginal_energy_input_grad(model, batch);
  for (std::size_t i = 0; i < batch.size(); ++i) {
    Tensor p = batch, m = batch;
    p[i] += 1e-5;
    m[i] -= 1e-5;
    double fp = 0, fm = 0;
    const Tensor ep = marginal_energies(model, p), em = marginal_energies(model, m);
    for (double v : ep.data()) fp += v;
    for (double v : em.data()) fm += v;
    CHECK(std::abs((fp - fm) / 2e-5 - g[i]) < 1e-6 * std::max(1.0, std::abs(g[i])));
  }
}
