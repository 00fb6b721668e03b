#include <doctest.h>

#include <cmath>

#include "jemlab/error.hpp"
#include "jemlab/oracle.hpp"
#include "support.hpp"

using namespace jemlab;

namespace {

EnergyModel zero_model(std::size_t dims, std::size_t k) {
  NetworkSpec spec;
  spec.input_shape = {dims};
  spec.classes = k;
  spec.layers = {LayerSpec::make_affine(k)};
  return EnergyModel(spec, {Tensor(Shape{k, dims}), Tensor(Shape{k})});
}

// Single logit f(x) = -theta x, so E(x) = theta x.
EnergyModel linear_energy(double theta) {
  NetworkSpec spec;
  spec.input_shape = {1};
  spec.classes = 1;
  spec.layers = {LayerSpec::make_affine(1)};
  return EnergyModel(spec, {Tensor::matrix({{-theta}}), Tensor::vector({0.0})});
}

// Mean of the density proportional to exp(-theta x) on [0, 1].
double truncated_exp_mean(double theta) { return 1.0 / theta - 1.0 / std::expm1(theta); }

}  // namespace

TEST_CASE("grid geometry") {
  const Grid g = Grid::box(2, -1.0, 1.0, 4);
  CHECK(g.cells() == 16);
  CHECK(g.cell_volume() == 0.25);
  CHECK(g.volume() == 4.0);
  const Tensor c = g.centers(0, 2);
  CHECK(c == Tensor::matrix({{-0.75, -0.75}, {-0.75, -0.25}}));
  CHECK(*g.cell_of(std::vector<double>{-0.75, -0.25}) == 1);
  CHECK(*g.cell_of(std::vector<double>{1.0, 1.0}) == 15);
  CHECK_FALSE(g.cell_of(std::vector<double>{1.5, 0.0}));
  CHECK(g.refined(2).cells() == 64);
  Grid bad = g;
  bad.hi[0] = -2.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("partition function of constant logits") {
  const Grid g = Grid::box(2, -1.0, 1.0, 64);
  CHECK(partition_function(zero_model(2, 1), g) == doctest::Approx(4.0).epsilon(1e-12));
  CHECK(std::abs(partition_function(zero_model(2, 2), g) - 8.0) < 1e-6);
  CHECK(log_partition(zero_model(2, 2), g) == doctest::Approx(std::log(8.0)).epsilon(1e-12));
}

TEST_CASE("exact density is normalized, non-negative and uniform for constant logits") {
  const Grid g = Grid::box(2, -1.0, 1.0, 32);
  const Tensor p = exact_density(zero_model(2, 3), g);
  CHECK(p.shape() == Shape{32, 32});
  for (double v : p.data()) CHECK(v == doctest::Approx(0.25).epsilon(1e-12));
  Rng rng(1);
  for (std::size_t n = 0; n < 8; ++n) {
    const auto model = build(mlp_spec(2, 8, 3), n);
    const Tensor q = exact_density(model, Grid::box(2, -4.0, 4.0, 40));
    double mass = 0;
    for (double v : q.data()) {
      CHECK(v >= 0.0);
      mass += v * 0.04;
    }
    CHECK(std::abs(mass - 1.0) < 1e-9);
  }
}

TEST_CASE("log-space accumulation survives huge logits") {
  auto m = zero_model(2, 1);
  m.params()[1][0] = 800.0;
  const Grid g = Grid::box(2, -1.0, 1.0, 8);
  CHECK(log_partition(m, g) == doctest::Approx(800.0 + std::log(4.0)).epsilon(1e-14));
  CHECK(std::isinf(partition_function(m, g)));
  const Tensor p = exact_density(m, g);
  for (double v : p.data()) CHECK(v == doctest::Approx(0.25));
}

TEST_CASE("quadrature converges for a smooth small net") {
  auto spec = mlp_spec(2, 8, 2);
  const auto model = build(spec, 3);
  const Grid g = Grid::box(2, -2.0, 2.0, 128);
  const double z1 = partition_function(model, g);
  const double z2 = partition_function(model, g.refined(2));
  CHECK(std::abs(z2 / z1 - 1.0) < 1e-3);
}

TEST_CASE("partition function grows when a logit grows") {
  const auto model = build(mlp_spec(2, 8, 3), 4);
  const Grid g = Grid::box(2, -3.0, 3.0, 32);
  auto up = model;
  up.params().back()[1] += 0.3;  // output bias raises one logit at every cell
  CHECK(partition_function(up, g) > partition_function(model, g));
}

TEST_CASE("exact ML gradient of the truncated exponential") {
  const Grid g = Grid::box(1, 0.0, 1.0, 4000);
  for (double theta : {0.5, 2.0, -1.5}) {
    const auto model = linear_energy(theta);
    const Tensor data = Tensor::matrix({{0.1}, {0.4}, {0.9}});
    const auto grad = exact_ml_gradient(model, g, data);
    // dE/dW = -x, dE/db = -1; the bias term cancels exactly.
    CHECK(grad[0][0] == doctest::Approx(-(1.4 / 3.0 - truncated_exp_mean(theta))).epsilon(1e-6));
    CHECK(std::abs(grad[1][0]) < 1e-12);
    const Tensor at_mean = Tensor::matrix({{truncated_exp_mean(theta)}});
    CHECK(std::abs(exact_ml_gradient(model, g, at_mean)[0][0]) < 1e-6);
  }
}

TEST_CASE("divergence between fields and histograms") {
  const Grid g = Grid::box(2, -1.0, 1.0, 4);
  const Tensor uniform(g.field_shape(), 0.25);
  CHECK(density_tv(uniform, uniform, g) == 0.0);
  Tensor left(g.field_shape()), right(g.field_shape());
  for (std::size_t i = 0; i < 16; ++i) (i < 8 ? left : right)[i] = 0.5;
  CHECK(density_tv(left, right, g) == doctest::Approx(1.0));

  // One sample per cell center reproduces the uniform field exactly.
  const Divergence exact = density_divergence(g.centers(), uniform, g);
  CHECK(exact.tv == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(std::abs(exact.kl) < 1e-12);
  CHECK(exact.outside == 0.0);

  Tensor far(Shape{10, 2}, 5.0);
  CHECK(density_divergence(far, uniform, g).tv == 1.0);
  CHECK(density_divergence(far, uniform, g).outside == 1.0);
  const Tensor in_left = g.centers(0, 8);
  CHECK(density_divergence(in_left, right, g).tv == doctest::Approx(1.0));
}

TEST_CASE("inverse-CDF samples from the exact density match it") {
  const auto model = build(mlp_spec(2, 8, 3), 5);
  const Grid g = Grid::box(2, -4.0, 4.0, 24);
  const Tensor p = exact_density(model, g);
  Rng rng(6);
  const Tensor s = sample_density(p, g, 1000000, rng);
  const Divergence d = density_divergence(s, p, g);
  CHECK(d.tv < 0.01);
  CHECK(d.outside == 0.0);
  CHECK(d.kl < 1e-3);
}

TEST_CASE("gradient cosine") {
  const std::vector<Tensor> a{Tensor::vector({1, 0}), Tensor::vector({0})};
  const std::vector<Tensor> b{Tensor::vector({2, 0}), Tensor::vector({0})};
  const std::vector<Tensor> c{Tensor::vector({0, 1}), Tensor::vector({0})};
  const std::vector<Tensor> n{Tensor::vector({-1, 0}), Tensor::vector({0})};
  CHECK(gradient_cosine(a, b) == doctest::Approx(1.0));
  CHECK(gradient_cosine(a, c) == 0.0);
  CHECK(gradient_cosine(a, n) == doctest::Approx(-1.0));
}

TEST_CASE("oracle check passes on a flat toy and catches a flipped CD sign") {
  const auto model = zero_model(2, 2);
  OracleCheckConfig cfg;
  cfg.grid = Grid::box(2, -1.0, 1.0, 32);
  cfg.negatives = 256;
  cfg.chain_steps = 20;
  Rng rng(7);
  const Tensor data = testing::random_tensor({64, 2}, rng, 0.3);
  const auto rep = oracle_check(model, data, cfg);
  CHECK(rep.z == doctest::Approx(8.0));
  CHECK(rep.normalization_residual < 1e-9);
  // Small data and short chains make this cosine noisy; only finiteness is asserted.
  CHECK(std::isfinite(rep.cosine));

  const auto trained_like = build(mlp_spec(2, 8, 2), 1);
  cfg.grid = Grid::box(2, -3.0, 3.0, 48);
  cfg.negatives = 512;
  cfg.chain_steps = 200;
  cfg.langevin_eta = 1e-2;
  const Tensor far_data = Tensor(Shape{32, 2}, 2.5);
  const auto good = oracle_check(trained_like, far_data, cfg);
  cfg.flip_cd_sign = true;
  const auto bad = oracle_check(trained_like, far_data, cfg);
  CHECK(good.cosine > 0.9);
  CHECK(bad.cosine < -0.9);
  CHECK(good.pass());
  CHECK_FALSE(bad.pass());
}
