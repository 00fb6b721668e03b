#include <doctest.h>

#include <cmath>

#include "jemlab/error.hpp"
#include "jemlab/sampler.hpp"
#include "support.hpp"

using namespace jemlab;

namespace {

// Constant score field; energy is the matching linear function.
class DriftLandscape final : public EnergyLandscape {
 public:
  explicit DriftLandscape(double drift) : drift_(drift) {}
  Tensor score(const Tensor& batch) const override { return Tensor(batch.shape(), drift_); }
  Tensor energy(const Tensor& batch) const override {
    Tensor e(Shape{batch.dim(0)});
    for (std::size_t b = 0; b < batch.dim(0); ++b) {
      for (double v : batch.row_span(b)) e[b] -= drift_ * v;
    }
    return e;
  }

 private:
  double drift_;
};

bool row_in(const Tensor& row, const ReplayBuffer& buf) {
  for (std::size_t i = 0; i < buf.size(); ++i) {
    if (buf.at(i) == row) return true;
  }
  return false;
}

}  // namespace

TEST_CASE("sgld step hand values") {
  Rng rng(1);
  const Tensor x = Tensor::matrix({{0.3, -2.0}});
  CHECK(sgld_step(QuadraticLandscape(0.0), x, 0.5, 0.0, rng) == x);
  const auto y = sgld_step(QuadraticLandscape(1.0), Tensor::matrix({{1.0}}), 0.1, 0.0, rng);
  CHECK(y[0] == doctest::Approx(0.9).epsilon(1e-15));
  const auto c = sgld_step(DriftLandscape(0.71), Tensor::matrix({{0.99}}), 1.0, 0.0, rng, true, -1.0, 1.0);
  CHECK(c[0] == 1.0);
}

TEST_CASE("sgld config validation") {
  SgldConfig cfg;
  cfg.step_size = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SgldConfig{};
  cfg.noise = -0.1;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = SgldConfig{};
  cfg.clip = true;
  cfg.clip_lo = 1.0;
  cfg.clip_hi = -1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("a one-step chain is one sgld step with the full step size") {
  const auto model = build(mlp_spec(2, 8, 3), 2);
  const ModelLandscape land(model);
  Rng data(3);
  const Tensor x0 = testing::random_tensor({4, 2}, data);
  SgldConfig cfg;
  cfg.steps = 1;
  cfg.step_size = 0.3;
  cfg.noise = 0.05;
  Rng a(7), b(7);
  CHECK(sample_chain(land, x0, cfg, a) == sgld_step(land, x0, 0.3, 0.05, b));
}

TEST_CASE("zero step and zero noise leave the chain in place") {
  const auto model = build(mlp_spec(2, 8, 3), 2);
  Rng data(4), rng(5);
  const Tensor x0 = testing::random_tensor({3, 2}, data);
  SgldConfig cfg;
  cfg.steps = 25;
  cfg.step_size = 0.0;
  cfg.noise = 0.0;
  CHECK(sample_chain(ModelLandscape(model), x0, cfg, rng) == x0);
}

TEST_CASE("noiseless chains contract on a quadratic") {
  Rng data(6), rng(7);
  const Tensor x0 = testing::random_tensor({5, 3}, data, 3.0);
  SgldConfig cfg;
  cfg.steps = 500;
  cfg.step_size = 0.01;
  cfg.noise = 0.0;
  cfg.decay = StepDecay::constant;
  const Tensor xl = sample_chain(QuadraticLandscape(), x0, cfg, rng);
  for (std::size_t b = 0; b < 5; ++b) {
    double n0 = 0, nl = 0;
    for (double v : x0.row_span(b)) n0 += v * v;
    for (double v : xl.row_span(b)) nl += v * v;
    CHECK(nl < n0);
  }
}

TEST_CASE("linear step decay") {
  SgldConfig cfg;
  cfg.step_size = 2.0;
  CHECK(step_at(cfg, 0, 10) == 2.0);
  CHECK(step_at(cfg, 5, 10) == doctest::Approx(1.0));
  cfg.decay = StepDecay::constant;
  CHECK(step_at(cfg, 9, 10) == 2.0);
}

TEST_CASE("chains are deterministic per seed and clipping holds at every step") {
  const auto model = build(conv_spec(1, 8, {2, 2, 2}, 3), 3);
  const ModelLandscape land(model);
  Rng data(8);
  const Tensor x0 = testing::random_tensor({2, 1, 8, 8}, data, 0.5);
  SgldConfig cfg;
  cfg.steps = 10;
  cfg.step_size = 5.0;
  cfg.noise = 0.5;
  cfg.clip = true;
  Rng a(1), b(1);
  CHECK(sample_chain(land, x0, cfg, a) == sample_chain(land, x0, cfg, b));
  Rng c(2);
  const auto traj = refine(land, x0, 10, cfg, c);
  for (std::size_t t = 1; t < traj.size(); ++t) {
    for (double v : traj[t].data()) CHECK((v >= -1.0 && v <= 1.0));
  }
}

TEST_CASE("Langevin chain on a quadratic matches the discrete stationary law") {
  // x' = (1 - eta/2) x + sqrt(eta) xi has stationary variance eta / (1 - (1 - eta/2)^2) = 1 / (1 - eta/4).
  const double eta = 0.01;
  const double exact = 1.0 / (1.0 - eta / 4.0);
  // 1e5 independent chains, each contributing its state after burn-in (a^3000 ~ 3e-7 of the start remains).
  Rng rng(11);
  const std::size_t n = 100000;
  Tensor x(Shape{n, 2});
  for (int t = 0; t < 1500; ++t) x = langevin_step(QuadraticLandscape(), x, eta, rng);
  for (std::size_t d = 0; d < 2; ++d) {
    double s = 0, ss = 0;
    for (std::size_t b = 0; b < n; ++b) {
      s += x[2 * b + d];
      ss += x[2 * b + d] * x[2 * b + d];
    }
    const double mean = s / n;
    const double var = ss / n - mean * mean;
    CHECK(std::abs(mean) < 0.05);
    CHECK(std::abs(var / exact - 1.0) < 0.1);
  }
}

TEST_CASE("sgld raises SamplerDivergence on non-finite states") {
  Rng rng(1);
  const Tensor x = Tensor::matrix({{1e300}});
  CHECK_THROWS_AS(sgld_step(QuadraticLandscape(-1e300), x, 1e10, 0.0, rng), SamplerDivergence);
}

TEST_CASE("buffer draw follows the reinit probability") {
  Rng rng(2);
  BufferConfig all_fresh{100, 1.0};
  auto buf = ReplayBuffer::uniform_box({2}, -1.0, 1.0, all_fresh);
  buf.push(Tensor::matrix({{5, 5}, {6, 6}}));
  const Tensor d = buf.draw(50, rng);
  for (double v : d.data()) CHECK((v >= -1.0 && v <= 1.0));

  BufferConfig never{100, 0.0};
  auto stored = ReplayBuffer::uniform_box({2}, -1.0, 1.0, never);
  const Tensor empty_draw = stored.draw(10, rng);
  for (double v : empty_draw.data()) CHECK((v >= -1.0 && v <= 1.0));
  stored.push(Tensor::matrix({{5, 5}, {6, 6}, {7, 7}}));
  const Tensor d2 = stored.draw(30, rng);
  for (std::size_t b = 0; b < 30; ++b) CHECK(row_in(d2.row(b), stored));
}

TEST_CASE("buffer push is FIFO with a capacity cap") {
  auto buf = ReplayBuffer::uniform_box({1}, -1.0, 1.0, {2, 0.05});
  buf.push(Tensor::matrix({{1}}));
  CHECK(buf.size() == 1);
  buf.push(Tensor::matrix({{2}}));
  buf.push(Tensor::matrix({{3}}));
  REQUIRE(buf.size() == 2);
  CHECK(buf.at(0)[0] == 2.0);
  CHECK(buf.at(1)[0] == 3.0);
  auto big = ReplayBuffer::uniform_box({1}, -1.0, 1.0, {5, 0.05});
  big.push(Tensor(Shape{3, 1}));
  CHECK(big.size() == 3);
  big.push(Tensor(Shape{4, 1}));
  CHECK(big.size() == 5);
  CHECK_THROWS_AS(big.push(Tensor(Shape{2, 3})), DimensionError);
}

TEST_CASE("refinement trajectories") {
  const auto model = build(mlp_spec(2, 16, 3), 9);
  const ModelLandscape land(model);
  Rng data(10);
  const Tensor x = testing::random_tensor({4, 2}, data);
  SgldConfig cfg;
  cfg.step_size = 1e-3;
  cfg.noise = 0.0;
  Rng rng(3);
  const auto none = refine(land, x, 0, cfg, rng);
  REQUIRE(none.size() == 1);
  CHECK(none[0] == x);
  const auto traj = refine(land, x, 30, cfg, rng);
  CHECK(traj.size() == 31);
  for (std::size_t t = 1; t < traj.size(); ++t) {
    const Tensor e0 = land.energy(traj[t - 1]), e1 = land.energy(traj[t]);
    for (std::size_t b = 0; b < 4; ++b) CHECK(e1[b] <= e0[b] + 1e-6);
  }
}
