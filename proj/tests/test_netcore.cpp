#include <doctest.h>

#include "jemlab/error.hpp"
#include "jemlab/network.hpp"
#include "support.hpp"

using namespace jemlab;

namespace {

Tensor batch_for(const NetworkSpec& spec, std::size_t b, Rng& rng) {
  Shape s{b};
  s.insert(s.end(), spec.input_shape.begin(), spec.input_shape.end());
  return testing::random_tensor(s, rng);
}

Checkpoint bare(const EnergyModel& m) {
  Checkpoint c;
  c.model = m;
  return c;
}

}  // namespace

TEST_CASE("build is deterministic per seed") {
  const auto spec = mlp_spec(2, 16, 3);
  const auto a = build(spec, 7);
  const auto b = build(spec, 7);
  CHECK(a.params() == b.params());
  CHECK(encode_checkpoint(bare(a)) == encode_checkpoint(bare(b)));
  const auto c = build(spec, 8);
  CHECK(a.params() != c.params());
}

TEST_CASE("build rejects degenerate specs") {
  CHECK_THROWS_AS(build(mlp_spec(2, 8, 0), 0), ConfigError);
  auto spec = mlp_spec(2, 8, 3);
  spec.dropout = 0.1;
  CHECK_THROWS_AS(build(spec, 0), ConfigError);
  spec = conv_spec(1, 16, {4, 8, 8}, 3);
  spec.layers.pop_back();
  CHECK_THROWS_AS(build(spec, 0), ConfigError);
}

TEST_CASE("conv_spec divides exactly for odd and even sizes") {
  for (std::size_t size : {7, 8, 15, 16, 32}) CHECK_NOTHROW(conv_spec(1, size, {2, 3, 4}, 3).validate());
}

TEST_CASE("zero parameters give zero logits") {
  auto model = build(conv_spec(1, 8, {2, 3, 4}, 3), 1);
  for (auto& p : model.params()) {
    for (auto& v : p.data()) v = 0.0;
  }
  Rng rng(1);
  const Tensor out = forward(model, batch_for(model.spec(), 3, rng));
  CHECK(out.shape() == Shape{3, 3});
  for (double v : out.data()) CHECK(v == 0.0);
}

TEST_CASE("single affine layer matches autodiff affine") {
  NetworkSpec spec;
  spec.input_shape = {3};
  spec.classes = 2;
  spec.layers = {LayerSpec::make_affine(2)};
  const auto model = build(spec, 4);
  Rng rng(2);
  const Tensor x = testing::random_tensor({1, 3}, rng);
  ad::Tape t;
  const auto ref = ad::affine(t.constant(model.params()[0]), t.constant(model.params()[1]), t.constant(x)).value();
  CHECK(forward(model, x) == ref);
}

TEST_CASE("identical inputs give identical rows") {
  const auto model = build(mlp_spec(2, 8, 3), 3);
  const Tensor x(Shape{4, 2}, 0.37);
  const Tensor out = forward(model, x);
  for (std::size_t b = 1; b < 4; ++b) CHECK(out.row(b) == out.row(0));
}

TEST_CASE("features of the last layer equal forward") {
  Rng rng(3);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto spec = testing::random_spec(k, rng);
    const auto model = build(spec, k);
    const Tensor x = batch_for(spec, 2, rng);
    std::vector<std::size_t> all(spec.layers.size());
    for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
    const auto f = features(model, x, all);
    CHECK(f.size() == all.size());
    CHECK(f.back() == forward(model, x));
    CHECK(features(model, x, {spec.layers.size() - 1}).front() == forward(model, x));
  }
  const auto model = build(mlp_spec(2, 4, 2), 0);
  CHECK(features(model, Tensor(Shape{1, 2}), {}).empty());
  NetworkSpec one;
  one.input_shape = {2};
  one.classes = 2;
  one.layers = {LayerSpec::make_affine(2)};
  const auto m1 = build(one, 0);
  const Tensor x = Tensor::matrix({{0.5, -1.0}});
  CHECK(features(m1, x, {0}).front() == forward(m1, x));
}

TEST_CASE("dropout is train-only and seeded") {
  auto spec = mlp_spec(2, 32, 3);
  spec.dropout = 0.04;
  const auto model = build(spec, 5);
  Rng data(4);
  const Tensor x = testing::random_tensor({16, 2}, data);
  CHECK(forward(model, x) == forward(model, x));
  Rng r1(9), r2(9);
  const auto a = forward(model, x, {true, &r1});
  const auto b = forward(model, x, {true, &r2});
  CHECK(a == b);
  CHECK_THROWS_AS(forward(model, x, {true, nullptr}), UsageError);
}

TEST_CASE("checkpoint round trip is bit exact") {
  const auto dir = testing::scratch_dir("netcore");
  Rng rng(5);
  for (std::size_t k = 0; k < 4; ++k) {
    const auto model = build(testing::random_spec(k, rng), k + 10);
    const auto path = dir / ("m" + std::to_string(k) + ".jemc");
    save(model, path);
    const auto back = load(path);
    CHECK(back.spec() == model.spec());
    CHECK(back.params() == model.params());
    const Tensor x = batch_for(model.spec(), 3, rng);
    CHECK(forward(back, x) == forward(model, x));
    save(back, dir / "again.jemc");
    CHECK(testing::files_equal(path, dir / "again.jemc"));
  }
}

TEST_CASE("checkpoint keeps alpha, step and optimizer moments") {
  Checkpoint c;
  c.model = build(mlp_spec(2, 4, 2), 1);
  c.alpha = 0.3;
  c.step = 1234;
  c.first_moments = c.model.params();
  c.second_moments = c.model.params();
  c.adam_steps = 77;
  const auto back = decode_checkpoint(encode_checkpoint(c));
  CHECK(back.alpha == 0.3);
  CHECK(back.step == 1234);
  CHECK(back.adam_steps == 77);
  REQUIRE(back.first_moments);
  CHECK(*back.first_moments == c.model.params());
}

TEST_CASE("corrupted checkpoints are format errors") {
  const auto bytes = encode_checkpoint(bare(build(mlp_spec(2, 4, 2), 1)));
  auto bad = bytes;
  bad[0] = 'X';
  CHECK_THROWS_AS(decode_checkpoint(bad), FormatError);
  for (std::size_t cut : {std::size_t{3}, std::size_t{20}, bytes.size() / 2, bytes.size() - 1}) {
    CHECK_THROWS_AS(decode_checkpoint(std::span(bytes).first(cut)), FormatError);
  }
  auto longer = bytes;
  longer.push_back(0);
  CHECK_THROWS_AS(decode_checkpoint(longer), FormatError);
  const auto dir = testing::scratch_dir("netcore_bad");
  CHECK_THROWS_AS(load(dir / "missing.jemc"), IoError);
}

TEST_CASE("batch shape is validated") {
  const auto model = build(mlp_spec(2, 4, 2), 1);
  CHECK_THROWS_AS(forward(model, Tensor(Shape{3, 5})), DimensionError);
  CHECK(batch_size_for(model, Tensor(Shape{3, 2})) == 3);
}
