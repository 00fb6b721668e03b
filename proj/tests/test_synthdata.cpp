#include <doctest.h>

#include <cmath>
#include <fstream>
#include <set>

#include "jemlab/error.hpp"
#include "jemlab/synthdata.hpp"
#include "jemlab/tabular.hpp"
#include "support.hpp"

using namespace jemlab;

namespace {

void check_range(const Tensor& t, double lo, double hi) {
  for (double v : t.data()) CHECK((v >= lo && v <= hi));
}

std::string dir_bytes(const std::filesystem::path& dir) {
  std::string all;
  for (const auto& f : dataset_files(dir)) all += f.filename().string() + '\n' + testing::file_bytes(f);
  return all;
}

}  // namespace

TEST_CASE("mixture generator is deterministic and balanced") {
  const auto a = gen_mixture2d(3, 6000, 3.5, 11);
  const auto b = gen_mixture2d(3, 6000, 3.5, 11);
  CHECK(a.points == b.points);
  CHECK(a.labels == b.labels);
  CHECK(gen_mixture2d(3, 6000, 3.5, 12).points != a.points);
  std::vector<double> counts(3);
  for (auto y : a.labels) counts[y] += 1;
  for (double c : counts) CHECK(std::abs(c - 2000.0) <= 3.0 * std::sqrt(6000.0));
  for (std::size_t k = 0; k < 3; ++k) {
    const auto& m = a.mixture.means[k];
    CHECK(std::hypot(m[0], m[1]) == doctest::Approx(3.5));
  }
  CHECK(bayes_accuracy(gen_mixture2d(4, 5000, 10.0, 1)) > 0.999);
  CHECK_THROWS_AS(gen_mixture2d(1, 10, 3.0, 0), ConfigError);
  CHECK_THROWS_AS(gen_mixture2d(3, 2, 3.0, 0), ConfigError);
}

TEST_CASE("mixture posterior and density") {
  Mixture2D m;
  m.means = {{-2.0, 0.0}, {2.0, 0.0}};
  const auto p = m.posterior(0.0, 5.0);
  CHECK(p[0] == doctest::Approx(0.5));
  CHECK(m.posterior(-2.0, 0.0)[0] > 0.99);
  // Equal-prior isotropic mixture: log density at a mean, computed by hand.
  const double far = std::exp(-8.0);
  CHECK(m.log_density(-2.0, 0.0) == doctest::Approx(std::log(0.5 * (1.0 + far) / (2.0 * M_PI))).epsilon(1e-12));
  const Grid g = Grid::box(2, -7.0, 7.0, 64);
  const Tensor d = mixture_density(m, g);
  double mass = 0;
  for (double v : d.data()) mass += v * g.cell_volume();
  CHECK(std::abs(mass - 1.0) < 1e-12);
}

TEST_CASE("cue-conflict generator") {
  const auto set = gen_cue_conflict(4, 16, 40, 36, 3);
  CHECK(set.size() == 76);
  CHECK(set.images.shape() == Shape{76, 1, 16, 16});
  check_range(set.images, -1.0, 1.0);
  std::set<std::pair<std::size_t, std::size_t>> pairs;
  std::size_t conflicts = 0;
  for (std::size_t i = 0; i < set.size(); ++i) {
    if (set.congruent[i]) {
      CHECK(set.shape_labels[i] == set.texture_labels[i]);
    } else {
      CHECK(set.shape_labels[i] != set.texture_labels[i]);
      pairs.insert({set.shape_labels[i], set.texture_labels[i]});
      ++conflicts;
    }
  }
  CHECK(conflicts == 36);
  CHECK(pairs.size() == 12);  // 36 images cycle through all 4*3 ordered pairs
  CHECK(set.conflict_indices().size() == 36);
  const Dataset cong = set.congruent_dataset();
  CHECK(cong.size() == 40);
  CHECK(cong.images);

  // Background is exactly -1 wherever the image is outside the shape.
  const std::size_t px = 16 * 16;
  for (std::size_t i = 0; i < set.size(); ++i) {
    std::size_t inside = 0;
    for (std::size_t j = 0; j < px; ++j) {
      const double v = set.images[i * px + j];
      if (v != -1.0) {
        CHECK((v >= 0.0 && v <= 1.0));
        ++inside;
      }
    }
    CHECK(inside > 0);
  }
  const auto again = gen_cue_conflict(4, 16, 40, 36, 3);
  CHECK(again.images == set.images);
  CHECK_THROWS_AS(gen_cue_conflict(2, 16, 10, 10, 0), ConfigError);
  CHECK_THROWS_AS(gen_cue_conflict(3, 8, 10, 10, 0), ConfigError);
}

TEST_CASE("shape masks differ between classes") {
  std::vector<std::vector<bool>> masks;
  for (std::size_t s = 0; s < kMaxCueClasses; ++s) {
    masks.push_back(shape_mask(s, 24, 0.0, 0.0, 0.7));
    CHECK(std::count(masks.back().begin(), masks.back().end(), true) > 0);
  }
  for (std::size_t i = 0; i < masks.size(); ++i) {
    for (std::size_t j = i + 1; j < masks.size(); ++j) CHECK(masks[i] != masks[j]);
  }
}

TEST_CASE("soft labels from Bayes observers") {
  const auto pts = gen_mixture2d(3, 200, 3.5, 4);
  const auto set = gen_soft_labels(pts, 20, 5);
  CHECK(set.size() == 200 * default_condition_noise().size());
  CHECK(set.responses.size() == 20 * set.size());
  for (std::size_t s = 0; s < set.size(); ++s) {
    double total = 0, ptotal = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      CHECK(set.counts.at(s, k) >= 0.0);
      total += set.counts.at(s, k);
      ptotal += set.posterior.at(s, k);
    }
    CHECK(total == 20.0);
    CHECK(ptotal == doctest::Approx(1.0));
  }

  LabeledPoints2D sym;
  sym.mixture.means = {{-3.0, 0.0}, {3.0, 0.0}};
  sym.points = Tensor::matrix({{0.0, 1.0}, {-3.0, 0.0}});
  sym.labels = {0, 0};
  LabeledPoints2D wide = sym;
  wide.mixture.means = {{-40.0, 0.0}, {40.0, 0.0}};
  wide.points = Tensor::matrix({{-40.0, 0.0}});
  wide.labels = {0};
  const auto one_hot = gen_soft_labels(wide, 50, 1, {0.0});
  CHECK(one_hot.counts.at(0, 0) == 50.0);
  const auto split = gen_soft_labels(sym, 10000, 2, {0.0});
  CHECK(split.posterior.at(0, 0) == doctest::Approx(0.5));
  CHECK(std::abs(split.counts.at(0, 0) / 10000.0 - 0.5) < 4.0 * 0.005);
  CHECK_THROWS_AS(gen_soft_labels(sym, 0, 1), ConfigError);
}

TEST_CASE("perceptual generator") {
  const std::vector<double> levels{0.0, 0.1, 0.5};
  const auto set = gen_perceptual(5, levels, 6);
  CHECK(set.triplets() == 5 * 3);
  CHECK(set.pairs() == 5 * 3);
  check_range(set.triplet_images, -1.0, 1.0);
  for (std::size_t t = 0; t < set.triplets(); ++t) {
    CHECK(set.mag_a[t] != set.mag_b[t]);
    CHECK(set.triplet_choice[t] == (set.mag_a[t] < set.mag_b[t] ? 0u : 1u));
  }
  for (std::size_t p = 0; p < set.pairs(); ++p) CHECK(set.pair_same[p] == (set.pair_magnitude[p] < set.threshold));
  Rng rng(1);
  const Tensor patch = smooth_patch(16, rng);
  check_range(patch, -1.0, 1.0);
  CHECK(distort(patch, 0.0, rng) == patch);
  CHECK(distort(patch, 0.4, rng) != patch);
  CHECK(gen_perceptual(5, levels, 6).triplet_images == set.triplet_images);
  CHECK_THROWS_AS(gen_perceptual(5, {0.1}, 6), ConfigError);
}

TEST_CASE("probe set generator") {
  const auto set = gen_probeset(120, 16, 7);
  CHECK(set.size() == 120);
  check_range(set.images, -1.0, 1.0);
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(set.gloss[i] < 2);
    CHECK(set.lighting[i] < kLightingDirections);
    CHECK((set.relief[i] >= 0.0 && set.relief[i] <= 1.0));
    CHECK((set.rating[i] >= 1.0 && set.rating[i] <= 6.0));
  }
  CHECK(gen_probeset(120, 16, 7).images == set.images);
}

TEST_CASE("every set round trips through its files") {
  const auto dir = testing::scratch_dir("synth_roundtrip");
  const auto pts = gen_mixture2d(3, 100, 3.5, 1);
  save_points(pts, dir / "points");
  const auto pts2 = load_points(dir / "points");
  CHECK(pts2.points == pts.points);
  CHECK(pts2.labels == pts.labels);
  CHECK(pts2.mixture.means == pts.mixture.means);
  save_points(pts2, dir / "points2");
  CHECK(dir_bytes(dir / "points") == dir_bytes(dir / "points2"));

  const auto cue = gen_cue_conflict(3, 16, 12, 12, 2);
  save_cue_conflict(cue, dir / "cue");
  const auto cue2 = load_cue_conflict(dir / "cue");
  CHECK(cue2.images == cue.images);
  CHECK(cue2.importance == cue.importance);
  CHECK(cue2.shape_labels == cue.shape_labels);
  CHECK(cue2.texture_labels == cue.texture_labels);
  CHECK(cue2.congruent == cue.congruent);
  CHECK(cue2.classes == cue.classes);

  const auto soft = gen_soft_labels(pts, 7, 3);
  save_soft_labels(soft, dir / "soft");
  const auto soft2 = load_soft_labels(dir / "soft");
  CHECK(soft2.stimuli == soft.stimuli);
  CHECK(soft2.counts == soft.counts);
  CHECK(soft2.posterior == soft.posterior);
  CHECK(soft2.responses == soft.responses);
  CHECK(soft2.conditions == soft.conditions);
  CHECK(soft2.observers == 7);

  const auto per = gen_perceptual(3, {0.0, 0.2, 0.4}, 4);
  save_perceptual(per, dir / "per");
  const auto per2 = load_perceptual(dir / "per");
  CHECK(per2.triplet_images == per.triplet_images);
  CHECK(per2.pair_images == per.pair_images);
  CHECK(per2.triplet_choice == per.triplet_choice);
  CHECK(per2.pair_same == per.pair_same);
  CHECK(per2.threshold == per.threshold);

  const auto probe = gen_probeset(30, 16, 5);
  save_probeset(probe, dir / "probe");
  const auto probe2 = load_probeset(dir / "probe");
  CHECK(probe2.images == probe.images);
  CHECK(probe2.relief == probe.relief);
  CHECK(probe2.rating == probe.rating);
  CHECK(probe2.lighting == probe.lighting);
}

TEST_CASE("tensor files are bit exact and reject bad magic") {
  Rng rng(1);
  Tensor t = testing::random_tensor({3, 2, 4}, rng);
  t[0] = -0.0;
  t[1] = 1e-310;  // subnormal
  const auto bytes = encode_tensor(t);
  CHECK(bytes.size() == 4 + 4 + 4 + 3 * 8 + t.size() * 8);
  const Tensor back = decode_tensor(bytes);
  CHECK(back == t);
  CHECK(std::signbit(back[0]));
  auto bad = bytes;
  bad[0] = 'Q';
  CHECK_THROWS_AS(decode_tensor(bad), FormatError);
  CHECK_THROWS_AS(decode_tensor(std::span(bytes).first(bytes.size() - 3)), FormatError);
  const auto dir = testing::scratch_dir("tensor_file");
  save_tensor(t, dir / "t.jtns");
  CHECK(load_tensor(dir / "t.jtns") == t);
  CHECK_THROWS_AS(load_tensor(dir / "missing.jtns"), IoError);
}

TEST_CASE("CSV parsing errors name the column and the line") {
  const auto t = CsvTable::parse("# comment\na,b\n1,2\n\n3,x\n", "mem.csv");
  CHECK(t.rows() == 2);
  CHECK(t.number(0, 1) == 2.0);
  CHECK(t.line_of(1) == 5);
  try {
    t.number(1, 1);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("mem.csv") != std::string::npos);
    CHECK(std::string(e.what()).find('5') != std::string::npos);
  }
  try {
    t.column("relief");
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find("relief") != std::string::npos);
  }
  CHECK_THROWS_AS(CsvTable::parse("a,b\n1,2,3\n"), FormatError);
  CHECK_THROWS_AS(CsvTable::parse(""), FormatError);
  CHECK_THROWS_AS(t.integer(1, 1), FormatError);
  CHECK(t.index(0, 0) == 1);

  const auto dir = testing::scratch_dir("csv_missing");
  save_points(gen_mixture2d(3, 20, 3.5, 1), dir);
  write_text(dir / "points.csv", "x,label\n0.5,1\n");
  try {
    load_points(dir);
    FAIL("expected a format error");
  } catch (const FormatError& e) {
    CHECK(std::string(e.what()).find('y') != std::string::npos);
  }
}
