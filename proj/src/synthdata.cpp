#include "jemlab/synthdata.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "jemlab/autodiff.hpp"
#include "jemlab/error.hpp"
#include "jemlab/report.hpp"
#include "jemlab/tabular.hpp"

namespace jemlab {

namespace {

std::string num(double v) { return format_number(v); }
std::string idx(std::size_t v) { return std::to_string(v); }

std::size_t categorical(std::span<const double> p, Rng& rng) {
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    acc += p[k];
    if (u < acc) return k;
  }
  return p.size() - 1;
}

}  // namespace

// ---- mixture ------------------------------------------------------------------

double Mixture2D::log_density(double x, double y) const {
  std::vector<double> terms(means.size());
  const double inv = 1.0 / (2.0 * stddev * stddev);
  for (std::size_t k = 0; k < means.size(); ++k) {
    const double dx = x - means[k][0], dy = y - means[k][1];
    terms[k] = -(dx * dx + dy * dy) * inv;
  }
  return ad::logsumexp(terms) - std::log(static_cast<double>(means.size())) -
         std::log(2.0 * std::numbers::pi * stddev * stddev);
}

std::vector<double> Mixture2D::posterior(double x, double y) const {
  std::vector<double> terms(means.size());
  const double inv = 1.0 / (2.0 * stddev * stddev);
  for (std::size_t k = 0; k < means.size(); ++k) {
    const double dx = x - means[k][0], dy = y - means[k][1];
    terms[k] = -(dx * dx + dy * dy) * inv;
  }
  const double lse = ad::logsumexp(terms);
  for (auto& t : terms) t = std::exp(t - lse);
  return terms;
}

Tensor mixture_density(const Mixture2D& mixture, const Grid& grid) {
  grid.validate();
  if (grid.dims() != 2) throw DimensionError("mixture density needs a 2-d grid");
  const Tensor c = grid.centers();
  std::vector<double> logs(grid.cells());
  for (std::size_t i = 0; i < logs.size(); ++i) logs[i] = mixture.log_density(c[2 * i], c[2 * i + 1]);
  return density_from_log(logs, grid);
}

LabeledPoints2D gen_mixture2d(std::size_t k, std::size_t n, double separation, std::uint64_t seed, double stddev) {
  if (k < 2) throw ConfigError("mixture needs at least 2 components");
  if (n < k) throw ConfigError("mixture needs at least one point per component");
  if (!(stddev > 0.0)) throw ConfigError("mixture stddev must be positive");
  LabeledPoints2D out;
  out.mixture.stddev = stddev;
  for (std::size_t i = 0; i < k; ++i) {
    const double a = 2.0 * std::numbers::pi * static_cast<double>(i) / static_cast<double>(k);
    out.mixture.means.push_back({separation * std::cos(a), separation * std::sin(a)});
  }
  Rng rng(seed);
  out.points = Tensor(Shape{n, 2});
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto c = rng.index(k);
    out.labels[i] = c;
    out.points.at(i, 0) = out.mixture.means[c][0] + stddev * rng.normal();
    out.points.at(i, 1) = out.mixture.means[c][1] + stddev * rng.normal();
  }
  return out;
}

double bayes_accuracy(const LabeledPoints2D& data) {
  std::size_t hit = 0;
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    const auto p = data.mixture.posterior(data.points.at(i, 0), data.points.at(i, 1));
    hit += static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == data.labels[i];
  }
  return static_cast<double>(hit) / static_cast<double>(data.labels.size());
}

Dataset to_dataset(const LabeledPoints2D& data, const std::string& id) {
  Dataset d = points_dataset(data.points, data.labels, data.mixture.classes());
  d.id = id;
  return d;
}

void save_points(const LabeledPoints2D& data, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  CsvTable pts({"x", "y", "label"});
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    pts.add_row({num(data.points.at(i, 0)), num(data.points.at(i, 1)), idx(data.labels[i])});
  }
  pts.write(dir / "points.csv");
  CsvTable mix({"component", "mean_x", "mean_y", "stddev"});
  for (std::size_t k = 0; k < data.mixture.means.size(); ++k) {
    mix.add_row({idx(k), num(data.mixture.means[k][0]), num(data.mixture.means[k][1]), num(data.mixture.stddev)});
  }
  mix.write(dir / "mixture.csv");
}

LabeledPoints2D load_points(const std::filesystem::path& dir) {
  LabeledPoints2D out;
  const auto mix = CsvTable::read(dir / "mixture.csv");
  const auto cmx = mix.column("mean_x"), cmy = mix.column("mean_y"), csd = mix.column("stddev");
  for (std::size_t r = 0; r < mix.rows(); ++r) {
    out.mixture.means.push_back({mix.number(r, cmx), mix.number(r, cmy)});
    out.mixture.stddev = mix.number(r, csd);
  }
  if (out.mixture.means.empty()) throw FormatError((dir / "mixture.csv").string() + ": no components");
  const auto pts = CsvTable::read(dir / "points.csv");
  const auto cx = pts.column("x"), cy = pts.column("y"), cl = pts.column("label");
  if (pts.rows() == 0) throw FormatError((dir / "points.csv").string() + ": no points");
  out.points = Tensor(Shape{pts.rows(), 2});
  for (std::size_t r = 0; r < pts.rows(); ++r) {
    out.points.at(r, 0) = pts.number(r, cx);
    out.points.at(r, 1) = pts.number(r, cy);
    const auto label = pts.index(r, cl);
    if (label >= out.mixture.classes()) {
      throw FormatError((dir / "points.csv").string() + ":" + std::to_string(pts.line_of(r)) + ": label " +
                        std::to_string(label) + " out of range");
    }
    out.labels.push_back(label);
  }
  return out;
}

// ---- cue conflict -------------------------------------------------------------

const char* shape_name(std::size_t i) {
  static const char* names[kMaxCueClasses] = {"disk", "square", "triangle", "cross", "ring", "diamond"};
  return names[i];
}

const char* texture_name(std::size_t i) {
  static const char* names[kMaxCueClasses] = {"hstripes", "vstripes", "checker", "dots", "speckle", "solid"};
  return names[i];
}

std::vector<bool> shape_mask(std::size_t shape, std::size_t size, double cx, double cy, double r) {
  std::vector<bool> mask(size * size);
  const double s = static_cast<double>(size);
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      const double u = (static_cast<double>(j) + 0.5) / s * 2.0 - 1.0 - 2.0 * cx;
      const double v = (static_cast<double>(i) + 0.5) / s * 2.0 - 1.0 - 2.0 * cy;
      const double au = std::abs(u), av = std::abs(v);
      const double rho = std::hypot(u, v);
      bool in = false;
      switch (shape) {
        case 0: in = rho <= r; break;
        case 1: in = std::max(au, av) <= 0.8 * r; break;
        case 2: in = v >= -0.8 * r && v <= 0.7 * r && au <= (v + 0.8 * r) / (1.5 * r) * 0.95 * r; break;
        case 3: in = (au <= 0.3 * r && av <= r) || (av <= 0.3 * r && au <= r); break;
        case 4: in = rho <= r && rho >= 0.55 * r; break;
        case 5: in = au + av <= r; break;
        default: throw UsageError("unknown shape class " + std::to_string(shape));
      }
      mask[i * size + j] = in;
    }
  }
  return mask;
}

namespace {

double texture_value(std::size_t texture, std::size_t i, std::size_t j, std::size_t p1, std::size_t p2, Rng& rng) {
  switch (texture) {
    case 0: return ((i + p1) / 2) % 2 ? 1.0 : 0.0;
    case 1: return ((j + p1) / 2) % 2 ? 1.0 : 0.0;
    case 2: return (((i + p1) / 2) + ((j + p2) / 2)) % 2 ? 1.0 : 0.0;
    case 3: return ((i + p1) % 4 == 1 && (j + p2) % 4 == 1) ? 1.0 : 0.2;
    case 4: return rng.bernoulli(0.5) ? 1.0 : 0.0;
    case 5: return 0.75;
    default: throw UsageError("unknown texture class " + std::to_string(texture));
  }
}

std::vector<double> outline(const std::vector<bool>& mask, std::size_t size) {
  std::vector<double> out(size * size, 0.0);
  for (std::size_t i = 0; i < size; ++i) {
    for (std::size_t j = 0; j < size; ++j) {
      if (!mask[i * size + j]) continue;
      const bool edge = i == 0 || j == 0 || i + 1 == size || j + 1 == size || !mask[(i - 1) * size + j] ||
                        !mask[(i + 1) * size + j] || !mask[i * size + j - 1] || !mask[i * size + j + 1];
      if (edge) out[i * size + j] = 1.0;
    }
  }
  return out;
}

}  // namespace

Dataset CueConflictSet::congruent_dataset() const {
  std::vector<std::size_t> sel;
  for (std::size_t i = 0; i < size(); ++i) {
    if (congruent[i]) sel.push_back(i);
  }
  if (sel.empty()) throw ConfigError("cue-conflict set has no congruent images");
  Shape s = images.shape();
  s[0] = sel.size();
  std::vector<double> data;
  std::vector<std::size_t> labels;
  for (auto i : sel) {
    auto row = images.row_span(i);
    data.insert(data.end(), row.begin(), row.end());
    labels.push_back(shape_labels[i]);
  }
  Dataset d = image_dataset(Tensor(std::move(s), std::move(data)), std::move(labels), classes);
  d.id = "cueconflict";
  return d;
}

std::vector<std::size_t> CueConflictSet::conflict_indices() const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < size(); ++i) {
    if (!congruent[i]) out.push_back(i);
  }
  return out;
}

CueConflictSet gen_cue_conflict(std::size_t k, std::size_t size, std::size_t n_congruent, std::size_t n_conflict,
                                std::uint64_t seed) {
  if (k < 3 || k > kMaxCueClasses) throw ConfigError("cue-conflict classes must lie in [3, 6]");
  if (size < 16) throw ConfigError("cue-conflict image size must be >= 16");
  if (n_congruent + n_conflict == 0) throw ConfigError("cue-conflict set would be empty");
  CueConflictSet set;
  set.classes = k;
  const std::size_t n = n_congruent + n_conflict;
  set.images = Tensor(Shape{n, 1, size, size}, -1.0);
  set.importance = Tensor(Shape{n, size, size});
  Rng rng(seed);
  const std::size_t pairs = k * (k - 1);
  for (std::size_t m = 0; m < n; ++m) {
    std::size_t shape = 0, texture = 0;
    if (m < n_congruent) {
      shape = texture = m % k;
    } else {
      const std::size_t p = (m - n_congruent) % pairs;
      shape = p / (k - 1);
      const std::size_t t = p % (k - 1);
      texture = t < shape ? t : t + 1;
    }
    const double cx = rng.uniform(-0.06, 0.06);
    const double cy = rng.uniform(-0.06, 0.06);
    const double r = rng.uniform(0.62, 0.78);
    const std::size_t p1 = rng.index(4), p2 = rng.index(4);
    const auto mask = shape_mask(shape, size, cx, cy, r);
    auto img = set.images.row_span(m);
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) {
        // Speckle draws only inside the mask, so the stream depends on the shape too.
        if (mask[i * size + j]) img[i * size + j] = texture_value(texture, i, j, p1, p2, rng);
      }
    }
    const auto edge = outline(mask, size);
    std::copy(edge.begin(), edge.end(), set.importance.row_span(m).begin());
    set.shape_labels.push_back(shape);
    set.texture_labels.push_back(texture);
    set.congruent.push_back(m < n_congruent);
  }
  return set;
}

void save_cue_conflict(const CueConflictSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_tensor(set.images, dir / "images.jtns");
  save_tensor(set.importance, dir / "importance.jtns");
  CsvTable t({"image_id", "shape", "texture", "congruent"});
  for (std::size_t i = 0; i < set.size(); ++i) {
    t.add_row({idx(i), idx(set.shape_labels[i]), idx(set.texture_labels[i]), set.congruent[i] ? "1" : "0"});
  }
  t.write(dir / "labels.csv");
}

CueConflictSet load_cue_conflict(const std::filesystem::path& dir) {
  CueConflictSet set;
  set.images = load_tensor(dir / "images.jtns");
  if (set.images.rank() != 4) throw FormatError((dir / "images.jtns").string() + ": expected [N x C x H x W]");
  const auto t = CsvTable::read(dir / "labels.csv");
  const auto cs = t.column("shape"), ct = t.column("texture"), cc = t.column("congruent");
  std::size_t k = 0;
  for (std::size_t r = 0; r < t.rows(); ++r) {
    set.shape_labels.push_back(t.index(r, cs));
    set.texture_labels.push_back(t.index(r, ct));
    set.congruent.push_back(t.integer(r, cc) != 0);
    k = std::max({k, set.shape_labels.back() + 1, set.texture_labels.back() + 1});
  }
  set.classes = k;
  if (set.images.dim(0) != set.size()) {
    throw FormatError((dir / "labels.csv").string() + ": row count does not match images.jtns");
  }
  if (std::filesystem::exists(dir / "importance.jtns")) set.importance = load_tensor(dir / "importance.jtns");
  return set;
}

// ---- soft labels ----------------------------------------------------------------

std::vector<double> default_condition_noise() { return {0.0, 0.5, 1.0}; }

SoftLabelSet gen_soft_labels(const LabeledPoints2D& points, std::size_t observers, std::uint64_t seed,
                             const std::vector<double>& condition_noise) {
  if (observers < 1) throw ConfigError("soft labels need at least one observer");
  if (condition_noise.empty()) throw ConfigError("soft labels need at least one condition");
  const std::size_t n0 = points.labels.size();
  const std::size_t k = points.mixture.classes();
  const std::size_t n = n0 * condition_noise.size();
  SoftLabelSet set;
  set.observers = observers;
  set.classes = k;
  set.stimuli = Tensor(Shape{n, 2});
  set.counts = Tensor(Shape{n, k});
  set.posterior = Tensor(Shape{n, k});
  set.responses.resize(observers * n);
  Rng rng(seed);
  for (std::size_t c = 0; c < condition_noise.size(); ++c) {
    for (std::size_t i = 0; i < n0; ++i) {
      const std::size_t s = c * n0 + i;
      const double x = points.points.at(i, 0) + condition_noise[c] * rng.normal();
      const double y = points.points.at(i, 1) + condition_noise[c] * rng.normal();
      set.stimuli.at(s, 0) = x;
      set.stimuli.at(s, 1) = y;
      set.labels.push_back(points.labels[i]);
      set.conditions.push_back(c);
      const auto p = points.mixture.posterior(x, y);
      std::copy(p.begin(), p.end(), set.posterior.row_span(s).begin());
    }
  }
  for (std::size_t h = 0; h < observers; ++h) {
    for (std::size_t s = 0; s < n; ++s) {
      const auto r = categorical(set.posterior.row_span(s), rng);
      set.responses[h * n + s] = r;
      set.counts.at(s, r) += 1.0;
    }
  }
  return set;
}

void save_soft_labels(const SoftLabelSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  const std::size_t n = set.size(), k = set.classes;
  CsvTable stim({"stimulus_id", "x", "y", "label", "condition"});
  for (std::size_t s = 0; s < n; ++s) {
    stim.add_row({idx(s), num(set.stimuli.at(s, 0)), num(set.stimuli.at(s, 1)), idx(set.labels[s]),
                  idx(set.conditions[s])});
  }
  stim.write(dir / "stimuli.csv");
  std::vector<std::string> hc{"stimulus_id"}, hp{"stimulus_id"};
  for (std::size_t j = 0; j < k; ++j) {
    hc.push_back("count_" + idx(j));
    hp.push_back("p_" + idx(j));
  }
  CsvTable counts(hc), post(hp);
  for (std::size_t s = 0; s < n; ++s) {
    std::vector<std::string> rc{idx(s)}, rp{idx(s)};
    for (std::size_t j = 0; j < k; ++j) {
      rc.push_back(num(set.counts.at(s, j)));
      if (!set.posterior.empty()) rp.push_back(num(set.posterior.at(s, j)));
    }
    counts.add_row(std::move(rc));
    if (!set.posterior.empty()) post.add_row(std::move(rp));
  }
  counts.write(dir / "softlabels.csv");
  if (!set.posterior.empty()) post.write(dir / "posterior.csv");
  CsvTable obs({"observer_id", "stimulus_id", "response"});
  for (std::size_t h = 0; h < set.observers; ++h) {
    for (std::size_t s = 0; s < n; ++s) obs.add_row({idx(h), idx(s), idx(set.responses[h * n + s])});
  }
  obs.write(dir / "observers.csv");
}

SoftLabelSet load_soft_labels(const std::filesystem::path& dir) {
  SoftLabelSet set;
  const auto stim = CsvTable::read(dir / "stimuli.csv");
  const auto sid = stim.column("stimulus_id"), sx = stim.column("x"), sy = stim.column("y"),
             sl = stim.column("label"), sc = stim.column("condition");
  const std::size_t n = stim.rows();
  if (n == 0) throw FormatError((dir / "stimuli.csv").string() + ": no stimuli");
  set.stimuli = Tensor(Shape{n, 2});
  for (std::size_t r = 0; r < n; ++r) {
    if (stim.index(r, sid) != r) {
      throw FormatError((dir / "stimuli.csv").string() + ":" + std::to_string(stim.line_of(r)) +
                        ": stimulus ids must be 0..N-1 in order");
    }
    set.stimuli.at(r, 0) = stim.number(r, sx);
    set.stimuli.at(r, 1) = stim.number(r, sy);
    set.labels.push_back(stim.index(r, sl));
    set.conditions.push_back(stim.index(r, sc));
  }

  const auto counts = CsvTable::read(dir / "softlabels.csv");
  std::size_t k = 0;
  while (counts.has_column("count_" + idx(k))) ++k;
  if (k == 0) throw FormatError((dir / "softlabels.csv").string() + ": missing column 'count_0'");
  if (counts.rows() != n) throw FormatError((dir / "softlabels.csv").string() + ": row count differs from stimuli");
  set.classes = k;
  set.counts = Tensor(Shape{n, k});
  const auto cid = counts.column("stimulus_id");
  for (std::size_t r = 0; r < n; ++r) {
    const auto s = counts.index(r, cid);
    if (s >= n) throw FormatError((dir / "softlabels.csv").string() + ":" + std::to_string(counts.line_of(r)) +
                                  ": unknown stimulus " + std::to_string(s));
    for (std::size_t j = 0; j < k; ++j) set.counts.at(s, j) = counts.number(r, counts.column("count_" + idx(j)));
  }

  if (std::filesystem::exists(dir / "posterior.csv")) {
    const auto post = CsvTable::read(dir / "posterior.csv");
    set.posterior = Tensor(Shape{n, k});
    const auto pid = post.column("stimulus_id");
    for (std::size_t r = 0; r < post.rows(); ++r) {
      const auto s = post.index(r, pid);
      if (s >= n) throw FormatError((dir / "posterior.csv").string() + ": unknown stimulus");
      for (std::size_t j = 0; j < k; ++j) set.posterior.at(s, j) = post.number(r, post.column("p_" + idx(j)));
    }
  }

  if (std::filesystem::exists(dir / "observers.csv")) {
    const auto obs = CsvTable::read(dir / "observers.csv");
    const auto oh = obs.column("observer_id"), os = obs.column("stimulus_id"), orr = obs.column("response");
    std::size_t h_max = 0;
    for (std::size_t r = 0; r < obs.rows(); ++r) h_max = std::max(h_max, obs.index(r, oh) + 1);
    set.observers = h_max;
    set.responses.assign(h_max * n, k);
    for (std::size_t r = 0; r < obs.rows(); ++r) {
      const auto h = obs.index(r, oh), s = obs.index(r, os);
      if (s >= n) throw FormatError((dir / "observers.csv").string() + ":" + std::to_string(obs.line_of(r)) +
                                    ": unknown stimulus " + std::to_string(s));
      set.responses[h * n + s] = obs.index(r, orr);
    }
    for (auto v : set.responses) {
      if (v >= k) throw FormatError((dir / "observers.csv").string() + ": every observer must answer every stimulus");
    }
  }
  return set;
}

// ---- perceptual -------------------------------------------------------------------

Tensor smooth_patch(std::size_t size, Rng& rng) {
  Tensor p(Shape{1, size, size});
  const double s = static_cast<double>(size);
  for (int w = 0; w < 3; ++w) {
    const double fx = rng.uniform(-2.0, 2.0), fy = rng.uniform(-2.0, 2.0);
    const double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const double amp = rng.uniform(0.5, 1.0);
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) {
        const double x = static_cast<double>(j) / s, y = static_cast<double>(i) / s;
        p[i * size + j] += amp * std::sin(2.0 * std::numbers::pi * (fx * x + fy * y) + phase);
      }
    }
  }
  double m = 0.0;
  for (double v : p.data()) m = std::max(m, std::abs(v));
  if (m > 0.0) {
    for (auto& v : p.data()) v *= 0.9 / m;
  }
  return p;
}

Tensor distort(const Tensor& patch, double magnitude, Rng& rng) {
  if (!(magnitude >= 0.0)) throw ConfigError("distortion magnitude must be >= 0");
  const std::size_t c = patch.dim(0), h = patch.dim(1), w = patch.dim(2);
  Tensor out = patch;
  const double mix = std::min(1.0, magnitude);
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h; ++i) {
      for (std::size_t j = 0; j < w; ++j) {
        double blur = 0.0;
        for (int di = -1; di <= 1; ++di) {
          for (int dj = -1; dj <= 1; ++dj) {
            const auto ii = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(i) + di, 0, static_cast<long>(h) - 1));
            const auto jj = static_cast<std::size_t>(std::clamp<long>(static_cast<long>(j) + dj, 0, static_cast<long>(w) - 1));
            blur += patch[(ch * h + ii) * w + jj];
          }
        }
        blur /= 9.0;
        const double x = patch[(ch * h + i) * w + j];
        const double noise = rng.normal();
        if (magnitude == 0.0) continue;
        out[(ch * h + i) * w + j] = std::clamp((1.0 - mix) * x + mix * blur + magnitude * noise, -1.0, 1.0);
      }
    }
  }
  return out;
}

PerceptualSet gen_perceptual(std::size_t refs, const std::vector<double>& levels, std::uint64_t seed, std::size_t size,
                             double threshold) {
  if (levels.size() < 2) throw ConfigError("perceptual set needs at least two distortion levels");
  if (refs == 0) throw ConfigError("perceptual set needs at least one reference");
  for (double l : levels) {
    if (!(l >= 0.0)) throw ConfigError("distortion levels must be >= 0");
  }
  PerceptualSet set;
  set.threshold = threshold;
  Rng rng(seed);
  std::vector<Tensor> references, triplets, pairs;
  for (std::size_t r = 0; r < refs; ++r) {
    const Tensor ref = smooth_patch(size, rng);
    references.push_back(ref);
    for (std::size_t i = 0; i < levels.size(); ++i) {
      for (std::size_t j = i + 1; j < levels.size(); ++j) {
        const bool swap = rng.bernoulli(0.5);
        const double ma = swap ? levels[j] : levels[i];
        const double mb = swap ? levels[i] : levels[j];
        const Tensor a = distort(ref, ma, rng);
        const Tensor b = distort(ref, mb, rng);
        const Tensor parts[3] = {ref, a, b};
        triplets.push_back(Tensor::stack(parts));
        set.mag_a.push_back(ma);
        set.mag_b.push_back(mb);
        set.triplet_choice.push_back(ma <= mb ? 0 : 1);
      }
    }
    for (double m : levels) {
      const Tensor parts[2] = {ref, distort(ref, m, rng)};
      pairs.push_back(Tensor::stack(parts));
      set.pair_magnitude.push_back(m);
      set.pair_same.push_back(m < threshold);
    }
  }
  set.references = Tensor::stack(references);
  set.triplet_images = Tensor::stack(triplets);
  set.pair_images = Tensor::stack(pairs);
  return set;
}

void save_perceptual(const PerceptualSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_tensor(set.references, dir / "references.jtns");
  save_tensor(set.triplet_images, dir / "triplets.jtns");
  save_tensor(set.pair_images, dir / "pairs.jtns");
  CsvTable t({"triplet_id", "mag_a", "mag_b", "choice"});
  for (std::size_t i = 0; i < set.triplets(); ++i) {
    t.add_row({idx(i), num(set.mag_a[i]), num(set.mag_b[i]), idx(set.triplet_choice[i])});
  }
  t.write(dir / "triplets.csv");
  CsvTable p({"pair_id", "magnitude", "same"});
  for (std::size_t i = 0; i < set.pairs(); ++i) {
    p.add_row({idx(i), num(set.pair_magnitude[i]), set.pair_same[i] ? "1" : "0"});
  }
  p.write(dir / "pairs.csv");
  CsvTable meta({"key", "value"});
  meta.add_row({"threshold", num(set.threshold)});
  meta.write(dir / "meta.csv");
}

PerceptualSet load_perceptual(const std::filesystem::path& dir) {
  PerceptualSet set;
  set.references = load_tensor(dir / "references.jtns");
  set.triplet_images = load_tensor(dir / "triplets.jtns");
  set.pair_images = load_tensor(dir / "pairs.jtns");
  const auto t = CsvTable::read(dir / "triplets.csv");
  const auto ta = t.column("mag_a"), tb = t.column("mag_b"), tc = t.column("choice");
  for (std::size_t r = 0; r < t.rows(); ++r) {
    set.mag_a.push_back(t.number(r, ta));
    set.mag_b.push_back(t.number(r, tb));
    const auto c = t.index(r, tc);
    if (c > 1) throw FormatError((dir / "triplets.csv").string() + ":" + std::to_string(t.line_of(r)) +
                                 ": choice must be 0 or 1");
    set.triplet_choice.push_back(c);
  }
  const auto p = CsvTable::read(dir / "pairs.csv");
  const auto pm = p.column("magnitude"), ps = p.column("same");
  for (std::size_t r = 0; r < p.rows(); ++r) {
    set.pair_magnitude.push_back(p.number(r, pm));
    set.pair_same.push_back(p.integer(r, ps) != 0);
  }
  const auto meta = CsvTable::read(dir / "meta.csv");
  const auto mk = meta.column("key"), mv = meta.column("value");
  for (std::size_t r = 0; r < meta.rows(); ++r) {
    if (meta.cell(r, mk) == "threshold") set.threshold = meta.number(r, mv);
  }
  if (set.triplet_images.rank() != 5 || set.triplet_images.dim(0) != set.triplets() ||
      set.triplet_images.dim(1) != 3) {
    throw FormatError((dir / "triplets.jtns").string() + ": expected [T x 3 x C x H x W] matching triplets.csv");
  }
  if (set.pair_images.rank() != 5 || set.pair_images.dim(0) != set.pairs() || set.pair_images.dim(1) != 2) {
    throw FormatError((dir / "pairs.jtns").string() + ": expected [P x 2 x C x H x W] matching pairs.csv");
  }
  return set;
}

// ---- probe set ----------------------------------------------------------------------

ProbeSet gen_probeset(std::size_t n, std::size_t size, std::uint64_t seed) {
  if (n == 0) throw ConfigError("probe set needs at least one stimulus");
  if (size < 8) throw ConfigError("probe image size must be >= 8");
  ProbeSet set;
  set.images = Tensor(Shape{n, 1, size, size});
  Rng rng(seed);
  const double s = static_cast<double>(size);
  const double elevation = std::numbers::pi / 4.0;
  std::vector<double> height(size * size);
  for (std::size_t m = 0; m < n; ++m) {
    const std::size_t gloss = rng.index(2);
    const std::size_t light = rng.index(kLightingDirections);
    const double relief = rng.uniform();
    std::fill(height.begin(), height.end(), 0.0);
    for (int b = 0; b < 4; ++b) {
      const double bx = rng.uniform(0.15, 0.85), by = rng.uniform(0.15, 0.85);
      const double bw = rng.uniform(0.12, 0.25);
      for (std::size_t i = 0; i < size; ++i) {
        for (std::size_t j = 0; j < size; ++j) {
          const double x = (static_cast<double>(j) + 0.5) / s, y = (static_cast<double>(i) + 0.5) / s;
          height[i * size + j] += relief * std::exp(-((x - bx) * (x - bx) + (y - by) * (y - by)) / (2.0 * bw * bw));
        }
      }
    }
    const double az = 2.0 * std::numbers::pi * static_cast<double>(light) / static_cast<double>(kLightingDirections);
    const double lx = std::cos(az) * std::cos(elevation), ly = std::sin(az) * std::cos(elevation),
                 lz = std::sin(elevation);
    auto img = set.images.row_span(m);
    for (std::size_t i = 0; i < size; ++i) {
      for (std::size_t j = 0; j < size; ++j) {
        const std::size_t jl = j > 0 ? j - 1 : j, jr = j + 1 < size ? j + 1 : j;
        const std::size_t iu = i > 0 ? i - 1 : i, id = i + 1 < size ? i + 1 : i;
        // Slopes in units of the image width.
        const double hx = (height[i * size + jr] - height[i * size + jl]) * s / static_cast<double>(jr - jl);
        const double hy = (height[id * size + j] - height[iu * size + j]) * s / static_cast<double>(id - iu);
        double nx = -0.3 * hx, ny = -0.3 * hy, nz = 1.0;
        const double norm = std::sqrt(nx * nx + ny * ny + nz * nz);
        nx /= norm;
        ny /= norm;
        nz /= norm;
        const double ndl = nx * lx + ny * ly + nz * lz;
        const double diffuse = std::max(0.0, ndl);
        // Reflected light direction against a viewer on +z.
        const double rz = 2.0 * ndl * nz - lz;
        const double spec = gloss ? 0.8 * std::pow(std::max(0.0, rz), 30.0) : 0.0;
        const double intensity = 0.15 + 0.6 * diffuse + spec;
        img[i * size + j] = std::clamp(2.0 * intensity - 1.0, -1.0, 1.0);
      }
    }
    set.gloss.push_back(gloss);
    set.lighting.push_back(light);
    set.relief.push_back(relief);
    set.rating.push_back(std::clamp(1.0 + 5.0 * (0.2 + 0.6 * static_cast<double>(gloss) + 0.15 * rng.normal()), 1.0,
                                    6.0));
  }
  return set;
}

void save_probeset(const ProbeSet& set, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  save_tensor(set.images, dir / "images.jtns");
  CsvTable t({"stimulus_id", "gloss", "lighting", "relief", "rating"});
  for (std::size_t i = 0; i < set.size(); ++i) {
    t.add_row({idx(i), idx(set.gloss[i]), idx(set.lighting[i]), num(set.relief[i]), num(set.rating[i])});
  }
  t.write(dir / "attributes.csv");
}

ProbeSet load_probeset(const std::filesystem::path& dir) {
  ProbeSet set;
  set.images = load_tensor(dir / "images.jtns");
  const auto t = CsvTable::read(dir / "attributes.csv");
  const auto cg = t.column("gloss"), cl = t.column("lighting"), cr = t.column("relief"), ca = t.column("rating");
  for (std::size_t r = 0; r < t.rows(); ++r) {
    set.gloss.push_back(t.index(r, cg));
    set.lighting.push_back(t.index(r, cl));
    set.relief.push_back(t.number(r, cr));
    set.rating.push_back(t.number(r, ca));
  }
  if (set.images.rank() != 4 || set.images.dim(0) != set.size()) {
    throw FormatError((dir / "images.jtns").string() + ": expected [N x C x H x W] matching attributes.csv");
  }
  return set;
}

std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& dir) {
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::directory_iterator(dir)) {
    if (e.is_regular_file()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace jemlab
