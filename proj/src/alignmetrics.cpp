#include "jemlab/alignmetrics.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Dense>

#include "jemlab/energy.hpp"
#include "jemlab/error.hpp"
#include "jemlab/rng.hpp"

namespace jemlab {

namespace {

void check_rows(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape() != b.shape()) {
    throw DimensionError("expected matching [N x K] arrays, got " + shape_string(a.shape()) + " and " +
                         shape_string(b.shape()));
  }
}

std::vector<double> normalized_row(const Tensor& counts, std::size_t i) {
  auto row = counts.row_span(i);
  double total = 0.0;
  for (double c : row) {
    if (c < 0.0) throw UsageError("negative response count at row " + std::to_string(i));
    total += c;
  }
  if (!(total > 0.0)) throw UndefinedError("stimulus " + std::to_string(i) + " has no responses");
  std::vector<double> p(row.begin(), row.end());
  for (auto& v : p) v /= total;
  return p;
}

}  // namespace

// ---- soft labels ----------------------------------------------------------------

double soft_label_ce(const Tensor& model_probs, const Tensor& human_counts) {
  check_rows(model_probs, human_counts);
  const std::size_t n = model_probs.dim(0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = normalized_row(human_counts, i);
    auto q = model_probs.row_span(i);
    double ce = 0.0;
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (p[k] > 0.0) ce -= p[k] * std::log(std::max(q[k], kProbFloor));
    }
    total += ce;
  }
  return total / static_cast<double>(n);
}

double mean_human_entropy(const Tensor& human_counts) {
  const std::size_t n = human_counts.dim(0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    for (double p : normalized_row(human_counts, i)) {
      if (p > 0.0) total -= p * std::log(p);
    }
  }
  return total / static_cast<double>(n);
}

double soft_label_kl(const Tensor& model_probs, const Tensor& human_counts) {
  check_rows(model_probs, human_counts);
  const std::size_t n = model_probs.dim(0);
  double total = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = normalized_row(human_counts, i);
    auto q = model_probs.row_span(i);
    for (std::size_t k = 0; k < p.size(); ++k) {
      if (p[k] > 0.0) total += p[k] * (std::log(p[k]) - std::log(std::max(q[k], kProbFloor)));
    }
  }
  return total / static_cast<double>(n);
}

double soft_label_top1(const Tensor& model_probs, const Tensor& human_counts) {
  check_rows(model_probs, human_counts);
  const std::size_t n = model_probs.dim(0);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < n; ++i) {
    auto q = model_probs.row_span(i);
    auto c = human_counts.row_span(i);
    const auto top = static_cast<std::size_t>(std::max_element(q.begin(), q.end()) - q.begin());
    hit += c[top] == *std::max_element(c.begin(), c.end());
  }
  return static_cast<double>(hit) / static_cast<double>(n);
}

// ---- error consistency ---------------------------------------------------------

double kappa_contribution(const std::vector<bool>& model_correct, const std::vector<bool>& human_correct) {
  if (model_correct.size() != human_correct.size()) {
    throw AlignmentError("model answered " + std::to_string(model_correct.size()) + " stimuli, observer " +
                         std::to_string(human_correct.size()));
  }
  if (model_correct.empty()) throw AlignmentError("no common stimuli");
  const double n = static_cast<double>(model_correct.size());
  double agree = 0.0, p = 0.0, q = 0.0;
  for (std::size_t i = 0; i < model_correct.size(); ++i) {
    agree += model_correct[i] == human_correct[i];
    p += model_correct[i];
    q += human_correct[i];
  }
  const double o = agree / n;
  p /= n;
  q /= n;
  const double e = p * q + (1.0 - p) * (1.0 - q);
  if (e == 1.0) return 0.0;
  return (o - e) / (1.0 - e);
}

double error_consistency(const CorrectnessTable& t) {
  const std::size_t s = t.model.size();
  if (s == 0) throw AlignmentError("no stimuli");
  if (t.dataset.size() != s || t.condition.size() != s) {
    throw AlignmentError("dataset/condition tags do not cover every stimulus");
  }
  if (t.observers.empty()) throw AlignmentError("no observers");
  for (const auto& h : t.observers) {
    if (h.size() != s) throw AlignmentError("an observer did not answer the model's stimuli");
  }
  std::vector<std::size_t> datasets(t.dataset.begin(), t.dataset.end());
  std::sort(datasets.begin(), datasets.end());
  datasets.erase(std::unique(datasets.begin(), datasets.end()), datasets.end());

  double over_d = 0.0;
  for (auto d : datasets) {
    std::vector<std::size_t> conds;
    for (std::size_t i = 0; i < s; ++i) {
      if (t.dataset[i] == d) conds.push_back(t.condition[i]);
    }
    std::sort(conds.begin(), conds.end());
    conds.erase(std::unique(conds.begin(), conds.end()), conds.end());
    double over_h = 0.0;
    for (const auto& h : t.observers) {
      double over_c = 0.0;
      for (auto c : conds) {
        std::vector<bool> m, hh;
        for (std::size_t i = 0; i < s; ++i) {
          if (t.dataset[i] == d && t.condition[i] == c) {
            m.push_back(t.model[i]);
            hh.push_back(h[i]);
          }
        }
        over_c += kappa_contribution(m, hh);
      }
      over_h += over_c / static_cast<double>(conds.size());
    }
    over_d += over_h / static_cast<double>(t.observers.size());
  }
  return over_d / static_cast<double>(datasets.size());
}

// ---- shape bias -------------------------------------------------------------------

namespace {

void check_cues(std::span<const std::size_t> pred, std::span<const std::size_t> shape,
                std::span<const std::size_t> texture) {
  if (pred.empty()) throw UsageError("shape bias of an empty set");
  if (pred.size() != shape.size() || pred.size() != texture.size()) throw DimensionError("cue arrays differ in length");
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (shape[i] == texture[i]) throw UsageError("row " + std::to_string(i) + " is not a cue conflict");
  }
}

}  // namespace

double shape_bias(std::span<const std::size_t> predictions, std::span<const std::size_t> shape_labels,
                  std::span<const std::size_t> texture_labels) {
  check_cues(predictions, shape_labels, texture_labels);
  std::size_t shape_hits = 0, cue_hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const bool s = predictions[i] == shape_labels[i];
    const bool t = predictions[i] == texture_labels[i];
    shape_hits += s;
    cue_hits += s || t;
  }
  if (cue_hits == 0) throw UndefinedError("no prediction matches either cue");
  return static_cast<double>(shape_hits) / static_cast<double>(cue_hits);
}

double shape_bias_all(std::span<const std::size_t> predictions, std::span<const std::size_t> shape_labels,
                      std::span<const std::size_t> texture_labels) {
  check_cues(predictions, shape_labels, texture_labels);
  std::size_t shape_hits = 0;
  for (std::size_t i = 0; i < predictions.size(); ++i) shape_hits += predictions[i] == shape_labels[i];
  return static_cast<double>(shape_hits) / static_cast<double>(predictions.size());
}

// ---- perceptual ---------------------------------------------------------------------

namespace {

// Channel count and spatial positions of one activation, batch axis dropped.
std::pair<std::size_t, std::size_t> layout(const Tensor& t) {
  Shape s = t.shape();
  if (!s.empty() && s[0] == 1 && (s.size() == 2 || s.size() == 4)) s.erase(s.begin());
  if (s.size() == 1) return {s[0], 1};
  if (s.size() == 3) return {s[0], s[1] * s[2]};
  throw DimensionError("unsupported activation shape " + shape_string(t.shape()));
}

double layer_distance(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw DimensionError("activation shapes differ");
  const auto [c, pos] = layout(a);
  auto da = a.data();
  auto db = b.data();
  double total = 0.0;
  for (std::size_t p = 0; p < pos; ++p) {
    double na = 0.0, nb = 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      na += da[k * pos + p] * da[k * pos + p];
      nb += db[k * pos + p] * db[k * pos + p];
    }
    na = na > 0.0 ? 1.0 / std::sqrt(na) : 0.0;
    nb = nb > 0.0 ? 1.0 / std::sqrt(nb) : 0.0;
    for (std::size_t k = 0; k < c; ++k) {
      const double d = da[k * pos + p] * na - db[k * pos + p] * nb;
      total += d * d;
    }
  }
  return total / static_cast<double>(c * pos);
}

}  // namespace

double feature_distance(std::span<const Tensor> a, std::span<const Tensor> b) {
  if (a.size() != b.size()) throw DimensionError("layer lists differ in length");
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d += layer_distance(a[i], b[i]);
  return d;
}

double perceptual_distance(const EnergyModel& model, const Tensor& a, const Tensor& b,
                           const std::vector<std::size_t>& layer_ids) {
  if (a.shape() != b.shape()) throw DimensionError("perceptual distance of differently shaped images");
  Shape s{2};
  s.insert(s.end(), a.shape().begin(), a.shape().end());
  std::vector<double> both(a.data().begin(), a.data().end());
  both.insert(both.end(), b.data().begin(), b.data().end());
  const auto feats = features(model, Tensor(std::move(s), std::move(both)), layer_ids);
  std::vector<Tensor> fa, fb;
  for (const auto& f : feats) {
    fa.push_back(f.row(0));
    fb.push_back(f.row(1));
  }
  return feature_distance(fa, fb);
}

double two_afc(std::span<const double> d_a, std::span<const double> d_b, std::span<const std::size_t> choice) {
  if (d_a.empty()) throw UsageError("2AFC over an empty triplet set");
  if (d_a.size() != d_b.size() || d_a.size() != choice.size()) throw DimensionError("2AFC arrays differ in length");
  double score = 0.0;
  for (std::size_t i = 0; i < d_a.size(); ++i) {
    if (d_a[i] == d_b[i]) {
      score += 0.5;
    } else {
      const std::size_t pick = d_a[i] < d_b[i] ? 0 : 1;
      score += pick == choice[i];
    }
  }
  return score / static_cast<double>(d_a.size());
}

double jnd_map(std::span<const double> distances, const std::vector<bool>& same) {
  if (distances.size() != same.size()) throw DimensionError("JND arrays differ in length");
  std::vector<std::size_t> order(distances.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t x, std::size_t y) { return distances[x] < distances[y]; });
  double hits = 0.0, sum_prec = 0.0;
  for (std::size_t r = 0; r < order.size(); ++r) {
    if (same[order[r]]) {
      hits += 1.0;
      sum_prec += hits / static_cast<double>(r + 1);
    }
  }
  if (hits == 0.0) throw UndefinedError("no 'same' pairs to retrieve");
  return sum_prec / hits;
}

std::vector<std::size_t> default_feature_layers(const NetworkSpec& spec) {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    if (spec.layers[i].kind == LayerKind::leaky_relu) out.push_back(i);
  }
  if (out.empty()) out.push_back(spec.layers.size() - 1);
  return out;
}

// ---- probes -------------------------------------------------------------------------

namespace {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

Mat to_matrix(const Tensor& t, std::span<const std::size_t> rows) {
  const std::size_t d = t.row_size();
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(d));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto r = t.row_span(rows[i]);
    for (std::size_t j = 0; j < d; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = r[j];
  }
  return m;
}

// Per-column mean and scale from the training rows; zero-variance columns get scale 1.
void standardize_stats(const Mat& x, Vec& mean, Vec& scale) {
  mean = x.colwise().mean().transpose();
  scale.resize(x.cols());
  for (Eigen::Index j = 0; j < x.cols(); ++j) {
    const double var = (x.col(j).array() - mean(j)).square().mean();
    scale(j) = var > 1e-24 ? std::sqrt(var) : 1.0;
  }
}

Mat apply_standardize(const Mat& x, const Vec& mean, const Vec& scale) {
  return (x.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array();
}

std::vector<std::vector<std::size_t>> fold_split(std::size_t n, const ProbeOptions& opts) {
  if (opts.folds < 2 || n < opts.folds) throw ConfigError("probe needs N >= folds >= 2");
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(opts.seed);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  std::vector<std::vector<std::size_t>> folds(opts.folds);
  for (std::size_t i = 0; i < n; ++i) folds[i % opts.folds].push_back(idx[i]);
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

// Softmax regression with L2 on the weights (not the bias), fitted by
// accelerated gradient descent with a fixed 1/L step.
struct Logistic {
  Mat w;  // D x K
  Vec b;  // K

  Mat scores(const Mat& x) const { return (x * w).rowwise() + b.transpose(); }
};

Logistic fit_logistic(const Mat& x, std::span<const std::size_t> y, std::size_t k, const ProbeOptions& opts) {
  const auto n = x.rows(), d = x.cols();
  const auto kk = static_cast<Eigen::Index>(k);
  Mat onehot = Mat::Zero(n, kk);
  for (Eigen::Index i = 0; i < n; ++i) onehot(i, static_cast<Eigen::Index>(y[static_cast<std::size_t>(i)])) = 1.0;
  // Lipschitz bound of the mean softmax loss: 0.5 * ||[X 1]||_F^2 / N.
  const double lip = 0.5 * (x.squaredNorm() / static_cast<double>(n) + 1.0) + opts.l2;
  const double step = 1.0 / lip;
  Logistic cur{Mat::Zero(d, kk), Vec::Zero(kk)};
  Logistic prev = cur;
  Logistic look = cur;
  for (std::size_t it = 0; it < opts.max_iters; ++it) {
    Mat s = look.scores(x);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double m = s.row(i).maxCoeff();
      s.row(i) = (s.row(i).array() - m).exp();
      s.row(i) /= s.row(i).sum();
    }
    const Mat r = (s - onehot) / static_cast<double>(n);
    const Mat gw = x.transpose() * r + opts.l2 * look.w;
    const Vec gb = r.colwise().sum().transpose();
    prev = cur;
    cur.w = look.w - step * gw;
    cur.b = look.b - step * gb;
    const double momentum = static_cast<double>(it) / static_cast<double>(it + 3);
    look.w = cur.w + momentum * (cur.w - prev.w);
    look.b = cur.b + momentum * (cur.b - prev.b);
    if (std::sqrt(gw.squaredNorm() + gb.squaredNorm()) < opts.tol) break;
  }
  return cur;
}

}  // namespace

std::vector<double> ProbeResult::binary_margin() const {
  if (classes != 2) throw UsageError("binary margin needs a two-class probe");
  std::vector<double> out(decision_values.dim(0));
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = decision_values.at(i, 1) - decision_values.at(i, 0);
  return out;
}

ProbeResult probe_classify(const Tensor& features, std::span<const std::size_t> labels, const ProbeOptions& opts) {
  if (features.rank() != 2 || features.dim(0) != labels.size()) {
    throw DimensionError("probe features must be [N x D] with N labels");
  }
  const std::size_t n = labels.size();
  std::size_t k = 0;
  for (auto l : labels) k = std::max(k, l + 1);
  k = std::max<std::size_t>(k, 2);
  const auto folds = fold_split(n, opts);
  ProbeResult res;
  res.classes = k;
  res.decision_values = Tensor(Shape{n, k});
  std::size_t correct = 0;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train.begin(), train.end());
    const Mat xtr_raw = to_matrix(features, train);
    Vec mean, scale;
    standardize_stats(xtr_raw, mean, scale);
    std::vector<std::size_t> ytr;
    for (auto i : train) ytr.push_back(labels[i]);
    const Logistic model = fit_logistic(apply_standardize(xtr_raw, mean, scale), ytr, k, opts);
    const Mat scores = model.scores(apply_standardize(to_matrix(features, folds[f]), mean, scale));
    for (std::size_t r = 0; r < folds[f].size(); ++r) {
      const auto i = folds[f][r];
      Eigen::Index best = 0;
      scores.row(static_cast<Eigen::Index>(r)).maxCoeff(&best);
      correct += static_cast<std::size_t>(best) == labels[i];
      for (std::size_t c = 0; c < k; ++c) {
        res.decision_values.at(i, c) = scores(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
      }
    }
  }
  res.accuracy = static_cast<double>(correct) / static_cast<double>(n);
  return res;
}

std::vector<double> RidgeModel::predict(const Tensor& features) const {
  if (features.rank() != 2 || features.dim(1) != weights.size()) throw DimensionError("ridge feature width mismatch");
  std::vector<double> out(features.dim(0), intercept);
  for (std::size_t i = 0; i < out.size(); ++i) {
    auto r = features.row_span(i);
    for (std::size_t j = 0; j < weights.size(); ++j) out[i] += weights[j] * (r[j] - mean[j]) / scale[j];
  }
  return out;
}

RidgeModel ridge_fit(const Tensor& features, std::span<const double> targets, double ridge) {
  if (features.rank() != 2 || features.dim(0) != targets.size()) {
    throw DimensionError("ridge features must be [N x D] with N targets");
  }
  if (!(ridge >= 0.0)) throw ConfigError("ridge penalty must be >= 0");
  std::vector<std::size_t> all(targets.size());
  std::iota(all.begin(), all.end(), 0);
  const Mat raw = to_matrix(features, all);
  Vec mean, scale;
  standardize_stats(raw, mean, scale);
  const Mat x = apply_standardize(raw, mean, scale);
  const Vec y = Eigen::Map<const Vec>(targets.data(), static_cast<Eigen::Index>(targets.size()));
  const double ybar = y.mean();
  const Vec yc = y.array() - ybar;
  Mat gram = x.transpose() * x;
  gram.diagonal().array() += ridge;
  const Vec w = gram.ldlt().solve(x.transpose() * yc);
  RidgeModel m;
  m.mean.assign(mean.data(), mean.data() + mean.size());
  m.scale.assign(scale.data(), scale.data() + scale.size());
  m.weights.assign(w.data(), w.data() + w.size());
  m.intercept = ybar;
  return m;
}

double r_squared(std::span<const double> targets, std::span<const double> predictions) {
  if (targets.size() != predictions.size() || targets.empty()) throw DimensionError("R^2 arrays differ in length");
  const double mean = std::accumulate(targets.begin(), targets.end(), 0.0) / static_cast<double>(targets.size());
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    ss_res += (targets[i] - predictions[i]) * (targets[i] - predictions[i]);
    ss_tot += (targets[i] - mean) * (targets[i] - mean);
  }
  if (ss_tot == 0.0) throw UndefinedError("R^2 of constant targets");
  return 1.0 - ss_res / ss_tot;
}

double probe_regress(const Tensor& features, std::span<const double> targets, double ridge, const ProbeOptions& opts) {
  if (features.rank() != 2 || features.dim(0) != targets.size()) {
    throw DimensionError("regression features must be [N x D] with N targets");
  }
  const auto folds = fold_split(targets.size(), opts);
  std::vector<double> pred(targets.size());
  for (std::size_t f = 0; f < folds.size(); ++f) {
    std::vector<std::size_t> train;
    for (std::size_t g = 0; g < folds.size(); ++g) {
      if (g != f) train.insert(train.end(), folds[g].begin(), folds[g].end());
    }
    std::sort(train.begin(), train.end());
    std::vector<double> ytr;
    std::vector<double> xtr;
    for (auto i : train) {
      ytr.push_back(targets[i]);
      auto r = features.row_span(i);
      xtr.insert(xtr.end(), r.begin(), r.end());
    }
    const RidgeModel m = ridge_fit(Tensor(Shape{train.size(), features.dim(1)}, std::move(xtr)), ytr, ridge);
    std::vector<double> xte;
    for (auto i : folds[f]) {
      auto r = features.row_span(i);
      xte.insert(xte.end(), r.begin(), r.end());
    }
    const auto p = m.predict(Tensor(Shape{folds[f].size(), features.dim(1)}, std::move(xte)));
    for (std::size_t r = 0; r < folds[f].size(); ++r) pred[folds[f][r]] = p[r];
  }
  return r_squared(targets, pred);
}

// ---- correlation -------------------------------------------------------------------

double pearson(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw DimensionError("correlation arrays differ in length");
  if (a.size() < 2) throw UndefinedError("correlation needs at least two points");
  const double n = static_cast<double>(a.size());
  const double ma = std::accumulate(a.begin(), a.end(), 0.0) / n;
  const double mb = std::accumulate(b.begin(), b.end(), 0.0) / n;
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa == 0.0 || sbb == 0.0) throw UndefinedError("correlation with a constant sequence");
  return sab / std::sqrt(saa * sbb);
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return values[x] < values[y]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t t = i; t <= j; ++t) ranks[order[t]] = r;
    i = j + 1;
  }
  return ranks;
}

double spearman(std::span<const double> a, std::span<const double> b) {
  const auto ra = average_ranks(a);
  const auto rb = average_ranks(b);
  return pearson(ra, rb);
}

double rating_correlation(std::span<const double> decision_values, std::span<const double> ratings) {
  if (decision_values.size() < 3) throw UndefinedError("rating correlation needs at least three stimuli");
  return pearson(decision_values, ratings);
}

// ---- saliency ------------------------------------------------------------------------

Tensor saliency_map(const EnergyModel& model, const Tensor& image, SaliencyMode mode) {
  if (image.rank() != 3 || image.shape() != model.input_shape()) {
    throw DimensionError("saliency needs one image matching the model input, got " + shape_string(image.shape()));
  }
  Shape s{1};
  s.insert(s.end(), image.shape().begin(), image.shape().end());
  ad::Tape tape;
  auto params = bind_params(tape, model, false);
  auto x = tape.variable(image.reshaped(s));
  auto logits = forward_on(model, params, x);
  ad::Var target;
  if (mode == SaliencyMode::class_logit) {
    auto row = logits.value().row_span(0);
    const auto top = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
    Tensor pick(logits.shape());
    pick[top] = 1.0;
    target = ad::sum(ad::mul(logits, tape.constant(std::move(pick))));
  } else {
    target = ad::sum(marginal_energy_on(logits));
  }
  tape.backward(target);
  const Tensor g = tape.grad(x);
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor map(Shape{h, w});
  for (std::size_t ch = 0; ch < c; ++ch) {
    for (std::size_t i = 0; i < h * w; ++i) map[i] += std::abs(g[ch * h * w + i]);
  }
  return map;
}

double saliency_alignment(const Tensor& map, const Tensor& reference, double ceiling) {
  if (map.shape() != reference.shape()) throw DimensionError("saliency maps differ in shape");
  if (!(ceiling > 0.0)) throw ConfigError("saliency ceiling must be positive");
  return spearman(map.data(), reference.data()) / ceiling;
}

}  // namespace jemlab
