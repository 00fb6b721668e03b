#include "jemlab/trainer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <numbers>
#include <numeric>
#include <sstream>
#include <thread>

#include "jemlab/energy.hpp"

namespace jemlab {

// ---- losses ---------------------------------------------------------------

ad::Var disc_loss_on(ad::Var logits, std::span<const std::size_t> labels, double smoothing) {
  const Shape& s = logits.shape();
  if (s.size() != 2 || s[0] != labels.size()) throw DimensionError("disc loss expects [B x K] logits and B labels");
  const std::size_t b = s[0], k = s[1];
  Tensor target(s);
  const double off = k > 1 ? smoothing / static_cast<double>(k - 1) : 0.0;
  const double on = k > 1 ? 1.0 - smoothing : 1.0;
  for (std::size_t i = 0; i < b; ++i) {
    if (labels[i] >= k) throw UsageError("label " + std::to_string(labels[i]) + " out of range");
    for (std::size_t j = 0; j < k; ++j) target.at(i, j) = j == labels[i] ? on : off;
  }
  ad::Tape& tape = *logits.tape();
  // -sum_k t_k log p_k = lse - sum_k t_k f_k, since sum_k t_k = 1.
  auto picked = ad::sum(ad::mul(logits, tape.constant(std::move(target))));
  auto total = ad::sub(ad::sum(ad::logsumexp(logits)), picked);
  return ad::scale(total, 1.0 / static_cast<double>(b));
}

ad::Var cd_loss_on(ad::Var logits_pos, ad::Var logits_neg) {
  return ad::sub(ad::mean(marginal_energy_on(logits_pos)), ad::mean(marginal_energy_on(logits_neg)));
}

double disc_loss(const EnergyModel& model, const Tensor& x, std::span<const std::size_t> labels, double smoothing) {
  ad::Tape tape;
  auto params = bind_params(tape, model, false);
  return disc_loss_on(forward_on(model, params, tape.constant(x)), labels, smoothing).value().item();
}

double cd_loss(const EnergyModel& model, const Tensor& x_pos, const Tensor& x_neg) {
  ad::Tape tape;
  auto params = bind_params(tape, model, false);
  auto pos = forward_on(model, params, tape.constant(x_pos));
  auto neg = forward_on(model, params, tape.constant(x_neg));
  return cd_loss_on(pos, neg).value().item();
}

namespace {

std::vector<Tensor> param_grads(const ad::Tape& tape, const BoundParams& params) {
  std::vector<Tensor> out;
  out.reserve(params.vars.size());
  for (auto v : params.vars) out.push_back(tape.grad(v));
  return out;
}

}  // namespace

std::vector<Tensor> cd_gradient(const EnergyModel& model, const Tensor& x_pos, const Tensor& x_neg) {
  ad::Tape tape;
  auto params = bind_params(tape, model, true);
  auto pos = forward_on(model, params, tape.constant(x_pos));
  auto neg = forward_on(model, params, tape.constant(x_neg));
  tape.backward(cd_loss_on(pos, neg));
  return param_grads(tape, params);
}

double grad_balance(double g_d, double g_g, double eps) {
  if (!(g_d >= 0.0) || !(g_g >= 0.0)) throw UsageError("gradient norms must be non-negative");
  return g_d / (g_g + eps);
}

double combined_loss(double alpha, double c, double l_g, double l_d) { return alpha * c * l_g + (1.0 - alpha) * l_d; }

double global_norm(std::span<const Tensor> tensors) {
  double s = 0.0;
  for (const auto& t : tensors) {
    for (double v : t.data()) s += v * v;
  }
  return std::sqrt(s);
}

// ---- optimizer ------------------------------------------------------------

AdamState AdamState::zeros_like(std::span<const Tensor> params) {
  AdamState st;
  for (const auto& p : params) {
    st.m.emplace_back(p.shape());
    st.v.emplace_back(p.shape());
  }
  return st;
}

void adam_step(std::vector<Tensor>& params, std::span<const Tensor> grads, AdamState& state, double lr,
               const AdamConfig& cfg) {
  if (grads.size() != params.size()) throw DimensionError("adam: gradient count does not match parameters");
  if (state.m.empty()) state = AdamState::zeros_like(params);
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (grads[i].shape() != params[i].shape() || state.m[i].shape() != params[i].shape()) {
      throw DimensionError("adam: shape mismatch at parameter " + std::to_string(i));
    }
    if (!grads[i].all_finite()) {
      throw DivergenceError("non-finite gradient in parameter tensor " + std::to_string(i));
    }
  }
  state.t += 1;
  const double t = static_cast<double>(state.t);
  const double bc1 = 1.0 - std::pow(cfg.beta1, t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    auto g = grads[i].data();
    auto m = state.m[i].data();
    auto v = state.v[i].data();
    for (std::size_t j = 0; j < p.size(); ++j) {
      m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
      v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
      const double mh = m[j] / bc1;
      const double vh = v[j] / bc2;
      p[j] -= lr * mh / (std::sqrt(vh) + cfg.eps);
    }
  }
}

// ---- configuration --------------------------------------------------------

void TrainConfig::validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(lr >= 0.0)) throw ConfigError("learning rate must be >= 0");
  if (batch == 0) throw ConfigError("batch size must be positive");
  if (iters > 0 && warmup >= iters) throw ConfigError("warmup must be smaller than the iteration count");
  if (!(smoothing >= 0.0 && smoothing < 1.0)) throw ConfigError("label smoothing must lie in [0, 1)");
  if (!(input_noise >= 0.0)) throw ConfigError("input noise must be >= 0");
  if (!(balance_eps >= 0.0)) throw ConfigError("balance epsilon must be >= 0");
  if (!(adam.beta1 >= 0.0 && adam.beta1 < 1.0) || !(adam.beta2 >= 0.0 && adam.beta2 < 1.0) || !(adam.eps > 0.0)) {
    throw ConfigError("adam moments must lie in [0, 1) with positive epsilon");
  }
  sgld.validate();
  if (buffer.capacity == 0) throw ConfigError("buffer capacity must be positive");
  if (!(buffer.reinit >= 0.0 && buffer.reinit <= 1.0)) throw ConfigError("buffer reinit must lie in [0, 1]");
}

double lr_at(std::size_t t, double base, std::size_t warmup, std::size_t total) {
  if (t < warmup) return base * static_cast<double>(t) / static_cast<double>(warmup);
  if (total <= warmup) return base;
  const double u = static_cast<double>(std::min(t, total) - warmup) / static_cast<double>(total - warmup);
  return base * 0.5 * (1.0 + std::cos(std::numbers::pi * u));
}

// ---- batches --------------------------------------------------------------

std::vector<std::size_t> BatchSampler::next(std::size_t batch, Rng& rng) {
  std::vector<std::size_t> out;
  out.reserve(batch);
  while (out.size() < batch) {
    if (pos_ == order_.size()) {
      order_.resize(n_);
      std::iota(order_.begin(), order_.end(), 0);
      std::shuffle(order_.begin(), order_.end(), rng.engine());
      pos_ = 0;
    }
    out.push_back(order_[pos_++]);
  }
  return out;
}

void augment_images(Tensor& images, std::size_t pad, Rng& rng) {
  if (images.rank() != 4) throw DimensionError("augmentation expects [B x C x H x W]");
  const std::size_t b = images.dim(0), c = images.dim(1), h = images.dim(2), w = images.dim(3);
  std::vector<double> src(c * h * w);
  const auto clampi = [](long v, std::size_t n) {
    return static_cast<std::size_t>(std::clamp<long>(v, 0, static_cast<long>(n) - 1));
  };
  for (std::size_t i = 0; i < b; ++i) {
    const auto dy = static_cast<long>(rng.index(2 * pad + 1)) - static_cast<long>(pad);
    const auto dx = static_cast<long>(rng.index(2 * pad + 1)) - static_cast<long>(pad);
    const bool flip = rng.bernoulli(0.5);
    auto img = images.row_span(i);
    std::copy(img.begin(), img.end(), src.begin());
    for (std::size_t ch = 0; ch < c; ++ch) {
      for (std::size_t y = 0; y < h; ++y) {
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t xs = flip ? w - 1 - x : x;
          const auto sy = clampi(static_cast<long>(y) + dy, h);
          const auto sx = clampi(static_cast<long>(xs) + dx, w);
          img[(ch * h + y) * w + x] = src[(ch * h + sy) * w + sx];
        }
      }
    }
  }
}

Batch make_batch(const Dataset& data, BatchSampler& sampler, const TrainConfig& cfg, Rng& rng) {
  const auto idx = sampler.next(cfg.batch, rng);
  Dataset sub = data.subset(idx);
  Batch out{std::move(sub.inputs), std::move(sub.labels)};
  if (data.images && cfg.augment && cfg.crop_pad > 0) augment_images(out.x, cfg.crop_pad, rng);
  if (cfg.input_noise > 0.0) {
    for (auto& v : out.x.data()) v += cfg.input_noise * rng.normal();
  }
  return out;
}

// ---- training -------------------------------------------------------------

std::string TrainLog::to_csv() const {
  std::ostringstream os;
  os << "iter,loss,l_d,l_g,c,g_d,g_g,lr,holdout_acc\n";
  for (const auto& r : records) {
    os << r.iter << ',' << format_number(r.loss) << ',' << format_number(r.l_d) << ',' << format_number(r.l_g) << ','
       << format_number(r.c) << ',' << format_number(r.g_d) << ',' << format_number(r.g_g) << ','
       << format_number(r.lr) << ',' << format_number(r.holdout_acc) << '\n';
  }
  if (divergence) {
    std::string msg = *divergence;
    std::replace(msg.begin(), msg.end(), '\n', ' ');
    os << "# diverged: " << msg << '\n';
  }
  return os.str();
}

void TrainLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_csv();
  if (!out) throw IoError("write failed for " + path.string());
}

std::uint64_t trainer_stream_seed(std::uint64_t seed) { return seed ^ 0x9e3779b97f4a7c15ULL; }

Trainer::Trainer(EnergyModel model, const Dataset& data, TrainConfig cfg)
    : model_(std::move(model)),
      cfg_(std::move(cfg)),
      adam_(AdamState::zeros_like(model_.params())),
      buffer_(data.sample_shape(), data.box_lo, data.box_hi, cfg_.buffer),
      rng_(trainer_stream_seed(cfg_.seed)),
      sampler_(data.size()) {
  cfg_.validate();
  if (data.sample_shape() != model_.input_shape()) {
    throw DimensionError("dataset samples " + shape_string(data.sample_shape()) + " do not match model input " +
                         shape_string(model_.input_shape()));
  }
  if (data.classes != model_.classes()) throw ConfigError("dataset class count does not match the model");
}

TrainRecord Trainer::step(const Dataset& data) { return step(make_batch(data, sampler_, cfg_, rng_)); }

TrainRecord Trainer::step(const Batch& batch) {
  const double alpha = cfg_.alpha;
  const bool generative = alpha > 0.0;
  TrainRecord rec;
  rec.iter = iter_;
  rec.lr = lr_at(iter_, cfg_.lr, cfg_.warmup, cfg_.iters);

  Tensor x_neg;
  if (generative) {
    const Tensor x0 = buffer_.draw(cfg_.negative_count(), rng_);
    x_neg = sample_chain(ModelLandscape(model_), x0, cfg_.sgld, rng_);
  }

  ad::Tape tape;
  auto params = bind_params(tape, model_, true);
  const ForwardOptions fwd{true, &rng_};
  auto logits_pos = forward_on(model_, params, tape.constant(batch.x), fwd);
  auto l_d = disc_loss_on(logits_pos, batch.y, cfg_.smoothing);
  rec.l_d = l_d.value().item();

  tape.backward(l_d);
  std::vector<Tensor> g_d = param_grads(tape, params);
  rec.g_d = global_norm(g_d);

  std::vector<Tensor> update;
  if (!generative) {
    rec.c = 1.0;
    update = std::move(g_d);
  } else {
    auto logits_neg = forward_on(model_, params, tape.constant(x_neg), fwd);
    auto l_g = cd_loss_on(logits_pos, logits_neg);
    rec.l_g = l_g.value().item();
    tape.backward(l_g);
    std::vector<Tensor> g_g = param_grads(tape, params);
    rec.g_g = global_norm(g_g);
    if (alpha < 1.0) {
      rec.c = grad_balance(rec.g_d, rec.g_g, cfg_.balance_eps);
      const double wg = alpha * rec.c, wd = 1.0 - alpha;
      for (std::size_t i = 0; i < g_g.size(); ++i) {
        auto gg = g_g[i].data();
        auto gd = g_d[i].data();
        for (std::size_t j = 0; j < gg.size(); ++j) gg[j] = wg * gg[j] + wd * gd[j];
      }
    } else {
      rec.c = 1.0;
    }
    update = std::move(g_g);
  }
  rec.loss = combined_loss(alpha, rec.c, rec.l_g, rec.l_d);

  if (!std::isfinite(rec.loss) || !std::isfinite(rec.l_d) || !std::isfinite(rec.l_g) || !std::isfinite(rec.c)) {
    throw DivergenceError("non-finite loss at iteration " + std::to_string(iter_) + ": l_d=" +
                          format_number(rec.l_d) + " l_g=" + format_number(rec.l_g) + " c=" + format_number(rec.c) +
                          " g_d=" + format_number(rec.g_d) + " g_g=" + format_number(rec.g_g));
  }
  try {
    adam_step(model_.params(), update, adam_, rec.lr, cfg_.adam);
  } catch (const DivergenceError& e) {
    throw DivergenceError(std::string(e.what()) + " at iteration " + std::to_string(iter_));
  }
  if (generative) buffer_.push(x_neg);
  last_grad_ = std::move(update);
  ++iter_;
  return rec;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.model = model_;
  ck.alpha = cfg_.alpha;
  ck.step = iter_;
  ck.first_moments = adam_.m;
  ck.second_moments = adam_.v;
  ck.adam_steps = adam_.t;
  return ck;
}

double accuracy(const EnergyModel& model, const Dataset& data) {
  if (data.size() == 0) return 0.0;
  constexpr std::size_t chunk = 512;
  std::size_t correct = 0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Dataset part = data.subset(idx);
    const auto pred = predict(model, part.inputs);
    for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == part.labels[i];
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

namespace {

double holdout_loss(const EnergyModel& model, const Dataset& data) {
  constexpr std::size_t chunk = 512;
  double total = 0.0;
  std::vector<std::size_t> idx;
  for (std::size_t start = 0; start < data.size(); start += chunk) {
    const std::size_t end = std::min(data.size(), start + chunk);
    idx.resize(end - start);
    std::iota(idx.begin(), idx.end(), start);
    const Dataset part = data.subset(idx);
    total += disc_loss(model, part.inputs, part.labels) * static_cast<double>(part.size());
  }
  return total / static_cast<double>(data.size());
}

}  // namespace

TrainResult train(const Dataset& train_set, const Dataset& holdout, const NetworkSpec& net, const TrainConfig& cfg,
                  std::optional<EnergyModel> init) {
  cfg.validate();
  train_set.validate();
  EnergyModel model = init ? std::move(*init) : build(net, cfg.seed);
  Trainer trainer(std::move(model), train_set, cfg);

  const std::size_t epoch = (train_set.size() + cfg.batch - 1) / cfg.batch;
  const std::size_t eval_every = cfg.eval_every ? cfg.eval_every : std::max<std::size_t>(epoch, 1);
  const bool have_holdout = holdout.size() > 0;
  const bool track_best = cfg.select == Selection::best_holdout && have_holdout;

  TrainLog log;
  double acc = have_holdout ? accuracy(trainer.model(), holdout) : 0.0;
  std::optional<Checkpoint> best;
  double best_loss = 0.0;
  if (track_best) {
    best = trainer.checkpoint();
    best_loss = holdout_loss(trainer.model(), holdout);
  }

  for (std::size_t t = 0; t < cfg.iters; ++t) {
    TrainRecord rec;
    try {
      rec = trainer.step(train_set);
    } catch (const DivergenceError& e) {
      log.divergence = e.what();
      throw TrainingDiverged(e.what(), trainer.checkpoint(), log);
    }
    if (have_holdout && ((t + 1) % eval_every == 0 || t + 1 == cfg.iters)) {
      acc = accuracy(trainer.model(), holdout);
      if (track_best) {
        const double l = holdout_loss(trainer.model(), holdout);
        if (l < best_loss) {
          best_loss = l;
          best = trainer.checkpoint();
        }
      }
    }
    rec.holdout_acc = acc;
    log.records.push_back(rec);
  }

  Checkpoint ck = track_best ? std::move(*best) : trainer.checkpoint();
  EnergyModel final_model = ck.model;
  return {std::move(final_model), std::move(log), std::move(ck)};
}

// ---- alpha sweeps ---------------------------------------------------------

std::vector<double> default_alpha_grid() {
  std::vector<double> out;
  for (int i = 0; i <= 10; ++i) out.push_back(static_cast<double>(i) / 10.0);
  return out;
}

std::string run_dir_name(double alpha, std::uint64_t seed) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "alpha_%.2f_seed_%llu", alpha, static_cast<unsigned long long>(seed));
  return buf;
}

std::size_t worker_count(std::size_t requested, std::size_t jobs) {
  std::size_t n = requested;
  if (n == 0) {
    if (const char* env = std::getenv("JEMLAB_THREADS")) {
      char* end = nullptr;
      const long v = std::strtol(env, &end, 10);
      if (end != env && v > 0) n = static_cast<std::size_t>(v);
    }
  }
  if (n == 0) n = std::max(1u, std::thread::hardware_concurrency());
  return std::max<std::size_t>(1, std::min(n, std::max<std::size_t>(jobs, 1)));
}

std::vector<SweepRun> sweep_alpha(const Dataset& train_set, const Dataset& holdout, const NetworkSpec& net,
                                  const TrainConfig& base, const SweepOptions& opts, const Evaluator& evaluate) {
  if (opts.alphas.empty()) throw ConfigError("alpha list is empty");
  if (opts.seeds.empty()) throw ConfigError("seed list is empty");
  for (double a : opts.alphas) {
    if (!(a >= 0.0 && a <= 1.0)) throw ConfigError("alpha " + format_number(a) + " outside [0, 1]");
  }
  std::vector<SweepRun> runs;
  for (double a : opts.alphas) {
    for (auto s : opts.seeds) {
      SweepRun r;
      r.alpha = a;
      r.seed = s;
      r.dir = opts.out_dir / run_dir_name(a, s);
      r.checkpoint = r.dir / "model.jemc";
      runs.push_back(std::move(r));
    }
  }
  std::stable_sort(runs.begin(), runs.end(), [](const SweepRun& x, const SweepRun& y) {
    return x.alpha != y.alpha ? x.alpha < y.alpha : x.seed < y.seed;
  });
  std::filesystem::create_directories(opts.out_dir);

  auto run_one = [&](SweepRun& run) {
    run.report.alpha = run.alpha;
    run.report.seed = run.seed;
    run.report.dataset = train_set.id;
    TrainConfig cfg = base;
    cfg.alpha = run.alpha;
    cfg.seed = run.seed;
    try {
      std::filesystem::create_directories(run.dir);
      if (opts.on_run_dir) opts.on_run_dir(run.dir, cfg);
      TrainResult res = train(train_set, holdout, net, cfg);
      save_checkpoint(res.checkpoint, run.checkpoint);
      res.log.write_csv(run.dir / "train_log.csv");
      if (evaluate) evaluate(res.model, run.report);
      run.ok = true;
    } catch (const TrainingDiverged& e) {
      run.report.status = std::string("failed: diverged: ") + e.what();
      try {
        save_checkpoint(e.last_good, run.dir / "last_good.jemc");
        e.log.write_csv(run.dir / "train_log.csv");
      } catch (const std::exception&) {
      }
    } catch (const std::exception& e) {
      run.report.status = std::string("failed: ") + e.what();
    }
    std::replace(run.report.status.begin(), run.report.status.end(), '\n', ' ');
  };

  const std::size_t workers = worker_count(opts.threads, runs.size());
  if (workers == 1) {
    for (auto& r : runs) run_one(r);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::jthread> pool;
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < runs.size(); i = next++) run_one(runs[i]);
      });
    }
  }

  std::vector<MetricsReport> reports;
  for (const auto& r : runs) reports.push_back(r.report);
  write_reports(reports, opts.out_dir / "sweep.csv", opts.out_dir / "sweep.json", opts.timestamp);
  return runs;
}

}  // namespace jemlab
