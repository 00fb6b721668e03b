#include "jemlab/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>

#include "binio.hpp"
#include "jemlab/config.hpp"
#include "jemlab/energy.hpp"
#include "jemlab/error.hpp"
#include "jemlab/evaluate.hpp"
#include "jemlab/oracle.hpp"
#include "jemlab/synthdata.hpp"
#include "jemlab/tabular.hpp"
#include "jemlab/trainer.hpp"

namespace jemlab {

namespace fs = std::filesystem;

std::vector<std::uint8_t> encode_pnm(const Tensor& image) {
  if (image.rank() != 3 || (image.dim(0) != 1 && image.dim(0) != 3)) {
    throw DimensionError("PNM output needs a [1|3 x H x W] image, got " + shape_string(image.shape()));
  }
  const std::size_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  const std::string header = std::string(c == 1 ? "P5" : "P6") + "\n" + std::to_string(w) + " " + std::to_string(h) +
                             "\n255\n";
  std::vector<std::uint8_t> out(header.begin(), header.end());
  out.reserve(out.size() + c * h * w);
  for (std::size_t i = 0; i < h * w; ++i) {
    for (std::size_t ch = 0; ch < c; ++ch) {
      const double v = std::round((image[ch * h * w + i] + 1.0) * 127.5);
      out.push_back(static_cast<std::uint8_t>(std::clamp(std::isfinite(v) ? v : 0.0, 0.0, 255.0)));
    }
  }
  return out;
}

void write_pnm(const Tensor& image, const fs::path& path) { binio::write_file(path.string(), encode_pnm(image)); }

std::string file_digest(const fs::path& path) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (auto b : binio::read_file(path.string())) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

// Raised by oracle-check when a configured tolerance is violated.
class OracleViolation : public Error {
 public:
  using Error::Error;
};

struct Common {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out;
  bool no_timestamp = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "key=value config file");
  cmd->add_option("-s,--set", c.overrides, "override one config key (key=value)")->take_all();
  cmd->add_option("-o,--out", c.out, "output directory (out.dir)");
}

RunConfig resolve(const Common& c) {
  RunConfig cfg = c.config_path.empty() ? RunConfig() : RunConfig::read(c.config_path);
  for (const auto& o : c.overrides) cfg.apply(o);
  if (!c.out.empty()) cfg.set("out.dir", c.out);
  return cfg;
}

fs::path prepare_out(const RunConfig& cfg) {
  const fs::path dir = cfg.get("out.dir");
  if (dir.empty()) throw ConfigError("out.dir is empty");
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  return dir;
}

std::string step_tag(std::size_t t) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%04zu", t);
  return buf;
}

std::string index_tag(std::size_t i) {
  char buf[24];
  std::snprintf(buf, sizeof buf, "%03zu", i);
  return buf;
}

// ---- gen --------------------------------------------------------------------

const std::vector<std::string> kGenKinds = {"mixture2d", "cueconflict", "softlabels", "perceptual", "probeset"};

int cmd_gen(const std::string& kind, const RunConfig& cfg, std::ostream& out) {
  if (std::find(kGenKinds.begin(), kGenKinds.end(), kind) == kGenKinds.end()) {
    std::string valid;
    for (const auto& k : kGenKinds) valid += (valid.empty() ? "" : ", ") + k;
    throw UsageError("unknown dataset kind '" + kind + "' (valid: " + valid + ")");
  }
  const auto seed = cfg.seed("gen.seed");
  const auto k = cfg.count("gen.k");
  const auto sep = cfg.number("gen.separation");
  const auto sd = cfg.number("gen.stddev");
  const auto size = cfg.count("gen.size");
  // Build before touching the filesystem so config errors win over I/O errors.
  std::function<void(const fs::path&)> save;
  if (kind == "mixture2d") {
    auto data = gen_mixture2d(k, cfg.count("gen.n"), sep, seed, sd);
    save = [data = std::move(data)](const fs::path& d) { save_points(data, d); };
  } else if (kind == "cueconflict") {
    auto set = gen_cue_conflict(k, size, cfg.count("gen.congruent"), cfg.count("gen.conflict"), seed);
    save = [set = std::move(set)](const fs::path& d) { save_cue_conflict(set, d); };
  } else if (kind == "softlabels") {
    const auto points = gen_mixture2d(k, cfg.count("gen.points"), sep, seed, sd);
    auto set = gen_soft_labels(points, cfg.count("gen.observers"), seed + 1, cfg.numbers("gen.noise"));
    save = [set = std::move(set)](const fs::path& d) { save_soft_labels(set, d); };
  } else if (kind == "perceptual") {
    auto set = gen_perceptual(cfg.count("gen.refs"), cfg.numbers("gen.levels"), seed, size, cfg.number("gen.threshold"));
    save = [set = std::move(set)](const fs::path& d) { save_perceptual(set, d); };
  } else {
    auto set = gen_probeset(cfg.count("gen.probes"), size, seed);
    save = [set = std::move(set)](const fs::path& d) { save_probeset(set, d); };
  }
  const fs::path dir = prepare_out(cfg);
  save(dir);
  for (const auto& f : dataset_files(dir)) {
    out << f.string() << '\t' << fs::file_size(f) << '\t' << file_digest(f) << '\n';
  }
  return kExitOk;
}

// ---- train / sweep -------------------------------------------------------------

struct TrainingData {
  Dataset train, holdout;
  std::optional<LabeledPoints2D> points;
};

TrainingData training_data(const RunConfig& cfg) {
  Dataset all = load_training_data(cfg);
  TrainingData td;
  const fs::path dir = cfg.get("data.path");
  if (fs::exists(dir / "points.csv")) td.points = load_points(dir);
  const double frac = cfg.number("data.holdout");
  if (frac > 0.0) {
    auto [tr, ho] = split_holdout(all, frac, cfg.seed("train.seed"));
    td.train = std::move(tr);
    td.holdout = std::move(ho);
  } else {
    td.train = std::move(all);
  }
  return td;
}

int cmd_train(const RunConfig& cfg, std::ostream& out, std::ostream& err) {
  const auto td = training_data(cfg);
  const auto tc = train_config(cfg, td.train.images);
  const auto spec = network_spec(cfg, td.train);
  const fs::path dir = prepare_out(cfg);
  cfg.write(dir / "config.resolved");
  try {
    auto res = train(td.train, td.holdout, spec, tc);
    save_checkpoint(res.checkpoint, dir / "model.jemc");
    res.log.write_csv(dir / "train_log.csv");
    out << (dir / "model.jemc").string() << '\n' << (dir / "train_log.csv").string() << '\n';
    if (!res.log.records.empty()) {
      out << "final holdout_acc=" << format_number(res.log.records.back().holdout_acc) << '\n';
    }
  } catch (const TrainingDiverged& e) {
    save_checkpoint(e.last_good, dir / "last_good.jemc");
    e.log.write_csv(dir / "train_log.csv");
    err << "training diverged at iteration " << e.log.records.size() << ": " << e.what() << '\n'
        << "last good checkpoint: " << (dir / "last_good.jemc").string() << '\n';
    return kExitDivergence;
  }
  return kExitOk;
}

EvalData eval_data(const RunConfig& cfg) {
  EvalData d;
  const auto path = [&](const char* key) { return fs::path(cfg.get(key)); };
  const auto require_dir = [](const fs::path& p, const char* key) {
    if (!fs::is_directory(p)) throw ConfigError(std::string(key) + " " + p.string() + " is not a directory");
  };
  if (!path("eval.points").empty()) {
    require_dir(path("eval.points"), "eval.points");
    d.points = load_points(path("eval.points"));
    d.labeled = to_dataset(*d.points);
  }
  if (!path("eval.softlabels").empty()) {
    require_dir(path("eval.softlabels"), "eval.softlabels");
    d.soft_labels = load_soft_labels(path("eval.softlabels"));
  }
  if (!path("eval.cueconflict").empty()) {
    require_dir(path("eval.cueconflict"), "eval.cueconflict");
    d.cue_conflict = load_cue_conflict(path("eval.cueconflict"));
    if (!d.labeled) d.labeled = d.cue_conflict->congruent_dataset();
  }
  if (!path("eval.perceptual").empty()) {
    require_dir(path("eval.perceptual"), "eval.perceptual");
    d.perceptual = load_perceptual(path("eval.perceptual"));
  }
  if (!path("eval.probeset").empty()) {
    require_dir(path("eval.probeset"), "eval.probeset");
    d.probe = load_probeset(path("eval.probeset"));
  }
  d.density_grid = Grid::box(2, cfg.number("eval.grid_lo"), cfg.number("eval.grid_hi"), cfg.count("eval.grid_n"));
  d.probe_options.folds = cfg.count("eval.probe_folds");
  d.probe_options.seed = cfg.seed("eval.probe_seed");
  d.probe_options.l2 = cfg.number("eval.probe_l2");
  d.relief_ridge = cfg.number("eval.relief_ridge");
  d.saliency_ceiling = cfg.number("eval.saliency_ceiling");
  d.saliency_images = cfg.count("eval.saliency_images");
  return d;
}

int cmd_sweep(const RunConfig& cfg, bool timestamp, std::ostream& out) {
  const auto td = training_data(cfg);
  const auto tc = train_config(cfg, td.train.images);
  const auto spec = network_spec(cfg, td.train);

  EvalData ed = eval_data(cfg);
  if (!td.holdout.labels.empty()) ed.labeled = td.holdout;
  if (!ed.points && td.points) ed.points = td.points;
  std::vector<std::string> metrics;
  if (cfg.get("sweep.metrics") == "auto") {
    if (ed.labeled) metrics.push_back("accuracy");
    if (ed.points && td.train.sample_shape() == Shape{2}) metrics.push_back("density_tv");
  } else {
    metrics = cfg.words("sweep.metrics");
  }
  for (const auto& m : metrics) {
    if (!metric_available(m, ed)) throw ConfigError("metric '" + m + "' needs a " + metric_requirement(m));
  }

  SweepOptions opts;
  opts.alphas = cfg.numbers("sweep.alphas");
  opts.seeds = cfg.seeds("sweep.seeds");
  if (opts.alphas.empty() || opts.seeds.empty()) throw ConfigError("sweep needs at least one alpha and one seed");
  opts.out_dir = prepare_out(cfg);
  opts.threads = cfg.count("sweep.threads");
  opts.timestamp = timestamp;
  opts.on_run_dir = [&cfg](const fs::path& dir, const TrainConfig& run) {
    RunConfig frozen = cfg;
    frozen.set("train.alpha", format_number(run.alpha));
    frozen.set("train.seed", std::to_string(run.seed));
    frozen.write(dir / "config.resolved");
  };
  cfg.write(opts.out_dir / "config.resolved");
  const Evaluator evaluate = [&](const EnergyModel& model, MetricsReport& report) {
    if (!metrics.empty()) evaluate_metrics(model, ed, metrics, report);
  };
  const auto runs = sweep_alpha(td.train, td.holdout, spec, tc, opts, evaluate);
  std::size_t ok = 0;
  for (const auto& r : runs) {
    ok += r.ok;
    out << run_dir_name(r.alpha, r.seed) << '\t' << r.report.status << '\n';
  }
  out << (opts.out_dir / "sweep.csv").string() << '\n';
  return ok > 0 ? kExitOk : kExitDivergence;
}

// ---- eval ----------------------------------------------------------------------

int cmd_eval(const RunConfig& cfg, const std::string& checkpoint, bool timestamp, std::ostream& out) {
  if (checkpoint.empty()) throw UsageError("eval needs --checkpoint");
  const auto metrics = cfg.words("eval.metrics");
  if (metrics.empty()) throw UsageError("eval needs a non-empty metric list (--metrics or eval.metrics)");
  for (const auto& m : metrics) metric_requirement(m);
  const EvalData ed = eval_data(cfg);
  const Checkpoint ckpt = load_checkpoint(checkpoint);
  MetricsReport report;
  report.alpha = ckpt.alpha;
  report.dataset = fs::path(checkpoint).filename().string();
  evaluate_metrics(ckpt.model, ed, metrics, report);
  const fs::path dir = prepare_out(cfg);
  write_reports({report}, dir / "metrics.csv", dir / "metrics.json", timestamp);
  for (const auto& m : report.metrics) {
    out << m.name << '=' << (m.value ? format_number(*m.value) : "undefined (" + m.note + ")") << '\n';
  }
  return kExitOk;
}

// ---- sample / refine -------------------------------------------------------------

void require_images(const EnergyModel& model) {
  if (model.input_shape().size() != 3) {
    throw UsageError("checkpoint is not an image model (input " + shape_string(model.input_shape()) + ")");
  }
}

int cmd_sample(const RunConfig& cfg, const std::string& checkpoint, std::ostream& out) {
  if (checkpoint.empty()) throw UsageError("sample needs --checkpoint");
  const EnergyModel model = load(checkpoint);
  require_images(model);
  const auto count = cfg.count("sample.count");
  const auto steps = cfg.count("sample.steps");
  const auto every = cfg.count("sample.every");
  if (count == 0) throw ConfigError("sample.count must be positive");
  SgldConfig sc;
  sc.steps = std::max<std::size_t>(steps, 1);  // zero steps writes only the initial snapshot
  sc.step_size = cfg.number("sample.step_size");
  sc.noise = cfg.number("sample.noise");
  sc.clip = true;
  sc.validate();
  const fs::path dir = prepare_out(cfg);
  cfg.write(dir / "config.resolved");

  Rng rng(cfg.seed("sample.seed"));
  Tensor x = ReplayBuffer::uniform_box(model.input_shape(), -1.0, 1.0).fresh(count, rng);
  const ModelLandscape landscape(model);
  const auto snapshot = [&](std::size_t t) {
    for (std::size_t i = 0; i < count; ++i) {
      const fs::path p = dir / ("sample_" + index_tag(i) + "_step_" + step_tag(t) + ".pgm");
      const Tensor img = x.row(i);
      if (img.dim(0) == 3) {
        write_pnm(img, fs::path(p).replace_extension(".ppm"));
      } else {
        write_pnm(img, p);
      }
    }
  };
  snapshot(0);
  for (std::size_t t = 0; t < steps; ++t) {
    x = sgld_step(landscape, x, step_at(sc, t, steps), sc.noise, rng, true, sc.clip_lo, sc.clip_hi);
    const bool last = t + 1 == steps;
    if (last || (every > 0 && (t + 1) % every == 0)) snapshot(t + 1);
  }
  out << "wrote " << count << " chains to " << dir.string() << '\n';
  return kExitOk;
}

int cmd_refine(const RunConfig& cfg, const std::string& checkpoint, const std::string& data, std::ostream& out) {
  if (checkpoint.empty()) throw UsageError("refine needs --checkpoint");
  if (data.empty() || !fs::is_directory(data)) throw ConfigError("refine needs --data pointing at a cue-conflict set");
  const EnergyModel model = load(checkpoint);
  require_images(model);
  const CueConflictSet set = load_cue_conflict(data);
  const auto grid = cfg.counts("refine.steps");
  if (grid.empty()) throw ConfigError("refine.steps is empty");
  const auto idx = set.conflict_indices();
  if (idx.empty()) throw ConfigError("cue-conflict set has no conflict images");
  SgldConfig sc;
  sc.step_size = cfg.number("refine.step_size");
  sc.noise = cfg.number("refine.noise");
  sc.clip = cfg.flag("refine.clip");
  sc.decay = StepDecay::constant;
  sc.validate();
  const fs::path dir = prepare_out(cfg);
  cfg.write(dir / "config.resolved");

  Shape s = set.images.shape();
  s[0] = idx.size();
  std::vector<double> raw;
  std::vector<std::size_t> shape, texture;
  for (auto i : idx) {
    auto r = set.images.row_span(i);
    raw.insert(raw.end(), r.begin(), r.end());
    shape.push_back(set.shape_labels[i]);
    texture.push_back(set.texture_labels[i]);
  }
  const Tensor x0(std::move(s), std::move(raw));
  Rng rng(cfg.seed("refine.seed"));
  const auto max_steps = *std::max_element(grid.begin(), grid.end());
  const auto traj = refine(ModelLandscape(model), x0, max_steps, sc, rng, StepDecay::constant);
  const auto dump = std::min(cfg.count("refine.dump"), idx.size());

  CsvTable table({"steps", "shape_bias", "shape_bias_all"});
  for (auto t : grid) {
    const auto pred = predict(model, traj[t]);
    std::string sb;
    try {
      sb = format_number(shape_bias(pred, shape, texture));
    } catch (const UndefinedError&) {
      sb = "nan";
    }
    table.add_row({std::to_string(t), sb, format_number(shape_bias_all(pred, shape, texture))});
    out << "steps=" << t << " shape_bias=" << sb << '\n';
    for (std::size_t i = 0; i < dump; ++i) {
      write_pnm(traj[t].row(i), dir / ("refine_" + index_tag(i) + "_step_" + step_tag(t) + ".pgm"));
    }
  }
  table.write(dir / "refine.csv");
  return kExitOk;
}

// ---- oracle-check ---------------------------------------------------------------

EnergyModel constant_toy(std::size_t classes) {
  NetworkSpec spec;
  spec.input_shape = {2};
  spec.classes = classes;
  spec.layers = {LayerSpec::make_affine(classes)};
  EnergyModel m = build(spec, 0);
  for (auto& p : m.params()) {
    for (auto& v : p.data()) v = 0.0;
  }
  return m;
}

int cmd_oracle_check(const RunConfig& cfg, const std::string& checkpoint, std::size_t toy_classes, bool flip,
                     std::ostream& out) {
  if (checkpoint.empty() == (toy_classes == 0)) throw UsageError("oracle-check needs exactly one of --checkpoint, --toy");
  const EnergyModel model = checkpoint.empty() ? constant_toy(toy_classes) : load(checkpoint);
  if (model.input_shape().size() != 1 || model.input_shape()[0] > 3) {
    throw UsageError("oracle-check needs a flat input of at most 3 dimensions");
  }
  const std::size_t dims = model.input_shape()[0];
  OracleCheckConfig oc;
  oc.grid = Grid::box(dims, cfg.number("oracle.grid_lo"), cfg.number("oracle.grid_hi"), cfg.count("oracle.grid_n"));
  oc.negatives = cfg.count("oracle.negatives");
  oc.chain_steps = cfg.count("oracle.chain_steps");
  oc.langevin_eta = cfg.number("oracle.eta");
  oc.seed = cfg.seed("oracle.seed");
  oc.tol_normalization = cfg.number("oracle.tol_normalization");
  oc.tol_cosine = cfg.number("oracle.tol_cosine");
  if (!cfg.get("oracle.tol_tv").empty()) oc.tol_tv = cfg.number("oracle.tol_tv");
  oc.flip_cd_sign = flip;

  Tensor data;
  const fs::path data_dir = cfg.get("oracle.data");
  if (!data_dir.empty()) {
    if (!fs::is_directory(data_dir)) throw ConfigError("oracle.data " + data_dir.string() + " is not a directory");
    data = load_points(data_dir).points;
    if (data.dim(1) != dims) throw ConfigError("oracle.data dimension does not match the model");
  } else {
    // No data given: a uniform sample of the box stands in for the positives.
    Rng rng(oc.seed + 1);
    data = ReplayBuffer(Shape{dims}, oc.grid.lo, oc.grid.hi).fresh(256, rng);
  }
  const auto r = oracle_check(model, data, oc);
  out << "log_z=" << format_number(r.log_z) << '\n'
      << "z=" << format_number(r.z) << '\n'
      << "normalization_residual=" << format_number(r.normalization_residual) << '\n'
      << "cd_exact_cosine=" << format_number(r.cosine) << '\n'
      << "sample_tv=" << format_number(r.tv) << '\n'
      << "sample_kl=" << format_number(r.kl) << '\n';
  if (!r.pass()) {
    std::string msg;
    for (const auto& v : r.violations) msg += (msg.empty() ? "" : "; ") + v;
    throw OracleViolation(msg);
  }
  out << "oracle check passed\n";
  return kExitOk;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"jemlab: hybrid energy-based classifier training and alignment evaluation"};
  app.require_subcommand(1);

  Common common;
  std::string kind, checkpoint, data, metrics, steps;
  std::size_t toy = 0;
  bool flip = false;

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  gen->add_option("kind", kind, "mixture2d | cueconflict | softlabels | perceptual | probeset")->required();
  auto* trn = app.add_subcommand("train", "train one model");
  auto* swp = app.add_subcommand("sweep", "train one model per alpha and seed");
  auto* evl = app.add_subcommand("eval", "score a checkpoint on alignment metrics");
  evl->add_option("--checkpoint", checkpoint, "model checkpoint");
  evl->add_option("--metrics", metrics, "comma-separated metric names (eval.metrics)");
  auto* smp = app.add_subcommand("sample", "run SGLD chains from noise and write images");
  smp->add_option("--checkpoint", checkpoint, "image model checkpoint");
  auto* ref = app.add_subcommand("refine", "shape bias of cue-conflict images across SGLD refinement steps");
  ref->add_option("--checkpoint", checkpoint, "image model checkpoint");
  ref->add_option("--data", data, "cue-conflict dataset directory");
  ref->add_option("--steps", steps, "comma-separated step counts (refine.steps)");
  auto* orc = app.add_subcommand("oracle-check", "exact-grid checks of Z, the CD gradient and SGLD samples");
  orc->add_option("--checkpoint", checkpoint, "2-D or 3-D model checkpoint");
  orc->add_option("--toy", toy, "use a constant-zero-logit model with this many classes");
  orc->add_flag("--flip-sign", flip, "negate the CD gradient (checks that the gate fails)");
  for (auto* cmd : {gen, trn, swp, evl, smp, ref, orc}) add_common(cmd, common);
  for (auto* cmd : {swp, evl}) cmd->add_flag("--no-timestamp", common.no_timestamp, "omit the timestamp header line");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  try {
    RunConfig cfg = resolve(common);
    if (!metrics.empty()) cfg.set("eval.metrics", metrics);
    if (!steps.empty()) cfg.set("refine.steps", steps);
    const bool stamp = !common.no_timestamp;
    if (*gen) return cmd_gen(kind, cfg, out);
    if (*trn) return cmd_train(cfg, out, err);
    if (*swp) return cmd_sweep(cfg, stamp, out);
    if (*evl) return cmd_eval(cfg, checkpoint, stamp, out);
    if (*smp) return cmd_sample(cfg, checkpoint, out);
    if (*ref) return cmd_refine(cfg, checkpoint, data, out);
    return cmd_oracle_check(cfg, checkpoint, toy, flip, out);
  } catch (const OracleViolation& e) {
    err << "oracle tolerance violated: " << e.what() << '\n';
    return kExitOracle;
  } catch (const DivergenceError& e) {
    err << "diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const IoError& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const FormatError& e) {
    err << "format error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << '\n';
    return kExitIo;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return 1;
  }
}

}  // namespace jemlab
