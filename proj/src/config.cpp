#include "jemlab/config.hpp"

#include <charconv>
#include <set>

#include "jemlab/error.hpp"
#include "jemlab/report.hpp"
#include "jemlab/synthdata.hpp"
#include "jemlab/tabular.hpp"

namespace jemlab {

namespace {

std::string trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return std::string(s);
}

std::vector<std::string> split_list(const std::string& v) {
  std::vector<std::string> out;
  if (trim(v).empty()) return out;
  std::size_t start = 0;
  while (true) {
    const auto comma = v.find(',', start);
    out.push_back(trim(std::string_view(v).substr(start, comma == std::string::npos ? std::string::npos : comma - start)));
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return out;
}

std::map<std::string, std::string> registered_defaults() {
  const TrainConfig t;
  const auto n = [](double v) { return format_number(v); };
  const auto u = [](std::size_t v) { return std::to_string(v); };
  return {
      {"data.path", ""},
      {"data.holdout", "0.2"},
      {"net.kind", "auto"},
      {"net.hidden", "64"},
      {"net.widths", "16,32,32"},
      {"net.slope", "0.2"},
      {"net.dropout", "0"},
      {"train.alpha", n(t.alpha)},
      {"train.lr", n(t.lr)},
      {"train.batch", u(t.batch)},
      {"train.negatives", u(t.negatives)},
      {"train.iters", "1000"},
      {"train.warmup", "auto"},
      {"train.smoothing", n(t.smoothing)},
      {"train.input_noise", n(t.input_noise)},
      {"train.balance_eps", n(t.balance_eps)},
      {"train.seed", "0"},
      {"train.augment", t.augment ? "true" : "false"},
      {"train.crop_pad", u(t.crop_pad)},
      {"train.eval_every", u(t.eval_every)},
      {"train.select", "final"},
      {"adam.beta1", n(t.adam.beta1)},
      {"adam.beta2", n(t.adam.beta2)},
      {"adam.eps", n(t.adam.eps)},
      {"sgld.steps", u(t.sgld.steps)},
      {"sgld.step_size", n(t.sgld.step_size)},
      {"sgld.noise", n(t.sgld.noise)},
      {"sgld.clip", "auto"},
      {"sgld.clip_lo", n(t.sgld.clip_lo)},
      {"sgld.clip_hi", n(t.sgld.clip_hi)},
      {"sgld.decay", "linear"},
      {"buffer.capacity", u(t.buffer.capacity)},
      {"buffer.reinit", n(t.buffer.reinit)},
      {"sweep.alphas", "0,0.1,0.2,0.3,0.4,0.5,0.6,0.7,0.8,0.9,1"},
      {"sweep.seeds", "0"},
      {"sweep.threads", "0"},
      {"sweep.metrics", "auto"},
      {"eval.points", ""},
      {"eval.softlabels", ""},
      {"eval.cueconflict", ""},
      {"eval.perceptual", ""},
      {"eval.probeset", ""},
      {"eval.metrics", ""},
      {"eval.grid_lo", "-7"},
      {"eval.grid_hi", "7"},
      {"eval.grid_n", "96"},
      {"eval.probe_folds", "5"},
      {"eval.probe_seed", "0"},
      {"eval.probe_l2", "0.01"},
      {"eval.relief_ridge", "1"},
      {"eval.saliency_ceiling", "1"},
      {"eval.saliency_images", "64"},
      {"gen.seed", "0"},
      {"gen.k", "3"},
      {"gen.n", "6000"},
      {"gen.separation", "3.5"},
      {"gen.stddev", "1"},
      {"gen.size", "16"},
      {"gen.congruent", "600"},
      {"gen.conflict", "300"},
      {"gen.points", "300"},
      {"gen.observers", "20"},
      {"gen.noise", "0,0.5,1"},
      {"gen.refs", "20"},
      {"gen.levels", "0,0.05,0.1,0.2,0.4,0.8"},
      {"gen.threshold", "0.15"},
      {"gen.probes", "300"},
      {"sample.count", "4"},
      {"sample.steps", "60"},
      {"sample.every", "0"},
      {"sample.seed", "0"},
      {"sample.step_size", "1"},
      {"sample.noise", "0.01"},
      {"refine.steps", "0,5,10,20"},
      {"refine.step_size", "1"},
      {"refine.noise", "0.01"},
      {"refine.clip", "true"},
      {"refine.seed", "0"},
      {"refine.dump", "0"},
      {"oracle.data", ""},
      {"oracle.grid_lo", "-4"},
      {"oracle.grid_hi", "4"},
      {"oracle.grid_n", "128"},
      {"oracle.negatives", "512"},
      {"oracle.chain_steps", "200"},
      {"oracle.eta", "0.001"},
      {"oracle.seed", "0"},
      {"oracle.tol_normalization", "1e-9"},
      {"oracle.tol_cosine", "0.9"},
      {"oracle.tol_tv", ""},
      {"out.dir", "out"},
  };
}

template <typename T>
T parse_as(const std::string& key, const std::string& text, const char* what) {
  T v{};
  const auto s = trim(text);
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError("config key " + key + ": '" + text + "' is not " + what);
  }
  return v;
}

}  // namespace

RunConfig::RunConfig() : values_(registered_defaults()) {}

RunConfig RunConfig::parse(const std::string& text, const std::string& source) {
  RunConfig c;
  c.merge(text, source);
  return c;
}

RunConfig RunConfig::read(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("config file " + path.string() + " does not exist");
  return parse(read_text(path), path.string());
}

void RunConfig::merge(const std::string& text, const std::string& source) {
  std::set<std::string> seen;
  std::size_t line_no = 0, pos = 0;
  while (pos < text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string::npos) nl = text.size();
    const auto line = trim(std::string_view(text).substr(pos, nl - pos));
    pos = nl + 1;
    ++line_no;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    const std::string where = source + ":" + std::to_string(line_no);
    if (eq == std::string::npos) throw ConfigError(where + ": expected key = value");
    const auto key = trim(std::string_view(line).substr(0, eq));
    if (!seen.insert(key).second) throw ConfigError(where + ": key " + key + " given twice");
    try {
      set(key, trim(std::string_view(line).substr(eq + 1)));
    } catch (const ConfigError& e) {
      throw ConfigError(where + ": " + e.what());
    }
  }
}

void RunConfig::set(const std::string& key, const std::string& value) {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  it->second = trim(value);
}

void RunConfig::apply(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("override '" + assignment + "' is not key=value");
  set(trim(std::string_view(assignment).substr(0, eq)), assignment.substr(eq + 1));
}

const std::string& RunConfig::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("unknown config key '" + key + "'");
  return it->second;
}

double RunConfig::number(const std::string& key) const { return parse_as<double>(key, get(key), "a number"); }

std::size_t RunConfig::count(const std::string& key) const {
  return parse_as<std::size_t>(key, get(key), "a non-negative integer");
}

std::uint64_t RunConfig::seed(const std::string& key) const {
  return parse_as<std::uint64_t>(key, get(key), "a non-negative integer");
}

bool RunConfig::flag(const std::string& key) const {
  const auto& v = get(key);
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("config key " + key + ": '" + v + "' is not a boolean");
}

std::vector<double> RunConfig::numbers(const std::string& key) const {
  std::vector<double> out;
  for (const auto& w : split_list(get(key))) out.push_back(parse_as<double>(key, w, "a number list"));
  return out;
}

std::vector<std::uint64_t> RunConfig::seeds(const std::string& key) const {
  std::vector<std::uint64_t> out;
  for (const auto& w : split_list(get(key))) out.push_back(parse_as<std::uint64_t>(key, w, "an integer list"));
  return out;
}

std::vector<std::size_t> RunConfig::counts(const std::string& key) const {
  std::vector<std::size_t> out;
  for (const auto& w : split_list(get(key))) out.push_back(parse_as<std::size_t>(key, w, "an integer list"));
  return out;
}

std::vector<std::string> RunConfig::words(const std::string& key) const { return split_list(get(key)); }

std::string RunConfig::to_string() const {
  std::string out;
  for (const auto& [k, v] : values_) out += k + "=" + v + "\n";
  return out;
}

void RunConfig::write(const std::filesystem::path& path) const { write_text(path, to_string()); }

TrainConfig train_config(const RunConfig& cfg, bool images) {
  TrainConfig t;
  t.alpha = cfg.number("train.alpha");
  t.lr = cfg.number("train.lr");
  t.batch = cfg.count("train.batch");
  t.negatives = cfg.count("train.negatives");
  t.iters = cfg.count("train.iters");
  t.warmup = cfg.get("train.warmup") == "auto" ? std::min<std::size_t>(1000, t.iters / 10) : cfg.count("train.warmup");
  t.smoothing = cfg.number("train.smoothing");
  t.input_noise = cfg.number("train.input_noise");
  t.balance_eps = cfg.number("train.balance_eps");
  t.seed = cfg.seed("train.seed");
  t.augment = cfg.flag("train.augment");
  t.crop_pad = cfg.count("train.crop_pad");
  t.eval_every = cfg.count("train.eval_every");
  const auto& sel = cfg.get("train.select");
  if (sel == "final") {
    t.select = Selection::final_iterate;
  } else if (sel == "best_holdout") {
    t.select = Selection::best_holdout;
  } else {
    throw ConfigError("train.select must be final or best_holdout, got '" + sel + "'");
  }
  t.adam.beta1 = cfg.number("adam.beta1");
  t.adam.beta2 = cfg.number("adam.beta2");
  t.adam.eps = cfg.number("adam.eps");
  t.sgld.steps = cfg.count("sgld.steps");
  t.sgld.step_size = cfg.number("sgld.step_size");
  t.sgld.noise = cfg.number("sgld.noise");
  t.sgld.clip = cfg.get("sgld.clip") == "auto" ? images : cfg.flag("sgld.clip");
  t.sgld.clip_lo = cfg.number("sgld.clip_lo");
  t.sgld.clip_hi = cfg.number("sgld.clip_hi");
  const auto& decay = cfg.get("sgld.decay");
  if (decay == "linear") {
    t.sgld.decay = StepDecay::linear;
  } else if (decay == "constant") {
    t.sgld.decay = StepDecay::constant;
  } else {
    throw ConfigError("sgld.decay must be linear or constant, got '" + decay + "'");
  }
  t.buffer.capacity = cfg.count("buffer.capacity");
  t.buffer.reinit = cfg.number("buffer.reinit");
  t.validate();
  return t;
}

NetworkSpec network_spec(const RunConfig& cfg, const Dataset& data) {
  auto kind = cfg.get("net.kind");
  if (kind == "auto") kind = data.images ? "conv" : "mlp";
  const double slope = cfg.number("net.slope");
  NetworkSpec spec;
  if (kind == "mlp") {
    const auto shape = data.sample_shape();
    if (shape.size() != 1) throw ConfigError("net.kind=mlp needs flat inputs, data is " + shape_string(shape));
    spec = mlp_spec(shape[0], cfg.count("net.hidden"), data.classes, slope);
  } else if (kind == "conv") {
    const auto shape = data.sample_shape();
    if (shape.size() != 3 || shape[1] != shape[2]) {
      throw ConfigError("net.kind=conv needs square images, data is " + shape_string(shape));
    }
    spec = conv_spec(shape[0], shape[1], cfg.counts("net.widths"), data.classes, slope);
  } else {
    throw ConfigError("net.kind must be auto, mlp or conv, got '" + kind + "'");
  }
  spec.dropout = cfg.number("net.dropout");
  spec.validate();
  return spec;
}

Dataset load_training_data(const RunConfig& cfg) {
  const std::filesystem::path dir = cfg.get("data.path");
  if (dir.empty()) throw ConfigError("data.path is not set");
  if (std::filesystem::exists(dir / "points.csv")) return to_dataset(load_points(dir));
  if (std::filesystem::exists(dir / "labels.csv") && std::filesystem::exists(dir / "images.jtns")) {
    Dataset d = load_cue_conflict(dir).congruent_dataset();
    d.id = "cueconflict";
    return d;
  }
  throw ConfigError("data.path " + dir.string() + " holds no mixture2d or cue-conflict dataset");
}

}  // namespace jemlab
