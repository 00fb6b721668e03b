#include "jemlab/network.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>

#include "binio.hpp"
#include "jemlab/error.hpp"

namespace jemlab {

std::string to_string(LayerKind kind) {
  switch (kind) {
    case LayerKind::affine: return "affine";
    case LayerKind::conv2d: return "conv2d";
    case LayerKind::leaky_relu: return "leaky_relu";
    case LayerKind::flatten: return "flatten";
    case LayerKind::mean_pool: return "mean_pool";
  }
  return "unknown";
}

std::vector<Shape> NetworkSpec::validate() const {
  if (classes == 0) throw ConfigError("network must have at least one class");
  if (input_shape.empty()) throw ConfigError("network input shape is empty");
  for (auto d : input_shape) {
    if (d == 0) throw ConfigError("network input shape has a zero dimension");
  }
  if (!(dropout >= 0.0 && dropout <= 0.04)) throw ConfigError("dropout rate must lie in [0, 0.04]");
  if (layers.empty()) throw ConfigError("network has no layers");
  std::vector<Shape> shapes;
  Shape cur = input_shape;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    const std::string where = "layer " + std::to_string(i) + " (" + to_string(l.kind) + "): ";
    switch (l.kind) {
      case LayerKind::affine:
        if (cur.size() != 1) throw ConfigError(where + "expects a flat input, got " + shape_string(cur));
        if (l.out == 0) throw ConfigError(where + "zero output features");
        cur = Shape{l.out};
        break;
      case LayerKind::conv2d: {
        if (cur.size() != 3) throw ConfigError(where + "expects [C x H x W], got " + shape_string(cur));
        if (l.out == 0 || l.kernel == 0 || l.stride == 0) throw ConfigError(where + "zero-sized configuration");
        const auto h = ad::conv_output_size(cur[1], l.kernel, l.stride, l.padding);
        const auto w = ad::conv_output_size(cur[2], l.kernel, l.stride, l.padding);
        cur = Shape{l.out, h, w};
        break;
      }
      case LayerKind::leaky_relu:
        if (!(l.slope > 0.0 && l.slope < 1.0)) throw ConfigError(where + "slope must lie in (0, 1)");
        break;
      case LayerKind::flatten:
        cur = Shape{shape_numel(cur)};
        break;
      case LayerKind::mean_pool:
        if (cur.size() != 3) throw ConfigError(where + "expects [C x H x W], got " + shape_string(cur));
        cur = Shape{cur[0]};
        break;
      default:
        throw ConfigError(where + "unknown layer kind");
    }
    shapes.push_back(cur);
  }
  if (cur != Shape{classes}) {
    throw ConfigError("last layer outputs " + shape_string(cur) + " but the network has " + std::to_string(classes) +
                      " classes");
  }
  return shapes;
}

NetworkSpec mlp_spec(std::size_t input_dim, std::size_t hidden, std::size_t classes, double slope) {
  NetworkSpec s;
  s.input_shape = {input_dim};
  s.classes = classes;
  s.layers = {LayerSpec::make_affine(hidden), LayerSpec::make_leaky_relu(slope), LayerSpec::make_affine(hidden),
              LayerSpec::make_leaky_relu(slope), LayerSpec::make_affine(classes)};
  return s;
}

NetworkSpec conv_spec(std::size_t channels, std::size_t size, std::vector<std::size_t> widths, std::size_t classes,
                      double slope) {
  if (widths.size() != 3) throw ConfigError("conv network needs exactly three stage widths");
  NetworkSpec s;
  s.input_shape = {channels, size, size};
  s.classes = classes;
  // Stride-2 stages use a 3x3 kernel on odd sizes and 4x4 on even ones, so
  // the output size always divides exactly.
  const std::size_t mid = size % 2 ? (size - 1) / 2 + 1 : size / 2;
  const auto k_for = [](std::size_t n) -> std::size_t { return n % 2 ? 3 : 4; };
  s.layers = {LayerSpec::make_conv(widths[0], 3, 1, 1),         LayerSpec::make_leaky_relu(slope),
              LayerSpec::make_conv(widths[1], k_for(size), 2, 1), LayerSpec::make_leaky_relu(slope),
              LayerSpec::make_conv(widths[2], k_for(mid), 2, 1),  LayerSpec::make_leaky_relu(slope),
              LayerSpec::make_mean_pool(),                        LayerSpec::make_affine(classes)};
  return s;
}

namespace {

// Parameter shapes for each layer, given the per-layer input shapes.
std::vector<std::vector<Shape>> param_shapes(const NetworkSpec& spec, const std::vector<Shape>& outs) {
  std::vector<std::vector<Shape>> result;
  Shape in = spec.input_shape;
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    std::vector<Shape> ps;
    if (l.kind == LayerKind::affine) {
      ps = {Shape{l.out, in[0]}, Shape{l.out}};
    } else if (l.kind == LayerKind::conv2d) {
      ps = {Shape{l.out, in[0], l.kernel, l.kernel}};
    }
    result.push_back(std::move(ps));
    in = outs[i];
  }
  return result;
}

}  // namespace

EnergyModel::EnergyModel(NetworkSpec spec, std::vector<Tensor> params)
    : spec_(std::move(spec)), params_(std::move(params)) {
  const auto outs = spec_.validate();
  const auto shapes = param_shapes(spec_, outs);
  std::size_t expected = 0;
  for (const auto& s : shapes) expected += s.size();
  if (params_.size() != expected) {
    throw ConfigError("model expects " + std::to_string(expected) + " parameter tensors, got " +
                      std::to_string(params_.size()));
  }
  std::size_t p = 0;
  for (const auto& layer : shapes) {
    for (const auto& s : layer) {
      if (params_[p].shape() != s) {
        throw ConfigError("parameter " + std::to_string(p) + " has shape " + shape_string(params_[p].shape()) +
                          ", expected " + shape_string(s));
      }
      ++p;
    }
  }
  index_params();
}

void EnergyModel::index_params() {
  names_.clear();
  layer_param_.assign(spec_.layers.size(), std::nullopt);
  std::size_t p = 0;
  for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
    const auto kind = spec_.layers[i].kind;
    const std::string prefix = "layer" + std::to_string(i) + ".";
    if (kind == LayerKind::affine) {
      layer_param_[i] = p;
      names_.push_back(prefix + "weight");
      names_.push_back(prefix + "bias");
      p += 2;
    } else if (kind == LayerKind::conv2d) {
      layer_param_[i] = p;
      names_.push_back(prefix + "kernel");
      p += 1;
    }
  }
}

std::size_t EnergyModel::param_count() const {
  std::size_t n = 0;
  for (const auto& t : params_) n += t.size();
  return n;
}

EnergyModel build(const NetworkSpec& spec, std::uint64_t seed) {
  const auto outs = spec.validate();
  const auto shapes = param_shapes(spec, outs);
  Rng rng(seed);
  std::vector<Tensor> params;
  for (const auto& layer : shapes) {
    if (layer.empty()) continue;
    // fan-in is the product of all but the leading weight dimension
    const Shape& w = layer[0];
    const double fan_in = static_cast<double>(shape_numel(w) / w[0]);
    const double bound = 1.0 / std::sqrt(fan_in);
    for (const auto& s : layer) {
      Tensor t(s);
      for (auto& v : t.data()) v = rng.uniform(-bound, bound);
      params.push_back(std::move(t));
    }
  }
  return EnergyModel(spec, std::move(params));
}

BoundParams bind_params(ad::Tape& tape, const EnergyModel& model, bool track) {
  BoundParams b;
  b.vars.reserve(model.params().size());
  for (const auto& p : model.params()) b.vars.push_back(track ? tape.variable(p) : tape.constant(p));
  return b;
}

std::size_t batch_size_for(const EnergyModel& model, const Tensor& batch) {
  const Shape& in = model.input_shape();
  const Shape& s = batch.shape();
  if (s.size() != in.size() + 1 || !std::equal(in.begin(), in.end(), s.begin() + 1)) {
    throw DimensionError("batch shape " + shape_string(s) + " does not match model input " + shape_string(in));
  }
  return s[0];
}

ad::Var forward_on(const EnergyModel& model, const BoundParams& params, ad::Var batch, const ForwardOptions& opts,
                   std::vector<ad::Var>* taps) {
  batch_size_for(model, batch.value());
  const auto& spec = model.spec();
  const bool dropout = opts.train && spec.dropout > 0.0;
  if (dropout && opts.rng == nullptr) throw UsageError("train-mode dropout requires an rng");
  ad::Var h = batch;
  ad::Tape& tape = *batch.tape();
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    switch (l.kind) {
      case LayerKind::affine: {
        const auto p = *model.first_param_of(i);
        h = ad::affine(params.vars[p], params.vars[p + 1], h);
        break;
      }
      case LayerKind::conv2d: {
        const auto p = *model.first_param_of(i);
        h = ad::conv2d(params.vars[p], h, l.stride, l.padding);
        break;
      }
      case LayerKind::leaky_relu:
        h = ad::leaky_relu(h, l.slope);
        if (dropout) {
          Tensor mask(h.shape());
          const double keep = 1.0 - spec.dropout;
          for (auto& m : mask.data()) m = opts.rng->bernoulli(keep) ? 1.0 / keep : 0.0;
          h = ad::mul(h, tape.constant(std::move(mask)));
        }
        break;
      case LayerKind::flatten:
        h = ad::flatten(h);
        break;
      case LayerKind::mean_pool:
        h = ad::mean_pool(h);
        break;
    }
    if (taps) taps->push_back(h);
  }
  return h;
}

Tensor forward(const EnergyModel& model, const Tensor& batch, const ForwardOptions& opts) {
  ad::Tape tape;
  auto params = bind_params(tape, model, false);
  return forward_on(model, params, tape.constant(batch), opts).value();
}

std::vector<Tensor> features(const EnergyModel& model, const Tensor& batch, const std::vector<std::size_t>& layer_ids) {
  for (auto id : layer_ids) {
    if (id >= model.spec().layers.size()) {
      throw UsageError("invalid layer id " + std::to_string(id) + " (network has " +
                       std::to_string(model.spec().layers.size()) + " layers)");
    }
  }
  if (layer_ids.empty()) return {};
  ad::Tape tape;
  auto params = bind_params(tape, model, false);
  std::vector<ad::Var> taps;
  forward_on(model, params, tape.constant(batch), {}, &taps);
  std::vector<Tensor> out;
  out.reserve(layer_ids.size());
  for (auto id : layer_ids) out.push_back(taps[id].value());
  return out;
}

// ---- checkpoint codec -----------------------------------------------------

namespace {

constexpr char kMagic[4] = {'J', 'E', 'M', 'C'};

void write_tensor(binio::Writer& w, const Tensor& t) {
  w.u32(static_cast<std::uint32_t>(t.rank()));
  for (auto d : t.shape()) w.u64(d);
  w.f64s(t.data());
}

Tensor read_tensor(binio::Reader& r) {
  const auto rank = r.u32();
  if (rank > 8) throw FormatError(r.what() + ": implausible tensor rank " + std::to_string(rank));
  Shape s(rank);
  for (auto& d : s) {
    d = r.u64();
    if (d == 0) throw FormatError(r.what() + ": zero tensor dimension");
  }
  const auto n = shape_numel(s);
  r.need(n * 8);
  std::vector<double> data(n);
  r.f64s(data);
  return Tensor(std::move(s), std::move(data));
}

}  // namespace

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckpt) {
  binio::Writer w;
  const auto& spec = ckpt.model.spec();
  w.bytes(kMagic, 4);
  w.u32(Checkpoint::kVersion);
  w.f64(ckpt.alpha);
  w.u64(ckpt.step);
  w.u32(static_cast<std::uint32_t>(spec.input_shape.size()));
  for (auto d : spec.input_shape) w.u64(d);
  w.u64(spec.classes);
  w.f64(spec.dropout);
  w.u32(static_cast<std::uint32_t>(spec.layers.size()));
  for (std::size_t i = 0; i < spec.layers.size(); ++i) {
    const auto& l = spec.layers[i];
    w.u32(static_cast<std::uint32_t>(l.kind));
    w.u64(l.out);
    w.u64(l.kernel);
    w.u64(l.stride);
    w.u64(l.padding);
    w.f64(l.slope);
    const auto first = ckpt.model.first_param_of(i);
    const std::uint32_t n = l.kind == LayerKind::affine ? 2 : l.kind == LayerKind::conv2d ? 1 : 0;
    w.u32(n);
    for (std::uint32_t j = 0; j < n; ++j) write_tensor(w, ckpt.model.params()[*first + j]);
  }
  const bool moments = ckpt.first_moments.has_value() && ckpt.second_moments.has_value();
  w.u8(moments ? 1 : 0);
  if (moments) {
    w.u64(ckpt.adam_steps);
    for (std::size_t p = 0; p < ckpt.model.params().size(); ++p) {
      w.f64s((*ckpt.first_moments)[p].data());
      w.f64s((*ckpt.second_moments)[p].data());
    }
  }
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(std::span<const std::uint8_t> bytes) {
  binio::Reader r(bytes, "checkpoint");
  char magic[4];
  r.bytes(magic, 4);
  if (!std::equal(magic, magic + 4, kMagic)) throw FormatError("checkpoint: bad magic (expected JEMC)");
  const auto version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw FormatError("checkpoint: unsupported version " + std::to_string(version));
  }
  Checkpoint ck;
  ck.alpha = r.f64();
  ck.step = r.u64();
  NetworkSpec spec;
  const auto rank = r.u32();
  if (rank == 0 || rank > 8) throw FormatError("checkpoint: implausible input rank");
  spec.input_shape.resize(rank);
  for (auto& d : spec.input_shape) d = r.u64();
  spec.classes = r.u64();
  spec.dropout = r.f64();
  const auto nlayers = r.u32();
  std::vector<Tensor> params;
  for (std::uint32_t i = 0; i < nlayers; ++i) {
    LayerSpec l;
    const auto kind = r.u32();
    if (kind < 1 || kind > 5) throw FormatError("checkpoint: unknown layer kind tag " + std::to_string(kind));
    l.kind = static_cast<LayerKind>(kind);
    l.out = r.u64();
    l.kernel = r.u64();
    l.stride = r.u64();
    l.padding = r.u64();
    l.slope = r.f64();
    const auto n = r.u32();
    for (std::uint32_t j = 0; j < n; ++j) params.push_back(read_tensor(r));
    spec.layers.push_back(l);
  }
  try {
    ck.model = EnergyModel(std::move(spec), std::move(params));
  } catch (const ConfigError& e) {
    throw FormatError(std::string("checkpoint: inconsistent network: ") + e.what());
  }
  const auto has_moments = r.u8();
  if (has_moments > 1) throw FormatError("checkpoint: bad optimizer flag");
  if (has_moments) {
    ck.adam_steps = r.u64();
    std::vector<Tensor> m, v;
    for (const auto& p : ck.model.params()) {
      Tensor a(p.shape()), b(p.shape());
      r.f64s(a.data());
      r.f64s(b.data());
      m.push_back(std::move(a));
      v.push_back(std::move(b));
    }
    ck.first_moments = std::move(m);
    ck.second_moments = std::move(v);
  }
  if (r.remaining() != 0) throw FormatError("checkpoint: trailing bytes after payload");
  return ck;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  binio::write_file(path.string(), encode_checkpoint(ckpt));
}

Checkpoint load_checkpoint(const std::filesystem::path& path) { return decode_checkpoint(binio::read_file(path.string())); }

void save(const EnergyModel& model, const std::filesystem::path& path) {
  Checkpoint ck;
  ck.model = model;
  save_checkpoint(ck, path);
}

EnergyModel load(const std::filesystem::path& path) { return load_checkpoint(path).model; }

namespace binio {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path + " for reading");
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failure on " + path);
  return bytes;
}

void write_file(const std::string& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failure on " + path);
}

}  // namespace binio

}  // namespace jemlab
