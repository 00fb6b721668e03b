#include "jemlab/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "jemlab/error.hpp"

namespace jemlab::ad {

const Tensor& Var::value() const {
  if (!tape_) throw UsageError("value() on an unbound Var");
  return tape_->value(id_);
}

Var Tape::variable(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), true, nullptr});
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Tensor value) {
  nodes_.push_back(Node{std::move(value), Tensor(), false, nullptr});
  return Var(this, nodes_.size() - 1);
}

void Tape::check_owned(Var v) const {
  if (v.tape() != this || v.id() >= nodes_.size()) throw UsageError("Var does not belong to this tape");
}

Var Tape::record(Tensor value, std::initializer_list<Var> inputs, BackwardFn backward) {
  bool req = false;
  for (const auto& in : inputs) {
    check_owned(in);
    req = req || nodes_[in.id()].requires_grad;
  }
  nodes_.push_back(Node{std::move(value), Tensor(), req, req ? std::move(backward) : nullptr});
  return Var(this, nodes_.size() - 1);
}

Tensor& Tape::accumulator(std::size_t id) {
  auto& node = nodes_[id];
  if (node.grad.empty()) node.grad = Tensor(node.value.shape(), 0.0);
  return node.grad;
}

void Tape::backward(Var seed) {
  check_owned(seed);
  if (nodes_[seed.id()].value.size() != 1) {
    throw UsageError("backward seed must be a scalar, got shape " + shape_string(seed.shape()));
  }
  for (auto& node : nodes_) node.grad = Tensor();
  nodes_[seed.id()].grad = Tensor(nodes_[seed.id()].value.shape(), 1.0);
  for (std::size_t i = seed.id() + 1; i-- > 0;) {
    auto& node = nodes_[i];
    if (node.backward && !node.grad.empty()) node.backward(*this, i);
  }
  last_seed_ = seed.id();
}

Tensor Tape::grad(Var v) const {
  check_owned(v);
  const auto& node = nodes_[v.id()];
  if (node.grad.empty()) return Tensor(node.value.shape(), 0.0);
  return node.grad;
}

std::size_t conv_output_size(std::size_t in, std::size_t kernel, std::size_t stride, std::size_t padding) {
  if (stride == 0) throw ConfigError("conv2d stride must be positive");
  const std::size_t padded = in + 2 * padding;
  if (kernel > padded) throw ConfigError("conv2d kernel larger than padded input");
  if ((padded - kernel) % stride != 0) {
    throw ConfigError("conv2d output size (" + std::to_string(in) + "+2*" + std::to_string(padding) + "-" +
                      std::to_string(kernel) + ")/" + std::to_string(stride) + " is not integral");
  }
  return (padded - kernel) / stride + 1;
}

double logsumexp(std::span<const double> values) {
  if (values.empty()) throw DimensionError("logsumexp of an empty vector");
  const double m = *std::max_element(values.begin(), values.end());
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (double v : values) s += std::exp(v - m);
  return m + std::log(s);
}

namespace {

Tape& tape_of(Var a) {
  if (!a.valid()) throw UsageError("operation on an unbound Var");
  return *a.tape();
}

void require_same_tape(Var a, Var b) {
  if (a.tape() != b.tape()) throw UsageError("operands recorded on different tapes");
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_string(a.shape()) + " vs " +
                         shape_string(b.shape()));
  }
}

}  // namespace

Var affine(Var weights, Var bias, Var input) {
  require_same_tape(weights, input);
  require_same_tape(bias, input);
  Tape& tape = tape_of(input);
  const Tensor& w = weights.value();
  const Tensor& b = bias.value();
  const Tensor& x = input.value();
  if (w.rank() != 2 || b.rank() != 1 || b.dim(0) != w.dim(0)) {
    throw DimensionError("affine: weights " + shape_string(w.shape()) + " and bias " + shape_string(b.shape()) +
                         " do not conform");
  }
  const std::size_t k_out = w.dim(0);
  const std::size_t n_in = w.dim(1);
  const bool batched = x.rank() == 2;
  if (!(x.rank() == 1 || batched) || x.shape().back() != n_in) {
    throw DimensionError("affine: input " + shape_string(x.shape()) + " incompatible with weights " +
                         shape_string(w.shape()));
  }
  const std::size_t batch = batched ? x.dim(0) : 1;
  Tensor out(batched ? Shape{batch, k_out} : Shape{k_out});
  const double* wd = w.data().data();
  const double* xd = x.data().data();
  double* od = out.data().data();
  for (std::size_t r = 0; r < batch; ++r) {
    const double* xr = xd + r * n_in;
    for (std::size_t k = 0; k < k_out; ++k) {
      const double* wk = wd + k * n_in;
      double acc = 0.0;
      for (std::size_t n = 0; n < n_in; ++n) acc += wk[n] * xr[n];
      od[r * k_out + k] = acc + b[k];
    }
  }
  const auto wid = weights.id(), bid = bias.id(), xid = input.id();
  return tape.record(std::move(out), {weights, bias, input},
                     [wid, bid, xid, batch, k_out, n_in](Tape& t, std::size_t self) {
                       const double* g = t.upstream(self).data().data();
                       const double* wd = t.value(wid).data().data();
                       const double* xd = t.value(xid).data().data();
                       if (t.needs(xid)) {
                         double* dx = t.accumulator(xid).data().data();
                         for (std::size_t r = 0; r < batch; ++r) {
                           double* dxr = dx + r * n_in;
                           for (std::size_t k = 0; k < k_out; ++k) {
                             const double gk = g[r * k_out + k];
                             if (gk == 0.0) continue;
                             const double* wk = wd + k * n_in;
                             for (std::size_t n = 0; n < n_in; ++n) dxr[n] += gk * wk[n];
                           }
                         }
                       }
                       if (t.needs(wid)) {
                         double* dw = t.accumulator(wid).data().data();
                         for (std::size_t r = 0; r < batch; ++r) {
                           const double* xr = xd + r * n_in;
                           for (std::size_t k = 0; k < k_out; ++k) {
                             const double gk = g[r * k_out + k];
                             if (gk == 0.0) continue;
                             double* dwk = dw + k * n_in;
                             for (std::size_t n = 0; n < n_in; ++n) dwk[n] += gk * xr[n];
                           }
                         }
                       }
                       if (t.needs(bid)) {
                         double* db = t.accumulator(bid).data().data();
                         for (std::size_t r = 0; r < batch; ++r)
                           for (std::size_t k = 0; k < k_out; ++k) db[k] += g[r * k_out + k];
                       }
                     });
}

namespace {

// Range of output columns `o` for which o*stride + offset lies in [0, extent).
std::pair<std::ptrdiff_t, std::ptrdiff_t> valid_range(std::ptrdiff_t offset, std::ptrdiff_t extent,
                                                      std::ptrdiff_t stride, std::ptrdiff_t out_extent) {
  std::ptrdiff_t lo = 0;
  if (offset < 0) lo = (-offset + stride - 1) / stride;
  std::ptrdiff_t hi = out_extent;  // exclusive
  if (extent - 1 - offset < 0) {
    hi = 0;
  } else {
    hi = std::min(out_extent, (extent - 1 - offset) / stride + 1);
  }
  return {lo, std::max(lo, hi)};
}

struct ConvGeom {
  std::size_t batch, cin, h, w, cout, k, oh, ow, stride, pad;
};

}  // namespace

Var conv2d(Var kernel, Var input, std::size_t stride, std::size_t padding) {
  require_same_tape(kernel, input);
  Tape& tape = tape_of(input);
  const Tensor& kt = kernel.value();
  const Tensor& x = input.value();
  if (kt.rank() != 4 || kt.dim(2) != kt.dim(3)) {
    throw DimensionError("conv2d: kernel must be [Cout x Cin x k x k], got " + shape_string(kt.shape()));
  }
  const bool batched = x.rank() == 4;
  if (!(x.rank() == 3 || batched)) throw DimensionError("conv2d: input must be [C x H x W] or [B x C x H x W]");
  ConvGeom g{};
  g.batch = batched ? x.dim(0) : 1;
  g.cin = x.dim(batched ? 1 : 0);
  g.h = x.dim(batched ? 2 : 1);
  g.w = x.dim(batched ? 3 : 2);
  g.cout = kt.dim(0);
  g.k = kt.dim(2);
  g.stride = stride;
  g.pad = padding;
  if (kt.dim(1) != g.cin) {
    throw DimensionError("conv2d: kernel expects " + std::to_string(kt.dim(1)) + " input channels, got " +
                         std::to_string(g.cin));
  }
  g.oh = conv_output_size(g.h, g.k, stride, padding);
  g.ow = conv_output_size(g.w, g.k, stride, padding);

  Tensor out(batched ? Shape{g.batch, g.cout, g.oh, g.ow} : Shape{g.cout, g.oh, g.ow});
  const double* kd = kt.data().data();
  const double* xd = x.data().data();
  double* od = out.data().data();
  const auto s = static_cast<std::ptrdiff_t>(stride);
  const auto p = static_cast<std::ptrdiff_t>(padding);
  for (std::size_t b = 0; b < g.batch; ++b) {
    for (std::size_t o = 0; o < g.cout; ++o) {
      double* plane = od + (b * g.cout + o) * g.oh * g.ow;
      for (std::size_t c = 0; c < g.cin; ++c) {
        const double* in = xd + (b * g.cin + c) * g.h * g.w;
        for (std::size_t ki = 0; ki < g.k; ++ki) {
          auto [ylo, yhi] = valid_range(static_cast<std::ptrdiff_t>(ki) - p, static_cast<std::ptrdiff_t>(g.h), s,
                                        static_cast<std::ptrdiff_t>(g.oh));
          for (std::size_t kj = 0; kj < g.k; ++kj) {
            const double wv = kd[((o * g.cin + c) * g.k + ki) * g.k + kj];
            auto [xlo, xhi] = valid_range(static_cast<std::ptrdiff_t>(kj) - p, static_cast<std::ptrdiff_t>(g.w), s,
                                          static_cast<std::ptrdiff_t>(g.ow));
            for (std::ptrdiff_t oy = ylo; oy < yhi; ++oy) {
              const double* irow = in + (oy * s + static_cast<std::ptrdiff_t>(ki) - p) * g.w;
              double* orow = plane + oy * g.ow;
              for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) {
                orow[ox] += wv * irow[ox * s + static_cast<std::ptrdiff_t>(kj) - p];
              }
            }
          }
        }
      }
    }
  }
  const auto kid = kernel.id(), xid = input.id();
  return tape.record(std::move(out), {kernel, input}, [kid, xid, g](Tape& t, std::size_t self) {
    const double* gd = t.upstream(self).data().data();
    const double* kd = t.value(kid).data().data();
    const double* xd = t.value(xid).data().data();
    const bool need_x = t.needs(xid);
    const bool need_k = t.needs(kid);
    double* dx = need_x ? t.accumulator(xid).data().data() : nullptr;
    double* dk = need_k ? t.accumulator(kid).data().data() : nullptr;
    const auto s = static_cast<std::ptrdiff_t>(g.stride);
    const auto p = static_cast<std::ptrdiff_t>(g.pad);
    for (std::size_t b = 0; b < g.batch; ++b) {
      for (std::size_t o = 0; o < g.cout; ++o) {
        const double* gplane = gd + (b * g.cout + o) * g.oh * g.ow;
        for (std::size_t c = 0; c < g.cin; ++c) {
          const std::size_t in_off = (b * g.cin + c) * g.h * g.w;
          for (std::size_t ki = 0; ki < g.k; ++ki) {
            auto [ylo, yhi] = valid_range(static_cast<std::ptrdiff_t>(ki) - p, static_cast<std::ptrdiff_t>(g.h), s,
                                          static_cast<std::ptrdiff_t>(g.oh));
            for (std::size_t kj = 0; kj < g.k; ++kj) {
              const std::size_t widx = ((o * g.cin + c) * g.k + ki) * g.k + kj;
              const double wv = kd[widx];
              auto [xlo, xhi] = valid_range(static_cast<std::ptrdiff_t>(kj) - p, static_cast<std::ptrdiff_t>(g.w),
                                            s, static_cast<std::ptrdiff_t>(g.ow));
              double wacc = 0.0;
              for (std::ptrdiff_t oy = ylo; oy < yhi; ++oy) {
                const std::ptrdiff_t row = (oy * s + static_cast<std::ptrdiff_t>(ki) - p) * g.w;
                const double* grow = gplane + oy * g.ow;
                const std::ptrdiff_t shift = static_cast<std::ptrdiff_t>(kj) - p;
                if (need_x) {
                  double* dxrow = dx + in_off + row;
                  for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) dxrow[ox * s + shift] += wv * grow[ox];
                }
                if (need_k) {
                  const double* xrow = xd + in_off + row;
                  for (std::ptrdiff_t ox = xlo; ox < xhi; ++ox) wacc += grow[ox] * xrow[ox * s + shift];
                }
              }
              if (need_k) dk[widx] += wacc;
            }
          }
        }
      }
    }
  });
}

Var leaky_relu(Var input, double slope) {
  Tape& tape = tape_of(input);
  const Tensor& x = input.value();
  Tensor out(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] > 0.0 ? x[i] : slope * x[i];
  const auto xid = input.id();
  return tape.record(std::move(out), {input}, [xid, slope](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    const Tensor& x = t.value(xid);
    Tensor& dx = t.accumulator(xid);
    for (std::size_t i = 0; i < x.size(); ++i) dx[i] += x[i] > 0.0 ? g[i] : slope * g[i];
  });
}

Var logsumexp(Var values) {
  Tape& tape = tape_of(values);
  const Tensor& v = values.value();
  if (v.rank() == 0 || v.size() == 0) throw DimensionError("logsumexp needs at least one axis");
  const std::size_t k = v.shape().back();
  const std::size_t rows = v.size() / k;
  Shape out_shape(v.shape().begin(), v.shape().end() - 1);
  Tensor out(out_shape);
  for (std::size_t r = 0; r < rows; ++r) out[r] = logsumexp(v.data().subspan(r * k, k));
  const auto vid = values.id();
  return tape.record(std::move(out), {values}, [vid, k, rows](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    const Tensor& v = t.value(vid);
    const Tensor& out = t.value(self);
    Tensor& dv = t.accumulator(vid);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t j = 0; j < k; ++j) dv[r * k + j] += g[r] * std::exp(v[r * k + j] - out[r]);
    }
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "add");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += b.value()[i];
  const auto aid = a.id(), bid = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [aid, bid](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    for (auto id : {aid, bid}) {
      if (!t.needs(id)) continue;
      Tensor& d = t.accumulator(id);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
  });
}

Var sub(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "sub");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= b.value()[i];
  const auto aid = a.id(), bid = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [aid, bid](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    if (t.needs(aid)) {
      Tensor& d = t.accumulator(aid);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
    }
    if (t.needs(bid)) {
      Tensor& d = t.accumulator(bid);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] -= g[i];
    }
  });
}

Var mul(Var a, Var b) {
  require_same_tape(a, b);
  require_same_shape(a.value(), b.value(), "mul");
  Tensor out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= b.value()[i];
  const auto aid = a.id(), bid = b.id();
  return tape_of(a).record(std::move(out), {a, b}, [aid, bid](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    if (t.needs(aid)) {
      const Tensor& bv = t.value(bid);
      Tensor& d = t.accumulator(aid);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * bv[i];
    }
    if (t.needs(bid)) {
      const Tensor& av = t.value(aid);
      Tensor& d = t.accumulator(bid);
      for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i] * av[i];
    }
  });
}

Var scale(Var a, double factor) {
  Tensor out = a.value();
  for (auto& v : out.data()) v *= factor;
  const auto aid = a.id();
  return tape_of(a).record(std::move(out), {a}, [aid, factor](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor& d = t.accumulator(aid);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += factor * g[i];
  });
}

Var sum(Var a) {
  double s = 0.0;
  for (double v : a.value().data()) s += v;
  const auto aid = a.id();
  return tape_of(a).record(Tensor::scalar(s), {a}, [aid](Tape& t, std::size_t self) {
    const double g = t.upstream(self)[0];
    for (auto& d : t.accumulator(aid).data()) d += g;
  });
}

Var mean(Var a) { return scale(sum(a), 1.0 / static_cast<double>(a.value().size())); }

Var flatten(Var a) {
  const Tensor& x = a.value();
  if (x.rank() < 2) throw DimensionError("flatten needs a batch axis");
  Tensor out = x.reshaped(Shape{x.dim(0), x.size() / x.dim(0)});
  const auto aid = a.id();
  return tape_of(a).record(std::move(out), {a}, [aid](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor& d = t.accumulator(aid);
    for (std::size_t i = 0; i < g.size(); ++i) d[i] += g[i];
  });
}

Var mean_pool(Var a) {
  const Tensor& x = a.value();
  if (x.rank() != 3 && x.rank() != 4) throw DimensionError("mean_pool expects [C x H x W] or [B x C x H x W]");
  const bool batched = x.rank() == 4;
  const std::size_t planes = batched ? x.dim(0) * x.dim(1) : x.dim(0);
  const std::size_t area = x.size() / planes;
  Tensor out(batched ? Shape{x.dim(0), x.dim(1)} : Shape{x.dim(0)});
  for (std::size_t p = 0; p < planes; ++p) {
    double s = 0.0;
    for (std::size_t i = 0; i < area; ++i) s += x[p * area + i];
    out[p] = s / static_cast<double>(area);
  }
  const auto aid = a.id();
  return tape_of(a).record(std::move(out), {a}, [aid, planes, area](Tape& t, std::size_t self) {
    const Tensor& g = t.upstream(self);
    Tensor& d = t.accumulator(aid);
    const double inv = 1.0 / static_cast<double>(area);
    for (std::size_t p = 0; p < planes; ++p)
      for (std::size_t i = 0; i < area; ++i) d[p * area + i] += g[p] * inv;
  });
}

}  // namespace jemlab::ad
