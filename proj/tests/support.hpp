#pragma once

// Helpers shared by the unit tests and the acceptance binary.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <string>
#include <vector>

#include "jemlab/energy.hpp"
#include "jemlab/network.hpp"
#include "jemlab/rng.hpp"

namespace jemlab::testing {

inline Tensor random_tensor(Shape shape, Rng& rng, double scale = 1.0) {
  Tensor t(std::move(shape));
  for (auto& v : t.data()) v = scale * rng.normal();
  return t;
}

/// Small random architecture (<= 1e3 parameters). Variant `kind % 4` picks
/// the family so that a run over consecutive kinds covers every layer kind.
inline NetworkSpec random_spec(std::size_t kind, Rng& rng) {
  NetworkSpec s;
  s.classes = 2 + rng.index(3);
  const double slope = 0.05 + 0.4 * rng.uniform();
  switch (kind % 4) {
    case 0: {  // MLP
      s.input_shape = {2 + rng.index(3)};
      const std::size_t h = 4 + rng.index(8);
      s.layers = {LayerSpec::make_affine(h), LayerSpec::make_leaky_relu(slope), LayerSpec::make_affine(h),
                  LayerSpec::make_leaky_relu(slope), LayerSpec::make_affine(s.classes)};
      break;
    }
    case 1: {  // conv stack with global pooling
      const std::size_t c = 1 + rng.index(2);
      s.input_shape = {c, 5 + 2 * rng.index(2), 5 + 2 * rng.index(2)};  // odd: stride-2 stage divides
      s.layers = {LayerSpec::make_conv(3, 3, 1, 1), LayerSpec::make_leaky_relu(slope), LayerSpec::make_conv(4, 3, 2, 1),
                  LayerSpec::make_leaky_relu(slope), LayerSpec::make_mean_pool(), LayerSpec::make_affine(s.classes)};
      break;
    }
    case 2: {  // conv then dense head
      s.input_shape = {1, 4 + rng.index(3), 4 + rng.index(3)};
      s.layers = {LayerSpec::make_conv(2, 2, 1, 0), LayerSpec::make_leaky_relu(slope), LayerSpec::make_flatten(),
                  LayerSpec::make_affine(6), LayerSpec::make_leaky_relu(slope), LayerSpec::make_affine(s.classes)};
      break;
    }
    default: {  // strided, padded conv straight into pooling
      s.input_shape = {2, 7, 7};
      s.layers = {LayerSpec::make_conv(3, 3, 2, 2), LayerSpec::make_leaky_relu(slope), LayerSpec::make_mean_pool(),
                  LayerSpec::make_affine(s.classes)};
      break;
    }
  }
  return s;
}

/// Scalar test objective: sum(r * f(x)) + sum_b logsumexp(f(x_b)).
struct Objective {
  Tensor r;  // [B x K]

  double value(const EnergyModel& m, const Tensor& x) const {
    const Tensor f = forward(m, x);
    double v = 0.0;
    for (std::size_t i = 0; i < f.size(); ++i) v += r[i] * f[i];
    for (std::size_t b = 0; b < f.dim(0); ++b) v += ad::logsumexp(f.row_span(b));
    return v;
  }

  /// Gradients w.r.t. every parameter and (last entry) the input.
  std::vector<Tensor> gradients(const EnergyModel& m, const Tensor& x) const {
    ad::Tape tape;
    auto params = bind_params(tape, m, true);
    auto xv = tape.variable(x);
    auto f = forward_on(m, params, xv);
    auto loss = ad::add(ad::sum(ad::mul(f, tape.constant(r))), ad::sum(ad::logsumexp(f)));
    tape.backward(loss);
    std::vector<Tensor> g;
    for (auto p : params.vars) g.push_back(tape.grad(p));
    g.push_back(tape.grad(xv));
    return g;
  }
};

/// Sign pattern of every pre-activation feeding a leaky ReLU.
inline std::vector<bool> kink_signature(const EnergyModel& m, const Tensor& x) {
  std::vector<std::size_t> ids;
  for (std::size_t i = 0; i + 1 < m.spec().layers.size(); ++i) {
    if (m.spec().layers[i + 1].kind == LayerKind::leaky_relu) ids.push_back(i);
  }
  std::vector<bool> sig;
  if (ids.empty()) return sig;
  for (const auto& t : features(m, x, ids)) {
    for (double v : t.data()) sig.push_back(v >= 0.0);
  }
  return sig;
}

struct FdResult {
  std::size_t checked = 0;
  std::size_t skipped_kinks = 0;  // entries whose +-h probe crosses a ReLU kink
  std::size_t failures = 0;
  double worst = 0.0;
};

/// Central differences (step h) against backward for every parameter and input entry.
inline FdResult finite_difference_check(const EnergyModel& model, const Tensor& x, const Objective& obj,
                                        double h = 1e-5, double tol = 1e-5, double floor = 1e-8) {
  FdResult res;
  const auto grads = obj.gradients(model, x);
  const auto base_sig = kink_signature(model, x);
  auto probe = [&](const EnergyModel& mp, const Tensor& xp, const EnergyModel& mm, const Tensor& xm,
                   double analytic) {
    if (kink_signature(mp, xp) != base_sig || kink_signature(mm, xm) != base_sig) {
      ++res.skipped_kinks;
      return;
    }
    const double numeric = (obj.value(mp, xp) - obj.value(mm, xm)) / (2.0 * h);
    const double rel = std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
    res.worst = std::max(res.worst, rel);
    ++res.checked;
    if (!(rel <= tol)) ++res.failures;
  };
  for (std::size_t p = 0; p < model.params().size(); ++p) {
    for (std::size_t i = 0; i < model.params()[p].size(); ++i) {
      EnergyModel plus = model, minus = model;
      plus.params()[p][i] += h;
      minus.params()[p][i] -= h;
      probe(plus, x, minus, x, grads[p][i]);
    }
  }
  for (std::size_t i = 0; i < x.size(); ++i) {
    Tensor xp = x, xm = x;
    xp[i] += h;
    xm[i] -= h;
    probe(model, xp, model, xm, grads.back()[i]);
  }
  return res;
}

inline std::string file_bytes(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline bool files_equal(const std::filesystem::path& a, const std::filesystem::path& b) {
  return std::filesystem::exists(a) && std::filesystem::exists(b) && file_bytes(a) == file_bytes(b);
}

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("jemlab_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

}  // namespace jemlab::testing
