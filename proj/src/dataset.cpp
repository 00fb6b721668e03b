#include "jemlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "jemlab/error.hpp"
#include "jemlab/rng.hpp"

namespace jemlab {

void Dataset::validate() const {
  if (labels.empty()) throw ConfigError("dataset is empty");
  if (inputs.rank() < 2 || inputs.dim(0) != labels.size()) {
    throw DimensionError("dataset inputs " + shape_string(inputs.shape()) + " do not match " +
                         std::to_string(labels.size()) + " labels");
  }
  if (classes == 0) throw ConfigError("dataset has no classes");
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= classes) {
      throw ConfigError("label " + std::to_string(labels[i]) + " at row " + std::to_string(i) + " out of range");
    }
  }
  const auto n = inputs.row_size();
  if (box_lo.size() != n || box_hi.size() != n) throw ConfigError("dataset init box does not match input size");
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.classes = classes;
  out.images = images;
  out.box_lo = box_lo;
  out.box_hi = box_hi;
  out.id = id;
  Shape s = inputs.shape();
  s[0] = indices.size();
  if (indices.empty()) {
    out.inputs = Tensor();
    return out;
  }
  std::vector<double> data;
  data.reserve(shape_numel(s));
  out.labels.reserve(indices.size());
  for (auto i : indices) {
    auto row = inputs.row_span(i);
    data.insert(data.end(), row.begin(), row.end());
    out.labels.push_back(labels.at(i));
  }
  out.inputs = Tensor(std::move(s), std::move(data));
  return out;
}

Dataset points_dataset(const Tensor& points, std::vector<std::size_t> labels, std::size_t classes, double margin) {
  if (points.rank() != 2) throw DimensionError("points must be [N x D]");
  Dataset d;
  d.inputs = points;
  d.labels = std::move(labels);
  d.classes = classes;
  const auto dim = points.dim(1);
  d.box_lo.assign(dim, std::numeric_limits<double>::infinity());
  d.box_hi.assign(dim, -std::numeric_limits<double>::infinity());
  for (std::size_t i = 0; i < points.dim(0); ++i) {
    for (std::size_t j = 0; j < dim; ++j) {
      d.box_lo[j] = std::min(d.box_lo[j], points.at(i, j));
      d.box_hi[j] = std::max(d.box_hi[j], points.at(i, j));
    }
  }
  for (std::size_t j = 0; j < dim; ++j) {
    d.box_lo[j] -= margin;
    d.box_hi[j] += margin;
  }
  d.validate();
  return d;
}

Dataset image_dataset(const Tensor& images, std::vector<std::size_t> labels, std::size_t classes) {
  if (images.rank() != 4) throw DimensionError("images must be [N x C x H x W]");
  Dataset d;
  d.inputs = images;
  d.labels = std::move(labels);
  d.classes = classes;
  d.images = true;
  d.box_lo.assign(images.row_size(), -1.0);
  d.box_hi.assign(images.row_size(), 1.0);
  d.validate();
  return d;
}

std::pair<Dataset, Dataset> split_holdout(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction >= 0.0 && fraction < 1.0)) throw ConfigError("holdout fraction must lie in [0, 1)");
  std::vector<std::size_t> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng.engine());
  const auto n_hold = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(data.size())));
  if (n_hold >= data.size()) throw ConfigError("holdout would leave no training data");
  std::vector<std::size_t> hold(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_hold));
  std::vector<std::size_t> train(idx.begin() + static_cast<std::ptrdiff_t>(n_hold), idx.end());
  std::sort(hold.begin(), hold.end());
  std::sort(train.begin(), train.end());
  return {data.subset(train), data.subset(hold)};
}

}  // namespace jemlab
