#pragma once

#include <span>
#include <string>
#include <vector>

#include "jemlab/tensor.hpp"

namespace jemlab {

/// Labeled inputs fed to the trainer. `box_lo`/`box_hi` bound the fresh
/// initializations of the replay buffer, one entry per input coordinate.
struct Dataset {
  Tensor inputs;  // [N x input_shape]
  std::vector<std::size_t> labels;
  std::size_t classes = 0;
  bool images = false;
  std::vector<double> box_lo;
  std::vector<double> box_hi;
  std::string id;

  std::size_t size() const { return labels.size(); }
  Shape sample_shape() const { return Shape(inputs.shape().begin() + 1, inputs.shape().end()); }

  Dataset subset(std::span<const std::size_t> indices) const;
  void validate() const;
};

/// 2-D (or any flat) points; the init box is the data bounding box widened by `margin`.
Dataset points_dataset(const Tensor& points, std::vector<std::size_t> labels, std::size_t classes,
                       double margin = 1.0);

/// Images with pixel values in [-1, 1].
Dataset image_dataset(const Tensor& images, std::vector<std::size_t> labels, std::size_t classes);

/// Deterministic shuffled split; the holdout gets round(fraction * N) samples.
std::pair<Dataset, Dataset> split_holdout(const Dataset& data, double fraction, std::uint64_t seed);

}  // namespace jemlab
