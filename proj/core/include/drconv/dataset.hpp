#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "drconv/tensor.hpp"

namespace drconv {

struct Dataset {
  Tensor4 images;  // (n,h,w,c) in [0,1]
  std::vector<int> labels;
  std::size_t classes = 0;
  // Ground-truth region partition, present for synthetic data.
  std::optional<IndexMap> regions;

  std::size_t size() const noexcept { return labels.size(); }
  Dataset subset(std::span<const std::size_t> indices) const;
  Dataset slice(std::size_t begin, std::size_t end) const;
  // Throws ConsistencyError if labels, images and regions disagree, and
  // NumericError on a non-finite pixel.
  void validate() const;
};

// IDX files: images magic 00 00 08 03 with big-endian (count, rows, cols),
// labels magic 00 00 08 01 with big-endian count; pixels are scaled by 1/255.
// classes == 0 infers max(label) + 1 (at least 2).
Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t classes = 0);
// Single-channel datasets only; pixels are written as round(255 * v).
void save_idx(const Dataset& data, const std::string& images_path, const std::string& labels_path);

// Deterministic synthetic task. Each image is split into 2-4 Voronoi regions;
// every region has its own brightness level, and each level comes with its own
// grating period. The label is the grating orientation shared by all regions
// (pi * label / classes plus a small jitter); phases are random per region so
// raw pixels carry no linear class signal. Labels are balanced to within one.
Dataset synth_region_dataset(std::size_t n, std::size_t h, std::size_t w, std::size_t classes,
                             std::uint64_t seed);

}  // namespace drconv
