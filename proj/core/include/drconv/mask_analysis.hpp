#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "drconv/tensor.hpp"

namespace drconv {

// Row-to-column assignment maximising the summed weight of a rows x cols
// matrix (row-major). Result[r] is the column given to row r, or -1 when
// rows > cols and row r is left out.
std::vector<int> max_weight_assignment(const std::vector<double>& weights, std::size_t rows,
                                       std::size_t cols);

// Fraction of pixels of sample `mask_sample` whose mask label, after the best
// one-to-one relabelling, equals the reference label of `ref_sample`. The
// reference map is sampled at the nearest pixel when its size differs.
double matched_agreement(const IndexMap& mask, std::size_t mask_sample, const IndexMap& reference,
                         std::size_t ref_sample);

struct AgreementTest {
  double score = 0.0;      // mean matched agreement over samples
  double null_mean = 0.0;  // mean score with references paired to other samples
  double null_p95 = 0.0;
  std::size_t permutations = 0;

  bool exceeds_null() const noexcept { return score > null_p95; }
};

// Compares the true pairing of masks and references against derangements of
// the samples. Requires at least two samples.
AgreementTest mask_agreement_test(const IndexMap& mask, const IndexMap& reference,
                                  std::size_t permutations, std::uint64_t seed);

// m evenly spaced hues at full saturation and value: hue = 360 * t / m.
std::array<std::uint8_t, 3> palette_color(std::size_t index, std::size_t m);

// Binary PPM (P6, maxval 255) of one sample, coloured by palette_color.
std::string encode_ppm(const IndexMap& mask, std::size_t sample, std::size_t m);

// Plain PGM (P2) holding the raw region indices, maxval max(m - 1, 1).
std::string encode_index_grid(const IndexMap& mask, std::size_t sample, std::size_t m);

}  // namespace drconv
