#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "drconv/conv.hpp"
#include "drconv/drconv_layer.hpp"
#include "drconv/filter_generator.hpp"
#include "drconv/tensor.hpp"

// Independent reference machinery. Everything here is written as direct
// nested loops over the defining formulas and shares no code path with the
// optimised kernels it is used to check.
namespace drconv::verify {

// |a - n| / max(|a|, |n|, eps)
double relative_error(double analytic, double numeric, double eps = 1e-12) noexcept;

// Central differences (f(t + h e_i) - f(t - h e_i)) / 2h for every i.
// Throws NumericError if f returns a non-finite value.
std::vector<double> finite_diff(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> theta, double h);

struct ErrorStats {
  double max_rel = 0.0;
  double max_abs = 0.0;
  std::size_t count = 0;
};

ErrorStats compare(std::span<const double> analytic, std::span<const double> numeric,
                   double eps = 1e-12);

// Input value read by tap (i, j) of output pixel (u, v), or 0 in padding.
double tap_value(const Tensor4& x, std::size_t n, std::size_t u, std::size_t v, std::size_t i,
                 std::size_t j, std::size_t c, const ConvSpec& spec);

Tensor4 naive_conv2d(const Tensor4& x, const StandardFilter& f, const ConvSpec& spec);
Tensor4 naive_local_conv(const Tensor4& x, const LocalFilterField& f, const ConvSpec& spec);
Tensor4 naive_region_conv(const Tensor4& x, const FilterBank& bank, const GuidedMask& mask,
                          const ConvSpec& spec);
Tensor4 naive_adaptive_pool(const Tensor4& x, std::size_t out_h, std::size_t out_w);
// Treats both 1x1 convolutions as per-position matrix products, the grouped
// one as a block-diagonal (m*O*C) x hidden matrix.
FilterBank naive_generate_filters(const Tensor4& x, const GeneratorParams& params);

// Output of region filter j applied at every pixel.
Tensor4 single_filter_output(const Tensor4& x, const FilterBank& bank, std::size_t j,
                             const ConvSpec& spec);

// sum_j softmax(F)_j * single_filter_output(j), for a given guided feature F.
Tensor4 relaxed_from_feature(const Tensor4& x, const FilterBank& bank, const Tensor4& feature,
                             const ConvSpec& spec);
// Softmax-weighted mixture over all region filters; smooth in every input.
Tensor4 relaxed_forward(const DRConvLayer& layer, const Tensor4& x);
// Hard forward assembled from the naive pieces.
Tensor4 naive_drconv_forward(const DRConvLayer& layer, const Tensor4& x);

// Forward passes that count every scalar multiplication, padding taps
// included (the input is materialised with its padding first).
struct CountedOutput {
  Tensor4 y;
  std::uint64_t multiplies = 0;
};
CountedOutput instrumented_conv2d(const Tensor4& x, const StandardFilter& f, const ConvSpec& spec);
CountedOutput instrumented_drconv_forward(const DRConvLayer& layer, const Tensor4& x);

// Smallest gap between the largest and second-largest channel at any pixel.
double min_top2_gap(const Tensor4& feature);

struct GradGroup {
  std::string name;
  ErrorStats stats;
  bool pass = false;
};

struct GradCheckReport {
  std::vector<GradGroup> groups;
  double h = 1e-5;
  double tolerance = 1e-4;
  double min_logit_gap = 0.0;
  bool tie_adjacent = false;  // some pixel's top-two guide logits are closer than 10h

  bool passed() const noexcept;
  const GradGroup& group(const std::string& name) const;
  std::string to_text() const;
};

using DRConvBackwardFn =
    std::function<DRConvGrads(const DRConvLayer&, LayerContext&, const Tensor4&)>;

struct GradCheckOptions {
  double h = 1e-5;
  double tolerance = 1e-4;
  std::uint64_t projection_seed = 0;
  bool zero_projection = false;
  // Backward under test; defaults to drconv_backward.
  DRConvBackwardFn backward;
};

// Dual-oracle check of every drconv gradient with loss <R, y> for a seeded
// random R:
//   frozen mask  -> dX_main+gen, dBank, dGenParams
//   relaxed      -> dF, dGuideWeights, dX_guide
GradCheckReport check_drconv_gradients(const DRConvLayer& layer, const Tensor4& x,
                                       const GradCheckOptions& options = {});

}  // namespace drconv::verify
