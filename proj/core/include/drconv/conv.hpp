#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "drconv/tensor.hpp"

namespace drconv {

enum class Padding { same_zero, valid, circular };

const char* to_string(Padding p) noexcept;
Padding padding_from_string(const std::string& s);

// Square, odd-sized kernel. Output pixel (u, v) is centred on input pixel
// (u*stride, v*stride) for same_zero/circular and offset by k/2 for valid.
struct ConvSpec {
  std::size_t k = 1;
  std::size_t stride = 1;
  Padding padding = Padding::same_zero;
  std::size_t in_channels = 1;
  std::size_t out_channels = 1;

  bool operator==(const ConvSpec&) const = default;

  // Throws ConfigError on even k, zero stride or zero channels.
  void validate() const;
  std::size_t pad() const noexcept { return padding == Padding::valid ? 0 : k / 2; }
  std::size_t out_extent(std::size_t in) const;
  Shape4 output_shape(const Shape4& in) const;
};

// Filter weights in [out][in][k][k] order.
struct Kernel {
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t k = 0;
  std::vector<double> values;

  static Kernel zeros(std::size_t out_channels, std::size_t in_channels, std::size_t k);

  std::size_t index(std::size_t o, std::size_t c, std::size_t i, std::size_t j) const noexcept {
    return ((o * in_channels + c) * k + i) * k + j;
  }
  double& operator()(std::size_t o, std::size_t c, std::size_t i, std::size_t j) noexcept {
    return values[index(o, c, i, j)];
  }
  double operator()(std::size_t o, std::size_t c, std::size_t i, std::size_t j) const noexcept {
    return values[index(o, c, i, j)];
  }
  std::size_t size() const noexcept { return values.size(); }

  bool operator==(const Kernel&) const = default;
};

struct StandardFilter {
  Kernel weights;
  std::vector<double> bias;  // empty or out_channels entries

  bool has_bias() const noexcept { return !bias.empty(); }
  bool operator==(const StandardFilter&) const = default;
};

// One unshared filter per output pixel: [h][w][out][in][k][k].
struct LocalFilterField {
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t k = 0;
  std::vector<double> values;

  static LocalFilterField zeros(std::size_t h, std::size_t w, std::size_t out_channels,
                                std::size_t in_channels, std::size_t k);
  // Every pixel gets a copy of `filter`.
  static LocalFilterField broadcast(std::size_t h, std::size_t w, const Kernel& filter);

  std::size_t filter_size() const noexcept { return out_channels * in_channels * k * k; }
  std::span<double> filter(std::size_t u, std::size_t v) noexcept {
    return {values.data() + (u * w + v) * filter_size(), filter_size()};
  }
  std::span<const double> filter(std::size_t u, std::size_t v) const noexcept {
    return {values.data() + (u * w + v) * filter_size(), filter_size()};
  }
};

// m region filters per sample: [n][m][out][in][k][k].
struct FilterBank {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t k = 0;
  std::vector<double> values;

  static FilterBank zeros(std::size_t n, std::size_t m, std::size_t out_channels,
                          std::size_t in_channels, std::size_t k);

  std::size_t filter_size() const noexcept { return out_channels * in_channels * k * k; }
  std::size_t index(std::size_t s, std::size_t t, std::size_t o, std::size_t c, std::size_t i,
                    std::size_t j) const noexcept {
    return ((((s * m + t) * out_channels + o) * in_channels + c) * k + i) * k + j;
  }
  double& operator()(std::size_t s, std::size_t t, std::size_t o, std::size_t c, std::size_t i,
                     std::size_t j) noexcept {
    return values[index(s, t, o, c, i, j)];
  }
  double operator()(std::size_t s, std::size_t t, std::size_t o, std::size_t c, std::size_t i,
                    std::size_t j) const noexcept {
    return values[index(s, t, o, c, i, j)];
  }
  std::span<double> filter(std::size_t s, std::size_t t) noexcept {
    return {values.data() + (s * m + t) * filter_size(), filter_size()};
  }
  std::span<const double> filter(std::size_t s, std::size_t t) const noexcept {
    return {values.data() + (s * m + t) * filter_size(), filter_size()};
  }

  bool operator==(const FilterBank&) const = default;
};

// Region index per output pixel, values in [0, m).
using GuidedMask = IndexMap;

// Filter used at each output pixel, or a gradient with respect to it:
// [n][h][w][out][in][k][k].
struct PerPixelFilters {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t out_channels = 0;
  std::size_t in_channels = 0;
  std::size_t k = 0;
  std::vector<double> values;

  static PerPixelFilters zeros(std::size_t n, std::size_t h, std::size_t w,
                               std::size_t out_channels, std::size_t in_channels, std::size_t k);

  std::size_t filter_size() const noexcept { return out_channels * in_channels * k * k; }
  std::span<double> filter(std::size_t s, std::size_t u, std::size_t v) noexcept {
    return {values.data() + ((s * h + u) * w + v) * filter_size(), filter_size()};
  }
  std::span<const double> filter(std::size_t s, std::size_t u, std::size_t v) const noexcept {
    return {values.data() + ((s * h + u) * w + v) * filter_size(), filter_size()};
  }
};

// --- standard convolution -------------------------------------------------

Tensor4 conv2d_forward(const Tensor4& x, const StandardFilter& f, const ConvSpec& spec);

// Everything conv2d_backward needs from the forward call.
struct ConvContext {
  Tensor4 input;
  StandardFilter filter;
  ConvSpec spec;
};

struct ConvGrads {
  Tensor4 dx;
  Kernel dweights;
  std::vector<double> dbias;  // empty when the filter has no bias
};

ConvGrads conv2d_backward(const ConvContext& ctx, const Tensor4& dy);

// --- local (unshared) convolution -----------------------------------------

Tensor4 local_conv_forward(const Tensor4& x, const LocalFilterField& f, const ConvSpec& spec);

struct LocalConvContext {
  Tensor4 input;
  LocalFilterField filters;
  ConvSpec spec;
};

struct LocalConvGrads {
  Tensor4 dx;
  LocalFilterField dfilters;
};

LocalConvGrads local_conv_backward(const LocalConvContext& ctx, const Tensor4& dy);

// --- region-shared convolution --------------------------------------------

// y(n,u,v,:) is computed with bank filter mask(n,u,v) of sample n. The mask
// picks the filter by the output pixel (the kernel centre); taps may read
// input pixels that belong to other regions.
Tensor4 region_conv_forward(const Tensor4& x, const FilterBank& bank, const GuidedMask& mask,
                            const ConvSpec& spec);

struct RegionConvContext {
  Tensor4 input;
  FilterBank bank;
  GuidedMask mask;
  ConvSpec spec;
};

struct RegionConvGrads {
  Tensor4 dx;
  FilterBank dbank;  // hard assignment: sum over pixels that selected each filter
};

RegionConvGrads region_conv_backward(const RegionConvContext& ctx, const Tensor4& dy);

// Gradient of the loss with respect to the filter applied at each output
// pixel (the outer product of that pixel's input patch and dy).
PerPixelFilters region_conv_filter_gradients(const RegionConvContext& ctx, const Tensor4& dy);

// s(n,u,v,j) = <dW_hat(n,u,v), bank(n,j)> for every region j, computed
// without materialising the per-pixel filter gradients. Shape (n,ho,wo,m).
Tensor4 region_selection_gradient(const RegionConvContext& ctx, const Tensor4& dy);

}  // namespace drconv
