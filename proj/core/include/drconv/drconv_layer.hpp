#pragma once

#include <cstdint>
#include <memory>
#include <random>

#include "drconv/conv.hpp"
#include "drconv/filter_generator.hpp"
#include "drconv/guided_mask.hpp"
#include "drconv/tensor.hpp"

namespace drconv {

// Dynamic region-aware convolution: a k x k guide convolution assigns every
// output pixel to one of m regions, a generator produces m filters per sample,
// and each pixel is convolved with its region's filter.
struct DRConvLayer {
  ConvSpec spec;
  std::size_t m = 1;
  StandardFilter guide;  // m outputs, no bias
  GeneratorParams generator;

  // Throws ConfigError if the parts disagree with spec or m.
  void validate() const;

  // Fan-in uniform initialisation. hidden == 0 selects m * in_channels.
  // guide_gain multiplies the guide bound.
  static DRConvLayer create(const ConvSpec& spec, std::size_t m, std::size_t hidden,
                            std::mt19937_64& rng, double guide_gain = 1.0);
};

// Forward state for one drconv_backward call. Single use: a second backward
// with the same context throws ContextError.
class LayerContext {
 public:
  LayerContext() = default;

  bool consumed() const noexcept { return consumed_; }
  const MaskContext& mask() const noexcept { return mask_; }
  const GeneratorContext& generator() const noexcept { return generator_; }
  const RegionConvContext& region() const noexcept { return region_; }

 private:
  friend struct LayerContextAccess;
  const DRConvLayer* owner_ = nullptr;
  bool consumed_ = false;
  MaskContext mask_;
  GeneratorContext generator_;
  RegionConvContext region_;
};

struct DRConvForward {
  Tensor4 y;
  LayerContext ctx;
};

DRConvForward drconv_forward(const DRConvLayer& layer, const Tensor4& x);

struct DRConvGrads {
  Tensor4 dx;  // dx_main + dx_gen + dx_guide
  Kernel dguide;
  GeneratorGrads dgen;  // dgen.dx is dx_gen
  Tensor4 dx_main;
  Tensor4 dx_guide;
  FilterBank dbank;
  Tensor4 dfeature;
};

// How the per-pixel selection gradient <dW_hat, W_j> is formed.
enum class SelectionPath {
  fused,         // directly from dy, without materialising dW_hat
  materialized,  // via region_conv_filter_gradients + mask_backward
};

DRConvGrads drconv_backward(const DRConvLayer& layer, LayerContext& ctx, const Tensor4& dy,
                            SelectionPath path = SelectionPath::fused);

struct LayerCost {
  std::uint64_t madds = 0;
  std::uint64_t params = 0;

  bool operator==(const LayerCost&) const = default;
};

// Multiply-adds per sample and parameter counts for an in_h x in_w input.
//   standard: U*V*O*C*k^2 madds, O*C*k^2 (+O bias) params
//   local:    U*V*O*C*k^2 madds, U*V*O*C*k^2 params
//   drconv:   U*V*O*C*k^2 + U*V*m*C*k^2 + k^2*C*hidden + k^2*hidden*O*C madds,
//             m*C*k^2 + C*hidden + hidden + hidden*O*C params
// where U x V is the output map. Pooling and activations are not counted.
LayerCost count_layer_cost(const DRConvLayer& layer, std::size_t in_h, std::size_t in_w);
LayerCost standard_conv_cost(const ConvSpec& spec, bool bias, std::size_t in_h, std::size_t in_w);
LayerCost local_conv_cost(const ConvSpec& spec, std::size_t in_h, std::size_t in_w);

}  // namespace drconv
