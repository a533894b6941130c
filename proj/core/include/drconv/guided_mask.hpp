#pragma once

#include <memory>
#include <optional>
#include <string>

#include "drconv/conv.hpp"
#include "drconv/tensor.hpp"

namespace drconv {

// Spec of the guide convolution that accompanies a main convolution: same
// kernel, stride and padding, m output channels.
ConvSpec guide_spec(const ConvSpec& main, std::size_t m);

// Per-pixel softmax over channels, max-subtracted so any finite input is safe.
Tensor4 softmax_channels(const Tensor4& feature);

struct GuideForward {
  Tensor4 feature;  // F, one channel per region
  GuidedMask mask;  // argmax of F, ties to the smallest index
  Tensor4 soft;     // softmax of F, cached for the backward pass
  std::optional<std::string> warning;
};

// F = conv(x, guide); the number of regions is guide.weights.out_channels.
GuideForward guide_forward(const Tensor4& x, const StandardFilter& guide, const ConvSpec& spec);

// W_hat(n,u,v) = bank(n, mask(n,u,v)). Pure indexing.
PerPixelFilters select_filters(const FilterBank& bank, const GuidedMask& mask);

// Cached forward state of the guide path.
struct MaskContext {
  Tensor4 input;
  StandardFilter guide;
  ConvSpec spec;  // guide spec, out_channels == m
  Tensor4 feature;
  Tensor4 soft;
  GuidedMask mask;
  std::shared_ptr<const FilterBank> bank;
};

// Softmax Jacobian-vector product at every pixel:
// dF = soft * (d_soft - <soft, d_soft>).
Tensor4 softmax_backward(const Tensor4& soft, const Tensor4& d_soft);

// Gradient reaching F from the per-pixel selected-filter gradients. The hard
// selection is replaced by a soft one: d_soft(n,u,v,j) = <dW_hat(n,u,v), W_j>,
// then the softmax backward gives dF.
Tensor4 mask_backward(const MaskContext& ctx, const PerPixelFilters& dw_hat);

// Same as mask_backward when d_soft has already been formed, e.g. by
// region_selection_gradient.
Tensor4 mask_backward_from_selection(const MaskContext& ctx, const Tensor4& d_soft);

struct GuideGrads {
  Kernel dweights;
  std::vector<double> dbias;
  Tensor4 dx;
};

// Backward of the guide convolution for a given dF.
GuideGrads guide_param_backward(const MaskContext& ctx, const Tensor4& dfeature);

}  // namespace drconv
