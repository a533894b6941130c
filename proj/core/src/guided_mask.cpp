#include "drconv/guided_mask.hpp"

#include <algorithm>
#include <cmath>

#include "drconv/errors.hpp"

namespace drconv {

ConvSpec guide_spec(const ConvSpec& main, std::size_t m) {
  ConvSpec s = main;
  s.out_channels = m;
  return s;
}

Tensor4 softmax_channels(const Tensor4& feature) {
  const auto& s = feature.shape();
  Tensor4 out = Tensor4::zeros(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t u = 0; u < s.h; ++u)
      for (std::size_t v = 0; v < s.w; ++v) {
        auto f = feature.pixel(n, u, v);
        auto p = out.pixel(n, u, v);
        const double top = *std::max_element(f.begin(), f.end());
        double total = 0.0;
        for (std::size_t j = 0; j < s.c; ++j) {
          p[j] = std::exp(f[j] - top);
          total += p[j];
        }
        for (std::size_t j = 0; j < s.c; ++j) p[j] /= total;
      }
  return out;
}

GuideForward guide_forward(const Tensor4& x, const StandardFilter& guide, const ConvSpec& spec) {
  if (guide.weights.out_channels != spec.out_channels) {
    throw ShapeError("guide_forward: guide weights have " +
                     std::to_string(guide.weights.out_channels) + " outputs, spec expects m=" +
                     std::to_string(spec.out_channels));
  }
  GuideForward out;
  out.feature = conv2d_forward(x, guide, spec);
  out.mask = argmax_channels(out.feature);
  out.soft = softmax_channels(out.feature);
  if (spec.out_channels < 2) {
    out.warning = "region count m=" + std::to_string(spec.out_channels) +
                  " < 2: guided mask is constant";
  }
  return out;
}

PerPixelFilters select_filters(const FilterBank& bank, const GuidedMask& mask) {
  if (mask.n() != bank.n) {
    throw ShapeError("select_filters: mask batch does not match bank batch");
  }
  PerPixelFilters out = PerPixelFilters::zeros(mask.n(), mask.h(), mask.w(), bank.out_channels,
                                               bank.in_channels, bank.k);
  for (std::size_t n = 0; n < mask.n(); ++n)
    for (std::size_t u = 0; u < mask.h(); ++u)
      for (std::size_t v = 0; v < mask.w(); ++v) {
        const std::int32_t t = mask(n, u, v);
        if (t < 0 || static_cast<std::size_t>(t) >= bank.m) {
          throw IndexError("select_filters: mask index " + std::to_string(t) +
                           " out of range for m=" + std::to_string(bank.m));
        }
        auto src = bank.filter(n, static_cast<std::size_t>(t));
        std::copy(src.begin(), src.end(), out.filter(n, u, v).begin());
      }
  return out;
}

Tensor4 softmax_backward(const Tensor4& soft, const Tensor4& d_soft) {
  if (soft.shape() != d_soft.shape()) {
    throw ShapeError("softmax_backward: shape mismatch " + soft.shape().str() + " vs " +
                     d_soft.shape().str());
  }
  const auto& s = soft.shape();
  Tensor4 df = Tensor4::zeros(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t u = 0; u < s.h; ++u)
      for (std::size_t v = 0; v < s.w; ++v) {
        auto p = soft.pixel(n, u, v);
        auto g = d_soft.pixel(n, u, v);
        auto out = df.pixel(n, u, v);
        double inner = 0.0;
        for (std::size_t j = 0; j < s.c; ++j) inner += p[j] * g[j];
        for (std::size_t j = 0; j < s.c; ++j) out[j] = p[j] * (g[j] - inner);
      }
  return df;
}

namespace {

void require_fresh(const MaskContext& ctx, const char* op) {
  if (!ctx.bank) throw ContextError(std::string(op) + ": context has no filter bank");
  const auto& fs = ctx.feature.shape();
  if (ctx.soft.shape() != fs || ctx.mask.n() != fs.n || ctx.mask.h() != fs.h ||
      ctx.mask.w() != fs.w || ctx.bank->m != fs.c || ctx.bank->n != fs.n) {
    throw ContextError(std::string(op) + ": context tensors are inconsistent");
  }
}

}  // namespace

Tensor4 mask_backward(const MaskContext& ctx, const PerPixelFilters& dw_hat) {
  require_fresh(ctx, "mask_backward");
  const FilterBank& bank = *ctx.bank;
  const auto& fs = ctx.feature.shape();
  if (dw_hat.n != fs.n || dw_hat.h != fs.h || dw_hat.w != fs.w ||
      dw_hat.filter_size() != bank.filter_size()) {
    throw ContextError("mask_backward: filter gradients do not match the context");
  }
  Tensor4 d_soft = Tensor4::zeros(fs);
  for (std::size_t n = 0; n < fs.n; ++n)
    for (std::size_t u = 0; u < fs.h; ++u)
      for (std::size_t v = 0; v < fs.w; ++v) {
        auto g = dw_hat.filter(n, u, v);
        for (std::size_t j = 0; j < bank.m; ++j) {
          auto w = bank.filter(n, j);
          double acc = 0.0;
          for (std::size_t e = 0; e < g.size(); ++e) acc += g[e] * w[e];
          d_soft(n, u, v, j) = acc;
        }
      }
  return softmax_backward(ctx.soft, d_soft);
}

Tensor4 mask_backward_from_selection(const MaskContext& ctx, const Tensor4& d_soft) {
  require_fresh(ctx, "mask_backward_from_selection");
  if (d_soft.shape() != ctx.soft.shape()) {
    throw ContextError("mask_backward_from_selection: selection gradient shape mismatch");
  }
  return softmax_backward(ctx.soft, d_soft);
}

GuideGrads guide_param_backward(const MaskContext& ctx, const Tensor4& dfeature) {
  if (dfeature.shape() != ctx.feature.shape()) {
    throw ContextError("guide_param_backward: dF shape " + dfeature.shape().str() +
                       " does not match guided feature " + ctx.feature.shape().str());
  }
  ConvGrads g = conv2d_backward(ConvContext{ctx.input, ctx.guide, ctx.spec}, dfeature);
  return GuideGrads{std::move(g.dweights), std::move(g.dbias), std::move(g.dx)};
}

}  // namespace drconv
