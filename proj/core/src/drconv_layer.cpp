#include "drconv/drconv_layer.hpp"

#include <cmath>

#include "drconv/errors.hpp"

namespace drconv {

struct LayerContextAccess {
  static const DRConvLayer*& owner(LayerContext& c) { return c.owner_; }
  static bool& consumed(LayerContext& c) { return c.consumed_; }
  static MaskContext& mask(LayerContext& c) { return c.mask_; }
  static GeneratorContext& generator(LayerContext& c) { return c.generator_; }
  static RegionConvContext& region(LayerContext& c) { return c.region_; }
};

namespace {

void fill_uniform(std::vector<double>& v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : v) x = dist(rng);
}

}  // namespace

void DRConvLayer::validate() const {
  spec.validate();
  if (m == 0) throw ConfigError("m", "region count must be >= 1");
  const Kernel& g = guide.weights;
  if (g.out_channels != m || g.in_channels != spec.in_channels || g.k != spec.k ||
      g.values.size() != m * spec.in_channels * spec.k * spec.k) {
    throw ConfigError("guide", "guide convolution must be k x k with m outputs");
  }
  if (guide.has_bias()) throw ConfigError("guide", "guide convolution has no bias");
  generator.validate();
  if (generator.m != m || generator.k != spec.k || generator.in_channels != spec.in_channels ||
      generator.out_channels != spec.out_channels) {
    throw ConfigError("generator", "generator shape does not match the layer spec");
  }
}

DRConvLayer DRConvLayer::create(const ConvSpec& spec, std::size_t m, std::size_t hidden,
                                std::mt19937_64& rng, double guide_gain) {
  spec.validate();
  if (m == 0) throw ConfigError("m", "region count must be >= 1");
  const std::size_t C = spec.in_channels;
  const std::size_t O = spec.out_channels;
  const std::size_t k = spec.k;
  if (hidden == 0) hidden = m * C;

  DRConvLayer layer;
  layer.spec = spec;
  layer.m = m;
  layer.guide.weights = Kernel::zeros(m, C, k);
  if (!(guide_gain > 0.0)) throw ConfigError("guide_gain", "must be > 0");
  fill_uniform(layer.guide.weights.values,
               guide_gain * std::sqrt(3.0 / static_cast<double>(C * k * k)), rng);

  layer.generator = GeneratorParams::zeros(C, O, k, m, hidden);
  layer.generator.validate();
  fill_uniform(layer.generator.w1, std::sqrt(3.0 / static_cast<double>(C)), rng);
  // Generated taps are sums of gw products w2 * h with E[h^2] close to 1/4, so
  // this bound gives them the variance 1/(C*k*k) of a standard convolution.
  const double gw = static_cast<double>(layer.generator.group_width());
  fill_uniform(layer.generator.w2, std::sqrt(12.0 / (gw * static_cast<double>(C * k * k))), rng);
  return layer;
}

DRConvForward drconv_forward(const DRConvLayer& layer, const Tensor4& x) {
  layer.validate();
  if (x.shape().c != layer.spec.in_channels) {
    throw ShapeError("drconv_forward: input has " + std::to_string(x.shape().c) +
                     " channels, layer expects " + std::to_string(layer.spec.in_channels));
  }
  GeneratorResult gen = generate_filters_with_context(x, layer.generator);
  const ConvSpec gspec = guide_spec(layer.spec, layer.m);
  GuideForward guide = guide_forward(x, layer.guide, gspec);

  DRConvForward out;
  out.y = region_conv_forward(x, gen.bank, guide.mask, layer.spec);

  LayerContext& ctx = out.ctx;
  LayerContextAccess::owner(ctx) = &layer;
  auto bank = std::make_shared<const FilterBank>(gen.bank);
  LayerContextAccess::mask(ctx) = MaskContext{x,
                                              layer.guide,
                                              gspec,
                                              std::move(guide.feature),
                                              std::move(guide.soft),
                                              guide.mask,
                                              bank};
  LayerContextAccess::generator(ctx) = std::move(gen.ctx);
  LayerContextAccess::region(ctx) =
      RegionConvContext{x, std::move(gen.bank), std::move(guide.mask), layer.spec};
  return out;
}

DRConvGrads drconv_backward(const DRConvLayer& layer, LayerContext& ctx, const Tensor4& dy,
                            SelectionPath path) {
  if (LayerContextAccess::owner(ctx) == nullptr) {
    throw ContextError("drconv_backward: context was not produced by drconv_forward");
  }
  if (LayerContextAccess::owner(ctx) != &layer) {
    throw ContextError("drconv_backward: context belongs to a different layer");
  }
  if (ctx.consumed()) {
    throw ContextError("drconv_backward: context already consumed by an earlier backward");
  }
  LayerContextAccess::consumed(ctx) = true;

  const RegionConvContext& region = ctx.region();
  const MaskContext& mask = ctx.mask();

  // Main path: hard assignment, exact.
  RegionConvGrads rg = region_conv_backward(region, dy);
  // Generator path, fed by the hard bank gradient.
  GeneratorGrads gg = generator_backward(ctx.generator(), rg.dbank);
  // Guide path: softmax substitute for the argmax.
  Tensor4 dfeature;
  if (path == SelectionPath::fused) {
    dfeature = mask_backward_from_selection(mask, region_selection_gradient(region, dy));
  } else {
    dfeature = mask_backward(mask, region_conv_filter_gradients(region, dy));
  }
  GuideGrads guide = guide_param_backward(mask, dfeature);

  DRConvGrads out;
  out.dx = add(add(rg.dx, gg.dx), guide.dx);
  out.dguide = std::move(guide.dweights);
  out.dx_main = std::move(rg.dx);
  out.dx_guide = std::move(guide.dx);
  out.dgen = std::move(gg);
  out.dbank = std::move(rg.dbank);
  out.dfeature = std::move(dfeature);
  return out;
}

LayerCost standard_conv_cost(const ConvSpec& spec, bool bias, std::size_t in_h, std::size_t in_w) {
  const std::uint64_t U = spec.out_extent(in_h);
  const std::uint64_t V = spec.out_extent(in_w);
  const std::uint64_t k2 = spec.k * spec.k;
  const std::uint64_t C = spec.in_channels;
  const std::uint64_t O = spec.out_channels;
  return {U * V * O * C * k2, O * C * k2 + (bias ? O : 0)};
}

LayerCost local_conv_cost(const ConvSpec& spec, std::size_t in_h, std::size_t in_w) {
  const std::uint64_t U = spec.out_extent(in_h);
  const std::uint64_t V = spec.out_extent(in_w);
  const std::uint64_t k2 = spec.k * spec.k;
  const std::uint64_t per_pixel = spec.out_channels * spec.in_channels * k2;
  return {U * V * per_pixel, U * V * per_pixel};
}

LayerCost count_layer_cost(const DRConvLayer& layer, std::size_t in_h, std::size_t in_w) {
  const ConvSpec& s = layer.spec;
  const std::uint64_t U = s.out_extent(in_h);
  const std::uint64_t V = s.out_extent(in_w);
  const std::uint64_t k2 = s.k * s.k;
  const std::uint64_t C = s.in_channels;
  const std::uint64_t O = s.out_channels;
  const std::uint64_t m = layer.m;
  const std::uint64_t hidden = layer.generator.hidden;
  LayerCost cost;
  cost.madds = U * V * O * C * k2 + U * V * m * C * k2 + k2 * C * hidden + k2 * hidden * O * C;
  cost.params = m * C * k2 + C * hidden + hidden + hidden * O * C;
  return cost;
}

}  // namespace drconv
