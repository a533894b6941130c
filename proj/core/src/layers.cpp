#include "drconv/layers.hpp"

#include <algorithm>
#include <cmath>

#include "drconv/errors.hpp"

namespace drconv {

namespace {

void fill_uniform(std::span<double> v, double bound, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (double& x : v) x = dist(rng);
}

template <class State>
State& state_as(ModuleState& s, const std::string& module) {
  auto* p = dynamic_cast<State*>(&s);
  if (p == nullptr) throw ContextError(module + ": forward state of the wrong module type");
  return *p;
}

struct ConvState final : ModuleState {
  Tensor4 input;
};

struct LocalState final : ModuleState {
  Tensor4 input;
};

struct DRConvState final : ModuleState {
  LayerContext ctx;
};

struct ReluState final : ModuleState {
  Tensor4 output;
};

struct PoolState final : ModuleState {
  Shape4 input_shape;
  std::vector<std::size_t> argmax;  // flat input offset per output element
};

struct ShapeState final : ModuleState {
  Shape4 input_shape;
};

}  // namespace

std::vector<std::span<const double>> Module::param_values() const {
  std::vector<std::span<const double>> out;
  for (const ParamSlot& s : const_cast<Module*>(this)->params()) out.emplace_back(s.values);
  return out;
}

// --- StandardConv2d ---------------------------------------------------------

StandardConv2d::StandardConv2d(std::string name, const ConvSpec& spec, bool bias,
                               std::mt19937_64& rng)
    : Module(std::move(name)), spec_(spec) {
  spec_.validate();
  filter_.weights = Kernel::zeros(spec.out_channels, spec.in_channels, spec.k);
  fill_uniform(filter_.weights.values,
               std::sqrt(3.0 / static_cast<double>(spec.in_channels * spec.k * spec.k)), rng);
  if (bias) filter_.bias.assign(spec.out_channels, 0.0);
}

StandardConv2d::StandardConv2d(std::string name, const ConvSpec& spec, StandardFilter filter)
    : Module(std::move(name)), spec_(spec), filter_(std::move(filter)) {
  spec_.validate();
}

std::pair<Tensor4, std::unique_ptr<ModuleState>> StandardConv2d::forward(const Tensor4& x) const {
  auto state = std::make_unique<ConvState>();
  state->input = x;
  return {conv2d_forward(x, filter_, spec_), std::move(state)};
}

Tensor4 StandardConv2d::backward(ModuleState& s, const Tensor4& dy, ParamGrads& grads) const {
  auto& state = state_as<ConvState>(s, name());
  ConvGrads g = conv2d_backward(ConvContext{state.input, filter_, spec_}, dy);
  grads.clear();
  grads.push_back(std::move(g.dweights.values));
  if (filter_.has_bias()) grads.push_back(std::move(g.dbias));
  return std::move(g.dx);
}

std::vector<ParamSlot> StandardConv2d::params() {
  std::vector<ParamSlot> p{{"weight", filter_.weights.values, true}};
  if (filter_.has_bias()) p.push_back({"bias", filter_.bias, false});
  return p;
}

LayerCost StandardConv2d::cost(const Shape4& in) const {
  return standard_conv_cost(spec_, filter_.has_bias(), in.h, in.w);
}

// --- LocalConv2d ------------------------------------------------------------

LocalConv2d::LocalConv2d(std::string name, const ConvSpec& spec, std::size_t in_h,
                         std::size_t in_w, std::mt19937_64& rng)
    : Module(std::move(name)), spec_(spec) {
  spec_.validate();
  filters_ = LocalFilterField::zeros(spec.out_extent(in_h), spec.out_extent(in_w),
                                     spec.out_channels, spec.in_channels, spec.k);
  fill_uniform(filters_.values,
               std::sqrt(3.0 / static_cast<double>(spec.in_channels * spec.k * spec.k)), rng);
}

Shape4 LocalConv2d::output_shape(const Shape4& in) const {
  Shape4 out = spec_.output_shape(in);
  if (out.h != filters_.h || out.w != filters_.w) {
    throw ShapeError(name() + ": local convolution was built for a different input size");
  }
  return out;
}

std::pair<Tensor4, std::unique_ptr<ModuleState>> LocalConv2d::forward(const Tensor4& x) const {
  auto state = std::make_unique<LocalState>();
  state->input = x;
  return {local_conv_forward(x, filters_, spec_), std::move(state)};
}

Tensor4 LocalConv2d::backward(ModuleState& s, const Tensor4& dy, ParamGrads& grads) const {
  auto& state = state_as<LocalState>(s, name());
  LocalConvGrads g = local_conv_backward(LocalConvContext{state.input, filters_, spec_}, dy);
  grads.clear();
  grads.push_back(std::move(g.dfilters.values));
  return std::move(g.dx);
}

std::vector<ParamSlot> LocalConv2d::params() { return {{"weight", filters_.values, true}}; }

LayerCost LocalConv2d::cost(const Shape4& in) const { return local_conv_cost(spec_, in.h, in.w); }

// --- DRConv2d ---------------------------------------------------------------

DRConv2d::DRConv2d(std::string name, DRConvLayer layer)
    : Module(std::move(name)), layer_(std::move(layer)) {
  layer_.validate();
}

std::pair<Tensor4, std::unique_ptr<ModuleState>> DRConv2d::forward(const Tensor4& x) const {
  DRConvForward f = drconv_forward(layer_, x);
  auto state = std::make_unique<DRConvState>();
  state->ctx = std::move(f.ctx);
  return {std::move(f.y), std::move(state)};
}

Tensor4 DRConv2d::backward(ModuleState& s, const Tensor4& dy, ParamGrads& grads) const {
  auto& state = state_as<DRConvState>(s, name());
  DRConvGrads g = drconv_backward(layer_, state.ctx, dy);
  grads.clear();
  grads.push_back(std::move(g.dguide.values));
  grads.push_back(std::move(g.dgen.dw1));
  grads.push_back(std::move(g.dgen.db1));
  grads.push_back(std::move(g.dgen.dw2));
  return std::move(g.dx);
}

std::vector<ParamSlot> DRConv2d::params() {
  return {{"guide", layer_.guide.weights.values, false},
          {"gen.w1", layer_.generator.w1, true},
          {"gen.b1", layer_.generator.b1, false},
          {"gen.w2", layer_.generator.w2, true}};
}

LayerCost DRConv2d::cost(const Shape4& in) const { return count_layer_cost(layer_, in.h, in.w); }

const GuidedMask& DRConv2d::mask_of(const ModuleState& state) {
  const auto* p = dynamic_cast<const DRConvState*>(&state);
  if (p == nullptr) throw ContextError("mask_of: not a drconv forward state");
  return p->ctx.mask().mask;
}

// --- ReLU -------------------------------------------------------------------

std::pair<Tensor4, std::unique_ptr<ModuleState>> ReLU::forward(const Tensor4& x) const {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v = v > 0.0 ? v : 0.0;
  auto state = std::make_unique<ReluState>();
  Tensor4 y(x.shape(), std::move(out));
  state->output = y;
  return {std::move(y), std::move(state)};
}

Tensor4 ReLU::backward(ModuleState& s, const Tensor4& dy, ParamGrads& grads) const {
  auto& state = state_as<ReluState>(s, name());
  if (dy.shape() != state.output.shape()) throw ContextError(name() + ": dy shape mismatch");
  grads.clear();
  std::vector<double> dx(dy.data().begin(), dy.data().end());
  auto y = state.output.data();
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (y[i] <= 0.0) dx[i] = 0.0;
  return Tensor4(dy.shape(), std::move(dx));
}

// --- MaxPool2 ---------------------------------------------------------------

Shape4 MaxPool2::output_shape(const Shape4& in) const {
  if (in.h < 2 || in.w < 2) throw SizeError(name() + ": input smaller than 2x2");
  return {in.n, in.h / 2, in.w / 2, in.c};
}

std::pair<Tensor4, std::unique_ptr<ModuleState>> MaxPool2::forward(const Tensor4& x) const {
  const Shape4 out_shape = output_shape(x.shape());
  Tensor4 y = Tensor4::zeros(out_shape);
  auto state = std::make_unique<PoolState>();
  state->input_shape = x.shape();
  state->argmax.resize(y.size());
  for (std::size_t n = 0; n < out_shape.n; ++n)
    for (std::size_t u = 0; u < out_shape.h; ++u)
      for (std::size_t v = 0; v < out_shape.w; ++v)
        for (std::size_t c = 0; c < out_shape.c; ++c) {
          std::size_t best = x.offset(n, 2 * u, 2 * v, c);
          for (std::size_t dy = 0; dy < 2; ++dy)
            for (std::size_t dx = 0; dx < 2; ++dx) {
              const std::size_t off = x.offset(n, 2 * u + dy, 2 * v + dx, c);
              if (x.data()[off] > x.data()[best]) best = off;
            }
          const std::size_t o = y.offset(n, u, v, c);
          y.data()[o] = x.data()[best];
          state->argmax[o] = best;
        }
  return {std::move(y), std::move(state)};
}

Tensor4 MaxPool2::backward(ModuleState& s, const Tensor4& dy, ParamGrads& grads) const {
  auto& state = state_as<PoolState>(s, name());
  if (dy.size() != state.argmax.size()) throw ContextError(name() + ": dy shape mismatch");
  grads.clear();
  Tensor4 dx = Tensor4::zeros(state.input_shape);
  for (std::size_t i = 0; i < state.argmax.size(); ++i) dx.data()[state.argmax[i]] += dy.data()[i];
  return dx;
}

// --- GlobalAvgPool / Flatten ------------------------------------------------

std::pair<Tensor4, std::unique_ptr<ModuleState>> GlobalAvgPool::forward(const Tensor4& x) const {
  auto state = std::make_unique<ShapeState>();
  state->input_shape = x.shape();
  return {mean_spatial(x), std::move(state)};
}

Tensor4 GlobalAvgPool::backward(ModuleState& s, const Tensor4& dy, ParamGrads& grads) const {
  auto& state = state_as<ShapeState>(s, name());
  const Shape4 in = state.input_shape;
  if (dy.shape() != output_shape(in)) throw ContextError(name() + ": dy shape mismatch");
  grads.clear();
  Tensor4 dx = Tensor4::zeros(in);
  const double inv = 1.0 / static_cast<double>(in.h * in.w);
  for (std::size_t n = 0; n < in.n; ++n)
    for (std::size_t y = 0; y < in.h; ++y)
      for (std::size_t x = 0; x < in.w; ++x)
        for (std::size_t c = 0; c < in.c; ++c) dx(n, y, x, c) = dy(n, 0, 0, c) * inv;
  return dx;
}

std::pair<Tensor4, std::unique_ptr<ModuleState>> Flatten::forward(const Tensor4& x) const {
  auto state = std::make_unique<ShapeState>();
  state->input_shape = x.shape();
  std::vector<double> data(x.data().begin(), x.data().end());
  return {Tensor4(output_shape(x.shape()), std::move(data)), std::move(state)};
}

Tensor4 Flatten::backward(ModuleState& s, const Tensor4& dy, ParamGrads& grads) const {
  auto& state = state_as<ShapeState>(s, name());
  if (dy.size() != state.input_shape.numel()) throw ContextError(name() + ": dy shape mismatch");
  grads.clear();
  std::vector<double> data(dy.data().begin(), dy.data().end());
  return Tensor4(state.input_shape, std::move(data));
}

// --- Dense ------------------------------------------------------------------

Dense::Dense(std::string name, std::size_t in, std::size_t out, std::mt19937_64& rng)
    : Module(std::move(name)), in_(in), out_(out), weight_(in * out, 0.0), bias_(out, 0.0) {
  if (in == 0 || out == 0) throw ConfigError(this->name(), "dense widths must be >= 1");
  fill_uniform(weight_, std::sqrt(3.0 / static_cast<double>(in)), rng);
}

std::pair<Tensor4, std::unique_ptr<ModuleState>> Dense::forward(const Tensor4& x) const {
  const Shape4 s = x.shape();
  if (s.h != 1 || s.w != 1 || s.c != in_) {
    throw ShapeError(name() + ": expected (n,1,1," + std::to_string(in_) + ") input, got " +
                     s.str());
  }
  Tensor4 y = Tensor4::zeros({s.n, 1, 1, out_});
  for (std::size_t n = 0; n < s.n; ++n) {
    auto xv = x.pixel(n, 0, 0);
    auto yv = y.pixel(n, 0, 0);
    for (std::size_t o = 0; o < out_; ++o) {
      double acc = bias_[o];
      const double* w = weight_.data() + o * in_;
      for (std::size_t i = 0; i < in_; ++i) acc += w[i] * xv[i];
      yv[o] = acc;
    }
  }
  auto state = std::make_unique<ConvState>();
  state->input = x;
  return {std::move(y), std::move(state)};
}

Tensor4 Dense::backward(ModuleState& s, const Tensor4& dy, ParamGrads& grads) const {
  auto& state = state_as<ConvState>(s, name());
  const Tensor4& x = state.input;
  const std::size_t batch = x.shape().n;
  if (dy.shape() != Shape4{batch, 1, 1, out_}) throw ContextError(name() + ": dy shape mismatch");
  std::vector<double> dw(weight_.size(), 0.0);
  std::vector<double> db(out_, 0.0);
  Tensor4 dx = Tensor4::zeros(x.shape());
  for (std::size_t n = 0; n < batch; ++n) {
    auto xv = x.pixel(n, 0, 0);
    auto gv = dy.pixel(n, 0, 0);
    auto dxv = dx.pixel(n, 0, 0);
    for (std::size_t o = 0; o < out_; ++o) {
      const double g = gv[o];
      db[o] += g;
      const double* w = weight_.data() + o * in_;
      double* dwr = dw.data() + o * in_;
      for (std::size_t i = 0; i < in_; ++i) {
        dwr[i] += g * xv[i];
        dxv[i] += g * w[i];
      }
    }
  }
  grads.clear();
  grads.push_back(std::move(dw));
  grads.push_back(std::move(db));
  return dx;
}

std::vector<ParamSlot> Dense::params() {
  return {{"weight", weight_, true}, {"bias", bias_, false}};
}

LayerCost Dense::cost(const Shape4&) const { return {in_ * out_, in_ * out_ + out_}; }

}  // namespace drconv
