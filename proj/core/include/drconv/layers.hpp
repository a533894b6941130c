#pragma once

#include <memory>
#include <random>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "drconv/conv.hpp"
#include "drconv/drconv_layer.hpp"
#include "drconv/tensor.hpp"

namespace drconv {

// A named parameter array of a module. `decay` marks arrays that receive
// weight decay.
struct ParamSlot {
  std::string name;
  std::span<double> values;
  bool decay = true;
};

// Opaque per-call forward state.
struct ModuleState {
  virtual ~ModuleState() = default;
};

// Gradients aligned with Module::params(), one vector per slot.
using ParamGrads = std::vector<std::vector<double>>;

class Module {
 public:
  explicit Module(std::string name) : name_(std::move(name)) {}
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  const std::string& name() const noexcept { return name_; }
  virtual std::string type() const = 0;

  virtual Shape4 output_shape(const Shape4& in) const = 0;
  virtual std::pair<Tensor4, std::unique_ptr<ModuleState>> forward(const Tensor4& x) const = 0;
  // Returns dx and overwrites `grads` with one entry per params() slot.
  virtual Tensor4 backward(ModuleState& state, const Tensor4& dy, ParamGrads& grads) const = 0;

  virtual std::vector<ParamSlot> params() { return {}; }
  std::vector<std::span<const double>> param_values() const;
  virtual LayerCost cost(const Shape4&) const { return {}; }

 private:
  std::string name_;
};

class StandardConv2d final : public Module {
 public:
  StandardConv2d(std::string name, const ConvSpec& spec, bool bias, std::mt19937_64& rng);
  StandardConv2d(std::string name, const ConvSpec& spec, StandardFilter filter);

  std::string type() const override { return "standard"; }
  Shape4 output_shape(const Shape4& in) const override { return spec_.output_shape(in); }
  std::pair<Tensor4, std::unique_ptr<ModuleState>> forward(const Tensor4& x) const override;
  Tensor4 backward(ModuleState& state, const Tensor4& dy, ParamGrads& grads) const override;
  std::vector<ParamSlot> params() override;
  LayerCost cost(const Shape4& in) const override;

  const ConvSpec& spec() const noexcept { return spec_; }
  const StandardFilter& filter() const noexcept { return filter_; }

 private:
  ConvSpec spec_;
  StandardFilter filter_;
};

// Unshared filters; the output size is fixed at construction.
class LocalConv2d final : public Module {
 public:
  LocalConv2d(std::string name, const ConvSpec& spec, std::size_t in_h, std::size_t in_w,
              std::mt19937_64& rng);

  std::string type() const override { return "local"; }
  Shape4 output_shape(const Shape4& in) const override;
  std::pair<Tensor4, std::unique_ptr<ModuleState>> forward(const Tensor4& x) const override;
  Tensor4 backward(ModuleState& state, const Tensor4& dy, ParamGrads& grads) const override;
  std::vector<ParamSlot> params() override;
  LayerCost cost(const Shape4& in) const override;

 private:
  ConvSpec spec_;
  LocalFilterField filters_;
};

class DRConv2d final : public Module {
 public:
  DRConv2d(std::string name, DRConvLayer layer);

  std::string type() const override { return "drconv"; }
  Shape4 output_shape(const Shape4& in) const override { return layer_.spec.output_shape(in); }
  std::pair<Tensor4, std::unique_ptr<ModuleState>> forward(const Tensor4& x) const override;
  Tensor4 backward(ModuleState& state, const Tensor4& dy, ParamGrads& grads) const override;
  // guide, gen.w1, gen.b1, gen.w2
  std::vector<ParamSlot> params() override;
  LayerCost cost(const Shape4& in) const override;

  const DRConvLayer& layer() const noexcept { return layer_; }
  // Mask of the forward that produced `state`.
  static const GuidedMask& mask_of(const ModuleState& state);

 private:
  DRConvLayer layer_;
};

class ReLU final : public Module {
 public:
  using Module::Module;
  std::string type() const override { return "relu"; }
  Shape4 output_shape(const Shape4& in) const override { return in; }
  std::pair<Tensor4, std::unique_ptr<ModuleState>> forward(const Tensor4& x) const override;
  Tensor4 backward(ModuleState& state, const Tensor4& dy, ParamGrads& grads) const override;
};

// 2x2 max pooling, stride 2, odd trailing rows/columns dropped. Ties pick the
// first element in row-major window order.
class MaxPool2 final : public Module {
 public:
  using Module::Module;
  std::string type() const override { return "maxpool2"; }
  Shape4 output_shape(const Shape4& in) const override;
  std::pair<Tensor4, std::unique_ptr<ModuleState>> forward(const Tensor4& x) const override;
  Tensor4 backward(ModuleState& state, const Tensor4& dy, ParamGrads& grads) const override;
};

// (n,h,w,c) -> (n,1,1,c) spatial mean.
class GlobalAvgPool final : public Module {
 public:
  using Module::Module;
  std::string type() const override { return "gap"; }
  Shape4 output_shape(const Shape4& in) const override { return {in.n, 1, 1, in.c}; }
  std::pair<Tensor4, std::unique_ptr<ModuleState>> forward(const Tensor4& x) const override;
  Tensor4 backward(ModuleState& state, const Tensor4& dy, ParamGrads& grads) const override;
};

// (n,h,w,c) -> (n,1,1,h*w*c), same memory order.
class Flatten final : public Module {
 public:
  using Module::Module;
  std::string type() const override { return "flatten"; }
  Shape4 output_shape(const Shape4& in) const override { return {in.n, 1, 1, in.h * in.w * in.c}; }
  std::pair<Tensor4, std::unique_ptr<ModuleState>> forward(const Tensor4& x) const override;
  Tensor4 backward(ModuleState& state, const Tensor4& dy, ParamGrads& grads) const override;
};

// Fully connected layer on (n,1,1,in) inputs.
class Dense final : public Module {
 public:
  Dense(std::string name, std::size_t in, std::size_t out, std::mt19937_64& rng);

  std::string type() const override { return "dense"; }
  Shape4 output_shape(const Shape4& in) const override { return {in.n, 1, 1, out_}; }
  std::pair<Tensor4, std::unique_ptr<ModuleState>> forward(const Tensor4& x) const override;
  Tensor4 backward(ModuleState& state, const Tensor4& dy, ParamGrads& grads) const override;
  std::vector<ParamSlot> params() override;
  LayerCost cost(const Shape4& in) const override;

 private:
  std::size_t in_;
  std::size_t out_;
  std::vector<double> weight_;  // [out][in]
  std::vector<double> bias_;
};

}  // namespace drconv
