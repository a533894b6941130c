#include "drconv/conv.hpp"

#include <algorithm>
#include <string>

#include "drconv/errors.hpp"
#include "drconv/parallel.hpp"

namespace drconv {

namespace {

// Output-to-input tap mapping for one spatial axis.
struct Axis {
  long in = 0;
  std::size_t out = 0;
  long stride = 1;
  long pad = 0;
  bool circular = false;

  // Input coordinate read by tap i of output coordinate u, or -1 if it falls
  // in the zero padding.
  long source(std::size_t u, std::size_t i) const noexcept {
    long p = static_cast<long>(u) * stride + static_cast<long>(i) - pad;
    if (circular) {
      p %= in;
      return p < 0 ? p + in : p;
    }
    return (p < 0 || p >= in) ? -1 : p;
  }
};

struct Geometry {
  Axis rows;
  Axis cols;
  std::size_t k = 1;
  std::size_t in_c = 1;
  std::size_t out_c = 1;

  std::size_t packed_size() const noexcept { return k * k * in_c * out_c; }
};

Geometry make_geometry(const Shape4& in, const ConvSpec& spec) {
  spec.validate();
  const Shape4 out = spec.output_shape(in);
  const bool circ = spec.padding == Padding::circular;
  const long pad = static_cast<long>(spec.pad());
  const long stride = static_cast<long>(spec.stride);
  return Geometry{Axis{static_cast<long>(in.h), out.h, stride, pad, circ},
                  Axis{static_cast<long>(in.w), out.w, stride, pad, circ},
                  spec.k, spec.in_channels, spec.out_channels};
}

// [o][c][i][j] -> [i][j][c][o], so the innermost loops run over contiguous
// output channels.
void pack(std::span<const double> src, std::size_t out_c, std::size_t in_c, std::size_t k,
          double* dst) {
  for (std::size_t o = 0; o < out_c; ++o)
    for (std::size_t c = 0; c < in_c; ++c)
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          dst[((i * k + j) * in_c + c) * out_c + o] = src[((o * in_c + c) * k + i) * k + j];
}

void unpack_add(const double* src, std::size_t out_c, std::size_t in_c, std::size_t k,
                std::span<double> dst) {
  for (std::size_t o = 0; o < out_c; ++o)
    for (std::size_t c = 0; c < in_c; ++c)
      for (std::size_t i = 0; i < k; ++i)
        for (std::size_t j = 0; j < k; ++j)
          dst[((o * in_c + c) * k + i) * k + j] += src[((i * k + j) * in_c + c) * out_c + o];
}

// Accumulates y(n,u,v,:) for every output pixel of sample n, using the packed
// filter returned by filter_at(u, v).
template <class FilterAt>
void forward_sample(const Tensor4& x, std::size_t n, Tensor4& y, const Geometry& g,
                    FilterAt filter_at) {
  const std::size_t k = g.k;
  const std::size_t C = g.in_c;
  const std::size_t O = g.out_c;
  for (std::size_t u = 0; u < g.rows.out; ++u) {
    for (std::size_t v = 0; v < g.cols.out; ++v) {
      double* yv = y.pixel(n, u, v).data();
      const double* wf = filter_at(u, v);
      for (std::size_t i = 0; i < k; ++i) {
        const long iy = g.rows.source(u, i);
        if (iy < 0) continue;
        for (std::size_t j = 0; j < k; ++j) {
          const long ix = g.cols.source(v, j);
          if (ix < 0) continue;
          const double* xp = x.pixel(n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)).data();
          const double* wp = wf + (i * k + j) * C * O;
          for (std::size_t c = 0; c < C; ++c) {
            const double xc = xp[c];
            const double* wc = wp + c * O;
            for (std::size_t o = 0; o < O; ++o) yv[o] += xc * wc[o];
          }
        }
      }
    }
  }
}

// Accumulates dx for sample n and, when grad_at(u, v) is non-null, the packed
// gradient of the filter used at (u, v).
template <class FilterAt, class GradAt>
void backward_sample(const Tensor4& x, std::size_t n, const Tensor4& dy, Tensor4& dx,
                     const Geometry& g, FilterAt filter_at, GradAt grad_at) {
  const std::size_t k = g.k;
  const std::size_t C = g.in_c;
  const std::size_t O = g.out_c;
  for (std::size_t u = 0; u < g.rows.out; ++u) {
    for (std::size_t v = 0; v < g.cols.out; ++v) {
      const double* dyv = dy.pixel(n, u, v).data();
      const double* wf = filter_at(u, v);
      double* gf = grad_at(u, v);
      for (std::size_t i = 0; i < k; ++i) {
        const long iy = g.rows.source(u, i);
        if (iy < 0) continue;
        for (std::size_t j = 0; j < k; ++j) {
          const long ix = g.cols.source(v, j);
          if (ix < 0) continue;
          const auto sy = static_cast<std::size_t>(iy);
          const auto sx = static_cast<std::size_t>(ix);
          const double* xp = x.pixel(n, sy, sx).data();
          double* dxp = dx.pixel(n, sy, sx).data();
          const std::size_t tap = (i * k + j) * C * O;
          for (std::size_t c = 0; c < C; ++c) {
            const double* wc = wf + tap + c * O;
            double acc = 0.0;
            for (std::size_t o = 0; o < O; ++o) acc += wc[o] * dyv[o];
            dxp[c] += acc;
            if (gf != nullptr) {
              double* gc = gf + tap + c * O;
              const double xc = xp[c];
              for (std::size_t o = 0; o < O; ++o) gc[o] += xc * dyv[o];
            }
          }
        }
      }
    }
  }
}

void require_input(const Tensor4& x, const ConvSpec& spec, const char* op) {
  if (x.shape().c != spec.in_channels) {
    throw ShapeError(std::string(op) + ": input has " + std::to_string(x.shape().c) +
                     " channels, spec expects " + std::to_string(spec.in_channels));
  }
}

void require_kernel(const Kernel& w, const ConvSpec& spec, const char* op) {
  if (w.out_channels != spec.out_channels || w.in_channels != spec.in_channels ||
      w.k != spec.k || w.values.size() != w.out_channels * w.in_channels * w.k * w.k) {
    throw ShapeError(std::string(op) + ": filter shape does not match conv spec");
  }
}

void require_context_dy(const Tensor4& input, const ConvSpec& spec, const Tensor4& dy,
                        const char* op) {
  if (input.shape().c != spec.in_channels) {
    throw ContextError(std::string(op) + ": context input does not match its spec");
  }
  const Shape4 expected = spec.output_shape(input.shape());
  if (dy.shape() != expected) {
    throw ContextError(std::string(op) + ": dy shape " + dy.shape().str() +
                       " does not match forward output " + expected.str());
  }
}

void require_bank(const FilterBank& bank, const GuidedMask& mask, const Shape4& in,
                  const ConvSpec& spec, const char* op) {
  if (bank.out_channels != spec.out_channels || bank.in_channels != spec.in_channels ||
      bank.k != spec.k || bank.m == 0 ||
      bank.values.size() != bank.n * bank.m * bank.filter_size()) {
    throw ShapeError(std::string(op) + ": filter bank shape does not match conv spec");
  }
  if (bank.n != in.n) {
    throw ShapeError(std::string(op) + ": filter bank batch " + std::to_string(bank.n) +
                     " does not match input batch " + std::to_string(in.n));
  }
  const Shape4 out = spec.output_shape(in);
  if (mask.n() != out.n || mask.h() != out.h || mask.w() != out.w) {
    throw ShapeError(std::string(op) + ": mask dims do not match the output map");
  }
  for (std::int32_t t : mask.values()) {
    if (t < 0 || static_cast<std::size_t>(t) >= bank.m) {
      throw IndexError(std::string(op) + ": mask index " + std::to_string(t) +
                       " out of range for m=" + std::to_string(bank.m));
    }
  }
}

// Packs every filter of the bank: [n][m][i][j][c][o].
std::vector<double> pack_bank(const FilterBank& bank) {
  const std::size_t fs = bank.filter_size();
  std::vector<double> packed(bank.values.size());
  for (std::size_t s = 0; s < bank.n; ++s)
    for (std::size_t t = 0; t < bank.m; ++t)
      pack(bank.filter(s, t), bank.out_channels, bank.in_channels, bank.k,
           packed.data() + (s * bank.m + t) * fs);
  return packed;
}

}  // namespace

const char* to_string(Padding p) noexcept {
  switch (p) {
    case Padding::same_zero: return "same_zero";
    case Padding::valid: return "valid";
    case Padding::circular: return "circular";
  }
  return "same_zero";
}

Padding padding_from_string(const std::string& s) {
  if (s == "same_zero" || s == "same") return Padding::same_zero;
  if (s == "valid") return Padding::valid;
  if (s == "circular") return Padding::circular;
  throw ConfigError("padding", "unknown padding mode '" + s + "'");
}

void ConvSpec::validate() const {
  if (k == 0 || k % 2 == 0) {
    throw ConfigError("k", "kernel size must be odd, got " + std::to_string(k));
  }
  if (stride == 0) throw ConfigError("stride", "stride must be >= 1");
  if (in_channels == 0) throw ConfigError("in_channels", "must be >= 1");
  if (out_channels == 0) throw ConfigError("out_channels", "must be >= 1");
}

std::size_t ConvSpec::out_extent(std::size_t in) const {
  const std::size_t padded = in + 2 * pad();
  if (padded < k) {
    throw SizeError("input extent " + std::to_string(in) + " too small for kernel " +
                    std::to_string(k));
  }
  return (padded - k) / stride + 1;
}

Shape4 ConvSpec::output_shape(const Shape4& in) const {
  return {in.n, out_extent(in.h), out_extent(in.w), out_channels};
}

Kernel Kernel::zeros(std::size_t out_channels, std::size_t in_channels, std::size_t k) {
  return Kernel{out_channels, in_channels, k,
                std::vector<double>(out_channels * in_channels * k * k, 0.0)};
}

LocalFilterField LocalFilterField::zeros(std::size_t h, std::size_t w, std::size_t out_channels,
                                         std::size_t in_channels, std::size_t k) {
  return LocalFilterField{h, w, out_channels, in_channels, k,
                          std::vector<double>(h * w * out_channels * in_channels * k * k, 0.0)};
}

LocalFilterField LocalFilterField::broadcast(std::size_t h, std::size_t w, const Kernel& filter) {
  LocalFilterField f = zeros(h, w, filter.out_channels, filter.in_channels, filter.k);
  for (std::size_t u = 0; u < h; ++u)
    for (std::size_t v = 0; v < w; ++v)
      std::copy(filter.values.begin(), filter.values.end(), f.filter(u, v).begin());
  return f;
}

FilterBank FilterBank::zeros(std::size_t n, std::size_t m, std::size_t out_channels,
                             std::size_t in_channels, std::size_t k) {
  return FilterBank{n, m, out_channels, in_channels, k,
                    std::vector<double>(n * m * out_channels * in_channels * k * k, 0.0)};
}

PerPixelFilters PerPixelFilters::zeros(std::size_t n, std::size_t h, std::size_t w,
                                       std::size_t out_channels, std::size_t in_channels,
                                       std::size_t k) {
  return PerPixelFilters{n, h, w, out_channels, in_channels, k,
                         std::vector<double>(n * h * w * out_channels * in_channels * k * k, 0.0)};
}

Tensor4 conv2d_forward(const Tensor4& x, const StandardFilter& f, const ConvSpec& spec) {
  require_input(x, spec, "conv2d_forward");
  require_kernel(f.weights, spec, "conv2d_forward");
  if (f.has_bias() && f.bias.size() != spec.out_channels) {
    throw ShapeError("conv2d_forward: bias length does not match out_channels");
  }
  const Geometry g = make_geometry(x.shape(), spec);
  std::vector<double> packed(g.packed_size());
  pack(f.weights.values, g.out_c, g.in_c, g.k, packed.data());

  Tensor4 y = Tensor4::zeros(spec.output_shape(x.shape()));
  parallel_for(x.shape().n, [&](std::size_t n) {
    forward_sample(x, n, y, g, [&](std::size_t, std::size_t) { return packed.data(); });
  });
  if (f.has_bias()) {
    const auto& s = y.shape();
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t u = 0; u < s.h; ++u)
        for (std::size_t v = 0; v < s.w; ++v) {
          auto px = y.pixel(n, u, v);
          for (std::size_t o = 0; o < s.c; ++o) px[o] += f.bias[o];
        }
  }
  return y;
}

ConvGrads conv2d_backward(const ConvContext& ctx, const Tensor4& dy) {
  require_context_dy(ctx.input, ctx.spec, dy, "conv2d_backward");
  try {
    require_kernel(ctx.filter.weights, ctx.spec, "conv2d_backward");
  } catch (const ShapeError& e) {
    throw ContextError(e.what());
  }
  const Tensor4& x = ctx.input;
  const Geometry g = make_geometry(x.shape(), ctx.spec);
  const std::size_t ps = g.packed_size();
  std::vector<double> packed(ps);
  pack(ctx.filter.weights.values, g.out_c, g.in_c, g.k, packed.data());

  const std::size_t batch = x.shape().n;
  Tensor4 dx = Tensor4::zeros(x.shape());
  // Per-sample partials, reduced in index order below.
  std::vector<double> partial(batch * ps, 0.0);
  parallel_for(batch, [&](std::size_t n) {
    double* gn = partial.data() + n * ps;
    backward_sample(x, n, dy, dx, g, [&](std::size_t, std::size_t) { return packed.data(); },
                    [&](std::size_t, std::size_t) { return gn; });
  });

  std::vector<double> total(ps, 0.0);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t i = 0; i < ps; ++i) total[i] += partial[n * ps + i];

  ConvGrads grads{std::move(dx), Kernel::zeros(g.out_c, g.in_c, g.k), {}};
  unpack_add(total.data(), g.out_c, g.in_c, g.k, grads.dweights.values);
  if (ctx.filter.has_bias()) {
    grads.dbias.assign(g.out_c, 0.0);
    const auto& s = dy.shape();
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t u = 0; u < s.h; ++u)
        for (std::size_t v = 0; v < s.w; ++v) {
          auto px = dy.pixel(n, u, v);
          for (std::size_t o = 0; o < s.c; ++o) grads.dbias[o] += px[o];
        }
  }
  return grads;
}

Tensor4 local_conv_forward(const Tensor4& x, const LocalFilterField& f, const ConvSpec& spec) {
  require_input(x, spec, "local_conv_forward");
  const Shape4 out = spec.output_shape(x.shape());
  if (f.h != out.h || f.w != out.w || f.out_channels != spec.out_channels ||
      f.in_channels != spec.in_channels || f.k != spec.k ||
      f.values.size() != f.h * f.w * f.filter_size()) {
    throw ShapeError("local_conv_forward: filter field does not match the output map");
  }
  const Geometry g = make_geometry(x.shape(), spec);
  const std::size_t fs = f.filter_size();
  std::vector<double> packed(f.values.size());
  for (std::size_t u = 0; u < f.h; ++u)
    for (std::size_t v = 0; v < f.w; ++v)
      pack(f.filter(u, v), g.out_c, g.in_c, g.k, packed.data() + (u * f.w + v) * fs);

  Tensor4 y = Tensor4::zeros(out);
  parallel_for(x.shape().n, [&](std::size_t n) {
    forward_sample(x, n, y, g, [&](std::size_t u, std::size_t v) {
      return packed.data() + (u * f.w + v) * fs;
    });
  });
  return y;
}

LocalConvGrads local_conv_backward(const LocalConvContext& ctx, const Tensor4& dy) {
  require_context_dy(ctx.input, ctx.spec, dy, "local_conv_backward");
  const auto& f = ctx.filters;
  if (f.h != dy.shape().h || f.w != dy.shape().w) {
    throw ContextError("local_conv_backward: filter field does not match dy");
  }
  const Tensor4& x = ctx.input;
  const Geometry g = make_geometry(x.shape(), ctx.spec);
  const std::size_t fs = f.filter_size();
  const std::size_t field = f.values.size();
  std::vector<double> packed(field);
  for (std::size_t u = 0; u < f.h; ++u)
    for (std::size_t v = 0; v < f.w; ++v)
      pack(f.filter(u, v), g.out_c, g.in_c, g.k, packed.data() + (u * f.w + v) * fs);

  const std::size_t batch = x.shape().n;
  Tensor4 dx = Tensor4::zeros(x.shape());
  std::vector<double> partial(batch * field, 0.0);
  parallel_for(batch, [&](std::size_t n) {
    double* gn = partial.data() + n * field;
    backward_sample(
        x, n, dy, dx, g,
        [&](std::size_t u, std::size_t v) { return packed.data() + (u * f.w + v) * fs; },
        [&](std::size_t u, std::size_t v) { return gn + (u * f.w + v) * fs; });
  });

  LocalConvGrads grads{std::move(dx),
                       LocalFilterField::zeros(f.h, f.w, f.out_channels, f.in_channels, f.k)};
  std::vector<double> total(field, 0.0);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t i = 0; i < field; ++i) total[i] += partial[n * field + i];
  for (std::size_t u = 0; u < f.h; ++u)
    for (std::size_t v = 0; v < f.w; ++v)
      unpack_add(total.data() + (u * f.w + v) * fs, g.out_c, g.in_c, g.k,
                 grads.dfilters.filter(u, v));
  return grads;
}

Tensor4 region_conv_forward(const Tensor4& x, const FilterBank& bank, const GuidedMask& mask,
                            const ConvSpec& spec) {
  require_input(x, spec, "region_conv_forward");
  require_bank(bank, mask, x.shape(), spec, "region_conv_forward");
  const Geometry g = make_geometry(x.shape(), spec);
  const std::size_t fs = bank.filter_size();
  const std::vector<double> packed = pack_bank(bank);

  Tensor4 y = Tensor4::zeros(spec.output_shape(x.shape()));
  parallel_for(x.shape().n, [&](std::size_t n) {
    forward_sample(x, n, y, g, [&](std::size_t u, std::size_t v) {
      const auto t = static_cast<std::size_t>(mask(n, u, v));
      return packed.data() + (n * bank.m + t) * fs;
    });
  });
  return y;
}

namespace {

void require_region_context(const RegionConvContext& ctx, const Tensor4& dy, const char* op) {
  require_context_dy(ctx.input, ctx.spec, dy, op);
  try {
    require_bank(ctx.bank, ctx.mask, ctx.input.shape(), ctx.spec, op);
  } catch (const Error& e) {
    throw ContextError(e.what());
  }
}

}  // namespace

RegionConvGrads region_conv_backward(const RegionConvContext& ctx, const Tensor4& dy) {
  require_region_context(ctx, dy, "region_conv_backward");
  const Tensor4& x = ctx.input;
  const FilterBank& bank = ctx.bank;
  const Geometry g = make_geometry(x.shape(), ctx.spec);
  const std::size_t fs = bank.filter_size();
  const std::vector<double> packed = pack_bank(bank);

  Tensor4 dx = Tensor4::zeros(x.shape());
  // Each sample owns its own slice of the packed gradient, so no reduction
  // across the batch is needed.
  std::vector<double> packed_grad(packed.size(), 0.0);
  parallel_for(x.shape().n, [&](std::size_t n) {
    backward_sample(
        x, n, dy, dx, g,
        [&](std::size_t u, std::size_t v) {
          const auto t = static_cast<std::size_t>(ctx.mask(n, u, v));
          return packed.data() + (n * bank.m + t) * fs;
        },
        [&](std::size_t u, std::size_t v) {
          const auto t = static_cast<std::size_t>(ctx.mask(n, u, v));
          return packed_grad.data() + (n * bank.m + t) * fs;
        });
  });

  RegionConvGrads grads{std::move(dx),
                        FilterBank::zeros(bank.n, bank.m, bank.out_channels, bank.in_channels,
                                          bank.k)};
  for (std::size_t s = 0; s < bank.n; ++s)
    for (std::size_t t = 0; t < bank.m; ++t)
      unpack_add(packed_grad.data() + (s * bank.m + t) * fs, g.out_c, g.in_c, g.k,
                 grads.dbank.filter(s, t));
  return grads;
}

PerPixelFilters region_conv_filter_gradients(const RegionConvContext& ctx, const Tensor4& dy) {
  require_region_context(ctx, dy, "region_conv_filter_gradients");
  const Tensor4& x = ctx.input;
  const Geometry g = make_geometry(x.shape(), ctx.spec);
  const Shape4 out = dy.shape();
  PerPixelFilters grads = PerPixelFilters::zeros(out.n, out.h, out.w, g.out_c, g.in_c, g.k);
  const std::size_t fs = grads.filter_size();

  parallel_for(out.n, [&](std::size_t n) {
    std::vector<double> scratch(fs);
    for (std::size_t u = 0; u < out.h; ++u) {
      for (std::size_t v = 0; v < out.w; ++v) {
        std::fill(scratch.begin(), scratch.end(), 0.0);
        const double* dyv = dy.pixel(n, u, v).data();
        for (std::size_t i = 0; i < g.k; ++i) {
          const long iy = g.rows.source(u, i);
          if (iy < 0) continue;
          for (std::size_t j = 0; j < g.k; ++j) {
            const long ix = g.cols.source(v, j);
            if (ix < 0) continue;
            const double* xp =
                x.pixel(n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)).data();
            double* gp = scratch.data() + (i * g.k + j) * g.in_c * g.out_c;
            for (std::size_t c = 0; c < g.in_c; ++c)
              for (std::size_t o = 0; o < g.out_c; ++o) gp[c * g.out_c + o] += xp[c] * dyv[o];
          }
        }
        unpack_add(scratch.data(), g.out_c, g.in_c, g.k, grads.filter(n, u, v));
      }
    }
  });
  return grads;
}

Tensor4 region_selection_gradient(const RegionConvContext& ctx, const Tensor4& dy) {
  require_region_context(ctx, dy, "region_selection_gradient");
  const Tensor4& x = ctx.input;
  const FilterBank& bank = ctx.bank;
  const Geometry g = make_geometry(x.shape(), ctx.spec);
  const std::size_t fs = bank.filter_size();
  const std::vector<double> packed = pack_bank(bank);
  const Shape4 out = dy.shape();
  const std::size_t C = g.in_c;
  const std::size_t O = g.out_c;

  Tensor4 s = Tensor4::zeros({out.n, out.h, out.w, bank.m});
  parallel_for(out.n, [&](std::size_t n) {
    for (std::size_t u = 0; u < out.h; ++u) {
      for (std::size_t v = 0; v < out.w; ++v) {
        const double* dyv = dy.pixel(n, u, v).data();
        for (std::size_t t = 0; t < bank.m; ++t) {
          const double* wf = packed.data() + (n * bank.m + t) * fs;
          double acc = 0.0;
          for (std::size_t i = 0; i < g.k; ++i) {
            const long iy = g.rows.source(u, i);
            if (iy < 0) continue;
            for (std::size_t j = 0; j < g.k; ++j) {
              const long ix = g.cols.source(v, j);
              if (ix < 0) continue;
              const double* xp =
                  x.pixel(n, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)).data();
              const double* wp = wf + (i * g.k + j) * C * O;
              for (std::size_t c = 0; c < C; ++c) {
                const double* wc = wp + c * O;
                double proj = 0.0;
                for (std::size_t o = 0; o < O; ++o) proj += wc[o] * dyv[o];
                acc += xp[c] * proj;
              }
            }
          }
          s(n, u, v, t) = acc;
        }
      }
    }
  });
  return s;
}

}  // namespace drconv
