#include "drconv/filter_generator.hpp"

#include "drconv/errors.hpp"

namespace drconv {

namespace {

struct Bin {
  std::size_t begin;
  std::size_t end;
};

Bin bin(std::size_t i, std::size_t in, std::size_t out) {
  return {(i * in) / out, ((i + 1) * in + out - 1) / out};
}

}  // namespace

Tensor4 adaptive_avg_pool(const Tensor4& x, std::size_t out_h, std::size_t out_w) {
  const auto& s = x.shape();
  if (out_h == 0 || out_w == 0 || out_h > s.h || out_w > s.w) {
    throw SizeError("adaptive_avg_pool: output " + std::to_string(out_h) + "x" +
                    std::to_string(out_w) + " not within input " + std::to_string(s.h) + "x" +
                    std::to_string(s.w));
  }
  Tensor4 out = Tensor4::zeros({s.n, out_h, out_w, s.c});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < out_h; ++i) {
      const Bin r = bin(i, s.h, out_h);
      for (std::size_t j = 0; j < out_w; ++j) {
        const Bin c = bin(j, s.w, out_w);
        const double inv = 1.0 / static_cast<double>((r.end - r.begin) * (c.end - c.begin));
        auto dst = out.pixel(n, i, j);
        for (std::size_t y = r.begin; y < r.end; ++y)
          for (std::size_t x2 = c.begin; x2 < c.end; ++x2) {
            auto src = x.pixel(n, y, x2);
            for (std::size_t ch = 0; ch < s.c; ++ch) dst[ch] += src[ch];
          }
        for (double& v : dst) v *= inv;
      }
    }
  return out;
}

Tensor4 adaptive_avg_pool_backward(const Tensor4& dpooled, const Shape4& input_shape) {
  const auto& p = dpooled.shape();
  if (p.n != input_shape.n || p.c != input_shape.c || p.h > input_shape.h ||
      p.w > input_shape.w) {
    throw ShapeError("adaptive_avg_pool_backward: pooled gradient does not fit input shape");
  }
  Tensor4 dx = Tensor4::zeros(input_shape);
  for (std::size_t n = 0; n < p.n; ++n)
    for (std::size_t i = 0; i < p.h; ++i) {
      const Bin r = bin(i, input_shape.h, p.h);
      for (std::size_t j = 0; j < p.w; ++j) {
        const Bin c = bin(j, input_shape.w, p.w);
        const double inv = 1.0 / static_cast<double>((r.end - r.begin) * (c.end - c.begin));
        auto g = dpooled.pixel(n, i, j);
        for (std::size_t y = r.begin; y < r.end; ++y)
          for (std::size_t x2 = c.begin; x2 < c.end; ++x2) {
            auto dst = dx.pixel(n, y, x2);
            for (std::size_t ch = 0; ch < p.c; ++ch) dst[ch] += g[ch] * inv;
          }
      }
    }
  return dx;
}

GeneratorParams GeneratorParams::zeros(std::size_t in_channels, std::size_t out_channels,
                                       std::size_t k, std::size_t m, std::size_t hidden) {
  GeneratorParams p;
  p.in_channels = in_channels;
  p.out_channels = out_channels;
  p.k = k;
  p.m = m;
  p.hidden = hidden;
  p.w1.assign(hidden * in_channels, 0.0);
  p.b1.assign(hidden, 0.0);
  if (m > 0) p.w2.assign(m * out_channels * in_channels * (hidden / m), 0.0);
  return p;
}

void GeneratorParams::validate() const {
  if (m == 0) throw ConfigError("m", "region count must be >= 1");
  if (in_channels == 0 || out_channels == 0) {
    throw ConfigError("channels", "generator channel counts must be >= 1");
  }
  if (k == 0 || k % 2 == 0) throw ConfigError("k", "kernel size must be odd");
  if (hidden == 0 || hidden % m != 0) {
    throw ConfigError("hidden", "hidden width " + std::to_string(hidden) +
                                    " must be a positive multiple of m=" + std::to_string(m));
  }
  if (w1.size() != hidden * in_channels || b1.size() != hidden ||
      w2.size() != out_rows() * group_width()) {
    throw ConfigError("generator", "parameter array sizes do not match the configuration");
  }
}

GeneratorResult generate_filters_with_context(const Tensor4& x, const GeneratorParams& params) {
  params.validate();
  const auto& s = x.shape();
  if (s.c != params.in_channels) {
    throw ConfigError("in_channels", "generator expects " + std::to_string(params.in_channels) +
                                         " input channels, got " + std::to_string(s.c));
  }
  const std::size_t C = params.in_channels;
  const std::size_t O = params.out_channels;
  const std::size_t k = params.k;
  const std::size_t H = params.hidden;
  const std::size_t gw = params.group_width();
  const std::size_t block = O * C;

  GeneratorResult r;
  r.ctx.input_shape = s;
  r.ctx.params = params;
  r.ctx.pooled = adaptive_avg_pool(x, k, k);
  r.ctx.hidden = Tensor4::zeros({s.n, k, k, H});
  r.bank = FilterBank::zeros(s.n, params.m, O, C, k);

  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        auto p = r.ctx.pooled.pixel(n, i, j);
        auto h1 = r.ctx.hidden.pixel(n, i, j);
        for (std::size_t h = 0; h < H; ++h) {
          double a = params.b1[h];
          for (std::size_t c = 0; c < C; ++c) a += params.w1[h * C + c] * p[c];
          h1[h] = sigmoid(a);
        }
        for (std::size_t row = 0; row < params.out_rows(); ++row) {
          const std::size_t group = row / block;
          const double* w = params.w2.data() + row * gw;
          const double* in = h1.data() + group * gw;
          double acc = 0.0;
          for (std::size_t q = 0; q < gw; ++q) acc += w[q] * in[q];
          const std::size_t o = (row % block) / C;
          const std::size_t c = row % C;
          r.bank(n, group, o, c, i, j) = acc;
        }
      }
  return r;
}

FilterBank generate_filters(const Tensor4& x, const GeneratorParams& params) {
  return generate_filters_with_context(x, params).bank;
}

GeneratorGrads generator_backward(const GeneratorContext& ctx, const FilterBank& dbank) {
  const GeneratorParams& params = ctx.params;
  const std::size_t C = params.in_channels;
  const std::size_t O = params.out_channels;
  const std::size_t k = params.k;
  const std::size_t H = params.hidden;
  const std::size_t gw = params.group_width();
  const std::size_t block = O * C;
  const std::size_t batch = ctx.input_shape.n;
  if (dbank.n != batch || dbank.m != params.m || dbank.out_channels != O ||
      dbank.in_channels != C || dbank.k != k) {
    throw ContextError("generator_backward: bank gradient does not match generator context");
  }

  GeneratorGrads g;
  g.dw1.assign(params.w1.size(), 0.0);
  g.db1.assign(params.b1.size(), 0.0);
  g.dw2.assign(params.w2.size(), 0.0);
  Tensor4 dpooled = Tensor4::zeros(ctx.pooled.shape());
  std::vector<double> dh(H);

  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = 0; j < k; ++j) {
        auto h1 = ctx.hidden.pixel(n, i, j);
        auto p = ctx.pooled.pixel(n, i, j);
        std::fill(dh.begin(), dh.end(), 0.0);
        for (std::size_t row = 0; row < params.out_rows(); ++row) {
          const std::size_t group = row / block;
          const std::size_t o = (row % block) / C;
          const std::size_t c = row % C;
          const double dout = dbank(n, group, o, c, i, j);
          const double* w = params.w2.data() + row * gw;
          double* dw = g.dw2.data() + row * gw;
          const double* in = h1.data() + group * gw;
          double* din = dh.data() + group * gw;
          for (std::size_t q = 0; q < gw; ++q) {
            dw[q] += dout * in[q];
            din[q] += dout * w[q];
          }
        }
        auto dp = dpooled.pixel(n, i, j);
        for (std::size_t h = 0; h < H; ++h) {
          const double da = dh[h] * h1[h] * (1.0 - h1[h]);
          g.db1[h] += da;
          for (std::size_t c = 0; c < C; ++c) {
            g.dw1[h * C + c] += da * p[c];
            dp[c] += da * params.w1[h * C + c];
          }
        }
      }
  g.dx = adaptive_avg_pool_backward(dpooled, ctx.input_shape);
  return g;
}

}  // namespace drconv
