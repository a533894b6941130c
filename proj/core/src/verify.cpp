#include "drconv/verify.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "drconv/errors.hpp"

namespace drconv::verify {

namespace {

double logistic(double a) { return 1.0 / (1.0 + std::exp(-a)); }

// Input with its padding materialised, so every tap is a plain read.
Tensor4 padded_input(const Tensor4& x, const ConvSpec& spec) {
  const Shape4 s = x.shape();
  const std::size_t p = spec.pad();
  Tensor4 out = Tensor4::zeros({s.n, s.h + 2 * p, s.w + 2 * p, s.c});
  const long h = static_cast<long>(s.h);
  const long w = static_cast<long>(s.w);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t a = 0; a < s.h + 2 * p; ++a)
      for (std::size_t b = 0; b < s.w + 2 * p; ++b) {
        long sy = static_cast<long>(a) - static_cast<long>(p);
        long sx = static_cast<long>(b) - static_cast<long>(p);
        if (spec.padding == Padding::circular) {
          sy = ((sy % h) + h) % h;
          sx = ((sx % w) + w) % w;
        } else if (sy < 0 || sy >= h || sx < 0 || sx >= w) {
          continue;
        }
        for (std::size_t c = 0; c < s.c; ++c)
          out(n, a, b, c) = x(n, static_cast<std::size_t>(sy), static_cast<std::size_t>(sx), c);
      }
  return out;
}

Tensor4 naive_softmax(const Tensor4& f) {
  const Shape4 s = f.shape();
  Tensor4 out = Tensor4::zeros(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t u = 0; u < s.h; ++u)
      for (std::size_t v = 0; v < s.w; ++v) {
        double top = f(n, u, v, 0);
        for (std::size_t j = 1; j < s.c; ++j) top = std::max(top, f(n, u, v, j));
        double total = 0.0;
        for (std::size_t j = 0; j < s.c; ++j) total += std::exp(f(n, u, v, j) - top);
        for (std::size_t j = 0; j < s.c; ++j) out(n, u, v, j) = std::exp(f(n, u, v, j) - top) / total;
      }
  return out;
}

double project(const Tensor4& r, const Tensor4& y) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += r.data()[i] * y.data()[i];
  return acc;
}

Tensor4 with_data(const Shape4& s, std::span<const double> v) {
  return Tensor4(s, std::vector<double>(v.begin(), v.end()));
}

}  // namespace

double relative_error(double analytic, double numeric, double eps) noexcept {
  const double denom = std::max({std::abs(analytic), std::abs(numeric), eps});
  return std::abs(analytic - numeric) / denom;
}

std::vector<double> finite_diff(const std::function<double(std::span<const double>)>& f,
                                std::span<const double> theta, double h) {
  std::vector<double> t(theta.begin(), theta.end());
  std::vector<double> g(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double orig = t[i];
    t[i] = orig + h;
    const double up = f(t);
    t[i] = orig - h;
    const double down = f(t);
    t[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericError("finite_diff: function returned a non-finite value at coordinate " +
                         std::to_string(i));
    }
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

ErrorStats compare(std::span<const double> analytic, std::span<const double> numeric, double eps) {
  if (analytic.size() != numeric.size()) {
    throw ShapeError("compare: gradient lengths differ");
  }
  ErrorStats s;
  s.count = analytic.size();
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    s.max_abs = std::max(s.max_abs, std::abs(analytic[i] - numeric[i]));
    s.max_rel = std::max(s.max_rel, relative_error(analytic[i], numeric[i], eps));
  }
  return s;
}

double tap_value(const Tensor4& x, std::size_t n, std::size_t u, std::size_t v, std::size_t i,
                 std::size_t j, std::size_t c, const ConvSpec& spec) {
  const long h = static_cast<long>(x.shape().h);
  const long w = static_cast<long>(x.shape().w);
  const long pad = static_cast<long>(spec.pad());
  long y = static_cast<long>(u * spec.stride + i) - pad;
  long z = static_cast<long>(v * spec.stride + j) - pad;
  if (spec.padding == Padding::circular) {
    y = ((y % h) + h) % h;
    z = ((z % w) + w) % w;
  } else if (y < 0 || y >= h || z < 0 || z >= w) {
    return 0.0;
  }
  return x(n, static_cast<std::size_t>(y), static_cast<std::size_t>(z), c);
}

Tensor4 naive_conv2d(const Tensor4& x, const StandardFilter& f, const ConvSpec& spec) {
  const Shape4 out = spec.output_shape(x.shape());
  Tensor4 y = Tensor4::zeros(out);
  for (std::size_t n = 0; n < out.n; ++n)
    for (std::size_t u = 0; u < out.h; ++u)
      for (std::size_t v = 0; v < out.w; ++v)
        for (std::size_t o = 0; o < out.c; ++o) {
          double acc = 0.0;
          for (std::size_t c = 0; c < spec.in_channels; ++c)
            for (std::size_t i = 0; i < spec.k; ++i)
              for (std::size_t j = 0; j < spec.k; ++j)
                acc += tap_value(x, n, u, v, i, j, c, spec) * f.weights(o, c, i, j);
          if (f.has_bias()) acc += f.bias[o];
          y(n, u, v, o) = acc;
        }
  return y;
}

Tensor4 naive_local_conv(const Tensor4& x, const LocalFilterField& f, const ConvSpec& spec) {
  const Shape4 out = spec.output_shape(x.shape());
  const std::size_t C = spec.in_channels;
  const std::size_t k = spec.k;
  Tensor4 y = Tensor4::zeros(out);
  for (std::size_t n = 0; n < out.n; ++n)
    for (std::size_t u = 0; u < out.h; ++u)
      for (std::size_t v = 0; v < out.w; ++v) {
        auto w = f.filter(u, v);
        for (std::size_t o = 0; o < out.c; ++o) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t i = 0; i < k; ++i)
              for (std::size_t j = 0; j < k; ++j)
                acc += tap_value(x, n, u, v, i, j, c, spec) * w[((o * C + c) * k + i) * k + j];
          y(n, u, v, o) = acc;
        }
      }
  return y;
}

Tensor4 naive_region_conv(const Tensor4& x, const FilterBank& bank, const GuidedMask& mask,
                          const ConvSpec& spec) {
  const Shape4 out = spec.output_shape(x.shape());
  Tensor4 y = Tensor4::zeros(out);
  for (std::size_t n = 0; n < out.n; ++n)
    for (std::size_t u = 0; u < out.h; ++u)
      for (std::size_t v = 0; v < out.w; ++v) {
        const auto t = static_cast<std::size_t>(mask(n, u, v));
        if (t >= bank.m) throw IndexError("naive_region_conv: mask index out of range");
        for (std::size_t o = 0; o < out.c; ++o) {
          double acc = 0.0;
          for (std::size_t c = 0; c < spec.in_channels; ++c)
            for (std::size_t i = 0; i < spec.k; ++i)
              for (std::size_t j = 0; j < spec.k; ++j)
                acc += tap_value(x, n, u, v, i, j, c, spec) * bank(n, t, o, c, i, j);
          y(n, u, v, o) = acc;
        }
      }
  return y;
}

Tensor4 naive_adaptive_pool(const Tensor4& x, std::size_t out_h, std::size_t out_w) {
  const Shape4 s = x.shape();
  Tensor4 y = Tensor4::zeros({s.n, out_h, out_w, s.c});
  const auto lo = [](std::size_t i, std::size_t in, std::size_t out) {
    return static_cast<std::size_t>(std::floor(static_cast<double>(i * in) / static_cast<double>(out)));
  };
  const auto hi = [](std::size_t i, std::size_t in, std::size_t out) {
    return static_cast<std::size_t>(
        std::ceil(static_cast<double>((i + 1) * in) / static_cast<double>(out)));
  };
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t i = 0; i < out_h; ++i)
      for (std::size_t j = 0; j < out_w; ++j)
        for (std::size_t c = 0; c < s.c; ++c) {
          double acc = 0.0;
          std::size_t count = 0;
          for (std::size_t a = lo(i, s.h, out_h); a < hi(i, s.h, out_h); ++a)
            for (std::size_t b = lo(j, s.w, out_w); b < hi(j, s.w, out_w); ++b) {
              acc += x(n, a, b, c);
              ++count;
            }
          y(n, i, j, c) = acc / static_cast<double>(count);
        }
  return y;
}

FilterBank naive_generate_filters(const Tensor4& x, const GeneratorParams& p) {
  const std::size_t C = p.in_channels;
  const std::size_t O = p.out_channels;
  const std::size_t H = p.hidden;
  const std::size_t rows = p.m * O * C;
  const std::size_t gw = H / p.m;
  // Block-diagonal expansion of the grouped weights.
  std::vector<double> dense(rows * H, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    const std::size_t g = r / (O * C);
    for (std::size_t q = 0; q < gw; ++q) dense[r * H + g * gw + q] = p.w2[r * gw + q];
  }
  const Tensor4 pooled = naive_adaptive_pool(x, p.k, p.k);
  const std::size_t batch = x.shape().n;
  FilterBank bank = FilterBank::zeros(batch, p.m, O, C, p.k);
  std::vector<double> hidden(H);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t i = 0; i < p.k; ++i)
      for (std::size_t j = 0; j < p.k; ++j) {
        for (std::size_t h = 0; h < H; ++h) {
          double a = p.b1[h];
          for (std::size_t c = 0; c < C; ++c) a += p.w1[h * C + c] * pooled(n, i, j, c);
          hidden[h] = logistic(a);
        }
        for (std::size_t r = 0; r < rows; ++r) {
          double acc = 0.0;
          for (std::size_t h = 0; h < H; ++h) acc += dense[r * H + h] * hidden[h];
          const std::size_t t = r / (O * C);
          const std::size_t o = (r / C) % O;
          const std::size_t c = r % C;
          bank(n, t, o, c, i, j) = acc;
        }
      }
  return bank;
}

Tensor4 single_filter_output(const Tensor4& x, const FilterBank& bank, std::size_t j,
                             const ConvSpec& spec) {
  const Shape4 out = spec.output_shape(x.shape());
  return naive_region_conv(x, bank, GuidedMask(out.n, out.h, out.w, static_cast<std::int32_t>(j)),
                           spec);
}

Tensor4 relaxed_from_feature(const Tensor4& x, const FilterBank& bank, const Tensor4& feature,
                             const ConvSpec& spec) {
  const Tensor4 soft = naive_softmax(feature);
  Tensor4 y = Tensor4::zeros(spec.output_shape(x.shape()));
  const Shape4 s = y.shape();
  for (std::size_t j = 0; j < bank.m; ++j) {
    const Tensor4 yj = single_filter_output(x, bank, j, spec);
    for (std::size_t n = 0; n < s.n; ++n)
      for (std::size_t u = 0; u < s.h; ++u)
        for (std::size_t v = 0; v < s.w; ++v)
          for (std::size_t o = 0; o < s.c; ++o) y(n, u, v, o) += soft(n, u, v, j) * yj(n, u, v, o);
  }
  return y;
}

Tensor4 relaxed_forward(const DRConvLayer& layer, const Tensor4& x) {
  ConvSpec gspec = layer.spec;
  gspec.out_channels = layer.m;
  const Tensor4 feature = naive_conv2d(x, layer.guide, gspec);
  const FilterBank bank = naive_generate_filters(x, layer.generator);
  return relaxed_from_feature(x, bank, feature, layer.spec);
}

Tensor4 naive_drconv_forward(const DRConvLayer& layer, const Tensor4& x) {
  ConvSpec gspec = layer.spec;
  gspec.out_channels = layer.m;
  const Tensor4 feature = naive_conv2d(x, layer.guide, gspec);
  const Shape4 fs = feature.shape();
  GuidedMask mask(fs.n, fs.h, fs.w);
  for (std::size_t n = 0; n < fs.n; ++n)
    for (std::size_t u = 0; u < fs.h; ++u)
      for (std::size_t v = 0; v < fs.w; ++v) {
        std::size_t best = 0;
        for (std::size_t j = 1; j < fs.c; ++j)
          if (feature(n, u, v, j) > feature(n, u, v, best)) best = j;
        mask(n, u, v) = static_cast<std::int32_t>(best);
      }
  return naive_region_conv(x, naive_generate_filters(x, layer.generator), mask, layer.spec);
}

CountedOutput instrumented_conv2d(const Tensor4& x, const StandardFilter& f, const ConvSpec& spec) {
  const Tensor4 xp = padded_input(x, spec);
  const Shape4 out = spec.output_shape(x.shape());
  CountedOutput r{Tensor4::zeros(out), 0};
  for (std::size_t n = 0; n < out.n; ++n)
    for (std::size_t u = 0; u < out.h; ++u)
      for (std::size_t v = 0; v < out.w; ++v)
        for (std::size_t o = 0; o < out.c; ++o) {
          double acc = f.has_bias() ? f.bias[o] : 0.0;
          for (std::size_t c = 0; c < spec.in_channels; ++c)
            for (std::size_t i = 0; i < spec.k; ++i)
              for (std::size_t j = 0; j < spec.k; ++j) {
                acc += xp(n, u * spec.stride + i, v * spec.stride + j, c) * f.weights(o, c, i, j);
                ++r.multiplies;
              }
          r.y(n, u, v, o) = acc;
        }
  return r;
}

CountedOutput instrumented_drconv_forward(const DRConvLayer& layer, const Tensor4& x) {
  const ConvSpec& spec = layer.spec;
  ConvSpec gspec = spec;
  gspec.out_channels = layer.m;

  // Guide convolution.
  CountedOutput guide = instrumented_conv2d(x, layer.guide, gspec);
  std::uint64_t count = guide.multiplies;

  // Generator: pooling (no multiplies counted), dense 1x1, grouped 1x1.
  const GeneratorParams& p = layer.generator;
  const Tensor4 pooled = naive_adaptive_pool(x, p.k, p.k);
  const std::size_t batch = x.shape().n;
  const std::size_t C = p.in_channels;
  const std::size_t O = p.out_channels;
  const std::size_t gw = p.hidden / p.m;
  FilterBank bank = FilterBank::zeros(batch, p.m, O, C, p.k);
  std::vector<double> hidden(p.hidden);
  for (std::size_t n = 0; n < batch; ++n)
    for (std::size_t i = 0; i < p.k; ++i)
      for (std::size_t j = 0; j < p.k; ++j) {
        for (std::size_t h = 0; h < p.hidden; ++h) {
          double a = p.b1[h];
          for (std::size_t c = 0; c < C; ++c) {
            a += p.w1[h * C + c] * pooled(n, i, j, c);
            ++count;
          }
          hidden[h] = logistic(a);
        }
        for (std::size_t r = 0; r < p.m * O * C; ++r) {
          const std::size_t g = r / (O * C);
          double acc = 0.0;
          for (std::size_t q = 0; q < gw; ++q) {
            acc += p.w2[r * gw + q] * hidden[g * gw + q];
            ++count;
          }
          bank(n, g, (r / C) % O, r % C, i, j) = acc;
        }
      }

  // Main convolution with the selected filters.
  const Tensor4 xp = padded_input(x, spec);
  const Shape4 out = spec.output_shape(x.shape());
  CountedOutput r{Tensor4::zeros(out), 0};
  for (std::size_t n = 0; n < out.n; ++n)
    for (std::size_t u = 0; u < out.h; ++u)
      for (std::size_t v = 0; v < out.w; ++v) {
        std::size_t t = 0;
        for (std::size_t j = 1; j < layer.m; ++j)
          if (guide.y(n, u, v, j) > guide.y(n, u, v, t)) t = j;
        for (std::size_t o = 0; o < out.c; ++o) {
          double acc = 0.0;
          for (std::size_t c = 0; c < spec.in_channels; ++c)
            for (std::size_t i = 0; i < spec.k; ++i)
              for (std::size_t j = 0; j < spec.k; ++j) {
                acc += xp(n, u * spec.stride + i, v * spec.stride + j, c) * bank(n, t, o, c, i, j);
                ++count;
              }
          r.y(n, u, v, o) = acc;
        }
      }
  r.multiplies = count;
  return r;
}

double min_top2_gap(const Tensor4& feature) {
  const Shape4 s = feature.shape();
  if (s.c < 2) return std::numeric_limits<double>::infinity();
  double gap = std::numeric_limits<double>::infinity();
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t u = 0; u < s.h; ++u)
      for (std::size_t v = 0; v < s.w; ++v) {
        double first = -std::numeric_limits<double>::infinity();
        double second = first;
        for (std::size_t j = 0; j < s.c; ++j) {
          const double f = feature(n, u, v, j);
          if (f > first) {
            second = first;
            first = f;
          } else if (f > second) {
            second = f;
          }
        }
        gap = std::min(gap, first - second);
      }
  return gap;
}

bool GradCheckReport::passed() const noexcept {
  return std::all_of(groups.begin(), groups.end(), [](const GradGroup& g) { return g.pass; });
}

const GradGroup& GradCheckReport::group(const std::string& name) const {
  for (const GradGroup& g : groups)
    if (g.name == name) return g;
  throw LookupError("no gradient group named '" + name + "'");
}

std::string GradCheckReport::to_text() const {
  std::ostringstream os;
  os.precision(6);
  os << "gradcheck h=" << h << " tolerance=" << tolerance << " min_logit_gap=" << min_logit_gap
     << " tie_adjacent=" << (tie_adjacent ? "yes" : "no") << "\n";
  for (const GradGroup& g : groups) {
    os << "group=" << g.name << " count=" << g.stats.count << " max_rel=" << g.stats.max_rel
       << " max_abs=" << g.stats.max_abs << " status=" << (g.pass ? "pass" : "FAIL") << "\n";
  }
  os << "result=" << (passed() ? "pass" : "FAIL") << "\n";
  return os.str();
}

GradCheckReport check_drconv_gradients(const DRConvLayer& layer, const Tensor4& x,
                                       const GradCheckOptions& options) {
  const double h = options.h;
  GradCheckReport report;
  report.h = h;
  report.tolerance = options.tolerance;

  DRConvForward fwd = drconv_forward(layer, x);
  const GuidedMask mask = fwd.ctx.mask().mask;
  const Tensor4 feature = fwd.ctx.mask().feature;
  const FilterBank bank = fwd.ctx.region().bank;
  const ConvSpec& spec = layer.spec;
  ConvSpec gspec = spec;
  gspec.out_channels = layer.m;
  report.min_logit_gap = min_top2_gap(feature);
  report.tie_adjacent = report.min_logit_gap < 10.0 * h;

  Tensor4 proj = Tensor4::zeros(fwd.y.shape());
  if (!options.zero_projection) {
    std::mt19937_64 rng(options.projection_seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    for (double& v : proj.data()) v = normal(rng);
  }

  const DRConvGrads g = options.backward ? options.backward(layer, fwd.ctx, proj)
                                         : drconv_backward(layer, fwd.ctx, proj);

  auto add_group = [&](std::string name, std::span<const double> analytic,
                       const std::vector<double>& numeric) {
    GradGroup grp{std::move(name), compare(analytic, numeric), false};
    grp.pass = grp.stats.max_rel < options.tolerance;
    report.groups.push_back(std::move(grp));
  };

  // Frozen-mask oracle: hard forward with the region assignment held fixed.
  {
    const Shape4 xs = x.shape();
    auto loss_x = [&](std::span<const double> t) {
      const Tensor4 xt = with_data(xs, t);
      return project(proj, naive_region_conv(xt, naive_generate_filters(xt, layer.generator),
                                             mask, spec));
    };
    const Tensor4 dx_hard = add(g.dx_main, g.dgen.dx);
    add_group("dX_main+gen", dx_hard.data(), finite_diff(loss_x, x.data(), h));

    auto loss_bank = [&](std::span<const double> t) {
      FilterBank b = bank;
      b.values.assign(t.begin(), t.end());
      return project(proj, naive_region_conv(x, b, mask, spec));
    };
    add_group("dBank", g.dbank.values, finite_diff(loss_bank, bank.values, h));

    const GeneratorParams& gp = layer.generator;
    std::vector<double> theta;
    theta.insert(theta.end(), gp.w1.begin(), gp.w1.end());
    theta.insert(theta.end(), gp.b1.begin(), gp.b1.end());
    theta.insert(theta.end(), gp.w2.begin(), gp.w2.end());
    auto loss_gen = [&](std::span<const double> t) {
      GeneratorParams p = gp;
      std::copy_n(t.begin(), p.w1.size(), p.w1.begin());
      std::copy_n(t.begin() + static_cast<std::ptrdiff_t>(p.w1.size()), p.b1.size(), p.b1.begin());
      std::copy_n(t.begin() + static_cast<std::ptrdiff_t>(p.w1.size() + p.b1.size()), p.w2.size(),
                  p.w2.begin());
      return project(proj, naive_region_conv(x, naive_generate_filters(x, p), mask, spec));
    };
    std::vector<double> analytic;
    analytic.insert(analytic.end(), g.dgen.dw1.begin(), g.dgen.dw1.end());
    analytic.insert(analytic.end(), g.dgen.db1.begin(), g.dgen.db1.end());
    analytic.insert(analytic.end(), g.dgen.dw2.begin(), g.dgen.dw2.end());
    add_group("dGenParams", analytic, finite_diff(loss_gen, theta, h));
  }

  // Relaxed oracle: softmax-weighted mixture of the region filters with the
  // bank held fixed.
  {
    std::vector<Tensor4> per_filter;
    for (std::size_t j = 0; j < layer.m; ++j) per_filter.push_back(single_filter_output(x, bank, j, spec));
    auto mixture = [&](const Tensor4& f) {
      const Tensor4 soft = naive_softmax(f);
      double acc = 0.0;
      const Shape4 s = f.shape();
      for (std::size_t n = 0; n < s.n; ++n)
        for (std::size_t u = 0; u < s.h; ++u)
          for (std::size_t v = 0; v < s.w; ++v)
            for (std::size_t j = 0; j < s.c; ++j) {
              double inner = 0.0;
              for (std::size_t o = 0; o < spec.out_channels; ++o)
                inner += proj(n, u, v, o) * per_filter[j](n, u, v, o);
              acc += soft(n, u, v, j) * inner;
            }
      return acc;
    };

    auto loss_f = [&](std::span<const double> t) { return mixture(with_data(feature.shape(), t)); };
    add_group("dF", g.dfeature.data(), finite_diff(loss_f, feature.data(), h));

    auto loss_guide = [&](std::span<const double> t) {
      StandardFilter gw = layer.guide;
      gw.weights.values.assign(t.begin(), t.end());
      return mixture(naive_conv2d(x, gw, gspec));
    };
    add_group("dGuideWeights", g.dguide.values,
              finite_diff(loss_guide, layer.guide.weights.values, h));

    auto loss_xg = [&](std::span<const double> t) {
      return mixture(naive_conv2d(with_data(x.shape(), t), layer.guide, gspec));
    };
    add_group("dX_guide", g.dx_guide.data(), finite_diff(loss_xg, x.data(), h));
  }
  return report;
}

}  // namespace drconv::verify
