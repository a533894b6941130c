#include "drconv/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "drconv/errors.hpp"

namespace drconv {

namespace {

std::size_t checked_numel(const Shape4& s) {
  if (s.n == 0 || s.h == 0 || s.w == 0 || s.c == 0) {
    throw SizeError("tensor dimensions must be >= 1, got " + s.str());
  }
  constexpr std::size_t kMax = std::numeric_limits<std::size_t>::max() / sizeof(double);
  std::size_t total = 1;
  for (std::size_t d : {s.n, s.h, s.w, s.c}) {
    if (total > kMax / d) throw SizeError("tensor size overflows: " + s.str());
    total *= d;
  }
  return total;
}

void require_same_shape(const Tensor4& a, const Tensor4& b, const char* op) {
  if (a.shape() != b.shape()) {
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape().str() +
                     " vs " + b.shape().str());
  }
}

template <class Fn>
Tensor4 binary(const Tensor4& a, const Tensor4& b, const char* op, Fn fn) {
  require_same_shape(a, b, op);
  std::vector<double> out(a.size());
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = fn(x[i], y[i]);
  Tensor4 r(a.shape(), std::move(out));
  require_finite(r, op);
  return r;
}

long wrap(long v, long n) {
  long r = v % n;
  return r < 0 ? r + n : r;
}

}  // namespace

std::string Shape4::str() const {
  std::ostringstream os;
  os << "(" << n << "," << h << "," << w << "," << c << ")";
  return os.str();
}

Tensor4::Tensor4() : shape_{1, 1, 1, 1}, data_(1, 0.0) {}

Tensor4::Tensor4(Shape4 shape, std::vector<double> data)
    : shape_(shape), data_(std::move(data)) {
  if (data_.size() != checked_numel(shape_)) {
    throw SizeError("tensor data length " + std::to_string(data_.size()) +
                    " does not match shape " + shape_.str());
  }
}

Tensor4 Tensor4::zeros(Shape4 shape) {
  return Tensor4(shape, std::vector<double>(checked_numel(shape), 0.0));
}

Tensor4 Tensor4::filled(Shape4 shape, double value) {
  return Tensor4(shape, std::vector<double>(checked_numel(shape), value));
}

double Tensor4::at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const {
  if (n >= shape_.n || h >= shape_.h || w >= shape_.w || c >= shape_.c) {
    throw IndexError("tensor index out of range for shape " + shape_.str());
  }
  return (*this)(n, h, w, c);
}

Tensor4 Tensor4::sample(std::size_t n) const {
  if (n >= shape_.n) throw IndexError("sample index out of range");
  const std::size_t stride = shape_.h * shape_.w * shape_.c;
  std::vector<double> out(data_.begin() + static_cast<std::ptrdiff_t>(n * stride),
                          data_.begin() + static_cast<std::ptrdiff_t>((n + 1) * stride));
  return Tensor4({1, shape_.h, shape_.w, shape_.c}, std::move(out));
}

IndexMap::IndexMap(std::size_t n, std::size_t h, std::size_t w, std::int32_t fill)
    : n_(n), h_(h), w_(w), values_(n * h * w, fill) {}

IndexMap::IndexMap(std::size_t n, std::size_t h, std::size_t w,
                   std::vector<std::int32_t> values)
    : n_(n), h_(h), w_(w), values_(std::move(values)) {
  if (values_.size() != n * h * w) {
    throw SizeError("index map length does not match its dimensions");
  }
}

std::int32_t IndexMap::max_value() const noexcept {
  if (values_.empty()) return -1;
  return *std::max_element(values_.begin(), values_.end());
}

void require_finite(const Tensor4& t, const char* where) {
  for (double v : t.data()) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string(where) + ": non-finite value produced");
    }
  }
}

Tensor4 add(const Tensor4& a, const Tensor4& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor4 sub(const Tensor4& a, const Tensor4& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor4 mul(const Tensor4& a, const Tensor4& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor4 scale(const Tensor4& a, double s) {
  std::vector<double> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * s;
  Tensor4 r(a.shape(), std::move(out));
  require_finite(r, "scale");
  return r;
}

double sigmoid(double x) noexcept {
  // Split on sign so exp never overflows.
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

Tensor4 sigmoid(const Tensor4& a) {
  std::vector<double> out(a.size());
  auto x = a.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = sigmoid(x[i]);
  return Tensor4(a.shape(), std::move(out));
}

Tensor4 sum_channels(const Tensor4& a) {
  const auto& s = a.shape();
  Tensor4 r = Tensor4::zeros({s.n, s.h, s.w, 1});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x) {
        double acc = 0.0;
        for (double v : a.pixel(n, y, x)) acc += v;
        r(n, y, x, 0) = acc;
      }
  return r;
}

Tensor4 mean_channels(const Tensor4& a) {
  return scale(sum_channels(a), 1.0 / static_cast<double>(a.shape().c));
}

Tensor4 sum_spatial(const Tensor4& a) {
  const auto& s = a.shape();
  Tensor4 r = Tensor4::zeros({s.n, 1, 1, s.c});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x)
        for (std::size_t c = 0; c < s.c; ++c) r(n, 0, 0, c) += a(n, y, x, c);
  return r;
}

Tensor4 mean_spatial(const Tensor4& a) {
  return scale(sum_spatial(a), 1.0 / static_cast<double>(a.shape().h * a.shape().w));
}

IndexMap argmax_channels(const Tensor4& a) {
  const auto& s = a.shape();
  IndexMap r(s.n, s.h, s.w);
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x) {
        auto px = a.pixel(n, y, x);
        std::size_t best = 0;
        for (std::size_t c = 1; c < px.size(); ++c) {
          if (px[c] > px[best]) best = c;
        }
        r(n, y, x) = static_cast<std::int32_t>(best);
      }
  return r;
}

double sum(const Tensor4& a) noexcept {
  double acc = 0.0;
  for (double v : a.data()) acc += v;
  return acc;
}

double dot(const Tensor4& a, const Tensor4& b) {
  require_same_shape(a, b, "dot");
  double acc = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) acc += x[i] * y[i];
  return acc;
}

double max_abs_diff(const Tensor4& a, const Tensor4& b) {
  require_same_shape(a, b, "max_abs_diff");
  double m = 0.0;
  auto x = a.data();
  auto y = b.data();
  for (std::size_t i = 0; i < x.size(); ++i) m = std::max(m, std::abs(x[i] - y[i]));
  return m;
}

Tensor4 pad_zero(const Tensor4& a, std::size_t pad_h, std::size_t pad_w) {
  const auto& s = a.shape();
  Tensor4 r = Tensor4::zeros({s.n, s.h + 2 * pad_h, s.w + 2 * pad_w, s.c});
  for (std::size_t n = 0; n < s.n; ++n)
    for (std::size_t y = 0; y < s.h; ++y)
      for (std::size_t x = 0; x < s.w; ++x) {
        auto src = a.pixel(n, y, x);
        std::copy(src.begin(), src.end(), r.pixel(n, y + pad_h, x + pad_w).begin());
      }
  return r;
}

Tensor4 circular_shift(const Tensor4& a, long dy, long dx) {
  const auto& s = a.shape();
  const long h = static_cast<long>(s.h);
  const long w = static_cast<long>(s.w);
  Tensor4 r = Tensor4::zeros(s);
  for (std::size_t n = 0; n < s.n; ++n)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        auto src = a.pixel(n, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
        auto dst = r.pixel(n, static_cast<std::size_t>(wrap(y + dy, h)),
                           static_cast<std::size_t>(wrap(x + dx, w)));
        std::copy(src.begin(), src.end(), dst.begin());
      }
  return r;
}

IndexMap circular_shift(const IndexMap& a, long dy, long dx) {
  const long h = static_cast<long>(a.h());
  const long w = static_cast<long>(a.w());
  IndexMap r(a.n(), a.h(), a.w());
  for (std::size_t n = 0; n < a.n(); ++n)
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        r(n, static_cast<std::size_t>(wrap(y + dy, h)),
          static_cast<std::size_t>(wrap(x + dx, w))) =
            a(n, static_cast<std::size_t>(y), static_cast<std::size_t>(x));
      }
  return r;
}

}  // namespace drconv
