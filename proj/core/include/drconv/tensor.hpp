#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace drconv {

struct Shape4 {
  std::size_t n = 0;
  std::size_t h = 0;
  std::size_t w = 0;
  std::size_t c = 0;

  bool operator==(const Shape4&) const = default;

  std::size_t numel() const noexcept { return n * h * w * c; }
  std::string str() const;
};

// Dense [n][h][w][c] row-major array of doubles. Channels are innermost so a
// pixel's channel vector is contiguous.
class Tensor4 {
 public:
  // A 1x1x1x1 zero tensor.
  Tensor4();
  // Takes ownership of `data`; throws SizeError if the length disagrees with
  // the shape or any dimension is zero.
  Tensor4(Shape4 shape, std::vector<double> data);

  static Tensor4 zeros(Shape4 shape);
  static Tensor4 filled(Shape4 shape, double value);

  const Shape4& shape() const noexcept { return shape_; }
  std::size_t size() const noexcept { return data_.size(); }

  std::size_t offset(std::size_t n, std::size_t h, std::size_t w,
                     std::size_t c) const noexcept {
    return ((n * shape_.h + h) * shape_.w + w) * shape_.c + c;
  }

  double& operator()(std::size_t n, std::size_t h, std::size_t w,
                     std::size_t c) noexcept {
    return data_[offset(n, h, w, c)];
  }
  double operator()(std::size_t n, std::size_t h, std::size_t w,
                    std::size_t c) const noexcept {
    return data_[offset(n, h, w, c)];
  }

  // Bounds-checked access.
  double at(std::size_t n, std::size_t h, std::size_t w, std::size_t c) const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  // Channel vector at one pixel.
  std::span<double> pixel(std::size_t n, std::size_t h, std::size_t w) noexcept {
    return {data_.data() + offset(n, h, w, 0), shape_.c};
  }
  std::span<const double> pixel(std::size_t n, std::size_t h,
                                std::size_t w) const noexcept {
    return {data_.data() + offset(n, h, w, 0), shape_.c};
  }

  // One batch item as its own tensor.
  Tensor4 sample(std::size_t n) const;

  bool operator==(const Tensor4& other) const = default;

 private:
  Shape4 shape_;
  std::vector<double> data_;
};

// Per-pixel integer map [n][h][w], e.g. a channel argmax or a guided mask.
class IndexMap {
 public:
  IndexMap() = default;
  IndexMap(std::size_t n, std::size_t h, std::size_t w, std::int32_t fill = 0);
  IndexMap(std::size_t n, std::size_t h, std::size_t w,
           std::vector<std::int32_t> values);

  std::size_t n() const noexcept { return n_; }
  std::size_t h() const noexcept { return h_; }
  std::size_t w() const noexcept { return w_; }
  std::size_t size() const noexcept { return values_.size(); }

  std::int32_t& operator()(std::size_t n, std::size_t h, std::size_t w) noexcept {
    return values_[(n * h_ + h) * w_ + w];
  }
  std::int32_t operator()(std::size_t n, std::size_t h,
                          std::size_t w) const noexcept {
    return values_[(n * h_ + h) * w_ + w];
  }

  std::span<std::int32_t> values() noexcept { return values_; }
  std::span<const std::int32_t> values() const noexcept { return values_; }

  // Largest stored value, or -1 when empty.
  std::int32_t max_value() const noexcept;

  bool operator==(const IndexMap&) const = default;

 private:
  std::size_t n_ = 0;
  std::size_t h_ = 0;
  std::size_t w_ = 0;
  std::vector<std::int32_t> values_;
};

// Throws NumericError naming `where` if any element is NaN or infinite.
void require_finite(const Tensor4& t, const char* where);

Tensor4 add(const Tensor4& a, const Tensor4& b);
Tensor4 sub(const Tensor4& a, const Tensor4& b);
Tensor4 mul(const Tensor4& a, const Tensor4& b);
Tensor4 scale(const Tensor4& a, double s);
Tensor4 sigmoid(const Tensor4& a);

double sigmoid(double x) noexcept;

// Reductions. The channel forms return shape (n,h,w,1); the spatial forms
// return shape (n,1,1,c).
Tensor4 sum_channels(const Tensor4& a);
Tensor4 mean_channels(const Tensor4& a);
Tensor4 sum_spatial(const Tensor4& a);
Tensor4 mean_spatial(const Tensor4& a);

// Per-pixel argmax over channels; ties resolve to the smallest index.
IndexMap argmax_channels(const Tensor4& a);

double sum(const Tensor4& a) noexcept;
double dot(const Tensor4& a, const Tensor4& b);
double max_abs_diff(const Tensor4& a, const Tensor4& b);

// Zeros inserted symmetrically: result is (n, h+2*pad_h, w+2*pad_w, c).
Tensor4 pad_zero(const Tensor4& a, std::size_t pad_h, std::size_t pad_w);

// out(n, (y+dy) mod h, (x+dx) mod w, c) = a(n, y, x, c).
Tensor4 circular_shift(const Tensor4& a, long dy, long dx);
IndexMap circular_shift(const IndexMap& a, long dy, long dx);

}  // namespace drconv
