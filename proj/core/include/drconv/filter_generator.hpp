#pragma once

#include <cstddef>
#include <vector>

#include "drconv/conv.hpp"
#include "drconv/tensor.hpp"

namespace drconv {

// Adaptive average pooling to out_h x out_w. Bin i covers input rows
// [floor(i*h/out_h), ceil((i+1)*h/out_h)), likewise for columns.
Tensor4 adaptive_avg_pool(const Tensor4& x, std::size_t out_h, std::size_t out_w);

// Spreads each bin gradient uniformly over its window.
Tensor4 adaptive_avg_pool_backward(const Tensor4& dpooled, const Shape4& input_shape);

// Parameters of the per-sample filter generator:
//   pooled = adaptive_avg_pool(x, k, k)
//   h1     = sigmoid(w1 * pooled + b1)              (1x1 conv, C -> hidden)
//   out    = grouped 1x1 conv(h1, w2), groups = m    (hidden -> m*O*C, no bias)
// and out(n,i,j, t*O*C + o*C + c) becomes bank(n, t, o, c, i, j). Group t of
// w2 (rows t*O*C .. (t+1)*O*C) produces exactly region filter t.
struct GeneratorParams {
  std::size_t in_channels = 1;   // C
  std::size_t out_channels = 1;  // O
  std::size_t k = 1;
  std::size_t m = 1;
  std::size_t hidden = 1;
  std::vector<double> w1;  // [hidden][C]
  std::vector<double> b1;  // [hidden]
  std::vector<double> w2;  // [m*O*C][hidden/m]

  static GeneratorParams zeros(std::size_t in_channels, std::size_t out_channels, std::size_t k,
                               std::size_t m, std::size_t hidden);

  std::size_t group_width() const noexcept { return hidden / m; }
  std::size_t out_rows() const noexcept { return m * out_channels * in_channels; }

  // Throws ConfigError when hidden is not a multiple of m or sizes disagree.
  void validate() const;

  bool operator==(const GeneratorParams&) const = default;
};

struct GeneratorContext {
  Shape4 input_shape;
  Tensor4 pooled;  // (n, k, k, C)
  Tensor4 hidden;  // sigmoid output, (n, k, k, hidden)
  GeneratorParams params;
};

struct GeneratorResult {
  FilterBank bank;
  GeneratorContext ctx;
};

GeneratorResult generate_filters_with_context(const Tensor4& x, const GeneratorParams& params);
FilterBank generate_filters(const Tensor4& x, const GeneratorParams& params);

struct GeneratorGrads {
  std::vector<double> dw1;
  std::vector<double> db1;
  std::vector<double> dw2;
  Tensor4 dx;
};

GeneratorGrads generator_backward(const GeneratorContext& ctx, const FilterBank& dbank);

}  // namespace drconv
