#include "drconv/mask_analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "drconv/errors.hpp"

namespace drconv {

std::vector<int> max_weight_assignment(const std::vector<double>& weights, std::size_t rows,
                                       std::size_t cols) {
  if (weights.size() != rows * cols) {
    throw ShapeError("max_weight_assignment: expected " + std::to_string(rows * cols) +
                     " weights, got " + std::to_string(weights.size()));
  }
  // Square minimisation problem on -weight, padded with zeros.
  const std::size_t n = std::max(rows, cols);
  const double inf = std::numeric_limits<double>::infinity();
  auto cost = [&](std::size_t r, std::size_t c) {
    return (r < rows && c < cols) ? -weights[r * cols + c] : 0.0;
  };
  // 1-based potentials; p[c] is the row matched to column c.
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<double> minv(n + 1, inf);
    std::vector<bool> used(n + 1, false);
    do {
      used[j0] = true;
      const std::size_t i0 = p[j0];
      double delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> result(rows, -1);
  for (std::size_t j = 1; j <= n; ++j) {
    const std::size_t r = p[j] - 1;
    if (r < rows && j - 1 < cols) result[r] = static_cast<int>(j - 1);
  }
  return result;
}

double matched_agreement(const IndexMap& mask, std::size_t mask_sample, const IndexMap& reference,
                         std::size_t ref_sample) {
  if (mask_sample >= mask.n() || ref_sample >= reference.n()) {
    throw IndexError("matched_agreement: sample index out of range");
  }
  const std::size_t h = mask.h();
  const std::size_t w = mask.w();
  const auto rows = static_cast<std::size_t>(std::max(mask.max_value(), 0)) + 1;
  const auto cols = static_cast<std::size_t>(std::max(reference.max_value(), 0)) + 1;
  std::vector<double> overlap(rows * cols, 0.0);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) {
      const std::size_t ry = y * reference.h() / h;
      const std::size_t rx = x * reference.w() / w;
      const auto a = static_cast<std::size_t>(mask(mask_sample, y, x));
      const auto b = static_cast<std::size_t>(reference(ref_sample, ry, rx));
      overlap[a * cols + b] += 1.0;
    }
  const std::vector<int> match = max_weight_assignment(overlap, rows, cols);
  double hits = 0.0;
  for (std::size_t r = 0; r < rows; ++r)
    if (match[r] >= 0) hits += overlap[r * cols + static_cast<std::size_t>(match[r])];
  return hits / static_cast<double>(h * w);
}

AgreementTest mask_agreement_test(const IndexMap& mask, const IndexMap& reference,
                                  std::size_t permutations, std::uint64_t seed) {
  const std::size_t n = mask.n();
  if (n < 2 || reference.n() != n) {
    throw ShapeError("mask_agreement_test: need at least two samples with matching references");
  }
  std::vector<double> pair(n * n, -1.0);
  auto score_of = [&](std::size_t a, std::size_t b) {
    double& s = pair[a * n + b];
    if (s < 0.0) s = matched_agreement(mask, a, reference, b);
    return s;
  };

  AgreementTest t;
  t.permutations = permutations;
  for (std::size_t i = 0; i < n; ++i) t.score += score_of(i, i);
  t.score /= static_cast<double>(n);

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> perm(n);
  std::vector<double> null;
  null.reserve(permutations);
  for (std::size_t k = 0; k < permutations; ++k) {
    // Shuffle, then rotate any fixed points away so every mask meets a
    // foreign reference.
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t i = 0; i < n; ++i)
      if (perm[i] == i) std::swap(perm[i], perm[(i + 1) % n]);
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += score_of(i, perm[i]);
    null.push_back(s / static_cast<double>(n));
  }
  if (!null.empty()) {
    t.null_mean = std::accumulate(null.begin(), null.end(), 0.0) / static_cast<double>(null.size());
    std::sort(null.begin(), null.end());
    const auto idx = static_cast<std::size_t>(std::ceil(0.95 * static_cast<double>(null.size()))) - 1;
    t.null_p95 = null[std::min(idx, null.size() - 1)];
  }
  return t;
}

std::array<std::uint8_t, 3> palette_color(std::size_t index, std::size_t m) {
  if (m == 0 || index >= m) throw IndexError("palette_color: index outside [0, m)");
  const double hue = 6.0 * static_cast<double>(index) / static_cast<double>(m);
  const auto sector = static_cast<int>(std::floor(hue));
  const double f = hue - sector;
  const double q = 1.0 - f;
  double r = 0, g = 0, b = 0;
  switch (sector % 6) {
    case 0: r = 1; g = f; b = 0; break;
    case 1: r = q; g = 1; b = 0; break;
    case 2: r = 0; g = 1; b = f; break;
    case 3: r = 0; g = q; b = 1; break;
    case 4: r = f; g = 0; b = 1; break;
    default: r = 1; g = 0; b = q; break;
  }
  auto byte = [](double c) { return static_cast<std::uint8_t>(std::lround(255.0 * c)); };
  return {byte(r), byte(g), byte(b)};
}

std::string encode_ppm(const IndexMap& mask, std::size_t sample, std::size_t m) {
  if (sample >= mask.n()) throw IndexError("encode_ppm: sample index out of range");
  std::string out = "P6\n" + std::to_string(mask.w()) + " " + std::to_string(mask.h()) + "\n255\n";
  out.reserve(out.size() + mask.h() * mask.w() * 3);
  for (std::size_t y = 0; y < mask.h(); ++y)
    for (std::size_t x = 0; x < mask.w(); ++x) {
      const auto c = palette_color(static_cast<std::size_t>(mask(sample, y, x)), m);
      out.append(reinterpret_cast<const char*>(c.data()), 3);
    }
  return out;
}

std::string encode_index_grid(const IndexMap& mask, std::size_t sample, std::size_t m) {
  if (sample >= mask.n()) throw IndexError("encode_index_grid: sample index out of range");
  std::ostringstream os;
  os << "P2\n" << mask.w() << " " << mask.h() << "\n" << std::max<std::size_t>(m, 2) - 1 << "\n";
  for (std::size_t y = 0; y < mask.h(); ++y) {
    for (std::size_t x = 0; x < mask.w(); ++x) os << (x ? " " : "") << mask(sample, y, x);
    os << "\n";
  }
  return os.str();
}

}  // namespace drconv
