#include "drconv/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <iterator>
#include <numbers>
#include <random>

#include "drconv/errors.hpp"

namespace drconv {

namespace {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open '" + path + "'");
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off) {
  return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) |
         (std::uint32_t{b[off + 2]} << 8) | std::uint32_t{b[off + 3]};
}

void write_be32(std::ofstream& out, std::uint32_t v) {
  const std::array<char, 4> b{static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                              static_cast<char>(v >> 8), static_cast<char>(v)};
  out.write(b.data(), 4);
}

void require_magic(const std::vector<std::uint8_t>& b, std::uint8_t type, std::uint8_t dims,
                   const std::string& path) {
  if (b.size() < 4 || b[0] != 0 || b[1] != 0 || b[2] != type || b[3] != dims) {
    throw FormatError("'" + path + "' is not an IDX file of the expected kind (bad magic)");
  }
}

}  // namespace

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  const Shape4 s = images.shape();
  const std::size_t stride = s.h * s.w * s.c;
  std::vector<double> data(indices.size() * stride);
  Dataset out;
  out.classes = classes;
  out.labels.reserve(indices.size());
  std::vector<std::int32_t> region_values;
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= size()) throw IndexError("Dataset::subset: index out of range");
    std::copy_n(images.data().begin() + static_cast<std::ptrdiff_t>(src * stride), stride,
                data.begin() + static_cast<std::ptrdiff_t>(i * stride));
    out.labels.push_back(labels[src]);
    if (regions) {
      auto v = regions->values().subspan(src * s.h * s.w, s.h * s.w);
      region_values.insert(region_values.end(), v.begin(), v.end());
    }
  }
  out.images = Tensor4({indices.size(), s.h, s.w, s.c}, std::move(data));
  if (regions) out.regions = IndexMap(indices.size(), s.h, s.w, std::move(region_values));
  return out;
}

Dataset Dataset::slice(std::size_t begin, std::size_t end) const {
  if (begin >= end || end > size()) throw IndexError("Dataset::slice: bad range");
  std::vector<std::size_t> idx(end - begin);
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = begin + i;
  return subset(idx);
}

void Dataset::validate() const {
  if (labels.size() != images.shape().n) {
    throw ConsistencyError("dataset has " + std::to_string(images.shape().n) + " images but " +
                           std::to_string(labels.size()) + " labels");
  }
  for (int l : labels) {
    if (l < 0 || static_cast<std::size_t>(l) >= classes) {
      throw ConsistencyError("label " + std::to_string(l) + " outside [0, " +
                             std::to_string(classes) + ")");
    }
  }
  if (regions && (regions->n() != images.shape().n || regions->h() != images.shape().h ||
                  regions->w() != images.shape().w)) {
    throw ConsistencyError("region map does not match the images");
  }
  require_finite(images, "dataset images");
}

Dataset load_idx(const std::string& images_path, const std::string& labels_path,
                 std::size_t classes) {
  const auto ib = read_file(images_path);
  require_magic(ib, 0x08, 0x03, images_path);
  if (ib.size() < 16) throw FormatError("'" + images_path + "': truncated IDX header");
  const std::size_t count = read_be32(ib, 4);
  const std::size_t rows = read_be32(ib, 8);
  const std::size_t cols = read_be32(ib, 12);
  if (count == 0 || rows == 0 || cols == 0) {
    throw FormatError("'" + images_path + "': zero-sized IDX dimension");
  }
  if (ib.size() != 16 + count * rows * cols) {
    throw FormatError("'" + images_path + "': payload is " + std::to_string(ib.size() - 16) +
                      " bytes, header promises " + std::to_string(count * rows * cols));
  }

  const auto lb = read_file(labels_path);
  require_magic(lb, 0x08, 0x01, labels_path);
  if (lb.size() < 8) throw FormatError("'" + labels_path + "': truncated IDX header");
  const std::size_t label_count = read_be32(lb, 4);
  if (lb.size() != 8 + label_count) {
    throw FormatError("'" + labels_path + "': payload does not match the label count");
  }
  if (label_count != count) {
    throw ConsistencyError("IDX image count " + std::to_string(count) +
                           " differs from label count " + std::to_string(label_count));
  }

  Dataset d;
  std::vector<double> pixels(count * rows * cols);
  for (std::size_t i = 0; i < pixels.size(); ++i) pixels[i] = ib[16 + i] / 255.0;
  d.images = Tensor4({count, rows, cols, 1}, std::move(pixels));
  d.labels.resize(count);
  int top = 0;
  for (std::size_t i = 0; i < count; ++i) {
    d.labels[i] = lb[8 + i];
    top = std::max(top, d.labels[i]);
  }
  d.classes = classes != 0 ? classes : std::max<std::size_t>(2, static_cast<std::size_t>(top) + 1);
  d.validate();
  return d;
}

void save_idx(const Dataset& data, const std::string& images_path,
              const std::string& labels_path) {
  const Shape4 s = data.images.shape();
  if (s.c != 1) throw ShapeError("save_idx: IDX images must have one channel");
  std::ofstream img(images_path, std::ios::binary);
  if (!img) throw FormatError("cannot write '" + images_path + "'");
  img.write("\x00\x00\x08\x03", 4);
  write_be32(img, static_cast<std::uint32_t>(s.n));
  write_be32(img, static_cast<std::uint32_t>(s.h));
  write_be32(img, static_cast<std::uint32_t>(s.w));
  for (double v : data.images.data()) {
    const double q = std::round(std::clamp(v, 0.0, 1.0) * 255.0);
    img.put(static_cast<char>(static_cast<std::uint8_t>(q)));
  }
  std::ofstream lab(labels_path, std::ios::binary);
  if (!lab) throw FormatError("cannot write '" + labels_path + "'");
  lab.write("\x00\x00\x08\x01", 4);
  write_be32(lab, static_cast<std::uint32_t>(data.labels.size()));
  for (int l : data.labels) lab.put(static_cast<char>(static_cast<std::uint8_t>(l)));
  if (!img || !lab) throw FormatError("write failed for IDX output");
}

Dataset synth_region_dataset(std::size_t n, std::size_t h, std::size_t w, std::size_t classes,
                             std::uint64_t seed) {
  if (classes < 2) throw ConfigError("classes", "synthetic data needs at least 2 classes");
  if (n == 0 || h < 4 || w < 4) throw SizeError("synthetic dataset needs n >= 1 and h, w >= 4");

  // Brightness level and grating period go together: a region's level tells
  // which frequency its texture has.
  constexpr std::array<double, 4> kLevel{0.15, 0.38, 0.62, 0.85};
  constexpr std::array<double, 4> kPeriod{3.0, 4.0, 5.5, 7.5};
  constexpr double kAmplitude = 0.1;
  constexpr double kNoise = 0.03;
  const double pi = std::numbers::pi;

  std::mt19937_64 rng(seed);
  Dataset d;
  d.classes = classes;
  d.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) d.labels[i] = static_cast<int>(i % classes);
  std::shuffle(d.labels.begin(), d.labels.end(), rng);

  std::vector<double> pixels(n * h * w, 0.0);
  std::vector<std::int32_t> region_values(n * h * w, 0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, kNoise);
  std::uniform_int_distribution<int> region_count(2, 4);

  for (std::size_t s = 0; s < n; ++s) {
    const int regions = region_count(rng);
    std::array<double, 4> sy{}, sx{}, phase{};
    std::array<int, 4> level{0, 1, 2, 3};
    std::shuffle(level.begin(), level.end(), rng);
    for (int r = 0; r < regions; ++r) {
      sy[r] = unit(rng) * static_cast<double>(h);
      sx[r] = unit(rng) * static_cast<double>(w);
      phase[r] = unit(rng) * 2.0 * pi;
    }
    const double jitter = (unit(rng) - 0.5) * pi / (2.0 * static_cast<double>(classes));
    const double theta = pi * d.labels[s] / static_cast<double>(classes) + jitter;
    const double ct = std::cos(theta);
    const double st = std::sin(theta);
    for (std::size_t y = 0; y < h; ++y)
      for (std::size_t x = 0; x < w; ++x) {
        int best = 0;
        double best_d = 1e300;
        for (int r = 0; r < regions; ++r) {
          const double dy = static_cast<double>(y) + 0.5 - sy[r];
          const double dx = static_cast<double>(x) + 0.5 - sx[r];
          const double dist = dy * dy + dx * dx;
          if (dist < best_d) {
            best_d = dist;
            best = r;
          }
        }
        const auto lv = static_cast<std::size_t>(level[best]);
        const double t = static_cast<double>(x) * ct + static_cast<double>(y) * st;
        const double v = kLevel[lv] + kAmplitude * std::sin(2.0 * pi * t / kPeriod[lv] + phase[best]) +
                         noise(rng);
        const std::size_t off = (s * h + y) * w + x;
        pixels[off] = std::clamp(v, 0.0, 1.0);
        region_values[off] = best;
      }
  }
  d.images = Tensor4({n, h, w, 1}, std::move(pixels));
  d.regions = IndexMap(n, h, w, std::move(region_values));
  return d;
}

}  // namespace drconv
