#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "placerec/error.hpp"
#include "placerec/histogram.hpp"
#include "placerec/image.hpp"

namespace placerec {

inline constexpr std::size_t kDescriptorCells = 4;
inline constexpr std::size_t kOrientationBins = 8;
inline constexpr std::size_t kDescriptorDim = kDescriptorCells * kDescriptorCells * kOrientationBins;
inline constexpr double kDescriptorClip = 0.2;

/// Upright SIFT-like descriptor: 4x4 spatial cells x 8 orientation bins,
/// index (cell_y * 4 + cell_x) * 8 + bin.
using Descriptor = std::array<double, kDescriptorDim>;

struct DenseGrid {
  std::size_t patch_size = 16;
  std::size_t stride = 8;
};

/// Number of patches along one axis of length `extent`.
inline std::size_t grid_positions(std::size_t extent, const DenseGrid& g) {
  return extent < g.patch_size ? 0 : (extent - g.patch_size) / g.stride + 1;
}

inline Descriptor uniform_descriptor() {
  Descriptor d;
  d.fill(1.0 / std::sqrt(static_cast<double>(kDescriptorDim)));
  return d;
}

namespace detail {

/// L2 normalise, clip at kDescriptorClip, renormalise. Zero energy maps to the uniform descriptor.
inline void normalize_descriptor(Descriptor& d) {
  auto norm = [&d] {
    double s = 0.0;
    for (double v : d) s += v * v;
    return std::sqrt(s);
  };
  double n = norm();
  if (!(n > 1e-12)) {
    d = uniform_descriptor();
    return;
  }
  for (double& v : d) v = std::min(v / n, kDescriptorClip);
  n = norm();
  for (double& v : d) v /= n;
}

}  // namespace detail

/// One descriptor per grid position, row-major over patch origins. Gradients
/// are central differences with the border replicated.
inline std::vector<Descriptor> extract_dense_descriptors(const GrayImage& image, const DenseGrid& grid = {}) {
  if (grid.patch_size == 0 || grid.patch_size % kDescriptorCells != 0 || grid.stride == 0) {
    fail(ErrorKind::InvalidHyperparameter, "patch size must be a positive multiple of 4 and stride positive");
  }
  const std::size_t W = image.width;
  const std::size_t H = image.height;
  if (W < grid.patch_size || H < grid.patch_size) {
    fail(ErrorKind::ImageTooSmall, std::to_string(W) + "x" + std::to_string(H) + " image is smaller than a " +
                                       std::to_string(grid.patch_size) + "px patch");
  }
  for (double v : image.pixels) {
    if (!std::isfinite(v)) fail(ErrorKind::NonFiniteInput, "image contains a non-finite pixel");
  }

  // Per-pixel magnitude and fractional orientation bin.
  std::vector<double> magnitude(W * H);
  std::vector<double> bin(W * H);
  const double bin_width = 2.0 * std::numbers::pi / kOrientationBins;
  for (std::size_t y = 0; y < H; ++y) {
    for (std::size_t x = 0; x < W; ++x) {
      double gx = 0.5 * (image.at(x + 1 < W ? x + 1 : x, y) - image.at(x > 0 ? x - 1 : x, y));
      double gy = 0.5 * (image.at(x, y + 1 < H ? y + 1 : y) - image.at(x, y > 0 ? y - 1 : y));
      double angle = std::atan2(gy, gx);
      if (angle < 0) angle += 2.0 * std::numbers::pi;
      magnitude[y * W + x] = std::hypot(gx, gy);
      bin[y * W + x] = angle / bin_width;
    }
  }

  const std::size_t nx = grid_positions(W, grid);
  const std::size_t ny = grid_positions(H, grid);
  const std::size_t cell = grid.patch_size / kDescriptorCells;
  std::vector<Descriptor> out;
  out.reserve(nx * ny);
  for (std::size_t py = 0; py < ny; ++py) {
    for (std::size_t px = 0; px < nx; ++px) {
      Descriptor d{};
      const std::size_t x0 = px * grid.stride;
      const std::size_t y0 = py * grid.stride;
      for (std::size_t dy = 0; dy < grid.patch_size; ++dy) {
        for (std::size_t dx = 0; dx < grid.patch_size; ++dx) {
          const std::size_t i = (y0 + dy) * W + (x0 + dx);
          const double m = magnitude[i];
          if (m == 0.0) continue;
          const double b = bin[i];
          const double lo = std::floor(b);
          const double frac = b - lo;
          const std::size_t b0 = static_cast<std::size_t>(lo) % kOrientationBins;
          const std::size_t b1 = (b0 + 1) % kOrientationBins;
          const std::size_t base = ((dy / cell) * kDescriptorCells + dx / cell) * kOrientationBins;
          d[base + b0] += m * (1.0 - frac);
          d[base + b1] += m * frac;
        }
      }
      detail::normalize_descriptor(d);
      out.push_back(d);
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Codebook
// ---------------------------------------------------------------------------

struct Codebook {
  std::vector<Descriptor> centroids;
  std::uint64_t seed = 0;
  std::string source_manifest_hash;

  std::size_t size() const noexcept { return centroids.size(); }
  friend bool operator==(const Codebook&, const Codebook&) = default;
};

inline double squared_distance(const Descriptor& a, const Descriptor& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < kDescriptorDim; ++i) {
    double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

struct Nearest {
  std::size_t index = 0;
  double distance = 0.0;
};

/// Nearest centroid by squared Euclidean distance; ties go to the lowest index.
inline Nearest nearest_centroid(const Descriptor& d, std::span<const Descriptor> centroids) {
  Nearest best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t c = 0; c < centroids.size(); ++c) {
    const auto& centroid = centroids[c];
    double s = 0.0;
    std::size_t i = 0;
    for (; i < kDescriptorDim; ++i) {
      double diff = d[i] - centroid[i];
      s += diff * diff;
      if (s > best.distance) break;
    }
    if (i == kDescriptorDim && s < best.distance) best = {c, s};
  }
  return best;
}

struct KMeansOptions {
  std::size_t max_iterations = 100;
  double relative_tolerance = 1e-6;
};

struct KMeansResult {
  Codebook codebook;
  std::vector<double> distortion_trace;  // one entry per assignment step
};

/// Lloyd's k-means with k-means++ seeding. Single-threaded, fixed reduction
/// order, so the result is a pure function of (sample, Z, seed).
inline KMeansResult build_codebook(std::span<const Descriptor> sample, std::size_t Z, std::uint64_t seed,
                                   const KMeansOptions& opt = {}) {
  if (Z == 0) fail(ErrorKind::InvalidHyperparameter, "codebook size must be >= 1");
  if (sample.size() < Z) {
    fail(ErrorKind::TooFewSamples,
         std::to_string(sample.size()) + " descriptors cannot seed " + std::to_string(Z) + " words");
  }
  for (const auto& d : sample) {
    for (double v : d) {
      if (!std::isfinite(v)) fail(ErrorKind::NonFiniteInput, "descriptor sample contains a non-finite value");
    }
  }
  const std::size_t n = sample.size();
  std::mt19937_64 rng(seed);

  // k-means++ seeding.
  std::vector<Descriptor> centroids;
  centroids.reserve(Z);
  centroids.push_back(sample[std::uniform_int_distribution<std::size_t>(0, n - 1)(rng)]);
  std::vector<double> d2(n);
  for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(sample[i], centroids[0]);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (centroids.size() < Z) {
    double total = 0.0;
    for (double v : d2) total += v;
    if (!(total > 0.0)) {
      fail(ErrorKind::TooFewSamples, "sample has fewer than " + std::to_string(Z) + " distinct descriptors");
    }
    double target = unit(rng) * total;
    std::size_t pick = n;
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      acc += d2[i];
      if (d2[i] > 0.0 && acc >= target) {
        pick = i;
        break;
      }
    }
    if (pick == n) {  // rounding left target just above the running sum
      for (std::size_t i = n; i-- > 0;) {
        if (d2[i] > 0.0) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(sample[pick]);
    for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(sample[i], centroids.back()));
  }

  KMeansResult result;
  std::vector<std::size_t> assign(n);
  std::vector<double> dist(n);
  for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
    double distortion = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      auto nn = nearest_centroid(sample[i], centroids);
      assign[i] = nn.index;
      dist[i] = nn.distance;
      distortion += nn.distance;
    }
    result.distortion_trace.push_back(distortion);
    if (distortion == 0.0) break;
    if (iter > 0) {
      double prev = result.distortion_trace[iter - 1];
      if ((prev - distortion) <= opt.relative_tolerance * prev) break;
    }
    if (iter + 1 == opt.max_iterations) break;

    std::vector<Descriptor> sums(Z, Descriptor{});
    std::vector<std::size_t> members(Z, 0);
    for (std::size_t i = 0; i < n; ++i) {
      auto& s = sums[assign[i]];
      for (std::size_t j = 0; j < kDescriptorDim; ++j) s[j] += sample[i][j];
      ++members[assign[i]];
    }
    for (std::size_t c = 0; c < Z; ++c) {
      if (members[c] == 0) continue;
      for (std::size_t j = 0; j < kDescriptorDim; ++j) {
        centroids[c][j] = sums[c][j] / static_cast<double>(members[c]);
      }
    }
    // Empty clusters take the point currently farthest from its centroid.
    for (std::size_t c = 0; c < Z; ++c) {
      if (members[c] != 0) continue;
      std::size_t far = 0;
      for (std::size_t i = 1; i < n; ++i) {
        if (dist[i] > dist[far]) far = i;
      }
      centroids[c] = sample[far];
      dist[far] = 0.0;
    }
  }
  result.codebook.centroids = std::move(centroids);
  result.codebook.seed = seed;
  return result;
}

/// Word counts of an image's descriptors under `cb`.
inline BowHistogram quantize(std::span<const Descriptor> descs, const Codebook& cb) {
  if (cb.centroids.empty()) fail(ErrorKind::InvalidHyperparameter, "codebook is empty");
  if (descs.empty()) fail(ErrorKind::EmptyDescriptorList, "no descriptors to quantize");
  BowHistogram h;
  h.counts.assign(cb.size(), 0);
  for (const auto& d : descs) ++h.counts[nearest_centroid(d, cb.centroids).index];
  return h;
}

/// Uniform subsample (reservoir) of descriptors streamed from many images.
class DescriptorReservoir {
 public:
  DescriptorReservoir(std::size_t capacity, std::uint64_t seed) : capacity_(capacity), rng_(seed) {}

  void add(std::span<const Descriptor> descs) {
    for (const auto& d : descs) {
      ++seen_;
      if (kept_.size() < capacity_) {
        kept_.push_back(d);
      } else {
        std::uniform_int_distribution<std::uint64_t> pick(0, seen_ - 1);
        auto j = pick(rng_);
        if (j < capacity_) kept_[j] = d;
      }
    }
  }

  const std::vector<Descriptor>& sample() const noexcept { return kept_; }
  std::uint64_t seen() const noexcept { return seen_; }

 private:
  std::size_t capacity_;
  std::mt19937_64 rng_;
  std::vector<Descriptor> kept_;
  std::uint64_t seen_ = 0;
};

// ---------------------------------------------------------------------------
// Codebook file: JSON {format, Z, dim, seed, source_manifest_hash, centroids}
// ---------------------------------------------------------------------------

inline constexpr const char* kCodebookFormat = "placerec.codebook.v1";

inline nlohmann::json to_json(const Codebook& cb) {
  nlohmann::json j;
  j["format"] = kCodebookFormat;
  j["Z"] = cb.size();
  j["dim"] = kDescriptorDim;
  j["seed"] = cb.seed;
  j["source_manifest_hash"] = cb.source_manifest_hash;
  auto& rows = j["centroids"] = nlohmann::json::array();
  for (const auto& c : cb.centroids) rows.push_back(c);
  return j;
}

inline Codebook codebook_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != kCodebookFormat) fail(ErrorKind::ParseError, "not a codebook file");
    if (j.at("dim").get<std::size_t>() != kDescriptorDim) fail(ErrorKind::ParseError, "codebook dim must be 128");
    Codebook cb;
    cb.seed = j.at("seed").get<std::uint64_t>();
    cb.source_manifest_hash = j.at("source_manifest_hash").get<std::string>();
    for (const auto& row : j.at("centroids")) cb.centroids.push_back(row.get<Descriptor>());
    if (cb.centroids.size() != j.at("Z").get<std::size_t>() || cb.centroids.empty()) {
      fail(ErrorKind::ParseError, "codebook Z does not match its centroid count");
    }
    return cb;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("codebook: ") + e.what());
  }
}

inline Codebook read_codebook(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open codebook '" + path + "'");
  try {
    return codebook_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("codebook: ") + e.what());
  }
}

}  // namespace placerec
