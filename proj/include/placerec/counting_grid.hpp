#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "placerec/error.hpp"
#include "placerec/histogram.hpp"
#include "placerec/matrix.hpp"
#include "placerec/numeric.hpp"

namespace placerec {

struct GridShape {
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::size_t area() const noexcept { return rows * cols; }
  friend bool operator==(const GridShape&, const GridShape&) = default;
};

/// Toroidal grid of word distributions. A bag placed at location l draws its
/// words from the average of the cells in the window anchored at l:
///
///   h_l(z) = 1/|W| * sum_{(a,b) < W} pi_{(l.r + a) mod E1, (l.c + b) mod E2}(z)
///
/// EM (uniform location prior):
///   q(l | d)    proportional to exp(sum_z c_dz log h_l(z))
///   pi_i(z)    <- pi_i(z) * sum_d c_dz * sum_{l : i in W_l} q(l | d) / h_l(z),
///                 plus 1e-10, then renormalised per cell.
struct CountingGrid {
  GridShape grid;
  GridShape window;
  Matrix<double> pi;  // grid.area() x Z, cell index = row * grid.cols + col

  std::size_t vocabulary_size() const noexcept { return pi.cols(); }
  double capacity() const noexcept {
    return static_cast<double>(grid.area()) / static_cast<double>(window.area());
  }
  friend bool operator==(const CountingGrid&, const CountingGrid&) = default;
};

struct CountingGridOptions {
  GridShape grid{24, 24};
  GridShape window{5, 5};
  std::size_t em_iterations = 100;
  double tolerance = 1e-7;  // relative log-likelihood change
  double smoothing = 1e-10;
  double jitter = 1e-2;
};

struct CountingGridFit {
  CountingGrid model;
  std::vector<double> loglik_trace;  // data log-likelihood before each M-step
};

namespace detail {

/// out(l) = sum over the window anchored at l of in(l + offset), toroidally.
/// With `backward` the window extends in the negative direction instead,
/// which is the adjoint used by the M-step.
inline Matrix<double> window_sum(const Matrix<double>& in, GridShape grid, GridShape window, bool backward) {
  const std::size_t Z = in.cols();
  Matrix<double> tmp(in.rows(), Z, 0.0), out(in.rows(), Z, 0.0);
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      auto dst = tmp.row(r * grid.cols + c);
      for (std::size_t b = 0; b < window.cols; ++b) {
        const std::size_t cc = backward ? (c + grid.cols - b) % grid.cols : (c + b) % grid.cols;
        auto src = in.row(r * grid.cols + cc);
        for (std::size_t z = 0; z < Z; ++z) dst[z] += src[z];
      }
    }
  }
  for (std::size_t r = 0; r < grid.rows; ++r) {
    for (std::size_t c = 0; c < grid.cols; ++c) {
      auto dst = out.row(r * grid.cols + c);
      for (std::size_t a = 0; a < window.rows; ++a) {
        const std::size_t rr = backward ? (r + grid.rows - a) % grid.rows : (r + a) % grid.rows;
        auto src = tmp.row(rr * grid.cols + c);
        for (std::size_t z = 0; z < Z; ++z) dst[z] += src[z];
      }
    }
  }
  return out;
}

inline void check_shapes(GridShape grid, GridShape window) {
  if (grid.rows == 0 || grid.cols == 0 || window.rows == 0 || window.cols == 0) {
    fail(ErrorKind::InvalidHyperparameter, "grid and window dimensions must be positive");
  }
  if (window.rows > grid.rows || window.cols > grid.cols) {
    fail(ErrorKind::WindowLargerThanGrid, "window " + std::to_string(window.rows) + "x" +
                                              std::to_string(window.cols) + " exceeds grid " +
                                              std::to_string(grid.rows) + "x" + std::to_string(grid.cols));
  }
}

/// Per-location log of the window-averaged distributions.
inline Matrix<double> log_window_distributions(const CountingGrid& m) {
  auto h = window_sum(m.pi, m.grid, m.window, false);
  const double inv = 1.0 / static_cast<double>(m.window.area());
  for (auto& v : h.flat()) v = std::log(v * inv);
  return h;
}

inline void location_logliks(const Matrix<double>& log_h, const SparseCounts& doc, std::span<double> out) {
  for (std::size_t l = 0; l < log_h.rows(); ++l) {
    auto row = log_h.row(l);
    double s = 0.0;
    for (std::size_t n = 0; n < doc.words.size(); ++n) s += doc.counts[n] * row[doc.words[n]];
    out[l] = s;
  }
}

}  // namespace detail

/// Window-averaged distribution h_l for every location (grid.area() x Z).
inline Matrix<double> window_distributions(const CountingGrid& m) {
  auto h = detail::window_sum(m.pi, m.grid, m.window, false);
  const double inv = 1.0 / static_cast<double>(m.window.area());
  for (auto& v : h.flat()) v *= inv;
  return h;
}

/// Scorer with the per-location log distributions computed once.
class CountingGridScorer {
 public:
  explicit CountingGridScorer(const CountingGrid& m) : log_h_(detail::log_window_distributions(m)) {}

  /// log sum_l (1/|E|) exp(sum_z c_z log h_l(z)): exact marginal over locations.
  double operator()(const BowHistogram& h) const {
    if (h.counts.size() != log_h_.cols()) fail(ErrorKind::DimensionMismatch, "vocabulary size mismatch");
    std::vector<double> ll(log_h_.rows());
    detail::location_logliks(log_h_, SparseCounts::from(h), ll);
    return log_sum_exp(ll) - std::log(static_cast<double>(log_h_.rows()));
  }

 private:
  Matrix<double> log_h_;
};

inline double counting_grid_score(const CountingGrid& m, const BowHistogram& h) {
  return CountingGridScorer(m)(h);
}

inline CountingGridFit fit_counting_grid(std::span<const BowHistogram> hists, const CountingGridOptions& opt,
                                         std::uint64_t seed) {
  detail::check_shapes(opt.grid, opt.window);
  if (hists.empty()) fail(ErrorKind::NoData, "counting grid needs at least one histogram");
  const std::size_t Z = hists.front().counts.size();
  const std::size_t L = opt.grid.area();

  std::vector<SparseCounts> docs;
  docs.reserve(hists.size());
  for (const auto& h : hists) {
    if (h.counts.size() != Z) fail(ErrorKind::DimensionMismatch, "histograms differ in vocabulary size");
    docs.push_back(SparseCounts::from(h));
  }

  CountingGridFit fit;
  CountingGrid& m = fit.model;
  m.grid = opt.grid;
  m.window = opt.window;
  m.pi = Matrix<double>(L, Z);
  {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t i = 0; i < L; ++i) {
      double sum = 0.0;
      for (auto& v : m.pi.row(i)) {
        v = 1.0 + opt.jitter * unit(rng);
        sum += v;
      }
      for (auto& v : m.pi.row(i)) v /= sum;
    }
  }

  const double log_locations = std::log(static_cast<double>(L));
  const double inv_window = 1.0 / static_cast<double>(m.window.area());
  std::vector<double> ll(L);
  Matrix<double> ratio(L, Z);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(opt.em_iterations, 1); ++iter) {
    auto h = window_distributions(m);
    Matrix<double> log_h(L, Z);
    for (std::size_t i = 0; i < h.flat().size(); ++i) log_h.flat()[i] = std::log(h.flat()[i]);

    // E-step, accumulating ratio(l, z) = sum_d c_dz q(l|d) / h_l(z).
    for (auto& v : ratio.flat()) v = 0.0;
    double loglik = 0.0;
    for (const auto& doc : docs) {
      detail::location_logliks(log_h, doc, ll);
      const double lse = log_sum_exp(ll);
      loglik += lse - log_locations;
      for (std::size_t l = 0; l < L; ++l) {
        const double q = std::exp(ll[l] - lse);
        if (q == 0.0) continue;
        for (std::size_t n = 0; n < doc.words.size(); ++n) {
          ratio(l, doc.words[n]) += doc.counts[n] * q / h(l, doc.words[n]);
        }
      }
    }
    fit.loglik_trace.push_back(loglik);
    if (iter > 0) {
      const double prev = fit.loglik_trace[iter - 1];
      if (std::abs(loglik - prev) <= opt.tolerance * std::abs(prev)) break;
    }
    if (iter + 1 == opt.em_iterations) break;

    // M-step: each cell collects the ratio from every window that covers it.
    auto back = detail::window_sum(ratio, m.grid, m.window, true);
    for (std::size_t i = 0; i < L; ++i) {
      auto cell = m.pi.row(i);
      auto acc = back.row(i);
      double sum = 0.0;
      for (std::size_t z = 0; z < Z; ++z) {
        cell[z] = cell[z] * acc[z] * inv_window + opt.smoothing;
        sum += cell[z];
      }
      for (auto& v : cell) v /= sum;
    }
  }
  return fit;
}

}  // namespace placerec
