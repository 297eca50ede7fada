#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "placerec/error.hpp"
#include "placerec/histogram.hpp"
#include "placerec/matrix.hpp"
#include "placerec/numeric.hpp"

namespace placerec {

struct DirichletMixture {
  std::vector<double> weights;             // M, on the simplex
  std::vector<std::vector<double>> alphas;  // M x Z, strictly positive
  double eps_smooth = 0.0;                 // pseudo-count used to map histograms into the open simplex

  std::size_t components() const noexcept { return weights.size(); }
  std::size_t vocabulary_size() const noexcept { return alphas.empty() ? 0 : alphas.front().size(); }
  friend bool operator==(const DirichletMixture&, const DirichletMixture&) = default;
};

struct DirichletMixtureOptions {
  std::size_t components = 3;
  std::size_t max_iterations = 200;
  double tolerance = 1e-8;      // relative log-likelihood change
  double eps_smooth = 0.0;      // 0 selects 0.5 / Z
  std::size_t mle_max_iterations = 1000;
  double mle_tolerance = 1e-10;
};

struct DirichletMixtureFit {
  DirichletMixture model;
  std::vector<double> loglik_trace;  // mixture log-likelihood before each M-step
};

/// (counts + eps) / (N + Z eps): an interior point of the simplex.
inline std::vector<double> simplex_point(const BowHistogram& h, double eps) {
  const double denom = static_cast<double>(h.total()) + eps * static_cast<double>(h.counts.size());
  std::vector<double> p(h.counts.size());
  for (std::size_t z = 0; z < p.size(); ++z) p[z] = (h.counts[z] + eps) / denom;
  return p;
}

/// log Dir(p; alpha) given log p.
inline double dirichlet_log_pdf(std::span<const double> alpha, std::span<const double> log_p) {
  double sum_alpha = 0.0;
  double out = 0.0;
  for (std::size_t k = 0; k < alpha.size(); ++k) {
    sum_alpha += alpha[k];
    out += (alpha[k] - 1.0) * log_p[k] - std::lgamma(alpha[k]);
  }
  return out + std::lgamma(sum_alpha);
}

/// Maximum-likelihood Dirichlet from sufficient statistics mean_log[k] = E[log p_k],
/// by the fixed point psi(alpha_k) = psi(sum alpha) + mean_log[k]. Each step
/// increases the likelihood, so `init` can be a warm start.
inline std::vector<double> dirichlet_mle(std::span<const double> mean_log, std::vector<double> alpha,
                                         std::size_t max_iterations = 1000, double tolerance = 1e-10) {
  for (std::size_t it = 0; it < max_iterations; ++it) {
    const double psi_sum = digamma(std::accumulate(alpha.begin(), alpha.end(), 0.0));
    double change = 0.0;
    for (std::size_t k = 0; k < alpha.size(); ++k) {
      const double next = inverse_digamma(psi_sum + mean_log[k]);
      change = std::max(change, std::abs(next - alpha[k]) / alpha[k]);
      alpha[k] = next;
    }
    for (double a : alpha) {
      if (!std::isfinite(a) || !(a > 0.0) || a > 1e12) {
        fail(ErrorKind::DegenerateComponent, "Dirichlet MLE diverged");
      }
    }
    if (change < tolerance) break;
  }
  return alpha;
}

namespace detail {

/// Moment-matching starting point: alpha = mean * precision.
inline std::vector<double> dirichlet_moment_init(const Matrix<double>& points, std::span<const double> w) {
  const std::size_t Z = points.cols();
  const double total = std::accumulate(w.begin(), w.end(), 0.0);
  std::vector<double> mean(Z, 0.0), second(Z, 0.0);
  for (std::size_t i = 0; i < points.rows(); ++i) {
    for (std::size_t z = 0; z < Z; ++z) {
      mean[z] += w[i] * points(i, z);
      second[z] += w[i] * points(i, z) * points(i, z);
    }
  }
  std::vector<double> precisions;
  for (std::size_t z = 0; z < Z; ++z) {
    mean[z] /= total;
    second[z] /= total;
    const double var = second[z] - mean[z] * mean[z];
    if (var > 1e-300) precisions.push_back(mean[z] * (1.0 - mean[z]) / var - 1.0);
  }
  double s = 1.0;
  if (!precisions.empty()) {
    std::nth_element(precisions.begin(), precisions.begin() + precisions.size() / 2, precisions.end());
    s = precisions[precisions.size() / 2];
  }
  if (!(s > 0.0) || !std::isfinite(s)) s = 1.0;
  std::vector<double> alpha(Z);
  for (std::size_t z = 0; z < Z; ++z) alpha[z] = std::max(mean[z] * s, 1e-6);
  return alpha;
}

/// Rows of log p; the fit works on these directly.
inline DirichletMixtureFit fit_dirichlet_mixture_log_points(const Matrix<double>& points, const Matrix<double>& log_p,
                                                            const DirichletMixtureOptions& opt, std::uint64_t seed) {
  const std::size_t n = points.rows();
  const std::size_t Z = points.cols();
  const std::size_t M = opt.components;
  if (M == 0) fail(ErrorKind::InvalidHyperparameter, "mixture needs at least one component");
  if (n < M) {
    fail(ErrorKind::TooFewHistograms, std::to_string(n) + " samples for " + std::to_string(M) + " components");
  }

  // Half hard assignment to M random seed points, half uniform: every
  // component starts with positive weight on every sample.
  Matrix<double> resp(n, M, 0.5 / static_cast<double>(M));
  {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::mt19937_64 rng(seed);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n; ++i) {
      std::size_t best = 0;
      double best_d = std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < M; ++j) {
        double d = 0.0;
        for (std::size_t z = 0; z < Z; ++z) {
          double diff = points(i, z) - points(order[j], z);
          d += diff * diff;
        }
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      resp(i, best) += 0.5;
    }
  }

  DirichletMixtureFit fit;
  auto& model = fit.model;
  model.weights.assign(M, 0.0);
  model.alphas.assign(M, {});

  auto m_step = [&](bool warm) {
    for (std::size_t j = 0; j < M; ++j) {
      std::vector<double> w(n);
      double nj = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        w[i] = resp(i, j);
        nj += w[i];
      }
      if (nj < 1.0) {
        fail(ErrorKind::DegenerateComponent,
             "component " + std::to_string(j) + " has " + std::to_string(nj) + " effective samples");
      }
      std::vector<double> mean_log(Z, 0.0);
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t z = 0; z < Z; ++z) mean_log[z] += w[i] * log_p(i, z);
      }
      for (auto& v : mean_log) v /= nj;
      auto init = warm ? model.alphas[j] : dirichlet_moment_init(points, w);
      model.alphas[j] = dirichlet_mle(mean_log, std::move(init), opt.mle_max_iterations, opt.mle_tolerance);
      model.weights[j] = nj / static_cast<double>(n);
    }
  };

  m_step(false);
  std::vector<double> joint(M);
  for (std::size_t iter = 0; iter < opt.max_iterations; ++iter) {
    double ll = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < M; ++j) {
        joint[j] = std::log(model.weights[j]) + dirichlet_log_pdf(model.alphas[j], log_p.row(i));
      }
      const double lse = log_sum_exp(joint);
      ll += lse;
      for (std::size_t j = 0; j < M; ++j) resp(i, j) = std::exp(joint[j] - lse);
    }
    fit.loglik_trace.push_back(ll);
    if (iter > 0) {
      const double prev = fit.loglik_trace[iter - 1];
      if (std::abs(ll - prev) <= opt.tolerance * std::abs(prev)) break;
    }
    if (iter + 1 == opt.max_iterations) break;
    m_step(true);
  }
  return fit;
}

}  // namespace detail

/// EM for a mixture of Dirichlets over points already on the open simplex.
inline DirichletMixtureFit fit_dirichlet_mixture_points(const std::vector<std::vector<double>>& simplex_points,
                                                        const DirichletMixtureOptions& opt, std::uint64_t seed) {
  if (simplex_points.empty()) fail(ErrorKind::TooFewHistograms, "no samples");
  const std::size_t Z = simplex_points.front().size();
  Matrix<double> points(simplex_points.size(), Z), log_p(simplex_points.size(), Z);
  for (std::size_t i = 0; i < simplex_points.size(); ++i) {
    if (simplex_points[i].size() != Z) fail(ErrorKind::DimensionMismatch, "samples differ in dimension");
    for (std::size_t z = 0; z < Z; ++z) {
      const double p = simplex_points[i][z];
      if (!(p > 0.0)) fail(ErrorKind::NonFiniteInput, "simplex point has a non-positive coordinate");
      points(i, z) = p;
      log_p(i, z) = std::log(p);
    }
  }
  return detail::fit_dirichlet_mixture_log_points(points, log_p, opt, seed);
}

inline double resolved_eps_smooth(const DirichletMixtureOptions& opt, std::size_t Z) {
  return opt.eps_smooth > 0.0 ? opt.eps_smooth : 0.5 / static_cast<double>(Z);
}

/// Histograms are smoothed into the simplex first; see `simplex_point`.
inline DirichletMixtureFit fit_dirichlet_mixture(std::span<const BowHistogram> hists,
                                                 const DirichletMixtureOptions& opt, std::uint64_t seed) {
  if (hists.size() < std::max<std::size_t>(opt.components, 1)) {
    fail(ErrorKind::TooFewHistograms,
         std::to_string(hists.size()) + " histograms for " + std::to_string(opt.components) + " components");
  }
  const std::size_t Z = hists.front().counts.size();
  const double eps = resolved_eps_smooth(opt, Z);
  std::vector<std::vector<double>> pts;
  pts.reserve(hists.size());
  for (const auto& h : hists) {
    if (h.counts.size() != Z) fail(ErrorKind::DimensionMismatch, "histograms differ in vocabulary size");
    if (h.empty()) fail(ErrorKind::EmptyHistogram, "cannot fit on an empty histogram");
    pts.push_back(simplex_point(h, eps));
  }
  auto fit = fit_dirichlet_mixture_points(pts, opt, seed);
  fit.model.eps_smooth = eps;
  return fit;
}

/// Exact log density of the smoothed simplex point of `h`.
inline double dirichlet_mixture_score(const DirichletMixture& m, const BowHistogram& h) {
  if (h.counts.size() != m.vocabulary_size()) fail(ErrorKind::DimensionMismatch, "vocabulary size mismatch");
  if (h.empty()) fail(ErrorKind::EmptyHistogram, "cannot score an empty histogram");
  auto p = simplex_point(h, m.eps_smooth);
  for (auto& v : p) v = std::log(v);
  std::vector<double> terms;
  terms.reserve(m.components());
  for (std::size_t j = 0; j < m.components(); ++j) {
    if (m.weights[j] <= 0.0) continue;
    terms.push_back(std::log(m.weights[j]) + dirichlet_log_pdf(m.alphas[j], p));
  }
  return log_sum_exp(terms);
}

}  // namespace placerec
