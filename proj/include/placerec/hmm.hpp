#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "placerec/error.hpp"
#include "placerec/matrix.hpp"
#include "placerec/numeric.hpp"

namespace placerec {

/// loglik(t, k): score of frame t under class model k (T x K).
struct ObservationMatrix {
  Matrix<double> loglik;

  std::size_t frames() const noexcept { return loglik.rows(); }
  std::size_t classes() const noexcept { return loglik.cols(); }
  friend bool operator==(const ObservationMatrix&, const ObservationMatrix&) = default;
};

struct HmmParams {
  Matrix<double> transition;    // transition(c, k) = P(c_t = k | c_{t-1} = c)
  std::vector<double> initial;  // P(c_1 = k)
  double kappa = 0.0;           // self-transition pseudo-count
  double lambda_scale = 1.0;    // tempering applied to the observations

  std::size_t states() const noexcept { return initial.size(); }
  friend bool operator==(const HmmParams&, const HmmParams&) = default;
};

struct PosteriorSequence {
  Matrix<double> filtered;  // P(c_t | x_1..t)
  Matrix<double> smoothed;  // P(c_t | x_1..T)
  double seq_loglik = 0.0;
};

/// Uniform-rate chain with uniform prior and transitions.
inline HmmParams uniform_hmm(std::size_t K) {
  HmmParams p;
  p.transition = Matrix<double>(K, K, 1.0 / static_cast<double>(K));
  p.initial.assign(K, 1.0 / static_cast<double>(K));
  return p;
}

/// Diagonal `self`, remaining mass spread uniformly; K = 1 gives [[1]].
inline HmmParams sticky_hmm(std::size_t K, double self) {
  HmmParams p = uniform_hmm(K);
  if (K > 1) {
    for (std::size_t c = 0; c < K; ++c) {
      for (std::size_t k = 0; k < K; ++k) p.transition(c, k) = c == k ? self : (1.0 - self) / (K - 1);
    }
  }
  return p;
}

/// Sticky pseudo-count used when none is configured: 50 T / K.
inline double default_kappa(std::size_t frames, std::size_t classes) {
  return 50.0 * static_cast<double>(frames) / static_cast<double>(classes);
}

namespace detail {

inline void check_observations(const ObservationMatrix& L) {
  if (L.frames() == 0 || L.classes() == 0) fail(ErrorKind::DimensionMismatch, "observation matrix is empty");
  for (double v : L.loglik.flat()) {
    if (!std::isfinite(v)) fail(ErrorKind::NonFiniteInput, "observation matrix has a non-finite entry");
  }
}

inline void check_compatible(const ObservationMatrix& L, const HmmParams& p) {
  check_observations(L);
  if (p.states() != L.classes() || p.transition.rows() != L.classes() || p.transition.cols() != L.classes()) {
    fail(ErrorKind::DimensionMismatch, "HMM has " + std::to_string(p.states()) + " states, observations have " +
                                           std::to_string(L.classes()) + " classes");
  }
}

inline Matrix<double> log_of(const Matrix<double>& m) {
  Matrix<double> out(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.flat().size(); ++i) out.flat()[i] = std::log(m.flat()[i]);
  return out;
}

/// Log-domain forward pass: log filtered posteriors and per-step log normalisers.
struct ForwardLog {
  Matrix<double> log_filtered;
  std::vector<double> log_norm;
};

inline ForwardLog forward_log(const ObservationMatrix& L, const HmmParams& p, const Matrix<double>& log_a) {
  const std::size_t T = L.frames();
  const std::size_t K = L.classes();
  ForwardLog f{Matrix<double>(T, K), std::vector<double>(T)};
  std::vector<double> v(K), terms(K);
  for (std::size_t t = 0; t < T; ++t) {
    for (std::size_t k = 0; k < K; ++k) {
      double log_pred;
      if (t == 0) {
        log_pred = std::log(p.initial[k]);
      } else {
        for (std::size_t c = 0; c < K; ++c) terms[c] = f.log_filtered(t - 1, c) + log_a(c, k);
        log_pred = log_sum_exp(terms);
      }
      v[k] = L.loglik(t, k) + log_pred;
    }
    const double norm = log_sum_exp(v);
    f.log_norm[t] = norm;
    for (std::size_t k = 0; k < K; ++k) f.log_filtered(t, k) = v[k] - norm;
  }
  return f;
}

}  // namespace detail

/// Every entry multiplied by lambda_scale (tempering in the log domain).
inline ObservationMatrix rescale(const ObservationMatrix& L, double lambda_scale) {
  if (!(lambda_scale > 0.0) || !std::isfinite(lambda_scale)) {
    fail(ErrorKind::NonPositiveLambda, "lambda_scale must be positive, got " + std::to_string(lambda_scale));
  }
  ObservationMatrix out = L;
  for (auto& v : out.loglik.flat()) v *= lambda_scale;
  return out;
}

struct FilterResult {
  Matrix<double> filtered;
  double seq_loglik = 0.0;
};

/// P(c_t = k | x_1..t) by the normalised forward recursion.
inline FilterResult forward_filter(const ObservationMatrix& L, const HmmParams& p) {
  detail::check_compatible(L, p);
  auto f = detail::forward_log(L, p, detail::log_of(p.transition));
  FilterResult r{Matrix<double>(L.frames(), L.classes()), 0.0};
  for (std::size_t i = 0; i < r.filtered.flat().size(); ++i) r.filtered.flat()[i] = std::exp(f.log_filtered.flat()[i]);
  for (double n : f.log_norm) r.seq_loglik += n;
  return r;
}

struct ForwardBackwardResult {
  PosteriorSequence posteriors;
  std::vector<Matrix<double>> xi;  // T-1 matrices, xi[t](c, k) = P(c_t = c, c_t+1 = k | x_1..T)
};

inline ForwardBackwardResult forward_backward(const ObservationMatrix& L, const HmmParams& p) {
  detail::check_compatible(L, p);
  const std::size_t T = L.frames();
  const std::size_t K = L.classes();
  const auto log_a = detail::log_of(p.transition);
  auto f = detail::forward_log(L, p, log_a);

  Matrix<double> log_beta(T, K, 0.0);
  std::vector<double> terms(K);
  for (std::size_t t = T - 1; t-- > 0;) {
    for (std::size_t c = 0; c < K; ++c) {
      for (std::size_t k = 0; k < K; ++k) terms[k] = log_a(c, k) + L.loglik(t + 1, k) + log_beta(t + 1, k);
      log_beta(t, c) = log_sum_exp(terms) - f.log_norm[t + 1];
    }
  }

  ForwardBackwardResult r;
  auto& ps = r.posteriors;
  ps.filtered = Matrix<double>(T, K);
  ps.smoothed = Matrix<double>(T, K);
  for (std::size_t t = 0; t < T; ++t) {
    double sum = 0.0;
    for (std::size_t k = 0; k < K; ++k) {
      ps.filtered(t, k) = std::exp(f.log_filtered(t, k));
      ps.smoothed(t, k) = std::exp(f.log_filtered(t, k) + log_beta(t, k));
      sum += ps.smoothed(t, k);
    }
    for (std::size_t k = 0; k < K; ++k) ps.smoothed(t, k) /= sum;
  }
  for (double n : f.log_norm) ps.seq_loglik += n;

  r.xi.reserve(T - 1);
  for (std::size_t t = 0; t + 1 < T; ++t) {
    Matrix<double> x(K, K);
    double sum = 0.0;
    for (std::size_t c = 0; c < K; ++c) {
      for (std::size_t k = 0; k < K; ++k) {
        x(c, k) = std::exp(f.log_filtered(t, c) + log_a(c, k) + L.loglik(t + 1, k) + log_beta(t + 1, k) -
                           f.log_norm[t + 1]);
        sum += x(c, k);
      }
    }
    for (auto& v : x.flat()) v /= sum;
    r.xi.push_back(std::move(x));
  }
  return r;
}

// ---------------------------------------------------------------------------
// Unsupervised EM with a sticky Dirichlet prior on the transition rows
// ---------------------------------------------------------------------------

struct BaumWelchOptions {
  double kappa = 0.0;              // extra pseudo-count on each diagonal entry
  double base_alpha = 1.0 + 1e-3;  // symmetric Dirichlet parameter on every row and on the prior
  std::size_t max_iterations = 50;
  double tolerance = 1e-6;         // relative change of the penalised objective
  double initial_self = 0.8;
};

struct BaumWelchResult {
  HmmParams params;
  PosteriorSequence posteriors;
  std::vector<double> objective_trace;  // seq_loglik + log prior, one per E-step
};

/// MAP transition rows from expected transition counts:
///   A(c,k) = (n(c,k) + base_alpha - 1 + kappa [c = k]) / (sum_k' n(c,k') + K (base_alpha - 1) + kappa).
/// Rows with a zero denominator keep `previous`.
inline Matrix<double> map_transition_update(const Matrix<double>& counts, double kappa, double base_alpha,
                                            const Matrix<double>& previous) {
  const std::size_t K = counts.rows();
  Matrix<double> a(K, K);
  for (std::size_t c = 0; c < K; ++c) {
    double denom = kappa + static_cast<double>(K) * (base_alpha - 1.0);
    for (std::size_t k = 0; k < K; ++k) denom += counts(c, k);
    for (std::size_t k = 0; k < K; ++k) {
      a(c, k) = denom > 0.0 ? (counts(c, k) + base_alpha - 1.0 + (c == k ? kappa : 0.0)) / denom : previous(c, k);
    }
  }
  return a;
}

/// Unnormalised log Dirichlet prior of the rows of A and of the initial distribution.
inline double log_transition_prior(const HmmParams& p, double kappa, double base_alpha) {
  double s = 0.0;
  const std::size_t K = p.states();
  for (std::size_t c = 0; c < K; ++c) {
    for (std::size_t k = 0; k < K; ++k) {
      const double coeff = base_alpha - 1.0 + (c == k ? kappa : 0.0);
      if (coeff != 0.0) s += coeff * std::log(p.transition(c, k));
    }
  }
  if (base_alpha != 1.0) {
    for (double v : p.initial) s += (base_alpha - 1.0) * std::log(v);
  }
  return s;
}

inline BaumWelchResult baum_welch_map(const ObservationMatrix& L, std::size_t K, const BaumWelchOptions& opt) {
  detail::check_observations(L);
  if (K != L.classes()) fail(ErrorKind::DimensionMismatch, "state count does not match observation columns");
  if (!(opt.kappa >= 0.0) || !std::isfinite(opt.kappa)) {
    fail(ErrorKind::InvalidHyperparameter, "kappa must be finite and non-negative");
  }
  if (!(opt.base_alpha >= 1.0) || !std::isfinite(opt.base_alpha)) {
    fail(ErrorKind::InvalidHyperparameter, "base_alpha must be >= 1 for the MAP update to stay in the simplex");
  }
  if (!(opt.initial_self > 0.0 && opt.initial_self < 1.0)) {
    fail(ErrorKind::InvalidHyperparameter, "initial_self must lie in (0,1)");
  }

  BaumWelchResult r;
  r.params = sticky_hmm(K, opt.initial_self);
  r.params.kappa = opt.kappa;
  for (std::size_t iter = 0; iter < std::max<std::size_t>(opt.max_iterations, 1); ++iter) {
    auto fb = forward_backward(L, r.params);
    const double objective = fb.posteriors.seq_loglik + log_transition_prior(r.params, opt.kappa, opt.base_alpha);
    r.objective_trace.push_back(objective);
    r.posteriors = std::move(fb.posteriors);
    if (iter > 0) {
      const double prev = r.objective_trace[iter - 1];
      if (std::abs(objective - prev) <= opt.tolerance * std::abs(prev)) break;
    }
    if (iter + 1 == opt.max_iterations) break;

    Matrix<double> counts(K, K, 0.0);
    for (const auto& x : fb.xi) {
      for (std::size_t i = 0; i < counts.flat().size(); ++i) counts.flat()[i] += x.flat()[i];
    }
    r.params.transition = map_transition_update(counts, opt.kappa, opt.base_alpha, r.params.transition);
    const double pi_denom = 1.0 + static_cast<double>(K) * (opt.base_alpha - 1.0);
    for (std::size_t k = 0; k < K; ++k) {
      r.params.initial[k] = (r.posteriors.smoothed(0, k) + opt.base_alpha - 1.0) / pi_denom;
    }
  }
  return r;
}

enum class DecodeMode { Filtered, Smoothed };

/// Per-frame argmax of the selected posterior; ties go to the lowest class.
inline std::vector<std::size_t> decode(const PosteriorSequence& ps, DecodeMode mode) {
  const auto& m = mode == DecodeMode::Filtered ? ps.filtered : ps.smoothed;
  std::vector<std::size_t> out(m.rows());
  for (std::size_t t = 0; t < m.rows(); ++t) out[t] = argmax(m.row(t));
  return out;
}

/// Per-frame argmax of the raw observations ("HMM off").
inline std::vector<std::size_t> decode_observations(const ObservationMatrix& L) {
  std::vector<std::size_t> out(L.frames());
  for (std::size_t t = 0; t < L.frames(); ++t) out[t] = argmax(L.loglik.row(t));
  return out;
}

}  // namespace placerec
