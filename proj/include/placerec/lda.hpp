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

/// Per-class LDA: topics (T x Z, rows on the simplex) and a Dirichlet prior
/// over topic proportions. The bag of words is scored as an exchangeable word
/// sequence (no multinomial coefficient).
struct LdaModel {
  Matrix<double> topics;
  std::vector<double> alpha;
  std::size_t vi_iterations = 100;
  double vi_tolerance = 1e-9;

  std::size_t topic_count() const noexcept { return topics.rows(); }
  std::size_t vocabulary_size() const noexcept { return topics.cols(); }
  friend bool operator==(const LdaModel&, const LdaModel&) = default;
};

struct LdaOptions {
  std::size_t topics = 30;
  std::size_t em_iterations = 100;
  double tolerance = 1e-6;       // relative change of the penalised bound
  double alpha = 0.0;            // symmetric prior; 0 selects 50 / topics
  double topic_smoothing = 1e-3;  // pseudo-count added to every topic-word count
  std::size_t vi_iterations = 100;
  double vi_tolerance = 1e-9;
};

struct LdaFit {
  LdaModel model;
  /// Corpus bound plus the log of the Dirichlet(1 + topic_smoothing) prior on
  /// topics, recorded after each E-step. EM ascends exactly this quantity.
  std::vector<double> bound_trace;
};

namespace detail {

/// Variational state for one document: gamma (T) and phi (nnz x T).
struct LdaDocState {
  std::vector<double> gamma;
  Matrix<double> phi;
};

inline Matrix<double> log_topics(const LdaModel& m) {
  Matrix<double> out(m.topics.rows(), m.topics.cols());
  for (std::size_t i = 0; i < out.flat().size(); ++i) out.flat()[i] = std::log(m.topics.flat()[i]);
  return out;
}

inline double lda_doc_bound(const LdaModel& m, const Matrix<double>& log_beta, const SparseCounts& doc,
                            const LdaDocState& s) {
  const std::size_t T = m.topic_count();
  double sum_alpha = 0.0, sum_gamma = 0.0;
  for (std::size_t k = 0; k < T; ++k) {
    sum_alpha += m.alpha[k];
    sum_gamma += s.gamma[k];
  }
  const double psi_sum = digamma(sum_gamma);
  double b = std::lgamma(sum_alpha) - std::lgamma(sum_gamma);
  std::vector<double> e_log_theta(T);
  for (std::size_t k = 0; k < T; ++k) {
    e_log_theta[k] = digamma(s.gamma[k]) - psi_sum;
    b += -std::lgamma(m.alpha[k]) + std::lgamma(s.gamma[k]) + (m.alpha[k] - s.gamma[k]) * e_log_theta[k];
  }
  for (std::size_t n = 0; n < doc.words.size(); ++n) {
    double word = 0.0;
    for (std::size_t k = 0; k < T; ++k) {
      const double p = s.phi(n, k);
      if (p > 0.0) word += p * (e_log_theta[k] + log_beta(k, doc.words[n]) - std::log(p));
    }
    b += doc.counts[n] * word;
  }
  return b;
}

/// Coordinate ascent from the current gamma: phi given gamma, then gamma given
/// phi. Each half-step maximises the bound exactly, so it never decreases.
inline double lda_infer(const LdaModel& m, const Matrix<double>& log_beta, const SparseCounts& doc,
                        LdaDocState& s, std::size_t max_iterations, double tolerance) {
  const std::size_t T = m.topic_count();
  s.phi = Matrix<double>(doc.words.size(), T);
  std::vector<double> e_log_theta(T), row(T);
  double bound = 0.0;
  for (std::size_t it = 0; it < std::max<std::size_t>(max_iterations, 1); ++it) {
    double sum_gamma = 0.0;
    for (double g : s.gamma) sum_gamma += g;
    const double psi_sum = digamma(sum_gamma);
    for (std::size_t k = 0; k < T; ++k) e_log_theta[k] = digamma(s.gamma[k]) - psi_sum;
    for (std::size_t n = 0; n < doc.words.size(); ++n) {
      for (std::size_t k = 0; k < T; ++k) row[k] = e_log_theta[k] + log_beta(k, doc.words[n]);
      const double lse = log_sum_exp(row);
      for (std::size_t k = 0; k < T; ++k) s.phi(n, k) = std::exp(row[k] - lse);
    }
    for (std::size_t k = 0; k < T; ++k) {
      double g = m.alpha[k];
      for (std::size_t n = 0; n < doc.words.size(); ++n) g += doc.counts[n] * s.phi(n, k);
      s.gamma[k] = g;
    }
    const double next = lda_doc_bound(m, log_beta, doc, s);
    const bool done = it > 0 && std::abs(next - bound) <= tolerance * std::abs(bound);
    bound = next;
    if (done) break;
  }
  return bound;
}

inline std::vector<double> lda_initial_gamma(const LdaModel& m, const SparseCounts& doc) {
  std::vector<double> g(m.alpha);
  for (auto& v : g) v += doc.total / static_cast<double>(m.topic_count());
  return g;
}

}  // namespace detail

/// Scorer holding log topics; the model must outlive it.
class LdaScorer {
 public:
  explicit LdaScorer(const LdaModel& m) : model_(&m), log_beta_(detail::log_topics(m)) {}

  /// Variational lower bound on log p(h), single-document inference run to
  /// convergence. Empty histograms score 0.
  double operator()(const BowHistogram& h) const {
    const LdaModel& m = *model_;
    if (h.counts.size() != m.vocabulary_size()) fail(ErrorKind::DimensionMismatch, "vocabulary size mismatch");
    const auto doc = SparseCounts::from(h);
    if (doc.words.empty()) return 0.0;
    detail::LdaDocState s{detail::lda_initial_gamma(m, doc), {}};
    return detail::lda_infer(m, log_beta_, doc, s, m.vi_iterations, m.vi_tolerance);
  }

 private:
  const LdaModel* model_;
  Matrix<double> log_beta_;
};

inline double lda_free_energy(const LdaModel& m, const BowHistogram& h) { return LdaScorer(m)(h); }

/// Variational EM. Per-document gammas persist between E-steps, which keeps
/// the recorded objective monotone.
inline LdaFit fit_lda(std::span<const BowHistogram> hists, const LdaOptions& opt, std::uint64_t seed) {
  if (hists.empty()) fail(ErrorKind::NoData, "LDA needs at least one histogram");
  if (opt.topics == 0) fail(ErrorKind::InvalidHyperparameter, "topic count must be >= 1");
  const std::size_t Z = hists.front().counts.size();
  const std::size_t T = opt.topics;
  const double eta = opt.topic_smoothing;
  if (!(eta > 0.0)) fail(ErrorKind::InvalidHyperparameter, "topic smoothing must be positive");

  std::vector<SparseCounts> docs;
  docs.reserve(hists.size());
  for (const auto& h : hists) {
    if (h.counts.size() != Z) fail(ErrorKind::DimensionMismatch, "histograms differ in vocabulary size");
    docs.push_back(SparseCounts::from(h));
  }

  LdaFit fit;
  LdaModel& m = fit.model;
  m.alpha.assign(T, opt.alpha > 0.0 ? opt.alpha : 50.0 / static_cast<double>(T));
  m.vi_iterations = opt.vi_iterations;
  m.vi_tolerance = opt.vi_tolerance;
  m.topics = Matrix<double>(T, Z);
  {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (std::size_t k = 0; k < T; ++k) {
      double sum = 0.0;
      for (auto& v : m.topics.row(k)) {
        v = 1.0 / static_cast<double>(Z) + unit(rng);
        sum += v;
      }
      for (auto& v : m.topics.row(k)) v /= sum;
    }
  }

  std::vector<detail::LdaDocState> states(docs.size());
  for (std::size_t d = 0; d < docs.size(); ++d) states[d].gamma = detail::lda_initial_gamma(m, docs[d]);

  Matrix<double> counts(T, Z);
  for (std::size_t iter = 0; iter < std::max<std::size_t>(opt.em_iterations, 1); ++iter) {
    const auto log_beta = detail::log_topics(m);
    double objective = 0.0;
    for (double lb : log_beta.flat()) objective += eta * lb;
    for (std::size_t d = 0; d < docs.size(); ++d) {
      if (docs[d].words.empty()) continue;
      objective += detail::lda_infer(m, log_beta, docs[d], states[d], opt.vi_iterations, opt.vi_tolerance);
    }
    fit.bound_trace.push_back(objective);
    if (iter > 0) {
      const double prev = fit.bound_trace[iter - 1];
      if (std::abs(objective - prev) <= opt.tolerance * std::abs(prev)) break;
    }
    if (iter + 1 == opt.em_iterations) break;

    for (auto& v : counts.flat()) v = 0.0;
    for (std::size_t d = 0; d < docs.size(); ++d) {
      const auto& doc = docs[d];
      for (std::size_t n = 0; n < doc.words.size(); ++n) {
        for (std::size_t k = 0; k < T; ++k) counts(k, doc.words[n]) += doc.counts[n] * states[d].phi(n, k);
      }
    }
    for (std::size_t k = 0; k < T; ++k) {
      double sum = 0.0;
      for (double c : counts.row(k)) sum += c + eta;
      for (std::size_t z = 0; z < Z; ++z) m.topics(k, z) = (counts(k, z) + eta) / sum;
    }
  }
  return fit;
}

}  // namespace placerec
