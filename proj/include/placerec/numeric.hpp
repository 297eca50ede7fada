#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string_view>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

namespace placerec {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

/// log(sum(exp(v))) without overflow; -inf for an empty or all -inf input.
inline double log_sum_exp(std::span<const double> v) {
  double m = kNegInf;
  for (double x : v) m = std::max(m, x);
  if (m == kNegInf) return kNegInf;
  double s = 0.0;
  for (double x : v) s += std::exp(x - m);
  return m + std::log(s);
}

inline double digamma(double x) { return boost::math::digamma(x); }
inline double trigamma(double x) { return boost::math::trigamma(x); }

/// Solves digamma(x) = y by Newton's method (Minka's initialisation).
inline double inverse_digamma(double y) {
  double x = y >= -2.22 ? std::exp(y) + 0.5 : -1.0 / (y - digamma(1.0));
  for (int i = 0; i < 8; ++i) {
    x -= (digamma(x) - y) / trigamma(x);
  }
  return x;
}

/// Index of the largest entry; ties go to the lowest index.
inline std::size_t argmax(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

/// 64-bit FNV-1a; stable across platforms, used for sub-seeds and digests.
inline std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed for a named pipeline stage: seed + fnv1a(stage).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view stage) {
  return seed + fnv1a(stage);
}

}  // namespace placerec
