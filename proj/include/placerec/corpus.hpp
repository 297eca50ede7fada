#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "placerec/csv.hpp"
#include "placerec/error.hpp"
#include "placerec/histogram.hpp"
#include "placerec/matrix.hpp"
#include "placerec/numeric.hpp"

namespace placerec {

struct ImageRecord {
  std::string id;
  std::string image_ref;  // file path, or `hist:<counts>` for inline histograms
  double timestamp = 0.0;  // seconds since epoch, UTC
  std::optional<std::size_t> label;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

struct Manifest {
  std::vector<ImageRecord> records;  // sorted by timestamp
  std::vector<std::string> class_names;
  std::int64_t tz_offset_seconds = 0;  // added to timestamps to get local time

  std::size_t class_count() const noexcept { return class_names.size(); }

  /// Labeled record indices per class, in manifest order.
  std::vector<std::vector<std::size_t>> records_by_class() const {
    std::vector<std::vector<std::size_t>> out(class_count());
    for (std::size_t i = 0; i < records.size(); ++i) {
      if (records[i].label) out[*records[i].label].push_back(i);
    }
    return out;
  }

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

// ---------------------------------------------------------------------------
// Manifest file format
//
//   # classes: kitchen;office;corridor
//   # tz_offset_seconds: 3600            (optional)
//   id,timestamp,label,image_ref
//   img0,1262332800,kitchen,images/img0.pgm
//   img1,1262332820,,"hist:0,3,1"
//
// The label column holds a class name; empty means unlabeled. The image_ref
// column is last, so an unquoted inline histogram absorbs the trailing fields.
// ---------------------------------------------------------------------------

namespace detail {

inline double parse_timestamp(std::string_view field, std::size_t line_no) {
  field = csv::trim(field);
  if (field.empty()) {
    fail(ErrorKind::MissingField, "line " + std::to_string(line_no) + ": empty timestamp");
  }
  std::string s(field);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != s.size() || !std::isfinite(v)) {
    fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": bad timestamp '" + s + "'");
  }
  if (v < 0) {
    fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": negative timestamp");
  }
  return v;
}

inline std::string format_timestamp(double t) {
  if (t == std::floor(t) && t < 9.0e15) return std::to_string(static_cast<std::int64_t>(t));
  return csv::format_real(t);
}

}  // namespace detail

inline Manifest load_manifest(std::istream& in) {
  Manifest m;
  std::string line;
  std::size_t line_no = 0;
  bool have_classes = false;
  bool have_header = false;

  while (!have_header && std::getline(in, line)) {
    ++line_no;
    std::string_view sv = csv::trim(line);
    if (sv.empty()) continue;
    if (sv.front() == '#') {
      sv.remove_prefix(1);
      sv = csv::trim(sv);
      auto colon = sv.find(':');
      if (colon == std::string_view::npos) continue;
      auto key = csv::trim(sv.substr(0, colon));
      auto value = csv::trim(sv.substr(colon + 1));
      if (key == "classes") {
        std::string_view rest = value;
        while (true) {
          auto semi = rest.find(';');
          auto name = csv::trim(rest.substr(0, semi));
          if (name.empty()) fail(ErrorKind::ParseError, "empty class name in class list");
          m.class_names.emplace_back(name);
          if (semi == std::string_view::npos) break;
          rest.remove_prefix(semi + 1);
        }
        have_classes = true;
      } else if (key == "tz_offset_seconds") {
        try {
          m.tz_offset_seconds = std::stoll(std::string(value));
        } catch (const std::exception&) {
          fail(ErrorKind::ParseError, "bad tz_offset_seconds '" + std::string(value) + "'");
        }
      }
      continue;
    }
    auto header = csv::split(sv);
    if (header.size() != 4 || csv::trim(header[0]) != "id" || csv::trim(header[1]) != "timestamp" ||
        csv::trim(header[2]) != "label" || csv::trim(header[3]) != "image_ref") {
      fail(ErrorKind::ParseError, "header must be 'id,timestamp,label,image_ref'");
    }
    have_header = true;
  }
  if (!have_classes) fail(ErrorKind::ParseError, "missing '# classes:' line");
  if (!have_header) fail(ErrorKind::ParseError, "missing header row");

  std::unordered_map<std::string, std::size_t> class_index;
  for (std::size_t k = 0; k < m.class_names.size(); ++k) {
    if (!class_index.emplace(m.class_names[k], k).second) {
      fail(ErrorKind::ParseError, "duplicate class name '" + m.class_names[k] + "'");
    }
  }

  std::unordered_set<std::string> ids;
  while (std::getline(in, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    auto fields = csv::split(line);
    if (fields.size() < 2) {
      fail(ErrorKind::MissingField, "line " + std::to_string(line_no) + ": row lacks id/timestamp");
    }
    while (fields.size() < 4) fields.emplace_back();
    if (fields.size() > 4) {
      for (std::size_t i = 4; i < fields.size(); ++i) fields[3] += "," + fields[i];
      fields.resize(4);
    }
    ImageRecord r;
    r.id = std::string(csv::trim(fields[0]));
    if (r.id.empty()) fail(ErrorKind::MissingField, "line " + std::to_string(line_no) + ": empty id");
    r.timestamp = detail::parse_timestamp(fields[1], line_no);
    auto label = csv::trim(fields[2]);
    if (!label.empty()) {
      auto it = class_index.find(std::string(label));
      if (it == class_index.end()) {
        fail(ErrorKind::UnknownLabel,
             "line " + std::to_string(line_no) + ": label '" + std::string(label) + "' not in class list");
      }
      r.label = it->second;
    }
    r.image_ref = std::string(csv::trim(fields[3]));
    if (!ids.insert(r.id).second) {
      fail(ErrorKind::ParseError, "line " + std::to_string(line_no) + ": duplicate id '" + r.id + "'");
    }
    m.records.push_back(std::move(r));
  }
  std::stable_sort(m.records.begin(), m.records.end(),
                   [](const ImageRecord& a, const ImageRecord& b) { return a.timestamp < b.timestamp; });
  return m;
}

inline Manifest load_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open manifest '" + path + "'");
  return load_manifest(in);
}

inline void write_manifest(std::ostream& os, const Manifest& m) {
  os << "# classes: ";
  for (std::size_t k = 0; k < m.class_names.size(); ++k) os << (k ? ";" : "") << m.class_names[k];
  os << '\n';
  if (m.tz_offset_seconds != 0) os << "# tz_offset_seconds: " << m.tz_offset_seconds << '\n';
  os << "id,timestamp,label,image_ref\n";
  for (const auto& r : m.records) {
    os << csv::quote(r.id) << ',' << detail::format_timestamp(r.timestamp) << ','
       << (r.label ? csv::quote(m.class_names.at(*r.label)) : std::string()) << ','
       << csv::quote(r.image_ref) << '\n';
  }
}

/// Inline histograms of a manifest, keyed by record id.
inline HistogramStore inline_histograms(const Manifest& m) {
  HistogramStore store;
  for (const auto& r : m.records) {
    if (is_inline_histogram(r.image_ref)) store.emplace(r.id, parse_inline_histogram(r.image_ref));
  }
  return store;
}

// ---------------------------------------------------------------------------
// Train/test splits
// ---------------------------------------------------------------------------

struct Split {
  std::vector<std::vector<std::string>> train;  // per class
  std::vector<std::vector<std::string>> test;   // per class
  std::uint64_t seed = 0;

  friend bool operator==(const Split&, const Split&) = default;
};

/// `repeats` independent splits. Each class gets exactly n_train training
/// images sampled without replacement; up to n_test_max of the rest are test.
inline std::vector<Split> split_protocol(const Manifest& m, std::size_t n_train, std::size_t n_test_max,
                                         std::size_t repeats, std::uint64_t seed) {
  if (repeats == 0) fail(ErrorKind::InvalidHyperparameter, "repeats must be >= 1");
  auto by_class = m.records_by_class();
  for (std::size_t k = 0; k < by_class.size(); ++k) {
    if (by_class[k].size() <= n_train) {
      fail(ErrorKind::InsufficientClassData, "class '" + m.class_names[k] + "' has " +
                                                 std::to_string(by_class[k].size()) +
                                                 " labeled images, needs more than " + std::to_string(n_train));
    }
  }
  std::vector<Split> splits;
  splits.reserve(repeats);
  for (std::size_t r = 0; r < repeats; ++r) {
    Split s;
    s.seed = derive_seed(seed, "split/" + std::to_string(r));
    std::mt19937_64 rng(s.seed);
    s.train.resize(by_class.size());
    s.test.resize(by_class.size());
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      auto idx = by_class[k];
      std::shuffle(idx.begin(), idx.end(), rng);
      std::size_t n_test = std::min(n_test_max, idx.size() - n_train);
      for (std::size_t i = 0; i < n_train; ++i) s.train[k].push_back(m.records[idx[i]].id);
      for (std::size_t i = n_train; i < n_train + n_test; ++i) s.test[k].push_back(m.records[idx[i]].id);
    }
    splits.push_back(std::move(s));
  }
  return splits;
}

/// Hash of a split's contents; stored with trained banks.
inline std::uint64_t split_digest(const Split& s) {
  std::uint64_t h = fnv1a("split");
  for (const auto* part : {&s.train, &s.test}) {
    for (const auto& ids : *part) {
      h = fnv1a("|", h);
      for (const auto& id : ids) h = fnv1a(id + ";", h);
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// Dataset statistics
// ---------------------------------------------------------------------------

enum class TimeOfDay : std::size_t { Morning = 0, Afternoon = 1, Evening = 2, Night = 3 };

/// [05,12) morning, [12,17) afternoon, [17,22) evening, otherwise night.
inline TimeOfDay time_of_day(double local_seconds_of_day) {
  double hour = local_seconds_of_day / 3600.0;
  if (hour >= 5 && hour < 12) return TimeOfDay::Morning;
  if (hour >= 12 && hour < 17) return TimeOfDay::Afternoon;
  if (hour >= 17 && hour < 22) return TimeOfDay::Evening;
  return TimeOfDay::Night;
}

struct StatsReport {
  std::vector<std::size_t> days_seen;
  std::vector<std::array<std::size_t, 4>> timeofday_hist;

  friend bool operator==(const StatsReport&, const StatsReport&) = default;
};

inline StatsReport corpus_stats(const Manifest& m) {
  StatsReport rep;
  rep.days_seen.assign(m.class_count(), 0);
  rep.timeofday_hist.assign(m.class_count(), {0, 0, 0, 0});
  std::vector<std::set<std::int64_t>> days(m.class_count());
  bool any = false;
  for (const auto& r : m.records) {
    if (!r.label) continue;
    any = true;
    double local = r.timestamp + static_cast<double>(m.tz_offset_seconds);
    double day = std::floor(local / 86400.0);
    days[*r.label].insert(static_cast<std::int64_t>(day));
    auto bin = time_of_day(local - day * 86400.0);
    ++rep.timeofday_hist[*r.label][static_cast<std::size_t>(bin)];
  }
  if (!any) fail(ErrorKind::NoLabeledRecords, "manifest has no labeled records");
  for (std::size_t k = 0; k < days.size(); ++k) rep.days_seen[k] = days[k].size();
  return rep;
}

inline void write_stats_csv(std::ostream& os, const Manifest& m, const StatsReport& rep) {
  os << "class,days_seen,morning,afternoon,evening,night\n";
  for (std::size_t k = 0; k < m.class_count(); ++k) {
    const auto& h = rep.timeofday_hist[k];
    os << csv::quote(m.class_names[k]) << ',' << rep.days_seen[k] << ',' << h[0] << ',' << h[1] << ','
       << h[2] << ',' << h[3] << '\n';
  }
}

// ---------------------------------------------------------------------------
// Synthetic corpora
// ---------------------------------------------------------------------------

struct SyntheticSpec {
  std::size_t classes = 8;
  std::size_t vocabulary = 50;
  std::size_t length = 1000;
  double self_prob = 0.95;
  std::size_t words_per_image = 40;
  /// Word distributions are softmax(class_sharpness * N(0,1) draws); 0 makes
  /// every class uniform, larger values make classes peakier and more distinct.
  double class_sharpness = 1.0;
};

inline void validate(const SyntheticSpec& s) {
  if (s.classes == 0 || s.vocabulary == 0 || s.length == 0 || s.words_per_image == 0) {
    fail(ErrorKind::InvalidSpec, "class count, vocabulary, length and words_per_image must be positive");
  }
  if (!(s.self_prob > 0.0 && s.self_prob < 1.0)) fail(ErrorKind::InvalidSpec, "self_prob must lie in (0,1)");
  if (!(std::isfinite(s.class_sharpness) && s.class_sharpness >= 0.0)) {
    fail(ErrorKind::InvalidSpec, "class_sharpness must be finite and non-negative");
  }
}

struct GroundTruth {
  std::vector<std::size_t> labels;  // true class per frame
  Matrix<double> transition;        // K x K, row-stochastic
  Matrix<double> word_distributions;  // K x Z, row-stochastic
};

struct SyntheticCorpus {
  Manifest manifest;
  GroundTruth truth;
};

inline constexpr double kSyntheticStartTime = 1262332800.0;  // 2010-01-01 08:00 UTC
inline constexpr double kSyntheticFrameSpacing = 20.0;

namespace detail {

inline std::vector<std::string> synthetic_class_names(std::size_t k) {
  std::vector<std::string> names;
  for (std::size_t i = 0; i < k; ++i) names.push_back("place" + std::to_string(i));
  return names;
}

inline BowHistogram sample_histogram(std::discrete_distribution<std::size_t>& words, std::size_t z_count,
                                     std::size_t n, std::mt19937_64& rng) {
  BowHistogram h;
  h.counts.assign(z_count, 0);
  for (std::size_t i = 0; i < n; ++i) ++h.counts[words(rng)];
  return h;
}

inline std::vector<std::discrete_distribution<std::size_t>> word_samplers(const Matrix<double>& phi) {
  std::vector<std::discrete_distribution<std::size_t>> out;
  for (std::size_t k = 0; k < phi.rows(); ++k) {
    auto row = phi.row(k);
    out.emplace_back(row.begin(), row.end());
  }
  return out;
}

}  // namespace detail

/// Sticky-chain day sequence with inline histograms, plus its ground truth.
inline SyntheticCorpus generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  validate(spec);
  const std::size_t K = spec.classes;
  const std::size_t Z = spec.vocabulary;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  SyntheticCorpus out;
  GroundTruth& gt = out.truth;
  gt.word_distributions = Matrix<double>(K, Z);
  for (std::size_t k = 0; k < K; ++k) {
    auto row = gt.word_distributions.row(k);
    double sum = 0.0;
    for (auto& v : row) {
      v = std::exp(spec.class_sharpness * normal(rng));
      sum += v;
    }
    for (auto& v : row) v /= sum;
  }

  gt.transition = Matrix<double>(K, K, K == 1 ? 1.0 : (1.0 - spec.self_prob) / static_cast<double>(K - 1));
  if (K > 1) {
    for (std::size_t k = 0; k < K; ++k) gt.transition(k, k) = spec.self_prob;
  }

  std::uniform_int_distribution<std::size_t> initial(0, K - 1);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> other(0, K > 1 ? K - 2 : 0);
  gt.labels.resize(spec.length);
  gt.labels[0] = initial(rng);
  for (std::size_t t = 1; t < spec.length; ++t) {
    std::size_t prev = gt.labels[t - 1];
    if (K == 1 || unit(rng) < spec.self_prob) {
      gt.labels[t] = prev;
    } else {
      std::size_t j = other(rng);
      gt.labels[t] = j >= prev ? j + 1 : j;
    }
  }

  auto samplers = detail::word_samplers(gt.word_distributions);
  out.manifest.class_names = detail::synthetic_class_names(K);
  out.manifest.records.reserve(spec.length);
  char id[48];
  for (std::size_t t = 0; t < spec.length; ++t) {
    std::snprintf(id, sizeof id, "f%06zu", t);
    auto h = detail::sample_histogram(samplers[gt.labels[t]], Z, spec.words_per_image, rng);
    out.manifest.records.push_back(
        {id, format_inline_histogram(h), kSyntheticStartTime + kSyntheticFrameSpacing * t, gt.labels[t]});
  }
  return out;
}

/// Independent labeled images drawn from the ground-truth word distributions,
/// `per_class` for each class, class-major order. Used as training data.
inline Manifest sample_class_images(const GroundTruth& gt, std::size_t per_class, std::size_t words_per_image,
                                    std::uint64_t seed) {
  if (per_class == 0 || words_per_image == 0) fail(ErrorKind::InvalidSpec, "counts must be positive");
  std::mt19937_64 rng(seed);
  auto samplers = detail::word_samplers(gt.word_distributions);
  const std::size_t K = gt.word_distributions.rows();
  Manifest m;
  m.class_names = detail::synthetic_class_names(K);
  char id[64];
  std::size_t n = 0;
  for (std::size_t k = 0; k < K; ++k) {
    for (std::size_t i = 0; i < per_class; ++i, ++n) {
      std::snprintf(id, sizeof id, "train_c%03zu_%05zu", k, i);
      auto h = detail::sample_histogram(samplers[k], gt.word_distributions.cols(), words_per_image, rng);
      m.records.push_back({id, format_inline_histogram(h), kSyntheticStartTime + kSyntheticFrameSpacing * n, k});
    }
  }
  return m;
}

}  // namespace placerec
