#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <istream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "placerec/csv.hpp"
#include "placerec/error.hpp"

namespace placerec {

/// Counts over Z visual words for one image.
struct BowHistogram {
  std::vector<std::uint32_t> counts;

  std::size_t vocabulary_size() const noexcept { return counts.size(); }
  std::uint64_t total() const noexcept {
    return std::accumulate(counts.begin(), counts.end(), std::uint64_t{0});
  }
  bool empty() const noexcept { return total() == 0; }

  friend bool operator==(const BowHistogram&, const BowHistogram&) = default;
};

/// Non-zero entries of a histogram, the form the models iterate over.
struct SparseCounts {
  std::vector<std::size_t> words;
  std::vector<double> counts;
  double total = 0.0;

  static SparseCounts from(const BowHistogram& h) {
    SparseCounts s;
    for (std::size_t z = 0; z < h.counts.size(); ++z) {
      if (h.counts[z] != 0) {
        s.words.push_back(z);
        s.counts.push_back(static_cast<double>(h.counts[z]));
        s.total += h.counts[z];
      }
    }
    return s;
  }
};

inline constexpr std::string_view kInlineHistogramPrefix = "hist:";

inline bool is_inline_histogram(std::string_view ref) {
  return ref.substr(0, kInlineHistogramPrefix.size()) == kInlineHistogramPrefix;
}

inline std::uint32_t parse_count(std::string_view field) {
  field = csv::trim(field);
  std::uint32_t v = 0;
  auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc{} || ptr != field.data() + field.size()) {
    fail(ErrorKind::ParseError, "bad histogram count '" + std::string(field) + "'");
  }
  return v;
}

/// Parses `hist:<z0>,<z1>,...`.
inline BowHistogram parse_inline_histogram(std::string_view ref) {
  if (!is_inline_histogram(ref)) {
    fail(ErrorKind::ParseError, "not an inline histogram: '" + std::string(ref) + "'");
  }
  ref.remove_prefix(kInlineHistogramPrefix.size());
  BowHistogram h;
  while (true) {
    auto comma = ref.find(',');
    h.counts.push_back(parse_count(ref.substr(0, comma)));
    if (comma == std::string_view::npos) break;
    ref.remove_prefix(comma + 1);
  }
  return h;
}

inline std::string format_inline_histogram(const BowHistogram& h) {
  std::string out(kInlineHistogramPrefix);
  for (std::size_t z = 0; z < h.counts.size(); ++z) {
    if (z) out += ',';
    out += std::to_string(h.counts[z]);
  }
  return out;
}

/// id -> histogram; ordered so iteration (and serialisation) is deterministic.
using HistogramStore = std::map<std::string, BowHistogram>;

/// CSV: header `id,w0,...,w{Z-1}`, then one row per image.
inline void write_histogram_store(std::ostream& os, const HistogramStore& store) {
  std::size_t z_count = store.empty() ? 0 : store.begin()->second.counts.size();
  os << "id";
  for (std::size_t z = 0; z < z_count; ++z) os << ",w" << z;
  os << '\n';
  for (const auto& [id, h] : store) {
    if (h.counts.size() != z_count) {
      fail(ErrorKind::DimensionMismatch, "histogram '" + id + "' has a different vocabulary size");
    }
    os << csv::quote(id);
    for (auto c : h.counts) os << ',' << c;
    os << '\n';
  }
}

inline HistogramStore read_histogram_store(std::istream& is) {
  HistogramStore store;
  std::string line;
  if (!std::getline(is, line)) fail(ErrorKind::ParseError, "histogram store is empty");
  auto header = csv::split(line);
  if (header.empty() || csv::trim(header[0]) != "id") {
    fail(ErrorKind::ParseError, "histogram store header must start with 'id'");
  }
  std::size_t z_count = header.size() - 1;
  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (csv::trim(line).empty()) continue;
    auto fields = csv::split(line);
    if (fields.size() != z_count + 1) {
      fail(ErrorKind::ParseError, "histogram store line " + std::to_string(line_no) + ": expected " +
                                      std::to_string(z_count + 1) + " fields");
    }
    BowHistogram h;
    h.counts.reserve(z_count);
    for (std::size_t z = 0; z < z_count; ++z) h.counts.push_back(parse_count(fields[z + 1]));
    std::string id(csv::trim(fields[0]));
    if (!store.emplace(id, std::move(h)).second) {
      fail(ErrorKind::ParseError, "duplicate histogram id '" + id + "'");
    }
  }
  return store;
}

inline HistogramStore read_histogram_store(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open histogram store '" + path + "'");
  return read_histogram_store(in);
}

}  // namespace placerec
