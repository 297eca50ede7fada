#pragma once

#include <cstdint>
#include <fstream>
#include <functional>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "placerec/corpus.hpp"
#include "placerec/counting_grid.hpp"
#include "placerec/dirichlet_mixture.hpp"
#include "placerec/error.hpp"
#include "placerec/histogram.hpp"
#include "placerec/hmm.hpp"
#include "placerec/lda.hpp"
#include "placerec/numeric.hpp"

namespace placerec {

enum class ModelFamily { DirichletMixture, Lda, CountingGrid };

inline constexpr std::string_view family_name(ModelFamily f) {
  switch (f) {
    case ModelFamily::DirichletMixture: return "dirmix";
    case ModelFamily::Lda: return "lda";
    case ModelFamily::CountingGrid: return "cg";
  }
  return "?";
}

inline ModelFamily parse_family(std::string_view name) {
  if (name == "dirmix") return ModelFamily::DirichletMixture;
  if (name == "lda") return ModelFamily::Lda;
  if (name == "cg") return ModelFamily::CountingGrid;
  fail(ErrorKind::ParseError, "unknown model family '" + std::string(name) + "' (expected dirmix, lda or cg)");
}

/// Family plus the hyperparameters of every family; only the selected one is used.
struct BankConfig {
  ModelFamily family = ModelFamily::CountingGrid;
  DirichletMixtureOptions dirmix;
  LdaOptions lda;
  CountingGridOptions cg;
};

using ClassModel = std::variant<DirichletMixture, LdaModel, CountingGrid>;

struct ClassModelBank {
  BankConfig config;
  std::vector<std::string> class_names;
  std::vector<ClassModel> models;  // one per class
  std::vector<std::size_t> train_counts;
  std::size_t vocabulary = 0;
  std::uint64_t seed = 0;
  std::uint64_t split_hash = 0;

  std::size_t class_count() const noexcept { return models.size(); }
};

// ---------------------------------------------------------------------------
// JSON
// ---------------------------------------------------------------------------

inline nlohmann::json to_json(const Matrix<double>& m) {
  return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", std::vector<double>(m.flat().begin(), m.flat().end())}};
}

inline Matrix<double> matrix_from_json(const nlohmann::json& j) {
  Matrix<double> m(j.at("rows").get<std::size_t>(), j.at("cols").get<std::size_t>());
  auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != m.flat().size()) fail(ErrorKind::ParseError, "matrix data size mismatch");
  std::copy(data.begin(), data.end(), m.flat().begin());
  return m;
}

inline nlohmann::json to_json(const GroundTruth& gt) {
  return {{"format", "placerec.ground_truth.v1"},
          {"labels", gt.labels},
          {"transition", to_json(gt.transition)},
          {"word_distributions", to_json(gt.word_distributions)}};
}

inline GroundTruth ground_truth_from_json(const nlohmann::json& j) {
  try {
    GroundTruth gt;
    gt.labels = j.at("labels").get<std::vector<std::size_t>>();
    gt.transition = matrix_from_json(j.at("transition"));
    gt.word_distributions = matrix_from_json(j.at("word_distributions"));
    return gt;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("ground truth: ") + e.what());
  }
}

inline nlohmann::json to_json(const BankConfig& c) {
  return {
      {"family", family_name(c.family)},
      {"dirmix",
       {{"components", c.dirmix.components},
        {"max_iterations", c.dirmix.max_iterations},
        {"tolerance", c.dirmix.tolerance},
        {"eps_smooth", c.dirmix.eps_smooth},
        {"mle_max_iterations", c.dirmix.mle_max_iterations},
        {"mle_tolerance", c.dirmix.mle_tolerance}}},
      {"lda",
       {{"topics", c.lda.topics},
        {"em_iterations", c.lda.em_iterations},
        {"tolerance", c.lda.tolerance},
        {"alpha", c.lda.alpha},
        {"topic_smoothing", c.lda.topic_smoothing},
        {"vi_iterations", c.lda.vi_iterations},
        {"vi_tolerance", c.lda.vi_tolerance}}},
      {"cg",
       {{"grid", {c.cg.grid.rows, c.cg.grid.cols}},
        {"window", {c.cg.window.rows, c.cg.window.cols}},
        {"em_iterations", c.cg.em_iterations},
        {"tolerance", c.cg.tolerance},
        {"smoothing", c.cg.smoothing},
        {"jitter", c.cg.jitter}}},
  };
}

inline BankConfig bank_config_from_json(const nlohmann::json& j) {
  BankConfig c;
  c.family = parse_family(j.at("family").get<std::string>());
  const auto& d = j.at("dirmix");
  c.dirmix.components = d.at("components");
  c.dirmix.max_iterations = d.at("max_iterations");
  c.dirmix.tolerance = d.at("tolerance");
  c.dirmix.eps_smooth = d.at("eps_smooth");
  c.dirmix.mle_max_iterations = d.at("mle_max_iterations");
  c.dirmix.mle_tolerance = d.at("mle_tolerance");
  const auto& l = j.at("lda");
  c.lda.topics = l.at("topics");
  c.lda.em_iterations = l.at("em_iterations");
  c.lda.tolerance = l.at("tolerance");
  c.lda.alpha = l.at("alpha");
  c.lda.topic_smoothing = l.at("topic_smoothing");
  c.lda.vi_iterations = l.at("vi_iterations");
  c.lda.vi_tolerance = l.at("vi_tolerance");
  const auto& g = j.at("cg");
  c.cg.grid = {g.at("grid").at(0), g.at("grid").at(1)};
  c.cg.window = {g.at("window").at(0), g.at("window").at(1)};
  c.cg.em_iterations = g.at("em_iterations");
  c.cg.tolerance = g.at("tolerance");
  c.cg.smoothing = g.at("smoothing");
  c.cg.jitter = g.at("jitter");
  return c;
}

/// Stable digest of the fully resolved configuration.
inline std::string config_digest(const BankConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(to_json(c).dump())));
  return buf;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

inline std::uint64_t parse_hex64(const std::string& s) {
  try {
    return std::stoull(s, nullptr, 16);
  } catch (const std::exception&) {
    fail(ErrorKind::ParseError, "bad hex value '" + s + "'");
  }
}

inline nlohmann::json to_json(const ClassModel& model) {
  return std::visit(
      [](const auto& m) -> nlohmann::json {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, DirichletMixture>) {
          return {{"weights", m.weights}, {"alphas", m.alphas}, {"eps_smooth", m.eps_smooth}};
        } else if constexpr (std::is_same_v<T, LdaModel>) {
          return {{"topics", to_json(m.topics)},
                  {"alpha", m.alpha},
                  {"vi_iterations", m.vi_iterations},
                  {"vi_tolerance", m.vi_tolerance}};
        } else {
          return {{"grid", {m.grid.rows, m.grid.cols}}, {"window", {m.window.rows, m.window.cols}},
                  {"pi", to_json(m.pi)}};
        }
      },
      model);
}

inline ClassModel class_model_from_json(ModelFamily family, const nlohmann::json& j) {
  switch (family) {
    case ModelFamily::DirichletMixture: {
      DirichletMixture m;
      m.weights = j.at("weights").get<std::vector<double>>();
      m.alphas = j.at("alphas").get<std::vector<std::vector<double>>>();
      m.eps_smooth = j.at("eps_smooth");
      return m;
    }
    case ModelFamily::Lda: {
      LdaModel m;
      m.topics = matrix_from_json(j.at("topics"));
      m.alpha = j.at("alpha").get<std::vector<double>>();
      m.vi_iterations = j.at("vi_iterations");
      m.vi_tolerance = j.at("vi_tolerance");
      return m;
    }
    case ModelFamily::CountingGrid: {
      CountingGrid m;
      m.grid = {j.at("grid").at(0), j.at("grid").at(1)};
      m.window = {j.at("window").at(0), j.at("window").at(1)};
      m.pi = matrix_from_json(j.at("pi"));
      return m;
    }
  }
  fail(ErrorKind::ParseError, "unknown family");
}

inline constexpr const char* kBankFormat = "placerec.bank.v1";
inline constexpr const char* kHmmFormat = "placerec.hmm.v1";

inline nlohmann::json to_json(const ClassModelBank& bank) {
  nlohmann::json models = nlohmann::json::array();
  for (const auto& m : bank.models) models.push_back(to_json(m));
  return {{"format", kBankFormat},
          {"family", family_name(bank.config.family)},
          {"K", bank.class_count()},
          {"Z", bank.vocabulary},
          {"config", to_json(bank.config)},
          {"class_names", bank.class_names},
          {"train_counts", bank.train_counts},
          {"seed", bank.seed},
          {"split_hash", hex64(bank.split_hash)},
          {"models", models}};
}

inline ClassModelBank bank_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != kBankFormat) fail(ErrorKind::ParseError, "not a model bank file");
    ClassModelBank b;
    b.config = bank_config_from_json(j.at("config"));
    if (family_name(b.config.family) != j.at("family").get<std::string>()) {
      fail(ErrorKind::ParseError, "bank family disagrees with its config");
    }
    b.class_names = j.at("class_names").get<std::vector<std::string>>();
    b.train_counts = j.at("train_counts").get<std::vector<std::size_t>>();
    b.vocabulary = j.at("Z");
    b.seed = j.at("seed");
    b.split_hash = parse_hex64(j.at("split_hash").get<std::string>());
    for (const auto& m : j.at("models")) b.models.push_back(class_model_from_json(b.config.family, m));
    if (b.models.size() != j.at("K").get<std::size_t>() || b.class_names.size() != b.models.size()) {
      fail(ErrorKind::ParseError, "bank K does not match its model count");
    }
    return b;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("model bank: ") + e.what());
  }
}

inline nlohmann::json to_json(const HmmParams& p) {
  return {{"format", kHmmFormat},
          {"K", p.states()},
          {"transition", to_json(p.transition)},
          {"initial", p.initial},
          {"kappa", p.kappa},
          {"lambda_scale", p.lambda_scale}};
}

inline HmmParams hmm_params_from_json(const nlohmann::json& j) {
  try {
    if (j.at("format") != kHmmFormat) fail(ErrorKind::ParseError, "not an HMM parameter file");
    HmmParams p;
    p.transition = matrix_from_json(j.at("transition"));
    p.initial = j.at("initial").get<std::vector<double>>();
    p.kappa = j.at("kappa");
    p.lambda_scale = j.at("lambda_scale");
    if (p.initial.size() != j.at("K").get<std::size_t>()) fail(ErrorKind::ParseError, "HMM K mismatch");
    return p;
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string("HMM parameters: ") + e.what());
  }
}

inline nlohmann::json read_json_file(const std::string& path, std::string_view what) {
  std::ifstream in(path);
  if (!in) fail(ErrorKind::IoError, "cannot open " + std::string(what) + " '" + path + "'");
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorKind::ParseError, std::string(what) + ": " + e.what());
  }
}

inline ClassModelBank read_bank(const std::string& path) { return bank_from_json(read_json_file(path, "model bank")); }

// ---------------------------------------------------------------------------
// Training and scoring
// ---------------------------------------------------------------------------

/// Fits one model of the configured family.
inline ClassModel fit_class_model(std::span<const BowHistogram> hists, const BankConfig& config, std::uint64_t seed) {
  switch (config.family) {
    case ModelFamily::DirichletMixture: return fit_dirichlet_mixture(hists, config.dirmix, seed).model;
    case ModelFamily::Lda: return fit_lda(hists, config.lda, seed).model;
    case ModelFamily::CountingGrid: return fit_counting_grid(hists, config.cg, seed).model;
  }
  fail(ErrorKind::InvalidHyperparameter, "unknown family");
}

/// Family score of one model: exact log density (Dirichlet mixture), or a
/// lower bound / location marginal (LDA, counting grid).
inline double score(const ClassModel& model, const BowHistogram& h) {
  return std::visit(
      [&h](const auto& m) -> double {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, DirichletMixture>) {
          return dirichlet_mixture_score(m, h);
        } else if constexpr (std::is_same_v<T, LdaModel>) {
          return lda_free_energy(m, h);
        } else {
          return counting_grid_score(m, h);
        }
      },
      model);
}

/// One model per class, each fitted on that class's training histograms with
/// seed + class index.
inline ClassModelBank train_bank(const Manifest& m, const Split& split, const HistogramStore& store,
                                 const BankConfig& config, std::uint64_t seed) {
  const std::size_t K = m.class_count();
  if (split.train.size() != K) {
    fail(ErrorKind::DimensionMismatch, "split covers " + std::to_string(split.train.size()) + " classes, manifest " +
                                           std::to_string(K));
  }
  ClassModelBank bank;
  bank.config = config;
  bank.class_names = m.class_names;
  bank.seed = seed;
  bank.split_hash = split_digest(split);
  bank.models.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    const std::string where = "class " + std::to_string(k) + " ('" + m.class_names[k] + "')";
    if (split.train[k].empty()) fail(ErrorKind::InsufficientClassData, where + " has no training images");
    std::vector<BowHistogram> hists;
    hists.reserve(split.train[k].size());
    for (const auto& id : split.train[k]) {
      auto it = store.find(id);
      if (it == store.end()) fail(ErrorKind::MissingHistogram, where + ": no histogram for '" + id + "'");
      hists.push_back(it->second);
    }
    if (k == 0) bank.vocabulary = hists.front().counts.size();
    if (hists.front().counts.size() != bank.vocabulary) {
      fail(ErrorKind::DimensionMismatch, where + ": vocabulary size differs from class 0");
    }
    try {
      bank.models.push_back(fit_class_model(hists, config, seed + k));
    } catch (const Error& e) {
      throw e.with_context(where);
    }
    bank.train_counts.push_back(hists.size());
  }
  return bank;
}

struct Classification {
  std::size_t label = 0;
  std::vector<double> scores;
};

/// Scores histograms under every class of a bank, with per-model tables
/// precomputed. The bank must outlive the scorer.
class BankScorer {
 public:
  explicit BankScorer(const ClassModelBank& bank) : bank_(&bank) {
    scorers_.reserve(bank.class_count());
    for (const auto& m : bank.models) {
      scorers_.push_back(std::visit(
          [](const auto& model) -> std::function<double(const BowHistogram&)> {
            using T = std::decay_t<decltype(model)>;
            if constexpr (std::is_same_v<T, DirichletMixture>) {
              return [&model](const BowHistogram& h) { return dirichlet_mixture_score(model, h); };
            } else if constexpr (std::is_same_v<T, LdaModel>) {
              return LdaScorer(model);
            } else {
              return CountingGridScorer(model);
            }
          },
          m));
    }
  }

  std::vector<double> scores(const BowHistogram& h) const {
    if (h.counts.size() != bank_->vocabulary) {
      fail(ErrorKind::DimensionMismatch, "histogram has " + std::to_string(h.counts.size()) +
                                             " words, bank expects " + std::to_string(bank_->vocabulary));
    }
    std::vector<double> s(scorers_.size());
    for (std::size_t k = 0; k < s.size(); ++k) s[k] = scorers_[k](h);
    return s;
  }

  /// Highest-scoring class; ties go to the lowest index.
  Classification classify(const BowHistogram& h) const {
    Classification c;
    c.scores = scores(h);
    c.label = argmax(c.scores);
    return c;
  }

 private:
  const ClassModelBank* bank_;
  std::vector<std::function<double(const BowHistogram&)>> scorers_;
};

inline std::vector<double> score_all(const ClassModelBank& bank, const BowHistogram& h) {
  return BankScorer(bank).scores(h);
}

inline Classification classify(const ClassModelBank& bank, const BowHistogram& h) {
  return BankScorer(bank).classify(h);
}

/// Scores of every frame of a sequence under every class (T x K).
inline ObservationMatrix observation_matrix(const ClassModelBank& bank, std::span<const BowHistogram> frames) {
  BankScorer scorer(bank);
  ObservationMatrix L{Matrix<double>(frames.size(), bank.class_count())};
  for (std::size_t t = 0; t < frames.size(); ++t) {
    auto s = scorer.scores(frames[t]);
    std::copy(s.begin(), s.end(), L.loglik.row(t).begin());
  }
  return L;
}

}  // namespace placerec
