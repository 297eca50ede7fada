#pragma once

// The `placerec` command-line tool. `run` is kept in a header so the tests can
// drive it in-process.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "image_io.hpp"
#include "placerec/placerec.hpp"

namespace placerec::cli {

namespace fs = std::filesystem;

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;

/// Output files are built in memory and only written once the whole
/// subcommand has succeeded, each through a temporary file and a rename.
class OutputSet {
 public:
  explicit OutputSet(fs::path dir) : dir_(std::move(dir)) {}

  std::ostringstream& file(const std::string& name) {
    for (auto& [n, s] : files_) {
      if (n == name) return s;
    }
    files_.emplace_back(name, std::ostringstream{});
    return files_.back().second;
  }

  /// Inputs that must never be overwritten.
  void protect(const std::string& path) { inputs_.push_back(path); }

  std::vector<fs::path> commit() {
    std::error_code ec;
    fs::create_directories(dir_, ec);
    if (ec) fail(ErrorKind::IoError, "cannot create output directory '" + dir_.string() + "': " + ec.message());
    for (const auto& [name, _] : files_) {
      for (const auto& in : inputs_) {
        if (fs::exists(dir_ / name) && fs::equivalent(dir_ / name, in, ec)) {
          fail(ErrorKind::IoError, "refusing to overwrite input file '" + in + "'");
        }
      }
    }
    std::vector<std::pair<fs::path, fs::path>> staged;
    auto discard = [&] {
      for (const auto& [tmp, _] : staged) fs::remove(tmp, ec);
    };
    for (const auto& [name, content] : files_) {
      fs::path final_path = dir_ / name;
      fs::path tmp = dir_ / ("." + name + ".partial");
      std::ofstream out(tmp, std::ios::binary);
      const std::string bytes = content.str();
      out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
      out.close();
      staged.emplace_back(tmp, final_path);
      if (!out) {
        discard();
        fail(ErrorKind::IoError, "cannot write '" + final_path.string() + "'");
      }
    }
    std::vector<fs::path> written;
    for (const auto& [tmp, final_path] : staged) {
      fs::rename(tmp, final_path, ec);
      if (ec) {
        discard();
        fail(ErrorKind::IoError, "cannot move output into place: '" + final_path.string() + "': " + ec.message());
      }
      written.push_back(final_path);
    }
    return written;
  }

 private:
  fs::path dir_;
  std::vector<std::pair<std::string, std::ostringstream>> files_;
  std::vector<std::string> inputs_;
};

struct GlobalOptions {
  std::uint64_t seed = 0;
  std::string out = ".";
  bool quiet = false;
  bool print_config = false;
};

/// Family hyperparameters shared by `train` and `bench-scene`.
struct ModelFlags {
  std::size_t components = DirichletMixtureOptions{}.components;
  std::size_t topics = LdaOptions{}.topics;
  std::string grid = "24x24";
  std::string window = "5x5";
  std::optional<std::size_t> em_iterations;

  void attach(CLI::App* app) {
    app->add_option("--components", components, "Dirichlet-mixture components")->capture_default_str();
    app->add_option("--topics", topics, "LDA topics per class")->capture_default_str();
    app->add_option("--grid", grid, "counting-grid size RxC")->capture_default_str();
    app->add_option("--window", window, "counting-grid window RxC")->capture_default_str();
    app->add_option("--em-iterations", em_iterations, "EM iteration cap for the chosen family");
  }

  BankConfig config(ModelFamily family) const {
    BankConfig c;
    c.family = family;
    c.dirmix.components = components;
    c.lda.topics = topics;
    c.cg.grid = parse_shape(grid, "--grid");
    c.cg.window = parse_shape(window, "--window");
    if (em_iterations) {
      c.dirmix.max_iterations = *em_iterations;
      c.lda.em_iterations = *em_iterations;
      c.cg.em_iterations = *em_iterations;
    }
    return c;
  }

  static GridShape parse_shape(const std::string& s, const char* flag) {
    const auto x = s.find('x');
    try {
      if (x == std::string::npos) throw std::invalid_argument(s);
      std::size_t used = 0;
      GridShape g{std::stoul(s.substr(0, x), &used), std::stoul(s.substr(x + 1))};
      if (used != x) throw std::invalid_argument(s);
      return g;
    } catch (const std::exception&) {
      throw CLI::ValidationError(flag, "expected ROWSxCOLS, got '" + s + "'");
    }
  }
};

inline CLI::Validator shape_validator() {
  return CLI::Validator(
      [](std::string& s) -> std::string {
        try {
          ModelFlags::parse_shape(s, "");
          return {};
        } catch (const CLI::ValidationError&) {
          return "expected ROWSxCOLS, got '" + s + "'";
        }
      },
      "ROWSxCOLS");
}

// ---------------------------------------------------------------------------
// Shared helpers
// ---------------------------------------------------------------------------

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorKind::IoError, "cannot open '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

/// Inline histograms from the manifest, overlaid with a histogram store file if given.
inline HistogramStore load_store(const Manifest& m, const std::string& hist_path) {
  HistogramStore store = inline_histograms(m);
  if (!hist_path.empty()) {
    for (auto& [id, h] : read_histogram_store(hist_path)) store.insert_or_assign(id, std::move(h));
  }
  return store;
}

inline fs::path resolve_image(const std::string& ref, const std::string& manifest_path, const std::string& root) {
  fs::path p(ref);
  if (p.is_absolute()) return p;
  if (!root.empty()) return fs::path(root) / p;
  return fs::path(manifest_path).parent_path() / p;
}

/// Generic dump of a subcommand's resolved flags plus subcommand-specific extras.
inline nlohmann::json option_dump(const CLI::App* sub, const GlobalOptions& g) {
  nlohmann::json j;
  j["subcommand"] = sub->get_name();
  j["seed"] = g.seed;
  j["out"] = g.out;
  nlohmann::json flags = nlohmann::json::object();
  for (const CLI::Option* o : sub->get_options()) {
    const std::string name = o->get_single_name();
    if (name == "help") continue;
    if (o->count() > 0) {
      const auto& res = o->results();
      flags[name] = res.size() == 1 ? nlohmann::json(res.front()) : nlohmann::json(res);
    } else {
      flags[name] = o->get_default_str();
    }
  }
  j["flags"] = flags;
  return j;
}

inline std::string percent(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * v);
  return buf;
}

struct Context {
  GlobalOptions global;
  std::ostream& out;
  std::ostream& err;
  const CLI::App* sub = nullptr;

  void say(const std::string& line) const {
    if (!global.quiet) out << line << '\n';
  }
  void finish(OutputSet& files) const {
    for (const auto& p : files.commit()) say("wrote " + p.string());
  }
  /// Prints the resolved configuration when --print-config is set.
  void echo_config(nlohmann::json extra) const {
    if (!global.print_config) return;
    auto j = option_dump(sub, global);
    j["resolved"] = std::move(extra);
    out << j.dump(2) << '\n';
  }
};

// ---------------------------------------------------------------------------
// Subcommands
// ---------------------------------------------------------------------------

struct SynthFlags {
  SyntheticSpec spec;
  std::size_t train_per_class = 0;
};

inline void cmd_synth(const Context& ctx, const SynthFlags& f) {
  const auto seed = derive_seed(ctx.global.seed, "synth");
  const auto train_seed = derive_seed(ctx.global.seed, "synth/train-images");
  ctx.echo_config({{"synth_seed", seed}, {"train_seed", train_seed}});
  auto corpus = generate_synthetic(f.spec, seed);
  OutputSet files(ctx.global.out);
  write_manifest(files.file("day_manifest.csv"), corpus.manifest);
  files.file("ground_truth.json") << to_json(corpus.truth).dump(2) << '\n';
  if (f.train_per_class > 0) {
    auto train = sample_class_images(corpus.truth, f.train_per_class, f.spec.words_per_image, train_seed);
    write_manifest(files.file("train_manifest.csv"), train);
  }
  ctx.finish(files);
}

struct CodebookFlags {
  std::string manifest;
  std::string image_root;
  std::size_t z = 200;
  std::size_t sample = 100000;
  std::size_t patch = 16;
  std::size_t stride = 8;
  std::size_t iterations = 100;
};

inline void cmd_codebook(const Context& ctx, const CodebookFlags& f) {
  const auto reservoir_seed = derive_seed(ctx.global.seed, "codebook/reservoir");
  const auto kmeans_seed = derive_seed(ctx.global.seed, "codebook/kmeans");
  ctx.echo_config({{"reservoir_seed", reservoir_seed}, {"kmeans_seed", kmeans_seed}});
  const auto m = load_manifest(f.manifest);
  DescriptorReservoir reservoir(f.sample, reservoir_seed);
  const DenseGrid grid{f.patch, f.stride};
  std::size_t images = 0;
  for (const auto& r : m.records) {
    if (is_inline_histogram(r.image_ref)) continue;
    try {
      reservoir.add(extract_dense_descriptors(load_image(resolve_image(r.image_ref, f.manifest, f.image_root)), grid));
    } catch (const Error& e) {
      throw e.with_context("image '" + r.id + "'");
    }
    ++images;
  }
  if (images == 0) fail(ErrorKind::NoData, "manifest references no image files");
  KMeansOptions opt;
  opt.max_iterations = f.iterations;
  auto result = build_codebook(reservoir.sample(), f.z, kmeans_seed, opt);
  result.codebook.source_manifest_hash = hex64(fnv1a(read_file_bytes(f.manifest)));
  OutputSet files(ctx.global.out);
  files.protect(f.manifest);
  files.file("codebook.json") << to_json(result.codebook).dump() << '\n';
  ctx.say("codebook: Z=" + std::to_string(f.z) + " from " + std::to_string(reservoir.sample().size()) +
          " sampled descriptors of " + std::to_string(images) + " images");
  ctx.finish(files);
}

struct FeaturizeFlags {
  std::string manifest;
  std::string codebook;
  std::string image_root;
  std::size_t patch = 16;
  std::size_t stride = 8;
};

inline void cmd_featurize(const Context& ctx, const FeaturizeFlags& f) {
  ctx.echo_config(nlohmann::json::object());
  const auto m = load_manifest(f.manifest);
  std::optional<Codebook> cb;
  if (!f.codebook.empty()) cb = read_codebook(f.codebook);
  const DenseGrid grid{f.patch, f.stride};
  HistogramStore store;
  for (const auto& r : m.records) {
    if (is_inline_histogram(r.image_ref)) {
      store.emplace(r.id, parse_inline_histogram(r.image_ref));
      continue;
    }
    if (!cb) fail(ErrorKind::MissingField, "record '" + r.id + "' references an image but no --codebook was given");
    try {
      const auto descs = extract_dense_descriptors(load_image(resolve_image(r.image_ref, f.manifest, f.image_root)), grid);
      store.emplace(r.id, quantize(descs, *cb));
    } catch (const Error& e) {
      throw e.with_context("image '" + r.id + "'");
    }
  }
  OutputSet files(ctx.global.out);
  files.protect(f.manifest);
  if (!f.codebook.empty()) files.protect(f.codebook);
  write_histogram_store(files.file("histograms.csv"), store);
  ctx.say("featurized " + std::to_string(store.size()) + " records");
  ctx.finish(files);
}

struct TrainFlags {
  std::string manifest;
  std::string hist;
  std::string family = "cg";
  std::optional<std::uint64_t> split_seed;
  std::size_t n_train = 15;
  ModelFlags model;
};

inline void cmd_train(const Context& ctx, const TrainFlags& f) {
  const auto config = f.model.config(parse_family(f.family));
  const auto split_seed = f.split_seed.value_or(derive_seed(ctx.global.seed, "train/split"));
  const auto model_seed = derive_seed(ctx.global.seed, "train/models");
  ctx.echo_config({{"bank_config", to_json(config)},
                   {"config_digest", config_digest(config)},
                   {"split_seed", split_seed},
                   {"model_seed", model_seed}});
  const auto m = load_manifest(f.manifest);
  const auto store = load_store(m, f.hist);
  Split split;
  if (f.n_train == 0) {
    split.train.resize(m.class_count());
    split.test.resize(m.class_count());
    const auto by_class = m.records_by_class();
    for (std::size_t k = 0; k < by_class.size(); ++k) {
      for (auto i : by_class[k]) split.train[k].push_back(m.records[i].id);
    }
  } else {
    split = split_protocol(m, f.n_train, 0, 1, split_seed).front();
  }
  auto bank = train_bank(m, split, store, config, model_seed);
  OutputSet files(ctx.global.out);
  files.protect(f.manifest);
  if (!f.hist.empty()) files.protect(f.hist);
  files.file("bank.json") << to_json(bank).dump() << '\n';
  ctx.say("trained " + std::string(family_name(config.family)) + " bank for " + std::to_string(bank.class_count()) +
          " classes (config " + config_digest(config) + ")");
  ctx.finish(files);
}

struct ClassifyFlags {
  std::string bank;
  std::string hist;
};

inline void cmd_classify(const Context& ctx, const ClassifyFlags& f) {
  ctx.echo_config(nlohmann::json::object());
  HistogramStore store;
  if (is_inline_histogram(f.hist)) {
    store.emplace("-", parse_inline_histogram(f.hist));
  } else {
    store = read_histogram_store(f.hist);
  }
  const auto bank = read_bank(f.bank);
  const BankScorer scorer(bank);
  std::ostringstream table;
  table << "id,label";
  for (const auto& name : bank.class_names) table << ',' << csv::quote(name);
  table << '\n';
  for (const auto& [id, h] : store) {
    Classification c;
    try {
      c = scorer.classify(h);
    } catch (const Error& e) {
      throw e.with_context("histogram '" + id + "'");
    }
    table << csv::quote(id) << ',' << csv::quote(bank.class_names[c.label]);
    for (double s : c.scores) table << ',' << csv::format_real(s);
    table << '\n';
  }
  // Nothing reaches standard output until every histogram has been scored.
  ctx.out << table.str();
}

struct HmmFlags {
  std::optional<double> kappa;
  double lambda = DayBenchOptions{}.lambda_scale;
  double base_alpha = DayBenchOptions{}.base_alpha;
  std::size_t iterations = DayBenchOptions{}.iterations;
  double tolerance = DayBenchOptions{}.tolerance;

  void attach(CLI::App* app) {
    app->add_option("--kappa", kappa, "self-transition pseudo-count (default 50*T/K)");
    app->add_option("--lambda", lambda, "likelihood rescaling factor in (0,1]")->capture_default_str();
    app->add_option("--base-alpha", base_alpha, "symmetric Dirichlet prior on transitions")->capture_default_str();
    app->add_option("--iterations", iterations, "Baum-Welch iteration cap")->capture_default_str();
    app->add_option("--tolerance", tolerance, "Baum-Welch relative tolerance")->capture_default_str();
  }
};

inline void write_labels_csv(std::ostream& os, const Manifest& day, const ClassModelBank& bank,
                             const std::vector<std::size_t>& off, const std::vector<std::size_t>& filtered,
                             const std::vector<std::size_t>& smoothed) {
  os << "id,timestamp,truth,hmm_off,filtered,smoothed\n";
  for (std::size_t t = 0; t < day.records.size(); ++t) {
    const auto& r = day.records[t];
    os << csv::quote(r.id) << ',' << detail::format_timestamp(r.timestamp) << ','
       << (r.label ? csv::quote(day.class_names[*r.label]) : std::string()) << ','
       << csv::quote(bank.class_names[off[t]]) << ',' << csv::quote(bank.class_names[filtered[t]]) << ','
       << csv::quote(bank.class_names[smoothed[t]]) << '\n';
  }
}

struct SmoothFlags {
  std::string bank;
  std::string day_manifest;
  std::string hist;
  HmmFlags hmm;
};

inline void cmd_smooth(const Context& ctx, const SmoothFlags& f) {
  const auto bank = read_bank(f.bank);
  const auto day = load_manifest(f.day_manifest);
  const double kappa = f.hmm.kappa.value_or(default_kappa(day.records.size(), bank.class_count()));
  ctx.echo_config({{"kappa", kappa}});
  if (day.class_count() != 0 && day.class_names != bank.class_names) {
    fail(ErrorKind::DimensionMismatch, "day manifest classes differ from the bank's");
  }
  if (day.records.empty()) fail(ErrorKind::EmptyInput, "day manifest has no frames");
  const auto store = load_store(day, f.hist);
  const auto L = observation_matrix(bank, frame_histograms(day, store));
  BaumWelchOptions bw;
  bw.kappa = kappa;
  bw.base_alpha = f.hmm.base_alpha;
  bw.max_iterations = f.hmm.iterations;
  bw.tolerance = f.hmm.tolerance;
  auto result = baum_welch_map(rescale(L, f.hmm.lambda), bank.class_count(), bw);
  result.params.lambda_scale = f.hmm.lambda;

  OutputSet files(ctx.global.out);
  files.protect(f.bank);
  files.protect(f.day_manifest);
  if (!f.hist.empty()) files.protect(f.hist);
  write_matrix_csv(files.file("filtered.csv"), result.posteriors.filtered);
  write_matrix_csv(files.file("smoothed.csv"), result.posteriors.smoothed);
  write_matrix_csv(files.file("observations.csv"), L.loglik);
  write_labels_csv(files.file("labels.csv"), day, bank, decode_observations(L),
                   decode(result.posteriors, DecodeMode::Filtered), decode(result.posteriors, DecodeMode::Smoothed));
  files.file("hmm.json") << to_json(result.params).dump(2) << '\n';
  ctx.say("smoothed " + std::to_string(L.frames()) + " frames in " + std::to_string(result.objective_trace.size()) +
          " Baum-Welch iterations");
  ctx.finish(files);
}

struct BenchSceneFlags {
  std::string manifest;
  std::string hist;
  std::vector<std::string> families{"lda", "dirmix", "cg"};
  std::size_t n_train = SceneBenchOptions{}.n_train;
  std::size_t n_test_max = SceneBenchOptions{}.n_test_max;
  std::size_t repeats = SceneBenchOptions{}.repeats;
  ModelFlags model;
};

inline void cmd_bench_scene(const Context& ctx, const BenchSceneFlags& f) {
  std::vector<BankConfig> configs;
  nlohmann::json resolved = nlohmann::json::array();
  for (const auto& name : f.families) {
    configs.push_back(f.model.config(parse_family(name)));
    resolved.push_back({{"config", to_json(configs.back())}, {"config_digest", config_digest(configs.back())}});
  }
  ctx.echo_config({{"banks", resolved},
                   {"split_seed", derive_seed(ctx.global.seed, "split")},
                   {"train_seed_pattern", "derive_seed(seed, \"train/<repeat>\")"}});
  const auto m = load_manifest(f.manifest);
  const auto store = load_store(m, f.hist);
  const auto report = bench_scene(m, store, configs, {f.n_train, f.n_test_max, f.repeats}, ctx.global.seed);
  OutputSet files(ctx.global.out);
  files.protect(f.manifest);
  if (!f.hist.empty()) files.protect(f.hist);
  write_report_csv(files.file("bench_scene.csv"), report);
  for (const auto& mean : report.means) {
    ctx.say(mean.method + " mean accuracy " + percent(mean.mean));
  }
  ctx.finish(files);
}

struct BenchDayFlags {
  std::string bank;
  std::string day_manifest;
  std::string hist;
  HmmFlags hmm;
};

inline void cmd_bench_day(const Context& ctx, const BenchDayFlags& f) {
  const auto bank = read_bank(f.bank);
  const auto day = load_manifest(f.day_manifest);
  DayBenchOptions opt;
  opt.kappa = f.hmm.kappa;
  opt.lambda_scale = f.hmm.lambda;
  opt.base_alpha = f.hmm.base_alpha;
  opt.iterations = f.hmm.iterations;
  opt.tolerance = f.hmm.tolerance;
  ctx.echo_config({{"kappa", opt.kappa.value_or(default_kappa(day.records.size(), bank.class_count()))},
                   {"config_digest", config_digest(bank.config)}});
  const auto store = load_store(day, f.hist);
  const auto result = bench_day(day, store, bank, opt);
  const auto report = day_report(result, bank, opt, ctx.global.seed);
  OutputSet files(ctx.global.out);
  files.protect(f.bank);
  files.protect(f.day_manifest);
  if (!f.hist.empty()) files.protect(f.hist);
  write_report_csv(files.file("bench_day.csv"), report);
  write_matrix_csv(files.file("filtered.csv"), result.hmm.posteriors.filtered);
  write_matrix_csv(files.file("smoothed.csv"), result.hmm.posteriors.smoothed);
  write_labels_csv(files.file("labels.csv"), day, bank, result.labels_off, result.labels_filtered,
                   result.labels_smoothed);
  ctx.say("hmm off " + percent(result.hmm_off) + ", filtered " + percent(result.hmm_on_filtered) + ", smoothed " +
          percent(result.hmm_on_smoothed));
  ctx.finish(files);
}

struct StatsFlags {
  std::string manifest;
};

inline void cmd_stats(const Context& ctx, const StatsFlags& f) {
  ctx.echo_config(nlohmann::json::object());
  const auto m = load_manifest(f.manifest);
  const auto rep = corpus_stats(m);
  OutputSet files(ctx.global.out);
  files.protect(f.manifest);
  write_stats_csv(files.file("stats.csv"), m, rep);
  if (!ctx.global.quiet) write_stats_csv(ctx.out, m, rep);
  ctx.finish(files);
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Runs the tool on `args` (without the program name). Exit codes: 0 success,
/// 1 usage error, 2 data error.
inline int run(const std::vector<std::string>& args, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
  CLI::App app{"Place recognition from wearable-camera image streams", "placerec"};
  app.require_subcommand(1);
  app.fallthrough();

  GlobalOptions g;
  app.add_option("--seed", g.seed, "master seed; every stage derives a named sub-seed")->capture_default_str();
  app.add_option("--out", g.out, "output directory (created if missing)")->capture_default_str();
  app.add_flag("--quiet", g.quiet, "suppress progress messages");
  app.add_flag("--print-config", g.print_config, "echo the fully resolved configuration");

  auto existing = CLI::ExistingFile;

  SynthFlags synth;
  auto* s_synth = app.add_subcommand("synth", "generate a synthetic day sequence with known labels");
  s_synth->add_option("--k", synth.spec.classes, "number of places")->capture_default_str();
  s_synth->add_option("--z", synth.spec.vocabulary, "vocabulary size")->capture_default_str();
  s_synth->add_option("--t", synth.spec.length, "frames in the day sequence")->capture_default_str();
  s_synth->add_option("--self-prob", synth.spec.self_prob, "probability of staying in place")->capture_default_str();
  s_synth->add_option("--words-per-image", synth.spec.words_per_image, "words per frame")->capture_default_str();
  s_synth->add_option("--sharpness", synth.spec.class_sharpness, "separation of class word distributions")
      ->capture_default_str();
  s_synth->add_option("--train-per-class", synth.train_per_class, "also write a training manifest")
      ->capture_default_str();

  CodebookFlags codebook;
  auto* s_codebook = app.add_subcommand("codebook", "build a visual-word codebook with k-means");
  s_codebook->add_option("--manifest", codebook.manifest, "manifest of training images")->required()->check(existing);
  s_codebook->add_option("--z", codebook.z, "codebook size")->capture_default_str();
  s_codebook->add_option("--sample", codebook.sample, "descriptor reservoir size")->capture_default_str();
  s_codebook->add_option("--patch", codebook.patch, "patch size in pixels")->capture_default_str();
  s_codebook->add_option("--stride", codebook.stride, "patch spacing in pixels")->capture_default_str();
  s_codebook->add_option("--iterations", codebook.iterations, "Lloyd iteration cap")->capture_default_str();
  s_codebook->add_option("--image-root", codebook.image_root, "directory image paths are relative to")
      ->check(CLI::ExistingDirectory);

  FeaturizeFlags featurize;
  auto* s_featurize = app.add_subcommand("featurize", "turn images into bag-of-words histograms");
  s_featurize->add_option("--manifest", featurize.manifest, "manifest to featurize")->required()->check(existing);
  s_featurize->add_option("--codebook", featurize.codebook, "codebook file")->check(existing);
  s_featurize->add_option("--patch", featurize.patch, "patch size in pixels")->capture_default_str();
  s_featurize->add_option("--stride", featurize.stride, "patch spacing in pixels")->capture_default_str();
  s_featurize->add_option("--image-root", featurize.image_root, "directory image paths are relative to")
      ->check(CLI::ExistingDirectory);

  TrainFlags train;
  auto* s_train = app.add_subcommand("train", "train one model per class");
  s_train->add_option("--manifest", train.manifest, "labeled manifest")->required()->check(existing);
  s_train->add_option("--hist", train.hist, "histogram store (inline histograms are used otherwise)")
      ->check(existing);
  s_train->add_option("--family", train.family, "model family")
      ->check(CLI::IsMember({"dirmix", "lda", "cg"}))
      ->capture_default_str();
  s_train->add_option("--split-seed", train.split_seed, "seed of the training split");
  s_train->add_option("--n-train", train.n_train, "training images per class (0 = all)")->capture_default_str();
  train.model.attach(s_train);

  ClassifyFlags classify;
  auto* s_classify = app.add_subcommand("classify", "print the label and class scores of histograms");
  s_classify->add_option("--bank", classify.bank, "model bank")->required()->check(existing);
  s_classify->add_option("--hist", classify.hist, "histogram store file or an inline 'hist:...' histogram")
      ->required()
      ->check(CLI::Validator(
          [](std::string& v) -> std::string {
            if (is_inline_histogram(v) || fs::is_regular_file(v)) return {};
            return "not an inline histogram or an existing file: " + v;
          },
          "FILE|hist:..."));

  SmoothFlags smooth;
  auto* s_smooth = app.add_subcommand("smooth", "HMM smoothing of a day sequence");
  s_smooth->add_option("--bank", smooth.bank, "model bank")->required()->check(existing);
  s_smooth->add_option("--day-manifest", smooth.day_manifest, "day sequence manifest")->required()->check(existing);
  s_smooth->add_option("--hist", smooth.hist, "histogram store")->check(existing);
  smooth.hmm.attach(s_smooth);

  BenchSceneFlags scene;
  auto* s_scene = app.add_subcommand("bench-scene", "repeated train/test scene classification benchmark");
  s_scene->add_option("--manifest", scene.manifest, "labeled manifest")->required()->check(existing);
  s_scene->add_option("--hist", scene.hist, "histogram store")->check(existing);
  s_scene->add_option("--families", scene.families, "families to compare")
      ->delimiter(',')
      ->check(CLI::IsMember({"dirmix", "lda", "cg"}))
      ->capture_default_str();
  s_scene->add_option("--n-train", scene.n_train, "training images per class")->capture_default_str();
  s_scene->add_option("--n-test-max", scene.n_test_max, "test images per class, at most")->capture_default_str();
  s_scene->add_option("--repeats", scene.repeats, "independent splits")->capture_default_str();
  scene.model.attach(s_scene);

  BenchDayFlags day;
  auto* s_day = app.add_subcommand("bench-day", "day-sequence accuracy with the HMM off and on");
  s_day->add_option("--bank", day.bank, "model bank")->required()->check(existing);
  s_day->add_option("--day-manifest", day.day_manifest, "labeled day manifest")->required()->check(existing);
  s_day->add_option("--hist", day.hist, "histogram store")->check(existing);
  day.hmm.attach(s_day);

  StatsFlags stats;
  auto* s_stats = app.add_subcommand("stats", "per-class days seen and time-of-day histogram");
  s_stats->add_option("--manifest", stats.manifest, "labeled manifest")->required()->check(existing);

  for (auto* sub : {s_train, s_scene}) {
    sub->get_option("--grid")->check(shape_validator());
    sub->get_option("--window")->check(shape_validator());
  }

  std::vector<std::string> argv_store{"placerec"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<char*> argv;
  for (auto& a : argv_store) argv.push_back(a.data());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  Context ctx{g, out, err, app.get_subcommands().front()};
  const std::string name = ctx.sub->get_name();
  try {
    if (name == "synth") cmd_synth(ctx, synth);
    else if (name == "codebook") cmd_codebook(ctx, codebook);
    else if (name == "featurize") cmd_featurize(ctx, featurize);
    else if (name == "train") cmd_train(ctx, train);
    else if (name == "classify") cmd_classify(ctx, classify);
    else if (name == "smooth") cmd_smooth(ctx, smooth);
    else if (name == "bench-scene") cmd_bench_scene(ctx, scene);
    else if (name == "bench-day") cmd_bench_day(ctx, day);
    else if (name == "stats") cmd_stats(ctx, stats);
  } catch (const Error& e) {
    err << "placerec " << name << ": " << e.what() << '\n';
    // Bad flag values are reported like any other usage error.
    const bool usage = e.kind() == ErrorKind::InvalidSpec || e.kind() == ErrorKind::InvalidHyperparameter ||
                       e.kind() == ErrorKind::NonPositiveLambda;
    return usage ? kExitUsage : kExitData;
  } catch (const std::exception& e) {
    err << "placerec " << name << ": " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}

}  // namespace placerec::cli
