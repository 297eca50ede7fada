// Acceptance runner: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <chrono>
#include <cstdio>
#include <functional>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "oracles.hpp"
#include "placerec/placerec.hpp"

using namespace placerec;

namespace {

struct Verdict {
  bool pass = true;
  std::string detail;
};

oracle::Mat to_mat(const Matrix<double>& m) {
  oracle::Mat out(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) out[i].assign(m.row(i).begin(), m.row(i).end());
  return out;
}

std::vector<double> random_simplex(std::size_t K, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> v(K);
  double s = 0;
  for (auto& x : v) s += (x = u(rng));
  for (auto& x : v) x /= s;
  return v;
}

std::vector<BowHistogram> histograms_of(const Manifest& m) {
  std::vector<BowHistogram> out;
  auto store = inline_histograms(m);
  for (const auto& r : m.records) out.push_back(store.at(r.id));
  return out;
}

/// Largest relative drop between consecutive entries (0 when monotone).
double worst_drop(const std::vector<double>& trace) {
  double worst = 0;
  for (std::size_t i = 1; i < trace.size(); ++i) {
    const double drop = (trace[i - 1] - trace[i]) / std::max(1.0, std::abs(trace[i - 1]));
    worst = std::max(worst, drop);
  }
  return worst;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

Verdict hmm_oracle() {
  std::mt19937_64 rng(1);
  std::normal_distribution<double> n(0.0, 3.0);
  double worst = 0;
  const int instances = 200;
  for (int i = 0; i < instances; ++i) {
    const std::size_t T = 1 + rng() % 6, K = 1 + rng() % 4;
    ObservationMatrix L{Matrix<double>(T, K)};
    for (auto& v : L.loglik.flat()) v = n(rng);
    HmmParams p;
    p.initial = random_simplex(K, rng);
    p.transition = Matrix<double>(K, K);
    for (std::size_t c = 0; c < K; ++c) {
      auto row = random_simplex(K, rng);
      std::copy(row.begin(), row.end(), p.transition.row(c).begin());
    }
    const auto ref = oracle::hmm_by_enumeration(to_mat(L.loglik), p.initial, to_mat(p.transition));
    const auto fb = forward_backward(L, p);
    const auto ff = forward_filter(L, p);
    worst = std::max({worst, std::abs(fb.posteriors.seq_loglik - ref.loglik), std::abs(ff.seq_loglik - ref.loglik)});
    for (std::size_t t = 0; t < T; ++t) {
      for (std::size_t k = 0; k < K; ++k) {
        worst = std::max({worst, std::abs(fb.posteriors.filtered(t, k) - ref.filtered[t][k]),
                          std::abs(ff.filtered(t, k) - ref.filtered[t][k]),
                          std::abs(fb.posteriors.smoothed(t, k) - ref.smoothed[t][k])});
      }
    }
    for (std::size_t t = 0; t + 1 < T; ++t) {
      for (std::size_t c = 0; c < K; ++c) {
        for (std::size_t k = 0; k < K; ++k) worst = std::max(worst, std::abs(fb.xi[t](c, k) - ref.xi[t][c][k]));
      }
    }
  }
  return {worst <= 1e-8, std::to_string(instances) + " instances, max abs error " + fmt("%.2e", worst)};
}

Verdict em_monotone() {
  Verdict v;
  double bw = 0, dm = 0, lda = 0, cg = 0;
  for (std::uint64_t seed = 1; seed <= 20; ++seed) {
    SyntheticSpec spec;
    spec.classes = 5;
    spec.length = 500;
    spec.class_sharpness = 0.5;
    auto c = generate_synthetic(spec, seed);
    auto train = sample_class_images(c.truth, 20, spec.words_per_image, seed + 1000);
    std::vector<std::vector<BowHistogram>> by_class(5);
    auto store = inline_histograms(train);
    for (const auto& r : train.records) by_class[*r.label].push_back(store.at(r.id));
    DirichletMixtureOptions d;
    d.components = 2;
    ObservationMatrix L{Matrix<double>(spec.length, 5)};
    std::vector<DirichletMixture> models;
    for (std::size_t k = 0; k < 5; ++k) models.push_back(fit_dirichlet_mixture(by_class[k], d, seed).model);
    const auto frames = histograms_of(c.manifest);
    for (std::size_t t = 0; t < frames.size(); ++t) {
      for (std::size_t k = 0; k < 5; ++k) L.loglik(t, k) = dirichlet_mixture_score(models[k], frames[t]);
    }
    BaumWelchOptions opt;
    opt.kappa = default_kappa(spec.length, 5);
    opt.max_iterations = 50;
    opt.tolerance = 0;
    bw = std::max(bw, worst_drop(baum_welch_map(rescale(L, 0.2), 5, opt).objective_trace));
  }
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticSpec spec;
    spec.classes = 3;
    spec.vocabulary = 25;
    spec.length = 80;
    const auto docs = histograms_of(generate_synthetic(spec, seed).manifest);
    DirichletMixtureOptions d;
    d.tolerance = 0;
    d.max_iterations = 50;
    dm = std::max(dm, worst_drop(fit_dirichlet_mixture(docs, d, seed).loglik_trace));
    LdaOptions l;
    l.topics = 5;
    l.em_iterations = 40;
    l.tolerance = 0;
    lda = std::max(lda, worst_drop(fit_lda(docs, l, seed).bound_trace));
    CountingGridOptions g;
    g.grid = {8, 8};
    g.window = {3, 3};
    g.em_iterations = 50;
    g.tolerance = 0;
    cg = std::max(cg, worst_drop(fit_counting_grid(docs, g, seed).loglik_trace));
  }
  v.pass = std::max({bw, dm, lda, cg}) <= 1e-7;
  v.detail = "worst relative drop: bw " + fmt("%.1e", bw) + ", dirmix " + fmt("%.1e", dm) + ", lda " +
             fmt("%.1e", lda) + ", cg " + fmt("%.1e", cg);
  return v;
}

Verdict dirichlet_recovery() {
  const std::vector<double> alpha{2.0, 5.0, 3.0};
  double worst = 0;
  int ok = 0;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> pts;
    for (int i = 0; i < 10000; ++i) pts.push_back(oracle::sample_dirichlet(alpha, rng));
    DirichletMixtureOptions opt;
    opt.components = 1;
    const auto fit = fit_dirichlet_mixture_points(pts, opt, seed);
    double err = 0;
    for (std::size_t k = 0; k < 3; ++k) err = std::max(err, std::abs(fit.model.alphas[0][k] - alpha[k]) / alpha[k]);
    worst = std::max(worst, err);
    ok += err <= 0.05;
  }
  return {ok == 5, std::to_string(ok) + "/5 seeds within 5%, worst relative error " + fmt("%.3f", worst)};
}

Verdict lda_bound() {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.05, 1.0), a(0.5, 3.0);
  double worst = -1e300;
  const int instances = 40;
  for (int i = 0; i < instances; ++i) {
    LdaModel m;
    m.topics = Matrix<double>(2, 3);
    for (std::size_t k = 0; k < 2; ++k) {
      auto row = random_simplex(3, rng);
      std::copy(row.begin(), row.end(), m.topics.row(k).begin());
    }
    m.alpha = {a(rng), a(rng)};
    m.vi_iterations = 1000;
    m.vi_tolerance = 1e-14;
    BowHistogram h{{0, 0, 0}};
    std::vector<std::size_t> words;
    const std::size_t n = 1 + rng() % 4;
    for (std::size_t w = 0; w < n; ++w) ++h.counts[rng() % 3];
    for (std::size_t z = 0; z < 3; ++z) words.insert(words.end(), h.counts[z], z);
    const double exact =
        oracle::lda_two_topic_loglik(to_mat(m.topics), m.alpha[0], m.alpha[1], words, oracle::beta_moment_quadrature);
    worst = std::max(worst, lda_free_energy(m, h) - exact);
  }
  return {worst <= 1e-9, std::to_string(instances) + " instances, max(bound - exact) " + fmt("%.2e", worst)};
}

Verdict counting_grid_checks() {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.vocabulary = 8;
  spec.length = 40;
  spec.words_per_image = 50;
  const auto docs = histograms_of(generate_synthetic(spec, 7).manifest);
  CountingGridOptions opt;
  opt.grid = {3, 4};
  opt.window = {3, 4};
  opt.em_iterations = 3000;
  opt.tolerance = 1e-15;
  const auto fit = fit_counting_grid(docs, opt, 2);
  std::vector<double> agg(8, 0.0);
  double total = 0;
  for (const auto& d : docs) {
    for (std::size_t z = 0; z < 8; ++z) agg[z] += d.counts[z], total += d.counts[z];
  }
  const auto h = window_distributions(fit.model);
  double collapse = 0;
  for (std::size_t l = 0; l < 12; ++l) {
    for (std::size_t z = 0; z < 8; ++z) collapse = std::max(collapse, std::abs(h(l, z) - agg[z] / total));
  }

  std::mt19937_64 rng(3);
  double shift = 0;
  for (int trial = 0; trial < 50; ++trial) {
    GridShape grid{3 + rng() % 6, 3 + rng() % 6};
    CountingGrid m{grid, {1 + rng() % 3, 1 + rng() % 3}, Matrix<double>(grid.area(), 7)};
    for (std::size_t i = 0; i < grid.area(); ++i) {
      auto row = random_simplex(7, rng);
      std::copy(row.begin(), row.end(), m.pi.row(i).begin());
    }
    BowHistogram doc{std::vector<std::uint32_t>(7, 0)};
    for (int w = 0; w < 40; ++w) ++doc.counts[rng() % 7];
    const std::size_t s1 = rng() % grid.rows, s2 = rng() % grid.cols;
    CountingGrid shifted = m;
    for (std::size_t r = 0; r < grid.rows; ++r) {
      for (std::size_t c = 0; c < grid.cols; ++c) {
        auto src = m.pi.row(r * grid.cols + c);
        std::copy(src.begin(), src.end(),
                  shifted.pi.row(((r + s1) % grid.rows) * grid.cols + (c + s2) % grid.cols).begin());
      }
    }
    shift = std::max(shift, std::abs(counting_grid_score(shifted, doc) - counting_grid_score(m, doc)));
  }
  return {collapse <= 1e-6 && shift <= 1e-10,
          "collapse error " + fmt("%.2e", collapse) + ", shift error " + fmt("%.2e", shift) + " over 50 grids"};
}

Verdict day_lift() {
  Verdict v;
  int ok = 0;
  std::string per_seed;
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    SyntheticSpec spec;
    spec.classes = 8;
    spec.length = 2000;
    spec.self_prob = 0.95;
    spec.words_per_image = 100;
    spec.class_sharpness = 0.3;
    const auto day = generate_synthetic(spec, seed);
    const auto train = sample_class_images(day.truth, 30, spec.words_per_image, derive_seed(seed, "train-images"));
    auto store = inline_histograms(day.manifest);
    for (auto& [id, h] : inline_histograms(train)) store.emplace(id, h);
    Split split;
    split.train.resize(spec.classes);
    split.test.resize(spec.classes);
    for (const auto& r : train.records) split.train[*r.label].push_back(r.id);
    BankConfig config;
    config.family = ModelFamily::DirichletMixture;
    const auto bank = train_bank(train, split, store, config, seed);
    const auto r = bench_day(day.manifest, store, bank, {});
    const double lift = r.hmm_on_filtered - r.hmm_off;
    ok += lift >= 0.05;
    per_seed += (seed > 1 ? ", " : "") + fmt("%+.1fpp", 100 * lift);
  }
  return {ok == 5, std::to_string(ok) + "/5 seeds with filtered >= off + 5pp (" + per_seed + ")"};
}

Verdict protocol() {
  SyntheticSpec spec;
  spec.classes = 8;
  spec.length = 400;
  spec.class_sharpness = 0.7;
  const auto day = generate_synthetic(spec, 11);
  const auto scene = sample_class_images(day.truth, 40, spec.words_per_image, 12);
  const auto store = inline_histograms(scene);
  std::vector<BankConfig> configs(3);
  configs[0].family = ModelFamily::Lda;
  configs[0].lda.topics = 10;
  configs[0].lda.em_iterations = 30;
  configs[1].family = ModelFamily::DirichletMixture;
  configs[2].family = ModelFamily::CountingGrid;
  configs[2].cg.grid = {12, 12};
  configs[2].cg.window = {3, 3};
  configs[2].cg.em_iterations = 30;
  std::string csv[2];
  for (auto& out : csv) {
    std::ostringstream os;
    write_report_csv(os, bench_scene(scene, store, configs, {15, 15, 5}, 2024));
    out = os.str();
  }
  const bool identical = csv[0] == csv[1];

  std::mt19937_64 rng(99);
  int disjoint = 0;
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t K = 1 + rng() % 6, n_train = 1 + rng() % 6, n_test_max = 1 + rng() % 10;
    Manifest m;
    for (std::size_t k = 0; k < K; ++k) m.class_names.push_back("c" + std::to_string(k));
    std::size_t id = 0;
    for (std::size_t k = 0; k < K; ++k) {
      const std::size_t n = n_train + 1 + rng() % 20;
      for (std::size_t i = 0; i < n; ++i) m.records.push_back({"r" + std::to_string(id++), "hist:1", 0.0, k});
    }
    if (rng() % 2) m.records.push_back({"u" + std::to_string(id++), "hist:1", 0.0, std::nullopt});
    std::shuffle(m.records.begin(), m.records.end(), rng);
    const auto by_class = m.records_by_class();
    bool ok = true;
    for (const auto& s : split_protocol(m, n_train, n_test_max, 1 + rng() % 3, rng())) {
      std::set<std::string> seen;
      for (std::size_t k = 0; k < K; ++k) {
        std::set<std::string> members;
        for (auto i : by_class[k]) members.insert(m.records[i].id);
        ok &= s.train[k].size() == n_train;
        ok &= s.test[k].size() == std::min(n_test_max, by_class[k].size() - n_train);
        for (const auto* part : {&s.train[k], &s.test[k]}) {
          for (const auto& x : *part) ok &= members.count(x) == 1 && seen.insert(x).second;
        }
      }
    }
    disjoint += ok;
  }
  return {identical && disjoint == 1000, std::string("reruns ") + (identical ? "byte-identical" : "DIFFER") + ", " +
                                             std::to_string(disjoint) + "/1000 random manifests disjoint"};
}

Verdict conservation() {
  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 255.0);
  std::vector<Descriptor> sample;
  for (int i = 0; i < 4; ++i) {
    GrayImage img(96, 96, 0.0);
    for (std::size_t y = 0; y < 96; ++y) {
      for (std::size_t x = 0; x < 96; ++x) img.at(x, y) = u(rng);
    }
    for (auto& d : extract_dense_descriptors(img)) sample.push_back(d);
  }
  const auto cb = build_codebook(sample, 30, 1).codebook;
  int ok = 0;
  for (int i = 0; i < 100; ++i) {
    const std::size_t w = 16 + rng() % 150, h = 16 + rng() % 150;
    GrayImage img(w, h, 0.0);
    const double fx = u(rng) / 100, fy = u(rng) / 100;
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) img.at(x, y) = 128 + 100 * std::sin(fx * x + fy * y) + 0.2 * u(rng);
    }
    const auto descs = extract_dense_descriptors(img);
    const DenseGrid g;
    ok += descs.size() == grid_positions(w, g) * grid_positions(h, g) && quantize(descs, cb).total() == descs.size();
  }
  const std::size_t vga = extract_dense_descriptors(GrayImage(640, 480, 0.5)).size();
  return {ok == 100 && vga == 4661,
          std::to_string(ok) + "/100 images conserve counts, 640x480 gives " + std::to_string(vga) + " descriptors"};
}

}  // namespace

int main() {
  const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
      {"HMM inference matches path enumeration", hmm_oracle},
      {"EM objectives are non-decreasing", em_monotone},
      {"Dirichlet MLE recovers alpha", dirichlet_recovery},
      {"LDA bound never exceeds exact likelihood", lda_bound},
      {"Counting grid collapse and shift invariance", counting_grid_checks},
      {"Sticky HMM lifts day accuracy on synthetic data", day_lift},
      {"Scene protocol is reproducible and disjoint", protocol},
      {"Feature extraction conserves counts", conservation},
  };
  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const auto start = std::chrono::steady_clock::now();
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("threw: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    failures += !v.pass;
    std::printf("%s  %zu. %s: %s [%.1fs]\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(),
                v.detail.c_str(), secs);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failures, criteria.size());
  return failures == 0 ? 0 : 1;
}
