#include <gtest/gtest.h>

#include <sstream>

#include "placerec/eval.hpp"

using namespace placerec;

namespace {

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorKind::IoError;
}

std::vector<BankConfig> small_configs() {
  BankConfig dm;
  dm.family = ModelFamily::DirichletMixture;
  dm.dirmix.components = 1;  // ten training images are too few to split between components
  BankConfig cg;
  cg.family = ModelFamily::CountingGrid;
  cg.cg.grid = {6, 6};
  cg.cg.window = {2, 2};
  cg.cg.em_iterations = 15;
  return {dm, cg};
}

Split all_train(const Manifest& m) {
  Split s;
  s.train.resize(m.class_count());
  s.test.resize(m.class_count());
  for (const auto& r : m.records) s.train[*r.label].push_back(r.id);
  return s;
}

struct Day {
  SyntheticCorpus corpus;
  HistogramStore store;
  ClassModelBank bank;
};

Day make_day(std::size_t per_class, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.length = 600;
  spec.words_per_image = 100;
  spec.class_sharpness = 0.3;
  Day d{generate_synthetic(spec, seed), {}, {}};
  auto train = sample_class_images(d.corpus.truth, per_class, spec.words_per_image, seed + 100);
  d.store = inline_histograms(d.corpus.manifest);
  for (auto& [id, h] : inline_histograms(train)) d.store.emplace(id, h);
  d.bank = train_bank(train, all_train(train), d.store, small_configs()[0], seed);
  return d;
}

}  // namespace

TEST(Accuracy, CountsMatches) {
  const std::vector<std::size_t> p{0, 1, 2, 2}, t{0, 1, 1, 2};
  EXPECT_DOUBLE_EQ(accuracy(p, t), 0.75);
  EXPECT_DOUBLE_EQ(accuracy(t, t), 1.0);
  EXPECT_EQ(kind_of([&] { accuracy(p, std::vector<std::size_t>{0}); }), ErrorKind::LengthMismatch);
  EXPECT_EQ(kind_of([] { accuracy({}, {}); }), ErrorKind::EmptyInput);
}

TEST(Confusion, TraceOverTotalIsAccuracy) {
  const std::vector<std::size_t> p{0, 1, 2, 2, 0, 1}, t{0, 1, 1, 2, 2, 1};
  auto cm = confusion(p, t, 3);
  EXPECT_EQ(cm.total(), 6u);
  EXPECT_EQ(cm.trace(), 4u);
  EXPECT_EQ(cm.counts(1, 2), 1u);
  EXPECT_EQ(cm.counts(2, 0), 1u);
  EXPECT_DOUBLE_EQ(static_cast<double>(cm.trace()) / cm.total(), accuracy(p, t));
  EXPECT_EQ(kind_of([&] { confusion(p, t, 2); }), ErrorKind::LabelOutOfRange);
  EXPECT_EQ(kind_of([&] { confusion(p, std::vector<std::size_t>{1}, 3); }), ErrorKind::LengthMismatch);
}

TEST(Report, CsvLayout) {
  BenchmarkReport r;
  r.rows = {{"lda", "abc", 7, 0, 0.5}, {"lda", "abc", 7, 1, 0.25}, {"cg", "def", 7, 0, 1.0}};
  aggregate(r);
  r.notes.push_back("hello");
  ASSERT_EQ(r.means.size(), 2u);
  EXPECT_DOUBLE_EQ(r.means[0].mean, 0.375);
  std::ostringstream os;
  write_report_csv(os, r);
  EXPECT_EQ(os.str(),
            "method,config_digest,seed,repeat,accuracy\n"
            "lda,abc,7,0,0.5\n"
            "lda,abc,7,1,0.25\n"
            "cg,def,7,0,1\n"
            "lda,abc,,mean,0.375\n"
            "cg,def,,mean,1\n"
            "# hello\n");
}

TEST(Report, MatrixCsvRoundTripsExactly) {
  Matrix<double> m(2, 3);
  m(0, 0) = 1.0 / 3;
  m(0, 1) = 1e-300;
  m(0, 2) = -0.0;
  m(1, 0) = 0.1 + 0.2;
  m(1, 1) = 123456789.123456789;
  m(1, 2) = 1;
  std::ostringstream os;
  write_matrix_csv(os, m);
  std::istringstream is(os.str());
  EXPECT_EQ(read_matrix_csv(is), m);
  std::istringstream ragged("1,2\n3\n");
  EXPECT_EQ(kind_of([&] { read_matrix_csv(ragged); }), ErrorKind::ParseError);
}

TEST(BenchScene, DeterministicAndComplete) {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.length = 300;
  spec.class_sharpness = 1.5;
  auto c = generate_synthetic(spec, 3);
  auto store = inline_histograms(c.manifest);
  const auto configs = small_configs();
  SceneBenchOptions opt{10, 10, 3};
  auto a = bench_scene(c.manifest, store, configs, opt, 42);
  auto b = bench_scene(c.manifest, store, configs, opt, 42);
  EXPECT_EQ(a, b);
  std::ostringstream sa, sb;
  write_report_csv(sa, a);
  write_report_csv(sb, b);
  EXPECT_EQ(sa.str(), sb.str());

  ASSERT_EQ(a.rows.size(), 6u);
  for (std::size_t i = 0; i < 6; ++i) {
    EXPECT_EQ(a.rows[i].method, family_name(configs[i / 3].family));
    EXPECT_EQ(a.rows[i].repeat, i % 3);
    EXPECT_EQ(a.rows[i].seed, 42u);
    EXPECT_EQ(a.rows[i].config_digest, config_digest(configs[i / 3]));
    EXPECT_GT(a.rows[i].accuracy, 0.5);
  }
  EXPECT_EQ(a.means.size(), 2u);
  EXPECT_NE(bench_scene(c.manifest, store, configs, opt, 43), a);
}

TEST(BenchScene, ErrorsCarryRepeatContext) {
  SyntheticSpec spec;
  spec.classes = 2;
  spec.length = 100;
  auto c = generate_synthetic(spec, 4);
  HistogramStore empty;
  try {
    bench_scene(c.manifest, empty, small_configs(), {5, 5, 1}, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::MissingHistogram);
    EXPECT_NE(std::string(e.what()).find("dirmix repeat 0"), std::string::npos) << e.what();
  }
}

TEST(BenchDay, HmmImprovesNoisyDay) {
  auto d = make_day(30, 5);
  auto r = bench_day(d.corpus.manifest, d.store, d.bank, {});
  EXPECT_GT(r.hmm_on_smoothed, r.hmm_off);
  EXPECT_GT(r.hmm_on_filtered, r.hmm_off);
  EXPECT_DOUBLE_EQ(r.hmm.params.kappa, default_kappa(600, 4));
  EXPECT_DOUBLE_EQ(r.hmm.params.lambda_scale, 0.2);
  EXPECT_EQ(r.labels_off, decode_observations(r.observations));
  EXPECT_EQ(r.observations.frames(), 600u);

  auto report = day_report(r, d.bank, {}, 5);
  ASSERT_EQ(report.rows.size(), 3u);
  EXPECT_EQ(report.rows[0].method, "dirmix/hmm_off");
  EXPECT_EQ(report.rows[2].accuracy, r.hmm_on_smoothed);
}

TEST(BenchDay, UnlabeledFramesAreNotScored) {
  auto d = make_day(30, 6);
  auto full = bench_day(d.corpus.manifest, d.store, d.bank, {});
  auto day = d.corpus.manifest;
  for (std::size_t t = 0; t < day.records.size(); t += 2) day.records[t].label.reset();
  auto half = bench_day(day, d.store, d.bank, {});
  EXPECT_EQ(half.labels_smoothed, full.labels_smoothed);
  std::vector<std::size_t> truth, pred;
  for (std::size_t t = 1; t < day.records.size(); t += 2) {
    truth.push_back(*day.records[t].label);
    pred.push_back(half.labels_off[t]);
  }
  EXPECT_DOUBLE_EQ(half.hmm_off, accuracy(pred, truth));
}

TEST(BenchDay, Errors) {
  auto d = make_day(31, 7);
  EXPECT_EQ(kind_of([&] { bench_day(d.corpus.manifest, d.store, d.bank, {}); }), ErrorKind::InvalidHyperparameter);
  DayBenchOptions loose;
  loose.max_train_per_class = 31;
  EXPECT_NO_THROW(bench_day(d.corpus.manifest, d.store, d.bank, loose));
  loose.lambda_scale = 0;
  EXPECT_EQ(kind_of([&] { bench_day(d.corpus.manifest, d.store, d.bank, loose); }), ErrorKind::NonPositiveLambda);

  loose.lambda_scale = 0.2;
  auto unlabeled = d.corpus.manifest;
  for (auto& r : unlabeled.records) r.label.reset();
  EXPECT_EQ(kind_of([&] { bench_day(unlabeled, d.store, d.bank, loose); }), ErrorKind::NoLabeledRecords);
  auto wrong_k = d.corpus.manifest;
  wrong_k.class_names.pop_back();
  EXPECT_EQ(kind_of([&] { bench_day(wrong_k, d.store, d.bank, loose); }), ErrorKind::DimensionMismatch);
  EXPECT_EQ(kind_of([&] { bench_day(d.corpus.manifest, {}, d.bank, loose); }), ErrorKind::MissingHistogram);
}
