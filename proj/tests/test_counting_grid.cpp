#include <gtest/gtest.h>

#include <random>

#include "oracles.hpp"
#include "placerec/corpus.hpp"
#include "placerec/counting_grid.hpp"

using namespace placerec;

namespace {

CountingGrid random_grid(GridShape grid, GridShape window, std::size_t Z, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.01, 1.0);
  CountingGrid m{grid, window, Matrix<double>(grid.area(), Z)};
  for (std::size_t i = 0; i < grid.area(); ++i) {
    double s = 0;
    for (auto& v : m.pi.row(i)) s += (v = u(rng));
    for (auto& v : m.pi.row(i)) v /= s;
  }
  return m;
}

std::vector<oracle::Mat> as_cells(const CountingGrid& m) {
  std::vector<oracle::Mat> cells(m.grid.rows, oracle::Mat(m.grid.cols));
  for (std::size_t r = 0; r < m.grid.rows; ++r) {
    for (std::size_t c = 0; c < m.grid.cols; ++c) {
      auto row = m.pi.row(r * m.grid.cols + c);
      cells[r][c].assign(row.begin(), row.end());
    }
  }
  return cells;
}

BowHistogram random_hist(std::size_t Z, std::size_t words, std::mt19937_64& rng) {
  BowHistogram h{std::vector<std::uint32_t>(Z, 0)};
  for (std::size_t i = 0; i < words; ++i) ++h.counts[rng() % Z];
  return h;
}

std::vector<BowHistogram> synthetic_docs(std::size_t n, std::size_t Z, std::uint64_t seed) {
  SyntheticSpec spec;
  spec.classes = 4;
  spec.vocabulary = Z;
  spec.length = n;
  spec.words_per_image = 50;
  auto c = generate_synthetic(spec, seed);
  std::vector<BowHistogram> docs;
  for (const auto& [id, h] : inline_histograms(c.manifest)) docs.push_back(h);
  return docs;
}

}  // namespace

TEST(CountingGridScore, MatchesDirectSummation) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 10; ++trial) {
    auto m = random_grid({4, 4}, {1 + rng() % 4, 1 + rng() % 4}, 6, rng);
    auto h = random_hist(6, 1 + rng() % 60, rng);
    std::vector<unsigned> counts(h.counts.begin(), h.counts.end());
    EXPECT_NEAR(counting_grid_score(m, h), oracle::counting_grid_naive(as_cells(m), m.window.rows, m.window.cols, counts),
                1e-10);
  }
}

TEST(CountingGridScore, WholeTorusWindowIsSingleMultinomial) {
  std::mt19937_64 rng(2);
  auto m = random_grid({3, 5}, {3, 5}, 4, rng);
  auto h = random_hist(4, 25, rng);
  std::vector<double> mean(4, 0.0);
  for (std::size_t i = 0; i < 15; ++i) {
    for (std::size_t z = 0; z < 4; ++z) mean[z] += m.pi(i, z) / 15;
  }
  double expected = 0;
  for (std::size_t z = 0; z < 4; ++z) expected += h.counts[z] * std::log(mean[z]);
  EXPECT_NEAR(counting_grid_score(m, h), expected, 1e-10);
}

TEST(CountingGridScore, UniformGridAnalytic) {
  CountingGrid m{{4, 4}, {2, 2}, Matrix<double>(16, 4, 0.25)};
  EXPECT_NEAR(counting_grid_score(m, BowHistogram{{1, 0, 0, 1}}), 2 * std::log(0.25), 1e-12);
}

TEST(CountingGridScore, ToroidalShiftInvariance) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    GridShape grid{3 + rng() % 5, 3 + rng() % 5};
    auto m = random_grid(grid, {1 + rng() % 3, 1 + rng() % 3}, 7, rng);
    auto h = random_hist(7, 40, rng);
    const std::size_t s1 = rng() % grid.rows, s2 = rng() % grid.cols;
    CountingGrid shifted = m;
    for (std::size_t r = 0; r < grid.rows; ++r) {
      for (std::size_t c = 0; c < grid.cols; ++c) {
        auto src = m.pi.row(r * grid.cols + c);
        auto dst = shifted.pi.row(((r + s1) % grid.rows) * grid.cols + (c + s2) % grid.cols);
        std::copy(src.begin(), src.end(), dst.begin());
      }
    }
    EXPECT_NEAR(counting_grid_score(shifted, h), counting_grid_score(m, h), 1e-10);
  }
}

TEST(CountingGridScore, FiniteOnSparseFittedGrid) {
  auto docs = synthetic_docs(30, 12, 4);
  CountingGridOptions opt;
  opt.grid = {6, 6};
  opt.window = {2, 2};
  opt.em_iterations = 30;
  auto fit = fit_counting_grid(docs, opt, 1);
  std::mt19937_64 rng(5);
  for (int i = 0; i < 20; ++i) EXPECT_TRUE(std::isfinite(counting_grid_score(fit.model, random_hist(12, 80, rng))));
}

TEST(WindowSum, BackwardIsAdjointOfForward) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int trial = 0; trial < 10; ++trial) {
    GridShape grid{2 + rng() % 6, 2 + rng() % 6};
    GridShape window{1 + rng() % grid.rows, 1 + rng() % grid.cols};
    Matrix<double> x(grid.area(), 3), y(grid.area(), 3);
    for (auto& v : x.flat()) v = u(rng);
    for (auto& v : y.flat()) v = u(rng);
    auto fx = detail::window_sum(x, grid, window, false);
    auto by = detail::window_sum(y, grid, window, true);
    double lhs = 0, rhs = 0;
    for (std::size_t i = 0; i < fx.flat().size(); ++i) {
      lhs += fx.flat()[i] * y.flat()[i];
      rhs += x.flat()[i] * by.flat()[i];
    }
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(CountingGridFit, WholeTorusWindowCollapsesToAggregate) {
  auto docs = synthetic_docs(40, 8, 7);
  CountingGridOptions opt;
  opt.grid = {3, 4};
  opt.window = {3, 4};
  opt.em_iterations = 3000;
  opt.tolerance = 1e-15;
  auto fit = fit_counting_grid(docs, opt, 2);
  std::vector<double> agg(8, 0.0);
  double total = 0;
  for (const auto& d : docs) {
    for (std::size_t z = 0; z < 8; ++z) {
      agg[z] += d.counts[z];
      total += d.counts[z];
    }
  }
  const auto h = window_distributions(fit.model);
  for (std::size_t l = 0; l < 12; ++l) {
    for (std::size_t z = 0; z < 8; ++z) EXPECT_NEAR(h(l, z), agg[z] / total, 1e-6);
  }
}

TEST(CountingGridFit, CellsNormalisedAfterEveryMStep) {
  auto docs = synthetic_docs(25, 10, 8);
  for (std::size_t iters = 1; iters <= 6; ++iters) {
    CountingGridOptions opt;
    opt.grid = {5, 5};
    opt.window = {2, 3};
    opt.em_iterations = iters;
    opt.tolerance = 0;
    auto fit = fit_counting_grid(docs, opt, 3);
    for (std::size_t i = 0; i < 25; ++i) {
      double s = 0;
      for (double v : fit.model.pi.row(i)) s += v;
      EXPECT_NEAR(s, 1.0, 1e-12) << "after " << iters - 1 << " M-steps";
    }
  }
}

TEST(CountingGridFit, LoglikNonDecreasing) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    auto docs = synthetic_docs(40, 15, seed);
    CountingGridOptions opt;
    opt.grid = {8, 8};
    opt.window = {3, 3};
    opt.em_iterations = 50;
    opt.tolerance = 0;
    auto fit = fit_counting_grid(docs, opt, seed);
    ASSERT_GE(fit.loglik_trace.size(), 10u);
    for (std::size_t i = 1; i < fit.loglik_trace.size(); ++i) {
      const double prev = fit.loglik_trace[i - 1];
      EXPECT_GE(fit.loglik_trace[i], prev - 1e-7 * std::abs(prev)) << "seed " << seed << " step " << i;
    }
  }
}

TEST(CountingGridFit, ContractErrors) {
  auto docs = synthetic_docs(5, 6, 9);
  CountingGridOptions opt;
  opt.grid = {4, 4};
  opt.window = {5, 2};
  try {
    fit_counting_grid(docs, opt, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::WindowLargerThanGrid);
  }
  opt.window = {2, 2};
  try {
    fit_counting_grid(std::vector<BowHistogram>{}, opt, 0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::NoData);
  }
  EXPECT_EQ(fit_counting_grid(docs, opt, 4).model, fit_counting_grid(docs, opt, 4).model);
  EXPECT_DOUBLE_EQ(fit_counting_grid(docs, opt, 4).model.capacity(), 4.0);
}
