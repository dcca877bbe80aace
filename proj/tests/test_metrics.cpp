#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mscate/error.hpp"
#include "mscate/metrics.hpp"
#include "mscate/rng.hpp"
#include "oracles.hpp"

namespace mscate {
namespace {

PriorityRule rule(std::vector<double> scores) { return {std::move(scores), {}}; }

std::vector<double> randv(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

TEST(Rate, HandExample) {
  const std::vector<double> g{4, 3, 2, 1};
  const auto order = priority_order(rule(g));
  const auto toc = toc_curve(g, order);
  ASSERT_EQ(toc.size(), 4u);
  EXPECT_DOUBLE_EQ(toc[0], 1.5);
  EXPECT_DOUBLE_EQ(toc[1], 1.0);
  EXPECT_DOUBLE_EQ(toc[2], 0.5);
  EXPECT_DOUBLE_EQ(toc[3], 0.0);
  EXPECT_DOUBLE_EQ(rate_estimate(g, order, Weighting::Autoc), 0.75);
}

TEST(Rate, ConstantGammaGivesZero) {
  const std::vector<double> g(30, 3.25);
  Rng rng(1);
  const auto p = rule(randv(30, rng));
  EXPECT_EQ(rate_estimate(g, priority_order(p), Weighting::Autoc), 0.0);
  const RateReport r = rate(g, p, Weighting::Autoc, 50, 1);
  EXPECT_EQ(r.point, 0.0);
  EXPECT_EQ(r.sd, 0.0);
  EXPECT_TRUE(r.zero_variance);
  EXPECT_TRUE(std::isnan(r.ratio));
}

TEST(Rate, EnumerationOracleSmallInstances) {
  Rng rng(2);
  for (std::size_t n = 1; n <= 6; ++n) {
    const auto g = randv(n, rng);
    std::vector<double> p(n);
    std::iota(p.begin(), p.end(), 0.0);
    do {  // every ranking of n units
      const auto order = priority_order(rule(p));
      const auto toc = toc_curve(g, order);
      const auto want = oracle::toc_by_definition(g, p);
      for (std::size_t j = 0; j < n; ++j) EXPECT_NEAR(toc[j], want[j], 1e-12);
      EXPECT_NEAR(rate_estimate(g, order, Weighting::Autoc), oracle::autoc_by_definition(g, p), 1e-12);
      EXPECT_NEAR(rate_estimate(g, order, Weighting::Qini), oracle::qini_by_definition(g, p), 1e-12);
    } while (std::next_permutation(p.begin(), p.end()));
  }
}

TEST(Rate, TiesBrokenByUnitId) {
  PriorityRule p{{1.0, 1.0, 1.0}, {"c", "a", "b"}};
  EXPECT_EQ(priority_order(p), (std::vector<std::uint32_t>{1, 2, 0}));
  PriorityRule q{{1.0, 2.0, 1.0}, {}};
  EXPECT_EQ(priority_order(q), (std::vector<std::uint32_t>{1, 0, 2}));
}

TEST(Rate, MonotoneTransformLeavesReportBitIdentical) {
  Rng rng(3);
  const auto g = randv(200, rng);
  auto s = randv(200, rng);
  for (std::size_t i = 0; i < 200; ++i) s[i] += 0.5 * g[i];
  std::vector<double> t(200);
  for (std::size_t i = 0; i < 200; ++i) t[i] = std::exp(3 * s[i]) + 7;
  for (auto wgt : {Weighting::Autoc, Weighting::Qini}) {
    const RateReport a = rate(g, rule(s), wgt, 100, 9);
    const RateReport b = rate(g, rule(t), wgt, 100, 9);
    EXPECT_TRUE(a == b);
    EXPECT_EQ(a.point, b.point);
    EXPECT_EQ(a.sd, b.sd);
  }
  const QiniCurve qa = qini_curve(g, rule(s), 50, 4);
  std::vector<double> t2(200);  // monotone and sign preserving
  for (std::size_t i = 0; i < 200; ++i) t2[i] = s[i] * std::abs(s[i]) * 5;
  const QiniCurve qb = qini_curve(g, rule(t2), 50, 4);
  EXPECT_EQ(qa.gain, qb.gain);
  EXPECT_EQ(qa.se, qb.se);
}

// Perfectly anti-ranked AUTOC is the negation of perfectly ranked AUTOC when
// the Gamma multiset is symmetric about its mean. Not true in general.
TEST(Rate, AntiRankedNegatesAutocForSymmetricGamma) {
  Rng rng(4);
  for (std::size_t half = 1; half <= 20; ++half) {
    std::vector<double> g;
    const double mu = rng.normal();
    for (std::size_t k = 0; k < half; ++k) {
      const double d = std::abs(rng.normal());
      g.push_back(mu + d);
      g.push_back(mu - d);
    }
    std::vector<double> anti(g.size());
    for (std::size_t i = 0; i < g.size(); ++i) anti[i] = -g[i];
    EXPECT_NEAR(oracle::autoc_by_definition(g, anti), -oracle::autoc_by_definition(g, g), 1e-12);
    EXPECT_NEAR(rate_estimate(g, priority_order(rule(anti)), Weighting::Autoc),
                -rate_estimate(g, priority_order(rule(g)), Weighting::Autoc), 1e-12);
  }
}

// For any ranking, TOC under the reversed order satisfies
// TOC_rev(j) = -((n - j) / j) TOC(n - j).
TEST(Rate, ReversedTocIdentity) {
  Rng rng(40);
  for (std::size_t n = 2; n <= 7; ++n) {
    const auto g = randv(n, rng);
    std::vector<double> p(n);
    std::iota(p.begin(), p.end(), 0.0);
    do {
      std::vector<double> rev(n);
      for (std::size_t i = 0; i < n; ++i) rev[i] = -p[i];
      const auto fwd = toc_curve(g, priority_order(rule(p)));
      const auto bwd = toc_curve(g, priority_order(rule(rev)));
      for (std::size_t j = 1; j < n; ++j)
        EXPECT_NEAR(bwd[j - 1], -static_cast<double>(n - j) / static_cast<double>(j) * fwd[n - j - 1], 1e-12);
    } while (std::next_permutation(p.begin(), p.end()));
  }
}

TEST(Rate, QiniMatchesDenseIntegrationOfRightEndpointSteps) {
  Rng rng(5);
  for (std::size_t n : {5u, 17u, 64u}) {
    const auto g = randv(n, rng);
    const auto p = randv(n, rng);
    const auto order = priority_order(rule(p));
    const auto toc = toc_curve(g, order);
    // Midpoint rule on a grid aligned to 1/n; alpha(q) = q evaluated at the
    // step's right endpoint ceil(qn)/n.
    const std::size_t m = 2000;
    double integral = 0;
    for (std::size_t j = 0; j < n; ++j)
      for (std::size_t k = 0; k < m; ++k) {
        const double q = (static_cast<double>(j) + (k + 0.5) / m) / static_cast<double>(n);
        const std::size_t step = static_cast<std::size_t>(std::ceil(q * n)) - 1;
        integral += (static_cast<double>(step + 1) / n) * toc[step] / static_cast<double>(n * m);
      }
    EXPECT_NEAR(rate_estimate(g, order, Weighting::Qini), integral, 1e-9);
  }
}

TEST(Rate, Preconditions) {
  const std::vector<double> g(19, 1.0);
  try {
    rate(g, rule(g), Weighting::Autoc, 10, 1);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewUnits);
  }
  const std::vector<double> g20(20, 1.0);
  EXPECT_THROW(rate(g20, rule(g20), Weighting::Autoc, 1, 1), Error);
  EXPECT_THROW(rate(g20, rule(g), Weighting::Autoc, 10, 1), Error);
}

TEST(Rate, BootstrapDeterministicAndPositive) {
  Rng rng(6);
  const auto g = randv(100, rng);
  const auto p = randv(100, rng);
  const RateReport a = rate(g, rule(p), Weighting::Autoc, 200, 77);
  EXPECT_TRUE(a == rate(g, rule(p), Weighting::Autoc, 200, 77));
  EXPECT_GT(a.sd, 0.0);
  EXPECT_DOUBLE_EQ(a.ratio, a.point / a.sd);
  EXPECT_EQ(a.n_eval, 100u);
  EXPECT_EQ(a.n_boot, 200);
}

TEST(Qini, HandExamples) {
  const QiniCurve c = qini_curve(std::vector<double>{10, 0}, rule({1, -1}), 10, 1);
  ASSERT_EQ(c.spend.size(), 2u);
  EXPECT_DOUBLE_EQ(c.spend[0], 0.5);
  EXPECT_DOUBLE_EQ(c.gain[0], 5.0);
  EXPECT_DOUBLE_EQ(c.gain[1], 5.0);
  EXPECT_DOUBLE_EQ(c.baseline[1], 5.0);
  Rng rng(7);
  const auto g = randv(50, rng);
  std::vector<double> neg(50);
  for (auto& v : neg) v = -std::abs(rng.normal());
  for (double v : qini_curve(g, rule(neg), 20, 1).gain) EXPECT_EQ(v, 0.0);
}

TEST(Qini, EnumerationOracle) {
  Rng rng(8);
  for (std::size_t n = 2; n <= 7; ++n) {
    const auto g = randv(n, rng);
    std::vector<double> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = static_cast<double>(i) - static_cast<double>(n) / 2 + 0.5;
    std::sort(p.begin(), p.end());
    do {
      const QiniCurve c = qini_curve(g, rule(p), 2, 1);
      for (std::size_t j = 1; j <= n; ++j) {
        EXPECT_NEAR(c.spend[j - 1], static_cast<double>(j) / n, 1e-15);
        EXPECT_NEAR(c.gain[j - 1], oracle::policy_gain_by_definition(g, p, j), 1e-12);
      }
      double pos = 0;
      for (std::size_t i = 0; i < n; ++i)
        if (p[i] > 0) pos += g[i];
      EXPECT_NEAR(c.gain.back(), pos / n, 1e-12);
    } while (std::next_permutation(p.begin(), p.end()));
  }
}

TEST(Qini, MonotoneWhenTargetedGammaNonNegative) {
  Rng rng(9);
  for (int rep = 0; rep < 20; ++rep) {
    std::vector<double> g(60), p(60);
    for (std::size_t i = 0; i < 60; ++i) {
      p[i] = rng.normal();
      g[i] = p[i] > 0 ? std::abs(rng.normal()) : rng.normal();
    }
    const QiniCurve c = qini_curve(g, rule(p), 10, static_cast<std::uint64_t>(rep));
    for (std::size_t j = 1; j < c.gain.size(); ++j) EXPECT_GE(c.gain[j], c.gain[j - 1]);
    EXPECT_TRUE(std::is_sorted(c.spend.begin(), c.spend.end()));
    EXPECT_LE(std::abs(c.gain[0]), std::abs(*std::max_element(g.begin(), g.end())) / 60 + 1e-15);
  }
}

struct PipeData {
  MatrixD x;
  std::vector<int> w;
  std::vector<double> y;
  std::vector<std::string> ids;
};

PipeData pipe_data(std::size_t n, std::uint64_t seed, double effect) {
  Rng rng(seed);
  PipeData d{MatrixD(n, 3), std::vector<int>(n), std::vector<double>(n), {}};
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 3; ++j) d.x(i, j) = rng.uniform(-1, 1);
    d.w[i] = rng.bernoulli(0.5);
    d.y[i] = d.x(i, 1) + d.w[i] * effect * (d.x(i, 0) > 0) + rng.normal();
    d.ids.push_back("u" + std::to_string(i));
  }
  return d;
}

PipelineConfig quick_pipeline(std::uint64_t seed) {
  PipelineConfig c;
  c.forest.num_trees = 100;
  c.metric.n_boot = 100;
  c.seed = seed;
  return c;
}

TEST(Pipeline, DeterministicAndSplitsInHalf) {
  const PipeData d = pipe_data(200, 1, 3.0);
  const PipelineResult a = run_rate_pipeline(d.x, d.w, d.y, d.ids, quick_pipeline(5));
  const PipelineResult b = run_rate_pipeline(d.x, d.w, d.y, d.ids, quick_pipeline(5));
  EXPECT_TRUE(a.report == b.report);
  ASSERT_EQ(a.halves.size(), 1u);
  EXPECT_EQ(a.halves[0].eval.size(), 100u);
  EXPECT_EQ(a.report.n_eval, 100u);
  EXPECT_TRUE(rate_ratio_pipeline(d.x, d.w, d.y, d.ids, quick_pipeline(5)) == a.report);
}

TEST(Pipeline, SwapHalvesAveragesBothDirections) {
  const PipeData d = pipe_data(200, 2, 3.0);
  PipelineConfig c = quick_pipeline(6);
  c.metric.swap_halves = true;
  const PipelineResult r = run_rate_pipeline(d.x, d.w, d.y, d.ids, c);
  ASSERT_EQ(r.halves.size(), 2u);
  std::vector<std::uint32_t> all(r.halves[0].eval);
  all.insert(all.end(), r.halves[1].eval.begin(), r.halves[1].eval.end());
  std::sort(all.begin(), all.end());
  for (std::uint32_t i = 0; i < 200; ++i) EXPECT_EQ(all[i], i);
  EXPECT_DOUBLE_EQ(r.report.point, (r.halves[0].report.point + r.halves[1].report.point) / 2);
  EXPECT_DOUBLE_EQ(r.report.sd, (r.halves[0].report.sd + r.halves[1].report.sd) / 2);
}

TEST(Pipeline, TooFewUnits) {
  const PipeData d = pipe_data(39, 3, 0.0);
  EXPECT_THROW(run_rate_pipeline(d.x, d.w, d.y, d.ids, quick_pipeline(1)), Error);
}

TEST(Pipeline, NullRatioMostlyWithinThree) {
  int inside = 0;
  const int runs = 200;
  for (int r = 0; r < runs; ++r) {
    const PipeData d = pipe_data(120, 1000 + static_cast<std::uint64_t>(r), 0.0);
    PipelineConfig c = quick_pipeline(static_cast<std::uint64_t>(r));
    c.forest.num_trees = 50;
    c.metric.n_boot = 50;
    const RateReport rep = rate_ratio_pipeline(d.x, d.w, d.y, d.ids, c);
    inside += !rep.zero_variance && std::abs(rep.ratio) <= 3.0;
  }
  EXPECT_GE(inside, 198);
}

TEST(Writers, RateJsonAndQiniCsv) {
  RateReport r;
  r.point = 0.5;
  r.sd = 0.25;
  r.ratio = 2.0;
  r.n_eval = 100;
  r.n_boot = 200;
  std::ostringstream j;
  write_rate_json(j, r);
  EXPECT_NE(j.str().find("\"ratio\": 2"), std::string::npos);
  const QiniCurve c = qini_curve(std::vector<double>{10, 0}, rule({1, -1}), 10, 1);
  std::ostringstream q;
  write_qini_csv(q, c);
  EXPECT_EQ(q.str().substr(0, q.str().find('\n')), "B,gain,se,baseline");
  std::ostringstream svg;
  write_qini_svg(svg, c);
  EXPECT_EQ(svg.str().rfind("<svg", 0), 0u);
}

}  // namespace
}  // namespace mscate
