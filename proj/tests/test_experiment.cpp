#include <gtest/gtest.h>

#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include "mscate/error.hpp"
#include "mscate/experiment.hpp"
#include "mscate/rng.hpp"

namespace mscate {
namespace {

// Fixed-table mock of the ratio function, keyed by the ascending scale list.
RatioFn table_ratio(std::map<std::vector<int>, double> table, int* calls = nullptr) {
  return [table = std::move(table), calls](std::span<const int> s, std::uint64_t) {
    if (calls) ++*calls;
    return table.at(std::vector<int>(s.begin(), s.end()));
  };
}

TEST(Grid, MockedThreeByThreeHandComputation) {
  const std::vector<int> scales{16, 64, 256};
  std::map<std::vector<int>, double> t{
      {{16}, 1.0},          {{64}, 2.5},          {{256}, 1.5},         {{16, 16}, 1.1},
      {{16, 64}, 2.0},      {{16, 256}, 3.25},    {{64, 64}, 2.5},      {{64, 256}, 2.75},
      {{256, 256}, 1.5},
  };
  int calls = 0;
  const std::vector<std::uint64_t> seeds{1};
  const GainReport g = grid_search_with(scales, seeds, table_ratio(t, &calls));
  EXPECT_EQ(calls, 9);  // 6 upper-triangle cells + 3 singles
  EXPECT_EQ(g.best_s1, 16);
  EXPECT_EQ(g.best_s2, 256);
  EXPECT_EQ(g.best_multi, 3.25);
  EXPECT_EQ(g.best_single_scale, 64);
  EXPECT_EQ(g.best_single, 2.5);
  EXPECT_EQ(g.gain, 0.75);
  EXPECT_TRUE(std::isnan(g.se_gain));
  for (std::size_t i = 0; i < 3; ++i)
    for (std::size_t j = 0; j < 3; ++j) EXPECT_EQ(g.heatmap(i, j), g.heatmap(j, i));
  EXPECT_EQ(g.heatmap(2, 0), 3.25);
}

TEST(Grid, ReplicateSdOfGain) {
  const std::vector<int> scales{8, 32};
  RatioFn f = [](std::span<const int> s, std::uint64_t seed) {
    const double base = static_cast<double>(seed);
    if (s.size() == 1) return s[0] == 8 ? base : 0.0;
    return (s[0] == 8 && s[1] == 32) ? 2.0 * base : 0.0;
  };
  const std::vector<std::uint64_t> seeds{1, 2, 3};
  const GainReport g = grid_search_with(scales, seeds, f);
  EXPECT_EQ(g.replicate_gain, (std::vector<double>{1, 2, 3}));
  EXPECT_DOUBLE_EQ(g.se_gain, 1.0);
  EXPECT_DOUBLE_EQ(g.gain, 2.0);  // mean heatmap max 4 minus mean single max 2
}

TEST(Grid, NanCellsNeverWin) {
  const std::vector<int> scales{8, 32};
  std::map<std::vector<int>, double> t{{{8}, 1.0},     {{32}, 0.5},
                                       {{8, 8}, NAN},   {{8, 32}, NAN}, {{32, 32}, 0.5}};
  const std::vector<std::uint64_t> seeds{1};
  const GainReport g = grid_search_with(scales, seeds, table_ratio(t));
  EXPECT_EQ(g.best_s1, 32);
  EXPECT_EQ(g.best_s2, 32);
}

TEST(Scaling, EnumerationAndBudget) {
  const std::vector<int> scales{4, 8, 16, 32, 64, 128, 256};
  RatioFn f = [](std::span<const int> s, std::uint64_t seed) {
    double v = static_cast<double>(seed);
    for (int x : s) v += std::log2(x);
    return v;
  };
  const std::vector<std::uint64_t> seeds{1, 2};
  const ScalingCurve c = scaling_scales_with(scales, 7, seeds, 20, 5, f);
  ASSERT_EQ(c.c.size(), 7u);
  EXPECT_EQ(c.subsets[0].size(), 7u);   // C(7,1) = 7 <= 20, enumerated
  EXPECT_EQ(c.subsets[1].size(), 20u);  // C(7,2) = 21 > 20, sampled
  EXPECT_EQ(c.subsets[6].size(), 1u);   // full set
  EXPECT_EQ(c.subsets[6][0], scales);
  for (const auto& per_c : c.subsets) {
    std::set<std::vector<int>> distinct(per_c.begin(), per_c.end());
    EXPECT_EQ(distinct.size(), per_c.size());
    for (const auto& s : per_c) EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  }
  // C = 1 equals the mean of single-scale ratios from the grid.
  const std::vector<int> three{4, 8, 16};
  const GainReport g = grid_search_with(three, seeds, f);
  const ScalingCurve c3 = scaling_scales_with(three, 3, seeds, 20, 5, f);
  double mean_single = 0;
  for (double v : g.single) mean_single += v / 3;
  EXPECT_DOUBLE_EQ(c3.mean_ratio[0], mean_single);
  EXPECT_THROW(scaling_scales_with(three, 4, seeds, 20, 5, f), Error);
}

PlantedSpec tiny_planted(std::uint64_t seed) {
  PlantedSpec p;
  p.n_units = 200;
  p.tile = 32;
  p.layers = {{4, 1.0, 0.0}, {16, 0.0, 1.0}};
  p.outcome_noise = 0.5;
  p.seed = seed;
  return p;
}

AnalysisConfig quick_analysis(std::vector<int> scales) {
  AnalysisConfig a;
  a.grid.scales = std::move(scales);
  a.grid.seeds = {1, 2};
  a.encoders.dim = 12;
  a.pipeline.forest.num_trees = 100;
  a.pipeline.metric.n_boot = 50;
  return a;
}

TEST(Planted, LayoutAndLatentRings) {
  const PlantedData d = planted_data(tiny_planted(1));
  ASSERT_EQ(d.units.size(), 200u);
  EXPECT_EQ(d.units[0].id, "u00000");
  // Center pixel of tile 0 carries layer 0's latent.
  const UnitRecord& u = d.units[0];
  const float center = d.bundle.at(0, static_cast<int>(u.y), static_cast<int>(u.x));
  EXPECT_NEAR(center, 1.0 + d.latent(0, 0), 0.6);
  for (std::size_t i = 0; i < 200; ++i) EXPECT_DOUBLE_EQ(d.tau[i], d.latent(i, 0));
}

TEST(GridSearch, SingleScaleGainIsExactlyZero) {
  const PlantedData d = planted_data(tiny_planted(2));
  const GainReport g = grid_search(d.units, &d.bundle, quick_analysis({16}));
  EXPECT_EQ(g.heatmap(0, 0), g.single[0]);
  EXPECT_EQ(g.gain, 0.0);
  for (double v : g.replicate_gain) EXPECT_EQ(v, 0.0);
}

TEST(GridSearch, DeterministicAndExternalPathEquivalent) {
  const PlantedData d = planted_data(tiny_planted(3));
  const AnalysisConfig a = quick_analysis({4, 16});
  const GainReport g1 = grid_search(d.units, &d.bundle, a);
  const GainReport g2 = grid_search(d.units, &d.bundle, a);
  EXPECT_EQ(g1.heatmap, g2.heatmap);
  EXPECT_EQ(g1.single, g2.single);
  // Tables written and reloaded through the text format drive the same analysis.
  AnalysisConfig ext = a;
  ext.encoders.kind = EncoderKind::External;
  for (int s : a.grid.scales) {
    const EmbeddingTable t = embed_units(d.units, d.bundle, s, a.encoders.for_scale(s));
    ext.encoders.tables[s] = std::make_shared<EmbeddingTable>(t);
  }
  const GainReport g3 = grid_search(d.units, nullptr, ext);
  EXPECT_EQ(g1.heatmap, g3.heatmap);
  EXPECT_EQ(g1.gain, g3.gain);
}

TEST(GridSearch, GainRecomputableFromEmittedFiles) {
  const PlantedData d = planted_data(tiny_planted(4));
  const GainReport g = grid_search(d.units, &d.bundle, quick_analysis({4, 16}));
  std::ostringstream hm, sg, js, svg;
  write_matrix_csv(hm, g.scales, g.heatmap);
  write_singles_csv(sg, g.scales, g.single);
  write_gain_json(js, g);
  write_heatmap_svg(svg, g.scales, g.heatmap, 0, 1, "t");
  auto parse_rows = [](const std::string& text) {
    std::vector<std::vector<double>> rows;
    std::istringstream in(text);
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
      std::vector<double> r;
      std::istringstream ls(line);
      std::string cell;
      std::getline(ls, cell, ',');  // row label
      while (std::getline(ls, cell, ',')) r.push_back(std::stod(cell));
      rows.push_back(r);
    }
    return rows;
  };
  double hmax = -INFINITY, smax = -INFINITY;
  for (const auto& r : parse_rows(hm.str()))
    for (double v : r) hmax = std::max(hmax, v);
  for (const auto& r : parse_rows(sg.str())) smax = std::max(smax, r[0]);
  EXPECT_EQ(hmax - smax, g.gain);
  EXPECT_NE(svg.str().find("id=\"argmax\" data-row=\"0\" data-col=\"1\""), std::string::npos);
}

TEST(Displaced, CentersFixedAndReported) {
  const PlantedData d = planted_data(tiny_planted(5));
  AnalysisConfig a = quick_analysis({4, 16});
  a.grid.seeds = {1};
  const DisplacedReport r1 = displaced_analysis(d.units, d.bundle, a);
  const DisplacedReport r2 = displaced_analysis(d.units, d.bundle, a);
  EXPECT_EQ(r1.centers, r2.centers);
  ASSERT_EQ(r1.centers.size(), d.units.size());
  for (const Point& p : r1.centers) EXPECT_NO_THROW(fetch(d.bundle, p, 16));
  EXPECT_EQ(r1.displaced.heatmap, r2.displaced.heatmap);
  EXPECT_TRUE(std::isfinite(r1.mean_ratio_centered));
  EXPECT_TRUE(std::isfinite(r1.mean_ratio_displaced));
  // The displaced report is the grid search over the displaced centers.
  const EmbeddingCache cache(d.units, &d.bundle, a.grid, a.encoders, r1.centers);
  const RatioFn f = pipeline_ratio(cache, d.units, a.grid.reduction, a.pipeline);
  const GainReport direct = grid_search_with(a.grid.scales, a.grid.seeds, f);
  EXPECT_EQ(direct.heatmap, r1.displaced.heatmap);
}

TEST(Displaced, ZeroEffectGainIndistinguishableFromZero) {
  PlantedSpec p = tiny_planted(6);
  for (auto& l : p.layers) l.tau_coef = 0.0;
  const PlantedData d = planted_data(p);
  AnalysisConfig a = quick_analysis({4, 16});
  a.grid.seeds = {1, 2, 3, 4, 5};
  const DisplacedReport r = displaced_analysis(d.units, d.bundle, a);
  EXPECT_LT(std::abs(r.displaced.gain), 3 * r.displaced.se_gain);
}

EncoderSet external_blocks(std::size_t n, bool first_constant, bool second_constant) {
  EncoderSet e;
  e.kind = EncoderKind::External;
  Rng rng(8);
  std::vector<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "u%05zu", i);
    ids.push_back(buf);
  }
  for (auto [scale, constant] : {std::pair{4, first_constant}, std::pair{16, second_constant}}) {
    MatrixF v(n, 12);
    for (auto& x : v.values()) x = constant ? 0.25f : static_cast<float>(rng.normal());
    e.tables[scale] = std::make_shared<EmbeddingTable>(ids, scale, v);
  }
  return e;
}

TEST(Interpret, ConstantBlockFractions) {
  const PlantedData d = planted_data(tiny_planted(7));
  AnalysisConfig a = quick_analysis({4, 16});
  a.grid.seeds = {1};
  a.pipeline.forest.num_trees = 200;
  a.encoders = external_blocks(d.units.size(), true, false);
  EXPECT_EQ(interpretability_heatmap(d.units, nullptr, a)(0, 1), 0.0);
  a.encoders = external_blocks(d.units.size(), false, true);
  EXPECT_EQ(interpretability_heatmap(d.units, nullptr, a)(0, 1), 1.0);
  a.grid.reduction = Reduction::pca(5);
  try {
    interpretability_heatmap(d.units, nullptr, a);
    ADD_FAILURE();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::RequiresRawRepresentations);
  }
}

TEST(Writers, ScalingCsvAndGainJson) {
  ScalingCurve c;
  c.c = {1, 2};
  c.mean_ratio = {1.5, 2.0};
  c.replicate = {{1.0, 2.5}, {2.0, 1.5}};
  c.subsets = {{{4}, {8}}, {{4, 8}}};
  std::ostringstream out;
  write_scaling_csv(out, c);
  EXPECT_EQ(out.str().substr(0, out.str().find('\n')), "C,mean_ratio,subsets,rep0,rep1");
  const std::vector<int> scales{8};
  const std::vector<std::uint64_t> seeds{1};
  const GainReport g = grid_search_with(scales, seeds, [](auto, auto) { return 1.0; });
  std::ostringstream js;
  write_gain_json(js, g);
  EXPECT_NE(js.str().find("\"se_G\": null"), std::string::npos);
  EXPECT_NE(js.str().find("replicate_sd"), std::string::npos);
}

}  // namespace
}  // namespace mscate
