#include "mscate/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>
#include <set>

#include "json.hpp"
#include "mscate/error.hpp"
#include "mscate/forest.hpp"
#include "mscate/parallel.hpp"
#include "mscate/rng.hpp"

namespace mscate {
namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double mean_of(std::span<const double> v) {
  return v.empty() ? kNaN : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double sd_of(std::span<const double> v) {
  if (v.size() < 2) return kNaN;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

// Largest non-NaN entry of the upper triangle (row-major, first wins).
void upper_argmax(const MatrixD& m, int& bi, int& bj, double& best) {
  bi = bj = -1;
  best = kNaN;
  for (std::size_t i = 0; i < m.rows(); ++i) {
    for (std::size_t j = i; j < m.cols(); ++j) {
      const double v = m(i, j);
      if (std::isnan(v)) continue;
      if (bi < 0 || v > best) {
        best = v;
        bi = static_cast<int>(i);
        bj = static_cast<int>(j);
      }
    }
  }
}

void vector_argmax(std::span<const double> v, int& bi, double& best) {
  bi = -1;
  best = kNaN;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (std::isnan(v[i])) continue;
    if (bi < 0 || v[i] > best) {
      best = v[i];
      bi = static_cast<int>(i);
    }
  }
}

std::vector<std::vector<int>> all_subsets(std::span<const int> scales, int c) {
  std::vector<std::vector<int>> out;
  const int n = static_cast<int>(scales.size());
  std::vector<int> idx(static_cast<std::size_t>(c));
  std::iota(idx.begin(), idx.end(), 0);
  for (;;) {
    std::vector<int> s;
    for (int k : idx) s.push_back(scales[static_cast<std::size_t>(k)]);
    out.push_back(std::move(s));
    int k = c - 1;
    while (k >= 0 && idx[static_cast<std::size_t>(k)] == n - c + k) --k;
    if (k < 0) break;
    ++idx[static_cast<std::size_t>(k)];
    for (int m = k + 1; m < c; ++m) idx[static_cast<std::size_t>(m)] = idx[static_cast<std::size_t>(m - 1)] + 1;
  }
  return out;
}

double binomial(int n, int k) {
  double r = 1.0;
  for (int i = 1; i <= k; ++i) r = r * (n - k + i) / i;
  return r;
}

std::vector<Point> displaced_centers(std::span<const UnitRecord> units, const RasterBundle& bundle, int s_max,
                                     std::uint64_t seed) {
  std::vector<Point> centers(units.size());
  for (std::size_t i = 0; i < units.size(); ++i) centers[i] = displace_center({units[i].x, units[i].y}, seed, bundle, s_max);
  return centers;
}

std::string color_for(double v, double lo, double hi) {
  if (std::isnan(v)) return "#cccccc";
  const double t = hi > lo ? std::clamp((v - lo) / (hi - lo), 0.0, 1.0) : 0.5;
  // White to dark blue.
  const int r = static_cast<int>(std::lround(255 - t * (255 - 31)));
  const int g = static_cast<int>(std::lround(255 - t * (255 - 95)));
  const int b = static_cast<int>(std::lround(255 - t * (255 - 168)));
  char buf[8];
  std::snprintf(buf, sizeof buf, "#%02x%02x%02x", r, g, b);
  return buf;
}

nlohmann::ordered_json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::ordered_json(v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

void ScaleGrid::validate() const {
  require(!scales.empty(), ErrorCode::InvalidArgument, "scale grid is empty");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    require(scales[i] >= 1, ErrorCode::InvalidArgument, "scales must be positive");
    require(i == 0 || scales[i] > scales[i - 1], ErrorCode::InvalidArgument, "scales must be strictly increasing");
  }
  require(!seeds.empty(), ErrorCode::InvalidArgument, "at least one replicate seed is required");
  if (reduction.kind == Reduction::Kind::Pca)
    require(reduction.components >= 1, ErrorCode::InvalidArgument, "PCA needs at least one component");
}

EncoderSpec EncoderSet::for_scale(int scale) const {
  if (kind == EncoderKind::BuiltinPyramid) return EncoderSpec::pyramid(dim, seed);
  const auto it = tables.find(scale);
  require(it != tables.end(), ErrorCode::MissingEmbedding, "no embedding table for scale " + std::to_string(scale));
  return EncoderSpec::external(it->second);
}

GainReport summarize_gain(std::span<const int> scales, std::vector<MatrixD> heatmaps,
                          std::vector<std::vector<double>> singles) {
  const std::size_t k = scales.size(), reps = heatmaps.size();
  require(reps >= 1 && singles.size() == reps, ErrorCode::DimMismatch, "replicate tables disagree");
  GainReport g;
  g.scales.assign(scales.begin(), scales.end());
  g.heatmap = MatrixD(k, k);
  g.single.assign(k, 0.0);
  for (std::size_t r = 0; r < reps; ++r) {
    require(heatmaps[r].rows() == k && heatmaps[r].cols() == k && singles[r].size() == k, ErrorCode::DimMismatch,
            "replicate table shape");
    for (std::size_t i = 0; i < k; ++i) {
      g.single[i] += singles[r][i];
      for (std::size_t j = 0; j < k; ++j) g.heatmap(i, j) += heatmaps[r](i, j);
    }
  }
  for (auto& v : g.single) v /= static_cast<double>(reps);
  for (auto& v : g.heatmap.values()) v /= static_cast<double>(reps);

  int bi, bj, bs;
  upper_argmax(g.heatmap, bi, bj, g.best_multi);
  vector_argmax(g.single, bs, g.best_single);
  g.best_s1 = bi >= 0 ? scales[static_cast<std::size_t>(bi)] : 0;
  g.best_s2 = bj >= 0 ? scales[static_cast<std::size_t>(bj)] : 0;
  g.best_single_scale = bs >= 0 ? scales[static_cast<std::size_t>(bs)] : 0;
  g.gain = g.best_multi - g.best_single;

  for (std::size_t r = 0; r < reps; ++r) {
    int a, b, c;
    double m, s;
    upper_argmax(heatmaps[r], a, b, m);
    vector_argmax(singles[r], c, s);
    g.replicate_gain.push_back(m - s);
  }
  g.se_gain = sd_of(g.replicate_gain);
  g.replicate_heatmaps = std::move(heatmaps);
  g.replicate_single = std::move(singles);
  return g;
}

GainReport grid_search_with(std::span<const int> scales, std::span<const std::uint64_t> seeds, const RatioFn& ratio) {
  const std::size_t k = scales.size(), reps = seeds.size();
  require(k >= 1 && reps >= 1, ErrorCode::InvalidArgument, "grid search needs scales and seeds");
  struct Job {
    std::size_t rep;
    std::size_t i, j;  // j == k marks a single-scale job
  };
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < reps; ++r) {
    for (std::size_t i = 0; i < k; ++i)
      for (std::size_t j = i; j < k; ++j) jobs.push_back({r, i, j});
    for (std::size_t i = 0; i < k; ++i) jobs.push_back({r, i, k});
  }
  std::vector<double> out(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t t) {
    const Job& job = jobs[t];
    if (job.j == k) {
      const int s[] = {scales[job.i]};
      out[t] = ratio(s, seeds[job.rep]);
    } else {
      const int s[] = {scales[job.i], scales[job.j]};
      out[t] = ratio(s, seeds[job.rep]);
    }
  });
  std::vector<MatrixD> heat(reps, MatrixD(k, k));
  std::vector<std::vector<double>> single(reps, std::vector<double>(k));
  for (std::size_t t = 0; t < jobs.size(); ++t) {
    const Job& job = jobs[t];
    if (job.j == k) {
      single[job.rep][job.i] = out[t];
    } else {
      heat[job.rep](job.i, job.j) = out[t];
      heat[job.rep](job.j, job.i) = out[t];
    }
  }
  return summarize_gain(scales, std::move(heat), std::move(single));
}

ScalingCurve scaling_scales_with(std::span<const int> scales, int max_c, std::span<const std::uint64_t> seeds,
                                 int subset_budget, std::uint64_t subset_seed, const RatioFn& ratio) {
  const int k = static_cast<int>(scales.size());
  require(max_c >= 1 && max_c <= k, ErrorCode::InvalidArgument,
          "max_C must be in [1, " + std::to_string(k) + "], got " + std::to_string(max_c));
  require(subset_budget >= 1, ErrorCode::InvalidArgument, "subset budget must be positive");
  require(!seeds.empty(), ErrorCode::InvalidArgument, "at least one replicate seed is required");

  ScalingCurve curve;
  for (int c = 1; c <= max_c; ++c) {
    curve.c.push_back(c);
    if (binomial(k, c) <= subset_budget) {
      curve.subsets.push_back(all_subsets(scales, c));
      continue;
    }
    Rng rng(derive_seed(subset_seed, static_cast<std::uint64_t>(c)));
    std::set<std::vector<int>> picked;
    while (picked.size() < static_cast<std::size_t>(subset_budget)) {
      auto idx = rng.sample_without_replacement(static_cast<std::size_t>(k), static_cast<std::size_t>(c));
      std::sort(idx.begin(), idx.end());
      std::vector<int> s;
      for (auto i : idx) s.push_back(scales[i]);
      picked.insert(std::move(s));
    }
    curve.subsets.emplace_back(picked.begin(), picked.end());
  }

  struct Job {
    std::size_t rep, c, subset;
  };
  std::vector<Job> jobs;
  for (std::size_t r = 0; r < seeds.size(); ++r)
    for (std::size_t c = 0; c < curve.subsets.size(); ++c)
      for (std::size_t s = 0; s < curve.subsets[c].size(); ++s) jobs.push_back({r, c, s});
  std::vector<double> out(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t t) {
    out[t] = ratio(curve.subsets[jobs[t].c][jobs[t].subset], seeds[jobs[t].rep]);
  });

  curve.replicate.assign(seeds.size(), std::vector<double>(curve.subsets.size(), 0.0));
  for (std::size_t t = 0; t < jobs.size(); ++t) curve.replicate[jobs[t].rep][jobs[t].c] += out[t];
  for (auto& row : curve.replicate)
    for (std::size_t c = 0; c < row.size(); ++c) row[c] /= static_cast<double>(curve.subsets[c].size());
  curve.mean_ratio.assign(curve.subsets.size(), 0.0);
  for (const auto& row : curve.replicate)
    for (std::size_t c = 0; c < row.size(); ++c) curve.mean_ratio[c] += row[c];
  for (auto& v : curve.mean_ratio) v /= static_cast<double>(seeds.size());
  return curve;
}

// ---------------------------------------------------------------------------

EmbeddingCache::EmbeddingCache(std::span<const UnitRecord> units, const RasterBundle* bundle, const ScaleGrid& grid,
                               const EncoderSet& encoders, std::span<const Point> centers) {
  grid.validate();
  const RasterBundle empty;
  for (int s : grid.scales) {
    const EncoderSpec spec = encoders.for_scale(s);
    if (spec.kind == EncoderKind::External) {
      require(centers.empty(), ErrorCode::InvalidArgument,
              "precomputed embeddings cannot be re-centred for displaced analyses");
      blocks_.emplace(s, embed_units(units, empty, s, spec).values());
    } else {
      require(bundle != nullptr, ErrorCode::InvalidArgument, "the built-in encoder needs a raster");
      blocks_.emplace(s, embed_units(units, *bundle, s, spec, grid.mode, centers).values());
    }
  }
}

const MatrixF& EmbeddingCache::block(int scale) const {
  const auto it = blocks_.find(scale);
  require(it != blocks_.end(), ErrorCode::MissingEmbedding, "no embeddings cached for scale " + std::to_string(scale));
  return it->second;
}

MatrixD EmbeddingCache::features(std::span<const int> scales, const Reduction& reduction) const {
  std::vector<const MatrixF*> blocks;
  for (int s : scales) blocks.push_back(&block(s));
  return build_features(blocks, reduction);
}

RatioFn pipeline_ratio(const EmbeddingCache& cache, std::span<const UnitRecord> units, const Reduction& reduction,
                       const PipelineConfig& pipeline) {
  std::vector<int> w;
  std::vector<double> y;
  std::vector<std::string> ids;
  for (const auto& u : units) {
    w.push_back(u.w);
    y.push_back(u.outcome);
    ids.push_back(u.id);
  }
  return [&cache, w = std::move(w), y = std::move(y), ids = std::move(ids), reduction, pipeline](
             std::span<const int> scales, std::uint64_t seed) {
    PipelineConfig cfg = pipeline;
    cfg.seed = seed;
    const MatrixD x = cache.features(scales, reduction);
    return rate_ratio_pipeline(x, w, y, ids, cfg).ratio;
  };
}

GainReport grid_search(std::span<const UnitRecord> units, const RasterBundle* bundle, const AnalysisConfig& config) {
  config.grid.validate();
  std::vector<Point> centers;
  if (config.grid.displaced) {
    require(bundle != nullptr, ErrorCode::InvalidArgument, "displaced analyses need the raster");
    centers = displaced_centers(units, *bundle, config.grid.scales.back(), config.displacement_seed);
  }
  const EmbeddingCache cache(units, bundle, config.grid, config.encoders, centers);
  return grid_search_with(config.grid.scales, config.grid.seeds,
                          pipeline_ratio(cache, units, config.grid.reduction, config.pipeline));
}

ScalingCurve scaling_scales(std::span<const UnitRecord> units, const RasterBundle* bundle,
                            const AnalysisConfig& config) {
  config.grid.validate();
  std::vector<Point> centers;
  if (config.grid.displaced) {
    require(bundle != nullptr, ErrorCode::InvalidArgument, "displaced analyses need the raster");
    centers = displaced_centers(units, *bundle, config.grid.scales.back(), config.displacement_seed);
  }
  const EmbeddingCache cache(units, bundle, config.grid, config.encoders, centers);
  return scaling_scales_with(config.grid.scales, config.scaling_max_c, config.grid.seeds, config.subset_budget,
                             config.subset_seed, pipeline_ratio(cache, units, config.grid.reduction, config.pipeline));
}

DisplacedReport displaced_analysis(std::span<const UnitRecord> units, const RasterBundle& bundle,
                                   const AnalysisConfig& config) {
  AnalysisConfig base = config;
  base.grid.displaced = false;
  DisplacedReport rep;
  rep.centered = grid_search(units, &bundle, base);
  rep.centers = displaced_centers(units, bundle, config.grid.scales.back(), config.displacement_seed);
  const EmbeddingCache cache(units, &bundle, base.grid, base.encoders, rep.centers);
  rep.displaced = grid_search_with(base.grid.scales, base.grid.seeds,
                                   pipeline_ratio(cache, units, base.grid.reduction, base.pipeline));

  double sc = 0.0, sd = 0.0;
  std::size_t cells = 0;
  const std::size_t k = base.grid.scales.size();
  for (std::size_t i = 0; i < k; ++i) {
    sc += rep.centered.single[i];
    sd += rep.displaced.single[i];
    ++cells;
    for (std::size_t j = i; j < k; ++j) {
      sc += rep.centered.heatmap(i, j);
      sd += rep.displaced.heatmap(i, j);
      ++cells;
    }
  }
  rep.mean_ratio_centered = sc / static_cast<double>(cells);
  rep.mean_ratio_displaced = sd / static_cast<double>(cells);
  rep.mean_ratio_difference = rep.mean_ratio_displaced - rep.mean_ratio_centered;
  return rep;
}

MatrixD interpretability_heatmap(std::span<const UnitRecord> units, const RasterBundle* bundle,
                                 const AnalysisConfig& config) {
  require(config.grid.reduction.kind == Reduction::Kind::None, ErrorCode::RequiresRawRepresentations,
          "scale attribution needs unreduced features; disable PCA");
  config.grid.validate();
  std::vector<Point> centers;
  if (config.grid.displaced) {
    require(bundle != nullptr, ErrorCode::InvalidArgument, "displaced analyses need the raster");
    centers = displaced_centers(units, *bundle, config.grid.scales.back(), config.displacement_seed);
  }
  const EmbeddingCache cache(units, bundle, config.grid, config.encoders, centers);
  std::vector<int> w;
  std::vector<double> y;
  for (const auto& u : units) {
    w.push_back(u.w);
    y.push_back(u.outcome);
  }
  const auto& scales = config.grid.scales;
  const auto& seeds = config.grid.seeds;
  const std::size_t k = scales.size();
  struct Job {
    std::size_t i, j, rep;
  };
  std::vector<Job> jobs;
  for (std::size_t i = 0; i < k; ++i)
    for (std::size_t j = i; j < k; ++j)
      for (std::size_t r = 0; r < seeds.size(); ++r) jobs.push_back({i, j, r});
  std::vector<double> out(jobs.size());
  parallel_for(jobs.size(), [&](std::size_t t) {
    const Job& job = jobs[t];
    const int pair[] = {scales[job.i], scales[job.j]};
    const MatrixD x = cache.features(pair, Reduction::none());
    ForestConfig cfg = config.pipeline.forest;
    cfg.seed = derive_seed(seeds[job.rep], config.pipeline.forest.seed);
    const auto model = fit_causal_forest(x, w, y, cfg);
    const std::size_t blocks[] = {cache.block(pair[0]).cols(), cache.block(pair[1]).cols()};
    out[t] = scale_fraction_top10(variable_importance(model), blocks);
  });
  MatrixD heat(k, k);
  for (std::size_t t = 0; t < jobs.size(); ++t) heat(jobs[t].i, jobs[t].j) += out[t];
  for (std::size_t i = 0; i < k; ++i) {
    for (std::size_t j = i; j < k; ++j) {
      heat(i, j) /= static_cast<double>(seeds.size());
      heat(j, i) = heat(i, j);
    }
  }
  return heat;
}

// ---------------------------------------------------------------------------

void PlantedSpec::validate() const {
  require(n_units >= 1 && tile >= 1 && bands >= 1, ErrorCode::InvalidArgument, "planted sizes must be positive");
  require(!layers.empty(), ErrorCode::InvalidArgument, "no planted layers");
  for (std::size_t k = 0; k < layers.size(); ++k) {
    require(layers[k].scale >= 1 && layers[k].scale <= tile, ErrorCode::InvalidArgument,
            "planted scale must be in [1, tile]");
    require(k == 0 || layers[k].scale > layers[k - 1].scale, ErrorCode::InvalidArgument,
            "planted scales must be strictly increasing");
  }
  require(pixel_noise >= 0.0 && outcome_noise >= 0.0, ErrorCode::InvalidArgument, "noise must be non-negative");
}

PlantedData planted_data(const PlantedSpec& spec) {
  spec.validate();
  const int n = spec.n_units;
  const int cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(n))));
  const int rows = (n + cols - 1) / cols;
  const std::size_t layers = spec.layers.size();

  PlantedData d;
  d.bundle.width = cols * spec.tile;
  d.bundle.height = rows * spec.tile;
  d.bundle.bands = spec.bands;
  d.bundle.pixel_size_m = 1.0;
  d.bundle.data.assign(static_cast<std::size_t>(d.bundle.width) * d.bundle.height * spec.bands, 0.0f);
  d.latent = MatrixD(static_cast<std::size_t>(n), layers);
  d.tau.resize(static_cast<std::size_t>(n));

  // Innermost layer owning each tile-local pixel; -1 for background.
  const int t = spec.tile;
  std::vector<int> owner(static_cast<std::size_t>(t) * t, -1);
  for (int r = 0; r < t; ++r) {
    for (int c = 0; c < t; ++c) {
      for (std::size_t k = 0; k < layers; ++k) {
        const int s = spec.layers[k].scale;
        const int lo = t / 2 - s / 2, hi = lo + s - 1;
        if (r >= lo && r <= hi && c >= lo && c <= hi) {
          owner[static_cast<std::size_t>(r) * t + c] = static_cast<int>(k);
          break;
        }
      }
    }
  }

  Rng units_rng(derive_seed(spec.seed, 1));
  Rng pixel_rng(derive_seed(spec.seed, 2));
  char id[32];
  for (int i = 0; i < n; ++i) {
    double tau = 0.0, level = 0.0;
    for (std::size_t k = 0; k < layers; ++k) {
      const double z = units_rng.uniform(-1.0, 1.0);
      d.latent(static_cast<std::size_t>(i), k) = z;
      tau += spec.layers[k].tau_coef * z;
      level += spec.layers[k].level_coef * z;
    }
    UnitRecord u;
    std::snprintf(id, sizeof id, "u%05d", i);
    u.id = id;
    const int tr = i / cols, tc = i % cols;
    u.x = tc * t + t / 2 + 0.5;
    u.y = tr * t + t / 2 + 0.5;
    u.w = units_rng.bernoulli(0.5) ? 1 : 0;
    u.outcome = level + u.w * tau + spec.outcome_noise * units_rng.normal();
    d.tau[static_cast<std::size_t>(i)] = tau;
    d.units.push_back(std::move(u));

    for (int b = 0; b < spec.bands; ++b) {
      for (int r = 0; r < t; ++r) {
        for (int c = 0; c < t; ++c) {
          const int k = owner[static_cast<std::size_t>(r) * t + c];
          const double signal = k < 0 ? 0.0 : spec.amplitude * d.latent(static_cast<std::size_t>(i), static_cast<std::size_t>(k));
          d.bundle.at(b, tr * t + r, tc * t + c) = static_cast<float>(1.0 + signal + spec.pixel_noise * pixel_rng.normal());
        }
      }
    }
  }
  return d;
}

// ---------------------------------------------------------------------------

void write_matrix_csv(std::ostream& out, std::span<const int> scales, const MatrixD& m) {
  out << "scale";
  for (int s : scales) out << ',' << s;
  out << '\n';
  for (std::size_t i = 0; i < scales.size(); ++i) {
    out << scales[i];
    for (std::size_t j = 0; j < scales.size(); ++j) out << ',' << format_double(m(i, j));
    out << '\n';
  }
}

void write_singles_csv(std::ostream& out, std::span<const int> scales, std::span<const double> single) {
  out << "scale,ratio\n";
  for (std::size_t i = 0; i < scales.size(); ++i) out << scales[i] << ',' << format_double(single[i]) << '\n';
}

void write_gain_json(std::ostream& out, const GainReport& g) {
  nlohmann::ordered_json j;
  j["scales"] = g.scales;
  j["best_multi"] = {{"s1", g.best_s1}, {"s2", g.best_s2}, {"ratio", number_or_null(g.best_multi)}};
  j["best_single"] = {{"s", g.best_single_scale}, {"ratio", number_or_null(g.best_single)}};
  j["G"] = number_or_null(g.gain);
  j["se_G"] = number_or_null(g.se_gain);
  j["se_G_method"] = "replicate_sd";
  auto gains = nlohmann::ordered_json::array();
  for (double v : g.replicate_gain) gains.push_back(number_or_null(v));
  j["replicate_G"] = gains;
  j["replicates"] = g.replicate_gain.size();
  out << j.dump(2) << '\n';
}

void write_heatmap_svg(std::ostream& out, std::span<const int> scales, const MatrixD& m, int star_row, int star_col,
                       const std::string& title) {
  constexpr int kCell = 56, kLeft = 60, kTop = 40;
  const int k = static_cast<int>(scales.size());
  double lo = std::numeric_limits<double>::infinity(), hi = -lo;
  for (double v : m.values()) {
    if (std::isnan(v)) continue;
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  const int w = kLeft + k * kCell + 20, h = kTop + k * kCell + 40;
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h
      << "\" font-family=\"sans-serif\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<text x=\"" << w / 2 << "\" y=\"20\" text-anchor=\"middle\" font-size=\"14\">" << title << "</text>\n";
  for (int i = 0; i < k; ++i) {
    const int y = kTop + i * kCell;
    out << "<text x=\"" << kLeft - 6 << "\" y=\"" << y + kCell / 2 + 4 << "\" text-anchor=\"end\" font-size=\"11\">"
        << scales[static_cast<std::size_t>(i)] << "</text>\n";
    for (int j = 0; j < k; ++j) {
      const int x = kLeft + j * kCell;
      const double v = m(static_cast<std::size_t>(i), static_cast<std::size_t>(j));
      out << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << kCell << "\" height=\"" << kCell << "\" fill=\""
          << color_for(v, lo, hi) << "\" stroke=\"white\"/>\n";
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.2f", v);
      out << "<text x=\"" << x + kCell / 2 << "\" y=\"" << y + kCell / 2 + 4
          << "\" text-anchor=\"middle\" font-size=\"11\">" << buf << "</text>\n";
      if (i == star_row && j == star_col) {
        out << "<text id=\"argmax\" data-row=\"" << i << "\" data-col=\"" << j << "\" x=\"" << x + kCell - 8
            << "\" y=\"" << y + 14 << "\" text-anchor=\"middle\" font-size=\"16\">*</text>\n";
      }
    }
  }
  for (int j = 0; j < k; ++j)
    out << "<text x=\"" << kLeft + j * kCell + kCell / 2 << "\" y=\"" << kTop + k * kCell + 16
        << "\" text-anchor=\"middle\" font-size=\"11\">" << scales[static_cast<std::size_t>(j)] << "</text>\n";
  out << "</svg>\n";
}

void write_scaling_csv(std::ostream& out, const ScalingCurve& curve) {
  out << "C,mean_ratio,subsets";
  for (std::size_t r = 0; r < curve.replicate.size(); ++r) out << ",rep" << r;
  out << '\n';
  for (std::size_t c = 0; c < curve.c.size(); ++c) {
    out << curve.c[c] << ',' << format_double(curve.mean_ratio[c]) << ',' << curve.subsets[c].size();
    for (const auto& row : curve.replicate) out << ',' << format_double(row[c]);
    out << '\n';
  }
}

}  // namespace mscate
