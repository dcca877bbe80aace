#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <span>
#include <vector>

#include "mscate/data_model.hpp"
#include "mscate/embedding.hpp"
#include "mscate/imaging.hpp"
#include "mscate/metrics.hpp"

namespace mscate {

struct ScaleGrid {
  std::vector<int> scales{16, 32, 64, 128, 256, 349};  // strictly increasing
  Reduction reduction;                                 // None or Pca
  bool displaced = false;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5, 6, 7, 8, 9, 10};
  FetchMode mode = FetchMode::Strict;

  void validate() const;
};

// Encoder per scale: the built-in pyramid encoder, or precomputed tables.
struct EncoderSet {
  EncoderKind kind = EncoderKind::BuiltinPyramid;
  int dim = 512;
  std::uint64_t seed = 0;
  std::map<int, std::shared_ptr<const EmbeddingTable>> tables;  // External only

  EncoderSpec for_scale(int scale) const;
};

struct AnalysisConfig {
  ScaleGrid grid;
  EncoderSet encoders;
  PipelineConfig pipeline;            // seed replaced by each replicate seed
  int scaling_max_c = 3;
  int subset_budget = 20;             // sampled subsets per C above this count
  std::uint64_t subset_seed = 17;
  std::uint64_t displacement_seed = 99;
};

// RATE Ratio of the ascending concatenation of `scales` under one replicate seed.
using RatioFn = std::function<double(std::span<const int> scales, std::uint64_t seed)>;

struct GainReport {
  std::vector<int> scales;
  MatrixD heatmap;              // mean ratio; (i, j) and (j, i) are the same cell
  std::vector<double> single;   // mean single-scale ratio
  int best_s1 = 0, best_s2 = 0;
  double best_multi = 0.0;
  int best_single_scale = 0;
  double best_single = 0.0;
  double gain = 0.0;            // best_multi - best_single
  double se_gain = 0.0;         // SD of per-replicate gains; NaN with one replicate
  std::vector<double> replicate_gain;
  std::vector<MatrixD> replicate_heatmaps;
  std::vector<std::vector<double>> replicate_single;
};

// Argmaxes and gain from per-replicate tables. Ties go to the first cell in
// row-major order over s1 <= s2; NaN cells never win.
GainReport summarize_gain(std::span<const int> scales, std::vector<MatrixD> heatmaps,
                          std::vector<std::vector<double>> singles);

// Upper triangle plus diagonal and every single scale, for every seed.
GainReport grid_search_with(std::span<const int> scales, std::span<const std::uint64_t> seeds, const RatioFn& ratio);

struct ScalingCurve {
  std::vector<int> c;                           // 1..max_C
  std::vector<double> mean_ratio;               // over subsets and replicates
  std::vector<std::vector<double>> replicate;   // [replicate][C-1], mean over subsets
  std::vector<std::vector<std::vector<int>>> subsets;  // per C
};

ScalingCurve scaling_scales_with(std::span<const int> scales, int max_c, std::span<const std::uint64_t> seeds,
                                 int subset_budget, std::uint64_t subset_seed, const RatioFn& ratio);

// Per-scale embeddings of every unit, computed once and reused by every cell.
class EmbeddingCache {
 public:
  // centers, when non-empty, replace unit locations index-for-index.
  EmbeddingCache(std::span<const UnitRecord> units, const RasterBundle* bundle, const ScaleGrid& grid,
                 const EncoderSet& encoders, std::span<const Point> centers = {});

  const MatrixF& block(int scale) const;
  MatrixD features(std::span<const int> scales, const Reduction& reduction) const;

 private:
  std::map<int, MatrixF> blocks_;
};

// RatioFn backed by the split RATE pipeline on cached embeddings.
RatioFn pipeline_ratio(const EmbeddingCache& cache, std::span<const UnitRecord> units, const Reduction& reduction,
                       const PipelineConfig& pipeline);

GainReport grid_search(std::span<const UnitRecord> units, const RasterBundle* bundle, const AnalysisConfig& config);

ScalingCurve scaling_scales(std::span<const UnitRecord> units, const RasterBundle* bundle,
                            const AnalysisConfig& config);

struct DisplacedReport {
  GainReport centered;
  GainReport displaced;
  std::vector<Point> centers;      // displaced center per unit
  double mean_ratio_centered = 0.0;   // over all cells and singles
  double mean_ratio_displaced = 0.0;
  double mean_ratio_difference = 0.0;  // displaced - centered, cell-paired
};

// One displaced center per unit (window of the largest scale), reused across
// all scales and cells. Needs the raster.
DisplacedReport displaced_analysis(std::span<const UnitRecord> units, const RasterBundle& bundle,
                                   const AnalysisConfig& config);

// Mean over replicate seeds of the top-10 importance share of the smaller
// scale, forest fit on the full sample. Throws RequiresRawRepresentations.
MatrixD interpretability_heatmap(std::span<const UnitRecord> units, const RasterBundle* bundle,
                                 const AnalysisConfig& config);

// ---------------------------------------------------------------------------
// Planted data

// One square ring of latent signal: pixels inside the `scale` window but
// outside the next smaller planted window carry amplitude * z.
struct PlantedLayer {
  int scale = 16;
  double tau_coef = 0.0;    // CATE loading on z
  double level_coef = 0.0;  // outcome-level loading on z
};

struct PlantedSpec {
  int n_units = 1000;
  int tile = 64;               // >= largest planted scale and every analysed scale
  int bands = 1;
  double amplitude = 1.0;
  double pixel_noise = 0.1;
  double outcome_noise = 1.0;
  std::vector<PlantedLayer> layers{{4, 1.0, 0.0}, {16, 1.0, 0.0}, {64, 1.0, 0.0}};
  std::uint64_t seed = 3;

  void validate() const;
};

struct PlantedData {
  RasterBundle bundle;
  std::vector<UnitRecord> units;
  std::vector<double> tau;
  MatrixD latent;  // n x layers
};

// One tile per unit; the unit sits at the tile's center pixel.
PlantedData planted_data(const PlantedSpec& spec);

// ---------------------------------------------------------------------------
// Output

void write_matrix_csv(std::ostream& out, std::span<const int> scales, const MatrixD& m);
void write_singles_csv(std::ostream& out, std::span<const int> scales, std::span<const double> single);
void write_gain_json(std::ostream& out, const GainReport& report);
// Cells shaded by value; the argmax cell carries a star.
void write_heatmap_svg(std::ostream& out, std::span<const int> scales, const MatrixD& m, int star_row, int star_col,
                       const std::string& title);
void write_scaling_csv(std::ostream& out, const ScalingCurve& curve);

}  // namespace mscate
