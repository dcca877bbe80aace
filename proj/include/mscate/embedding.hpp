#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "mscate/data_model.hpp"
#include "mscate/imaging.hpp"
#include "mscate/matrix.hpp"

namespace mscate {

enum class EncoderKind { BuiltinPyramid, External };

struct EncoderSpec {
  EncoderKind kind = EncoderKind::BuiltinPyramid;
  int dim = 512;
  std::uint64_t seed = 0;
  std::shared_ptr<const EmbeddingTable> table;  // External only

  static EncoderSpec pyramid(int dim, std::uint64_t seed) { return {EncoderKind::BuiltinPyramid, dim, seed, nullptr}; }
  static EncoderSpec external(std::shared_ptr<const EmbeddingTable> t) {
    const int d = t ? static_cast<int>(t->dim()) : 0;
    return {EncoderKind::External, d, 0, std::move(t)};
  }
};

// Spatial pyramid levels: 1x1, 2x2 and 4x4 grids.
inline constexpr int kPyramidCells = 21;

// Raw pyramid statistics: for each level, cell (row-major) and band, the
// cell mean then population standard deviation. Empty cells (patches smaller
// than the grid) contribute zeros. Length 42 * bands.
std::vector<double> pyramid_features(const ImagePatch& patch);

// Seeded +-1/sqrt(dim) projection of pyramid features followed by L2
// normalisation. Entries are a pure function of (seed, scale, row, column).
class PyramidEncoder {
 public:
  PyramidEncoder(int dim, std::uint64_t seed, int scale, int bands);

  std::vector<float> encode(const ImagePatch& patch) const;

  int dim() const noexcept { return dim_; }
  int scale() const noexcept { return scale_; }
  const MatrixD& projection() const noexcept { return projection_; }

 private:
  int dim_;
  int scale_;
  int bands_;
  MatrixD projection_;  // dim x (42 * bands)
};

double projection_entry(std::uint64_t seed, int scale, std::size_t row, std::size_t col, int dim);

// Single-patch encoder entry point. External lookups need the unit id.
std::vector<float> encode(const ImagePatch& patch, const EncoderSpec& enc, std::string_view unit_id = {});

struct Reduction {
  enum class Kind { None, Pca } kind = Kind::None;
  std::size_t components = 50;

  static Reduction none() { return {}; }
  static Reduction pca(std::size_t l) { return {Kind::Pca, l}; }
};

struct ConcatSpec {
  std::vector<int> scales;             // strictly increasing
  std::vector<EncoderSpec> encoders;   // one per scale
  Reduction reduction;

  // Throws InvalidArgument.
  void validate() const;
  std::size_t raw_dim() const;
};

struct FetchContext {
  const RasterBundle* bundle = nullptr;
  FetchMode mode = FetchMode::Strict;
  std::optional<Point> center;  // overrides the unit location (displaced analyses)
};

// Per-scale encodings concatenated in ascending scale order; no reduction.
std::vector<float> concat_representations(const UnitRecord& unit, const ConcatSpec& spec, const FetchContext& ctx);

// Encodes every unit at one scale. centers, when non-empty, replace the unit
// locations index-for-index.
EmbeddingTable embed_units(std::span<const UnitRecord> units, const RasterBundle& bundle, int scale,
                           const EncoderSpec& enc, FetchMode mode = FetchMode::Strict,
                           std::span<const Point> centers = {});

struct PcaModel {
  std::vector<double> mean;
  MatrixD components;  // l x D, orthonormal rows
  std::vector<double> explained_variance;
  double total_variance = 0.0;
  bool rank_deficient = false;

  std::size_t dim() const noexcept { return components.rows(); }
};

// Principal directions of the centred rows of X from the sample covariance
// (n-1 denominator). Components are ordered by variance and signed so their
// largest-magnitude entry is positive.
PcaModel fit_pca(const MatrixD& x, std::size_t l);
std::vector<double> project(const PcaModel& model, std::span<const double> x);
MatrixD project(const PcaModel& model, const MatrixD& x);

// Concatenated, optionally PCA-reduced, feature matrix for a list of per-scale
// tables already aligned to the same unit order.
MatrixD build_features(std::span<const MatrixF* const> blocks, const Reduction& reduction);

// Mean Euclidean distance over all unordered same-group pairs. Units without a
// group are ignored.
double mean_within_group_distance(const EmbeddingTable& table,
                                  const std::unordered_map<std::string, std::string>& groups);

}  // namespace mscate
