#include "mscate/embedding.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include <Eigen/Dense>

#include "mscate/error.hpp"
#include "mscate/kernels.hpp"
#include "mscate/parallel.hpp"
#include "mscate/rng.hpp"

namespace mscate {

std::vector<double> pyramid_features(const ImagePatch& patch) {
  const int s = patch.size;
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(kPyramidCells) * 2 * patch.bands);
  for (int grid : {1, 2, 4}) {
    for (int gr = 0; gr < grid; ++gr) {
      const int r0 = gr * s / grid, r1 = (gr + 1) * s / grid;
      for (int gc = 0; gc < grid; ++gc) {
        const int c0 = gc * s / grid, c1 = (gc + 1) * s / grid;
        const std::size_t count = static_cast<std::size_t>(r1 - r0) * static_cast<std::size_t>(c1 - c0);
        for (int b = 0; b < patch.bands; ++b) {
          if (count == 0) {
            out.push_back(0.0);
            out.push_back(0.0);
            continue;
          }
          double sum = 0.0, sumsq = 0.0;
          for (int r = r0; r < r1; ++r) {
            double rs, rss;
            kernels::sum_sumsq(patch.plane(b).subspan(static_cast<std::size_t>(r) * s + c0, static_cast<std::size_t>(c1 - c0)), rs, rss);
            sum += rs;
            sumsq += rss;
          }
          const double mean = sum / static_cast<double>(count);
          const double var = std::max(0.0, sumsq / static_cast<double>(count) - mean * mean);
          out.push_back(mean);
          out.push_back(std::sqrt(var));
        }
      }
    }
  }
  return out;
}

double projection_entry(std::uint64_t seed, int scale, std::size_t row, std::size_t col, int dim) {
  const std::uint64_t key = derive_seed(derive_seed(seed, static_cast<std::uint64_t>(scale)), row, col);
  const double mag = 1.0 / std::sqrt(static_cast<double>(dim));
  return counter_uniform(key) < 0.5 ? -mag : mag;
}

PyramidEncoder::PyramidEncoder(int dim, std::uint64_t seed, int scale, int bands)
    : dim_(dim), scale_(scale), bands_(bands) {
  require(dim >= 1, ErrorCode::InvalidArgument, "encoder dim must be >= 1");
  require(bands >= 1, ErrorCode::InvalidArgument, "encoder needs >= 1 band");
  const std::size_t raw = static_cast<std::size_t>(kPyramidCells) * 2 * bands;
  projection_ = MatrixD(static_cast<std::size_t>(dim), raw);
  for (std::size_t r = 0; r < projection_.rows(); ++r)
    for (std::size_t c = 0; c < raw; ++c) projection_(r, c) = projection_entry(seed, scale, r, c, dim);
}

std::vector<float> PyramidEncoder::encode(const ImagePatch& patch) const {
  require(patch.bands == bands_, ErrorCode::DimMismatch, "patch band count differs from encoder");
  const auto raw = pyramid_features(patch);
  std::vector<double> z(static_cast<std::size_t>(dim_));
  double norm2 = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    z[j] = kernels::dot(projection_.row(j), std::span<const double>(raw));
    norm2 += z[j] * z[j];
  }
  std::vector<float> out(z.size(), 0.0f);
  if (norm2 > 0.0) {
    const double inv = 1.0 / std::sqrt(norm2);
    for (std::size_t j = 0; j < z.size(); ++j) out[j] = static_cast<float>(z[j] * inv);
  }
  return out;
}

std::vector<float> encode(const ImagePatch& patch, const EncoderSpec& enc, std::string_view unit_id) {
  if (enc.kind == EncoderKind::BuiltinPyramid) {
    return PyramidEncoder(enc.dim, enc.seed, patch.size, patch.bands).encode(patch);
  }
  require(enc.table != nullptr, ErrorCode::MissingEmbedding, "external encoder has no table");
  require(enc.table->scale_tag() == patch.size, ErrorCode::ScaleTagMismatch,
          "table scale " + std::to_string(enc.table->scale_tag()) + " vs patch " + std::to_string(patch.size));
  const auto row = enc.table->find(unit_id);
  require(row.has_value(), ErrorCode::MissingEmbedding, "no embedding for unit '" + std::string(unit_id) + "'");
  const auto r = enc.table->values().row(*row);
  return {r.begin(), r.end()};
}

void ConcatSpec::validate() const {
  require(!scales.empty(), ErrorCode::InvalidArgument, "concatenation needs at least one scale");
  require(encoders.size() == scales.size(), ErrorCode::InvalidArgument, "one encoder per scale required");
  for (std::size_t i = 0; i < scales.size(); ++i) {
    require(scales[i] >= 1, ErrorCode::InvalidArgument, "scales must be >= 1");
    if (i > 0) require(scales[i] > scales[i - 1], ErrorCode::InvalidArgument, "scales must be strictly increasing");
    require(encoders[i].dim >= 1, ErrorCode::InvalidArgument, "encoder dim must be >= 1");
  }
  if (reduction.kind == Reduction::Kind::Pca) {
    require(reduction.components >= 1 && reduction.components < raw_dim(), ErrorCode::InvalidArgument,
            "PCA dimension must be in [1, concatenated dim)");
  }
}

std::size_t ConcatSpec::raw_dim() const {
  std::size_t d = 0;
  for (const auto& e : encoders) d += static_cast<std::size_t>(e.dim);
  return d;
}

std::vector<float> concat_representations(const UnitRecord& unit, const ConcatSpec& spec, const FetchContext& ctx) {
  spec.validate();
  require(ctx.bundle != nullptr, ErrorCode::InvalidArgument, "fetch context has no raster");
  const Point center = ctx.center.value_or(Point{unit.x, unit.y});
  std::vector<float> out;
  out.reserve(spec.raw_dim());
  for (std::size_t k = 0; k < spec.scales.size(); ++k) {
    const ImagePatch patch = fetch(*ctx.bundle, center, spec.scales[k], ctx.mode);
    const auto block = encode(patch, spec.encoders[k], unit.id);
    require(block.size() == static_cast<std::size_t>(spec.encoders[k].dim), ErrorCode::DimMismatch,
            "encoder output size differs from declared dim");
    out.insert(out.end(), block.begin(), block.end());
  }
  return out;
}

EmbeddingTable embed_units(std::span<const UnitRecord> units, const RasterBundle& bundle, int scale,
                           const EncoderSpec& enc, FetchMode mode, std::span<const Point> centers) {
  require(centers.empty() || centers.size() == units.size(), ErrorCode::DimMismatch, "centers must match units");
  std::vector<std::string> ids;
  ids.reserve(units.size());
  for (const auto& u : units) ids.push_back(u.id);

  if (enc.kind == EncoderKind::External) {
    require(enc.table != nullptr, ErrorCode::MissingEmbedding, "external encoder has no table");
    require(enc.table->scale_tag() == scale, ErrorCode::ScaleTagMismatch,
            "table scale " + std::to_string(enc.table->scale_tag()) + " requested " + std::to_string(scale));
    for (const auto& id : ids)
      require(enc.table->find(id).has_value(), ErrorCode::MissingEmbedding, "no embedding for unit '" + id + "'");
    MatrixF values = enc.table->aligned(ids);
    return EmbeddingTable(std::move(ids), scale, std::move(values));
  }

  const PyramidEncoder encoder(enc.dim, enc.seed, scale, bundle.bands);
  MatrixF values(units.size(), static_cast<std::size_t>(enc.dim));
  parallel_for(units.size(), [&](std::size_t i) {
    const Point c = centers.empty() ? Point{units[i].x, units[i].y} : centers[i];
    const ImagePatch patch = fetch(bundle, c, scale, mode);
    const auto v = encoder.encode(patch);
    std::copy(v.begin(), v.end(), values.row(i).begin());
  });
  return EmbeddingTable(std::move(ids), scale, std::move(values));
}

PcaModel fit_pca(const MatrixD& x, std::size_t l) {
  const std::size_t n = x.rows(), d = x.cols();
  require(n >= 2, ErrorCode::TooFewUnits, "PCA needs at least 2 rows");
  require(l >= 1 && l <= std::min(n - 1, d), ErrorCode::InvalidArgument,
          "PCA dimension " + std::to_string(l) + " must be in [1, min(n-1, D)]");

  PcaModel m;
  m.mean.assign(d, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) m.mean[j] += x(i, j);
  for (auto& v : m.mean) v /= static_cast<double>(n);

  Eigen::MatrixXd centred(n, d);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < d; ++j) centred(i, j) = x(i, j) - m.mean[j];
  const Eigen::MatrixXd cov = (centred.transpose() * centred) / static_cast<double>(n - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov);
  require(solver.info() == Eigen::Success, ErrorCode::Numerical, "eigen decomposition failed");

  const auto& evals = solver.eigenvalues();  // ascending
  const auto& evecs = solver.eigenvectors();
  m.total_variance = cov.trace();
  const double max_eval = std::max(0.0, evals(static_cast<Eigen::Index>(d) - 1));
  const double tol = max_eval * static_cast<double>(d) * 1e-12;

  m.components = MatrixD(l, d);
  m.explained_variance.resize(l);
  for (std::size_t k = 0; k < l; ++k) {
    const auto col = static_cast<Eigen::Index>(d - 1 - k);
    double ev = evals(col);
    if (ev <= tol) {
      ev = 0.0;
      m.rank_deficient = true;
    }
    m.explained_variance[k] = ev;
    std::size_t arg = 0;
    for (std::size_t j = 1; j < d; ++j)
      if (std::abs(evecs(static_cast<Eigen::Index>(j), col)) > std::abs(evecs(static_cast<Eigen::Index>(arg), col))) arg = j;
    const double sign = evecs(static_cast<Eigen::Index>(arg), col) < 0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < d; ++j) m.components(k, j) = sign * evecs(static_cast<Eigen::Index>(j), col);
  }
  return m;
}

std::vector<double> project(const PcaModel& model, std::span<const double> x) {
  require(x.size() == model.mean.size(), ErrorCode::DimMismatch, "projection input has wrong dimension");
  std::vector<double> centred(x.size());
  for (std::size_t j = 0; j < x.size(); ++j) centred[j] = x[j] - model.mean[j];
  std::vector<double> out(model.dim());
  for (std::size_t k = 0; k < out.size(); ++k) out[k] = kernels::dot(model.components.row(k), std::span<const double>(centred));
  return out;
}

MatrixD project(const PcaModel& model, const MatrixD& x) {
  MatrixD out(x.rows(), model.dim());
  parallel_for(x.rows(), [&](std::size_t i) {
    const auto p = project(model, x.row(i));
    std::copy(p.begin(), p.end(), out.row(i).begin());
  });
  return out;
}

MatrixD build_features(std::span<const MatrixF* const> blocks, const Reduction& reduction) {
  require(!blocks.empty(), ErrorCode::InvalidArgument, "no feature blocks");
  const std::size_t n = blocks[0]->rows();
  std::size_t d = 0;
  for (const auto* b : blocks) {
    require(b->rows() == n, ErrorCode::DimMismatch, "feature blocks have different row counts");
    d += b->cols();
  }
  MatrixD x(n, d);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t off = 0;
    for (const auto* b : blocks) {
      const auto r = b->row(i);
      for (std::size_t j = 0; j < r.size(); ++j) x(i, off + j) = r[j];
      off += r.size();
    }
  }
  if (reduction.kind == Reduction::Kind::None) return x;
  return project(fit_pca(x, reduction.components), x);
}

double mean_within_group_distance(const EmbeddingTable& table,
                                  const std::unordered_map<std::string, std::string>& groups) {
  std::map<std::string, std::vector<std::size_t>> members;
  for (std::size_t i = 0; i < table.size(); ++i) {
    auto it = groups.find(table.unit_ids()[i]);
    if (it != groups.end()) members[it->second].push_back(i);
  }
  double total = 0.0;
  std::size_t pairs = 0;
  for (const auto& [group, idx] : members) {
    for (std::size_t a = 0; a < idx.size(); ++a) {
      for (std::size_t b = a + 1; b < idx.size(); ++b) {
        total += std::sqrt(kernels::sq_dist(table.values().row(idx[a]), table.values().row(idx[b])));
        ++pairs;
      }
    }
  }
  require(pairs > 0, ErrorCode::NoPairs, "no group has two or more members");
  return total / static_cast<double>(pairs);
}

}  // namespace mscate
