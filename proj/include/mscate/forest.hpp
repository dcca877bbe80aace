#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mscate/matrix.hpp"

namespace mscate {

struct ForestConfig {
  int num_trees = 2000;
  int min_node_size = 5;
  double honesty_fraction = 0.5;
  double subsample_fraction = 0.5;
  int mtry = 0;            // 0: ceil(sqrt(number of distinct features))
  int nuisance_trees = 0;  // 0: max(50, num_trees / 4)
  bool propensity_forest = false;  // otherwise the sample treated fraction
  std::uint64_t seed = 42;

  void validate() const;
  int effective_nuisance_trees() const;
};

// Columns are identified by content, not position: constant columns are
// dropped and identical columns collapse into one feature. Canonical features
// are ordered by a hash of their values, so column order and duplication do
// not affect candidate sampling or tie-breaking.
struct FeatureLayout {
  std::size_t original_dim = 0;
  std::vector<std::uint32_t> representative;        // canonical -> first original column
  std::vector<std::vector<std::uint32_t>> members;  // canonical -> all original columns

  static FeatureLayout from(const MatrixD& x);
  std::size_t size() const noexcept { return representative.size(); }
};

struct TreeNode {
  std::int32_t feature = -1;  // canonical feature; -1 for leaves
  double threshold = 0.0;     // go left when x <= threshold
  std::int32_t left = -1;
  std::int32_t right = -1;
  double value = 0.0;         // honest leaf estimate
  std::uint32_t honest_count = 0;
  bool degenerate = true;     // excluded from prediction averages
};

struct Tree {
  std::vector<TreeNode> nodes;
  std::vector<std::uint32_t> structure;  // units that chose the splits
  std::vector<std::uint32_t> honest;     // units that set the leaf values

  std::size_t leaf_for(std::span<const double> row, const FeatureLayout& layout) const;
};

struct TreeParams {
  int min_node_size = 5;
  double honesty_fraction = 0.5;
  double subsample_fraction = 0.5;
  int mtry = 0;
};

// Honest regression forest used for nuisance models.
class RegressionForest {
 public:
  static RegressionForest fit(const MatrixD& x, std::span<const double> y, const TreeParams& params, int num_trees,
                              std::uint64_t seed);

  double predict(std::span<const double> row) const;
  std::vector<double> predict(const MatrixD& x) const;

  const std::vector<Tree>& trees() const noexcept { return trees_; }

 private:
  FeatureLayout layout_;
  std::vector<Tree> trees_;
  double fallback_ = 0.0;
};

// Two-fold cross-fitted regression-forest predictions: each row is predicted
// by a forest that never saw it.
std::vector<double> cross_fit_regression(const MatrixD& x, std::span<const double> y, const TreeParams& params,
                                         int num_trees, std::uint64_t seed);

class CausalForestModel {
 public:
  std::vector<double> predict(const MatrixD& x) const;
  // Out-of-bag predictions on the training matrix: each row uses only trees
  // whose subsample excluded it.
  std::vector<double> predict_oob(const MatrixD& x_train) const;

  const ForestConfig& config() const noexcept { return config_; }
  const FeatureLayout& layout() const noexcept { return layout_; }
  const std::vector<Tree>& trees() const noexcept { return trees_; }
  std::size_t feature_dim() const noexcept { return layout_.original_dim; }
  std::size_t n_train() const noexcept { return n_train_; }
  double ate() const noexcept { return ate_; }
  // Cross-fitted nuisance values for the training rows.
  const std::vector<double>& outcome_nuisance() const noexcept { return m_hat_; }
  const std::vector<double>& propensity_nuisance() const noexcept { return e_hat_; }
  // True when no tree found a split (constant-effect model).
  bool degenerate_features() const noexcept { return degenerate_features_; }

  // Versioned little-endian binary blob.
  std::string serialize() const;
  static CausalForestModel deserialize(std::string_view blob);
  std::uint64_t hash() const;

 private:
  friend CausalForestModel fit_causal_forest(const MatrixD&, std::span<const int>, std::span<const double>,
                                             const ForestConfig&);
  double predict_row(std::span<const double> row) const;

  ForestConfig config_;
  FeatureLayout layout_;
  std::vector<Tree> trees_;
  std::vector<double> m_hat_;
  std::vector<double> e_hat_;
  std::size_t n_train_ = 0;
  double ate_ = 0.0;
  bool degenerate_features_ = false;
};

// Throws TooFewUnits (n < 20), SingleArm, DimMismatch, InvalidArgument.
CausalForestModel fit_causal_forest(const MatrixD& x, std::span<const int> w, std::span<const double> y,
                                    const ForestConfig& config);

inline constexpr double kPropensityClamp = 0.01;

struct DrOptions {
  std::optional<double> propensity;  // known assignment probability
  bool zero_outcome_model = false;   // force m0 = m1 = 0
};

struct DrScores {
  std::vector<double> gamma;
  std::vector<int> fold_id;
  std::vector<double> mu0;
  std::vector<double> mu1;
  std::vector<double> propensity;

  double mean() const;
};

// AIPW scores with arm-specific outcome forests cross-fitted (two folds)
// inside the given sample. Forest sizes and seeds come from model.config().
DrScores dr_scores(const CausalForestModel& model, const MatrixD& x, std::span<const int> w,
                   std::span<const double> y, const DrOptions& options = {});
DrScores dr_scores(const ForestConfig& config, const MatrixD& x, std::span<const int> w, std::span<const double> y,
                   const DrOptions& options = {});

// Depth-weighted split frequencies over the first max_depth levels, weight
// (depth+1)^-decay, normalised to sum to one. Duplicate columns share their
// feature's importance equally.
std::vector<double> variable_importance(const CausalForestModel& model, int max_depth = 4, double decay = 2.0);

// Fraction of the ten most important features (ties to the lower index) that
// fall in the first block. Throws BlocksDontCover.
double scale_fraction_top10(std::span<const double> importance, std::span<const std::size_t> block_sizes);

}  // namespace mscate
