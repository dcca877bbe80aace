#include "mscate/forest.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "mscate/error.hpp"
#include "mscate/parallel.hpp"
#include "mscate/rng.hpp"

namespace mscate {
namespace {

// Seed stream tags.
constexpr std::uint64_t kTagTrees = 1;
constexpr std::uint64_t kTagOutcome = 2;
constexpr std::uint64_t kTagPropensity = 3;
constexpr std::uint64_t kTagDrFolds = 4;
constexpr std::uint64_t kTagDrArms = 5;

std::uint64_t hash_column(const MatrixD& x, std::size_t col) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (std::size_t i = 0; i < x.rows(); ++i) {
    double v = x(i, col);
    if (v == 0.0) v = 0.0;  // fold -0.0
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int b = 0; b < 8; ++b) {
      h ^= (bits >> (8 * b)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return h;
}

bool column_less(const MatrixD& x, std::size_t a, std::size_t b) {
  for (std::size_t i = 0; i < x.rows(); ++i) {
    if (x(i, a) < x(i, b)) return true;
    if (x(i, b) < x(i, a)) return false;
  }
  return false;
}

bool column_equal(const MatrixD& x, std::size_t a, std::size_t b) {
  for (std::size_t i = 0; i < x.rows(); ++i)
    if (!(x(i, a) == x(i, b))) return false;
  return true;
}

int resolve_mtry(int requested, std::size_t features) {
  if (features == 0) return 0;
  int m = requested > 0 ? requested : static_cast<int>(std::ceil(std::sqrt(static_cast<double>(features))));
  return std::min<int>(m, static_cast<int>(features));
}

struct GrowInput {
  const MatrixD& x;
  const FeatureLayout& layout;
  std::span<const double> target;
  std::span<const double> weight;
  std::span<const int> arm;  // empty for regression
  TreeParams params;
  int mtry;
};

struct Split {
  int feature = -1;
  double threshold = 0.0;
};

Split find_split(const GrowInput& in, std::span<const std::uint32_t> rows, Rng& rng,
                 std::vector<std::pair<double, std::uint32_t>>& buf) {
  Split best;
  if (in.mtry == 0) return best;
  double s_tot = 0.0, w_tot = 0.0;
  int treated_tot = 0;
  for (auto r : rows) {
    s_tot += in.weight[r] * in.target[r];
    w_tot += in.weight[r];
    if (!in.arm.empty()) treated_tot += in.arm[r];
  }
  if (!(w_tot > 0.0)) return best;
  const double parent = s_tot * s_tot / w_tot;
  double best_score = parent + 1e-10 * (std::abs(parent) + 1e-300);
  const std::size_t m = rows.size();
  const std::size_t min_node = static_cast<std::size_t>(in.params.min_node_size);
  const int m_int = static_cast<int>(m);

  const auto candidates = rng.sample_without_replacement(in.layout.size(), static_cast<std::size_t>(in.mtry));
  for (const auto f : candidates) {
    const std::size_t col = in.layout.representative[f];
    buf.clear();
    for (auto r : rows) buf.emplace_back(in.x(r, col), r);
    std::sort(buf.begin(), buf.end());
    double sl = 0.0, wl = 0.0;
    int treated_l = 0;
    for (std::size_t k = 0; k + 1 < m; ++k) {
      const auto r = buf[k].second;
      sl += in.weight[r] * in.target[r];
      wl += in.weight[r];
      if (!in.arm.empty()) treated_l += in.arm[r];
      if (buf[k].first == buf[k + 1].first) continue;
      const std::size_t nl = k + 1;
      if (nl < min_node || m - nl < min_node) continue;
      if (!in.arm.empty()) {
        const int nl_int = static_cast<int>(nl);
        const int treated_r = treated_tot - treated_l;
        if (treated_l == 0 || treated_l == nl_int || treated_r == 0 || treated_r == m_int - nl_int) continue;
      }
      const double wr = w_tot - wl;
      if (!(wl > 0.0) || !(wr > 0.0)) continue;
      const double sr = s_tot - sl;
      const double score = sl * sl / wl + sr * sr / wr;
      if (score > best_score) {
        best_score = score;
        best.feature = static_cast<int>(f);
        const double lo = buf[k].first, hi = buf[k + 1].first;
        double thr = lo + (hi - lo) / 2.0;
        if (!(thr < hi)) thr = lo;
        best.threshold = thr;
      }
    }
  }
  return best;
}

Tree grow_tree(const GrowInput& in, std::uint64_t seed) {
  Rng rng(seed);
  const std::size_t n = in.x.rows();
  const std::size_t sub = std::max<std::size_t>(
      2, std::min(n, static_cast<std::size_t>(std::floor(static_cast<double>(n) * in.params.subsample_fraction))));
  auto subsample = rng.sample_without_replacement(n, sub);
  const std::size_t n_honest = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(static_cast<double>(sub) * in.params.honesty_fraction)));
  const std::size_t n_struct = sub - n_honest;

  Tree tree;
  tree.structure.assign(subsample.begin(), subsample.begin() + static_cast<std::ptrdiff_t>(n_struct));
  tree.honest.assign(subsample.begin() + static_cast<std::ptrdiff_t>(n_struct), subsample.end());
  std::sort(tree.structure.begin(), tree.structure.end());
  std::sort(tree.honest.begin(), tree.honest.end());

  std::vector<std::uint32_t> work = tree.structure;
  std::vector<std::pair<double, std::uint32_t>> buf;
  buf.reserve(work.size());

  struct Pending {
    std::int32_t node;
    std::size_t begin, end;
  };
  tree.nodes.emplace_back();
  std::vector<Pending> stack{{0, 0, work.size()}};
  const std::size_t min_split = 2 * static_cast<std::size_t>(in.params.min_node_size);
  while (!stack.empty()) {
    const Pending p = stack.back();
    stack.pop_back();
    if (p.end - p.begin < min_split) continue;
    std::span<std::uint32_t> rows(work.data() + p.begin, p.end - p.begin);
    const Split split = find_split(in, rows, rng, buf);
    if (split.feature < 0) continue;
    const std::size_t col = in.layout.representative[static_cast<std::size_t>(split.feature)];
    const auto mid = std::stable_partition(rows.begin(), rows.end(),
                                           [&](std::uint32_t r) { return in.x(r, col) <= split.threshold; });
    const std::size_t cut = p.begin + static_cast<std::size_t>(mid - rows.begin());
    const auto left = static_cast<std::int32_t>(tree.nodes.size());
    tree.nodes.emplace_back();
    tree.nodes.emplace_back();
    TreeNode& node = tree.nodes[static_cast<std::size_t>(p.node)];
    node.feature = split.feature;
    node.threshold = split.threshold;
    node.left = left;
    node.right = left + 1;
    stack.push_back({left + 1, cut, p.end});
    stack.push_back({left, p.begin, cut});
  }

  // Honest leaf estimates.
  std::vector<double> s(tree.nodes.size(), 0.0), wsum(tree.nodes.size(), 0.0);
  std::vector<int> treated(tree.nodes.size(), 0);
  for (auto r : tree.honest) {
    const std::size_t leaf = tree.leaf_for(in.x.row(r), in.layout);
    s[leaf] += in.weight[r] * in.target[r];
    wsum[leaf] += in.weight[r];
    tree.nodes[leaf].honest_count++;
    if (!in.arm.empty()) treated[leaf] += in.arm[r];
  }
  for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
    TreeNode& node = tree.nodes[k];
    if (node.feature >= 0) continue;
    bool ok = node.honest_count > 0 && wsum[k] > 0.0;
    if (!in.arm.empty()) ok = ok && treated[k] > 0 && treated[k] < static_cast<int>(node.honest_count);
    node.degenerate = !ok;
    node.value = ok ? s[k] / wsum[k] : 0.0;
  }
  return tree;
}

std::vector<Tree> grow_forest(const GrowInput& in, int num_trees, std::uint64_t seed) {
  std::vector<Tree> trees(static_cast<std::size_t>(num_trees));
  parallel_for(trees.size(), [&](std::size_t t) { trees[t] = grow_tree(in, derive_seed(seed, kTagTrees, t)); });
  return trees;
}

double average_leaves(const std::vector<Tree>& trees, const FeatureLayout& layout, std::span<const double> row,
                      double fallback) {
  double sum = 0.0;
  std::size_t count = 0;
  for (const auto& t : trees) {
    const TreeNode& leaf = t.nodes[t.leaf_for(row, layout)];
    if (leaf.degenerate) continue;
    sum += leaf.value;
    ++count;
  }
  return count > 0 ? sum / static_cast<double>(count) : fallback;
}

std::vector<int> two_folds(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  const auto perm = rng.permutation(n);
  std::vector<int> fold(n);
  for (std::size_t i = 0; i < n; ++i) fold[perm[i]] = i < n / 2 ? 0 : 1;
  return fold;
}

// Binary serialization helpers.
class Writer {
 public:
  void u8(std::uint8_t v) { out_.push_back(static_cast<char>(v)); }
  void u32(std::uint32_t v) {
    for (int b = 0; b < 4; ++b) out_.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
  }
  void u64(std::uint64_t v) {
    for (int b = 0; b < 8; ++b) out_.push_back(static_cast<char>((v >> (8 * b)) & 0xFF));
  }
  void i32(std::int32_t v) { u32(static_cast<std::uint32_t>(v)); }
  void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
  void u32s(const std::vector<std::uint32_t>& v) {
    u64(v.size());
    for (auto x : v) u32(x);
  }
  void f64s(const std::vector<double>& v) {
    u64(v.size());
    for (auto x : v) f64(x);
  }
  std::string take() { return std::move(out_); }

 private:
  std::string out_;
};

class Reader {
 public:
  explicit Reader(std::string_view in) : in_(in) {}
  std::uint8_t u8() {
    need(1);
    return static_cast<std::uint8_t>(in_[pos_++]);
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int b = 0; b < 4; ++b) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in_[pos_++])) << (8 * b);
    return v;
  }
  std::uint64_t u64() {
    need(8);
    std::uint64_t v = 0;
    for (int b = 0; b < 8; ++b) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_++])) << (8 * b);
    return v;
  }
  std::int32_t i32() { return static_cast<std::int32_t>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::size_t count(std::size_t elem_bytes) {
    const std::uint64_t n = u64();
    require(n <= (in_.size() - pos_) / std::max<std::size_t>(1, elem_bytes), ErrorCode::MalformedHeader,
            "model blob truncated");
    return static_cast<std::size_t>(n);
  }
  std::vector<std::uint32_t> u32s() {
    std::vector<std::uint32_t> v(count(4));
    for (auto& x : v) x = u32();
    return v;
  }
  std::vector<double> f64s() {
    std::vector<double> v(count(8));
    for (auto& x : v) x = f64();
    return v;
  }
  bool done() const { return pos_ == in_.size(); }

 private:
  void need(std::size_t k) {
    require(pos_ + k <= in_.size(), ErrorCode::MalformedHeader, "model blob truncated");
  }
  std::string_view in_;
  std::size_t pos_ = 0;
};

constexpr std::uint32_t kModelMagic = 0x4643534D;  // "MSCF"
constexpr std::uint32_t kModelVersion = 1;

}  // namespace

// ---------------------------------------------------------------------------

void ForestConfig::validate() const {
  require(num_trees >= 1, ErrorCode::InvalidArgument, "num_trees must be >= 1");
  require(min_node_size >= 1, ErrorCode::InvalidArgument, "min_node_size must be >= 1");
  require(honesty_fraction > 0.0 && honesty_fraction < 1.0, ErrorCode::InvalidArgument,
          "honesty_fraction must be in (0,1)");
  require(subsample_fraction > 0.0 && subsample_fraction < 1.0, ErrorCode::InvalidArgument,
          "subsample_fraction must be in (0,1)");
  require(mtry >= 0, ErrorCode::InvalidArgument, "mtry must be >= 0");
  require(nuisance_trees >= 0, ErrorCode::InvalidArgument, "nuisance_trees must be >= 0");
}

int ForestConfig::effective_nuisance_trees() const {
  return nuisance_trees > 0 ? nuisance_trees : std::max(50, num_trees / 4);
}

FeatureLayout FeatureLayout::from(const MatrixD& x) {
  FeatureLayout layout;
  layout.original_dim = x.cols();
  std::vector<std::uint32_t> cols;
  std::vector<std::uint64_t> hashes(x.cols());
  for (std::size_t j = 0; j < x.cols(); ++j) {
    bool constant = true;
    for (std::size_t i = 1; i < x.rows() && constant; ++i) constant = x(i, j) == x(0, j);
    if (constant) continue;
    cols.push_back(static_cast<std::uint32_t>(j));
    hashes[j] = hash_column(x, j);
  }
  std::sort(cols.begin(), cols.end(), [&](std::uint32_t a, std::uint32_t b) {
    if (hashes[a] != hashes[b]) return hashes[a] < hashes[b];
    if (column_less(x, a, b)) return true;
    if (column_less(x, b, a)) return false;
    return a < b;
  });
  for (std::size_t k = 0; k < cols.size(); ++k) {
    if (k > 0 && hashes[cols[k]] == hashes[cols[k - 1]] && column_equal(x, cols[k], cols[k - 1])) {
      layout.members.back().push_back(cols[k]);
      continue;
    }
    layout.representative.push_back(cols[k]);
    layout.members.push_back({cols[k]});
  }
  return layout;
}

std::size_t Tree::leaf_for(std::span<const double> row, const FeatureLayout& layout) const {
  std::size_t k = 0;
  while (nodes[k].feature >= 0) {
    const TreeNode& node = nodes[k];
    const double v = row[layout.representative[static_cast<std::size_t>(node.feature)]];
    k = static_cast<std::size_t>(v <= node.threshold ? node.left : node.right);
  }
  return k;
}

RegressionForest RegressionForest::fit(const MatrixD& x, std::span<const double> y, const TreeParams& params,
                                       int num_trees, std::uint64_t seed) {
  require(x.rows() == y.size(), ErrorCode::DimMismatch, "regression forest: rows vs targets");
  RegressionForest f;
  f.layout_ = FeatureLayout::from(x);
  f.fallback_ = y.empty() ? 0.0 : std::accumulate(y.begin(), y.end(), 0.0) / static_cast<double>(y.size());
  if (x.rows() < 4) return f;
  const std::vector<double> ones(x.rows(), 1.0);
  const GrowInput in{x, f.layout_, y, ones, {}, params, resolve_mtry(params.mtry, f.layout_.size())};
  f.trees_ = grow_forest(in, num_trees, seed);
  return f;
}

double RegressionForest::predict(std::span<const double> row) const {
  return average_leaves(trees_, layout_, row, fallback_);
}

std::vector<double> RegressionForest::predict(const MatrixD& x) const {
  std::vector<double> out(x.rows());
  for (std::size_t i = 0; i < x.rows(); ++i) out[i] = predict(x.row(i));
  return out;
}

std::vector<double> cross_fit_regression(const MatrixD& x, std::span<const double> y, const TreeParams& params,
                                         int num_trees, std::uint64_t seed) {
  const std::size_t n = x.rows();
  const auto fold = two_folds(n, derive_seed(seed, 0));
  std::vector<double> out(n, 0.0);
  for (int k = 0; k < 2; ++k) {
    std::vector<std::uint32_t> train, test;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == k ? test : train).push_back(static_cast<std::uint32_t>(i));
    std::vector<double> y_train;
    for (auto i : train) y_train.push_back(y[i]);
    const auto forest = RegressionForest::fit(select_rows(x, train), y_train, params, num_trees,
                                              derive_seed(seed, 1 + static_cast<std::uint64_t>(k)));
    for (auto i : test) out[i] = forest.predict(x.row(i));
  }
  return out;
}

// ---------------------------------------------------------------------------

CausalForestModel fit_causal_forest(const MatrixD& x, std::span<const int> w, std::span<const double> y,
                                    const ForestConfig& config) {
  config.validate();
  const std::size_t n = x.rows();
  require(w.size() == n && y.size() == n, ErrorCode::DimMismatch, "X, w and y must have the same number of rows");
  require(n >= 20, ErrorCode::TooFewUnits, "causal forest needs n >= 20, got " + std::to_string(n));
  require(x.cols() >= 1, ErrorCode::InvalidArgument, "causal forest needs at least one feature");
  std::size_t treated = 0;
  for (int wi : w) {
    require(wi == 0 || wi == 1, ErrorCode::NonBinaryTreatment, "treatment must be 0/1");
    treated += static_cast<std::size_t>(wi);
  }
  require(treated > 0 && treated < n, ErrorCode::SingleArm, "both treatment arms must be present");
  for (double v : x.values()) require(std::isfinite(v), ErrorCode::NonFiniteValue, "feature matrix");
  for (double v : y) require(std::isfinite(v), ErrorCode::NonFiniteValue, "outcomes");

  CausalForestModel model;
  model.config_ = config;
  model.n_train_ = n;
  model.layout_ = FeatureLayout::from(x);
  const TreeParams params{config.min_node_size, config.honesty_fraction, config.subsample_fraction, config.mtry};
  const int nuisance_trees = config.effective_nuisance_trees();

  model.m_hat_ = cross_fit_regression(x, y, params, nuisance_trees, derive_seed(config.seed, kTagOutcome));
  if (config.propensity_forest) {
    std::vector<double> wd(w.begin(), w.end());
    model.e_hat_ = cross_fit_regression(x, wd, params, nuisance_trees, derive_seed(config.seed, kTagPropensity));
    for (auto& e : model.e_hat_) e = std::clamp(e, kPropensityClamp, 1.0 - kPropensityClamp);
  } else {
    model.e_hat_.assign(n, static_cast<double>(treated) / static_cast<double>(n));
  }

  // Robinson pseudo-outcomes U = (y - m)/(w - e) with weights (w - e)^2.
  std::vector<double> u(n), rho(n);
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const double wr = static_cast<double>(w[i]) - model.e_hat_[i];
    const double yr = y[i] - model.m_hat_[i];
    rho[i] = wr * wr;
    u[i] = yr / wr;
    num += yr * wr;
    den += rho[i];
  }
  model.ate_ = num / den;

  const GrowInput in{x, model.layout_, u, rho, w, params, resolve_mtry(config.mtry, model.layout_.size())};
  model.trees_ = grow_forest(in, config.num_trees, derive_seed(config.seed, kTagTrees));
  model.degenerate_features_ =
      std::all_of(model.trees_.begin(), model.trees_.end(), [](const Tree& t) { return t.nodes.size() == 1; });
  return model;
}

// A model without any split is the constant-effect model tau(x) = ATE.
double CausalForestModel::predict_row(std::span<const double> row) const {
  if (degenerate_features_) return ate_;
  return average_leaves(trees_, layout_, row, ate_);
}

std::vector<double> CausalForestModel::predict(const MatrixD& x) const {
  require(x.cols() == layout_.original_dim, ErrorCode::DimMismatch,
          "model expects " + std::to_string(layout_.original_dim) + " features, got " + std::to_string(x.cols()));
  std::vector<double> out(x.rows());
  parallel_for(x.rows(), [&](std::size_t i) { out[i] = predict_row(x.row(i)); });
  return out;
}

std::vector<double> CausalForestModel::predict_oob(const MatrixD& x_train) const {
  require(x_train.rows() == n_train_ && x_train.cols() == layout_.original_dim, ErrorCode::DimMismatch,
          "out-of-bag prediction needs the training matrix");
  const std::size_t n = n_train_;
  if (degenerate_features_) return std::vector<double>(n, ate_);
  std::vector<double> sum(n, 0.0);
  std::vector<std::uint32_t> count(n, 0);
  std::vector<std::uint8_t> used(n);
  for (const auto& t : trees_) {
    std::fill(used.begin(), used.end(), 0);
    for (auto r : t.structure) used[r] = 1;
    for (auto r : t.honest) used[r] = 1;
    for (std::size_t i = 0; i < n; ++i) {
      if (used[i]) continue;
      const TreeNode& leaf = t.nodes[t.leaf_for(x_train.row(i), layout_)];
      if (leaf.degenerate) continue;
      sum[i] += leaf.value;
      count[i]++;
    }
  }
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = count[i] > 0 ? sum[i] / count[i] : ate_;
  return out;
}

std::string CausalForestModel::serialize() const {
  Writer wr;
  wr.u32(kModelMagic);
  wr.u32(kModelVersion);
  wr.i32(config_.num_trees);
  wr.i32(config_.min_node_size);
  wr.f64(config_.honesty_fraction);
  wr.f64(config_.subsample_fraction);
  wr.i32(config_.mtry);
  wr.i32(config_.nuisance_trees);
  wr.u8(config_.propensity_forest ? 1 : 0);
  wr.u64(config_.seed);
  wr.u64(layout_.original_dim);
  wr.u32s(layout_.representative);
  wr.u64(layout_.members.size());
  for (const auto& m : layout_.members) wr.u32s(m);
  wr.u64(n_train_);
  wr.f64(ate_);
  wr.u8(degenerate_features_ ? 1 : 0);
  wr.f64s(m_hat_);
  wr.f64s(e_hat_);
  wr.u64(trees_.size());
  for (const auto& t : trees_) {
    wr.u64(t.nodes.size());
    for (const auto& node : t.nodes) {
      wr.i32(node.feature);
      wr.f64(node.threshold);
      wr.i32(node.left);
      wr.i32(node.right);
      wr.f64(node.value);
      wr.u32(node.honest_count);
      wr.u8(node.degenerate ? 1 : 0);
    }
    wr.u32s(t.structure);
    wr.u32s(t.honest);
  }
  return wr.take();
}

CausalForestModel CausalForestModel::deserialize(std::string_view blob) {
  Reader rd(blob);
  require(rd.u32() == kModelMagic, ErrorCode::MalformedHeader, "not a causal forest model blob");
  const std::uint32_t version = rd.u32();
  require(version == kModelVersion, ErrorCode::MalformedHeader, "unsupported model version " + std::to_string(version));
  CausalForestModel m;
  m.config_.num_trees = rd.i32();
  m.config_.min_node_size = rd.i32();
  m.config_.honesty_fraction = rd.f64();
  m.config_.subsample_fraction = rd.f64();
  m.config_.mtry = rd.i32();
  m.config_.nuisance_trees = rd.i32();
  m.config_.propensity_forest = rd.u8() != 0;
  m.config_.seed = rd.u64();
  m.layout_.original_dim = rd.u64();
  m.layout_.representative = rd.u32s();
  m.layout_.members.resize(rd.count(8));
  for (auto& mem : m.layout_.members) mem = rd.u32s();
  m.n_train_ = rd.u64();
  m.ate_ = rd.f64();
  m.degenerate_features_ = rd.u8() != 0;
  m.m_hat_ = rd.f64s();
  m.e_hat_ = rd.f64s();
  m.trees_.resize(rd.count(8));
  for (auto& t : m.trees_) {
    t.nodes.resize(rd.count(33));
    for (auto& node : t.nodes) {
      node.feature = rd.i32();
      node.threshold = rd.f64();
      node.left = rd.i32();
      node.right = rd.i32();
      node.value = rd.f64();
      node.honest_count = rd.u32();
      node.degenerate = rd.u8() != 0;
    }
    t.structure = rd.u32s();
    t.honest = rd.u32s();
  }
  require(rd.done(), ErrorCode::MalformedHeader, "trailing bytes in model blob");
  for (const auto& rep : m.layout_.representative)
    require(rep < m.layout_.original_dim, ErrorCode::MalformedHeader, "feature index out of range");
  for (const auto& t : m.trees_) {
    for (const auto& node : t.nodes) {
      if (node.feature < 0) continue;
      require(static_cast<std::size_t>(node.feature) < m.layout_.size() && node.left > 0 && node.right > 0 &&
                  static_cast<std::size_t>(node.right) < t.nodes.size() && static_cast<std::size_t>(node.left) < t.nodes.size(),
              ErrorCode::MalformedHeader, "corrupt tree node");
    }
  }
  return m;
}

std::uint64_t CausalForestModel::hash() const {
  const std::string blob = serialize();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : blob) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// ---------------------------------------------------------------------------

double DrScores::mean() const {
  return gamma.empty() ? 0.0 : std::accumulate(gamma.begin(), gamma.end(), 0.0) / static_cast<double>(gamma.size());
}

DrScores dr_scores(const CausalForestModel& model, const MatrixD& x, std::span<const int> w,
                   std::span<const double> y, const DrOptions& options) {
  require(x.cols() == model.feature_dim(), ErrorCode::DimMismatch,
          "model expects " + std::to_string(model.feature_dim()) + " features, got " + std::to_string(x.cols()));
  return dr_scores(model.config(), x, w, y, options);
}

DrScores dr_scores(const ForestConfig& cfg, const MatrixD& x, std::span<const int> w, std::span<const double> y,
                   const DrOptions& options) {
  cfg.validate();
  const std::size_t n = x.rows();
  require(w.size() == n && y.size() == n, ErrorCode::DimMismatch, "X, w and y must have the same number of rows");
  require(n >= 2, ErrorCode::TooFewUnits, "doubly robust scores need at least two units");
  const TreeParams params{cfg.min_node_size, cfg.honesty_fraction, cfg.subsample_fraction, cfg.mtry};
  const int trees = cfg.effective_nuisance_trees();

  DrScores out;
  out.fold_id = two_folds(n, derive_seed(cfg.seed, kTagDrFolds));
  out.mu0.assign(n, 0.0);
  out.mu1.assign(n, 0.0);

  std::size_t treated = 0;
  for (int wi : w) {
    require(wi == 0 || wi == 1, ErrorCode::NonBinaryTreatment, "treatment must be 0/1");
    treated += static_cast<std::size_t>(wi);
  }

  if (options.propensity) {
    out.propensity.assign(n, *options.propensity);
  } else if (cfg.propensity_forest) {
    std::vector<double> wd(w.begin(), w.end());
    out.propensity = cross_fit_regression(x, wd, params, trees, derive_seed(cfg.seed, kTagPropensity, 1));
  } else {
    out.propensity.assign(n, static_cast<double>(treated) / static_cast<double>(n));
  }
  for (auto& e : out.propensity) e = std::clamp(e, kPropensityClamp, 1.0 - kPropensityClamp);

  if (!options.zero_outcome_model) {
    for (int k = 0; k < 2; ++k) {
      std::vector<std::uint32_t> test;
      for (std::size_t i = 0; i < n; ++i)
        if (out.fold_id[i] == k) test.push_back(static_cast<std::uint32_t>(i));
      for (int arm = 0; arm < 2; ++arm) {
        std::vector<std::uint32_t> train;
        std::vector<double> y_train;
        for (std::size_t i = 0; i < n; ++i) {
          if (out.fold_id[i] != k && w[i] == arm) {
            train.push_back(static_cast<std::uint32_t>(i));
            y_train.push_back(y[i]);
          }
        }
        const auto forest = RegressionForest::fit(select_rows(x, train), y_train, params, trees,
                                                  derive_seed(cfg.seed, kTagDrArms, static_cast<std::uint64_t>(2 * k + arm)));
        auto& mu = arm == 1 ? out.mu1 : out.mu0;
        for (auto i : test) mu[i] = forest.predict(x.row(i));
      }
    }
  }

  out.gamma.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const double e = out.propensity[i];
    const double m1 = out.mu1[i], m0 = out.mu0[i];
    out.gamma[i] = m1 - m0 + (w[i] == 1 ? (y[i] - m1) / e : -(y[i] - m0) / (1.0 - e));
  }
  return out;
}

std::vector<double> variable_importance(const CausalForestModel& model, int max_depth, double decay) {
  const auto& layout = model.layout();
  const std::size_t k = layout.size();
  std::vector<std::vector<double>> freq(static_cast<std::size_t>(max_depth), std::vector<double>(k, 0.0));
  for (const auto& t : model.trees()) {
    std::vector<std::pair<std::size_t, int>> stack{{0, 0}};
    while (!stack.empty()) {
      auto [node, depth] = stack.back();
      stack.pop_back();
      const TreeNode& nd = t.nodes[node];
      if (nd.feature < 0 || depth >= max_depth) continue;
      freq[static_cast<std::size_t>(depth)][static_cast<std::size_t>(nd.feature)] += 1.0;
      stack.push_back({static_cast<std::size_t>(nd.left), depth + 1});
      stack.push_back({static_cast<std::size_t>(nd.right), depth + 1});
    }
  }
  std::vector<double> canonical(k, 0.0);
  for (int d = 0; d < max_depth; ++d) {
    auto& row = freq[static_cast<std::size_t>(d)];
    const double total = std::accumulate(row.begin(), row.end(), 0.0);
    if (total == 0.0) continue;
    const double weight = std::pow(static_cast<double>(d + 1), -decay);
    for (std::size_t f = 0; f < k; ++f) canonical[f] += weight * row[f] / total;
  }
  std::vector<double> out(layout.original_dim, 0.0);
  const double sum = std::accumulate(canonical.begin(), canonical.end(), 0.0);
  if (sum == 0.0) {
    // No splits anywhere: nothing distinguishes the features.
    if (!out.empty()) std::fill(out.begin(), out.end(), 1.0 / static_cast<double>(out.size()));
    return out;
  }
  for (std::size_t f = 0; f < k; ++f) {
    const auto& members = layout.members[f];
    const double share = canonical[f] / sum / static_cast<double>(members.size());
    for (auto col : members) out[col] = share;
  }
  return out;
}

double scale_fraction_top10(std::span<const double> importance, std::span<const std::size_t> block_sizes) {
  const std::size_t covered = std::accumulate(block_sizes.begin(), block_sizes.end(), std::size_t{0});
  require(!block_sizes.empty() && covered == importance.size(), ErrorCode::BlocksDontCover,
          "blocks cover " + std::to_string(covered) + " of " + std::to_string(importance.size()) + " features");
  require(importance.size() >= 10, ErrorCode::InvalidArgument, "need at least 10 features");
  std::vector<std::size_t> order(importance.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
  int in_first = 0;
  for (std::size_t i = 0; i < 10; ++i) in_first += order[i] < block_sizes[0] ? 1 : 0;
  return in_first / 10.0;
}

}  // namespace mscate
