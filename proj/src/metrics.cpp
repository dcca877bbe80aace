#include "mscate/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <ostream>

#include "json.hpp"
#include "mscate/data_model.hpp"
#include "mscate/error.hpp"
#include "mscate/parallel.hpp"
#include "mscate/rng.hpp"

namespace mscate {
namespace {

// Estimate from gamma already arranged in priority order.
double estimate_sorted(std::span<const double> sorted, Weighting weighting) {
  const std::size_t n = sorted.size();
  if (n == 0) return 0.0;
  const double mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(n);
  const double nd = static_cast<double>(n);
  double cum = 0.0, total = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    cum += sorted[j - 1];
    const double toc = cum / static_cast<double>(j) - mean;
    total += weighting == Weighting::Autoc ? toc : (static_cast<double>(j) / nd) * toc;
  }
  return total / nd;
}

double sample_sd(std::span<const double> v) {
  const double mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  double ss = 0.0;
  for (double x : v) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

void check_inputs(std::span<const double> gamma, const PriorityRule& priority) {
  require(priority.scores.size() == gamma.size(), ErrorCode::DimMismatch,
          "priority covers " + std::to_string(priority.scores.size()) + " units, scores cover " +
              std::to_string(gamma.size()));
  require(priority.ids.empty() || priority.ids.size() == gamma.size(), ErrorCode::DimMismatch,
          "priority ids do not match scores");
  for (double g : gamma) require(std::isfinite(g), ErrorCode::NonFiniteValue, "non-finite doubly robust score");
  for (double s : priority.scores) require(!std::isnan(s), ErrorCode::NonFiniteValue, "NaN priority");
}

// Half-sample replicate seeds.
constexpr std::uint64_t kTagBoot = 21;
constexpr std::uint64_t kTagSplit = 22;
constexpr std::uint64_t kTagForest = 23;

}  // namespace

std::string to_string(Weighting w) { return w == Weighting::Autoc ? "AUTOC" : "QINI"; }

Weighting parse_weighting(const std::string& text) {
  std::string up = text;
  std::transform(up.begin(), up.end(), up.begin(), [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  if (up == "AUTOC") return Weighting::Autoc;
  if (up == "QINI") return Weighting::Qini;
  fail(ErrorCode::Config, "unknown weighting '" + text + "' (expected AUTOC or QINI)");
}

std::vector<std::uint32_t> priority_order(const PriorityRule& priority) {
  std::vector<std::uint32_t> order(priority.scores.size());
  std::iota(order.begin(), order.end(), 0u);
  const auto& s = priority.scores;
  if (priority.ids.empty()) {
    std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) { return s[a] > s[b]; });
  } else {
    const auto& ids = priority.ids;
    std::sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
      if (s[a] != s[b]) return s[a] > s[b];
      if (ids[a] != ids[b]) return ids[a] < ids[b];
      return a < b;
    });
  }
  return order;
}

std::vector<double> toc_curve(std::span<const double> gamma, std::span<const std::uint32_t> order) {
  const std::size_t n = gamma.size();
  std::vector<double> toc(n);
  if (n == 0) return toc;
  const double mean = std::accumulate(gamma.begin(), gamma.end(), 0.0) / static_cast<double>(n);
  double cum = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    cum += gamma[order[j - 1]];
    toc[j - 1] = cum / static_cast<double>(j) - mean;
  }
  return toc;
}

double rate_estimate(std::span<const double> gamma, std::span<const std::uint32_t> order, Weighting weighting) {
  require(order.size() == gamma.size(), ErrorCode::DimMismatch, "order does not cover all units");
  std::vector<double> sorted(gamma.size());
  for (std::size_t j = 0; j < order.size(); ++j) sorted[j] = gamma[order[j]];
  return estimate_sorted(sorted, weighting);
}

bool RateReport::operator==(const RateReport& o) const {
  auto same = [](double a, double b) { return (std::isnan(a) && std::isnan(b)) || a == b; };
  return weighting == o.weighting && same(point, o.point) && same(sd, o.sd) && same(ratio, o.ratio) &&
         n_eval == o.n_eval && n_boot == o.n_boot && zero_variance == o.zero_variance;
}

void MetricConfig::validate() const {
  require(n_boot >= 2, ErrorCode::InvalidArgument, "n_boot must be >= 2");
}

RateReport rate(std::span<const double> gamma, const PriorityRule& priority, Weighting weighting, int n_boot,
                std::uint64_t seed) {
  check_inputs(gamma, priority);
  const std::size_t n = gamma.size();
  require(n >= 20, ErrorCode::TooFewUnits, "RATE needs at least 20 evaluation units, got " + std::to_string(n));
  require(n_boot >= 2, ErrorCode::InvalidArgument, "n_boot must be >= 2");

  const auto order = priority_order(priority);
  std::vector<double> sorted(n);
  for (std::size_t j = 0; j < n; ++j) sorted[j] = gamma[order[j]];

  RateReport report;
  report.weighting = weighting;
  report.n_eval = n;
  report.n_boot = n_boot;
  report.point = estimate_sorted(sorted, weighting);

  // Half-sample bootstrap: a subset of the ranked list keeps its relative order.
  const std::size_t half = n / 2;
  std::vector<double> reps(static_cast<std::size_t>(n_boot));
  parallel_for(reps.size(), [&](std::size_t r) {
    Rng rng(derive_seed(seed, kTagBoot, r));
    std::vector<std::uint8_t> keep(n, 0);
    for (auto pos : rng.sample_without_replacement(n, half)) keep[pos] = 1;
    std::vector<double> sub;
    sub.reserve(half);
    for (std::size_t j = 0; j < n; ++j)
      if (keep[j]) sub.push_back(sorted[j]);
    reps[r] = estimate_sorted(sub, weighting);
  });
  report.sd = sample_sd(reps);
  if (report.sd > 0.0) {
    report.ratio = report.point / report.sd;
  } else {
    report.zero_variance = true;
    report.ratio = std::numeric_limits<double>::quiet_NaN();
  }
  return report;
}

namespace {

SplitEvaluation evaluate_direction(const MatrixD& x, std::span<const int> w, std::span<const double> y,
                                   std::span<const std::string> ids, std::vector<std::uint32_t> train,
                                   std::vector<std::uint32_t> eval, const PipelineConfig& config,
                                   std::uint64_t direction) {
  std::vector<int> w_train, w_eval;
  std::vector<double> y_train, y_eval;
  for (auto i : train) {
    w_train.push_back(w[i]);
    y_train.push_back(y[i]);
  }
  for (auto i : eval) {
    w_eval.push_back(w[i]);
    y_eval.push_back(y[i]);
  }
  ForestConfig forest = config.forest;
  forest.seed = derive_seed(config.seed, kTagForest + direction, config.forest.seed);
  const MatrixD x_train = select_rows(x, train);
  const MatrixD x_eval = select_rows(x, eval);
  const auto model = fit_causal_forest(x_train, w_train, y_train, forest);

  SplitEvaluation out;
  out.priority = model.predict(x_eval);
  out.scores = dr_scores(model, x_eval, w_eval, y_eval);
  PriorityRule rule;
  rule.scores = out.priority;
  if (!ids.empty())
    for (auto i : eval) rule.ids.push_back(ids[i]);
  out.report = rate(out.scores.gamma, rule, config.metric.weighting, config.metric.n_boot,
                    derive_seed(config.seed, kTagBoot, direction));
  out.eval = std::move(eval);
  return out;
}

}  // namespace

PipelineResult run_rate_pipeline(const MatrixD& x, std::span<const int> w, std::span<const double> y,
                                 std::span<const std::string> ids, const PipelineConfig& config) {
  config.forest.validate();
  config.metric.validate();
  const std::size_t n = x.rows();
  require(w.size() == n && y.size() == n, ErrorCode::DimMismatch, "X, w and y must have the same number of rows");
  require(ids.empty() || ids.size() == n, ErrorCode::DimMismatch, "ids must match rows");
  require(n >= 40, ErrorCode::TooFewUnits, "RATE pipeline needs n >= 40, got " + std::to_string(n));

  Rng rng(derive_seed(config.seed, kTagSplit));
  const auto perm = rng.permutation(n);
  std::vector<std::uint32_t> a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n / 2));
  std::vector<std::uint32_t> b(perm.begin() + static_cast<std::ptrdiff_t>(n / 2), perm.end());
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());

  PipelineResult result;
  result.halves.push_back(evaluate_direction(x, w, y, ids, a, b, config, 0));
  if (!config.metric.swap_halves) {
    result.report = result.halves[0].report;
    return result;
  }
  result.halves.push_back(evaluate_direction(x, w, y, ids, b, a, config, 1));
  const RateReport& r0 = result.halves[0].report;
  const RateReport& r1 = result.halves[1].report;
  RateReport& r = result.report;
  r.weighting = config.metric.weighting;
  r.n_boot = config.metric.n_boot;
  r.n_eval = r0.n_eval + r1.n_eval;
  r.point = (r0.point + r1.point) / 2.0;
  r.sd = (r0.sd + r1.sd) / 2.0;
  if (r.sd > 0.0) {
    r.ratio = r.point / r.sd;
  } else {
    r.zero_variance = true;
    r.ratio = std::numeric_limits<double>::quiet_NaN();
  }
  return result;
}

RateReport rate_ratio_pipeline(const MatrixD& x, std::span<const int> w, std::span<const double> y,
                               std::span<const std::string> ids, const PipelineConfig& config) {
  return run_rate_pipeline(x, w, y, ids, config).report;
}

QiniCurve qini_curve(std::span<const double> gamma, const PriorityRule& priority, int n_boot, std::uint64_t seed) {
  check_inputs(gamma, priority);
  const std::size_t n = gamma.size();
  require(n >= 2, ErrorCode::TooFewUnits, "Qini curve needs at least 2 units");
  require(n_boot >= 2, ErrorCode::InvalidArgument, "n_boot must be >= 2");
  const auto order = priority_order(priority);

  // Policy value contributed by each rank position.
  std::vector<double> contrib(n);
  for (std::size_t j = 0; j < n; ++j) contrib[j] = priority.scores[order[j]] > 0.0 ? gamma[order[j]] : 0.0;

  QiniCurve curve;
  const double nd = static_cast<double>(n);
  const double mean = std::accumulate(gamma.begin(), gamma.end(), 0.0) / nd;
  double cum = 0.0;
  for (std::size_t j = 1; j <= n; ++j) {
    cum += contrib[j - 1];
    const double b = static_cast<double>(j) / nd;
    curve.spend.push_back(b);
    curve.gain.push_back(cum / nd);
    curve.baseline.push_back(b * mean);
  }

  const std::size_t m = n / 2;
  std::vector<std::vector<double>> reps(static_cast<std::size_t>(n_boot));
  parallel_for(reps.size(), [&](std::size_t r) {
    Rng rng(derive_seed(seed, kTagBoot, r));
    std::vector<std::uint8_t> keep(n, 0);
    for (auto pos : rng.sample_without_replacement(n, m)) keep[pos] = 1;
    std::vector<double> local(m + 1, 0.0);
    std::size_t k = 0;
    for (std::size_t j = 0; j < n; ++j) {
      if (!keep[j]) continue;
      local[k + 1] = local[k] + contrib[j];
      ++k;
    }
    auto& out = reps[r];
    out.resize(n);
    for (std::size_t j = 1; j <= n; ++j) {
      const std::size_t kk = (j * m + n - 1) / n;  // ceil(B * m)
      out[j - 1] = local[kk] / static_cast<double>(m);
    }
  });
  curve.se.resize(n);
  std::vector<double> column(reps.size());
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t r = 0; r < reps.size(); ++r) column[r] = reps[r][j];
    curve.se[j] = sample_sd(column);
  }
  return curve;
}

void write_rate_json(std::ostream& out, const RateReport& r) {
  nlohmann::ordered_json j;
  j["weighting"] = to_string(r.weighting);
  j["point"] = r.point;
  j["sd"] = r.sd;
  j["ratio"] = r.zero_variance ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.ratio);
  j["n_eval"] = r.n_eval;
  j["n_boot"] = r.n_boot;
  j["zero_variance"] = r.zero_variance;
  out << j.dump(2) << '\n';
}

void write_rate_csv(std::ostream& out, const std::vector<std::pair<std::string, RateReport>>& rows) {
  out << "label,weighting,point,sd,ratio,n_eval,n_boot,zero_variance\n";
  for (const auto& [label, r] : rows) {
    out << label << ',' << to_string(r.weighting) << ',' << format_double(r.point) << ',' << format_double(r.sd)
        << ',' << (r.zero_variance ? std::string("NA") : format_double(r.ratio)) << ',' << r.n_eval << ','
        << r.n_boot << ',' << (r.zero_variance ? 1 : 0) << '\n';
  }
}

void write_qini_csv(std::ostream& out, const QiniCurve& c) {
  out << "B,gain,se,baseline\n";
  for (std::size_t j = 0; j < c.spend.size(); ++j)
    out << format_double(c.spend[j]) << ',' << format_double(c.gain[j]) << ',' << format_double(c.se[j]) << ','
        << format_double(c.baseline[j]) << '\n';
}

void write_qini_svg(std::ostream& out, const QiniCurve& c) {
  constexpr double kW = 480, kH = 320, kPad = 40;
  double lo = 0.0, hi = 0.0;
  for (std::size_t j = 0; j < c.spend.size(); ++j) {
    lo = std::min({lo, c.gain[j] - c.se[j], c.baseline[j]});
    hi = std::max({hi, c.gain[j] + c.se[j], c.baseline[j]});
  }
  if (hi == lo) hi = lo + 1.0;
  auto px = [&](double b) { return kPad + b * (kW - 2 * kPad); };
  auto py = [&](double v) { return kH - kPad - (v - lo) / (hi - lo) * (kH - 2 * kPad); };
  auto polyline = [&](const std::vector<double>& v, const char* style) {
    out << "<polyline fill=\"none\" " << style << " points=\"" << format_double(px(0.0)) << ','
        << format_double(py(0.0));
    for (std::size_t j = 0; j < v.size(); ++j) out << ' ' << format_double(px(c.spend[j])) << ',' << format_double(py(v[j]));
    out << "\"/>\n";
  };
  out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH << "\">\n";
  out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  out << "<line x1=\"" << kPad << "\" y1=\"" << format_double(py(0.0)) << "\" x2=\"" << kW - kPad << "\" y2=\""
      << format_double(py(0.0)) << "\" stroke=\"#999\"/>\n";
  polyline(c.baseline, "stroke=\"#888\" stroke-dasharray=\"4 3\"");
  polyline(c.gain, "stroke=\"#1f5fa8\" stroke-width=\"2\"");
  out << "<text x=\"" << kW / 2 << "\" y=\"" << kH - 8 << "\" text-anchor=\"middle\" font-size=\"12\">"
      << "treated fraction B</text>\n";
  out << "</svg>\n";
}

}  // namespace mscate
