#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mscate/forest.hpp"
#include "mscate/matrix.hpp"

namespace mscate {

enum class Weighting { Autoc, Qini };

std::string to_string(Weighting w);
Weighting parse_weighting(const std::string& text);

// Priority scores rank evaluation units (higher first). Ties are broken by
// unit id; with no ids, by position.
struct PriorityRule {
  std::vector<double> scores;
  std::vector<std::string> ids;  // empty or scores.size()
};

// Evaluation order: descending score, ascending id.
std::vector<std::uint32_t> priority_order(const PriorityRule& priority);

// TOC_j = mean(gamma over the top j units) - mean(gamma), j = 1..n.
std::vector<double> toc_curve(std::span<const double> gamma, std::span<const std::uint32_t> order);

// Point estimate (1/n) sum_j alpha(j/n) TOC_j with alpha = 1 (AUTOC) or q (QINI).
double rate_estimate(std::span<const double> gamma, std::span<const std::uint32_t> order, Weighting weighting);

struct RateReport {
  Weighting weighting = Weighting::Autoc;
  double point = 0.0;
  double sd = 0.0;
  double ratio = 0.0;     // NaN when zero_variance
  std::size_t n_eval = 0;
  int n_boot = 0;
  bool zero_variance = false;

  bool operator==(const RateReport& other) const;
};

struct MetricConfig {
  Weighting weighting = Weighting::Autoc;
  int n_boot = 200;
  bool swap_halves = false;

  void validate() const;
};

// Throws TooFewUnits (n < 20), InvalidArgument (n_boot < 2), DimMismatch.
RateReport rate(std::span<const double> gamma, const PriorityRule& priority, Weighting weighting, int n_boot,
                std::uint64_t seed);

struct PipelineConfig {
  ForestConfig forest;
  MetricConfig metric;
  std::uint64_t seed = 42;
};

// One direction of the split pipeline: forest fit on `train`, priorities and
// doubly robust scores on `eval`.
struct SplitEvaluation {
  std::vector<std::uint32_t> eval;  // row indices of the evaluation half
  std::vector<double> priority;
  DrScores scores;
  RateReport report;
};

struct PipelineResult {
  RateReport report;  // averaged over directions when swap_halves is set
  std::vector<SplitEvaluation> halves;
};

// Seeded 50/50 split; forest on half A, tau-hat priorities and doubly robust
// scores (nuisances cross-fitted within B) on half B, then rate(). Requires
// n >= 40.
PipelineResult run_rate_pipeline(const MatrixD& x, std::span<const int> w, std::span<const double> y,
                                 std::span<const std::string> ids, const PipelineConfig& config);

RateReport rate_ratio_pipeline(const MatrixD& x, std::span<const int> w, std::span<const double> y,
                               std::span<const std::string> ids, const PipelineConfig& config);

struct QiniCurve {
  std::vector<double> spend;     // j/n, j = 1..n
  std::vector<double> gain;
  std::vector<double> se;
  std::vector<double> baseline;  // spend * mean(gamma)
};

// Treats a unit when its priority is positive and it ranks in the top
// fraction B. Throws TooFewUnits (n < 2), InvalidArgument (n_boot < 2).
QiniCurve qini_curve(std::span<const double> gamma, const PriorityRule& priority, int n_boot, std::uint64_t seed);

void write_rate_json(std::ostream& out, const RateReport& report);
void write_rate_csv(std::ostream& out, const std::vector<std::pair<std::string, RateReport>>& rows);
void write_qini_csv(std::ostream& out, const QiniCurve& curve);
void write_qini_svg(std::ostream& out, const QiniCurve& curve);

}  // namespace mscate
