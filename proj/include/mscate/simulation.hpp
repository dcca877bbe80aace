#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "mscate/data_model.hpp"
#include "mscate/imaging.hpp"
#include "mscate/matrix.hpp"

namespace mscate {

// Bit k set means PerturbationKind k was applied.
using PerturbationFlags = std::uint8_t;

constexpr PerturbationFlags flag_of(PerturbationKind k) noexcept {
  return static_cast<PerturbationFlags>(1u << static_cast<unsigned>(k));
}
inline constexpr PerturbationFlags kAllPerturbations = 0x0F;

std::string flags_to_string(PerturbationFlags flags);           // "Mask+EdgeFade", "none"
PerturbationFlags parse_flags(const std::string& text);         // inverse; throws Config

struct SimDesign {
  PerturbationFlags perturbations = 0;
  double assignment_prob = 0.5;
  int small_scale = 32;
  int large_scale = 256;
  bool weak_prior = false;       // small patch drawn uniformly inside the large one
  bool contrast_nuisance = false;  // extra contrast on half the images, no outcome effect
  int mask_size = 2;
  double contrast_c = 0.5;
  std::uint64_t seed = 1;

  void validate() const;
};

// Independent Bernoulli(assignment_prob) draw per unit and perturbation.
std::vector<PerturbationFlags> assign_perturbations(const SimDesign& design, std::size_t n, std::uint64_t seed);

struct OutcomeMoments {
  double mean = 0.0;
  double variance = 0.0;
};

// Listed cells of the outcome table are used as given; other combinations
// add the means and variances of their Mask&EdgeFade block and single parts.
OutcomeMoments outcome_moments(PerturbationFlags flags);

// y_i ~ N(mean, variance) for unit i's flags, drawn from a per-unit stream.
// Throws UnknownFlagCombination for flags outside `allowed`.
std::vector<double> generate_outcomes(std::span<const PerturbationFlags> flags, PerturbationFlags allowed,
                                      std::uint64_t seed);

// ---------------------------------------------------------------------------
// Synthetic imagery

struct SceneSpec {
  int width = 1024;
  int height = 1024;
  int bands = 3;
  double level = 1.0;            // mean pixel level
  double texture_min = 0.08;     // local texture amplitude range
  double texture_max = 0.25;
  double gradient = 0.5;         // level change across the raster width
  std::uint64_t seed = 11;

  void validate() const;
};

// Smoothly varying texture amplitude over white pixel noise, plus a
// left-to-right level gradient.
RasterBundle synthetic_scene(const SceneSpec& spec);

// ---------------------------------------------------------------------------
// MLP regressor

struct MlpConfig {
  int hidden1 = 128;
  int hidden2 = 32;
  int epochs = 200;
  int batch_size = 64;
  double learning_rate = 1e-3;
  double validation_fraction = 0.1;  // early-stopping holdout; 0 disables
  int patience = 20;
  std::uint64_t seed = 7;

  void validate() const;
};

// in -> hidden1 (ReLU) -> hidden2 (ReLU) -> 1 (linear). Features and target
// are standardized with training statistics.
class Mlp {
 public:
  // Throws NonFiniteLoss naming the epoch.
  static Mlp train(const MatrixD& x, std::span<const double> y, const MlpConfig& config);

  double predict(std::span<const double> row) const;
  std::vector<double> predict(const MatrixD& x) const;

  int epochs_run() const noexcept { return epochs_run_; }

 private:
  struct Layer {
    int in = 0, out = 0;
    std::vector<float> w;  // out x in, row-major
    std::vector<float> b;
  };
  float forward(std::span<const float> x, std::vector<float>& h1, std::vector<float>& h2) const;

  std::vector<double> x_mean_, x_scale_;
  double y_mean_ = 0.0, y_scale_ = 1.0;
  Layer l1_, l2_, l3_;
  bool constant_ = false;
  int epochs_run_ = 0;

  friend class MlpTrainer;
};

struct R2Result {
  double r2 = 0.0;
  bool undefined = false;  // SST == 0
};

// Pooled 1 - SSE/SST over k seeded random folds. A fold's model seed depends
// only on its held-out units, so fold labels do not matter.
R2Result cv_r2(const MatrixD& x, std::span<const double> y, const MlpConfig& config, int k = 5);
// Same with explicit fold labels (any integers; a label's value is irrelevant).
R2Result cv_r2_folds(const MatrixD& x, std::span<const double> y, const MlpConfig& config, std::span<const int> fold);

// ---------------------------------------------------------------------------
// Experiments

enum class SimMode { SingleSmall, SingleLarge, MultiScaleConcat };
std::string to_string(SimMode mode);

struct SimSetup {
  SimDesign design;
  int n_units = 1000;
  int replicates = 10;
  int encoder_dim = 128;
  std::uint64_t encoder_seed = 5;
  MlpConfig mlp;

  void validate() const;
};

struct SimSample {
  MatrixD small;  // encoder_dim columns
  MatrixD large;
  std::vector<double> y;
  std::vector<PerturbationFlags> flags;
};

// One replicate: unit centers, perturbations, outcomes and both encodings.
SimSample simulate_sample(const SimSetup& setup, const RasterBundle& scene, std::uint64_t replicate_seed);

struct ModeResult {
  SimMode mode = SimMode::MultiScaleConcat;
  std::vector<double> r2;  // per replicate
  double mean = 0.0;
  double sd = 0.0;         // across replicates
  bool undefined = false;
};

struct ExperimentReport {
  SimDesign design;
  std::vector<ModeResult> modes;

  const ModeResult& mode(SimMode m) const;
};

ExperimentReport run_experiment(const SimSetup& setup, const RasterBundle& scene, std::span<const SimMode> modes);

// One row per design and mode.
void write_experiment_table(std::ostream& out, std::span<const ExperimentReport> reports);

}  // namespace mscate
