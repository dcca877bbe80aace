#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "mscate/experiment.hpp"
#include "mscate/simulation.hpp"

namespace mscate::cli {

// Effective settings of one run. Every field is reachable from the INI file
// as section.key; see fields().
struct RunConfig {
  std::uint64_t seed = 1;  // master seed; component seeds derive from it

  std::string raster;
  std::string units;
  std::string embeddings_dir;  // External encoder: embeddings_<scale>.csv

  std::string encoder_kind = "pyramid";  // pyramid | external
  int encoder_dim = 512;
  std::uint64_t encoder_seed = 0;

  std::vector<int> scales{16, 32, 64, 128, 256, 349};
  std::string reduction = "none";  // none | pca
  int pca_components = 50;
  bool displaced = false;
  std::string fetch_mode = "strict";  // strict | clamp
  int replicates = 10;

  ForestConfig forest;  // seed ignored; derived from the master seed
  MetricConfig metric;

  int scaling_max_c = 3;
  int subset_budget = 20;

  std::vector<int> qini_scales;  // empty: the first grid scale
  int qini_n_boot = 200;

  std::vector<PerturbationFlags> designs{
      flag_of(PerturbationKind::Mask), flag_of(PerturbationKind::EdgeFade), flag_of(PerturbationKind::Contrast),
      flag_of(PerturbationKind::Mask) | flag_of(PerturbationKind::EdgeFade)};
  std::vector<SimMode> modes{SimMode::SingleSmall, SimMode::SingleLarge, SimMode::MultiScaleConcat};
  SimSetup sim;      // design.perturbations and seeds are set per design
  SceneSpec scene;
};

enum class FieldKind { Int, Uint, Double, Bool, Text, IntList, Choice };

struct Field {
  std::string key;  // "section.name"
  FieldKind kind;
  std::vector<std::string> choices;  // Choice only
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, const std::string&)> set;  // throws Config
};

// Every configurable field in canonical order.
const std::vector<Field>& fields();

// Parses INI text; unknown sections or keys and malformed values throw Config
// naming the field.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::filesystem::path& path);

// Semantic checks; messages carry the field path.
void validate(const RunConfig& config);

// "section.key=value" lines for every field, in canonical order.
std::string canonical_text(const RunConfig& config);
std::uint64_t config_hash(const RunConfig& config);

struct DerivedSeeds {
  std::uint64_t forest, simulation, mlp, subsets, displacement, qini;
  std::vector<std::uint64_t> replicates;
};
DerivedSeeds derive_seeds(const RunConfig& config);

AnalysisConfig analysis_config(const RunConfig& config);
SimSetup sim_setup(const RunConfig& config, PerturbationFlags design);

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h = 0xcbf29ce484222325ULL);

}  // namespace mscate::cli
