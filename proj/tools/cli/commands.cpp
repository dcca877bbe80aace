#include "commands.hpp"

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "CLI11.hpp"
#include "config.hpp"
#include "json.hpp"
#include "mscate/error.hpp"
#include "mscate/kernels.hpp"
#include "mscate/parallel.hpp"
#include "mscate/rng.hpp"

namespace mscate::cli {
namespace {

namespace fs = std::filesystem;
using ojson = nlohmann::ordered_json;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot read " + p.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

// Tracks inputs (hashed for the manifest) and outputs (never allowed to
// overwrite an input).
class Run {
 public:
  Run(std::string command, RunConfig config, fs::path out)
      : command_(std::move(command)), config_(std::move(config)), out_(std::move(out)) {}

  const RunConfig& config() const { return config_; }

  void input(const fs::path& p) {
    inputs_.emplace_back(p.string(), hex64(fnv1a(read_bytes(p))));
    std::error_code ec;
    guarded_.insert(fs::weakly_canonical(p, ec).string());
  }

  std::vector<UnitRecord> units() {
    require(!config_.units.empty(), ErrorCode::Config, "paths.units is required for " + command_);
    input(config_.units);
    return load_units(config_.units);
  }

  RasterBundle raster() {
    require(!config_.raster.empty(), ErrorCode::Config, "paths.raster is required for " + command_);
    input(config_.raster);
    input(raster_payload_path(config_.raster));
    return load_raster(config_.raster);
  }

  bool needs_raster() const { return config_.encoder_kind == "pyramid" || config_.displaced; }

  // External tables for every requested scale, registered as inputs.
  void attach_tables(AnalysisConfig& a, const std::vector<int>& scales) {
    if (a.encoders.kind != EncoderKind::External) return;
    for (int s : scales) {
      const fs::path p = fs::path(config_.embeddings_dir) / ("embeddings_" + std::to_string(s) + ".csv");
      require(fs::exists(p), ErrorCode::MissingEmbedding, "missing embedding table " + p.string());
      input(p);
      auto table = std::make_shared<EmbeddingTable>(load_embeddings(p));
      require(table->scale_tag() == s, ErrorCode::ScaleTagMismatch,
              p.string() + " is tagged scale " + std::to_string(table->scale_tag()));
      a.encoders.tables[s] = std::move(table);
    }
  }

  template <class Fn>
  void write(const std::string& name, Fn&& fn) {
    fs::create_directories(out_);
    const fs::path p = out_ / name;
    std::error_code ec;
    require(!guarded_.count(fs::weakly_canonical(p, ec).string()), ErrorCode::InvalidArgument,
            "refusing to overwrite input file " + p.string());
    std::ostringstream buf;
    fn(buf);
    const std::string bytes = buf.str();
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    require(f.good(), ErrorCode::Io, "cannot write " + p.string());
    f << bytes;
    require(f.good(), ErrorCode::Io, "write failed for " + p.string());
    outputs_.emplace_back(name, hex64(fnv1a(bytes)));
  }

  void manifest() {
    const DerivedSeeds seeds = derive_seeds(config_);
    ojson m;
    m["command"] = command_;
    m["config_hash"] = hex64(config_hash(config_));
    m["seed"] = config_.seed;
    ojson ds;
    ds["forest"] = seeds.forest;
    ds["simulation"] = seeds.simulation;
    ds["mlp"] = seeds.mlp;
    ds["subsets"] = seeds.subsets;
    ds["displacement"] = seeds.displacement;
    ds["qini"] = seeds.qini;
    ds["replicates"] = seeds.replicates;
    m["derived_seeds"] = ds;
    m["isa"] = std::string(kernels::isa_name(kernels::active_isa()));
    ojson cfg;
    for (const auto& f : fields()) cfg[f.key] = f.get(config_);
    m["config"] = cfg;
    auto list = [](const auto& v) {
      ojson a = ojson::array();
      for (const auto& [path, hash] : v) a.push_back({{"path", path}, {"fnv1a64", hash}});
      return a;
    };
    m["inputs"] = list(inputs_);
    m["outputs"] = list(outputs_);
    const std::string text = m.dump(2) + "\n";
    std::ofstream f(out_ / "manifest.json", std::ios::binary | std::ios::trunc);
    require(f.good(), ErrorCode::Io, "cannot write manifest");
    f << text;
  }

 private:
  std::string command_;
  RunConfig config_;
  fs::path out_;
  std::vector<std::pair<std::string, std::string>> inputs_, outputs_;
  std::set<std::string> guarded_;
};

void write_gain_outputs(Run& run, const std::string& prefix, const GainReport& g) {
  run.write(prefix + "heatmap.csv", [&](std::ostream& o) { write_matrix_csv(o, g.scales, g.heatmap); });
  run.write(prefix + "singles.csv", [&](std::ostream& o) { write_singles_csv(o, g.scales, g.single); });
  run.write(prefix + "gain.json", [&](std::ostream& o) { write_gain_json(o, g); });
  run.write(prefix + "replicates.csv", [&](std::ostream& o) {
    o << "replicate,s1,s2,ratio\n";
    for (std::size_t r = 0; r < g.replicate_heatmaps.size(); ++r) {
      for (std::size_t i = 0; i < g.scales.size(); ++i) {
        for (std::size_t j = i; j < g.scales.size(); ++j)
          o << r << ',' << g.scales[i] << ',' << g.scales[j] << ',' << format_double(g.replicate_heatmaps[r](i, j))
            << '\n';
        o << r << ',' << g.scales[i] << ",," << format_double(g.replicate_single[r][i]) << '\n';
      }
    }
  });
  int si = -1, sj = -1;
  for (std::size_t i = 0; i < g.scales.size(); ++i) {
    if (g.scales[i] == g.best_s1) si = static_cast<int>(i);
    if (g.scales[i] == g.best_s2) sj = static_cast<int>(i);
  }
  run.write(prefix + "heatmap.svg",
            [&](std::ostream& o) { write_heatmap_svg(o, g.scales, g.heatmap, si, sj, "RATE Ratio by scale pair"); });
}

void cmd_simulate(Run& run) {
  const RunConfig& c = run.config();
  const RasterBundle scene = c.raster.empty() ? synthetic_scene(c.scene) : run.raster();
  std::vector<ExperimentReport> reports;
  for (PerturbationFlags design : c.designs) {
    std::cerr << "simulate: " << flags_to_string(design) << '\n';
    reports.push_back(run_experiment(sim_setup(c, design), scene, c.modes));
  }
  run.write("simulation.csv", [&](std::ostream& o) { write_experiment_table(o, reports); });
  run.write("simulation_replicates.csv", [&](std::ostream& o) {
    o << "perturbations,weak_prior,mode,replicate,r2\n";
    for (const auto& rep : reports)
      for (const auto& m : rep.modes)
        for (std::size_t r = 0; r < m.r2.size(); ++r)
          o << flags_to_string(rep.design.perturbations) << ',' << (rep.design.weak_prior ? 1 : 0) << ','
            << to_string(m.mode) << ',' << r << ',' << format_double(m.r2[r]) << '\n';
  });
}

void cmd_embed(Run& run) {
  const RunConfig& c = run.config();
  require(c.encoder_kind == "pyramid", ErrorCode::Config, "embed materializes the built-in encoder; set encoder.kind=pyramid");
  const auto units = run.units();
  const RasterBundle bundle = run.raster();
  const AnalysisConfig a = analysis_config(c);
  for (int s : c.scales) {
    const EmbeddingTable t = embed_units(units, bundle, s, a.encoders.for_scale(s), a.grid.mode);
    run.write("embeddings_" + std::to_string(s) + ".csv", [&](std::ostream& o) {
      o << embeddings_to_text(t);
    });
  }
}

void cmd_gridsearch(Run& run) {
  AnalysisConfig a = analysis_config(run.config());
  const auto units = run.units();
  std::optional<RasterBundle> bundle;
  if (run.needs_raster()) bundle = run.raster();
  run.attach_tables(a, run.config().scales);
  const GainReport g = grid_search(units, bundle ? &*bundle : nullptr, a);
  write_gain_outputs(run, "", g);
}

void cmd_scaling(Run& run) {
  AnalysisConfig a = analysis_config(run.config());
  const auto units = run.units();
  std::optional<RasterBundle> bundle;
  if (run.needs_raster()) bundle = run.raster();
  run.attach_tables(a, run.config().scales);
  const ScalingCurve curve = scaling_scales(units, bundle ? &*bundle : nullptr, a);
  run.write("scaling.csv", [&](std::ostream& o) { write_scaling_csv(o, curve); });
  run.write("scaling_subsets.csv", [&](std::ostream& o) {
    o << "C,subset\n";
    for (std::size_t c = 0; c < curve.subsets.size(); ++c)
      for (const auto& s : curve.subsets[c]) {
        o << curve.c[c] << ',';
        for (std::size_t k = 0; k < s.size(); ++k) o << (k ? "+" : "") << s[k];
        o << '\n';
      }
  });
}

void cmd_displaced(Run& run) {
  const RunConfig& c = run.config();
  require(c.encoder_kind == "pyramid", ErrorCode::Config,
          "displaced analysis re-encodes moved patches; set encoder.kind=pyramid");
  const AnalysisConfig a = analysis_config(c);
  const auto units = run.units();
  const RasterBundle bundle = run.raster();
  const DisplacedReport rep = displaced_analysis(units, bundle, a);
  write_gain_outputs(run, "centered_", rep.centered);
  write_gain_outputs(run, "displaced_", rep.displaced);
  run.write("displaced_centers.csv", [&](std::ostream& o) {
    o << "id,x,y\n";
    for (std::size_t i = 0; i < units.size(); ++i)
      o << units[i].id << ',' << format_double(rep.centers[i].x) << ',' << format_double(rep.centers[i].y) << '\n';
  });
  run.write("comparison.json", [&](std::ostream& o) {
    auto num = [](double v) { return std::isfinite(v) ? ojson(v) : ojson(nullptr); };
    ojson j;
    j["mean_ratio_centered"] = num(rep.mean_ratio_centered);
    j["mean_ratio_displaced"] = num(rep.mean_ratio_displaced);
    j["mean_ratio_difference"] = num(rep.mean_ratio_difference);
    j["G_centered"] = num(rep.centered.gain);
    j["se_G_centered"] = num(rep.centered.se_gain);
    j["G_displaced"] = num(rep.displaced.gain);
    j["se_G_displaced"] = num(rep.displaced.se_gain);
    o << j.dump(2) << '\n';
  });
}

void cmd_qini(Run& run) {
  const RunConfig& c = run.config();
  AnalysisConfig a = analysis_config(c);
  const std::vector<int> scales = c.qini_scales.empty() ? std::vector<int>{c.scales.front()} : c.qini_scales;
  a.grid.scales = scales;
  const auto units = run.units();
  std::optional<RasterBundle> bundle;
  if (run.needs_raster()) bundle = run.raster();
  run.attach_tables(a, scales);
  const EmbeddingCache cache(units, bundle ? &*bundle : nullptr, a.grid, a.encoders);
  const MatrixD x = cache.features(scales, a.grid.reduction);
  std::vector<int> w;
  std::vector<double> y;
  std::vector<std::string> ids;
  for (const auto& u : units) {
    w.push_back(u.w);
    y.push_back(u.outcome);
    ids.push_back(u.id);
  }
  const DerivedSeeds seeds = derive_seeds(c);
  PipelineConfig p = a.pipeline;
  p.seed = seeds.qini;
  const PipelineResult result = run_rate_pipeline(x, w, y, ids, p);
  const SplitEvaluation& half = result.halves.front();
  PriorityRule rule;
  rule.scores = half.priority;
  for (auto i : half.eval) rule.ids.push_back(ids[i]);
  const QiniCurve curve = qini_curve(half.scores.gamma, rule, c.qini_n_boot, derive_seed(seeds.qini, 1));
  run.write("qini.csv", [&](std::ostream& o) { write_qini_csv(o, curve); });
  run.write("qini.svg", [&](std::ostream& o) { write_qini_svg(o, curve); });
  run.write("rate.json", [&](std::ostream& o) { write_rate_json(o, result.report); });
}

void cmd_interpret(Run& run) {
  AnalysisConfig a = analysis_config(run.config());
  const auto units = run.units();
  std::optional<RasterBundle> bundle;
  if (run.needs_raster()) bundle = run.raster();
  run.attach_tables(a, run.config().scales);
  const MatrixD m = interpretability_heatmap(units, bundle ? &*bundle : nullptr, a);
  run.write("interpret.csv", [&](std::ostream& o) { write_matrix_csv(o, a.grid.scales, m); });
  run.write("interpret.svg", [&](std::ostream& o) {
    write_heatmap_svg(o, a.grid.scales, m, -1, -1, "Top-10 importance share of the smaller scale");
  });
}

int exit_code(ErrorCategory c) { return static_cast<int>(c); }

}  // namespace

int run(int argc, const char* const* argv) {
  CLI::App app{"Multi-scale CATE analysis over satellite image patches"};
  app.require_subcommand(1);
  app.fallthrough();
  std::string config_path, out_dir, simd = "auto";
  std::optional<std::uint64_t> seed;
  unsigned threads = 0;
  bool swap_halves = false;
  app.add_option("--config", config_path, "INI configuration file")->required()->check(CLI::ExistingFile);
  app.add_option("--out", out_dir, "Output directory (default $MSCATE_OUTPUT_ROOT/<command>)");
  app.add_option("--seed", seed, "Override run.seed");
  app.add_option("--threads", threads, "Worker thread cap (0: all cores); outputs do not depend on it");
  app.add_flag("--swap-halves", swap_halves, "Average the RATE pipeline over both split directions");
  app.add_option("--simd", simd, "Kernel variant: auto, scalar, avx2, neon");

  const std::vector<std::pair<std::string, std::string>> commands{
      {"simulate", "Simulation study over perturbation designs"},
      {"embed", "Write per-scale embedding tables"},
      {"gridsearch", "Scale-pair grid search and multi-scale gain"},
      {"scaling", "Mean RATE Ratio against the number of concatenated scales"},
      {"displaced", "Grid search with randomly displaced image centers"},
      {"qini", "Qini curve for one feature configuration"},
      {"interpret", "Importance share of the smaller scale per scale pair"}};
  for (const auto& [name, help] : commands) app.add_subcommand(name, help);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 1;
  }
  const std::string command = app.get_subcommands().front()->get_name();

  try {
    RunConfig config = load_config(config_path);
    if (seed) config.seed = *seed;
    if (swap_halves) config.metric.swap_halves = true;
    validate(config);
    set_max_threads(threads);
    if (simd != "auto") kernels::force_isa(kernels::parse_isa(simd));

    fs::path out = out_dir;
    if (out.empty()) {
      const char* root = std::getenv("MSCATE_OUTPUT_ROOT");
      out = fs::path(root && *root ? root : "mscate_out") / command;
    }
    Run run(command, std::move(config), out);
    run.input(config_path);
    if (command == "simulate") cmd_simulate(run);
    else if (command == "embed") cmd_embed(run);
    else if (command == "gridsearch") cmd_gridsearch(run);
    else if (command == "scaling") cmd_scaling(run);
    else if (command == "displaced") cmd_displaced(run);
    else if (command == "qini") cmd_qini(run);
    else if (command == "interpret") cmd_interpret(run);
    run.manifest();
    return 0;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.category());
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error [Io]: " << e.what() << '\n';
    return exit_code(ErrorCategory::Data);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(ErrorCategory::Data);
  }
}

}  // namespace mscate::cli
