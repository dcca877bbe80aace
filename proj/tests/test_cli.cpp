#include <gtest/gtest.h>

#include <filesystem>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "cli/commands.hpp"
#include "cli/config.hpp"
#include "mscate/error.hpp"
#include "mscate/experiment.hpp"
#include "test_support.hpp"

namespace mscate::cli {
namespace {

namespace fs = std::filesystem;
using test::scratch_dir;
using test::slurp;
using test::spit;

int invoke(std::vector<std::string> args) {
  args.insert(args.begin(), "mscate");
  std::vector<const char*> argv;
  for (const auto& a : args) argv.push_back(a.c_str());
  return run(static_cast<int>(argv.size()), argv.data());
}

// Canonical "section.key=value" lines back to INI text.
std::string to_ini(const std::string& canonical) {
  std::map<std::string, std::string> sections;
  std::istringstream in(canonical);
  std::string line;
  std::vector<std::string> order;
  while (std::getline(in, line)) {
    const auto dot = line.find('.');
    const std::string section = line.substr(0, dot);
    if (!sections.count(section)) order.push_back(section);
    sections[section] += line.substr(dot + 1) + "\n";
  }
  std::string out;
  for (const auto& s : order) out += "[" + s + "]\n" + sections[s];
  return out;
}

std::string other_value(const Field& f, const RunConfig& c) {
  const std::string v = f.get(c);
  if (f.key == "simulation.designs") return v == "Mask" ? "Contrast" : "Mask";
  if (f.key == "simulation.modes") return v == "single_small" ? "single_large" : "single_small";
  switch (f.kind) {
    case FieldKind::Int: return std::to_string(std::stoll(v) + 1);
    case FieldKind::Uint: return std::to_string(std::stoull(v) + 1);
    case FieldKind::Double: return format_double(std::stod(v) + 0.125);
    case FieldKind::Bool: return v == "true" ? "false" : "true";
    case FieldKind::Text: return v + "x";
    case FieldKind::IntList: return v.empty() ? "7" : v + ",999";
    case FieldKind::Choice:
      for (const auto& ch : f.choices)
        if (ch != v) return ch;
  }
  return v;
}

TEST(Config, DefaultsValidate) { EXPECT_NO_THROW(validate(RunConfig{})); }

TEST(Config, CanonicalTextRoundTrips) {
  RunConfig c = parse_config("[grid]\nscales = 4, 8\n[forest]\nnum_trees = 33\n[simulation]\ndesigns = all\n");
  const std::string text = canonical_text(c);
  EXPECT_EQ(canonical_text(parse_config(to_ini(text))), text);
  EXPECT_EQ(config_hash(parse_config(to_ini(text))), config_hash(c));
}

TEST(Config, EveryFieldChangesTheHash) {
  const RunConfig base;
  const std::uint64_t h0 = config_hash(base);
  std::set<std::string> keys;
  for (const auto& f : fields()) {
    EXPECT_TRUE(keys.insert(f.key).second) << "duplicate field " << f.key;
    RunConfig c = base;
    const std::string v = other_value(f, base);
    ASSERT_NO_THROW(f.set(c, v)) << f.key << "=" << v;
    EXPECT_EQ(f.get(c), v) << f.key;
    EXPECT_NE(config_hash(c), h0) << f.key;
  }
}

TEST(Config, UnknownFieldAndSectionAreRejected) {
  try {
    parse_config("[forest]\nnum_tres = 3\n");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Config);
    EXPECT_NE(std::string(e.what()).find("forest.num_tres"), std::string::npos);
  }
  EXPECT_THROW(parse_config("[nope]\na = 1\n"), Error);
  EXPECT_THROW(parse_config("[forest]\nnum_trees = ten\n"), Error);
  EXPECT_THROW(parse_config("[metric]\nweighting = median\n"), Error);
}

TEST(Config, ValidateNamesTheSection) {
  RunConfig c;
  c.scales = {16, 8};
  try {
    validate(c);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.category(), ErrorCategory::Usage);
    EXPECT_NE(std::string(e.what()).find("[grid]"), std::string::npos);
  }
}

TEST(Config, DerivedSeedsAreDistinctAndStable) {
  RunConfig c;
  c.replicates = 4;
  const DerivedSeeds a = derive_seeds(c), b = derive_seeds(c);
  EXPECT_EQ(a.replicates, b.replicates);
  std::set<std::uint64_t> all{a.forest, a.simulation, a.mlp, a.subsets, a.displacement, a.qini};
  all.insert(a.replicates.begin(), a.replicates.end());
  EXPECT_EQ(all.size(), 10u);
  c.seed = 2;
  EXPECT_NE(derive_seeds(c).forest, a.forest);
}

// Small planted fixture on disk plus a config pointing at it.
struct Fixture {
  fs::path dir;
  fs::path config;

  explicit Fixture(const std::string& name, const std::string& extra = "") {
    dir = scratch_dir("cli_" + name);
    PlantedSpec spec;
    spec.n_units = 160;
    spec.tile = 16;
    spec.layers = {{4, 1.0, 0.0}, {16, 1.0, 0.0}};
    spec.seed = 5;
    const PlantedData d = planted_data(spec);
    save_raster(d.bundle, dir / "raster.json");
    save_units(d.units, dir / "units.csv");
    config = dir / "run.ini";
    spit(config, "[paths]\nraster = " + (dir / "raster.json").string() + "\nunits = " + (dir / "units.csv").string() +
                     "\n[encoder]\ndim = 8\n[grid]\nscales = 4,16\nreplicates = 2\n[forest]\nnum_trees = 60\n"
                     "[metric]\nn_boot = 40\n[analysis]\nscaling_max_c = 2\n[qini]\nn_boot = 20\n" +
                     extra);
  }
};

std::map<std::string, std::string> read_dir(const fs::path& dir) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::directory_iterator(dir)) out[e.path().filename().string()] = slurp(e.path());
  return out;
}

TEST(Cli, OutputsDoNotDependOnThreadCountOrIsa) {
  const Fixture fx("threads");
  for (const std::string cmd : {"gridsearch", "qini"}) {
    const fs::path a = fx.dir / (cmd + "_a"), b = fx.dir / (cmd + "_b");
    ASSERT_EQ(invoke({cmd, "--config", fx.config.string(), "--out", a.string(), "--threads", "1"}), 0);
    ASSERT_EQ(invoke({cmd, "--config", fx.config.string(), "--out", b.string(), "--threads", "3",
                      "--simd", "scalar"}), 0);
    auto fa = read_dir(a), fb = read_dir(b);
    // The manifest records the active kernel variant; everything else must match.
    for (auto* m : {&fa["manifest.json"], &fb["manifest.json"]}) {
      const auto at = m->find("\"isa\": ");
      ASSERT_NE(at, std::string::npos);
      m->erase(at, m->find('\n', at) - at);
    }
    EXPECT_GE(fa.size(), 3u);
    EXPECT_EQ(fa, fb) << cmd;
  }
}

TEST(Cli, ManifestRecordsHashesAndSeeds) {
  const Fixture fx("manifest");
  const fs::path out = fx.dir / "out";
  ASSERT_EQ(invoke({"gridsearch", "--config", fx.config.string(), "--out", out.string(), "--seed", "9"}), 0);
  const std::string m = slurp(out / "manifest.json");
  RunConfig c = load_config(fx.config);
  c.seed = 9;
  char hex[17];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(config_hash(c)));
  EXPECT_NE(m.find(std::string("\"config_hash\": \"") + hex + "\""), std::string::npos);
  EXPECT_NE(m.find("\"seed\": 9"), std::string::npos);
  EXPECT_NE(m.find("units.csv"), std::string::npos);
  EXPECT_NE(m.find("heatmap.csv"), std::string::npos);
  EXPECT_EQ(m.find(out.string()), std::string::npos);
}

TEST(Cli, ExternalTablesFromEmbedReproduceTheGrid) {
  const Fixture fx("embed");
  const fs::path emb = fx.dir / "emb", g1 = fx.dir / "g1", g2 = fx.dir / "g2";
  ASSERT_EQ(invoke({"embed", "--config", fx.config.string(), "--out", emb.string()}), 0);
  ASSERT_EQ(invoke({"gridsearch", "--config", fx.config.string(), "--out", g1.string()}), 0);
  const fs::path ext2 = fx.dir / "ext2.ini";
  std::string text = slurp(fx.config);
  text.replace(text.find("[encoder]\n"), 10, "[encoder]\nkind = external\n");
  text.replace(text.find("[paths]\n"), 8, "[paths]\nembeddings_dir = " + emb.string() + "\n");
  spit(ext2, text);
  ASSERT_EQ(invoke({"gridsearch", "--config", ext2.string(), "--out", g2.string()}), 0);
  EXPECT_EQ(slurp(g1 / "heatmap.csv"), slurp(g2 / "heatmap.csv"));
  EXPECT_EQ(slurp(g1 / "singles.csv"), slurp(g2 / "singles.csv"));

  fs::remove(emb / "embeddings_16.csv");
  EXPECT_EQ(invoke({"gridsearch", "--config", ext2.string(), "--out", g2.string()}), 2);
  fs::copy_file(emb / "embeddings_4.csv", emb / "embeddings_16.csv");
  EXPECT_EQ(invoke({"gridsearch", "--config", ext2.string(), "--out", g2.string()}), 2);
}

TEST(Cli, ExitCodesFollowErrorCategories) {
  const Fixture fx("codes");
  const fs::path out = fx.dir / "out";
  EXPECT_EQ(invoke({"gridsearch"}), 1);
  EXPECT_EQ(invoke({"bogus", "--config", fx.config.string()}), 1);
  EXPECT_EQ(invoke({"gridsearch", "--config", (fx.dir / "missing.ini").string()}), 1);

  const fs::path bad = fx.dir / "bad.ini";
  spit(bad, "[forest]\nnum_tres = 3\n");
  EXPECT_EQ(invoke({"gridsearch", "--config", bad.string(), "--out", out.string()}), 1);

  const fs::path no_units = fx.dir / "no_units.ini";
  spit(no_units, "[paths]\nunits = " + (fx.dir / "absent.csv").string() + "\nraster = " +
                     (fx.dir / "raster.json").string() + "\n[grid]\nscales = 4\n[analysis]\nscaling_max_c = 1\n");
  EXPECT_EQ(invoke({"gridsearch", "--config", no_units.string(), "--out", out.string()}), 2);
}

TEST(Cli, RefusesToOverwriteInputs) {
  const Fixture fx("guard");
  // The config itself is named like an output of the command.
  const fs::path out = fx.dir / "out";
  fs::create_directories(out);
  fs::copy_file(fx.config, out / "heatmap.csv");
  const std::string before = slurp(out / "heatmap.csv");
  EXPECT_EQ(invoke({"gridsearch", "--config", (out / "heatmap.csv").string(), "--out", out.string()}), 1);
  EXPECT_EQ(slurp(out / "heatmap.csv"), before);
}

TEST(Cli, NoPerturbationDesignYieldsUndefinedRows) {
  const fs::path dir = scratch_dir("cli_simulate");
  const fs::path cfg = dir / "sim.ini";
  spit(cfg,
       "[simulation]\ndesigns = none\nn_units = 60\nreplicates = 2\nencoder_dim = 4\n"
       "[mlp]\nepochs = 3\n");
  ASSERT_EQ(invoke({"simulate", "--config", cfg.string(), "--out", (dir / "out").string()}), 0);
  std::istringstream in(slurp(dir / "out" / "simulation.csv"));
  std::string line;
  std::getline(in, line);
  int rows = 0;
  while (std::getline(in, line)) {
    ++rows;
    EXPECT_EQ(line.substr(0, 5), "none,") << line;
    EXPECT_NE(line.find(",NA,NA,"), std::string::npos) << line;
    EXPECT_EQ(line.back(), '1') << line;
  }
  EXPECT_EQ(rows, 3);
}

}  // namespace
}  // namespace mscate::cli
