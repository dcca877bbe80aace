#include "config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>

#include "mscate/error.hpp"
#include "mscate/rng.hpp"

namespace mscate::cli {
namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string& s, char delim) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, delim)) out.push_back(trim(item));
  return out;
}

[[noreturn]] void bad_value(const std::string& key, const std::string& expected, const std::string& value) {
  fail(ErrorCode::Config, key + ": expected " + expected + ", got '" + value + "'");
}

template <class T>
T parse_integer(const std::string& key, const std::string& raw) {
  const std::string v = trim(raw);
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (v.empty() || ec != std::errc{} || ptr != v.data() + v.size())
    bad_value(key, std::is_signed_v<T> ? "an integer" : "a non-negative integer", raw);
  return out;
}

double parse_real(const std::string& key, const std::string& raw) {
  bool ok = false;
  const double v = parse_double(trim(raw), &ok);
  if (!ok) bad_value(key, "a number", raw);
  return v;
}

bool parse_bool(const std::string& key, const std::string& raw) {
  std::string v = trim(raw);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  bad_value(key, "a boolean", raw);
}

std::vector<int> parse_int_list(const std::string& key, const std::string& raw) {
  std::vector<int> out;
  if (trim(raw).empty()) return out;
  for (const auto& item : split(raw, ',')) out.push_back(parse_integer<int>(key, item));
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) out += (i ? "," : "") + std::to_string(v[i]);
  return out;
}

std::string lower(std::string v) {
  v = trim(v);
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return v;
}

// Field builders. Accessors are generic lambdas returning a member reference.
template <class Acc>
Field int_field(std::string key, Acc acc) {
  return {key, FieldKind::Int, {}, [acc](const RunConfig& c) { return std::to_string(acc(c)); },
          [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_integer<int>(key, v); }};
}

template <class Acc>
Field uint_field(std::string key, Acc acc) {
  return {key, FieldKind::Uint, {}, [acc](const RunConfig& c) { return std::to_string(acc(c)); },
          [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_integer<std::uint64_t>(key, v); }};
}

template <class Acc>
Field real_field(std::string key, Acc acc) {
  return {key, FieldKind::Double, {}, [acc](const RunConfig& c) { return format_double(acc(c)); },
          [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_real(key, v); }};
}

template <class Acc>
Field bool_field(std::string key, Acc acc) {
  return {key, FieldKind::Bool, {}, [acc](const RunConfig& c) { return std::string(acc(c) ? "true" : "false"); },
          [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_bool(key, v); }};
}

template <class Acc>
Field text_field(std::string key, Acc acc) {
  return {key, FieldKind::Text, {}, [acc](const RunConfig& c) { return acc(c); },
          [acc](RunConfig& c, const std::string& v) { acc(c) = trim(v); }};
}

template <class Acc>
Field list_field(std::string key, Acc acc) {
  return {key, FieldKind::IntList, {}, [acc](const RunConfig& c) { return join_ints(acc(c)); },
          [acc, key](RunConfig& c, const std::string& v) { acc(c) = parse_int_list(key, v); }};
}

template <class Acc>
Field choice_field(std::string key, std::vector<std::string> choices, Acc acc) {
  return {key, FieldKind::Choice, choices, [acc](const RunConfig& c) { return acc(c); },
          [acc, key, choices](RunConfig& c, const std::string& v) {
            const std::string l = lower(v);
            if (std::find(choices.begin(), choices.end(), l) == choices.end()) {
              std::string opts;
              for (const auto& o : choices) opts += (opts.empty() ? "" : "|") + o;
              bad_value(key, opts, v);
            }
            acc(c) = l;
          }};
}

std::vector<PerturbationFlags> all_designs() {
  std::vector<PerturbationFlags> out;
  for (PerturbationFlags f = 1; f <= kAllPerturbations; ++f) out.push_back(f);
  return out;
}

std::vector<Field> build_fields() {
  std::vector<Field> f;
  f.push_back(uint_field("run.seed", [](auto& c) -> auto& { return c.seed; }));

  f.push_back(text_field("paths.raster", [](auto& c) -> auto& { return c.raster; }));
  f.push_back(text_field("paths.units", [](auto& c) -> auto& { return c.units; }));
  f.push_back(text_field("paths.embeddings_dir", [](auto& c) -> auto& { return c.embeddings_dir; }));

  f.push_back(choice_field("encoder.kind", {"pyramid", "external"}, [](auto& c) -> auto& { return c.encoder_kind; }));
  f.push_back(int_field("encoder.dim", [](auto& c) -> auto& { return c.encoder_dim; }));
  f.push_back(uint_field("encoder.seed", [](auto& c) -> auto& { return c.encoder_seed; }));

  f.push_back(list_field("grid.scales", [](auto& c) -> auto& { return c.scales; }));
  f.push_back(choice_field("grid.reduction", {"none", "pca"}, [](auto& c) -> auto& { return c.reduction; }));
  f.push_back(int_field("grid.pca_components", [](auto& c) -> auto& { return c.pca_components; }));
  f.push_back(bool_field("grid.displaced", [](auto& c) -> auto& { return c.displaced; }));
  f.push_back(choice_field("grid.fetch_mode", {"strict", "clamp"}, [](auto& c) -> auto& { return c.fetch_mode; }));
  f.push_back(int_field("grid.replicates", [](auto& c) -> auto& { return c.replicates; }));

  f.push_back(int_field("forest.num_trees", [](auto& c) -> auto& { return c.forest.num_trees; }));
  f.push_back(int_field("forest.min_node_size", [](auto& c) -> auto& { return c.forest.min_node_size; }));
  f.push_back(real_field("forest.honesty_fraction", [](auto& c) -> auto& { return c.forest.honesty_fraction; }));
  f.push_back(real_field("forest.subsample_fraction", [](auto& c) -> auto& { return c.forest.subsample_fraction; }));
  f.push_back(int_field("forest.mtry", [](auto& c) -> auto& { return c.forest.mtry; }));
  f.push_back(int_field("forest.nuisance_trees", [](auto& c) -> auto& { return c.forest.nuisance_trees; }));
  f.push_back(bool_field("forest.propensity_forest", [](auto& c) -> auto& { return c.forest.propensity_forest; }));

  f.push_back({"metric.weighting", FieldKind::Choice, {"autoc", "qini"},
               [](const RunConfig& c) { return lower(to_string(c.metric.weighting)); },
               [](RunConfig& c, const std::string& v) {
                 const std::string l = lower(v);
                 if (l != "autoc" && l != "qini") bad_value("metric.weighting", "autoc|qini", v);
                 c.metric.weighting = parse_weighting(l);
               }});
  f.push_back(int_field("metric.n_boot", [](auto& c) -> auto& { return c.metric.n_boot; }));
  f.push_back(bool_field("metric.swap_halves", [](auto& c) -> auto& { return c.metric.swap_halves; }));

  f.push_back(int_field("analysis.scaling_max_c", [](auto& c) -> auto& { return c.scaling_max_c; }));
  f.push_back(int_field("analysis.subset_budget", [](auto& c) -> auto& { return c.subset_budget; }));

  f.push_back(list_field("qini.scales", [](auto& c) -> auto& { return c.qini_scales; }));
  f.push_back(int_field("qini.n_boot", [](auto& c) -> auto& { return c.qini_n_boot; }));

  f.push_back({"simulation.designs", FieldKind::Text, {},
               [](const RunConfig& c) {
                 std::string out;
                 for (std::size_t i = 0; i < c.designs.size(); ++i)
                   out += (i ? ";" : "") + flags_to_string(c.designs[i]);
                 return out;
               },
               [](RunConfig& c, const std::string& v) {
                 c.designs.clear();
                 if (lower(v) == "all") {
                   c.designs = all_designs();
                   return;
                 }
                 for (const auto& item : split(v, ';')) {
                   try {
                     c.designs.push_back(parse_flags(item));
                   } catch (const Error& e) {
                     fail(ErrorCode::Config, std::string("simulation.designs: ") + e.what());
                   }
                 }
               }});
  f.push_back({"simulation.modes", FieldKind::Text, {},
               [](const RunConfig& c) {
                 std::string out;
                 for (std::size_t i = 0; i < c.modes.size(); ++i) out += (i ? "," : "") + to_string(c.modes[i]);
                 return out;
               },
               [](RunConfig& c, const std::string& v) {
                 c.modes.clear();
                 for (const auto& item : split(v, ',')) {
                   const std::string l = lower(item);
                   bool found = false;
                   for (SimMode m : {SimMode::SingleSmall, SimMode::SingleLarge, SimMode::MultiScaleConcat}) {
                     if (to_string(m) == l) {
                       c.modes.push_back(m);
                       found = true;
                     }
                   }
                   if (!found) bad_value("simulation.modes", "single_small|single_large|multi_concat", item);
                 }
               }});
  f.push_back(int_field("simulation.n_units", [](auto& c) -> auto& { return c.sim.n_units; }));
  f.push_back(int_field("simulation.replicates", [](auto& c) -> auto& { return c.sim.replicates; }));
  f.push_back(int_field("simulation.encoder_dim", [](auto& c) -> auto& { return c.sim.encoder_dim; }));
  f.push_back(uint_field("simulation.encoder_seed", [](auto& c) -> auto& { return c.sim.encoder_seed; }));
  f.push_back(int_field("simulation.small_scale", [](auto& c) -> auto& { return c.sim.design.small_scale; }));
  f.push_back(int_field("simulation.large_scale", [](auto& c) -> auto& { return c.sim.design.large_scale; }));
  f.push_back(bool_field("simulation.weak_prior", [](auto& c) -> auto& { return c.sim.design.weak_prior; }));
  f.push_back(bool_field("simulation.contrast_nuisance", [](auto& c) -> auto& { return c.sim.design.contrast_nuisance; }));
  f.push_back(real_field("simulation.assignment_prob", [](auto& c) -> auto& { return c.sim.design.assignment_prob; }));
  f.push_back(int_field("simulation.mask_size", [](auto& c) -> auto& { return c.sim.design.mask_size; }));
  f.push_back(real_field("simulation.contrast_c", [](auto& c) -> auto& { return c.sim.design.contrast_c; }));

  f.push_back(int_field("scene.width", [](auto& c) -> auto& { return c.scene.width; }));
  f.push_back(int_field("scene.height", [](auto& c) -> auto& { return c.scene.height; }));
  f.push_back(int_field("scene.bands", [](auto& c) -> auto& { return c.scene.bands; }));
  f.push_back(real_field("scene.level", [](auto& c) -> auto& { return c.scene.level; }));
  f.push_back(real_field("scene.texture_min", [](auto& c) -> auto& { return c.scene.texture_min; }));
  f.push_back(real_field("scene.texture_max", [](auto& c) -> auto& { return c.scene.texture_max; }));
  f.push_back(real_field("scene.gradient", [](auto& c) -> auto& { return c.scene.gradient; }));
  f.push_back(uint_field("scene.seed", [](auto& c) -> auto& { return c.scene.seed; }));

  f.push_back(int_field("mlp.hidden1", [](auto& c) -> auto& { return c.sim.mlp.hidden1; }));
  f.push_back(int_field("mlp.hidden2", [](auto& c) -> auto& { return c.sim.mlp.hidden2; }));
  f.push_back(int_field("mlp.epochs", [](auto& c) -> auto& { return c.sim.mlp.epochs; }));
  f.push_back(int_field("mlp.batch_size", [](auto& c) -> auto& { return c.sim.mlp.batch_size; }));
  f.push_back(real_field("mlp.learning_rate", [](auto& c) -> auto& { return c.sim.mlp.learning_rate; }));
  f.push_back(real_field("mlp.validation_fraction", [](auto& c) -> auto& { return c.sim.mlp.validation_fraction; }));
  f.push_back(int_field("mlp.patience", [](auto& c) -> auto& { return c.sim.mlp.patience; }));
  return f;
}

void check(const std::string& section, const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    if (e.code() == ErrorCode::Config) throw;
    fail(ErrorCode::Config, "[" + section + "] " + e.what());
  }
}

}  // namespace

const std::vector<Field>& fields() {
  static const std::vector<Field> all = build_fields();
  return all;
}

RunConfig parse_config(const std::string& text) {
  namespace pt = boost::property_tree;
  pt::ptree tree;
  try {
    std::istringstream in(text);
    pt::read_ini(in, tree);
  } catch (const pt::ini_parser_error& e) {
    fail(ErrorCode::Config, std::string("config syntax: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
  }
  std::map<std::string, const Field*> by_key;
  std::set<std::string> sections;
  for (const auto& f : fields()) {
    by_key.emplace(f.key, &f);
    sections.insert(f.key.substr(0, f.key.find('.')));
  }
  RunConfig config;
  for (const auto& [section, body] : tree) {
    require(!body.empty() || body.data().empty(), ErrorCode::Config, "key '" + section + "' outside any section");
    require(sections.count(section) > 0, ErrorCode::Config, "unknown config section [" + section + "]");
    for (const auto& [key, value] : body) {
      const std::string path = section + "." + key;
      const auto it = by_key.find(path);
      require(it != by_key.end(), ErrorCode::Config, "unknown config field " + path);
      it->second->set(config, value.data());
    }
  }
  return config;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(in.good(), ErrorCode::Io, "cannot read config " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

void validate(const RunConfig& c) {
  check("grid", [&] {
    require(!c.scales.empty(), ErrorCode::InvalidArgument, "scales must not be empty");
    for (std::size_t i = 0; i < c.scales.size(); ++i) {
      require(c.scales[i] >= 1, ErrorCode::InvalidArgument, "scales must be positive");
      require(i == 0 || c.scales[i] > c.scales[i - 1], ErrorCode::InvalidArgument, "scales must be strictly increasing");
    }
    require(c.replicates >= 1, ErrorCode::InvalidArgument, "replicates must be >= 1");
    require(c.pca_components >= 1, ErrorCode::InvalidArgument, "pca_components must be >= 1");
  });
  check("encoder", [&] {
    require(c.encoder_dim >= 1, ErrorCode::InvalidArgument, "dim must be positive");
    require(c.encoder_kind != "external" || !c.embeddings_dir.empty(), ErrorCode::InvalidArgument,
            "kind=external needs paths.embeddings_dir");
  });
  check("forest", [&] { c.forest.validate(); });
  check("metric", [&] { c.metric.validate(); });
  check("analysis", [&] {
    require(c.scaling_max_c >= 1 && c.scaling_max_c <= static_cast<int>(c.scales.size()), ErrorCode::InvalidArgument,
            "scaling_max_c must be in [1, number of grid scales]");
    require(c.subset_budget >= 1, ErrorCode::InvalidArgument, "subset_budget must be >= 1");
  });
  check("qini", [&] {
    require(c.qini_n_boot >= 2, ErrorCode::InvalidArgument, "n_boot must be >= 2");
    for (std::size_t i = 1; i < c.qini_scales.size(); ++i)
      require(c.qini_scales[i] > c.qini_scales[i - 1], ErrorCode::InvalidArgument, "scales must be strictly increasing");
  });
  check("simulation", [&] {
    require(!c.modes.empty(), ErrorCode::InvalidArgument, "modes must not be empty");
    c.sim.validate();
  });
  check("scene", [&] { c.scene.validate(); });
}

std::string canonical_text(const RunConfig& config) {
  std::string out;
  for (const auto& f : fields()) out += f.key + "=" + f.get(config) + "\n";
  return out;
}

std::uint64_t fnv1a(std::string_view bytes, std::uint64_t h) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t config_hash(const RunConfig& config) { return fnv1a(canonical_text(config)); }

DerivedSeeds derive_seeds(const RunConfig& c) {
  DerivedSeeds s;
  s.forest = derive_seed(c.seed, 1);
  s.simulation = derive_seed(c.seed, 2);
  s.mlp = derive_seed(c.seed, 3);
  s.subsets = derive_seed(c.seed, 4);
  s.displacement = derive_seed(c.seed, 5);
  s.qini = derive_seed(c.seed, 6);
  for (int r = 0; r < c.replicates; ++r) s.replicates.push_back(derive_seed(c.seed, 7, static_cast<std::uint64_t>(r)));
  return s;
}

AnalysisConfig analysis_config(const RunConfig& c) {
  const DerivedSeeds seeds = derive_seeds(c);
  AnalysisConfig a;
  a.grid.scales = c.scales;
  a.grid.reduction = c.reduction == "pca" ? Reduction::pca(static_cast<std::size_t>(c.pca_components)) : Reduction::none();
  a.grid.displaced = c.displaced;
  a.grid.seeds = seeds.replicates;
  a.grid.mode = c.fetch_mode == "clamp" ? FetchMode::Clamp : FetchMode::Strict;
  a.encoders.kind = c.encoder_kind == "external" ? EncoderKind::External : EncoderKind::BuiltinPyramid;
  a.encoders.dim = c.encoder_dim;
  a.encoders.seed = c.encoder_seed;
  a.pipeline.forest = c.forest;
  a.pipeline.forest.seed = seeds.forest;
  a.pipeline.metric = c.metric;
  a.scaling_max_c = c.scaling_max_c;
  a.subset_budget = c.subset_budget;
  a.subset_seed = seeds.subsets;
  a.displacement_seed = seeds.displacement;
  return a;
}

SimSetup sim_setup(const RunConfig& c, PerturbationFlags design) {
  const DerivedSeeds seeds = derive_seeds(c);
  SimSetup s = c.sim;
  s.design.perturbations = design;
  s.design.seed = derive_seed(seeds.simulation, design);
  s.mlp.seed = seeds.mlp;
  return s;
}

}  // namespace mscate::cli
