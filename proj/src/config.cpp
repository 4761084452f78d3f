#include "hierloc/config.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <set>
#include <sstream>

namespace hierloc {

double TomlValue::as_double() const {
  if (std::holds_alternative<double>(data)) return std::get<double>(data);
  if (std::holds_alternative<std::int64_t>(data))
    return static_cast<double>(std::get<std::int64_t>(data));
  throw InvalidArgument("config value is not a number");
}

std::int64_t TomlValue::as_int() const {
  if (std::holds_alternative<std::int64_t>(data)) return std::get<std::int64_t>(data);
  throw InvalidArgument("config value is not an integer");
}

bool TomlValue::as_bool() const {
  if (std::holds_alternative<bool>(data)) return std::get<bool>(data);
  throw InvalidArgument("config value is not a boolean");
}

const std::string& TomlValue::as_string() const {
  if (std::holds_alternative<std::string>(data)) return std::get<std::string>(data);
  throw InvalidArgument("config value is not a string");
}

const std::vector<TomlValue>& TomlValue::as_array() const {
  if (is_array()) return std::get<std::vector<TomlValue>>(data);
  throw InvalidArgument("config value is not an array");
}

bool TomlTable::has(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  return s != sections.end() && s->second.count(key) > 0;
}

const TomlValue& TomlTable::get(const std::string& section, const std::string& key) const {
  const auto s = sections.find(section);
  if (s == sections.end()) throw InvalidArgument("missing config section [" + section + "]");
  const auto k = s->second.find(key);
  if (k == s->second.end())
    throw InvalidArgument("missing config key " + section + "." + key);
  return k->second;
}

double TomlTable::get_double(const std::string& section, const std::string& key,
                             double fallback) const {
  return has(section, key) ? get(section, key).as_double() : fallback;
}

std::int64_t TomlTable::get_int(const std::string& section, const std::string& key,
                                std::int64_t fallback) const {
  return has(section, key) ? get(section, key).as_int() : fallback;
}

bool TomlTable::get_bool(const std::string& section, const std::string& key, bool fallback) const {
  return has(section, key) ? get(section, key).as_bool() : fallback;
}

std::string TomlTable::get_string(const std::string& section, const std::string& key,
                                  const std::string& fallback) const {
  return has(section, key) ? get(section, key).as_string() : fallback;
}

std::vector<double> TomlTable::get_double_array(const std::string& section, const std::string& key,
                                                std::vector<double> fallback) const {
  if (!has(section, key)) return fallback;
  std::vector<double> out;
  for (const auto& v : get(section, key).as_array()) out.push_back(v.as_double());
  return out;
}

std::vector<std::int64_t> TomlTable::get_int_array(const std::string& section,
                                                   const std::string& key,
                                                   std::vector<std::int64_t> fallback) const {
  if (!has(section, key)) return fallback;
  std::vector<std::int64_t> out;
  for (const auto& v : get(section, key).as_array()) out.push_back(v.as_int());
  return out;
}

namespace {

std::string strip(const std::string& s) {
  const auto b = s.find_first_not_of(" \t");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t");
  return s.substr(b, e - b + 1);
}

TomlValue parse_scalar(const std::string& raw, std::size_t line_no) {
  const std::string s = strip(raw);
  if (s.empty()) throw ParseError("empty config value", line_no);
  if (s == "true") return {true};
  if (s == "false") return {false};
  if (s.front() == '"') {
    if (s.size() < 2 || s.back() != '"')
      throw ParseError("unterminated string in config", line_no);
    return {s.substr(1, s.size() - 2)};
  }
  // Number: integer when it round-trips without '.', 'e' or 'E'.
  const bool floaty = s.find_first_of(".eE") != std::string::npos &&
                      s.find_first_not_of("+-0123456789.eE") == std::string::npos;
  try {
    std::size_t used = 0;
    if (!floaty) {
      const std::int64_t i = std::stoll(s, &used);
      if (used == s.size()) return {i};
    }
    used = 0;
    const double d = std::stod(s, &used);
    if (used == s.size()) return {d};
  } catch (const std::exception&) {
    // fall through
  }
  throw ParseError("cannot parse config value '" + s + "'", line_no);
}

TomlValue parse_value(const std::string& raw, std::size_t line_no) {
  const std::string s = strip(raw);
  if (!s.empty() && s.front() == '[') {
    if (s.back() != ']') throw ParseError("unterminated array in config", line_no);
    std::vector<TomlValue> items;
    std::string inner = s.substr(1, s.size() - 2);
    std::stringstream ss(inner);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const std::string t = strip(item);
      if (t.empty()) continue;
      items.push_back(parse_scalar(t, line_no));
    }
    return {items};
  }
  return parse_scalar(s, line_no);
}

}  // namespace

TomlTable parse_toml(const std::string& text) {
  TomlTable table;
  std::string section;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;

  while (std::getline(in, line)) {
    ++line_no;
    // Strip comments outside of strings.
    bool in_string = false;
    for (std::size_t i = 0; i < line.size(); ++i) {
      if (line[i] == '"') in_string = !in_string;
      if (line[i] == '#' && !in_string) {
        line = line.substr(0, i);
        break;
      }
    }
    line = strip(line);
    if (line.empty()) continue;

    if (line.front() == '[') {
      if (line.back() != ']') throw ParseError("malformed section header", line_no);
      section = strip(line.substr(1, line.size() - 2));
      if (section.empty()) throw ParseError("empty section name", line_no);
      table.sections[section];  // materialise even if empty
      continue;
    }

    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected key = value", line_no);
    const std::string key = strip(line.substr(0, eq));
    if (key.empty()) throw ParseError("empty key", line_no);
    table.sections[section][key] = parse_value(line.substr(eq + 1), line_no);
  }
  return table;
}

TomlTable parse_toml_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("io-error: cannot open " + path.string());
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return parse_toml(buf.str());
  } catch (const ParseError& e) {
    throw ParseError("in " + path.string() + ": " + e.what());
  }
}

namespace {

void reject_unknown_keys(const TomlTable& table, const std::string& section,
                         const std::set<std::string>& known) {
  const auto it = table.sections.find(section);
  if (it == table.sections.end()) return;
  for (const auto& [key, value] : it->second)
    if (!known.count(key))
      throw InvalidArgument("unknown config key " + section + "." + key);
}

std::vector<int> to_int_vec(const std::vector<std::int64_t>& v) {
  std::vector<int> out;
  out.reserve(v.size());
  for (const auto x : v) out.push_back(static_cast<int>(x));
  return out;
}

std::vector<std::int64_t> to_i64_vec(const std::vector<int>& v) {
  return {v.begin(), v.end()};
}

}  // namespace

PipelineConfig pipeline_config_from_table(const TomlTable& table) {
  PipelineConfig cfg;

  for (const auto& [name, section] : table.sections) {
    static const std::set<std::string> known_sections = {"octree", "descriptors", "msgv", "reg",
                                                         "bench"};
    if (!known_sections.count(name))
      throw InvalidArgument("unknown config section [" + name + "]");
  }

  reject_unknown_keys(table, "octree", {"depth_finest", "num_levels"});
  cfg.octree.depth_finest =
      static_cast<int>(table.get_int("octree", "depth_finest", cfg.octree.depth_finest));
  cfg.octree.num_levels =
      static_cast<int>(table.get_int("octree", "num_levels", cfg.octree.num_levels));

  reject_unknown_keys(table, "descriptors", {"dims", "radius_multipliers", "pooling_exponent"});
  cfg.descriptors.dims =
      to_int_vec(table.get_int_array("descriptors", "dims", to_i64_vec(cfg.descriptors.dims)));
  cfg.descriptors.radius_multipliers = table.get_double_array(
      "descriptors", "radius_multipliers", cfg.descriptors.radius_multipliers);
  cfg.descriptors.pooling_exponent =
      table.get_double("descriptors", "pooling_exponent", cfg.descriptors.pooling_exponent);

  reject_unknown_keys(table, "msgv",
                      {"lambda", "sigma_d", "weights", "head_fraction", "power_tol",
                       "power_max_iter"});
  cfg.msgv.lambda = to_int_vec(table.get_int_array("msgv", "lambda", to_i64_vec(cfg.msgv.lambda)));
  cfg.msgv.sigma_d = table.get_double("msgv", "sigma_d", cfg.msgv.sigma_d);
  cfg.msgv.weights = table.get_double_array("msgv", "weights", cfg.msgv.weights);
  cfg.msgv.head_fraction = table.get_double("msgv", "head_fraction", cfg.msgv.head_fraction);
  cfg.msgv.power_tol = table.get_double("msgv", "power_tol", cfg.msgv.power_tol);
  cfg.msgv.power_max_iter =
      static_cast<int>(table.get_int("msgv", "power_max_iter", cfg.msgv.power_max_iter));

  reject_unknown_keys(
      table, "reg", {"n_c", "gamma_z", "k_mutual", "alpha", "sinkhorn_iters", "tau_a", "n_r"});
  cfg.reg.n_c = static_cast<int>(table.get_int("reg", "n_c", cfg.reg.n_c));
  cfg.reg.gamma_z = table.get_double("reg", "gamma_z", cfg.reg.gamma_z);
  cfg.reg.k_mutual = static_cast<int>(table.get_int("reg", "k_mutual", cfg.reg.k_mutual));
  cfg.reg.alpha = table.get_double("reg", "alpha", cfg.reg.alpha);
  cfg.reg.sinkhorn_iters =
      static_cast<int>(table.get_int("reg", "sinkhorn_iters", cfg.reg.sinkhorn_iters));
  cfg.reg.tau_a = table.get_double("reg", "tau_a", cfg.reg.tau_a);
  cfg.reg.n_r = static_cast<int>(table.get_int("reg", "n_r", cfg.reg.n_r));

  reject_unknown_keys(table, "bench",
                      {"seed", "num_pairs", "top_k", "retrieval_radius", "grid_spacing",
                       "noise_levels", "occlusion_arc_deg", "translation_range", "voxel",
                       "extent", "tree_count", "canopy_density", "trunk_density",
                       "ground_density", "ground_roughness", "clutter_fraction"});
  cfg.bench.seed = static_cast<std::uint64_t>(
      table.get_int("bench", "seed", static_cast<std::int64_t>(cfg.bench.seed)));
  cfg.bench.num_pairs = static_cast<int>(table.get_int("bench", "num_pairs", cfg.bench.num_pairs));
  cfg.bench.top_k = static_cast<int>(table.get_int("bench", "top_k", cfg.bench.top_k));
  cfg.bench.retrieval_radius =
      table.get_double("bench", "retrieval_radius", cfg.bench.retrieval_radius);
  cfg.bench.grid_spacing = table.get_double("bench", "grid_spacing", cfg.bench.grid_spacing);
  cfg.bench.noise_levels =
      table.get_double_array("bench", "noise_levels", cfg.bench.noise_levels);
  cfg.bench.occlusion_arc_deg =
      table.get_double("bench", "occlusion_arc_deg", cfg.bench.occlusion_arc_deg);
  cfg.bench.translation_range =
      table.get_double("bench", "translation_range", cfg.bench.translation_range);
  cfg.bench.voxel = table.get_double("bench", "voxel", cfg.bench.voxel);
  cfg.bench.scene.extent = table.get_double("bench", "extent", cfg.bench.scene.extent);
  cfg.bench.scene.tree_count =
      static_cast<int>(table.get_int("bench", "tree_count", cfg.bench.scene.tree_count));
  cfg.bench.scene.canopy_density =
      table.get_double("bench", "canopy_density", cfg.bench.scene.canopy_density);
  cfg.bench.scene.trunk_density =
      table.get_double("bench", "trunk_density", cfg.bench.scene.trunk_density);
  cfg.bench.scene.ground_density =
      table.get_double("bench", "ground_density", cfg.bench.scene.ground_density);
  cfg.bench.scene.ground_roughness =
      table.get_double("bench", "ground_roughness", cfg.bench.scene.ground_roughness);
  cfg.bench.scene.clutter_fraction =
      table.get_double("bench", "clutter_fraction", cfg.bench.scene.clutter_fraction);

  return cfg;
}

PipelineConfig load_pipeline_config(const std::filesystem::path& path) {
  return pipeline_config_from_table(parse_toml_file(path));
}

}  // namespace hierloc
