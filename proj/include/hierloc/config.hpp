#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <variant>
#include <vector>

#include "hierloc/descriptors.hpp"
#include "hierloc/errors.hpp"
#include "hierloc/msgv.hpp"
#include "hierloc/registration.hpp"
#include "hierloc/synth.hpp"

namespace hierloc {

/// Minimal TOML subset: [section] headers, key = value with booleans,
/// integers, floats, strings and flat arrays, and # comments. Enough for
/// the pipeline configuration files; nothing else is accepted.
struct TomlValue {
  std::variant<bool, std::int64_t, double, std::string, std::vector<TomlValue>> data;

  bool is_array() const { return std::holds_alternative<std::vector<TomlValue>>(data); }
  double as_double() const;
  std::int64_t as_int() const;
  bool as_bool() const;
  const std::string& as_string() const;
  const std::vector<TomlValue>& as_array() const;
};

class TomlTable {
 public:
  using Section = std::map<std::string, TomlValue>;

  bool has(const std::string& section, const std::string& key) const;
  const TomlValue& get(const std::string& section, const std::string& key) const;

  double get_double(const std::string& section, const std::string& key, double fallback) const;
  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;
  std::string get_string(const std::string& section, const std::string& key,
                         const std::string& fallback) const;
  std::vector<double> get_double_array(const std::string& section, const std::string& key,
                                       std::vector<double> fallback) const;
  std::vector<std::int64_t> get_int_array(const std::string& section, const std::string& key,
                                          std::vector<std::int64_t> fallback) const;

  std::map<std::string, Section> sections;
};

TomlTable parse_toml(const std::string& text);
TomlTable parse_toml_file(const std::filesystem::path& path);

struct OctreeConfig {
  int depth_finest = 6;
  int num_levels = 3;
};

struct BenchConfig {
  std::uint64_t seed = 1;
  int num_pairs = 50;
  int top_k = 20;               // candidates re-ranked per query
  double retrieval_radius = 3.0;  // metres
  double grid_spacing = 100.0;    // metres between synthetic places
  std::vector<double> noise_levels = {0.0, 0.05, 0.1};
  double occlusion_arc_deg = 45.0;
  double translation_range = 5.0;  // metres, per horizontal axis
  double voxel = 0.0;              // pre-downsample; 0 disables
  SceneConfig scene;               // template; seed is overridden per pair
};

/// Everything the pipeline needs, with the defaults used throughout.
struct PipelineConfig {
  OctreeConfig octree;
  DescriptorConfig descriptors;
  MsgvConfig msgv;
  RegConfig reg;
  BenchConfig bench;
};

/// Reads [octree], [descriptors], [msgv], [reg] and [bench] sections;
/// absent keys keep their defaults. Unknown keys are rejected so typos
/// fail loudly.
PipelineConfig load_pipeline_config(const std::filesystem::path& path);
PipelineConfig pipeline_config_from_table(const TomlTable& table);

}  // namespace hierloc
