#pragma once

#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "hierloc/config.hpp"
#include "hierloc/retrieval.hpp"
#include "hierloc/timing.hpp"

namespace hierloc {

struct BenchDbItem {
  std::string id;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  PointCloud cloud;
};

struct BenchQueryItem {
  std::string id;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();
  RigidTransform gt_pose;  // registers the query cloud onto its true match
  PointCloud cloud;
};

struct BenchDataset {
  std::vector<BenchDbItem> db;
  std::vector<BenchQueryItem> queries;
};

/// One scene per pair on a sparse grid of places; queries are degraded
/// re-observations moved by a random z-rotation and translation.
BenchDataset make_synthetic_dataset(const BenchConfig& cfg);

/// Directory layout:
///   <dir>/db/*.ply|*.xyz plus db/positions.json  {"id": [x,y,z], ...}
///   <dir>/queries/*.ply|*.xyz plus queries/ground_truth.json
///       {"id": {"position": [x,y,z], "pose": [[4x4 row-major]]}, ...}
/// Database clouds are expected in the map frame; the pose registers the
/// query cloud into the map frame.
BenchDataset load_dataset_dir(const std::filesystem::path& dir);

struct QueryRecord {
  std::string query_id;
  std::vector<std::string> candidates_before;  // retrieval order, top-k ids
  std::vector<std::string> candidates_after;   // after re-ranking
  double top_similarity = 0.0;
  double top_beta = 0.0;
  bool hit1_before = false, hit5_before = false;
  bool hit1_after = false, hit5_after = false;
  bool pr_fail_before = true, pr_fail_after = true;
  double rte_before = 0.0, rre_before = 0.0;
  double rte_after = 0.0, rre_after = 0.0;
  bool reg_before_valid = false, reg_after_valid = false;
  bool success_before = false, success_after = false;
  std::string error;  // non-empty when the pipeline failed for this query
};

struct BenchmarkReport {
  // Place recognition, percent.
  double recall1_before = 0.0, recall5_before = 0.0;
  double recall1_after = 0.0, recall5_after = 0.0;
  // Localisation, averaged over all pairs excluding PR failures.
  double mean_rte_before = 0.0, mean_rre_before = 0.0;
  double mean_rte_after = 0.0, mean_rre_after = 0.0;
  int loc_pairs_before = 0, loc_pairs_after = 0;
  double success_rate_before = 0.0, success_rate_after = 0.0;

  std::vector<QueryRecord> per_query;

  StageStats t_db_build, t_extract, t_retrieve, t_rerank, t_register, t_total;
  std::vector<double> db_mean_octants;     // per level
  std::vector<double> query_mean_octants;  // per level

  nlohmann::json config_echo;
};

/// Full pipeline per query: extract, retrieve top-k, MSGV re-rank,
/// register against the rank-1 candidate, score against ground truth.
/// Per-query pipeline errors are recorded, never fatal. Deterministic for
/// a fixed dataset and config apart from the timing fields.
BenchmarkReport run_benchmark(const BenchDataset& dataset, const PipelineConfig& cfg);

/// include_timings=false yields the determinism-comparable document.
nlohmann::json report_to_json(const BenchmarkReport& report, bool include_timings = true);
std::string report_to_csv(const BenchmarkReport& report);
/// Gnuplot-friendly recall@k curves, k = 1..top_k.
std::string report_to_recall_tsv(const BenchmarkReport& report, const BenchDataset& dataset,
                                 double retrieval_radius);

nlohmann::json config_to_json(const PipelineConfig& cfg);

}  // namespace hierloc
