#include "hierloc/benchmark.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unordered_map>

#include "hierloc/msgv.hpp"
#include "hierloc/parallel.hpp"
#include "hierloc/registration.hpp"
#include "hierloc/rng.hpp"
#include "hierloc/synth.hpp"

namespace hierloc {

using json = nlohmann::json;

BenchDataset make_synthetic_dataset(const BenchConfig& cfg) {
  if (cfg.num_pairs < 1) throw InvalidArgument("invalid-config: num_pairs must be >= 1");
  if (cfg.noise_levels.empty()) throw InvalidArgument("invalid-config: noise_levels empty");

  BenchDataset ds;
  ds.db.resize(static_cast<std::size_t>(cfg.num_pairs));
  ds.queries.resize(static_cast<std::size_t>(cfg.num_pairs));

  const int grid_cols = static_cast<int>(std::ceil(std::sqrt(static_cast<double>(cfg.num_pairs))));

  parallel_for(static_cast<std::size_t>(cfg.num_pairs), [&](std::size_t i) {
    SceneConfig scene = cfg.scene;
    scene.seed = cfg.seed * 1000003ull + i;
    // Natural stand-density variation between places; without it every
    // scene shares identical statistics and retrieval is pure aliasing.
    Rng scene_rng = Rng(scene.seed).fork(0x5ca1e);
    scene.tree_count =
        std::max(4, static_cast<int>(std::lround(scene.tree_count * scene_rng.uniform(0.6, 1.4))));
    scene.canopy_density *= scene_rng.uniform(0.7, 1.3);
    scene.ground_roughness *= scene_rng.uniform(0.5, 1.5);

    Rng rng = Rng(scene.seed).fork(0x7Ab1e);
    RigidTransform t;
    t.rotation = rotation_about_z(rng.uniform(-M_PI, M_PI));
    t.translation =
        Eigen::Vector3d(rng.uniform(-cfg.translation_range, cfg.translation_range),
                        rng.uniform(-cfg.translation_range, cfg.translation_range),
                        rng.uniform(-0.5, 0.5));

    const double noise = cfg.noise_levels[i % cfg.noise_levels.size()];
    const ScenePair pair = make_pair(scene, t, noise, cfg.occlusion_arc_deg);

    char id[32];
    std::snprintf(id, sizeof(id), "%05zu", i);
    const Eigen::Vector3d position(static_cast<double>(static_cast<int>(i) % grid_cols) * cfg.grid_spacing,
                                   static_cast<double>(static_cast<int>(i) / grid_cols) * cfg.grid_spacing,
                                   0.0);

    ds.db[i] = {"place_" + std::string(id), position, pair.target};
    ds.queries[i] = {"query_" + std::string(id), position, pair.t_true, pair.query};
  });
  return ds;
}

BenchDataset load_dataset_dir(const std::filesystem::path& dir) {
  BenchDataset ds;

  auto cloud_path = [](const std::filesystem::path& base, const std::string& id) {
    for (const char* ext : {".ply", ".xyz", ".txt"}) {
      const auto p = base / (id + ext);
      if (std::filesystem::exists(p)) return p;
    }
    throw IoError("io-error: no cloud file for id '" + id + "' under " + base.string());
  };

  {
    const auto pos_file = dir / "db" / "positions.json";
    std::ifstream in(pos_file);
    if (!in) throw IoError("io-error: cannot open " + pos_file.string());
    json positions;
    try {
      in >> positions;
    } catch (const json::exception& e) {
      throw ParseError("parse-error in " + pos_file.string() + ": " + e.what());
    }
    for (const auto& [id, pos] : positions.items()) {
      BenchDbItem item;
      item.id = id;
      item.position = Eigen::Vector3d(pos.at(0).get<double>(), pos.at(1).get<double>(),
                                      pos.at(2).get<double>());
      item.cloud = load_cloud_auto(cloud_path(dir / "db", id));
      ds.db.push_back(std::move(item));
    }
  }

  {
    const auto gt_file = dir / "queries" / "ground_truth.json";
    std::ifstream in(gt_file);
    if (!in) throw IoError("io-error: cannot open " + gt_file.string());
    json gt;
    try {
      in >> gt;
    } catch (const json::exception& e) {
      throw ParseError("parse-error in " + gt_file.string() + ": " + e.what());
    }
    for (const auto& [id, rec] : gt.items()) {
      BenchQueryItem item;
      item.id = id;
      const auto& pos = rec.at("position");
      item.position = Eigen::Vector3d(pos.at(0).get<double>(), pos.at(1).get<double>(),
                                      pos.at(2).get<double>());
      Eigen::Matrix4d m;
      const auto& rows = rec.at("pose");
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) m(r, c) = rows.at(r).at(c).get<double>();
      item.gt_pose = RigidTransform::from_matrix(m);
      validate_transform(item.gt_pose, 1e-6);
      item.cloud = load_cloud_auto(cloud_path(dir / "queries", id));
      ds.queries.push_back(std::move(item));
    }
  }
  return ds;
}

namespace {

struct RawTimings {
  double extract = 0.0, retrieve = 0.0, rerank_ms = 0.0, register_ms = 0.0;
};

PyramidBundle make_bundle(const PointCloud& cloud, const PipelineConfig& cfg) {
  PyramidBundle bundle;
  const PointCloud* input = &cloud;
  PointCloud down;
  if (cfg.bench.voxel > 0.0) {
    down = voxel_downsample(cloud, cfg.bench.voxel);
    input = &down;
  }
  bundle.pyramid = build_pyramid(*input, cfg.octree.depth_finest, cfg.octree.num_levels);
  bundle.features = extract_pyramid(*input, bundle.pyramid, cfg.descriptors);
  return bundle;
}

}  // namespace

BenchmarkReport run_benchmark(const BenchDataset& dataset, const PipelineConfig& cfg) {
  if (dataset.db.size() < 2) throw DataError("run_benchmark needs >= 2 database entries");
  if (dataset.queries.empty()) throw DataError("run_benchmark needs >= 1 query");

  BenchmarkReport report;
  report.config_echo = config_to_json(cfg);

  // Database features.
  std::vector<DbEntry> items(dataset.db.size());
  std::vector<double> db_times(dataset.db.size());
  parallel_for(dataset.db.size(), [&](std::size_t i) {
    db_times[i] = time_stage([&] {
      items[i].id = dataset.db[i].id;
      items[i].position = dataset.db[i].position;
      items[i].bundle = make_bundle(dataset.db[i].cloud, cfg);
    });
  });
  report.t_db_build = stats_of(db_times);

  const int num_levels = cfg.octree.num_levels;
  report.db_mean_octants.assign(static_cast<std::size_t>(num_levels), 0.0);
  for (const auto& e : items)
    for (int s = 0; s < num_levels; ++s)
      report.db_mean_octants[static_cast<std::size_t>(s)] +=
          static_cast<double>(e.bundle.pyramid.levels[static_cast<std::size_t>(s)].size());
  for (auto& v : report.db_mean_octants) v /= static_cast<double>(items.size());

  const DescriptorDB db = build_database(std::move(items));

  const double r = cfg.bench.retrieval_radius;
  const int top_k = cfg.bench.top_k;

  report.per_query.resize(dataset.queries.size());
  std::vector<RawTimings> timings(dataset.queries.size());
  report.query_mean_octants.assign(static_cast<std::size_t>(num_levels), 0.0);
  std::vector<std::vector<double>> query_octants(dataset.queries.size());

  parallel_for(dataset.queries.size(), [&](std::size_t qi) {
    const BenchQueryItem& query = dataset.queries[qi];
    QueryRecord& rec = report.per_query[qi];
    RawTimings& tm = timings[qi];
    rec.query_id = query.id;

    try {
      PyramidBundle qb;
      tm.extract = time_stage([&] { qb = make_bundle(query.cloud, cfg); });
      query_octants[qi].resize(static_cast<std::size_t>(num_levels));
      for (int s = 0; s < num_levels; ++s)
        query_octants[qi][static_cast<std::size_t>(s)] =
            static_cast<double>(qb.pyramid.levels[static_cast<std::size_t>(s)].size());

      RetrievalResult retrieved;
      tm.retrieve =
          time_stage([&] { retrieved = query_topk(db, qb.features.global, top_k, query.id); });
      rec.top_similarity = retrieved.candidates.empty() ? 0.0 : retrieved.candidates[0].similarity;

      std::vector<int> cand_idx;
      std::vector<const FeaturePyramid*> cand_feats;
      for (const auto& c : retrieved.candidates) {
        const int idx = db.find(c.id);
        cand_idx.push_back(idx);
        cand_feats.push_back(&db.entry(static_cast<std::size_t>(idx)).bundle.features);
        rec.candidates_before.push_back(c.id);
      }

      std::vector<CandidateScore> scores;
      tm.rerank_ms = time_stage([&] { scores = rerank(qb.features, cand_feats, cfg.msgv); });
      for (const auto& s : scores)
        rec.candidates_after.push_back(rec.candidates_before[static_cast<std::size_t>(s.original_rank)]);
      rec.top_beta = scores.empty() ? 0.0 : scores[0].beta;

      auto hit_within = [&](const std::vector<std::string>& ids, std::size_t k) {
        const std::size_t take = std::min(k, ids.size());
        for (std::size_t i = 0; i < take; ++i) {
          const int idx = db.find(ids[i]);
          if ((db.entry(static_cast<std::size_t>(idx)).position - query.position).norm() <= r)
            return true;
        }
        return false;
      };
      rec.hit1_before = hit_within(rec.candidates_before, 1);
      rec.hit5_before = hit_within(rec.candidates_before, 5);
      rec.hit1_after = hit_within(rec.candidates_after, 1);
      rec.hit5_after = hit_within(rec.candidates_after, 5);
      rec.pr_fail_before = !rec.hit1_before;
      rec.pr_fail_after = !rec.hit1_after;

      // Register against the re-ranked top candidate (the deployed path),
      // and against the pre-rerank top for the before/after comparison.
      const int after_idx = db.find(rec.candidates_after[0]);
      RegistrationResult reg_after;
      bool after_ok = false;
      tm.register_ms = time_stage([&] {
        try {
          reg_after =
              register_bundles(qb, db.entry(static_cast<std::size_t>(after_idx)).bundle, cfg.reg);
          after_ok = true;
        } catch (const DataError&) {
          after_ok = false;
        }
      });
      if (after_ok) {
        const PoseError err = evaluate_pose(reg_after.transform, query.gt_pose);
        rec.reg_after_valid = true;
        rec.rte_after = err.rte_m;
        rec.rre_after = err.rre_deg;
        rec.success_after = err.success;
      }

      const int before_idx = cand_idx[0];
      if (before_idx == after_idx) {
        rec.reg_before_valid = rec.reg_after_valid;
        rec.rte_before = rec.rte_after;
        rec.rre_before = rec.rre_after;
        rec.success_before = rec.success_after;
      } else {
        try {
          const RegistrationResult reg_before =
              register_bundles(qb, db.entry(static_cast<std::size_t>(before_idx)).bundle, cfg.reg);
          const PoseError err = evaluate_pose(reg_before.transform, query.gt_pose);
          rec.reg_before_valid = true;
          rec.rte_before = err.rte_m;
          rec.rre_before = err.rre_deg;
          rec.success_before = err.success;
        } catch (const DataError&) {
          rec.reg_before_valid = false;
        }
      }
    } catch (const Error& e) {
      rec.error = e.what();
    }
  });

  for (const auto& q : query_octants) {
    if (q.empty()) continue;
    for (int s = 0; s < num_levels; ++s)
      report.query_mean_octants[static_cast<std::size_t>(s)] += q[static_cast<std::size_t>(s)];
  }
  for (auto& v : report.query_mean_octants) v /= static_cast<double>(dataset.queries.size());

  // Aggregate metrics. Localisation averages run over all pairs except PR
  // failures; registrations that raised are additionally excluded from the
  // error means but still count as failures for the success rate.
  const auto n = static_cast<double>(report.per_query.size());
  int hits1b = 0, hits5b = 0, hits1a = 0, hits5a = 0;
  double rte_b = 0.0, rre_b = 0.0, rte_a = 0.0, rre_a = 0.0;
  int loc_b = 0, loc_a = 0, valid_b = 0, valid_a = 0, succ_b = 0, succ_a = 0;
  for (const auto& rec : report.per_query) {
    hits1b += rec.hit1_before ? 1 : 0;
    hits5b += rec.hit5_before ? 1 : 0;
    hits1a += rec.hit1_after ? 1 : 0;
    hits5a += rec.hit5_after ? 1 : 0;
    if (!rec.pr_fail_before && rec.error.empty()) {
      ++loc_b;
      succ_b += rec.success_before ? 1 : 0;
      if (rec.reg_before_valid) {
        ++valid_b;
        rte_b += rec.rte_before;
        rre_b += rec.rre_before;
      }
    }
    if (!rec.pr_fail_after && rec.error.empty()) {
      ++loc_a;
      succ_a += rec.success_after ? 1 : 0;
      if (rec.reg_after_valid) {
        ++valid_a;
        rte_a += rec.rte_after;
        rre_a += rec.rre_after;
      }
    }
  }
  report.recall1_before = 100.0 * hits1b / n;
  report.recall5_before = 100.0 * hits5b / n;
  report.recall1_after = 100.0 * hits1a / n;
  report.recall5_after = 100.0 * hits5a / n;
  report.loc_pairs_before = loc_b;
  report.loc_pairs_after = loc_a;
  report.mean_rte_before = valid_b > 0 ? rte_b / valid_b : 0.0;
  report.mean_rre_before = valid_b > 0 ? rre_b / valid_b : 0.0;
  report.mean_rte_after = valid_a > 0 ? rte_a / valid_a : 0.0;
  report.mean_rre_after = valid_a > 0 ? rre_a / valid_a : 0.0;
  report.success_rate_before = loc_b > 0 ? 100.0 * succ_b / loc_b : 0.0;
  report.success_rate_after = loc_a > 0 ? 100.0 * succ_a / loc_a : 0.0;

  std::vector<double> t_ext, t_ret, t_rr, t_reg, t_tot;
  for (const auto& tm : timings) {
    t_ext.push_back(tm.extract);
    t_ret.push_back(tm.retrieve);
    t_rr.push_back(tm.rerank_ms);
    t_reg.push_back(tm.register_ms);
    t_tot.push_back(tm.extract + tm.retrieve + tm.rerank_ms + tm.register_ms);
  }
  report.t_extract = stats_of(t_ext);
  report.t_retrieve = stats_of(t_ret);
  report.t_rerank = stats_of(t_rr);
  report.t_register = stats_of(t_reg);
  report.t_total = stats_of(t_tot);

  return report;
}

json config_to_json(const PipelineConfig& cfg) {
  json j;
  j["octree"] = {{"depth_finest", cfg.octree.depth_finest}, {"num_levels", cfg.octree.num_levels}};
  j["descriptors"] = {{"dims", cfg.descriptors.dims},
                      {"radius_multipliers", cfg.descriptors.radius_multipliers},
                      {"pooling_exponent", cfg.descriptors.pooling_exponent}};
  j["msgv"] = {{"lambda", cfg.msgv.lambda},
               {"sigma_d", cfg.msgv.sigma_d},
               {"weights", cfg.msgv.weights},
               {"head_fraction", cfg.msgv.head_fraction},
               {"power_tol", cfg.msgv.power_tol},
               {"power_max_iter", cfg.msgv.power_max_iter}};
  j["reg"] = {{"n_c", cfg.reg.n_c},
              {"gamma_z", cfg.reg.gamma_z},
              {"k_mutual", cfg.reg.k_mutual},
              {"alpha", cfg.reg.alpha},
              {"sinkhorn_iters", cfg.reg.sinkhorn_iters},
              {"tau_a", cfg.reg.tau_a},
              {"n_r", cfg.reg.n_r}};
  j["bench"] = {{"seed", cfg.bench.seed},
                {"num_pairs", cfg.bench.num_pairs},
                {"top_k", cfg.bench.top_k},
                {"retrieval_radius", cfg.bench.retrieval_radius},
                {"grid_spacing", cfg.bench.grid_spacing},
                {"noise_levels", cfg.bench.noise_levels},
                {"occlusion_arc_deg", cfg.bench.occlusion_arc_deg},
                {"translation_range", cfg.bench.translation_range},
                {"voxel", cfg.bench.voxel},
                {"extent", cfg.bench.scene.extent},
                {"tree_count", cfg.bench.scene.tree_count},
                {"canopy_density", cfg.bench.scene.canopy_density},
                {"trunk_density", cfg.bench.scene.trunk_density},
                {"ground_density", cfg.bench.scene.ground_density},
                {"ground_roughness", cfg.bench.scene.ground_roughness},
                {"clutter_fraction", cfg.bench.scene.clutter_fraction}};
  return j;
}

json report_to_json(const BenchmarkReport& report, bool include_timings) {
  json j;
  j["config"] = report.config_echo;
  j["recall"] = {{"before", {{"r1", report.recall1_before}, {"r5", report.recall5_before}}},
                 {"after", {{"r1", report.recall1_after}, {"r5", report.recall5_after}}}};
  j["localisation"] = {
      {"before",
       {{"mean_rte_m", report.mean_rte_before},
        {"mean_rre_deg", report.mean_rre_before},
        {"success_rate", report.success_rate_before},
        {"pairs", report.loc_pairs_before}}},
      {"after",
       {{"mean_rte_m", report.mean_rte_after},
        {"mean_rre_deg", report.mean_rre_after},
        {"success_rate", report.success_rate_after},
        {"pairs", report.loc_pairs_after}}}};
  j["pyramid_stats"] = {{"db_mean_octants", report.db_mean_octants},
                        {"query_mean_octants", report.query_mean_octants}};

  json per_query = json::array();
  for (const auto& rec : report.per_query) {
    per_query.push_back({{"query_id", rec.query_id},
                         {"candidates_before", rec.candidates_before},
                         {"candidates_after", rec.candidates_after},
                         {"top_similarity", rec.top_similarity},
                         {"top_beta", rec.top_beta},
                         {"hit1_before", rec.hit1_before},
                         {"hit5_before", rec.hit5_before},
                         {"hit1_after", rec.hit1_after},
                         {"hit5_after", rec.hit5_after},
                         {"pr_fail_before", rec.pr_fail_before},
                         {"pr_fail_after", rec.pr_fail_after},
                         {"reg_before_valid", rec.reg_before_valid},
                         {"reg_after_valid", rec.reg_after_valid},
                         {"rte_before", rec.rte_before},
                         {"rre_before", rec.rre_before},
                         {"rte_after", rec.rte_after},
                         {"rre_after", rec.rre_after},
                         {"success_before", rec.success_before},
                         {"success_after", rec.success_after},
                         {"error", rec.error}});
  }
  j["per_query"] = per_query;

  if (include_timings) {
    auto stage = [](const StageStats& s) {
      return json{{"mean_ms", s.mean_ms}, {"std_ms", s.std_ms}, {"count", s.count}};
    };
    j["timings"] = {{"db_build", stage(report.t_db_build)},
                    {"feature_extraction", stage(report.t_extract)},
                    {"retrieval", stage(report.t_retrieve)},
                    {"reranking", stage(report.t_rerank)},
                    {"registration", stage(report.t_register)},
                    {"total", stage(report.t_total)}};
  }
  return j;
}

std::string report_to_csv(const BenchmarkReport& report) {
  std::ostringstream out;
  out << "query_id,rank1_before,rank1_after,hit1_before,hit1_after,pr_fail_before,pr_fail_after,"
         "rte_before,rre_before,rte_after,rre_after,success_before,success_after,top_beta,error\n";
  out.precision(10);
  for (const auto& rec : report.per_query) {
    out << rec.query_id << ','
        << (rec.candidates_before.empty() ? "" : rec.candidates_before[0]) << ','
        << (rec.candidates_after.empty() ? "" : rec.candidates_after[0]) << ','
        << rec.hit1_before << ',' << rec.hit1_after << ',' << rec.pr_fail_before << ','
        << rec.pr_fail_after << ',' << rec.rte_before << ',' << rec.rre_before << ','
        << rec.rte_after << ',' << rec.rre_after << ',' << rec.success_before << ','
        << rec.success_after << ',' << rec.top_beta << ',' << rec.error << '\n';
  }
  return out.str();
}

std::string report_to_recall_tsv(const BenchmarkReport& report, const BenchDataset& dataset,
                                 double retrieval_radius) {
  std::unordered_map<std::string, Eigen::Vector3d> positions;
  for (const auto& e : dataset.db) positions.emplace(e.id, e.position);
  std::unordered_map<std::string, Eigen::Vector3d> query_positions;
  for (const auto& q : dataset.queries) query_positions.emplace(q.id, q.position);

  std::size_t max_k = 0;
  for (const auto& rec : report.per_query)
    max_k = std::max(max_k, rec.candidates_before.size());

  auto recall_at = [&](bool after, std::size_t k) {
    int hits = 0;
    for (const auto& rec : report.per_query) {
      const auto& ids = after ? rec.candidates_after : rec.candidates_before;
      const Eigen::Vector3d qpos = query_positions.at(rec.query_id);
      bool hit = false;
      for (std::size_t i = 0; i < std::min(k, ids.size()) && !hit; ++i)
        hit = (positions.at(ids[i]) - qpos).norm() <= retrieval_radius;
      hits += hit ? 1 : 0;
    }
    return 100.0 * hits / static_cast<double>(report.per_query.size());
  };

  std::ostringstream out;
  out << "k\trecall_before\trecall_after\n";
  out.precision(10);
  for (std::size_t k = 1; k <= max_k; ++k)
    out << k << '\t' << recall_at(false, k) << '\t' << recall_at(true, k) << '\n';
  return out.str();
}

}  // namespace hierloc
