// Command-line front end: scene synthesis, descriptor databases,
// retrieval, geometric re-ranking, registration and the benchmark.

#include <CLI11.hpp>
#include <iostream>
#include <nlohmann/json.hpp>

#include "hierloc/benchmark.hpp"
#include "hierloc/msgv.hpp"
#include "hierloc/registration.hpp"
#include "hierloc/retrieval.hpp"
#include "hierloc/rng.hpp"
#include "hierloc/synth.hpp"

using namespace hierloc;
using json = nlohmann::json;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

PipelineConfig load_config_or_default(const std::string& path) {
  if (path.empty()) return PipelineConfig{};
  return load_pipeline_config(path);
}

CloudFormat format_from_name(const std::string& name) {
  if (name == "ply-ascii") return CloudFormat::kPlyAscii;
  if (name == "ply-binary") return CloudFormat::kPlyBinaryLE;
  if (name == "xyz") return CloudFormat::kXyzText;
  throw InvalidArgument("unknown format '" + name + "' (ply-ascii, ply-binary, xyz)");
}

PyramidBundle featurize(const PointCloud& cloud, const PipelineConfig& cfg) {
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

json pose_to_json(const RigidTransform& t) {
  const Eigen::Matrix4d m = t.matrix();
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  return rows;
}

int run_synth(const std::string& config_path, std::uint64_t seed, const std::string& out,
              const std::string& format, bool emit_pair, std::uint64_t pair_seed) {
  PipelineConfig cfg = load_config_or_default(config_path);
  SceneConfig scene = cfg.bench.scene;
  scene.seed = seed;

  if (!emit_pair) {
    const PointCloud cloud = synth_scene(scene);
    save_cloud(cloud, out, format_from_name(format));
    std::cout << "wrote " << cloud.size() << " points to " << out << "\n";
    return 0;
  }

  Rng rng = Rng(pair_seed).fork(0x7Ab1e);
  RigidTransform t;
  t.rotation = rotation_about_z(rng.uniform(-M_PI, M_PI));
  t.translation = Eigen::Vector3d(rng.uniform(-cfg.bench.translation_range, cfg.bench.translation_range),
                                  rng.uniform(-cfg.bench.translation_range, cfg.bench.translation_range),
                                  rng.uniform(-0.5, 0.5));
  const ScenePair pair =
      make_pair(scene, t, cfg.bench.noise_levels.front(), cfg.bench.occlusion_arc_deg);
  save_cloud(pair.target, out + ".target.ply", CloudFormat::kPlyBinaryLE);
  save_cloud(pair.query, out + ".query.ply", CloudFormat::kPlyBinaryLE);
  save_pose_json(pair.t_true, out + ".gt.json");
  std::cout << "wrote " << out << ".target.ply (" << pair.target.size() << " pts), " << out
            << ".query.ply (" << pair.query.size() << " pts), " << out << ".gt.json\n";
  return 0;
}

int run_db_build(const std::string& config_path, const std::string& input,
                 const std::string& out) {
  const PipelineConfig cfg = load_config_or_default(config_path);

  std::ifstream pos_in(std::filesystem::path(input) / "positions.json");
  if (!pos_in)
    throw IoError("io-error: cannot open " + input + "/positions.json");
  json positions;
  pos_in >> positions;

  std::vector<DbEntry> items;
  for (const auto& [id, pos] : positions.items()) {
    std::filesystem::path cloud_path;
    for (const char* ext : {".ply", ".xyz", ".txt"}) {
      const auto p = std::filesystem::path(input) / (id + ext);
      if (std::filesystem::exists(p)) {
        cloud_path = p;
        break;
      }
    }
    if (cloud_path.empty()) throw IoError("io-error: no cloud for id '" + id + "'");
    DbEntry entry;
    entry.id = id;
    entry.position =
        Eigen::Vector3d(pos.at(0).get<double>(), pos.at(1).get<double>(), pos.at(2).get<double>());
    entry.bundle = featurize(load_cloud_auto(cloud_path), cfg);
    items.push_back(std::move(entry));
  }
  const DescriptorDB db = build_database(std::move(items));
  save_database(db, out);
  std::cout << "indexed " << db.size() << " entries into " << out << "\n";
  return 0;
}

int run_db_query(const std::string& config_path, const std::string& db_path,
                 const std::string& cloud_path, int k) {
  const PipelineConfig cfg = load_config_or_default(config_path);
  const DescriptorDB db = load_database(db_path);
  const PyramidBundle query = featurize(load_cloud_auto(cloud_path), cfg);
  const RetrievalResult result = query_topk(db, query.features.global, k,
                                            std::filesystem::path(cloud_path).stem().string());
  json out;
  out["query_id"] = result.query_id;
  out["candidates"] = json::array();
  for (const auto& c : result.candidates)
    out["candidates"].push_back({{"id", c.id}, {"similarity", c.similarity}});
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_rerank(const std::string& config_path, const std::string& db_path,
               const std::string& cloud_path, int k) {
  const PipelineConfig cfg = load_config_or_default(config_path);
  const DescriptorDB db = load_database(db_path);
  const PyramidBundle query = featurize(load_cloud_auto(cloud_path), cfg);
  const RetrievalResult retrieved = query_topk(db, query.features.global, k,
                                               std::filesystem::path(cloud_path).stem().string());

  std::vector<const FeaturePyramid*> cand_feats;
  std::vector<std::string> ids;
  for (const auto& c : retrieved.candidates) {
    ids.push_back(c.id);
    cand_feats.push_back(&db.entry(static_cast<std::size_t>(db.find(c.id))).bundle.features);
  }
  const auto scores = rerank(query.features, cand_feats, cfg.msgv);

  json out;
  out["query_id"] = retrieved.query_id;
  out["candidates"] = json::array();
  for (const auto& s : scores) {
    out["candidates"].push_back({{"id", ids[static_cast<std::size_t>(s.original_rank)]},
                                 {"beta", s.beta},
                                 {"retrieval_rank", s.original_rank + 1},
                                 {"per_scale", s.per_scale},
                                 {"eigen_iterations", s.eigen_iterations}});
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_register(const std::string& config_path, const std::string& query_path,
                 const std::string& target_path, const std::string& method,
                 const std::string& gt_path, std::uint64_t seed) {
  const PipelineConfig cfg = load_config_or_default(config_path);
  if (method != "lgr" && method != "ransac")
    throw InvalidArgument("unknown method '" + method + "' (lgr, ransac)");

  const PointCloud query_cloud = load_cloud_auto(query_path);
  const PointCloud target_cloud = load_cloud_auto(target_path);

  PyramidBundle qb, tb;
  const double t_extract = time_stage([&] {
    qb = featurize(query_cloud, cfg);
    tb = featurize(target_cloud, cfg);
  });

  std::vector<PatchCorrespondence> patches;
  const double t_match =
      time_stage([&] { patches = build_patch_correspondences(qb, tb, cfg.reg); });

  RegistrationResult result;
  double t_solve = 0.0;
  if (method == "lgr") {
    t_solve = time_stage([&] { result = local_to_global(patches, cfg.reg.tau_a, cfg.reg.n_r); });
  } else {
    std::vector<WeightedPair> pairs;
    for (const auto& patch : patches)
      for (const auto& fp : patch.fine_pairs) pairs.push_back({fp.q, fp.p, fp.confidence});
    t_solve =
        time_stage([&] { result = ransac_register(pairs, cfg.reg.tau_a, 50000, seed); });
  }

  json out;
  out["method"] = method;
  out["pose"] = pose_to_json(result.transform);
  out["inliers"] = result.inlier_count;
  out["total_pairs"] = result.total_pairs;
  out["inlier_ratio"] = result.inlier_ratio;
  out["candidates"] = result.candidate_count;
  out["timings_ms"] = {{"extract", t_extract}, {"match", t_match}, {"solve", t_solve},
                       {"total", t_extract + t_match + t_solve}};
  if (!gt_path.empty()) {
    const RigidTransform gt = load_pose_json(gt_path);
    const PoseError err = evaluate_pose(result.transform, gt);
    out["rre_deg"] = err.rre_deg;
    out["rte_m"] = err.rte_m;
    out["success"] = err.success;
  }
  std::cout << out.dump(2) << "\n";
  return 0;
}

int run_bench(const std::string& config_path, const std::string& dataset_dir,
              const std::string& out_prefix, bool tsv) {
  const PipelineConfig cfg = load_config_or_default(config_path);
  const BenchDataset dataset =
      dataset_dir.empty() ? make_synthetic_dataset(cfg.bench) : load_dataset_dir(dataset_dir);
  const BenchmarkReport report = run_benchmark(dataset, cfg);

  {
    std::ofstream json_out(out_prefix + ".json");
    if (!json_out) throw IoError("io-error: cannot write " + out_prefix + ".json");
    json_out << report_to_json(report, /*include_timings=*/true).dump(2) << "\n";
  }
  {
    std::ofstream csv_out(out_prefix + ".csv");
    if (!csv_out) throw IoError("io-error: cannot write " + out_prefix + ".csv");
    csv_out << report_to_csv(report);
  }
  if (tsv) {
    std::ofstream tsv_out(out_prefix + "_recall.tsv");
    if (!tsv_out) throw IoError("io-error: cannot write " + out_prefix + "_recall.tsv");
    tsv_out << report_to_recall_tsv(report, dataset, cfg.bench.retrieval_radius);
  }

  std::cout << "queries: " << report.per_query.size() << "\n"
            << "recall@1 before/after: " << report.recall1_before << " / "
            << report.recall1_after << "\n"
            << "recall@5 before/after: " << report.recall5_before << " / "
            << report.recall5_after << "\n"
            << "success rate after: " << report.success_rate_after << "%\n"
            << "mean RTE before/after: " << report.mean_rte_before << " / "
            << report.mean_rte_after << " m\n"
            << "mean RRE before/after: " << report.mean_rre_before << " / "
            << report.mean_rre_after << " deg\n"
            << "report: " << out_prefix << ".json, " << out_prefix << ".csv\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierloc: hierarchical point-cloud place recognition, re-ranking and registration"};
  app.require_subcommand(1);
  app.fallthrough();  // --config may appear after the subcommand

  std::string config_path;
  app.add_option("--config", config_path, "TOML configuration file")->capture_default_str();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic forest scan");
  std::uint64_t synth_seed = 0;
  std::string synth_out = "scene.ply";
  std::string synth_format = "ply-binary";
  bool synth_pair = false;
  synth->add_option("--seed", synth_seed, "scene seed");
  synth->add_option("--out", synth_out, "output path (or prefix with --pair)");
  synth->add_option("--format", synth_format, "ply-ascii | ply-binary | xyz");
  synth->add_flag("--pair", synth_pair, "emit a query/target pair with ground truth");

  // db build / db query
  auto* db = app.add_subcommand("db", "descriptor database operations");
  db->require_subcommand(1);
  auto* db_build = db->add_subcommand("build", "featurise a directory of clouds");
  std::string db_input, db_out;
  db_build->add_option("--input", db_input, "directory with clouds and positions.json")
      ->required();
  db_build->add_option("--out", db_out, "output database directory")->required();
  auto* db_query = db->add_subcommand("query", "query a database with a cloud");
  std::string dbq_db, dbq_cloud;
  int dbq_k = 20;
  db_query->add_option("--db", dbq_db, "database directory")->required();
  db_query->add_option("--cloud", dbq_cloud, "query cloud file")->required();
  db_query->add_option("--k", dbq_k, "candidates to return");

  // rerank
  auto* rr = app.add_subcommand("rerank", "retrieve and geometrically re-rank candidates");
  std::string rr_db, rr_cloud;
  int rr_k = 20;
  rr->add_option("--db", rr_db, "database directory")->required();
  rr->add_option("--query", rr_cloud, "query cloud file")->required();
  rr->add_option("--k", rr_k, "candidates to re-rank");

  // register
  auto* reg = app.add_subcommand("register", "estimate the 6-DoF pose between two clouds");
  std::string reg_query, reg_target, reg_method = "lgr", reg_gt;
  std::uint64_t reg_seed = 0;
  reg->add_option("--query", reg_query, "query cloud")->required();
  reg->add_option("--target", reg_target, "target cloud")->required();
  reg->add_option("--method", reg_method, "lgr | ransac");
  reg->add_option("--gt", reg_gt, "ground-truth pose JSON for error reporting");
  reg->add_option("--seed", reg_seed, "ransac seed");

  // bench
  auto* bench = app.add_subcommand("bench", "run the retrieval + re-rank + register benchmark");
  std::string bench_dataset, bench_out = "bench";
  bool bench_tsv = false;
  bench->add_option("--dataset", bench_dataset,
                    "dataset directory (omit to generate the synthetic suite)");
  bench->add_option("--out", bench_out, "output prefix for .json/.csv");
  bench->add_flag("--tsv", bench_tsv, "also write recall@k curves as TSV");

  CLI11_PARSE(app, argc, argv);

  try {
    if (synth->parsed())
      return run_synth(config_path, synth_seed, synth_out, synth_format, synth_pair, synth_seed);
    if (db_build->parsed()) return run_db_build(config_path, db_input, db_out);
    if (db_query->parsed()) return run_db_query(config_path, dbq_db, dbq_cloud, dbq_k);
    if (rr->parsed()) return run_rerank(config_path, rr_db, rr_cloud, rr_k);
    if (reg->parsed())
      return run_register(config_path, reg_query, reg_target, reg_method, reg_gt, reg_seed);
    if (bench->parsed()) return run_bench(config_path, bench_dataset, bench_out, bench_tsv);
  } catch (const InvalidArgument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    // Config files are operator input; data files are data.
    const bool config_file = !config_path.empty() &&
                             std::string(e.what()).find(config_path) != std::string::npos;
    std::cerr << (config_file ? "config error: " : "data error: ") << e.what() << "\n";
    return config_file ? kExitConfig : kExitData;
  } catch (const Error& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return kExitData;
  }
  return 0;
}
