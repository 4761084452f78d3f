#include "hierloc/retrieval.hpp"

#include <algorithm>
#include <fstream>

#include <nlohmann/json.hpp>

namespace hierloc {

using json = nlohmann::json;

int DescriptorDB::find(const std::string& id) const {
  const auto it = by_id_.find(id);
  return it == by_id_.end() ? -1 : it->second;
}

DescriptorDB build_database(std::vector<DbEntry> items) {
  DescriptorDB db;
  for (std::size_t i = 0; i < items.size(); ++i) {
    DbEntry& e = items[i];
    if (db.by_id_.count(e.id))
      throw DataError("duplicate-id: '" + e.id + "'");
    const int dim = static_cast<int>(e.bundle.features.global.size());
    if (db.global_dim_ == 0)
      db.global_dim_ = dim;
    else if (dim != db.global_dim_)
      throw InvalidArgument("dim-mismatch: entry '" + e.id + "' has global dim " +
                            std::to_string(dim) + ", expected " + std::to_string(db.global_dim_));
    db.by_id_.emplace(e.id, static_cast<int>(i));
    db.entries_.push_back(std::move(e));
  }
  return db;
}

RetrievalResult query_topk(const DescriptorDB& db, const Eigen::VectorXd& query_global, int k,
                           const std::string& query_id) {
  if (db.empty()) throw DataError("empty-database: query_topk");
  if (k < 1) throw InvalidArgument("k must be >= 1");
  if (static_cast<int>(query_global.size()) != db.global_dim())
    throw InvalidArgument("dim-mismatch: query dim " + std::to_string(query_global.size()) +
                          " vs database dim " + std::to_string(db.global_dim()));

  std::vector<int> order(db.size());
  std::vector<double> sims(db.size());
  for (std::size_t i = 0; i < db.size(); ++i) {
    order[i] = static_cast<int>(i);
    sims[i] = query_global.dot(db.entry(i).bundle.features.global);
  }
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    if (sims[static_cast<std::size_t>(a)] != sims[static_cast<std::size_t>(b)])
      return sims[static_cast<std::size_t>(a)] > sims[static_cast<std::size_t>(b)];
    return db.entry(static_cast<std::size_t>(a)).id < db.entry(static_cast<std::size_t>(b)).id;
  });

  RetrievalResult result;
  result.query_id = query_id;
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), db.size());
  result.candidates.reserve(take);
  for (std::size_t i = 0; i < take; ++i)
    result.candidates.push_back(
        {db.entry(static_cast<std::size_t>(order[i])).id, sims[static_cast<std::size_t>(order[i])]});
  return result;
}

double recall_at_k(std::span<const RetrievalResult> results, const DescriptorDB& db,
                   std::span<const Eigen::Vector3d> query_positions, double r, int k) {
  if (results.empty()) throw DataError("recall_at_k: no results");
  if (results.size() != query_positions.size())
    throw DataError("position-missing: need one position per query");

  std::size_t hits = 0;
  for (std::size_t q = 0; q < results.size(); ++q) {
    const auto& cands = results[q].candidates;
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), cands.size());
    bool hit = false;
    for (std::size_t i = 0; i < take && !hit; ++i) {
      const int idx = db.find(cands[i].id);
      if (idx < 0) throw DataError("position-missing: candidate id '" + cands[i].id + "'");
      hit = (db.entry(static_cast<std::size_t>(idx)).position - query_positions[q]).norm() <= r;
    }
    hits += hit ? 1 : 0;
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(results.size());
}

void save_database(const DescriptorDB& db, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  json index;
  index["entries"] = json::array();
  for (std::size_t i = 0; i < db.size(); ++i) {
    const DbEntry& e = db.entry(i);
    const std::string file = "entry_" + std::to_string(i) + ".feat";
    save_bundle(e.bundle, dir / file);
    index["entries"].push_back(
        {{"id", e.id}, {"position", {e.position.x(), e.position.y(), e.position.z()}}, {"file", file}});
  }
  std::ofstream out(dir / "index.json");
  if (!out) throw IoError("io-error: cannot write " + (dir / "index.json").string());
  out << index.dump(2) << "\n";
}

DescriptorDB load_database(const std::filesystem::path& dir) {
  std::ifstream in(dir / "index.json");
  if (!in) throw IoError("io-error: cannot open " + (dir / "index.json").string());
  json index;
  try {
    in >> index;
  } catch (const json::exception& e) {
    throw ParseError("parse-error in " + (dir / "index.json").string() + ": " + e.what());
  }

  std::vector<DbEntry> items;
  for (const auto& rec : index.at("entries")) {
    DbEntry e;
    e.id = rec.at("id").get<std::string>();
    const auto& pos = rec.at("position");
    e.position = Eigen::Vector3d(pos.at(0).get<double>(), pos.at(1).get<double>(),
                                 pos.at(2).get<double>());
    e.bundle = load_bundle(dir / rec.at("file").get<std::string>());
    items.push_back(std::move(e));
  }
  return build_database(std::move(items));
}

}  // namespace hierloc
