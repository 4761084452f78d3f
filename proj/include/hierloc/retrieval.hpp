#pragma once

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "hierloc/descriptors.hpp"

namespace hierloc {

struct DbEntry {
  std::string id;
  Eigen::Vector3d position = Eigen::Vector3d::Zero();  // ground-truth location, metres
  PyramidBundle bundle;
};

/// Immutable database of global descriptors with the local pyramids kept
/// alongside for re-ranking and registration.
class DescriptorDB {
 public:
  DescriptorDB() = default;

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const DbEntry& entry(std::size_t i) const { return entries_.at(i); }
  const std::vector<DbEntry>& entries() const { return entries_; }
  int global_dim() const { return global_dim_; }

  /// Index of an id, or -1.
  int find(const std::string& id) const;

  friend DescriptorDB build_database(std::vector<DbEntry> items);

 private:
  std::vector<DbEntry> entries_;  // insertion order
  std::unordered_map<std::string, int> by_id_;
  int global_dim_ = 0;
};

/// Ids must be unique and global descriptor dimensions consistent.
DescriptorDB build_database(std::vector<DbEntry> items);

struct Candidate {
  std::string id;
  double similarity = 0.0;  // cosine, in [-1, 1]
};

struct RetrievalResult {
  std::string query_id;
  std::vector<Candidate> candidates;  // similarity non-increasing
};

/// Exact brute-force cosine ranking; ties broken by ascending id. Returns
/// min(k, database size) candidates.
RetrievalResult query_topk(const DescriptorDB& db, const Eigen::VectorXd& query_global, int k,
                           const std::string& query_id = "");

/// Percentage of queries whose top-k contains a candidate within r metres
/// of the query position. query_positions runs parallel to results.
double recall_at_k(std::span<const RetrievalResult> results, const DescriptorDB& db,
                   std::span<const Eigen::Vector3d> query_positions, double r, int k);

/// Directory layout: index.json (ids + positions) plus one feature
/// container per entry.
void save_database(const DescriptorDB& db, const std::filesystem::path& dir);
DescriptorDB load_database(const std::filesystem::path& dir);

}  // namespace hierloc
