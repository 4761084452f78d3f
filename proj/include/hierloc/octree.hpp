#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "hierloc/point_cloud.hpp"

namespace hierloc {

/// Interleaves three 21-bit cell indices into a Morton code (x lowest).
std::uint64_t morton_encode(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz);
void morton_decode(std::uint64_t key, std::uint32_t& ix, std::uint32_t& iy, std::uint32_t& iz);

/// One pyramid level: occupied octants in strictly increasing Morton order.
struct OctreeLevel {
  int depth = 0;  // octree depth of this level's grid
  std::vector<std::uint64_t> keys;
  std::vector<Eigen::Vector3d> centroids;  // exact mean of member points
  std::vector<std::uint32_t> counts;       // points per octant
  // Contiguous span of each octant's points in OctreePyramid::point_order.
  // Empty for pyramids reconstructed from serialized features.
  std::vector<std::uint32_t> range_begin;
  std::vector<std::uint32_t> range_end;

  std::size_t size() const { return keys.size(); }
};

struct CubeBounds {
  Eigen::Vector3d min = Eigen::Vector3d::Zero();
  double edge = 1.0;
};

/// Multi-level sparse octree. levels[0] is the finest (level 1 in 1-based
/// level arithmetic), levels.back() is the coarsest (level S). Level s
/// lives at octree depth (depth_finest - s + 1).
struct OctreePyramid {
  std::vector<OctreeLevel> levels;
  CubeBounds bounds;
  int depth_finest = 0;
  std::vector<std::uint32_t> point_order;  // cloud indices sorted by finest Morton key

  int num_levels() const { return static_cast<int>(levels.size()); }
  const OctreeLevel& level(int s) const { return levels.at(static_cast<std::size_t>(s - 1)); }
  const OctreeLevel& finest() const { return levels.front(); }
  const OctreeLevel& coarsest() const { return levels.back(); }
  double edge_at_depth(int depth) const {
    return bounds.edge / static_cast<double>(std::uint64_t{1} << depth);
  }
};

/// Builds the pyramid over a cloud. Bounds are the tight bounding box
/// expanded to a cube and padded by 1% of the edge. Only occupied octants
/// are materialised. Deterministic: same cloud and parameters give a
/// bit-identical pyramid.
OctreePyramid build_pyramid(const PointCloud& cloud, int depth_finest, int num_levels);

/// Index at coarse_level of the ancestor of octant_index at fine_level.
/// Levels are 1-based, 1 = finest.
int parent_of(const OctreePyramid& pyr, int fine_level, int octant_index, int coarse_level);

/// For each requested coarsest-level octant, the finest-level octant
/// indices whose ancestor it is. Patches over all coarsest octants
/// partition the finest level exactly.
std::vector<std::vector<int>> group_by_parent(const OctreePyramid& pyr,
                                              std::span<const int> coarse_indices);

}  // namespace hierloc
