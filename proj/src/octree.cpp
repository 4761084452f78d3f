#include "hierloc/octree.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hierloc {

namespace {

std::uint64_t spread3(std::uint64_t v) {
  v &= 0x1FFFFF;
  v = (v | v << 32) & 0x1F00000000FFFFull;
  v = (v | v << 16) & 0x1F0000FF0000FFull;
  v = (v | v << 8) & 0x100F00F00F00F00Full;
  v = (v | v << 4) & 0x10C30C30C30C30C3ull;
  v = (v | v << 2) & 0x1249249249249249ull;
  return v;
}

std::uint64_t compact3(std::uint64_t v) {
  v &= 0x1249249249249249ull;
  v = (v ^ (v >> 2)) & 0x10C30C30C30C30C3ull;
  v = (v ^ (v >> 4)) & 0x100F00F00F00F00Full;
  v = (v ^ (v >> 8)) & 0x1F0000FF0000FFull;
  v = (v ^ (v >> 16)) & 0x1F00000000FFFFull;
  v = (v ^ (v >> 32)) & 0x1FFFFF;
  return v;
}

constexpr int kMaxDepth = 21;  // 3*21 = 63 bits

}  // namespace

std::uint64_t morton_encode(std::uint32_t ix, std::uint32_t iy, std::uint32_t iz) {
  return spread3(ix) | (spread3(iy) << 1) | (spread3(iz) << 2);
}

void morton_decode(std::uint64_t key, std::uint32_t& ix, std::uint32_t& iy, std::uint32_t& iz) {
  ix = static_cast<std::uint32_t>(compact3(key));
  iy = static_cast<std::uint32_t>(compact3(key >> 1));
  iz = static_cast<std::uint32_t>(compact3(key >> 2));
}

OctreePyramid build_pyramid(const PointCloud& cloud, int depth_finest, int num_levels) {
  if (cloud.empty()) throw DataError("empty-cloud: build_pyramid");
  // The coarsest level may be the root (depth 0), so the pyramid needs
  // depth_finest >= num_levels - 1.
  if (num_levels < 2 || depth_finest < 1 || depth_finest < num_levels - 1 ||
      depth_finest > kMaxDepth)
    throw InvalidArgument(
        "invalid-depth: need num_levels >= 2 and num_levels - 1 <= depth_finest <= " +
        std::to_string(kMaxDepth));

  OctreePyramid pyr;
  pyr.depth_finest = depth_finest;

  Eigen::Vector3d lo = cloud.points.front();
  Eigen::Vector3d hi = cloud.points.front();
  for (const auto& p : cloud.points) {
    if (!p.allFinite()) throw InvalidArgument("non-finite point in cloud");
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  const double extent = (hi - lo).maxCoeff();
  const double edge = extent > 0.0 ? extent * 1.01 : 1.0;
  const Eigen::Vector3d center = 0.5 * (lo + hi);
  pyr.bounds.edge = edge;
  pyr.bounds.min = center - 0.5 * edge * Eigen::Vector3d::Ones();

  // Cell indices are computed once at the finest depth; coarser keys are
  // bit-shifted prefixes, which keeps the hierarchy consistent at cell
  // boundaries where independent floor() calls could disagree.
  const std::uint64_t cells = std::uint64_t{1} << depth_finest;
  const double inv_cell = static_cast<double>(cells) / edge;
  const std::size_t n = cloud.size();

  std::vector<std::uint64_t> fine_keys(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Eigen::Vector3d rel = cloud.points[i] - pyr.bounds.min;
    std::uint32_t idx[3];
    for (int a = 0; a < 3; ++a) {
      auto k = static_cast<std::int64_t>(std::floor(rel[a] * inv_cell));
      k = std::clamp<std::int64_t>(k, 0, static_cast<std::int64_t>(cells) - 1);
      idx[a] = static_cast<std::uint32_t>(k);
    }
    fine_keys[i] = morton_encode(idx[0], idx[1], idx[2]);
  }

  pyr.point_order.resize(n);
  std::iota(pyr.point_order.begin(), pyr.point_order.end(), 0u);
  std::sort(pyr.point_order.begin(), pyr.point_order.end(),
            [&](std::uint32_t a, std::uint32_t b) {
              if (fine_keys[a] != fine_keys[b]) return fine_keys[a] < fine_keys[b];
              return a < b;
            });

  pyr.levels.resize(static_cast<std::size_t>(num_levels));
  for (int s = 1; s <= num_levels; ++s) {
    OctreeLevel& lvl = pyr.levels[static_cast<std::size_t>(s - 1)];
    lvl.depth = depth_finest - s + 1;
    const int shift = 3 * (s - 1);

    std::size_t run_start = 0;
    while (run_start < n) {
      const std::uint64_t key = fine_keys[pyr.point_order[run_start]] >> shift;
      std::size_t run_end = run_start + 1;
      while (run_end < n && (fine_keys[pyr.point_order[run_end]] >> shift) == key) ++run_end;

      Eigen::Vector3d sum = Eigen::Vector3d::Zero();
      for (std::size_t i = run_start; i < run_end; ++i)
        sum += cloud.points[pyr.point_order[i]];

      lvl.keys.push_back(key);
      lvl.centroids.push_back(sum / static_cast<double>(run_end - run_start));
      lvl.counts.push_back(static_cast<std::uint32_t>(run_end - run_start));
      lvl.range_begin.push_back(static_cast<std::uint32_t>(run_start));
      lvl.range_end.push_back(static_cast<std::uint32_t>(run_end));
      run_start = run_end;
    }
  }
  return pyr;
}

int parent_of(const OctreePyramid& pyr, int fine_level, int octant_index, int coarse_level) {
  if (fine_level < 1 || coarse_level <= fine_level || coarse_level > pyr.num_levels())
    throw InvalidArgument("index-out-of-range: need 1 <= fine_level < coarse_level <= S");
  const OctreeLevel& fine = pyr.level(fine_level);
  const OctreeLevel& coarse = pyr.level(coarse_level);
  if (octant_index < 0 || static_cast<std::size_t>(octant_index) >= fine.size())
    throw InvalidArgument("index-out-of-range: octant " + std::to_string(octant_index) +
                          " at level " + std::to_string(fine_level));

  const int shift = 3 * (fine.depth - coarse.depth);
  const std::uint64_t want = fine.keys[static_cast<std::size_t>(octant_index)] >> shift;
  const auto it = std::lower_bound(coarse.keys.begin(), coarse.keys.end(), want);
  if (it == coarse.keys.end() || *it != want)
    throw DataError("octree invariant violated: missing ancestor octant");
  return static_cast<int>(it - coarse.keys.begin());
}

std::vector<std::vector<int>> group_by_parent(const OctreePyramid& pyr,
                                              std::span<const int> coarse_indices) {
  const OctreeLevel& fine = pyr.finest();
  const OctreeLevel& coarse = pyr.coarsest();
  const int shift = 3 * (fine.depth - coarse.depth);

  std::vector<std::vector<int>> patches;
  patches.reserve(coarse_indices.size());
  for (const int ci : coarse_indices) {
    if (ci < 0 || static_cast<std::size_t>(ci) >= coarse.size())
      throw InvalidArgument("index-out-of-range: coarse octant " + std::to_string(ci));
    const std::uint64_t key = coarse.keys[static_cast<std::size_t>(ci)];
    const std::uint64_t lo = key << shift;
    const std::uint64_t hi = (key + 1) << shift;
    const auto begin = std::lower_bound(fine.keys.begin(), fine.keys.end(), lo);
    const auto end = std::lower_bound(begin, fine.keys.end(), hi);
    std::vector<int> patch;
    patch.reserve(static_cast<std::size_t>(end - begin));
    for (auto it = begin; it != end; ++it)
      patch.push_back(static_cast<int>(it - fine.keys.begin()));
    patches.push_back(std::move(patch));
  }
  return patches;
}

}  // namespace hierloc
