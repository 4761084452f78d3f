#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <span>
#include <vector>

#include "hierloc/octree.hpp"

namespace hierloc {

struct DescriptorConfig {
  /// Output dimension per level, finest first. Raw features are
  /// zero-padded up to this.
  std::vector<int> dims = {32, 32, 32};
  /// Support radius per level as a multiple of the level's octant edge,
  /// measured from the octant centroid. <= 0 means exact octant members.
  std::vector<double> radius_multipliers = {1.0, 1.0, 1.0};
  /// Generalised-mean exponent for the global aggregation.
  double pooling_exponent = 3.0;
};

void validate_config(const DescriptorConfig& cfg, int num_levels);

/// Raw local feature length before padding: 3 eigenvalue shape ratios,
/// 3 surface-normal components, 3 height statistics, point density, and
/// an 8-bin azimuthal occupancy histogram.
inline constexpr int kLocalFeatureLength = 18;

/// Unit-norm geometric descriptor of one octant's support points.
/// Covariance-derived blocks are zero-filled below 3 points. dim >=
/// kLocalFeatureLength pads with zeros.
Eigen::VectorXd local_descriptor(std::span<const Eigen::Vector3d> member_points,
                                 double octant_edge, int dim = kLocalFeatureLength);

/// Features of one pyramid level. descriptors is K x d, one row per
/// octant, in the level's canonical (Morton) order.
struct FeatureLevel {
  std::vector<Eigen::Vector3d> centroids;
  Eigen::MatrixXd descriptors;

  std::size_t size() const { return centroids.size(); }
  int dim() const { return static_cast<int>(descriptors.cols()); }
};

struct FeaturePyramid {
  std::vector<FeatureLevel> levels;  // finest first, matching OctreePyramid
  Eigen::VectorXd global;            // L2-normalised, dim = sum of level dims

  int num_levels() const { return static_cast<int>(levels.size()); }
  const FeatureLevel& level(int s) const { return levels.at(static_cast<std::size_t>(s - 1)); }
  const FeatureLevel& finest() const { return levels.front(); }
  const FeatureLevel& coarsest() const { return levels.back(); }
};

/// One descriptor per occupied octant per level plus the pooled global.
/// The pyramid must have been built from this cloud.
FeaturePyramid extract_pyramid(const PointCloud& cloud, const OctreePyramid& pyr,
                               const DescriptorConfig& cfg);

/// Per level: generalised mean over the level's descriptors (sign-aware
/// so odd behaviour on negative components is avoided; exponent 1 is the
/// arithmetic mean). Levels are concatenated and L2-normalised.
Eigen::VectorXd aggregate_global(const FeaturePyramid& features, double exponent);

/// Everything downstream stages need about one cloud: the octree level
/// structure (keys give the fine-to-coarse ancestry) and the features.
struct PyramidBundle {
  OctreePyramid pyramid;   // point ranges are dropped on serialisation
  FeaturePyramid features;
};

/// Versioned little-endian binary container.
void save_bundle(const PyramidBundle& bundle, const std::filesystem::path& path);
PyramidBundle load_bundle(const std::filesystem::path& path);

}  // namespace hierloc
