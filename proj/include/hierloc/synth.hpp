#pragma once

#include <cstdint>

#include "hierloc/point_cloud.hpp"

namespace hierloc {

enum class ViewpointModel { kGround, kAerial };

/// Parameters of one synthetic forest submap. Generation is fully
/// deterministic under seed: the scene layout (trees, ground undulation)
/// derives from the seed alone, while point sampling also folds in a view
/// salt so the same place can be re-observed with fresh samples.
struct SceneConfig {
  std::uint64_t seed = 0;
  double extent = 40.0;            // square side, metres; scene centred on origin
  int tree_count = 40;
  double trunk_radius_min = 0.15;  // metres
  double trunk_radius_max = 0.40;
  double trunk_height_min = 4.0;
  double trunk_height_max = 9.0;
  double canopy_density = 3.0;     // points per cubic metre of canopy
  double trunk_density = 14.0;     // points per square metre of trunk surface
  double ground_density = 0.6;     // points per square metre
  double ground_roughness = 0.08;  // metres
  double clutter_fraction = 0.03;  // fraction of structural points added as clutter
  ViewpointModel viewpoint = ViewpointModel::kGround;
  double occlusion_arc_deg = 0.0;  // [0, 360)
  double noise_sigma = 0.0;        // metres, per coordinate
};

void validate_config(const SceneConfig& cfg);

/// Deterministic synthetic submap: undulating ground, cylindrical trunks
/// at Poisson-disc positions, ellipsoidal canopies, uniform clutter, then
/// viewpoint culling (ground: range limit plus an angular occlusion
/// wedge; aerial: top-down density bias).
PointCloud synth_scene(const SceneConfig& cfg);

/// Same scene layout, different sampling stream. salt 0 is synth_scene.
PointCloud synth_scene_view(const SceneConfig& cfg, std::uint64_t view_salt);

struct ScenePair {
  PointCloud query;
  PointCloud target;
  RigidTransform t_true;  // maps query points onto target points
};

/// target is the scene itself; query is an independently re-sampled view
/// of the same scene with the given noise and occlusion applied, then
/// moved by the inverse of t_true, so registering query onto target
/// recovers t_true.
ScenePair make_pair(const SceneConfig& cfg, const RigidTransform& t_true, double noise_sigma,
                    double occlusion_arc_deg);

}  // namespace hierloc
