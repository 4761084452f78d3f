#include "hierloc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "hierloc/rng.hpp"

namespace hierloc {

void validate_config(const SceneConfig& cfg) {
  auto positive = [](double v) { return v > 0.0 && std::isfinite(v); };
  if (!positive(cfg.extent)) throw InvalidArgument("invalid-config: extent must be positive");
  if (cfg.tree_count < 0) throw InvalidArgument("invalid-config: tree_count must be >= 0");
  if (!positive(cfg.trunk_radius_min) || cfg.trunk_radius_max < cfg.trunk_radius_min)
    throw InvalidArgument("invalid-config: trunk radius range");
  if (!positive(cfg.trunk_height_min) || cfg.trunk_height_max < cfg.trunk_height_min)
    throw InvalidArgument("invalid-config: trunk height range");
  if (cfg.canopy_density < 0.0 || cfg.trunk_density < 0.0 || cfg.ground_density < 0.0)
    throw InvalidArgument("invalid-config: densities must be >= 0");
  if (cfg.ground_roughness < 0.0) throw InvalidArgument("invalid-config: ground_roughness");
  if (cfg.clutter_fraction < 0.0 || cfg.clutter_fraction > 1.0)
    throw InvalidArgument("invalid-config: clutter_fraction in [0, 1]");
  if (cfg.occlusion_arc_deg < 0.0 || cfg.occlusion_arc_deg >= 360.0)
    throw InvalidArgument("invalid-config: occlusion arc in [0, 360)");
  if (cfg.noise_sigma < 0.0) throw InvalidArgument("invalid-config: noise_sigma");
}

namespace {

struct Tree {
  double x = 0.0, y = 0.0;
  double radius = 0.2;
  double height = 6.0;
  double canopy_rx = 1.5, canopy_ry = 1.5, canopy_rz = 1.2;
};

struct GroundModel {
  // Two low-frequency sinusoid products; amplitude = roughness.
  double ax[2], ay[2], px[2], py[2], amp[2];

  double height(double x, double y) const {
    double z = 0.0;
    for (int i = 0; i < 2; ++i)
      z += amp[i] * std::sin(ax[i] * x + px[i]) * std::sin(ay[i] * y + py[i]);
    return z;
  }
};

struct SceneLayout {
  std::vector<Tree> trees;
  GroundModel ground;
};

/// Tree placement and terrain derive from the seed only, so every view of
/// the same seed observes the same place.
SceneLayout build_layout(const SceneConfig& cfg) {
  Rng rng = Rng(cfg.seed).fork(0x5ce9e);
  SceneLayout layout;

  for (int i = 0; i < 2; ++i) {
    layout.ground.ax[i] = rng.uniform(0.1, 0.5);
    layout.ground.ay[i] = rng.uniform(0.1, 0.5);
    layout.ground.px[i] = rng.uniform(0.0, 2.0 * M_PI);
    layout.ground.py[i] = rng.uniform(0.0, 2.0 * M_PI);
    layout.ground.amp[i] = cfg.ground_roughness * (i == 0 ? 1.0 : 0.5);
  }

  // Poisson-disc by dart throwing.
  const double half = cfg.extent / 2.0;
  const double min_sep =
      cfg.tree_count > 0 ? 0.7 * cfg.extent / std::sqrt(static_cast<double>(cfg.tree_count)) : 0.0;
  int attempts = 0;
  const int max_attempts = cfg.tree_count * 200 + 1000;
  while (static_cast<int>(layout.trees.size()) < cfg.tree_count && attempts < max_attempts) {
    ++attempts;
    const double x = rng.uniform(-half, half);
    const double y = rng.uniform(-half, half);
    bool ok = true;
    for (const auto& t : layout.trees) {
      const double dx = t.x - x, dy = t.y - y;
      if (dx * dx + dy * dy < min_sep * min_sep) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;
    Tree t;
    t.x = x;
    t.y = y;
    t.radius = rng.uniform(cfg.trunk_radius_min, cfg.trunk_radius_max);
    t.height = rng.uniform(cfg.trunk_height_min, cfg.trunk_height_max);
    t.canopy_rx = rng.uniform(1.0, 2.2);
    t.canopy_ry = rng.uniform(1.0, 2.2);
    t.canopy_rz = rng.uniform(0.8, 1.6);
    layout.trees.push_back(t);
  }
  return layout;
}

}  // namespace

PointCloud synth_scene_view(const SceneConfig& cfg, std::uint64_t view_salt) {
  validate_config(cfg);
  const SceneLayout layout = build_layout(cfg);
  Rng rng = Rng(cfg.seed).fork(0xA11CE + view_salt);

  PointCloud cloud;
  const double half = cfg.extent / 2.0;

  // Ground.
  const auto ground_count =
      static_cast<std::size_t>(cfg.ground_density * cfg.extent * cfg.extent);
  for (std::size_t i = 0; i < ground_count; ++i) {
    const double x = rng.uniform(-half, half);
    const double y = rng.uniform(-half, half);
    const double z = layout.ground.height(x, y) + rng.normal(0.0, cfg.ground_roughness * 0.25);
    cloud.points.emplace_back(x, y, z);
  }

  // Trunks and canopies.
  for (const auto& tree : layout.trees) {
    const double base = layout.ground.height(tree.x, tree.y);
    const double surface = 2.0 * M_PI * tree.radius * tree.height;
    const auto trunk_count = static_cast<std::size_t>(cfg.trunk_density * surface);
    for (std::size_t i = 0; i < trunk_count; ++i) {
      const double theta = rng.uniform(0.0, 2.0 * M_PI);
      const double h = rng.uniform(0.0, tree.height);
      const double r = tree.radius * (1.0 + rng.normal(0.0, 0.03));
      cloud.points.emplace_back(tree.x + r * std::cos(theta), tree.y + r * std::sin(theta),
                                base + h);
    }

    const double volume = 4.0 / 3.0 * M_PI * tree.canopy_rx * tree.canopy_ry * tree.canopy_rz;
    const auto canopy_count = static_cast<std::size_t>(cfg.canopy_density * volume);
    const double cz = base + tree.height;
    for (std::size_t i = 0; i < canopy_count; ++i) {
      // Rejection-sample the unit ball, then stretch to the ellipsoid.
      double ux, uy, uz;
      do {
        ux = rng.uniform(-1.0, 1.0);
        uy = rng.uniform(-1.0, 1.0);
        uz = rng.uniform(-1.0, 1.0);
      } while (ux * ux + uy * uy + uz * uz > 1.0);
      cloud.points.emplace_back(tree.x + tree.canopy_rx * ux, tree.y + tree.canopy_ry * uy,
                                cz + tree.canopy_rz * uz);
    }
  }

  // Clutter: uniform shrub-height points.
  const auto clutter_count =
      static_cast<std::size_t>(cfg.clutter_fraction * static_cast<double>(cloud.size()));
  for (std::size_t i = 0; i < clutter_count; ++i) {
    const double x = rng.uniform(-half, half);
    const double y = rng.uniform(-half, half);
    cloud.points.emplace_back(x, y, layout.ground.height(x, y) + rng.uniform(0.0, 2.5));
  }

  // Viewpoint culling.
  // Ground scans keep a circular footprint so the bounding cube (and with
  // it the octree cell size) is stable under z-rotations of the scene.
  PointCloud culled;
  culled.id = cloud.id;
  if (cfg.viewpoint == ViewpointModel::kGround) {
    const double max_range = 0.5 * cfg.extent;
    const double arc = cfg.occlusion_arc_deg * M_PI / 180.0;
    const double arc_start = rng.uniform(0.0, 2.0 * M_PI);
    for (const auto& p : cloud.points) {
      const double range = std::hypot(p.x(), p.y());
      if (range > max_range) continue;
      if (arc > 0.0) {
        double azimuth = std::atan2(p.y(), p.x()) - arc_start;
        azimuth -= 2.0 * M_PI * std::floor(azimuth / (2.0 * M_PI));
        if (azimuth < arc) continue;
      }
      culled.points.push_back(p);
    }
  } else {
    double zmin = cloud.points.empty() ? 0.0 : cloud.points[0].z();
    double zmax = zmin;
    for (const auto& p : cloud.points) {
      zmin = std::min(zmin, p.z());
      zmax = std::max(zmax, p.z());
    }
    const double span = std::max(zmax - zmin, 1e-9);
    for (const auto& p : cloud.points) {
      const double keep = 0.2 + 0.8 * (p.z() - zmin) / span;
      if (rng.uniform() < keep) culled.points.push_back(p);
    }
  }

  if (cfg.noise_sigma > 0.0)
    for (auto& p : culled.points)
      p += Eigen::Vector3d(rng.normal(0.0, cfg.noise_sigma), rng.normal(0.0, cfg.noise_sigma),
                           rng.normal(0.0, cfg.noise_sigma));

  if (culled.empty()) throw DataError("empty-cloud: scene culling removed every point");
  return culled;
}

PointCloud synth_scene(const SceneConfig& cfg) { return synth_scene_view(cfg, 0); }

ScenePair make_pair(const SceneConfig& cfg, const RigidTransform& t_true, double noise_sigma,
                    double occlusion_arc_deg) {
  validate_transform(t_true);
  ScenePair pair;
  pair.t_true = t_true;
  pair.target = synth_scene_view(cfg, 0);

  SceneConfig query_cfg = cfg;
  query_cfg.noise_sigma = noise_sigma;
  query_cfg.occlusion_arc_deg = occlusion_arc_deg;
  const PointCloud view = synth_scene_view(query_cfg, 1);
  pair.query = apply_transform(view, invert(t_true));
  return pair;
}

}  // namespace hierloc
