#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <string>
#include <vector>

#include "hierloc/errors.hpp"

namespace hierloc {

/// Ordered set of 3D points in metres. Immutable by convention once built;
/// all operations below return new clouds.
struct PointCloud {
  std::vector<Eigen::Vector3d> points;
  std::string id;

  std::size_t size() const { return points.size(); }
  bool empty() const { return points.empty(); }
};

/// Rotation in SO(3) plus translation in metres.
struct RigidTransform {
  Eigen::Matrix3d rotation = Eigen::Matrix3d::Identity();
  Eigen::Vector3d translation = Eigen::Vector3d::Zero();

  Eigen::Vector3d apply(const Eigen::Vector3d& p) const { return rotation * p + translation; }

  Eigen::Matrix4d matrix() const;
  static RigidTransform from_matrix(const Eigen::Matrix4d& m);
};

/// True when R'R = I and det(R) = +1, both within tol elementwise.
bool is_valid_rotation(const Eigen::Matrix3d& rotation, double tol = 1e-9);

/// Throws InvalidArgument("invalid-rotation ...") when the invariants fail.
void validate_transform(const RigidTransform& t, double tol = 1e-9);

/// compose(a, b) applies b first, then a.
RigidTransform compose(const RigidTransform& a, const RigidTransform& b);
RigidTransform invert(const RigidTransform& t);

/// Convenience rotation about +z by angle (radians).
Eigen::Matrix3d rotation_about_z(double angle_rad);

enum class CloudFormat { kPlyAscii, kPlyBinaryLE, kXyzText };

/// Loads a cloud. Binary PLY is little-endian with float32 x,y,z
/// properties; internal representation is always double.
PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format);

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format);

/// Picks the format from the extension and, for .ply, the header.
PointCloud load_cloud_auto(const std::filesystem::path& path);

/// One output point per occupied voxel, placed at the centroid of that
/// voxel's input points. The grid is anchored to absolute multiples of the
/// voxel size (keys floor(p/voxel) shifted by the cloud minimum corner's
/// cell) so repeated downsampling is a fixed point. Output ordered by
/// z-order voxel key.
PointCloud voxel_downsample(const PointCloud& cloud, double voxel);

/// Applies T to every point, preserving order.
PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t);

/// Poses interchange as 4x4 row-major homogeneous matrices in JSON arrays.
void save_pose_json(const RigidTransform& t, const std::filesystem::path& path);
RigidTransform load_pose_json(const std::filesystem::path& path);

}  // namespace hierloc
