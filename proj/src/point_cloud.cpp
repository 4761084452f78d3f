#include "hierloc/point_cloud.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace hierloc {

using json = nlohmann::json;

Eigen::Matrix4d RigidTransform::matrix() const {
  Eigen::Matrix4d m = Eigen::Matrix4d::Identity();
  m.topLeftCorner<3, 3>() = rotation;
  m.topRightCorner<3, 1>() = translation;
  return m;
}

RigidTransform RigidTransform::from_matrix(const Eigen::Matrix4d& m) {
  RigidTransform t;
  t.rotation = m.topLeftCorner<3, 3>();
  t.translation = m.topRightCorner<3, 1>();
  return t;
}

bool is_valid_rotation(const Eigen::Matrix3d& rotation, double tol) {
  const Eigen::Matrix3d gram = rotation.transpose() * rotation;
  if (((gram - Eigen::Matrix3d::Identity()).array().abs() > tol).any()) return false;
  return std::abs(rotation.determinant() - 1.0) <= tol;
}

void validate_transform(const RigidTransform& t, double tol) {
  if (!t.rotation.allFinite() || !t.translation.allFinite())
    throw InvalidArgument("invalid-rotation: non-finite transform");
  if (!is_valid_rotation(t.rotation, tol))
    throw InvalidArgument("invalid-rotation: matrix is not in SO(3) within tolerance");
}

RigidTransform compose(const RigidTransform& a, const RigidTransform& b) {
  validate_transform(a);
  validate_transform(b);
  RigidTransform out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  return out;
}

RigidTransform invert(const RigidTransform& t) {
  validate_transform(t);
  RigidTransform out;
  out.rotation = t.rotation.transpose();
  out.translation = -(out.rotation * t.translation);
  return out;
}

Eigen::Matrix3d rotation_about_z(double angle_rad) {
  const double c = std::cos(angle_rad);
  const double s = std::sin(angle_rad);
  Eigen::Matrix3d r;
  r << c, -s, 0.0, s, c, 0.0, 0.0, 0.0, 1.0;
  return r;
}

namespace {

void check_finite(const PointCloud& cloud, const std::filesystem::path& path) {
  for (std::size_t i = 0; i < cloud.points.size(); ++i) {
    if (!cloud.points[i].allFinite())
      throw ParseError("non-finite coordinate in " + path.string(), i + 1);
  }
}

struct PlyHeader {
  bool binary = false;
  std::size_t vertex_count = 0;
  std::size_t header_lines = 0;
  std::size_t header_bytes = 0;
};

PlyHeader parse_ply_header(std::istream& in, const std::filesystem::path& path) {
  PlyHeader h;
  std::string line;
  std::size_t line_no = 0;
  bool saw_format = false;
  bool saw_vertex = false;
  bool in_vertex_element = false;
  int xyz_seen = 0;

  auto fail = [&](const std::string& msg) -> void {
    throw ParseError("parse-error in " + path.string() + ": " + msg, line_no);
  };

  if (!std::getline(in, line)) fail("empty file");
  ++line_no;
  if (line == "ply\r") line.pop_back();
  if (line != "ply") fail("missing ply magic");

  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ls(line);
    std::string tok;
    ls >> tok;
    if (tok == "format") {
      std::string fmt;
      ls >> fmt;
      if (fmt == "ascii")
        h.binary = false;
      else if (fmt == "binary_little_endian")
        h.binary = true;
      else
        fail("unsupported format '" + fmt + "'");
      saw_format = true;
    } else if (tok == "element") {
      std::string name;
      std::size_t count = 0;
      ls >> name >> count;
      if (name == "vertex") {
        h.vertex_count = count;
        saw_vertex = true;
        in_vertex_element = true;
      } else {
        if (count != 0) fail("unsupported element '" + name + "'");
        in_vertex_element = false;
      }
    } else if (tok == "property") {
      std::string type, name;
      ls >> type >> name;
      if (in_vertex_element) {
        if (name == "x" || name == "y" || name == "z") {
          if (type != "float" && type != "float32") fail("property " + name + " must be float32");
          ++xyz_seen;
        } else {
          fail("unsupported vertex property '" + name + "'");
        }
      }
    } else if (tok == "comment" || tok == "obj_info") {
      // ignored
    } else if (tok == "end_header") {
      if (!saw_format) fail("missing format line");
      if (!saw_vertex) fail("missing vertex element");
      if (xyz_seen != 3) fail("vertex element must declare float x, y, z");
      h.header_lines = line_no;
      h.header_bytes = static_cast<std::size_t>(in.tellg());
      return h;
    } else if (!tok.empty()) {
      fail("unexpected header token '" + tok + "'");
    }
  }
  fail("missing end_header");
  return h;  // unreachable
}

PointCloud load_ply(const std::filesystem::path& path, bool expect_binary) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("io-error: cannot open " + path.string());
  const PlyHeader h = parse_ply_header(in, path);
  if (h.binary != expect_binary)
    throw ParseError("parse-error in " + path.string() + ": header format does not match requested format",
                     h.header_lines);

  PointCloud cloud;
  cloud.id = path.stem().string();
  cloud.points.reserve(h.vertex_count);

  if (h.binary) {
    for (std::size_t i = 0; i < h.vertex_count; ++i) {
      float xyz[3];
      in.read(reinterpret_cast<char*>(xyz), sizeof(xyz));
      if (!in)
        throw ParseError("parse-error in " + path.string() + ": truncated vertex data", 0,
                         h.header_bytes + i * sizeof(xyz));
      cloud.points.emplace_back(xyz[0], xyz[1], xyz[2]);
    }
  } else {
    std::string line;
    std::size_t line_no = h.header_lines;
    for (std::size_t i = 0; i < h.vertex_count; ++i) {
      if (!std::getline(in, line))
        throw ParseError("parse-error in " + path.string() + ": expected " +
                             std::to_string(h.vertex_count) + " vertices, file ended after " +
                             std::to_string(i),
                         line_no);
      ++line_no;
      std::istringstream ls(line);
      double x, y, z;
      if (!(ls >> x >> y >> z))
        throw ParseError("parse-error in " + path.string() + ": malformed vertex record", line_no);
      cloud.points.emplace_back(x, y, z);
    }
  }

  if (cloud.empty()) throw DataError("empty-cloud: " + path.string());
  check_finite(cloud, path);
  return cloud;
}

PointCloud load_xyz(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("io-error: cannot open " + path.string());
  PointCloud cloud;
  cloud.id = path.stem().string();
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    // skip blank lines and # comments
    const auto first = line.find_first_not_of(" \t");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    double x, y, z;
    if (!(ls >> x >> y >> z))
      throw ParseError("parse-error in " + path.string() + ": malformed record", line_no);
    std::string extra;
    if (ls >> extra)
      throw ParseError("parse-error in " + path.string() + ": trailing tokens", line_no);
    cloud.points.emplace_back(x, y, z);
  }
  if (cloud.empty()) throw DataError("empty-cloud: " + path.string());
  check_finite(cloud, path);
  return cloud;
}

void write_ply_header(std::ostream& out, std::size_t count, bool binary) {
  out << "ply\n";
  out << (binary ? "format binary_little_endian 1.0\n" : "format ascii 1.0\n");
  out << "element vertex " << count << "\n";
  out << "property float x\nproperty float y\nproperty float z\n";
  out << "end_header\n";
}

}  // namespace

PointCloud load_cloud(const std::filesystem::path& path, CloudFormat format) {
  if (!std::filesystem::exists(path)) throw IoError("io-error: no such file " + path.string());
  switch (format) {
    case CloudFormat::kPlyAscii:
      return load_ply(path, /*expect_binary=*/false);
    case CloudFormat::kPlyBinaryLE:
      return load_ply(path, /*expect_binary=*/true);
    case CloudFormat::kXyzText:
      return load_xyz(path);
  }
  throw InvalidArgument("unknown cloud format");
}

void save_cloud(const PointCloud& cloud, const std::filesystem::path& path, CloudFormat format) {
  if (cloud.empty()) throw DataError("empty-cloud: refusing to write " + path.string());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("io-error: cannot write " + path.string());

  switch (format) {
    case CloudFormat::kPlyAscii: {
      write_ply_header(out, cloud.size(), false);
      out.precision(9);
      for (const auto& p : cloud.points) out << float(p.x()) << " " << float(p.y()) << " " << float(p.z()) << "\n";
      break;
    }
    case CloudFormat::kPlyBinaryLE: {
      write_ply_header(out, cloud.size(), true);
      for (const auto& p : cloud.points) {
        const float xyz[3] = {float(p.x()), float(p.y()), float(p.z())};
        out.write(reinterpret_cast<const char*>(xyz), sizeof(xyz));
      }
      break;
    }
    case CloudFormat::kXyzText: {
      out.precision(17);
      for (const auto& p : cloud.points) out << p.x() << " " << p.y() << " " << p.z() << "\n";
      break;
    }
  }
  if (!out) throw IoError("io-error: short write to " + path.string());
}

PointCloud load_cloud_auto(const std::filesystem::path& path) {
  const std::string ext = path.extension().string();
  if (ext == ".xyz" || ext == ".txt") return load_cloud(path, CloudFormat::kXyzText);
  if (ext == ".ply") {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("io-error: cannot open " + path.string());
    std::string line;
    bool binary = false;
    while (std::getline(in, line)) {
      if (line.rfind("format", 0) == 0) {
        binary = line.find("binary_little_endian") != std::string::npos;
        break;
      }
      if (line.rfind("end_header", 0) == 0) break;
    }
    return load_cloud(path, binary ? CloudFormat::kPlyBinaryLE : CloudFormat::kPlyAscii);
  }
  throw InvalidArgument("cannot infer cloud format from extension '" + ext + "'");
}

namespace {

// 21 bits per axis interleaved into a 63-bit z-order key.
std::uint64_t interleave3(std::uint64_t v) {
  v &= 0x1FFFFF;
  v = (v | v << 32) & 0x1F00000000FFFFull;
  v = (v | v << 16) & 0x1F0000FF0000FFull;
  v = (v | v << 8) & 0x100F00F00F00F00Full;
  v = (v | v << 4) & 0x10C30C30C30C30C3ull;
  v = (v | v << 2) & 0x1249249249249249ull;
  return v;
}

std::uint64_t zorder_key(std::int64_t ix, std::int64_t iy, std::int64_t iz) {
  return interleave3(static_cast<std::uint64_t>(ix)) |
         (interleave3(static_cast<std::uint64_t>(iy)) << 1) |
         (interleave3(static_cast<std::uint64_t>(iz)) << 2);
}

}  // namespace

PointCloud voxel_downsample(const PointCloud& cloud, double voxel) {
  if (!(voxel > 0.0) || !std::isfinite(voxel))
    throw InvalidArgument("invalid-voxel: voxel size must be positive, got " + std::to_string(voxel));
  if (cloud.empty()) throw DataError("empty-cloud: voxel_downsample");

  Eigen::Vector3d lo = cloud.points.front();
  for (const auto& p : cloud.points) lo = lo.cwiseMin(p);
  const Eigen::Array3d anchor(std::floor(lo.x() / voxel), std::floor(lo.y() / voxel),
                              std::floor(lo.z() / voxel));

  struct Cell {
    Eigen::Vector3d sum = Eigen::Vector3d::Zero();
    std::size_t count = 0;
  };
  std::map<std::uint64_t, Cell> cells;

  for (const auto& p : cloud.points) {
    std::int64_t idx[3];
    for (int a = 0; a < 3; ++a) {
      const std::int64_t k =
          static_cast<std::int64_t>(std::floor(p[a] / voxel) - anchor[a]);
      if (k < 0 || k >= (std::int64_t{1} << 21))
        throw InvalidArgument("invalid-voxel: grid exceeds 2^21 cells per axis; voxel too small");
      idx[a] = k;
    }
    Cell& c = cells[zorder_key(idx[0], idx[1], idx[2])];
    c.sum += p;
    c.count += 1;
  }

  PointCloud out;
  out.id = cloud.id;
  out.points.reserve(cells.size());
  for (const auto& [key, cell] : cells)
    out.points.push_back(cell.sum / static_cast<double>(cell.count));
  return out;
}

PointCloud apply_transform(const PointCloud& cloud, const RigidTransform& t) {
  validate_transform(t);
  PointCloud out;
  out.id = cloud.id;
  out.points.reserve(cloud.size());
  for (const auto& p : cloud.points) out.points.push_back(t.apply(p));
  return out;
}

void save_pose_json(const RigidTransform& t, const std::filesystem::path& path) {
  const Eigen::Matrix4d m = t.matrix();
  json rows = json::array();
  for (int r = 0; r < 4; ++r) {
    json row = json::array();
    for (int c = 0; c < 4; ++c) row.push_back(m(r, c));
    rows.push_back(row);
  }
  std::ofstream out(path);
  if (!out) throw IoError("io-error: cannot write " + path.string());
  out << rows.dump(2) << "\n";
}

RigidTransform load_pose_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("io-error: cannot open " + path.string());
  json rows;
  try {
    in >> rows;
  } catch (const json::exception& e) {
    throw ParseError("parse-error in " + path.string() + ": " + e.what());
  }
  if (!rows.is_array() || rows.size() != 4)
    throw ParseError("parse-error in " + path.string() + ": expected 4x4 matrix");
  Eigen::Matrix4d m;
  for (int r = 0; r < 4; ++r) {
    if (!rows[r].is_array() || rows[r].size() != 4)
      throw ParseError("parse-error in " + path.string() + ": expected 4x4 matrix");
    for (int c = 0; c < 4; ++c) m(r, c) = rows[r][c].get<double>();
  }
  RigidTransform t = RigidTransform::from_matrix(m);
  validate_transform(t, 1e-6);
  return t;
}

}  // namespace hierloc
