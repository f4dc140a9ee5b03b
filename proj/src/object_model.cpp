#include "fribble/object_model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "fribble/binary_io.hpp"

namespace fribble {
namespace {

constexpr double kMinScale = 0.1;
constexpr double kMaxScale = 2.0;
constexpr std::size_t kVoxelHeaderBytes = 16;

Vec3 vec_from_json(const nlohmann::json& j, const std::string& what) {
  if (!j.is_array() || j.size() != 3) {
    throw PartLibraryError(what + " must be a 3-element array");
  }
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json vec_to_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

std::vector<Vec3> default_offsets(const PartSpec& p) {
  std::vector<Vec3> offsets(static_cast<std::size_t>(p.instance_count));
  if (p.instance_count == 1) return offsets;
  int axis = 0;
  for (int a = 1; a < 3; ++a) {
    if (std::abs(p.location[a]) <= std::abs(p.location[axis])) axis = a;
  }
  const double spacing = 1.25 * p.dims[axis];
  for (int k = 0; k < p.instance_count; ++k) {
    const double t = (k - 0.5 * (p.instance_count - 1)) * spacing;
    Vec3& o = offsets[static_cast<std::size_t>(k)];
    (axis == 0 ? o.x : axis == 1 ? o.y : o.z) = t;
  }
  return offsets;
}

// Point-in-solid test in the primitive's local frame, centered at origin;
// `h` holds half extents.
bool inside(Primitive prim, const Vec3& l, const Vec3& h) {
  switch (prim) {
    case Primitive::kBox:
      return std::abs(l.x) <= h.x && std::abs(l.y) <= h.y && std::abs(l.z) <= h.z;
    case Primitive::kCylinder: {
      // axis along local y
      const double rx = l.x / h.x, rz = l.z / h.z;
      return std::abs(l.y) <= h.y && rx * rx + rz * rz <= 1.0;
    }
    case Primitive::kEllipsoid: {
      const double rx = l.x / h.x, ry = l.y / h.y, rz = l.z / h.z;
      return rx * rx + ry * ry + rz * rz <= 1.0;
    }
    case Primitive::kWedge: {
      // right-triangle prism: full height at -x, tapering to zero at +x
      if (std::abs(l.x) > h.x || std::abs(l.y) > h.y || std::abs(l.z) > h.z) return false;
      const double u = (l.x + h.x) / (2.0 * h.x);
      const double v = (l.y + h.y) / (2.0 * h.y);
      return v <= 1.0 - u;
    }
    case Primitive::kLBracket: {
      // bottom slab plus a -x upright, each 35% thick
      if (std::abs(l.x) > h.x || std::abs(l.y) > h.y || std::abs(l.z) > h.z) return false;
      const double u = (l.x + h.x) / (2.0 * h.x);
      const double v = (l.y + h.y) / (2.0 * h.y);
      return u <= 0.35 || v <= 0.35;
    }
  }
  return false;
}

void voxelize_instance(const PartSpec& part, int k, double scale, VoxelObject& out) {
  const Vec3 center = part.instance_center(k);
  const Mat3 rot = rotation_xyz(part.orientations[static_cast<std::size_t>(k)]);
  const Mat3 inv = rot.transposed();
  const Vec3 half = part.dims * 0.5;
  const double c = out.center();
  const int n = out.size();

  std::array<double, 3> lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 l{(corner & 1 ? 1 : -1) * half.x, (corner & 2 ? 1 : -1) * half.y,
                 (corner & 4 ? 1 : -1) * half.z};
    const Vec3 p = (center + rot * l) * scale;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a] + c);
      hi[a] = std::max(hi[a], p[a] + c);
    }
  }
  for (int a = 0; a < 3; ++a) {
    if (lo[a] < -0.5 || hi[a] > n - 0.5) {
      throw RealizeError("part " + part.id + " exceeds the " + std::to_string(n) +
                         "^3 grid at scale " + std::to_string(scale));
    }
  }
  std::array<int, 3> from{}, to{};
  for (int a = 0; a < 3; ++a) {
    from[a] = std::max(0, static_cast<int>(std::ceil(lo[a])));
    to[a] = std::min(n - 1, static_cast<int>(std::floor(hi[a])));
  }
  for (int z = from[2]; z <= to[2]; ++z) {
    for (int y = from[1]; y <= to[1]; ++y) {
      for (int x = from[0]; x <= to[0]; ++x) {
        const Vec3 world{(x - c) / scale, (y - c) / scale, (z - c) / scale};
        if (inside(part.primitive, inv * (world - center), half)) out.set(x, y, z);
      }
    }
  }
}

}  // namespace

std::string to_string(Primitive p) {
  switch (p) {
    case Primitive::kBox: return "box";
    case Primitive::kCylinder: return "cylinder";
    case Primitive::kEllipsoid: return "ellipsoid";
    case Primitive::kWedge: return "wedge";
    case Primitive::kLBracket: return "L-bracket";
  }
  return "box";
}

Primitive primitive_from_string(const std::string& s) {
  if (s == "box") return Primitive::kBox;
  if (s == "cylinder") return Primitive::kCylinder;
  if (s == "ellipsoid") return Primitive::kEllipsoid;
  if (s == "wedge") return Primitive::kWedge;
  if (s == "L-bracket") return Primitive::kLBracket;
  throw PartLibraryError("unknown primitive '" + s + "'");
}

Vec3 PartSpec::instance_center(int k) const {
  return location + offsets.at(static_cast<std::size_t>(k));
}

PartLibrary PartLibrary::from_json(const nlohmann::json& j) {
  PartLibrary lib;
  try {
    lib.trunk_ = j.at("trunk").get<std::string>();
    for (const auto& rec : j.at("parts")) {
      PartSpec p;
      p.id = rec.at("id").get<std::string>();
      p.primitive = primitive_from_string(rec.at("primitive").get<std::string>());
      p.dims = vec_from_json(rec.at("dims"), p.id + ".dims");
      p.location = vec_from_json(rec.at("location"), p.id + ".location");
      p.instance_count = rec.at("count").get<int>();
      if (p.instance_count < 1) throw PartLibraryError(p.id + ": count must be >= 1");
      if (p.dims.x <= 0 || p.dims.y <= 0 || p.dims.z <= 0) {
        throw PartLibraryError(p.id + ": dims must be positive");
      }
      for (const auto& o : rec.at("orientations")) {
        p.orientations.push_back(vec_from_json(o, p.id + ".orientations"));
      }
      if (p.orientations.size() != static_cast<std::size_t>(p.instance_count)) {
        throw PartLibraryError(p.id + ": orientations must have one entry per instance");
      }
      if (rec.contains("offsets")) {
        for (const auto& o : rec.at("offsets")) {
          p.offsets.push_back(vec_from_json(o, p.id + ".offsets"));
        }
        if (p.offsets.size() != p.orientations.size()) {
          throw PartLibraryError(p.id + ": offsets must have one entry per instance");
        }
      } else {
        p.offsets = default_offsets(p);
      }
      p.family = rec.value("family", -1);
      const auto id = p.id;
      if (!lib.parts_.emplace(id, std::move(p)).second) {
        throw PartLibraryError("duplicate part id " + id);
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw PartLibraryError(std::string("malformed part library: ") + e.what());
  }
  if (!lib.contains(lib.trunk_)) throw PartLibraryError("trunk part " + lib.trunk_ + " missing");
  return lib;
}

PartLibrary PartLibrary::load(const std::filesystem::path& path) {
  try {
    return from_json(nlohmann::json::parse(io::read_text(path)));
  } catch (const nlohmann::json::parse_error& e) {
    throw PartLibraryError(path.string() + ": " + e.what());
  }
}

nlohmann::json PartLibrary::to_json() const {
  nlohmann::json parts = nlohmann::json::array();
  for (const auto& [id, p] : parts_) {
    nlohmann::json rec;
    rec["id"] = id;
    rec["primitive"] = to_string(p.primitive);
    rec["dims"] = vec_to_json(p.dims);
    rec["location"] = vec_to_json(p.location);
    rec["count"] = p.instance_count;
    rec["orientations"] = nlohmann::json::array();
    for (const auto& o : p.orientations) rec["orientations"].push_back(vec_to_json(o));
    rec["offsets"] = nlohmann::json::array();
    for (const auto& o : p.offsets) rec["offsets"].push_back(vec_to_json(o));
    if (p.family >= 0) rec["family"] = p.family;
    parts.push_back(std::move(rec));
  }
  return {{"trunk", trunk_}, {"parts", parts}};
}

const PartSpec& PartLibrary::at(const std::string& id) const {
  const auto it = parts_.find(id);
  if (it == parts_.end()) throw RealizeError("unknown terminal " + id);
  return it->second;
}

void PartLibrary::check_covers(const Grammar& g) const {
  for (SymbolId t : g.symbols_of_kind(SymbolKind::kTerminal)) {
    if (!contains(g.symbol(t).name)) {
      throw PartLibraryError("no part spec for terminal " + g.symbol(t).name);
    }
  }
}

VoxelObject::VoxelObject(int size, double scale)
    : size_(size), scale_(scale), occ_(static_cast<std::size_t>(size) * size * size, 0) {
  if (size <= 0 || size > 65535) throw std::invalid_argument("voxel grid size out of range");
}

std::size_t VoxelObject::count() const {
  return static_cast<std::size_t>(std::count(occ_.begin(), occ_.end(), std::uint8_t{1}));
}

VoxelObject::Box VoxelObject::bounds() const {
  Box b;
  b.lo = {size_, size_, size_};
  b.hi = {-1, -1, -1};
  for (int z = 0; z < size_; ++z) {
    for (int y = 0; y < size_; ++y) {
      for (int x = 0; x < size_; ++x) {
        if (!at(x, y, z)) continue;
        const int p[3] = {x, y, z};
        for (int a = 0; a < 3; ++a) {
          b.lo[a] = std::min(b.lo[a], p[a]);
          b.hi[a] = std::max(b.hi[a], p[a]);
        }
      }
    }
  }
  if (b.hi[0] < 0) throw std::logic_error("bounds() of an empty voxel object");
  return b;
}

const std::vector<Viewpoint>& viewpoint_grid() {
  static const std::vector<Viewpoint> grid = [] {
    std::vector<Viewpoint> g;
    for (int h = 0; h < 9; ++h) {
      for (double pitch : {-25.0, 0.0, 25.0}) g.push_back(Viewpoint{40.0 * h, pitch, 0.0});
    }
    return g;
  }();
  return grid;
}

VoxelObject realize(std::span<const std::string> parts, const PartLibrary& lib, double scale,
                    int grid) {
  if (!(scale >= kMinScale && scale <= kMaxScale)) {
    throw RealizeError("scale " + std::to_string(scale) + " outside [0.1, 2.0]");
  }
  VoxelObject out(grid, scale);
  const std::set<std::string> unique(parts.begin(), parts.end());
  for (const auto& id : unique) {
    const PartSpec& part = lib.at(id);
    for (int k = 0; k < part.instance_count; ++k) voxelize_instance(part, k, scale, out);
  }
  return out;
}

VoxelObject rotate(const VoxelObject& v, const Viewpoint& vp) {
  VoxelObject out(v.size(), v.scale());
  if (v.empty()) return out;
  const Mat3 fwd = rotation_x(vp.pitch) * rotation_y(vp.heading);
  const Mat3 inv = fwd.transposed();
  const double c = v.center();
  const int n = v.size();

  // Only destination voxels whose preimage lands within half a voxel of the
  // source bounds can be occupied.
  const auto src = v.bounds();
  std::array<double, 3> lo{1e300, 1e300, 1e300}, hi{-1e300, -1e300, -1e300};
  for (int corner = 0; corner < 8; ++corner) {
    const Vec3 q{(corner & 1 ? src.hi[0] + 0.5 : src.lo[0] - 0.5) - c,
                 (corner & 2 ? src.hi[1] + 0.5 : src.lo[1] - 0.5) - c,
                 (corner & 4 ? src.hi[2] + 0.5 : src.lo[2] - 0.5) - c};
    const Vec3 p = fwd * q;
    for (int a = 0; a < 3; ++a) {
      lo[a] = std::min(lo[a], p[a] + c);
      hi[a] = std::max(hi[a], p[a] + c);
    }
  }
  std::array<int, 3> from{}, to{};
  for (int a = 0; a < 3; ++a) {
    from[a] = std::max(0, static_cast<int>(std::floor(lo[a])) - 1);
    to[a] = std::min(n - 1, static_cast<int>(std::ceil(hi[a])) + 1);
  }
  for (int z = from[2]; z <= to[2]; ++z) {
    for (int y = from[1]; y <= to[1]; ++y) {
      for (int x = from[0]; x <= to[0]; ++x) {
        const Vec3 s = inv * Vec3{x - c, y - c, z - c};
        const int sx = static_cast<int>(std::floor(s.x + c + 0.5));
        const int sy = static_cast<int>(std::floor(s.y + c + 0.5));
        const int sz = static_cast<int>(std::floor(s.z + c + 0.5));
        if (v.occupied(sx, sy, sz)) out.set(x, y, z);
      }
    }
  }
  return out;
}

double intersection_over_union(const VoxelObject& a, const VoxelObject& b) {
  if (a.size() != b.size()) throw std::invalid_argument("IoU of differently sized grids");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.data().size(); ++i) {
    inter += a.data()[i] & b.data()[i];
    uni += a.data()[i] | b.data()[i];
  }
  return uni == 0 ? 1.0 : static_cast<double>(inter) / static_cast<double>(uni);
}

std::vector<std::uint8_t> encode_voxels(const VoxelObject& v) {
  std::vector<std::uint8_t> out{'F', 'V', 'O', 'X'};
  const auto n = static_cast<std::uint16_t>(v.size());
  io::put_le(out, n);
  io::put_le(out, n);
  io::put_le(out, n);
  io::put_le(out, std::uint16_t{0});
  io::put_le(out, static_cast<float>(v.scale()));
  const auto& occ = v.data();
  out.resize(kVoxelHeaderBytes + (occ.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < occ.size(); ++i) {
    if (occ[i]) out[kVoxelHeaderBytes + i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  return out;
}

VoxelObject decode_voxels(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kVoxelHeaderBytes || bytes[0] != 'F' || bytes[1] != 'V' || bytes[2] != 'O' ||
      bytes[3] != 'X') {
    throw std::runtime_error("not a voxel file");
  }
  const auto nx = io::get_le<std::uint16_t>(bytes, 4);
  const auto ny = io::get_le<std::uint16_t>(bytes, 6);
  const auto nz = io::get_le<std::uint16_t>(bytes, 8);
  if (nx != ny || ny != nz) throw std::runtime_error("only cubic voxel grids are supported");
  const auto scale = io::get_le<float>(bytes, 12);
  VoxelObject v(nx, scale);
  const std::size_t total = static_cast<std::size_t>(nx) * ny * nz;
  if (bytes.size() != kVoxelHeaderBytes + (total + 7) / 8) {
    throw std::runtime_error("voxel payload size mismatch");
  }
  std::size_t i = 0;
  for (int z = 0; z < nz; ++z) {
    for (int y = 0; y < ny; ++y) {
      for (int x = 0; x < nx; ++x, ++i) {
        if (bytes[kVoxelHeaderBytes + i / 8] & (1u << (i % 8))) v.set(x, y, z);
      }
    }
  }
  return v;
}

void write_voxels(const VoxelObject& v, const std::filesystem::path& path) {
  io::write_file(path, encode_voxels(v));
}

VoxelObject read_voxels(const std::filesystem::path& path) {
  return decode_voxels(io::read_file(path));
}

}  // namespace fribble
