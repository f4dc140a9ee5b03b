#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "fribble/geometry.hpp"
#include "fribble/grammar.hpp"

namespace fribble {

enum class Primitive { kBox, kCylinder, kEllipsoid, kWedge, kLBracket };

std::string to_string(Primitive p);
Primitive primitive_from_string(const std::string& s);

// Realization of one terminal: a primitive solid placed relative to the
// trunk center, possibly as several instances (an aggregate part). Lengths
// are in unscaled voxel units.
struct PartSpec {
  std::string id;
  Primitive primitive = Primitive::kBox;
  Vec3 dims;      // full extents along the primitive's local axes
  Vec3 location;  // part center relative to trunk center
  int instance_count = 1;
  std::vector<Vec3> orientations;  // one Euler triple (degrees) per instance
  std::vector<Vec3> offsets;       // per-instance offset from location
  int family = -1;                 // category style hint; -1 when unassigned

  // Center of instance k (location + offsets[k]).
  Vec3 instance_center(int k) const;
};

class PartLibraryError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Part library JSON:
//   { "trunk": "P5",
//     "parts": [ { "id": "P4", "primitive": "cylinder", "dims": [16,40,16],
//                  "location": [40,0,0], "count": 2,
//                  "orientations": [[0,0,0],[0,0,0]],
//                  "offsets": [[0,0,-12],[0,0,12]],      (optional)
//                  "family": 0 },                          (optional)
//                ... ] }
//
// Without "offsets", instances of an aggregate part are spaced evenly along
// the axis on which `location` has the smallest magnitude (the last such
// axis on ties), 1.25 part-extents apart, centered on `location`.
class PartLibrary {
 public:
  static PartLibrary from_json(const nlohmann::json& j);
  static PartLibrary load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  const PartSpec& at(const std::string& id) const;
  bool contains(const std::string& id) const { return parts_.count(id) != 0; }
  const std::string& trunk() const { return trunk_; }
  const std::map<std::string, PartSpec>& parts() const { return parts_; }

  // Every terminal of `g` must have a spec. Throws PartLibraryError.
  void check_covers(const Grammar& g) const;

 private:
  std::map<std::string, PartSpec> parts_;
  std::string trunk_;
};

// Cubic boolean occupancy grid. Voxel (x, y, z) has its center at integer
// coordinates; the grid center, (n - 1) / 2 on each axis, coincides with
// the trunk center of a realized object. y is up.
class VoxelObject {
 public:
  static constexpr int kDefaultSize = 64;

  explicit VoxelObject(int size = kDefaultSize, double scale = 1.0);

  int size() const { return size_; }
  double scale() const { return scale_; }
  double center() const { return 0.5 * (size_ - 1); }

  bool in_bounds(int x, int y, int z) const {
    return x >= 0 && y >= 0 && z >= 0 && x < size_ && y < size_ && z < size_;
  }
  bool at(int x, int y, int z) const { return occ_[index(x, y, z)] != 0; }
  // Out-of-bounds reads are empty.
  bool occupied(int x, int y, int z) const { return in_bounds(x, y, z) && at(x, y, z); }
  void set(int x, int y, int z, bool v = true) { occ_[index(x, y, z)] = v ? 1 : 0; }

  std::size_t count() const;
  bool empty() const { return count() == 0; }

  // Inclusive bounds of occupied voxels; {min, max} per axis. Requires !empty().
  struct Box {
    std::array<int, 3> lo{}, hi{};
    int extent(int axis) const { return hi[axis] - lo[axis] + 1; }
  };
  Box bounds() const;

  const std::vector<std::uint8_t>& data() const { return occ_; }

  bool operator==(const VoxelObject& o) const { return size_ == o.size_ && occ_ == o.occ_; }

 private:
  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * size_ + y) * size_ + x;
  }

  int size_;
  double scale_;
  std::vector<std::uint8_t> occ_;
};

struct Viewpoint {
  double heading = 0.0;  // about y
  double pitch = 0.0;    // about x
  double roll = 0.0;     // never applied

  bool operator==(const Viewpoint&) const = default;
};

inline constexpr int kViewCount = 27;

// 9 headings (0, 40, ..., 320) x 3 pitches (-25, 0, 25); headings ascending,
// pitches ascending within a heading.
const std::vector<Viewpoint>& viewpoint_grid();

class RealizeError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Union of the voxelized parts at `scale` (in [0.1, 2.0]). Repeated
// terminals overlay. Throws RealizeError on unknown terminals, a scale out
// of range, or a part that leaves the grid.
VoxelObject realize(std::span<const std::string> parts, const PartLibrary& lib, double scale,
                    int grid = VoxelObject::kDefaultSize);

// Rotates occupancy about the grid center, heading first then pitch, by
// nearest-neighbor inverse mapping. Voxels mapped from outside are empty.
VoxelObject rotate(const VoxelObject& v, const Viewpoint& vp);

double intersection_over_union(const VoxelObject& a, const VoxelObject& b);

// Raw occupancy export: 16-byte header {"FVOX", u16 nx, u16 ny, u16 nz,
// u16 0, f32 scale} (little-endian), then bits x-fastest, LSB first.
void write_voxels(const VoxelObject& v, const std::filesystem::path& path);
VoxelObject read_voxels(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_voxels(const VoxelObject& v);
VoxelObject decode_voxels(std::span<const std::uint8_t> bytes);

}  // namespace fribble
