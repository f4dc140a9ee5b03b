#pragma once

#include <array>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "fribble/geometry.hpp"
#include "fribble/object_model.hpp"

namespace fribble {

inline constexpr int kJointCount = 16;
inline constexpr double kMaxJointAngle = 90.0;

// Joint angles in degrees, each in [0, 90].
struct GraspVector {
  std::array<double, kJointCount> angles{};

  bool operator==(const GraspVector&) const = default;
};

// One closing joint, modeled as a ray marched through the grid from its
// origin (voxel coordinates) along a unit direction. The joint closes by
// `gain` degrees per voxel of free travel, up to `max_travel` voxels.
struct JointRay {
  std::string name;
  Vec3 origin;
  Vec3 direction;
  double gain = 0.0;
  int max_travel = 0;
};

// Deterministic stand-in for a simulated robot hand: 4 fingers x 3 joints,
// 2 thumb joints, spread and wrist. The palm sits above the object facing
// -y; fingers wrap down over +x, the thumb over -x.
struct HandModel {
  Vec3 palm_origin;
  Vec3 palm_normal{0.0, -1.0, 0.0};
  std::array<JointRay, kJointCount> joints;

  static HandModel from_json(const nlohmann::json& j);
  static HandModel load(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // The shipped configuration for a cubic grid of side `grid` (offsets are
  // laid out for 64 and scaled). Full closure, 90 degrees, takes 24 voxels
  // of free travel.
  static HandModel standard(int grid = VoxelObject::kDefaultSize);
};

GraspVector grasp(const VoxelObject& v, const HandModel& hand);

// Cosine similarity in [0, 1]. Two all-zero vectors are identical (1); an
// all-zero vector against a nonzero one scores 0.
double cosine_similarity(const GraspVector& a, const GraspVector& b);

// Grasp vectors of the hypothesis at each grid viewpoint.
std::vector<GraspVector> view_grasps(const VoxelObject& hypothesis, const HandModel& hand);

// Best cosine similarity of `observed` against any candidate.
double haptic_likelihood(const GraspVector& observed, std::span<const GraspVector> candidates);
double haptic_likelihood(const GraspVector& observed, const VoxelObject& hypothesis,
                         const HandModel& hand);

// 16 little-endian f64 angles.
void write_grasp(const GraspVector& g, const std::filesystem::path& path);
GraspVector read_grasp(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_grasp(const GraspVector& g);

}  // namespace fribble
