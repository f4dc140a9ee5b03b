#pragma once

#include <array>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "fribble/haptics.hpp"
#include "fribble/object_model.hpp"
#include "fribble/vision.hpp"

namespace fribble {

// Per-part renderings at every grid viewpoint. Both rotation and the sensory
// readouts distribute over a union of parts (silhouette masks OR together,
// joint contact distances take the minimum), so the views of any part set
// are assembled from the bank without touching a 3-D grid. Results are
// identical to realize -> rotate -> project/grasp. Immutable once built.
class ViewBank {
 public:
  ViewBank(const PartLibrary& lib, const HandModel& hand, double scale = 0.3,
           int grid = VoxelObject::kDefaultSize);

  double scale() const { return scale_; }
  int grid() const { return grid_; }

  std::vector<std::uint8_t> mask(std::span<const std::string> parts, int view) const;
  GraspVector grasp(std::span<const std::string> parts, int view) const;

  std::vector<HogDescriptor> descriptors(std::span<const std::string> parts) const;
  std::vector<GraspVector> grasps(std::span<const std::string> parts) const;

 private:
  struct PartViews {
    std::vector<std::vector<std::uint8_t>> masks;           // per view
    std::vector<std::array<int, kJointCount>> contact;      // per view, free travel
  };
  const PartViews& part(const std::string& id) const;

  double scale_;
  int grid_;
  std::array<double, kJointCount> gain_{};
  std::map<std::string, PartViews> parts_;
};

// First occupied step of each joint ray, or max_travel on a clean pass.
std::array<int, kJointCount> contact_steps(const VoxelObject& v, const HandModel& hand);

}  // namespace fribble
