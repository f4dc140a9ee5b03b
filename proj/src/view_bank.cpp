#include "fribble/view_bank.hpp"

#include <algorithm>

namespace fribble {

ViewBank::ViewBank(const PartLibrary& lib, const HandModel& hand, double scale, int grid)
    : scale_(scale), grid_(grid) {
  for (std::size_t j = 0; j < kJointCount; ++j) gain_[j] = hand.joints[j].gain;
  const auto& views = viewpoint_grid();
  for (const auto& [id, spec] : lib.parts()) {
    const std::string ids[1] = {id};
    const VoxelObject solo = realize(ids, lib, scale, grid);
    PartViews pv;
    for (const auto& vp : views) {
      const VoxelObject r = rotate(solo, vp);
      pv.masks.push_back(silhouette_mask(r));
      pv.contact.push_back(contact_steps(r, hand));
    }
    parts_.emplace(id, std::move(pv));
  }
}

const ViewBank::PartViews& ViewBank::part(const std::string& id) const {
  const auto it = parts_.find(id);
  if (it == parts_.end()) throw RealizeError("unknown terminal '" + id + "'");
  return it->second;
}

std::vector<std::uint8_t> ViewBank::mask(std::span<const std::string> parts, int view) const {
  std::vector<std::uint8_t> out(static_cast<std::size_t>(grid_) * grid_, 0);
  for (const auto& id : parts) {
    const auto& m = part(id).masks.at(static_cast<std::size_t>(view));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] |= m[i];
  }
  return out;
}

GraspVector ViewBank::grasp(std::span<const std::string> parts, int view) const {
  std::array<int, kJointCount> steps{};
  bool first = true;
  for (const auto& id : parts) {
    const auto& c = part(id).contact.at(static_cast<std::size_t>(view));
    for (std::size_t j = 0; j < kJointCount; ++j) steps[j] = first ? c[j] : std::min(steps[j], c[j]);
    first = false;
  }
  if (first) throw std::invalid_argument("empty part set");
  GraspVector g;
  for (std::size_t j = 0; j < kJointCount; ++j) {
    g.angles[j] = std::clamp(gain_[j] * steps[j], 0.0, kMaxJointAngle);
  }
  return g;
}

std::vector<HogDescriptor> ViewBank::descriptors(std::span<const std::string> parts) const {
  std::vector<HogDescriptor> out;
  out.reserve(kViewCount);
  for (int v = 0; v < kViewCount; ++v) out.push_back(hog(silhouette_from_mask(mask(parts, v), grid_)));
  return out;
}

std::vector<GraspVector> ViewBank::grasps(std::span<const std::string> parts) const {
  std::vector<GraspVector> out;
  out.reserve(kViewCount);
  for (int v = 0; v < kViewCount; ++v) out.push_back(grasp(parts, v));
  return out;
}

}  // namespace fribble
