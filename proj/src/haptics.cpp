#include "fribble/haptics.hpp"

#include <algorithm>
#include <cmath>

#include "fribble/binary_io.hpp"
#include "fribble/view_bank.hpp"

namespace fribble {
namespace {

constexpr std::array<const char*, kJointCount> kJointNames = {
    "index_mcp",  "index_pip",  "index_dip",  "middle_mcp", "middle_pip", "middle_dip",
    "ring_mcp",   "ring_pip",   "ring_dip",   "little_mcp", "little_pip", "little_dip",
    "thumb_mcp",  "thumb_ip",   "spread",     "wrist"};

Vec3 vec(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != 3) throw std::runtime_error("hand model: expected 3-vector");
  return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

nlohmann::json vec_json(const Vec3& v) { return nlohmann::json::array({v.x, v.y, v.z}); }

}  // namespace

HandModel HandModel::standard(int grid) {
  HandModel hand;
  const double c = 0.5 * (grid - 1);
  const double k = grid / 64.0;
  const int travel = static_cast<int>(std::lround(24 * k));
  hand.palm_origin = {c, c + 14 * k, c};
  auto set = [&](int i, Vec3 offset, Vec3 dir) {
    JointRay& ray = hand.joints[static_cast<std::size_t>(i)];
    ray.name = kJointNames[static_cast<std::size_t>(i)];
    ray.origin = Vec3{c, c, c} + offset * k;
    ray.direction = dir * (1.0 / dir.norm());
    ray.max_travel = travel;
    ray.gain = kMaxJointAngle / travel;
  };
  // Fingers hang over +x and curl in toward the trunk; the thumb opposes from -x.
  const double finger_z[4] = {-12.0, -4.0, 4.0, 12.0};
  for (int f = 0; f < 4; ++f) {
    set(3 * f, {6, 14, finger_z[f]}, {0, -1, 0});
    set(3 * f + 1, {14, 10, finger_z[f]}, {-0.5, -0.87, 0});
    set(3 * f + 2, {18, 2, finger_z[f]}, {-1, -0.2, 0});
  }
  set(12, {-14, 10, 0}, {0.5, -0.87, 0});
  set(13, {-18, 2, 0}, {1, -0.2, 0});
  set(14, {0, 4, 18}, {0, -0.2, -1});
  set(15, {0, 14, 0}, {0, -1, 0});
  return hand;
}

HandModel HandModel::from_json(const nlohmann::json& j) {
  HandModel hand;
  try {
    hand.palm_origin = vec(j.at("palm").at("origin"));
    hand.palm_normal = vec(j.at("palm").at("normal"));
    const auto& joints = j.at("joints");
    if (joints.size() != kJointCount) {
      throw std::runtime_error("hand model must define exactly 16 joints");
    }
    for (std::size_t i = 0; i < kJointCount; ++i) {
      JointRay& r = hand.joints[i];
      r.name = joints[i].at("name").get<std::string>();
      r.origin = vec(joints[i].at("origin"));
      r.direction = vec(joints[i].at("direction"));
      r.gain = joints[i].at("gain").get<double>();
      r.max_travel = joints[i].at("max_travel").get<int>();
      const double len = r.direction.norm();
      if (len == 0.0) throw std::runtime_error("joint " + r.name + " has a zero direction");
      if (std::abs(len - 1.0) > 1e-12) r.direction = r.direction * (1.0 / len);
      if (r.gain < 0.0 || r.max_travel < 0) {
        throw std::runtime_error("joint " + r.name + " has negative gain or travel");
      }
    }
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed hand model: ") + e.what());
  }
  return hand;
}

HandModel HandModel::load(const std::filesystem::path& path) {
  return from_json(nlohmann::json::parse(io::read_text(path)));
}

nlohmann::json HandModel::to_json() const {
  nlohmann::json joints = nlohmann::json::array();
  for (const auto& r : this->joints) {
    joints.push_back({{"name", r.name},
                      {"origin", vec_json(r.origin)},
                      {"direction", vec_json(r.direction)},
                      {"gain", r.gain},
                      {"max_travel", r.max_travel}});
  }
  return {{"palm", {{"origin", vec_json(palm_origin)}, {"normal", vec_json(palm_normal)}}},
          {"joints", joints}};
}

std::array<int, kJointCount> contact_steps(const VoxelObject& v, const HandModel& hand) {
  std::array<int, kJointCount> out{};
  for (std::size_t i = 0; i < kJointCount; ++i) {
    const JointRay& r = hand.joints[i];
    int free = r.max_travel;
    for (int k = 0; k < r.max_travel; ++k) {
      const Vec3 p = r.origin + r.direction * static_cast<double>(k);
      if (v.occupied(static_cast<int>(std::floor(p.x + 0.5)), static_cast<int>(std::floor(p.y + 0.5)),
                     static_cast<int>(std::floor(p.z + 0.5)))) {
        free = k;
        break;
      }
    }
    out[i] = free;
  }
  return out;
}

GraspVector grasp(const VoxelObject& v, const HandModel& hand) {
  const auto steps = contact_steps(v, hand);
  GraspVector out;
  for (std::size_t i = 0; i < kJointCount; ++i) {
    out.angles[i] = std::clamp(hand.joints[i].gain * steps[i], 0.0, kMaxJointAngle);
  }
  return out;
}

double cosine_similarity(const GraspVector& a, const GraspVector& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < kJointCount; ++i) {
    dot += a.angles[i] * b.angles[i];
    na += a.angles[i] * a.angles[i];
    nb += b.angles[i] * b.angles[i];
  }
  if (na == 0.0 && nb == 0.0) return 1.0;
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / std::sqrt(na * nb), 0.0, 1.0);
}

std::vector<GraspVector> view_grasps(const VoxelObject& hypothesis, const HandModel& hand) {
  std::vector<GraspVector> out;
  out.reserve(kViewCount);
  for (const auto& vp : viewpoint_grid()) out.push_back(grasp(rotate(hypothesis, vp), hand));
  return out;
}

double haptic_likelihood(const GraspVector& observed, std::span<const GraspVector> candidates) {
  double best = 0.0;
  for (const auto& g : candidates) best = std::max(best, cosine_similarity(observed, g));
  return best;
}

double haptic_likelihood(const GraspVector& observed, const VoxelObject& hypothesis,
                         const HandModel& hand) {
  return haptic_likelihood(observed, view_grasps(hypothesis, hand));
}

std::vector<std::uint8_t> encode_grasp(const GraspVector& g) {
  std::vector<std::uint8_t> out;
  for (double a : g.angles) io::put_le(out, a);
  return out;
}

void write_grasp(const GraspVector& g, const std::filesystem::path& path) {
  io::write_file(path, encode_grasp(g));
}

GraspVector read_grasp(const std::filesystem::path& path) {
  const auto bytes = io::read_file(path);
  if (bytes.size() != kJointCount * sizeof(double)) {
    throw std::runtime_error("grasp file must hold 16 doubles: " + path.string());
  }
  GraspVector g;
  for (std::size_t i = 0; i < kJointCount; ++i) g.angles[i] = io::get_le<double>(bytes, i * 8);
  return g;
}

}  // namespace fribble
