#pragma once

#include <array>
#include <cmath>
#include <numbers>

namespace fribble {

struct Vec3 {
  double x = 0.0, y = 0.0, z = 0.0;

  constexpr double operator[](int i) const { return i == 0 ? x : (i == 1 ? y : z); }
  constexpr Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
  constexpr Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
  constexpr Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
  constexpr double dot(const Vec3& o) const { return x * o.x + y * o.y + z * o.z; }
  double norm() const { return std::sqrt(dot(*this)); }
  bool operator==(const Vec3&) const = default;
};

// Row-major 3x3 matrix.
struct Mat3 {
  std::array<double, 9> m{1, 0, 0, 0, 1, 0, 0, 0, 1};

  constexpr Vec3 operator*(const Vec3& v) const {
    return {m[0] * v.x + m[1] * v.y + m[2] * v.z, m[3] * v.x + m[4] * v.y + m[5] * v.z,
            m[6] * v.x + m[7] * v.y + m[8] * v.z};
  }
  constexpr Mat3 operator*(const Mat3& o) const {
    Mat3 r;
    for (int i = 0; i < 3; ++i) {
      for (int j = 0; j < 3; ++j) {
        double s = 0.0;
        for (int k = 0; k < 3; ++k) s += m[i * 3 + k] * o.m[k * 3 + j];
        r.m[i * 3 + j] = s;
      }
    }
    return r;
  }
  constexpr Mat3 transposed() const {
    return Mat3{{m[0], m[3], m[6], m[1], m[4], m[7], m[2], m[5], m[8]}};
  }
};

inline double radians(double deg) { return deg * std::numbers::pi / 180.0; }

// Right-handed rotations; y is up.
inline Mat3 rotation_x(double deg) {
  const double c = std::cos(radians(deg)), s = std::sin(radians(deg));
  return Mat3{{1, 0, 0, 0, c, -s, 0, s, c}};
}
inline Mat3 rotation_y(double deg) {
  const double c = std::cos(radians(deg)), s = std::sin(radians(deg));
  return Mat3{{c, 0, s, 0, 1, 0, -s, 0, c}};
}
inline Mat3 rotation_z(double deg) {
  const double c = std::cos(radians(deg)), s = std::sin(radians(deg));
  return Mat3{{c, -s, 0, s, c, 0, 0, 0, 1}};
}

// Euler triple applied about x, then y, then z (fixed axes).
inline Mat3 rotation_xyz(const Vec3& deg) {
  return rotation_z(deg.z) * rotation_y(deg.y) * rotation_x(deg.x);
}

}  // namespace fribble
