#pragma once

#include <cmath>

namespace rek {

/// Cartesian point or displacement in meters. z is height above ground.
struct Point3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    constexpr Point3& operator+=(const Point3& o) { x += o.x; y += o.y; z += o.z; return *this; }
    constexpr Point3& operator-=(const Point3& o) { x -= o.x; y -= o.y; z -= o.z; return *this; }
    constexpr Point3& operator*=(double s) { x *= s; y *= s; z *= s; return *this; }

    constexpr double operator[](int axis) const { return axis == 0 ? x : (axis == 1 ? y : z); }
    constexpr double& operator[](int axis) { return axis == 0 ? x : (axis == 1 ? y : z); }

    friend constexpr bool operator==(const Point3&, const Point3&) = default;
};

using Vec3 = Point3;

constexpr Point3 operator+(Point3 a, const Point3& b) { return a += b; }
constexpr Point3 operator-(Point3 a, const Point3& b) { return a -= b; }
constexpr Point3 operator-(const Point3& a) { return {-a.x, -a.y, -a.z}; }
constexpr Point3 operator*(Point3 a, double s) { return a *= s; }
constexpr Point3 operator*(double s, Point3 a) { return a *= s; }
constexpr Point3 operator/(const Point3& a, double s) { return {a.x / s, a.y / s, a.z / s}; }

constexpr double dot(const Vec3& a, const Vec3& b) { return a.x * b.x + a.y * b.y + a.z * b.z; }

constexpr Vec3 cross(const Vec3& a, const Vec3& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}

inline double norm(const Vec3& v) { return std::sqrt(dot(v, v)); }

inline double distance(const Point3& a, const Point3& b) { return norm(a - b); }

/// Distance measured in the ground plane only.
inline double horizontal_distance(const Point3& a, const Point3& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

inline Vec3 normalized(const Vec3& v) { return v / norm(v); }

inline bool is_finite(const Point3& p) {
    return std::isfinite(p.x) && std::isfinite(p.y) && std::isfinite(p.z);
}

}  // namespace rek
