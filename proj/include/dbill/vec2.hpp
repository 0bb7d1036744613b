#pragma once
/**
 * @file vec2.hpp
 * @brief Minimal 2D vector and 2x2 matrix used by the billiard geometry.
 *
 * Points on the table and tangent vectors of the phase space both use these
 * types. Callers own tolerances.
 */

#include <array>
#include <cmath>
#include <numbers>

namespace dbill {

inline constexpr double kPi = std::numbers::pi;
inline constexpr double kHalfPi = std::numbers::pi / 2.0;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

struct Vec2 {
    double x{0.0};
    double y{0.0};

    constexpr Vec2() = default;
    constexpr Vec2(double X, double Y) : x(X), y(Y) {}

    constexpr Vec2 operator+(const Vec2& r) const { return {x + r.x, y + r.y}; }
    constexpr Vec2 operator-(const Vec2& r) const { return {x - r.x, y - r.y}; }
    constexpr Vec2 operator-() const { return {-x, -y}; }
    constexpr Vec2 operator*(double s) const { return {x * s, y * s}; }
    friend constexpr Vec2 operator*(double s, const Vec2& v) { return {v.x * s, v.y * s}; }
    constexpr Vec2 operator/(double s) const { return {x / s, y / s}; }
    Vec2& operator+=(const Vec2& r) { x += r.x; y += r.y; return *this; }
    Vec2& operator-=(const Vec2& r) { x -= r.x; y -= r.y; return *this; }

    constexpr double dot(const Vec2& r) const { return x * r.x + y * r.y; }
    /// z-component of the 3D cross product; > 0 when r is counterclockwise of *this.
    constexpr double cross(const Vec2& r) const { return x * r.y - y * r.x; }
    double norm() const { return std::hypot(x, y); }
    constexpr double norm2() const { return x * x + y * y; }
    Vec2 normalized() const {
        const double n = norm();
        return n > 0.0 ? Vec2{x / n, y / n} : Vec2{};
    }
    /// Counterclockwise rotation by 90 degrees.
    constexpr Vec2 perp() const { return {-y, x}; }
    double angle() const { return std::atan2(y, x); }

    constexpr bool operator==(const Vec2&) const = default;
};

inline Vec2 unit_from_angle(double a) { return {std::cos(a), std::sin(a)}; }

/// Specular reflection across a unit normal: v - 2 (v.n) n.
constexpr Vec2 reflect_across(const Vec2& v, const Vec2& n_hat) {
    return v - n_hat * (2.0 * v.dot(n_hat));
}

/// Wrap an angle into [0, 2pi).
inline double wrap_two_pi(double a) {
    a = std::fmod(a, kTwoPi);
    if (a < 0.0) a += kTwoPi;
    if (a >= kTwoPi) a -= kTwoPi;
    return a;
}

/// Counterclockwise angle from a to b in [0, 2pi).
inline double ccw_angle(const Vec2& a, const Vec2& b) {
    return wrap_two_pi(std::atan2(a.cross(b), a.dot(b)));
}

/// Row-major 2x2 matrix acting on (dr, dphi) tangent vectors.
struct Mat2 {
    std::array<double, 4> m{1.0, 0.0, 0.0, 1.0};

    constexpr Mat2() = default;
    constexpr Mat2(double a, double b, double c, double d) : m{a, b, c, d} {}

    constexpr double operator()(int i, int j) const { return m[2 * i + j]; }
    constexpr double det() const { return m[0] * m[3] - m[1] * m[2]; }
    constexpr Vec2 operator*(const Vec2& v) const {
        return {m[0] * v.x + m[1] * v.y, m[2] * v.x + m[3] * v.y};
    }
    constexpr Mat2 operator*(const Mat2& o) const {
        return {m[0] * o.m[0] + m[1] * o.m[2], m[0] * o.m[1] + m[1] * o.m[3],
                m[2] * o.m[0] + m[3] * o.m[2], m[2] * o.m[1] + m[3] * o.m[3]};
    }
    Mat2 inverse() const {
        const double d = det();
        return {m[3] / d, -m[1] / d, -m[2] / d, m[0] / d};
    }
};

}  // namespace dbill
