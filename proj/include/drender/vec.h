#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <type_traits>

// Small fixed-size vector/matrix types, templated on the scalar so the same
// geometry code runs on plain doubles, dual numbers, and tape variables.

namespace drender {

template <class T>
struct Vec2 {
    T x{}, y{};
    Vec2() = default;
    Vec2(T x_, T y_) : x(x_), y(y_) {}
};

template <class T>
struct Vec3 {
    T x{}, y{}, z{};
    Vec3() = default;
    Vec3(T x_, T y_, T z_) : x(x_), y(y_), z(z_) {}
};

template <class T>
struct Vec4 {
    T x{}, y{}, z{}, w{};
    Vec4() = default;
    Vec4(T x_, T y_, T z_, T w_) : x(x_), y(y_), z(z_), w(w_) {}
};

using Vec2d = Vec2<double>;
using Vec3d = Vec3<double>;
using Vec4d = Vec4<double>;
using Vec2i = Vec2<int>;
using Vec3i = Vec3<int>;

// clang-format off
template <class T> Vec2<T> operator+(const Vec2<T>& a, const Vec2<T>& b) { return {a.x + b.x, a.y + b.y}; }
template <class T> Vec2<T> operator-(const Vec2<T>& a, const Vec2<T>& b) { return {a.x - b.x, a.y - b.y}; }
template <class T> Vec2<T> operator*(const Vec2<T>& a, const T& s) { return {a.x * s, a.y * s}; }
template <class T> Vec2<T> operator*(const T& s, const Vec2<T>& a) { return a * s; }

template <class T> Vec3<T> operator+(const Vec3<T>& a, const Vec3<T>& b) { return {a.x + b.x, a.y + b.y, a.z + b.z}; }
template <class T> Vec3<T> operator-(const Vec3<T>& a, const Vec3<T>& b) { return {a.x - b.x, a.y - b.y, a.z - b.z}; }
template <class T> Vec3<T> operator-(const Vec3<T>& a) { return {-a.x, -a.y, -a.z}; }
template <class T> Vec3<T> operator*(const Vec3<T>& a, const T& s) { return {a.x * s, a.y * s, a.z * s}; }
template <class T> Vec3<T> operator*(const T& s, const Vec3<T>& a) { return a * s; }
template <class T> Vec3<T> operator*(const Vec3<T>& a, const Vec3<T>& b) { return {a.x * b.x, a.y * b.y, a.z * b.z}; }
template <class T> Vec3<T> operator/(const Vec3<T>& a, const T& s) { return {a.x / s, a.y / s, a.z / s}; }
template <class T> Vec3<T>& operator+=(Vec3<T>& a, const Vec3<T>& b) { a.x += b.x; a.y += b.y; a.z += b.z; return a; }

template <class T> Vec4<T> operator+(const Vec4<T>& a, const Vec4<T>& b) { return {a.x + b.x, a.y + b.y, a.z + b.z, a.w + b.w}; }
template <class T> Vec4<T> operator-(const Vec4<T>& a, const Vec4<T>& b) { return {a.x - b.x, a.y - b.y, a.z - b.z, a.w - b.w}; }
template <class T> Vec4<T> operator*(const Vec4<T>& a, const T& s) { return {a.x * s, a.y * s, a.z * s, a.w * s}; }
template <class T> Vec4<T> operator*(const T& s, const Vec4<T>& a) { return a * s; }
template <class T> Vec4<T> operator/(const Vec4<T>& a, const T& s) { return {a.x / s, a.y / s, a.z / s, a.w / s}; }
template <class T> Vec4<T>& operator+=(Vec4<T>& a, const Vec4<T>& b) { a.x += b.x; a.y += b.y; a.z += b.z; a.w += b.w; return a; }
template <class T> T dot(const Vec4<T>& a, const Vec4<T>& b) { return a.x * b.x + a.y * b.y + a.z * b.z + a.w * b.w; }
// clang-format on

inline double value(double x) { return x; }  // see autodiff.h for Dual/Rev

// lift double-valued vectors into the generic scalar type
template <class T>
Vec2<T> to_vec2(const Vec2d& v) {
    return {T(v.x), T(v.y)};
}
template <class T>
Vec3<T> to_vec3(const Vec3d& v) {
    return {T(v.x), T(v.y), T(v.z)};
}
template <class T>
Vec2d value_of(const Vec2<T>& v) {
    return {value(v.x), value(v.y)};
}
template <class T>
Vec3d value_of(const Vec3<T>& v) {
    return {value(v.x), value(v.y), value(v.z)};
}
template <class T>
Vec4<T> to_vec4(const Vec4d& v) {
    return {T(v.x), T(v.y), T(v.z), T(v.w)};
}
template <class T>
Vec4d value_of(const Vec4<T>& v) {
    return {value(v.x), value(v.y), value(v.z), value(v.w)};
}

// mixed double scalar, for generic code where T != double
template <class T>
    requires(!std::is_same_v<T, double>)
Vec2<T> operator*(const Vec2<T>& a, double s) {
    return {a.x * T(s), a.y * T(s)};
}
template <class T>
    requires(!std::is_same_v<T, double>)
Vec3<T> operator*(const Vec3<T>& a, double s) {
    return {a.x * T(s), a.y * T(s), a.z * T(s)};
}
template <class T>
    requires(!std::is_same_v<T, double>)
Vec4<T> operator*(const Vec4<T>& a, double s) {
    return {a.x * T(s), a.y * T(s), a.z * T(s), a.w * T(s)};
}

template <class T>
T dot(const Vec2<T>& a, const Vec2<T>& b) {
    return a.x * b.x + a.y * b.y;
}
template <class T>
T dot(const Vec3<T>& a, const Vec3<T>& b) {
    return a.x * b.x + a.y * b.y + a.z * b.z;
}
template <class T>
Vec3<T> cross(const Vec3<T>& a, const Vec3<T>& b) {
    return {a.y * b.z - a.z * b.y, a.z * b.x - a.x * b.z, a.x * b.y - a.y * b.x};
}
template <class T>
T length_squared(const Vec3<T>& a) {
    return dot(a, a);
}
template <class T>
T length(const Vec3<T>& a) {
    using std::sqrt;
    return sqrt(dot(a, a));
}
template <class T>
Vec3<T> normalized(const Vec3<T>& a) {
    return a / length(a);
}
template <class T>
Vec3<T> lerp(const Vec3<T>& a, const Vec3<T>& b, const T& t) {
    return a + (b - a) * t;
}

// 3x3 matrix, row-major
template <class T>
struct Mat3 {
    std::array<T, 9> m{};

    static Mat3 identity() {
        Mat3 r;
        r.m = {T(1), T(0), T(0), T(0), T(1), T(0), T(0), T(0), T(1)};
        return r;
    }
    T& operator()(int r, int c) { return m[r * 3 + c]; }
    const T& operator()(int r, int c) const { return m[r * 3 + c]; }
};

using Mat3d = Mat3<double>;

template <class T>
Vec3<T> operator*(const Mat3<T>& a, const Vec3<T>& v) {
    return {a.m[0] * v.x + a.m[1] * v.y + a.m[2] * v.z,
            a.m[3] * v.x + a.m[4] * v.y + a.m[5] * v.z,
            a.m[6] * v.x + a.m[7] * v.y + a.m[8] * v.z};
}

template <class T>
Mat3<T> operator*(const Mat3<T>& a, const Mat3<T>& b) {
    Mat3<T> r;
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++)
            r(i, j) = a(i, 0) * b(0, j) + a(i, 1) * b(1, j) + a(i, 2) * b(2, j);
    return r;
}

template <class T>
Mat3<T> transposed(const Mat3<T>& a) {
    Mat3<T> r;
    for (int i = 0; i < 3; i++)
        for (int j = 0; j < 3; j++) r(i, j) = a(j, i);
    return r;
}

// multiply a T-vector by a constant double matrix
template <class T>
Vec3<T> mul(const Mat3d& a, const Vec3<T>& v) {
    return {T(a.m[0]) * v.x + T(a.m[1]) * v.y + T(a.m[2]) * v.z,
            T(a.m[3]) * v.x + T(a.m[4]) * v.y + T(a.m[5]) * v.z,
            T(a.m[6]) * v.x + T(a.m[7]) * v.y + T(a.m[8]) * v.z};
}

}  // namespace drender
