#pragma once

#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "drender/autodiff.h"
#include "drender/vec.h"

// Scene parameters: surfaces, cameras, textures, rigid poses, and the
// screen-space projection. Everything on the differentiable path is templated
// on the scalar type; plain-double storage holds the current parameter values.

namespace drender {

// ---------------------------------------------------------------------------
// surfaces

struct TriangleMesh {
    std::vector<Vec3d> positions;
    std::vector<Vec3d> normals;    // optional, per vertex
    std::vector<Vec2d> texcoords;  // optional, per vertex
    std::vector<Vec3d> colors;     // optional, per vertex
    std::vector<Vec3i> triangles;
};

struct BSplineSurface {
    int m = 0, n = 0;           // control grid size (u- and v-direction)
    std::vector<Vec3d> control; // row-major, index i*n + j
    bool periodic_u = false;
    bool periodic_v = false;

    const Vec3d& at(int i, int j) const { return control[size_t(i) * n + j]; }
    Vec3d& at(int i, int j) { return control[size_t(i) * n + j]; }
    int patches_u() const { return periodic_u ? m : m - 3; }
    int patches_v() const { return periodic_v ? n : n - 3; }
};

// uniform cubic B-spline basis at parameter u in [0,1]
template <class T>
void bspline_basis(const T& u, T w[4]) {
    T u2 = u * u, u3 = u2 * u;
    w[0] = (T(1.0) - u) * (T(1.0) - u) * (T(1.0) - u) * (1.0 / 6.0);
    w[1] = (u3 * 3.0 - u2 * 6.0 + T(4.0)) * (1.0 / 6.0);
    w[2] = (u3 * -3.0 + u2 * 3.0 + u * 3.0 + T(1.0)) * (1.0 / 6.0);
    w[3] = u3 * (1.0 / 6.0);
}

// derivative of the basis w.r.t. u (local patch units)
template <class T>
void bspline_deriv(const T& u, T w[4]) {
    T u2 = u * u;
    w[0] = (T(1.0) - u) * (T(1.0) - u) * -0.5;
    w[1] = (u2 * 3.0 - u * 4.0) * 0.5;
    w[2] = (u2 * -3.0 + u * 2.0 + T(1.0)) * 0.5;
    w[3] = u2 * 0.5;
}

// patch (pi, pj) evaluated at local (u, v); control(i, j) -> Vec3<T> supplies
// the (possibly differentiable) control points, wrap handled here
template <class T, class Ctrl>
Vec3<T> bspline_point(const BSplineSurface& s, const Ctrl& control, int pi, int pj,
                      double u, double v) {
    double bu[4], bv[4];
    bspline_basis(u, bu);
    bspline_basis(v, bv);
    Vec3<T> p{T(0.0), T(0.0), T(0.0)};
    for (int a = 0; a < 4; a++) {
        int i = s.periodic_u ? (pi + a) % s.m : pi + a;
        for (int b = 0; b < 4; b++) {
            int j = s.periodic_v ? (pj + b) % s.n : pj + b;
            p += control(i, j) * (bu[a] * bv[b]);
        }
    }
    return p;
}

struct ImplicitGrid {
    int nx = 0, ny = 0, nz = 0;
    std::vector<double> values;  // index (z*ny + y)*nx + x
    Vec3d origin{-1, -1, -1};
    Vec3d spacing{1, 1, 1};
    double tau = 0;

    double at(int x, int y, int z) const {
        return values[(size_t(z) * ny + y) * nx + x];
    }
    Vec3d lattice_to_world(int x, int y, int z) const {
        return {origin.x + spacing.x * x, origin.y + spacing.y * y,
                origin.z + spacing.z * z};
    }
};

// torus: sphere of radius r1 swept along a circle of radius r2
struct SweptSphere {
    Vec3d center{0, 0, 0};
    Vec3d axis{0, 0, 1};  // unit ring-plane normal
    double r2 = 0.7, r1 = 0.25;

    int n_params() const { return 2; }
    std::vector<double> params() const { return {r2, r1}; }

    template <class T>
    T eval(std::span<const T> p, const Vec3d& q) const {
        using std::sqrt;
        Vec3d d = q - center;
        double z = dot(d, axis);
        Vec3d radial = d - axis * z;
        double rho = length(radial);
        T dr = T(rho) - p[0];
        return sqrt(dr * dr + T(z * z)) - p[1];
    }
};

// union of spheres, exact min of per-sphere SDFs; centers may be constrained
// to a plane (2 free coordinates per center) or free in 3-D
struct SphereUnion {
    std::vector<Vec3d> centers;
    std::vector<double> radii;
    bool planar = false;   // if set, center z stays fixed and is not a parameter
    int per() const { return planar ? 3 : 4; }
    int n_params() const { return int(centers.size()) * per(); }

    std::vector<double> params() const {
        std::vector<double> p;
        p.reserve(n_params());
        for (size_t i = 0; i < centers.size(); i++) {
            p.push_back(centers[i].x);
            p.push_back(centers[i].y);
            if (!planar) p.push_back(centers[i].z);
            p.push_back(radii[i]);
        }
        return p;
    }

    // index of the sphere attaining the min at q, decided on plain values
    int select(std::span<const double> p, const Vec3d& q) const {
        int best = 0;
        double best_v = 1e300;
        int k = per();
        for (int i = 0; i < int(centers.size()); i++) {
            double cx = p[size_t(i) * k + 0], cy = p[size_t(i) * k + 1];
            double cz = planar ? centers[i].z : p[size_t(i) * k + 2];
            double r = p[size_t(i) * k + (planar ? 2 : 3)];
            Vec3d d{q.x - cx, q.y - cy, q.z - cz};
            double v = length(d) - r;
            if (v < best_v) {
                best_v = v;
                best = i;
            }
        }
        return best;
    }

    template <class T>
    T eval(std::span<const T> p, const Vec3d& q) const {
        using std::sqrt;
        std::vector<double> pv(p.size());
        for (size_t i = 0; i < p.size(); i++) pv[i] = value(p[i]);
        int i = select(pv, q);
        int k = per();
        T cx = p[size_t(i) * k + 0], cy = p[size_t(i) * k + 1];
        T cz = planar ? T(centers[i].z) : p[size_t(i) * k + 2];
        T r = p[size_t(i) * k + (planar ? 2 : 3)];
        Vec3<T> d{T(q.x) - cx, T(q.y) - cy, T(q.z) - cz};
        return sqrt(dot(d, d)) - r;
    }
};

// evaluates an analytic field onto every lattice point of a grid
template <class Field>
ImplicitGrid field_to_grid(const Field& field, int nx, int ny, int nz,
                           const Vec3d& origin, const Vec3d& spacing,
                           double tau = 0) {
    ImplicitGrid g;
    g.nx = nx;
    g.ny = ny;
    g.nz = nz;
    g.origin = origin;
    g.spacing = spacing;
    g.tau = tau;
    g.values.resize(size_t(nx) * ny * nz);
    std::vector<double> p = field.params();
    std::span<const double> ps(p);
    for (int z = 0; z < nz; z++)
        for (int y = 0; y < ny; y++)
            for (int x = 0; x < nx; x++)
                g.values[(size_t(z) * ny + y) * nx + x] =
                    field.eval(ps, g.lattice_to_world(x, y, z));
    return g;
}

// ---------------------------------------------------------------------------
// rigid transforms and camera

// Rodrigues rotation of p about axis-angle r, stable near the identity
template <class T>
Vec3<T> rotate_axis_angle(const Vec3<T>& r, const Vec3<T>& p) {
    using std::cos;
    using std::sin;
    using std::sqrt;
    T t2 = dot(r, r);
    T a, b;  // sin(t)/t and (1-cos(t))/t^2
    if (value(t2) < 1e-12) {
        a = 1.0 - t2 * (1.0 / 6.0);
        b = 0.5 - t2 * (1.0 / 24.0);
    } else {
        T t = sqrt(t2);
        a = sin(t) / t;
        b = (1.0 - cos(t)) / t2;
    }
    Vec3<T> rxp = cross(r, p);
    return p + rxp * a + cross(r, rxp) * b;
}

inline Mat3d rotation_matrix(const Vec3d& r) {
    Mat3d m = Mat3d::identity();
    Vec3d e1 = rotate_axis_angle(r, Vec3d{1, 0, 0});
    Vec3d e2 = rotate_axis_angle(r, Vec3d{0, 1, 0});
    Vec3d e3 = rotate_axis_angle(r, Vec3d{0, 0, 1});
    m.m = {e1.x, e2.x, e3.x, e1.y, e2.y, e3.y, e1.z, e2.z, e3.z};
    return m;
}

// 6 reals: rotation (axis-angle) then translation
template <class T>
struct Pose {
    Vec3<T> rot{T(0), T(0), T(0)};
    Vec3<T> trans{T(0), T(0), T(0)};

    static Pose from(std::span<const T> p6) {
        return {{p6[0], p6[1], p6[2]}, {p6[3], p6[4], p6[5]}};
    }
};
using PoseParams = Pose<double>;

template <class T>
Vec3<T> rigid_transform(const Vec3<T>& p, const Pose<T>& pose) {
    return rotate_axis_angle(pose.rot, p) + pose.trans;
}

// axis-angle whose rotation matrix equals m (matrix log), angle in [0, pi]
Vec3d axis_angle_from_matrix(const Mat3d& m);

struct Camera {
    Vec3d rot{0, 0, 0};  // axis-angle orientation, camera-to-world
    Vec3d pos{0, 0, 0};
    double fov_y = 0.7853981633974483;  // 45 degrees
    int width = 128, height = 128;
    double znear = 0.1, zfar = 100.0;
};

// camera at pos with -z aimed at target; up fixes the roll
Camera look_at_camera(const Vec3d& pos, const Vec3d& target, const Vec3d& up,
                      int width, int height, double fov_y = 0.7853981633974483);

// positive distance along the viewing direction (camera looks down -z)
template <class T>
T view_depth(const Vec3<T>& p_world, const Camera& cam) {
    Mat3d r_wc = transposed(rotation_matrix(cam.rot));
    Vec3<T> q = mul(r_wc, p_world - to_vec3<T>(cam.pos));
    return -q.z;
}

// camera space -> (x_pix, y_pix, normalized depth); (0,0) is the top-left
// pixel center, z = (1/near - 1/d)/(1/near - 1/far)
template <class T>
Vec3<T> project_cam(const Vec3<T>& q, const Camera& cam) {
    T d = -q.z;
    double th = std::tan(0.5 * cam.fov_y);
    double aspect = double(cam.width) / double(cam.height);
    T ndc_x = q.x / (d * T(th * aspect));
    T ndc_y = q.y / (d * T(th));
    T x = (ndc_x + T(1.0)) * (0.5 * cam.width) - T(0.5);
    T y = (T(1.0) - ndc_y) * (0.5 * cam.height) - T(0.5);
    double zs = 1.0 / (1.0 / cam.znear - 1.0 / cam.zfar);
    T z = (T(1.0 / cam.znear) - T(1.0) / d) * zs;
    return {x, y, z};
}

template <class T>
Vec3<T> project(const Vec3<T>& p_world, const Camera& cam) {
    Mat3d r_wc = transposed(rotation_matrix(cam.rot));
    return project_cam(mul(r_wc, p_world - to_vec3<T>(cam.pos)), cam);
}

// ---------------------------------------------------------------------------
// textures

struct Texture {
    int width = 0, height = 0;
    std::vector<Vec3d> texels;  // row-major, row 0 at v = 0

    const Vec3d& at(int x, int y) const { return texels[size_t(y) * width + x]; }
};

// bilinear sample with clamp addressing; texel centers at (i+0.5)/size;
// fetch(x, y) supplies the (possibly differentiable) texel values
template <class T, class Fetch>
Vec3<T> sample_bilinear(int width, int height, const Fetch& fetch, const Vec2<T>& uv) {
    using std::floor;
    T fx = uv.x * double(width) - T(0.5);
    T fy = uv.y * double(height) - T(0.5);
    T bx = floor(fx), by = floor(fy);
    T wx = fx - bx, wy = fy - by;
    int x0 = int(value(bx)), y0 = int(value(by));
    auto clampi = [](int v, int hi) { return v < 0 ? 0 : (v > hi ? hi : v); };
    int x1 = clampi(x0 + 1, width - 1), y1 = clampi(y0 + 1, height - 1);
    x0 = clampi(x0, width - 1);
    y0 = clampi(y0, height - 1);
    Vec3<T> c00 = fetch(x0, y0), c10 = fetch(x1, y0);
    Vec3<T> c01 = fetch(x0, y1), c11 = fetch(x1, y1);
    Vec3<T> top = c00 + (c10 - c00) * wx;
    Vec3<T> bot = c01 + (c11 - c01) * wx;
    return top + (bot - top) * wy;
}

template <class T>
Vec3<T> sample_texture(const Texture& tex, const Vec2<T>& uv) {
    auto fetch = [&](int x, int y) { return to_vec3<T>(tex.at(x, y)); };
    return sample_bilinear<T>(tex.width, tex.height, fetch, uv);
}

// texels themselves differentiable, laid out like Texture::texels
template <class T>
Vec3<T> sample_texture(int width, int height, std::span<const Vec3<T>> texels,
                       const Vec2<T>& uv) {
    auto fetch = [&](int x, int y) { return texels[size_t(y) * width + x]; };
    return sample_bilinear<T>(width, height, fetch, uv);
}

// ---------------------------------------------------------------------------
// procedural meshes (tests and experiment setups)

TriangleMesh make_quad(const Vec3d& center, const Vec3d& u_half, const Vec3d& v_half,
                       const Vec3d& color);
TriangleMesh make_cuboid(const Vec3d& half_extents, const Vec3d& color);
TriangleMesh make_disk(double radius, int segments, const Vec3d& color);
TriangleMesh make_icosphere(int subdivisions, double radius);
TriangleMesh make_uv_sphere(int rows, int cols, double radius);
void compute_vertex_normals(TriangleMesh& mesh);

}  // namespace drender
