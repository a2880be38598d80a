#include "drender/scene.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <map>

namespace drender {

TriangleMesh make_quad(const Vec3d& center, const Vec3d& u_half, const Vec3d& v_half,
                       const Vec3d& color) {
    TriangleMesh m;
    m.positions = {center - u_half - v_half, center + u_half - v_half,
                   center + u_half + v_half, center - u_half + v_half};
    Vec3d n = normalized(cross(u_half, v_half));
    m.normals = {n, n, n, n};
    m.texcoords = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
    m.colors = {color, color, color, color};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

TriangleMesh make_cuboid(const Vec3d& half_extents, const Vec3d& color) {
    TriangleMesh m;
    const Vec3d& h = half_extents;
    // six faces, four vertices each, face normals
    const Vec3d axes[6] = {{1, 0, 0}, {-1, 0, 0}, {0, 1, 0},
                           {0, -1, 0}, {0, 0, 1}, {0, 0, -1}};
    for (const Vec3d& n : axes) {
        Vec3d u = std::fabs(n.z) < 0.5 ? Vec3d{-n.y, n.x, 0} : Vec3d{1, 0, 0};
        Vec3d v = cross(n, u);
        Vec3d c{n.x * h.x, n.y * h.y, n.z * h.z};
        Vec3d us{u.x * h.x, u.y * h.y, u.z * h.z};
        Vec3d vs{v.x * h.x, v.y * h.y, v.z * h.z};
        int base = int(m.positions.size());
        m.positions.push_back(c - us - vs);
        m.positions.push_back(c + us - vs);
        m.positions.push_back(c + us + vs);
        m.positions.push_back(c - us + vs);
        for (int i = 0; i < 4; i++) {
            m.normals.push_back(n);
            m.colors.push_back(color);
        }
        m.texcoords.insert(m.texcoords.end(), {{0, 0}, {1, 0}, {1, 1}, {0, 1}});
        m.triangles.push_back({base, base + 1, base + 2});
        m.triangles.push_back({base, base + 2, base + 3});
    }
    return m;
}

TriangleMesh make_disk(double radius, int segments, const Vec3d& color) {
    TriangleMesh m;
    m.positions.push_back({0, 0, 0});
    for (int i = 0; i < segments; i++) {
        double a = 2.0 * M_PI * i / segments;
        m.positions.push_back({radius * std::cos(a), radius * std::sin(a), 0});
    }
    for (int i = 0; i < segments; i++)
        m.triangles.push_back({0, 1 + i, 1 + (i + 1) % segments});
    m.normals.assign(m.positions.size(), {0, 0, 1});
    m.colors.assign(m.positions.size(), color);
    m.texcoords.assign(m.positions.size(), {0.5, 0.5});
    return m;
}

TriangleMesh make_icosphere(int subdivisions, double radius) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3d> pos = {{-1, t, 0},  {1, t, 0},  {-1, -t, 0}, {1, -t, 0},
                              {0, -1, t},  {0, 1, t},  {0, -1, -t}, {0, 1, -t},
                              {t, 0, -1},  {t, 0, 1},  {-t, 0, -1}, {-t, 0, 1}};
    std::vector<Vec3i> tris = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10},
                               {0, 10, 11}, {1, 5, 9},  {5, 11, 4},  {11, 10, 2},
                               {10, 7, 6},  {7, 1, 8},  {3, 9, 4},   {3, 4, 2},
                               {3, 2, 6},   {3, 6, 8},  {3, 8, 9},   {4, 9, 5},
                               {2, 4, 11},  {6, 2, 10}, {8, 6, 7},   {9, 8, 1}};
    for (Vec3d& p : pos) p = normalized(p);

    for (int s = 0; s < subdivisions; s++) {
        std::map<std::pair<int, int>, int> midpoint;
        auto mid = [&](int a, int b) {
            auto key = std::minmax(a, b);
            auto it = midpoint.find(key);
            if (it != midpoint.end()) return it->second;
            Vec3d p = normalized(pos[a] + pos[b]);
            pos.push_back(p);
            int idx = int(pos.size()) - 1;
            midpoint[key] = idx;
            return idx;
        };
        std::vector<Vec3i> next;
        next.reserve(tris.size() * 4);
        for (const Vec3i& f : tris) {
            int ab = mid(f.x, f.y), bc = mid(f.y, f.z), ca = mid(f.z, f.x);
            next.push_back({f.x, ab, ca});
            next.push_back({f.y, bc, ab});
            next.push_back({f.z, ca, bc});
            next.push_back({ab, bc, ca});
        }
        tris = std::move(next);
    }

    TriangleMesh m;
    m.positions.reserve(pos.size());
    for (const Vec3d& p : pos) {
        m.positions.push_back(p * radius);
        m.normals.push_back(p);
        double u = 0.5 + std::atan2(p.y, p.x) / (2.0 * M_PI);
        double v = 0.5 + std::asin(std::clamp(p.z, -1.0, 1.0)) / M_PI;
        m.texcoords.push_back({u, v});
        m.colors.push_back({0.8, 0.8, 0.8});
    }
    m.triangles = tris;
    return m;
}

TriangleMesh make_uv_sphere(int rows, int cols, double radius) {
    TriangleMesh m;
    for (int r = 0; r <= rows; r++) {
        double phi = M_PI * r / rows;  // 0 at +z pole
        for (int c = 0; c <= cols; c++) {
            double th = 2.0 * M_PI * c / cols;
            Vec3d n{std::sin(phi) * std::cos(th), std::sin(phi) * std::sin(th),
                    std::cos(phi)};
            m.positions.push_back(n * radius);
            m.normals.push_back(n);
            m.texcoords.push_back({double(c) / cols, double(r) / rows});
            m.colors.push_back({0.8, 0.8, 0.8});
        }
    }
    int stride = cols + 1;
    for (int r = 0; r < rows; r++)
        for (int c = 0; c < cols; c++) {
            int a = r * stride + c, b = a + 1, d = a + stride, e = d + 1;
            m.triangles.push_back({a, d, b});
            m.triangles.push_back({b, d, e});
        }
    return m;
}

Vec3d axis_angle_from_matrix(const Mat3d& m) {
    double tr = m.m[0] + m.m[4] + m.m[8];
    double c = std::clamp(0.5 * (tr - 1.0), -1.0, 1.0);
    double angle = std::acos(c);
    Vec3d w{m.m[7] - m.m[5], m.m[2] - m.m[6], m.m[3] - m.m[1]};
    if (angle < 1e-8) return w * 0.5;  // R ~ I + [w]x
    double s = std::sin(angle);
    if (s > 1e-6) return w * (angle / (2.0 * s));
    // angle near pi: R ~ 2 a a^T - I, axis from the largest diagonal entry
    std::array<double, 3> a{};
    int i = 0;
    if (m.m[4] > m.m[0]) i = 1;
    if (m.m[8] > m.m[size_t(i) * 3 + i]) i = 2;
    int j = (i + 1) % 3, k = (i + 2) % 3;
    a[i] = std::sqrt(std::max(0.0, (m.m[size_t(i) * 3 + i] + 1.0) * 0.5));
    a[j] = (m.m[size_t(i) * 3 + j] + m.m[size_t(j) * 3 + i]) / (4.0 * a[i]);
    a[k] = (m.m[size_t(i) * 3 + k] + m.m[size_t(k) * 3 + i]) / (4.0 * a[i]);
    return Vec3d{a[0], a[1], a[2]} * angle;
}

Camera look_at_camera(const Vec3d& pos, const Vec3d& target, const Vec3d& up,
                      int width, int height, double fov_y) {
    Vec3d f = normalized(target - pos);   // camera -z
    Vec3d r = normalized(cross(f, up));   // camera +x
    Vec3d u = cross(r, f);                // camera +y
    Mat3d rot;  // columns are the camera axes in world coordinates
    rot.m = {r.x, u.x, -f.x, r.y, u.y, -f.y, r.z, u.z, -f.z};
    Camera cam;
    cam.rot = axis_angle_from_matrix(rot);
    cam.pos = pos;
    cam.width = width;
    cam.height = height;
    cam.fov_y = fov_y;
    return cam;
}

void compute_vertex_normals(TriangleMesh& mesh) {
    mesh.normals.assign(mesh.positions.size(), {0, 0, 0});
    for (const Vec3i& f : mesh.triangles) {
        Vec3d n = cross(mesh.positions[f.y] - mesh.positions[f.x],
                        mesh.positions[f.z] - mesh.positions[f.x]);
        mesh.normals[f.x] += n;  // area weighted
        mesh.normals[f.y] += n;
        mesh.normals[f.z] += n;
    }
    for (Vec3d& n : mesh.normals) {
        double len = length(n);
        if (len > 0) n = n / len;
    }
}

}  // namespace drender
