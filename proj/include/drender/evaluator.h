#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "drender/autodiff.h"
#include "drender/sampler.h"

// Differentiable evaluation stage: re-derives interpolated surface attributes
// at the sampled surface parameters in generic scalar arithmetic. The sampled
// parameters (barycentrics, patch uv, lattice edges) stay constant; derivatives
// flow through vertex attributes, control points, lattice values, and pose.
// Every operation takes a row window [y0, y1) so reverse-mode consumers can
// evaluate in chunks against small tapes; y1 < 0 means the full height.

namespace drender {

template <class T>
struct GBuffer {
    int width = 0, height = 0, layers = 0;
    bool has_normal = false, has_texcoord = false, has_color = false;
    std::vector<uint8_t> valid;
    std::vector<Vec3<T>> position;  // object space, posed in build_position_buffer
    std::vector<Vec3<T>> normal;    // unnormalized; shading renormalizes
    std::vector<Vec2<T>> texcoord;
    std::vector<Vec3<T>> color;

    size_t at(int k, int y, int x) const {
        return (size_t(k) * height + y) * width + x;
    }
};

template <class T>
struct PositionBuffer {
    int width = 0, height = 0, layers = 0;
    std::vector<uint8_t> valid;
    std::vector<Vec3<T>> screen;  // x, y in pixels; z normalized depth

    size_t at(int k, int y, int x) const {
        return (size_t(k) * height + y) * width + x;
    }
};

// differentiable per-vertex attributes; empty spans fall back to the mesh's
// own values, lifted to constants
template <class T>
struct MeshAttribs {
    std::span<const Vec3<T>> positions;
    std::span<const Vec3<T>> normals;
    std::span<const Vec2<T>> texcoords;
    std::span<const Vec3<T>> colors;
};

template <class T>
GBuffer<T> alloc_gbuffer(const SampleBuffer& sb) {
    GBuffer<T> g;
    g.width = sb.width;
    g.height = sb.height;
    g.layers = sb.layers;
    g.valid.assign(sb.valid.size(), 0);
    g.position.assign(sb.valid.size(), Vec3<T>{T(0.0), T(0.0), T(0.0)});
    return g;
}

template <class T>
PositionBuffer<T> alloc_position_buffer(int width, int height, int layers) {
    PositionBuffer<T> pb;
    pb.width = width;
    pb.height = height;
    pb.layers = layers;
    pb.valid.assign(size_t(layers) * height * width, 0);
    pb.screen.assign(pb.valid.size(), Vec3<T>{T(0.0), T(0.0), T(0.0)});
    return pb;
}

namespace detail {

inline void clamp_rows(int height, int& y0, int& y1) {
    if (y1 < 0) y1 = height;
    if (y0 < 0) y0 = 0;
    if (y1 > height) y1 = height;
}

}  // namespace detail

template <class T>
void evaluate_mesh(const TriangleMesh& mesh, const MeshAttribs<T>& attribs,
                   const SampleBuffer& sb, GBuffer<T>& gb, int y0 = 0, int y1 = -1) {
    detail::clamp_rows(sb.height, y0, y1);
    gb.has_normal = !attribs.normals.empty() || !mesh.normals.empty();
    gb.has_texcoord = !attribs.texcoords.empty() || !mesh.texcoords.empty();
    gb.has_color = !attribs.colors.empty() || !mesh.colors.empty();
    Vec3<T> zero3{T(0.0), T(0.0), T(0.0)};
    if (gb.has_normal && gb.normal.empty()) gb.normal.assign(gb.valid.size(), zero3);
    if (gb.has_texcoord && gb.texcoord.empty())
        gb.texcoord.assign(gb.valid.size(), Vec2<T>{T(0.0), T(0.0)});
    if (gb.has_color && gb.color.empty()) gb.color.assign(gb.valid.size(), zero3);

    auto vpos = [&](int i) {
        return attribs.positions.empty() ? to_vec3<T>(mesh.positions[i])
                                         : attribs.positions[i];
    };
    auto vnorm = [&](int i) {
        return attribs.normals.empty() ? to_vec3<T>(mesh.normals[i])
                                       : attribs.normals[i];
    };
    auto vuv = [&](int i) {
        return attribs.texcoords.empty() ? to_vec2<T>(mesh.texcoords[i])
                                         : attribs.texcoords[i];
    };
    auto vcol = [&](int i) {
        return attribs.colors.empty() ? to_vec3<T>(mesh.colors[i]) : attribs.colors[i];
    };

    for (int k = 0; k < sb.layers; k++)
        for (int y = y0; y < y1; y++)
            for (int x = 0; x < sb.width; x++) {
                size_t i = sb.at(k, y, x);
                gb.valid[i] = sb.valid[i];
                if (!sb.valid[i]) continue;
                if (sb.prim[i] < 0 || size_t(sb.prim[i]) >= mesh.triangles.size())
                    throw std::out_of_range("sample references a missing triangle");
                const Vec3i& tr = mesh.triangles[sb.prim[i]];
                const Vec3d& b = sb.bary[i];
                gb.position[i] = vpos(tr.x) * b.x + vpos(tr.y) * b.y + vpos(tr.z) * b.z;
                if (gb.has_normal)
                    gb.normal[i] = vnorm(tr.x) * b.x + vnorm(tr.y) * b.y + vnorm(tr.z) * b.z;
                if (gb.has_texcoord)
                    gb.texcoord[i] = vuv(tr.x) * T(b.x) + vuv(tr.y) * T(b.y) + vuv(tr.z) * T(b.z);
                if (gb.has_color)
                    gb.color[i] = vcol(tr.x) * b.x + vcol(tr.y) * b.y + vcol(tr.z) * b.z;
            }
}

template <class T>
GBuffer<T> evaluate_mesh(const TriangleMesh& mesh, const MeshAttribs<T>& attribs,
                         const SampleBuffer& sb) {
    GBuffer<T> gb = alloc_gbuffer<T>(sb);
    evaluate_mesh(mesh, attribs, sb, gb);
    return gb;
}

// control: differentiable control points laid out like surface.control, or
// empty to lift the surface's own
template <class T>
void evaluate_spline(const BSplineSurface& surf, std::span<const Vec3<T>> control,
                     const SampleBuffer& sb, GBuffer<T>& gb, int y0 = 0, int y1 = -1) {
    detail::clamp_rows(sb.height, y0, y1);
    gb.has_normal = true;
    gb.has_texcoord = true;
    Vec3<T> zero3{T(0.0), T(0.0), T(0.0)};
    if (gb.normal.empty()) gb.normal.assign(gb.valid.size(), zero3);
    if (gb.texcoord.empty()) gb.texcoord.assign(gb.valid.size(), Vec2<T>{T(0.0), T(0.0)});

    auto ctrl = [&](int i, int j) {
        return control.empty() ? to_vec3<T>(surf.at(i, j))
                               : control[size_t(i) * surf.n + j];
    };
    int pv = surf.patches_v();
    for (int k = 0; k < sb.layers; k++)
        for (int y = y0; y < y1; y++)
            for (int x = 0; x < sb.width; x++) {
                size_t i = sb.at(k, y, x);
                gb.valid[i] = sb.valid[i];
                if (!sb.valid[i]) continue;
                if (sb.prim[i] < 0 || sb.prim[i] >= surf.patches_u() * pv)
                    throw std::out_of_range("sample references a missing patch");
                int pi = sb.prim[i] / pv, pj = sb.prim[i] % pv;
                double u = sb.uv[i].x, v = sb.uv[i].y;
                double bu[4], bv[4], du[4], dv[4];
                bspline_basis(u, bu);
                bspline_basis(v, bv);
                bspline_deriv(u, du);
                bspline_deriv(v, dv);
                Vec3<T> pos = {T(0.0), T(0.0), T(0.0)};
                Vec3<T> tu = pos, tv = pos;
                for (int a = 0; a < 4; a++) {
                    int ci = surf.periodic_u ? (pi + a) % surf.m : pi + a;
                    for (int b = 0; b < 4; b++) {
                        int cj = surf.periodic_v ? (pj + b) % surf.n : pj + b;
                        Vec3<T> p = ctrl(ci, cj);
                        pos += p * (bu[a] * bv[b]);
                        tu += p * (du[a] * bv[b]);
                        tv += p * (bu[a] * dv[b]);
                    }
                }
                gb.position[i] = pos;
                gb.normal[i] = cross(tu, tv);
                gb.texcoord[i] = {T((pi + u) / surf.patches_u()), T((pj + v) / pv)};
            }
}

template <class T>
GBuffer<T> evaluate_spline(const BSplineSurface& surf, std::span<const Vec3<T>> control,
                           const SampleBuffer& sb) {
    GBuffer<T> gb = alloc_gbuffer<T>(sb);
    evaluate_spline(surf, control, sb, gb);
    return gb;
}

// lattice: differentiable lattice values laid out like grid.values, or empty
// to lift the grid's own; samples whose recorded edge gap dropped below the
// degeneracy threshold are invalidated for this evaluation
template <class T>
void evaluate_implicit(const ImplicitGrid& grid, std::span<const T> lattice,
                       const SampleBuffer& sb, GBuffer<T>& gb, int y0 = 0, int y1 = -1) {
    detail::clamp_rows(sb.height, y0, y1);
    gb.has_normal = true;
    Vec3<T> zero3{T(0.0), T(0.0), T(0.0)};
    if (gb.normal.empty()) gb.normal.assign(gb.valid.size(), zero3);
    double eps = eps_mc(grid);
    auto lat = [&](int32_t f) {
        return lattice.empty() ? T(grid.values[f]) : lattice[f];
    };
    for (int k = 0; k < sb.layers; k++)
        for (int y = y0; y < y1; y++)
            for (int x = 0; x < sb.width; x++) {
                size_t i = sb.at(k, y, x);
                gb.valid[i] = sb.valid[i];
                if (!sb.valid[i]) continue;
                Vec3<T> verts[3];
                bool degenerate = false;
                for (int v = 0; v < 3 && !degenerate; v++) {
                    int32_t ia = sb.corners[i][2 * v], ib = sb.corners[i][2 * v + 1];
                    if (ia < 0 || ib < 0 || size_t(ia) >= grid.values.size() ||
                        size_t(ib) >= grid.values.size())
                        throw std::out_of_range("sample references a missing lattice edge");
                    T fa = lat(ia), fb = lat(ib);
                    T denom = fb - fa;
                    if (std::abs(value(denom)) < eps) {
                        degenerate = true;
                        break;
                    }
                    T alpha = (T(grid.tau) - fa) / denom;
                    auto decode = [&](int32_t f) {
                        int xg = f % grid.nx, yg = (f / grid.nx) % grid.ny;
                        int zg = f / (grid.nx * grid.ny);
                        return grid.lattice_to_world(xg, yg, zg);
                    };
                    Vec3<T> pa = to_vec3<T>(decode(ia)), pb = to_vec3<T>(decode(ib));
                    verts[v] = pa + (pb - pa) * alpha;
                }
                if (degenerate) {
                    gb.valid[i] = 0;
                    continue;
                }
                const Vec3d& b = sb.bary[i];
                gb.position[i] = verts[0] * b.x + verts[1] * b.y + verts[2] * b.z;
                gb.normal[i] = cross(verts[1] - verts[0], verts[2] - verts[0]);
            }
}

template <class T>
GBuffer<T> evaluate_implicit(const ImplicitGrid& grid, std::span<const T> lattice,
                             const SampleBuffer& sb) {
    GBuffer<T> gb = alloc_gbuffer<T>(sb);
    evaluate_implicit(grid, lattice, sb, gb);
    return gb;
}

// pose fast path: lifts the recorded object-space positions as constants; the
// differentiable stage is then pose + projection only
template <class T>
void evaluate_positions(const SampleBuffer& sb, GBuffer<T>& gb, int y0 = 0, int y1 = -1) {
    detail::clamp_rows(sb.height, y0, y1);
    for (int k = 0; k < sb.layers; k++)
        for (int y = y0; y < y1; y++)
            for (int x = 0; x < sb.width; x++) {
                size_t i = sb.at(k, y, x);
                gb.valid[i] = sb.valid[i];
                if (sb.valid[i]) gb.position[i] = to_vec3<T>(sb.world[i]);
            }
}

template <class T>
GBuffer<T> evaluate_positions(const SampleBuffer& sb) {
    GBuffer<T> gb = alloc_gbuffer<T>(sb);
    evaluate_positions(sb, gb);
    return gb;
}

// applies the pose and camera projection to every valid G-buffer position;
// pixels landing behind the near plane are invalidated
template <class T>
void build_position_buffer(const GBuffer<T>& gb, const Camera& cam,
                           const Pose<T>& pose, PositionBuffer<T>& pb, int y0 = 0,
                           int y1 = -1) {
    detail::clamp_rows(gb.height, y0, y1);
    Mat3d r_wc = transposed(rotation_matrix(cam.rot));
    for (int k = 0; k < gb.layers; k++)
        for (int y = y0; y < y1; y++)
            for (int x = 0; x < gb.width; x++) {
                size_t i = gb.at(k, y, x);
                pb.valid[i] = gb.valid[i];
                if (!gb.valid[i]) continue;
                Vec3<T> world = rigid_transform(gb.position[i], pose);
                Vec3<T> q = mul(r_wc, world - to_vec3<T>(cam.pos));
                if (value(q.z) > -cam.znear) {
                    pb.valid[i] = 0;
                    continue;
                }
                pb.screen[i] = project_cam(q, cam);
            }
}

template <class T>
PositionBuffer<T> build_position_buffer(const GBuffer<T>& gb, const Camera& cam,
                                        const Pose<T>& pose) {
    PositionBuffer<T> pb = alloc_position_buffer<T>(gb.width, gb.height, gb.layers);
    build_position_buffer(gb, cam, pose, pb);
    return pb;
}

}  // namespace drender
