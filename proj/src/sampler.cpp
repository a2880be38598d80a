#include "drender/sampler.h"

#include <algorithm>
#include <cmath>
#include <limits>

#include "drender/parallel.h"

namespace drender {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// screen-space triangle ready for scan conversion; varyings are whatever the
// caller wants perspective-correct at each pixel (barycentrics, patch uv)
struct SoupTri {
    Vec3d s[3];      // x, y in pixels; z normalized depth (affine in screen)
    double invd[3];  // 1 / view depth
    Vec3d vary[3];
    int32_t id;
};

struct CamVert {
    Vec3d p;     // camera space
    Vec3d vary;
};

// clip the triangle to the near plane (z <= -znear), keeping varyings linear
int clip_near(const CamVert in[3], CamVert out[4], double znear) {
    int n = 0;
    for (int i = 0; i < 3; i++) {
        const CamVert& a = in[i];
        const CamVert& b = in[(i + 1) % 3];
        bool ain = a.p.z <= -znear, bin = b.p.z <= -znear;
        if (ain) out[n++] = a;
        if (ain != bin) {
            double t = (-znear - a.p.z) / (b.p.z - a.p.z);
            out[n++] = {lerp(a.p, b.p, t), lerp(a.vary, b.vary, t)};
        }
    }
    return n;
}

void append_clipped(const CamVert tri[3], int32_t id, const Camera& cam,
                    std::vector<SoupTri>& soup) {
    CamVert poly[4];
    int n = clip_near(tri, poly, cam.znear);
    for (int k = 0; k + 2 < n; k++) {  // fan: (0, k+1, k+2)
        SoupTri t;
        const CamVert* v[3] = {&poly[0], &poly[k + 1], &poly[k + 2]};
        for (int i = 0; i < 3; i++) {
            t.s[i] = project_cam(v[i]->p, cam);
            t.invd[i] = 1.0 / -v[i]->p.z;
            t.vary[i] = v[i]->vary;
        }
        t.id = id;
        // fix winding so edge functions are positive inside
        double area2 = (t.s[1].x - t.s[0].x) * (t.s[2].y - t.s[0].y) -
                       (t.s[1].y - t.s[0].y) * (t.s[2].x - t.s[0].x);
        if (area2 == 0) continue;
        if (area2 < 0) {
            std::swap(t.s[1], t.s[2]);
            std::swap(t.invd[1], t.invd[2]);
            std::swap(t.vary[1], t.vary[2]);
        }
        soup.push_back(t);
    }
}

// top-left fill rule for a directed edge of a positively oriented triangle
// (screen y grows downward): include boundary pixels on horizontal edges
// pointing right and on edges pointing up
bool edge_top_left(const Vec3d& a, const Vec3d& b) {
    return (a.y == b.y && b.x > a.x) || (b.y < a.y);
}

struct Fragment {
    double z = kInf;
    int32_t soup = -1;
    Vec3d lambda;  // screen-space barycentrics
};

// one depth-peel pass over rows [y0, y1): nearest fragment strictly deeper
// than prev + eps per pixel
void peel_pass(const std::vector<SoupTri>& soup, int width, int y0, int y1,
               const double* prev, Fragment* best) {
    for (size_t ti = 0; ti < soup.size(); ti++) {
        const SoupTri& t = soup[ti];
        double min_x = std::min({t.s[0].x, t.s[1].x, t.s[2].x});
        double max_x = std::max({t.s[0].x, t.s[1].x, t.s[2].x});
        double min_y = std::max(double(y0), std::ceil(std::min({t.s[0].y, t.s[1].y, t.s[2].y})));
        double max_y = std::min(double(y1 - 1), std::floor(std::max({t.s[0].y, t.s[1].y, t.s[2].y})));
        double bx0 = std::max(0.0, std::ceil(min_x));
        double bx1 = std::min(double(width - 1), std::floor(max_x));
        if (min_y > max_y || bx0 > bx1) continue;
        int x0 = int(bx0), x1 = int(bx1);

        double area2 = (t.s[1].x - t.s[0].x) * (t.s[2].y - t.s[0].y) -
                       (t.s[1].y - t.s[0].y) * (t.s[2].x - t.s[0].x);
        double inv_area = 1.0 / area2;
        bool tl0 = edge_top_left(t.s[1], t.s[2]);
        bool tl1 = edge_top_left(t.s[2], t.s[0]);
        bool tl2 = edge_top_left(t.s[0], t.s[1]);

        for (int y = int(min_y); y <= int(max_y); y++) {
            for (int x = x0; x <= x1; x++) {
                double px = x, py = y;
                double w0 = (t.s[2].x - t.s[1].x) * (py - t.s[1].y) -
                            (t.s[2].y - t.s[1].y) * (px - t.s[1].x);
                double w1 = (t.s[0].x - t.s[2].x) * (py - t.s[2].y) -
                            (t.s[0].y - t.s[2].y) * (px - t.s[2].x);
                double w2 = (t.s[1].x - t.s[0].x) * (py - t.s[0].y) -
                            (t.s[1].y - t.s[0].y) * (px - t.s[0].x);
                bool in = (w0 > 0 || (w0 == 0 && tl0)) && (w1 > 0 || (w1 == 0 && tl1)) &&
                          (w2 > 0 || (w2 == 0 && tl2));
                if (!in) continue;
                Vec3d l{w0 * inv_area, w1 * inv_area, w2 * inv_area};
                double z = l.x * t.s[0].z + l.y * t.s[1].z + l.z * t.s[2].z;
                size_t pix = size_t(y) * width + x;
                if (z <= prev[pix] + kPeelEps) continue;
                if (z < best[pix].z) best[pix] = {z, int32_t(ti), l};
            }
        }
    }
}

// runs K peel passes and hands each layer's fragments to `commit(k, pixel,
// soup_index, perspective-correct varying, depth)`
template <class Commit>
void rasterize_soup(const std::vector<SoupTri>& soup, int width, int height,
                    int k_layers, int threads, const Commit& commit) {
    std::vector<double> prev(size_t(width) * height, -kInf);
    std::vector<Fragment> best(size_t(width) * height);
    for (int k = 0; k < k_layers; k++) {
        std::fill(best.begin(), best.end(), Fragment{});
        parallel_rows(height, threads, [&](int y0, int y1) {
            peel_pass(soup, width, y0, y1, prev.data(), best.data());
        });
        for (int y = 0; y < height; y++) {
            for (int x = 0; x < width; x++) {
                size_t pix = size_t(y) * width + x;
                const Fragment& f = best[pix];
                if (f.soup < 0) continue;
                const SoupTri& t = soup[f.soup];
                double pc0 = f.lambda.x * t.invd[0];
                double pc1 = f.lambda.y * t.invd[1];
                double pc2 = f.lambda.z * t.invd[2];
                double inv = 1.0 / (pc0 + pc1 + pc2);
                Vec3d vary = (t.vary[0] * pc0 + t.vary[1] * pc1 + t.vary[2] * pc2) * inv;
                commit(k, pix, f.soup, vary, f.z);
                prev[pix] = f.z;
            }
        }
    }
}

Mat3d world_to_cam(const Camera& cam) { return transposed(rotation_matrix(cam.rot)); }

std::vector<SoupTri> mesh_soup(const TriangleMesh& mesh, const Camera& cam,
                               const PoseParams& pose) {
    Mat3d r_wc = world_to_cam(cam);
    std::vector<Vec3d> cam_pos(mesh.positions.size());
    for (size_t i = 0; i < mesh.positions.size(); i++)
        cam_pos[i] = r_wc * (rigid_transform(mesh.positions[i], pose) - cam.pos);
    std::vector<SoupTri> soup;
    soup.reserve(mesh.triangles.size());
    static const Vec3d unit[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (size_t f = 0; f < mesh.triangles.size(); f++) {
        const Vec3i& tri = mesh.triangles[f];
        CamVert cv[3] = {{cam_pos[tri.x], unit[0]},
                         {cam_pos[tri.y], unit[1]},
                         {cam_pos[tri.z], unit[2]}};
        append_clipped(cv, int32_t(f), cam, soup);
    }
    return soup;
}

SampleBuffer alloc_buffer(SampleBuffer::Kind kind, const Camera& cam, int k_layers) {
    SampleBuffer sb;
    sb.kind = kind;
    sb.width = cam.width;
    sb.height = cam.height;
    sb.layers = k_layers;
    size_t n = size_t(k_layers) * cam.width * cam.height;
    sb.valid.assign(n, 0);
    sb.depth.assign(n, 0.0);
    sb.prim.assign(n, -1);
    return sb;
}

}  // namespace

SampleBuffer rasterize_mesh(const TriangleMesh& mesh, const Camera& cam,
                            const PoseParams& pose, int k_layers, int threads) {
    SampleBuffer sb = alloc_buffer(SampleBuffer::Kind::mesh, cam, k_layers);
    sb.bary.assign(sb.valid.size(), Vec3d{});
    std::vector<SoupTri> soup = mesh_soup(mesh, cam, pose);
    size_t stride = size_t(cam.width) * cam.height;
    rasterize_soup(soup, cam.width, cam.height, k_layers, threads,
                   [&](int k, size_t pix, int32_t si, const Vec3d& vary, double z) {
                       size_t i = k * stride + pix;
                       sb.valid[i] = 1;
                       sb.depth[i] = z;
                       sb.prim[i] = soup[si].id;
                       sb.bary[i] = vary;
                   });
    return sb;
}

SampleBuffer sample_positions_for_pose(const TriangleMesh& mesh, const Camera& cam,
                                       const PoseParams& pose, int k_layers,
                                       int threads) {
    SampleBuffer sb = alloc_buffer(SampleBuffer::Kind::positions, cam, k_layers);
    sb.world.assign(sb.valid.size(), Vec3d{});
    std::vector<SoupTri> soup = mesh_soup(mesh, cam, pose);
    size_t stride = size_t(cam.width) * cam.height;
    rasterize_soup(soup, cam.width, cam.height, k_layers, threads,
                   [&](int k, size_t pix, int32_t si, const Vec3d& vary, double z) {
                       size_t i = k * stride + pix;
                       const Vec3i& tri = mesh.triangles[soup[si].id];
                       sb.valid[i] = 1;
                       sb.depth[i] = z;
                       sb.prim[i] = soup[si].id;
                       // object-space position: the differentiable stage
                       // re-applies pose and projection
                       sb.world[i] = mesh.positions[tri.x] * vary.x +
                                     mesh.positions[tri.y] * vary.y +
                                     mesh.positions[tri.z] * vary.z;
                   });
    return sb;
}

SampleBuffer rasterize_spline(const BSplineSurface& surf, const Camera& cam,
                              const PoseParams& pose, int k_layers, int threads,
                              bool* cap_warning) {
    if (cap_warning) *cap_warning = false;
    Mat3d r_wc = world_to_cam(cam);
    auto ctrl = [&](int i, int j) { return surf.at(i, j); };

    std::vector<SoupTri> soup;
    std::vector<Vec2d> param;  // micro-vertex patch parameters
    std::vector<Vec3d> cpos;   // camera-space micro-vertex positions
    for (int pi = 0; pi < surf.patches_u(); pi++) {
        for (int pj = 0; pj < surf.patches_v(); pj++) {
            int s = 4;
            for (;;) {
                param.clear();
                cpos.clear();
                for (int a = 0; a <= s; a++)
                    for (int b = 0; b <= s; b++) {
                        double u = double(a) / s, v = double(b) / s;
                        Vec3d w = rigid_transform(
                            bspline_point<double>(surf, ctrl, pi, pj, u, v), pose);
                        param.push_back({u, v});
                        cpos.push_back(r_wc * (w - cam.pos));
                    }
                // refine until screen edges are subpixel
                double max_e = 0;
                auto at = [&](int a, int b) { return cpos[size_t(a) * (s + 1) + b]; };
                auto screen_len = [&](const Vec3d& p, const Vec3d& q) {
                    if (p.z > -cam.znear || q.z > -cam.znear) return 0.0;
                    Vec3d sp = project_cam(p, cam), sq = project_cam(q, cam);
                    return std::hypot(sp.x - sq.x, sp.y - sq.y);
                };
                for (int a = 0; a <= s && max_e < 1.0; a++)
                    for (int b = 0; b < s && max_e < 1.0; b++) {
                        max_e = std::max(max_e, screen_len(at(a, b), at(a, b + 1)));
                        if (a < s) max_e = std::max(max_e, screen_len(at(a, b), at(a + 1, b)));
                    }
                if (max_e < 1.0 || s >= 64) {
                    if (max_e >= 1.0 && cap_warning) *cap_warning = true;
                    break;
                }
                s *= 2;
            }
            int32_t id = int32_t(pi) * surf.patches_v() + pj;
            for (int a = 0; a < s; a++)
                for (int b = 0; b < s; b++) {
                    size_t i00 = size_t(a) * (s + 1) + b, i01 = i00 + 1;
                    size_t i10 = i00 + (s + 1), i11 = i10 + 1;
                    auto cv = [&](size_t i) {
                        return CamVert{cpos[i], {param[i].x, param[i].y, 0}};
                    };
                    CamVert t0[3] = {cv(i00), cv(i10), cv(i11)};
                    CamVert t1[3] = {cv(i00), cv(i11), cv(i01)};
                    append_clipped(t0, id, cam, soup);
                    append_clipped(t1, id, cam, soup);
                }
        }
    }

    SampleBuffer sb = alloc_buffer(SampleBuffer::Kind::spline, cam, k_layers);
    sb.uv.assign(sb.valid.size(), Vec2d{});
    size_t stride = size_t(cam.width) * cam.height;
    rasterize_soup(soup, cam.width, cam.height, k_layers, threads,
                   [&](int k, size_t pix, int32_t si, const Vec3d& vary, double z) {
                       size_t i = k * stride + pix;
                       sb.valid[i] = 1;
                       sb.depth[i] = z;
                       sb.prim[i] = soup[si].id;
                       sb.uv[i] = {vary.x, vary.y};
                   });
    return sb;
}

SampleBuffer rasterize_implicit(const ImplicitGrid& grid, const Camera& cam,
                                const PoseParams& pose, int k_layers, int threads) {
    std::vector<McTriangle> mc = marching_cubes(grid);
    Mat3d r_wc = world_to_cam(cam);
    std::vector<SoupTri> soup;
    soup.reserve(mc.size());
    static const Vec3d unit[3] = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
    for (size_t f = 0; f < mc.size(); f++) {
        CamVert cv[3];
        for (int i = 0; i < 3; i++)
            cv[i] = {r_wc * (rigid_transform(mc[f].pos[i], pose) - cam.pos), unit[i]};
        append_clipped(cv, int32_t(f), cam, soup);
    }

    SampleBuffer sb = alloc_buffer(SampleBuffer::Kind::implicit, cam, k_layers);
    sb.bary.assign(sb.valid.size(), Vec3d{});
    sb.corners.assign(sb.valid.size(), std::array<int32_t, 6>{});
    size_t stride = size_t(cam.width) * cam.height;
    rasterize_soup(soup, cam.width, cam.height, k_layers, threads,
                   [&](int k, size_t pix, int32_t si, const Vec3d& vary, double z) {
                       size_t i = k * stride + pix;
                       sb.valid[i] = 1;
                       sb.depth[i] = z;
                       sb.prim[i] = soup[si].id;
                       sb.bary[i] = vary;
                       sb.corners[i] = mc[soup[si].id].corners;
                   });
    return sb;
}

Ray pixel_ray(const Camera& cam, double px, double py) {
    double th = std::tan(0.5 * cam.fov_y);
    double aspect = double(cam.width) / double(cam.height);
    double ndc_x = (px + 0.5) * 2.0 / cam.width - 1.0;
    double ndc_y = 1.0 - (py + 0.5) * 2.0 / cam.height;
    Vec3d dir_cam{ndc_x * th * aspect, ndc_y * th, -1.0};
    return {cam.pos, rotation_matrix(cam.rot) * dir_cam};
}

}  // namespace drender
