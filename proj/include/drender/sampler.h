#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "drender/scene.h"

// Non-differentiable sampling stage: finds the K nearest surface intersections
// per pixel with a software rasterizer (depth peeling) and records
// representation-specific surface parameters in plain double arithmetic.
// Bit-deterministic for any thread count: rows are partitioned into bands,
// each band rasterizes triangles in a fixed order and writes disjoint rows.

namespace drender {

struct SampleBuffer {
    enum class Kind { mesh, spline, implicit, positions };
    Kind kind = Kind::mesh;
    int width = 0, height = 0, layers = 0;
    std::vector<uint8_t> valid;  // per (layer, y, x)
    std::vector<double> depth;   // normalized depth, used only for layer pairing

    std::vector<int32_t> prim;  // mesh: triangle id; spline: patch id; implicit: mc tri
    std::vector<Vec3d> bary;    // mesh: perspective-correct barycentrics; implicit: betas
    std::vector<Vec2d> uv;      // spline: patch parameters
    std::vector<std::array<int32_t, 6>> corners;  // implicit: lattice index pairs
    std::vector<Vec3d> world;   // pose fast path: interpolated object-space positions

    size_t at(int k, int y, int x) const {
        return (size_t(k) * height + y) * width + x;
    }
    bool is_valid(int k, int y, int x) const { return valid[at(k, y, x)] != 0; }
};

// next peeled layer must be deeper than the previous by this margin
inline constexpr double kPeelEps = 1e-6;

SampleBuffer rasterize_mesh(const TriangleMesh& mesh, const Camera& cam,
                            const PoseParams& pose, int k_layers, int threads = 1);

// tessellates patches until screen edges are subpixel (cap 64x64 micro-quads
// per patch; cap_warning set if the cap was hit), then rasterizes micro-triangles
SampleBuffer rasterize_spline(const BSplineSurface& surf, const Camera& cam,
                              const PoseParams& pose, int k_layers, int threads = 1,
                              bool* cap_warning = nullptr);

SampleBuffer rasterize_implicit(const ImplicitGrid& grid, const Camera& cam,
                                const PoseParams& pose, int k_layers, int threads = 1);

// RtS-pose fast path: records interpolated object-space positions as constants
SampleBuffer sample_positions_for_pose(const TriangleMesh& mesh, const Camera& cam,
                                       const PoseParams& pose, int k_layers,
                                       int threads = 1);

// ---------------------------------------------------------------------------
// marching cubes

// corner i of a cell sits at offset (i&1, i>>1&1, i>>2&1); edge table below
// connects corner pairs. Cases are indexed by an 8-bit mask of f < tau.
struct McCase {
    int n = 0;                     // triangle count
    std::array<int8_t, 30> edges{};  // 3 edge ids per triangle
};
const std::array<McCase, 256>& mc_table();
std::pair<int, int> mc_edge_corners(int edge);

struct McTriangle {
    std::array<int32_t, 6> corners;  // flat lattice indices (a0,b0,a1,b1,a2,b2)
    Vec3d alpha;                     // crossing position along each edge
    std::array<Vec3d, 3> pos;        // object-space vertex positions
};

// surface extraction at grid.tau; cells where any crossed edge has
// |f_a - f_b| below eps_mc(grid) are dropped as degenerate
std::vector<McTriangle> marching_cubes(const ImplicitGrid& grid);
double eps_mc(const ImplicitGrid& grid);

// ---------------------------------------------------------------------------
// helpers shared with tests

// camera ray through a pixel center, for oracle ray casts in tests
struct Ray {
    Vec3d origin, dir;
};
Ray pixel_ray(const Camera& cam, double px, double py);

}  // namespace drender
