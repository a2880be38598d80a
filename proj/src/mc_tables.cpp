#include <algorithm>
#include <cmath>

#include "drender/sampler.h"

// Marching-cubes case table, generated once at startup rather than
// transcribed. For each of the 256 inside/outside corner configurations the
// crossed edges are paired face-by-face (ambiguous faces cut off the inside
// corners — a rule that depends only on the shared face values, so adjacent
// cells always agree and the surface is watertight), traced into closed
// polygons, oriented toward the outside, and fan-triangulated.

namespace drender {

namespace {

// corner i at (i&1, i>>1&1, i>>2&1)
constexpr int kEdgeCorner[12][2] = {
    {0, 1}, {2, 3}, {4, 5}, {6, 7},  // x edges
    {0, 2}, {1, 3}, {4, 6}, {5, 7},  // y edges
    {0, 4}, {1, 5}, {2, 6}, {3, 7},  // z edges
};

// faces as corner cycles
constexpr int kFaceCorner[6][4] = {
    {0, 2, 6, 4},  // x = 0
    {1, 3, 7, 5},  // x = 1
    {0, 1, 5, 4},  // y = 0
    {2, 3, 7, 6},  // y = 1
    {0, 1, 3, 2},  // z = 0
    {4, 5, 7, 6},  // z = 1
};

int edge_of(int a, int b) {
    for (int e = 0; e < 12; e++) {
        if ((kEdgeCorner[e][0] == a && kEdgeCorner[e][1] == b) ||
            (kEdgeCorner[e][0] == b && kEdgeCorner[e][1] == a))
            return e;
    }
    return -1;
}

Vec3d corner_pos(int c) {
    return {double(c & 1), double((c >> 1) & 1), double((c >> 2) & 1)};
}

McCase build_case(int mask) {
    auto inside = [&](int c) { return (mask >> c) & 1; };
    bool crossed[12];
    for (int e = 0; e < 12; e++)
        crossed[e] = inside(kEdgeCorner[e][0]) != inside(kEdgeCorner[e][1]);

    // connections[e] = up to two (partner edge, via face) links
    int partner[12][2];
    int via[12][2];
    int nlink[12] = {};
    auto link = [&](int a, int b, int f) {
        partner[a][nlink[a]] = b;
        via[a][nlink[a]++] = f;
        partner[b][nlink[b]] = a;
        via[b][nlink[b]++] = f;
    };

    for (int f = 0; f < 6; f++) {
        const int* fc = kFaceCorner[f];
        int fe[4];
        for (int k = 0; k < 4; k++) fe[k] = edge_of(fc[k], fc[(k + 1) % 4]);
        int cf[4], ncf = 0;
        for (int k = 0; k < 4; k++)
            if (crossed[fe[k]]) cf[ncf++] = k;
        if (ncf == 2) {
            link(fe[cf[0]], fe[cf[1]], f);
        } else if (ncf == 4) {
            // ambiguous: cut off each inside corner (corner k sits between
            // face edges k-1 and k in the cycle)
            for (int k = 0; k < 4; k++)
                if (inside(fc[k])) link(fe[(k + 3) % 4], fe[k], f);
        }
    }

    McCase out;
    bool seen[12] = {};
    for (int e0 = 0; e0 < 12; e0++) {
        if (!crossed[e0] || seen[e0]) continue;
        // trace the cycle through alternating faces
        int cycle[12], len = 0;
        int cur = e0, prev_face = -1;
        do {
            seen[cur] = true;
            cycle[len++] = cur;
            int pick = (via[cur][0] != prev_face) ? 0 : 1;
            prev_face = via[cur][pick];
            cur = partner[cur][pick];
        } while (cur != e0);

        // orient the polygon normal toward the outside corners
        Vec3d normal{0, 0, 0}, outward{0, 0, 0};
        for (int i = 0; i < len; i++) {
            int a = cycle[i], b = cycle[(i + 1) % len];
            Vec3d pa = (corner_pos(kEdgeCorner[a][0]) + corner_pos(kEdgeCorner[a][1])) * 0.5;
            Vec3d pb = (corner_pos(kEdgeCorner[b][0]) + corner_pos(kEdgeCorner[b][1])) * 0.5;
            normal += cross(pa, pb);
            int c_in = inside(kEdgeCorner[a][0]) ? kEdgeCorner[a][0] : kEdgeCorner[a][1];
            int c_out = kEdgeCorner[a][0] + kEdgeCorner[a][1] - c_in;
            outward += corner_pos(c_out) - corner_pos(c_in);
        }
        if (dot(normal, outward) < 0) std::reverse(cycle, cycle + len);

        for (int i = 1; i + 1 < len; i++) {
            out.edges[out.n * 3 + 0] = int8_t(cycle[0]);
            out.edges[out.n * 3 + 1] = int8_t(cycle[i]);
            out.edges[out.n * 3 + 2] = int8_t(cycle[i + 1]);
            out.n++;
        }
    }
    return out;
}

}  // namespace

const std::array<McCase, 256>& mc_table() {
    static const std::array<McCase, 256> table = [] {
        std::array<McCase, 256> t;
        for (int m = 0; m < 256; m++) t[m] = build_case(m);
        return t;
    }();
    return table;
}

std::pair<int, int> mc_edge_corners(int edge) {
    return {kEdgeCorner[edge][0], kEdgeCorner[edge][1]};
}

double eps_mc(const ImplicitGrid& grid) {
    auto [lo, hi] = std::minmax_element(grid.values.begin(), grid.values.end());
    return 1e-4 * (*hi - *lo);
}

std::vector<McTriangle> marching_cubes(const ImplicitGrid& grid) {
    std::vector<McTriangle> tris;
    if (grid.nx < 2 || grid.ny < 2 || grid.nz < 2) return tris;
    const double eps = eps_mc(grid);
    const auto& table = mc_table();

    auto flat = [&](int x, int y, int z) {
        return int32_t((size_t(z) * grid.ny + y) * grid.nx + x);
    };

    for (int z = 0; z + 1 < grid.nz; z++)
        for (int y = 0; y + 1 < grid.ny; y++)
            for (int x = 0; x + 1 < grid.nx; x++) {
                double f[8];
                int32_t idx[8];
                int mask = 0;
                for (int c = 0; c < 8; c++) {
                    int cx = x + (c & 1), cy = y + ((c >> 1) & 1), cz = z + ((c >> 2) & 1);
                    idx[c] = flat(cx, cy, cz);
                    f[c] = grid.values[idx[c]];
                    if (f[c] < grid.tau) mask |= 1 << c;
                }
                if (mask == 0 || mask == 255) continue;

                // degenerate cell: some crossed edge is nearly flat
                bool degenerate = false;
                for (int e = 0; e < 12 && !degenerate; e++) {
                    int a = kEdgeCorner[e][0], b = kEdgeCorner[e][1];
                    bool crossed = ((mask >> a) & 1) != ((mask >> b) & 1);
                    if (crossed && std::fabs(f[a] - f[b]) < eps) degenerate = true;
                }
                if (degenerate) continue;

                const McCase& c = table[mask];
                for (int t = 0; t < c.n; t++) {
                    McTriangle tri;
                    for (int v = 0; v < 3; v++) {
                        int e = c.edges[t * 3 + v];
                        int a = kEdgeCorner[e][0], b = kEdgeCorner[e][1];
                        double alpha = (grid.tau - f[a]) / (f[b] - f[a]);
                        tri.corners[v * 2 + 0] = idx[a];
                        tri.corners[v * 2 + 1] = idx[b];
                        if (v == 0) tri.alpha.x = alpha;
                        if (v == 1) tri.alpha.y = alpha;
                        if (v == 2) tri.alpha.z = alpha;
                        Vec3d pa = grid.lattice_to_world(x + (a & 1), y + ((a >> 1) & 1),
                                                         z + ((a >> 2) & 1));
                        Vec3d pb = grid.lattice_to_world(x + (b & 1), y + ((b >> 1) & 1),
                                                         z + ((b >> 2) & 1));
                        tri.pos[v] = lerp(pa, pb, alpha);
                    }
                    tris.push_back(tri);
                }
            }
    return tris;
}

}  // namespace drender
