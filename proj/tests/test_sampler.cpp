#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include "drender/sampler.h"

using namespace drender;

namespace {

const double pi = 3.14159265358979323846;

Camera make_cam(int w, int h) {
    Camera cam;
    cam.width = w;
    cam.height = h;
    return cam;
}

double norm_depth(const Camera& cam, double d) {
    return (1.0 / cam.znear - 1.0 / d) / (1.0 / cam.znear - 1.0 / cam.zfar);
}

// world point whose projection is the screen position (sx, sy) at view depth d
Vec3d unproject(const Camera& cam, double sx, double sy, double d) {
    double th = std::tan(0.5 * cam.fov_y);
    double aspect = double(cam.width) / double(cam.height);
    double ndc_x = (sx + 0.5) * 2.0 / cam.width - 1.0;
    double ndc_y = 1.0 - (sy + 0.5) * 2.0 / cam.height;
    Vec3d q{ndc_x * th * aspect * d, ndc_y * th * d, -d};
    return cam.pos + rotation_matrix(cam.rot) * q;
}

struct RayHit {
    double t = 0;
    Vec3d bary;
};

bool ray_triangle(const Ray& ray, const Vec3d& v0, const Vec3d& v1, const Vec3d& v2,
                  RayHit& hit) {
    Vec3d e1 = v1 - v0, e2 = v2 - v0;
    Vec3d p = cross(ray.dir, e2);
    double det = dot(e1, p);
    if (std::abs(det) < 1e-14) return false;
    double inv = 1.0 / det;
    Vec3d s = ray.origin - v0;
    double u = dot(s, p) * inv;
    Vec3d q = cross(s, e1);
    double v = dot(ray.dir, q) * inv;
    double t = dot(e2, q) * inv;
    if (t <= 0) return false;
    hit = {t, {1.0 - u - v, u, v}};
    return true;
}

TriangleMesh two_tri_quad(double half, double z) {
    TriangleMesh m;
    m.positions = {{-half, -half, z}, {half, -half, z}, {half, half, z}, {-half, half, z}};
    m.triangles = {{0, 1, 2}, {0, 2, 3}};
    return m;
}

void append_mesh(TriangleMesh& dst, const TriangleMesh& src) {
    int32_t base = int32_t(dst.positions.size());
    dst.positions.insert(dst.positions.end(), src.positions.begin(), src.positions.end());
    for (const Vec3i& t : src.triangles)
        dst.triangles.push_back({t.x + base, t.y + base, t.z + base});
}

bool edge_top_left(const Vec2d& a, const Vec2d& b) {
    return (a.y == b.y && b.x > a.x) || (b.y < a.y);
}

// coverage decision replicated on already-projected screen vertices; swaps
// winding like the rasterizer so the fill rule sees a positive triangle
bool covered(Vec2d s0, Vec2d s1, Vec2d s2, double px, double py) {
    double area2 = (s1.x - s0.x) * (s2.y - s0.y) - (s1.y - s0.y) * (s2.x - s0.x);
    if (area2 == 0) return false;
    if (area2 < 0) std::swap(s1, s2);
    double w0 = (s2.x - s1.x) * (py - s1.y) - (s2.y - s1.y) * (px - s1.x);
    double w1 = (s0.x - s2.x) * (py - s2.y) - (s0.y - s2.y) * (px - s2.x);
    double w2 = (s1.x - s0.x) * (py - s0.y) - (s1.y - s0.y) * (px - s0.x);
    return (w0 > 0 || (w0 == 0 && edge_top_left(s1, s2))) &&
           (w1 > 0 || (w1 == 0 && edge_top_left(s2, s0))) &&
           (w2 > 0 || (w2 == 0 && edge_top_left(s0, s1)));
}

}  // namespace

TEST_CASE("sampler: projection and pixel rays are mutual inverses") {
    std::mt19937_64 rng(41);
    std::uniform_real_distribution<double> u01(0, 1);
    for (int trial = 0; trial < 50; trial++) {
        Camera cam = make_cam(96, 64);
        cam.rot = {u01(rng) - 0.5, u01(rng) - 0.5, u01(rng) - 0.5};
        cam.pos = {4 * u01(rng) - 2, 4 * u01(rng) - 2, 4 * u01(rng) - 2};
        double px = u01(rng) * cam.width - 0.5, py = u01(rng) * cam.height - 0.5;
        double d = 1.0 + 19.0 * u01(rng);

        // pixel_ray's direction has unit depth, so origin + d * dir lies at
        // view depth d through the pixel center
        Ray ray = pixel_ray(cam, px, py);
        Vec3d s = project(Vec3d(ray.origin + ray.dir * d), cam);
        CHECK(s.x == doctest::Approx(px).epsilon(1e-9));
        CHECK(s.y == doctest::Approx(py).epsilon(1e-9));
        CHECK(s.z == doctest::Approx(norm_depth(cam, d)).epsilon(1e-9));

        Vec3d w = unproject(cam, px, py, d);
        Vec3d s2 = project(w, cam);
        CHECK(s2.x == doctest::Approx(px).epsilon(1e-9));
        CHECK(s2.y == doctest::Approx(py).epsilon(1e-9));
    }
}

TEST_CASE("sampler: full-viewport triangle fills one layer") {
    Camera cam = make_cam(32, 32);
    TriangleMesh mesh;
    mesh.positions = {unproject(cam, -50, -50, 2), unproject(cam, 150, -50, 2),
                      unproject(cam, -50, 150, 2)};
    mesh.triangles = {{0, 1, 2}};
    SampleBuffer sb = rasterize_mesh(mesh, cam, {}, 2);

    double z2 = norm_depth(cam, 2.0);
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++) {
            size_t i = sb.at(0, y, x);
            REQUIRE(sb.valid[i] == 1);
            CHECK(sb.prim[i] == 0);
            CHECK(sb.depth[i] == doctest::Approx(z2).epsilon(1e-9));
            CHECK(sb.bary[i].x + sb.bary[i].y + sb.bary[i].z ==
                  doctest::Approx(1.0).epsilon(1e-12));
            CHECK(sb.valid[sb.at(1, y, x)] == 0);
        }
}

TEST_CASE("sampler: shared edges rasterize exactly once") {
    // square split along the diagonal; the fill rule must assign every pixel
    // of [8,12)x[8,12) to exactly one triangle
    Camera cam = make_cam(32, 32);
    TriangleMesh mesh;
    mesh.positions = {unproject(cam, 8, 8, 2), unproject(cam, 12, 8, 2),
                      unproject(cam, 8, 12, 2), unproject(cam, 12, 12, 2)};
    mesh.triangles = {{0, 1, 2}, {1, 3, 2}};
    SampleBuffer sb = rasterize_mesh(mesh, cam, {}, 1);

    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++) {
            size_t i = sb.at(0, y, x);
            bool inside = x >= 8 && x < 12 && y >= 8 && y < 12;
            CHECK(int(sb.valid[i]) == int(inside));
            if (inside) CHECK(sb.prim[i] == (x + y < 20 ? 0 : 1));
        }

    // the pixel at vertex A lands exactly on barycentric (1, 0, 0)
    size_t a = sb.at(0, 8, 8);
    CHECK(sb.bary[a].x == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(sb.bary[a].y == doctest::Approx(0.0).epsilon(1e-9));
    CHECK(sb.bary[a].z == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("sampler: stacked quads peel in depth order") {
    Camera cam = make_cam(32, 32);
    TriangleMesh mesh = two_tri_quad(1.0, -2.0);
    append_mesh(mesh, two_tri_quad(1.0, -5.0));
    SampleBuffer sb = rasterize_mesh(mesh, cam, {}, 3);

    int center = sb.width / 2;
    size_t i0 = sb.at(0, center, center), i1 = sb.at(1, center, center);
    size_t i2 = sb.at(2, center, center);
    REQUIRE(sb.valid[i0] == 1);
    REQUIRE(sb.valid[i1] == 1);
    CHECK(sb.valid[i2] == 0);
    CHECK(sb.prim[i0] < 2);   // near quad first
    CHECK(sb.prim[i1] >= 2);  // far quad behind it
    CHECK(sb.depth[i0] == doctest::Approx(norm_depth(cam, 2.0)).epsilon(1e-9));
    CHECK(sb.depth[i1] == doctest::Approx(norm_depth(cam, 5.0)).epsilon(1e-9));
    CHECK(sb.depth[i0] < sb.depth[i1]);

    // validity is a prefix across layers everywhere
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++)
            for (int k = 1; k < 3; k++)
                if (sb.is_valid(k, y, x)) CHECK(sb.is_valid(k - 1, y, x));
}

TEST_CASE("sampler: peeled layers match a ray-cast oracle") {
    Camera cam = make_cam(32, 32);
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u01(0, 1);

    TriangleMesh mesh;
    for (int f = 0; f < 12; f++) {
        for (int v = 0; v < 3; v++)
            mesh.positions.push_back({2.4 * u01(rng) - 1.2, 2.4 * u01(rng) - 1.2,
                                      -1.5 - 3.5 * u01(rng)});
        mesh.triangles.push_back({3 * f, 3 * f + 1, 3 * f + 2});
    }
    PoseParams pose;
    pose.rot = {0.1, -0.2, 0.05};
    pose.trans = {0.05, -0.1, 0.2};

    const int K = 4;
    SampleBuffer sb = rasterize_mesh(mesh, cam, pose, K);
    SampleBuffer sp = sample_positions_for_pose(mesh, cam, pose, K);

    std::vector<Vec3d> world(mesh.positions.size());
    for (size_t i = 0; i < world.size(); i++)
        world[i] = rigid_transform(mesh.positions[i], pose);

    int checked = 0;
    for (int y = 0; y < cam.height; y++)
        for (int x = 0; x < cam.width; x++) {
            // collect hits with the rasterizer's coverage rule but ray-cast
            // depth and barycentrics, then replay the peel chain
            struct Hit {
                double z;
                int prim;
                Vec3d bary;
            };
            std::vector<Hit> hits;
            Ray ray = pixel_ray(cam, x, y);
            for (size_t f = 0; f < mesh.triangles.size(); f++) {
                const Vec3i& tr = mesh.triangles[f];
                Vec3d s0 = project(world[tr.x], cam), s1 = project(world[tr.y], cam);
                Vec3d s2 = project(world[tr.z], cam);
                if (!covered({s0.x, s0.y}, {s1.x, s1.y}, {s2.x, s2.y}, x, y)) continue;
                RayHit rh;
                REQUIRE(ray_triangle(ray, world[tr.x], world[tr.y], world[tr.z], rh));
                hits.push_back({norm_depth(cam, rh.t), int(f), rh.bary});
            }
            double prev = -1e300;
            for (int k = 0; k < K; k++) {
                const Hit* best = nullptr;
                for (const Hit& h : hits)
                    if (h.z > prev + kPeelEps && (!best || h.z < best->z)) best = &h;
                size_t i = sb.at(k, y, x);
                if (!best) {
                    CHECK(sb.valid[i] == 0);
                    break;
                }
                REQUIRE(sb.valid[i] == 1);
                CHECK(sb.prim[i] == best->prim);
                CHECK(sb.depth[i] == doctest::Approx(best->z).epsilon(1e-8));
                CHECK(std::abs(sb.bary[i].x - best->bary.x) < 1e-6);
                CHECK(std::abs(sb.bary[i].y - best->bary.y) < 1e-6);
                CHECK(std::abs(sb.bary[i].z - best->bary.z) < 1e-6);
                prev = best->z;
                checked++;

                // pose fast path: same sampling, object-space positions
                REQUIRE(sp.valid[i] == 1);
                CHECK(sp.prim[i] == sb.prim[i]);
                const Vec3i& tr = mesh.triangles[sb.prim[i]];
                Vec3d obj = mesh.positions[tr.x] * sb.bary[i].x +
                            mesh.positions[tr.y] * sb.bary[i].y +
                            mesh.positions[tr.z] * sb.bary[i].z;
                CHECK(length(sp.world[i] - obj) < 1e-6);
                Vec3d rt = project(rigid_transform(sp.world[i], pose), cam);
                CHECK(rt.x == doctest::Approx(double(x)).epsilon(1e-6));
                CHECK(rt.y == doctest::Approx(double(y)).epsilon(1e-6));
            }
        }
    CHECK(checked > 200);  // the scene actually covers pixels, some multi-layer
}

TEST_CASE("sampler: identical output for any thread count") {
    Camera cam = make_cam(48, 40);
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u01(0, 1);
    TriangleMesh mesh;
    for (int f = 0; f < 20; f++) {
        for (int v = 0; v < 3; v++)
            mesh.positions.push_back({3 * u01(rng) - 1.5, 3 * u01(rng) - 1.5,
                                      -1.0 - 4.0 * u01(rng)});
        mesh.triangles.push_back({3 * f, 3 * f + 1, 3 * f + 2});
    }
    SampleBuffer a = rasterize_mesh(mesh, cam, {}, 3, 1);
    SampleBuffer b = rasterize_mesh(mesh, cam, {}, 3, 5);
    REQUIRE(a.valid.size() == b.valid.size());
    for (size_t i = 0; i < a.valid.size(); i++) {
        CHECK(a.valid[i] == b.valid[i]);
        CHECK(a.depth[i] == b.depth[i]);
        CHECK(a.prim[i] == b.prim[i]);
        CHECK(a.bary[i].x == b.bary[i].x);
        CHECK(a.bary[i].y == b.bary[i].y);
        CHECK(a.bary[i].z == b.bary[i].z);
    }
}

TEST_CASE("sampler: empty and behind-camera meshes produce no samples") {
    Camera cam = make_cam(16, 16);
    SampleBuffer sb = rasterize_mesh(TriangleMesh{}, cam, {}, 2);
    CHECK(sb.valid.size() == size_t(2 * 16 * 16));
    CHECK(std::count(sb.valid.begin(), sb.valid.end(), 0) == 2 * 16 * 16);

    TriangleMesh behind = two_tri_quad(1.0, 2.0);  // +z is behind the camera
    sb = rasterize_mesh(behind, cam, {}, 2);
    CHECK(std::count(sb.valid.begin(), sb.valid.end(), 0) == 2 * 16 * 16);

    // straddling the near plane: the front part must clip away cleanly
    TriangleMesh straddle;
    straddle.positions = {{0, -4, 1.0}, {3, 4, -6}, {-3, 4, -6}};
    straddle.triangles = {{0, 1, 2}};
    sb = rasterize_mesh(straddle, cam, {}, 1);
    int n_valid = 0;
    for (size_t i = 0; i < sb.valid.size(); i++)
        if (sb.valid[i]) {
            n_valid++;
            CHECK(sb.depth[i] >= 0.0);
            CHECK(sb.depth[i] <= 1.0);
        }
    CHECK(n_valid > 0);
}

TEST_CASE("sampler: flat patches recover affine patch parameters") {
    Camera cam = make_cam(32, 32);
    Vec3d O{-1.95, -1.65, -4.0};
    Vec3d du{1.3, 0, 0}, dv{0, 1.1, 0};

    SUBCASE("tilted") { dv = {0, 1.1, 0.6}; }

    BSplineSurface surf;
    surf.m = surf.n = 4;
    surf.control.resize(16);
    for (int i = 0; i < 4; i++)
        for (int j = 0; j < 4; j++) surf.at(i, j) = O + du * double(i) + dv * double(j);
    REQUIRE(surf.patches_u() == 1);
    REQUIRE(surf.patches_v() == 1);

    bool cap = true;
    SampleBuffer sb = rasterize_spline(surf, cam, {}, 1, 1, &cap);
    CHECK(!cap);

    // with collinear uniformly spaced control points the surface has linear
    // precision: s(u, v) = O + (u+1) du + (v+1) dv, so the recorded (u, v)
    // must match the ray/plane intersection
    Vec3d n = cross(du, dv);
    double gram[3] = {dot(du, du), dot(du, dv), dot(dv, dv)};
    double det = gram[0] * gram[2] - gram[1] * gram[1];
    int n_valid = 0;
    for (int y = 0; y < 32; y++)
        for (int x = 0; x < 32; x++) {
            size_t i = sb.at(0, y, x);
            if (!sb.valid[i]) continue;
            n_valid++;
            CHECK(sb.prim[i] == 0);
            Ray ray = pixel_ray(cam, x, y);
            double t = dot(n, O - ray.origin) / dot(n, ray.dir);
            Vec3d h = ray.origin + ray.dir * t - O;
            double u = (gram[2] * dot(du, h) - gram[1] * dot(dv, h)) / det - 1.0;
            double v = (gram[0] * dot(dv, h) - gram[1] * dot(du, h)) / det - 1.0;
            CHECK(std::abs(sb.uv[i].x - u) < 1e-6);
            CHECK(std::abs(sb.uv[i].y - v) < 1e-6);
            CHECK(sb.uv[i].x >= -1e-9);
            CHECK(sb.uv[i].x <= 1 + 1e-9);
        }
    CHECK(n_valid > 50);
}

TEST_CASE("sampler: spline cylinder silhouette matches the tangent cone") {
    // surface of revolution: periodic ring of 12 control points at 4 heights;
    // the spline circle through a 12-point control polygon of radius R has
    // radius R (2 + cos 30deg) / 3
    Camera cam = make_cam(64, 64);
    double R = 0.8, D = 4.0;
    BSplineSurface surf;
    surf.m = 12;
    surf.n = 4;
    surf.periodic_u = true;
    surf.control.resize(12 * 4);
    for (int a = 0; a < 12; a++)
        for (int j = 0; j < 4; j++) {
            double th = 2.0 * pi * a / 12;
            surf.at(a, j) = {R * std::cos(th), j - 1.5, R * std::sin(th) - D};
        }
    REQUIRE(surf.patches_u() == 12);
    REQUIRE(surf.patches_v() == 1);

    bool cap = true;
    SampleBuffer sb = rasterize_spline(surf, cam, {}, 1, 1, &cap);
    CHECK(!cap);

    double r = R * (2.0 + std::cos(pi / 6)) / 3.0;
    double f = (cam.width / 2.0) / std::tan(0.5 * cam.fov_y);
    double dx = f * r / std::sqrt(D * D - r * r);
    double cx = 0.5 * (cam.width - 1);

    int y = cam.height / 2;  // row through the cylinder body
    int min_x = cam.width, max_x = -1;
    for (int x = 0; x < cam.width; x++)
        if (sb.is_valid(0, y, x)) {
            min_x = std::min(min_x, x);
            max_x = std::max(max_x, x);
        }
    REQUIRE(max_x >= 0);
    CHECK(std::abs(min_x - (cx - dx)) <= 1.0);
    CHECK(std::abs(max_x - (cx + dx)) <= 1.0);

    // every column between the silhouette edges is hit on this row
    for (int x = min_x; x <= max_x; x++) CHECK(sb.is_valid(0, y, x));
}

TEST_CASE("sampler: spline corner cases") {
    Camera cam = make_cam(32, 32);
    BSplineSurface surf;
    surf.m = surf.n = 4;
    surf.control.resize(16);

    SUBCASE("patch behind the camera is invalid") {
        for (int i = 0; i < 4; i++)
            for (int j = 0; j < 4; j++)
                surf.at(i, j) = {i - 1.5, j - 1.5, 4.0};
        SampleBuffer sb = rasterize_spline(surf, cam, {}, 1);
        CHECK(std::count(sb.valid.begin(), sb.valid.end(), 0) == 32 * 32);
    }

    SUBCASE("oversized patch trips the tessellation cap") {
        Camera big = make_cam(128, 128);
        for (int i = 0; i < 4; i++)
            for (int j = 0; j < 4; j++)
                surf.at(i, j) = {3.0 * (i - 1.5), 3.0 * (j - 1.5), -1.2};
        bool cap = false;
        SampleBuffer sb = rasterize_spline(surf, big, {}, 1, 1, &cap);
        CHECK(cap);
        CHECK(std::count(sb.valid.begin(), sb.valid.end(), 1) > 0);
    }
}

TEST_CASE("mc: single inside corner yields one triangle on incident edges") {
    ImplicitGrid g;
    g.nx = g.ny = g.nz = 2;
    g.origin = {0, 0, 0};
    g.spacing = {1, 1, 1};
    g.tau = 0;
    g.values = {-1, 1, 1, 1, 1, 1, 1, 1};  // corner (0,0,0) inside

    std::vector<McTriangle> tris = marching_cubes(g);
    REQUIRE(tris.size() == 1);
    const McTriangle& t = tris[0];

    // crossings at the midpoints of the three edges leaving the corner
    std::set<std::pair<int, int>> pairs;
    const double alphas[3] = {t.alpha.x, t.alpha.y, t.alpha.z};
    for (int v = 0; v < 3; v++) {
        pairs.insert({t.corners[2 * v], t.corners[2 * v + 1]});
        CHECK(alphas[v] == doctest::Approx(0.5).epsilon(1e-12));
    }
    CHECK(pairs == std::set<std::pair<int, int>>{{0, 1}, {0, 2}, {0, 4}});

    std::set<std::array<double, 3>> got, want{{0.5, 0, 0}, {0, 0.5, 0}, {0, 0, 0.5}};
    for (int v = 0; v < 3; v++) got.insert({t.pos[v].x, t.pos[v].y, t.pos[v].z});
    CHECK(got == want);

    // the normal points away from the inside corner
    Vec3d n = cross(t.pos[1] - t.pos[0], t.pos[2] - t.pos[0]);
    Vec3d centroid = (t.pos[0] + t.pos[1] + t.pos[2]) * (1.0 / 3.0);
    CHECK(dot(n, centroid - Vec3d{0, 0, 0}) > 0);

    // complementary case: single outside corner, normal toward it
    for (double& v : g.values) v = -v;
    std::vector<McTriangle> inv = marching_cubes(g);
    REQUIRE(inv.size() == 1);
    Vec3d ni = cross(inv[0].pos[1] - inv[0].pos[0], inv[0].pos[2] - inv[0].pos[0]);
    CHECK(dot(ni, Vec3d{0, 0, 0} - centroid) > 0);
}

TEST_CASE("mc: every case triangulates exactly the crossed edges") {
    const auto& table = mc_table();
    for (int mask = 0; mask < 256; mask++) {
        std::set<int> crossed;
        for (int e = 0; e < 12; e++) {
            auto [a, b] = mc_edge_corners(e);
            if (((mask >> a) & 1) != ((mask >> b) & 1)) crossed.insert(e);
        }
        const McCase& c = table[mask];
        if (mask == 0 || mask == 255) {
            CHECK(c.n == 0);
            continue;
        }
        REQUIRE(c.n >= 1);
        REQUIRE(c.n <= 10);
        std::set<int> used;
        for (int t = 0; t < c.n; t++) {
            int e0 = c.edges[3 * t], e1 = c.edges[3 * t + 1], e2 = c.edges[3 * t + 2];
            CHECK(e0 != e1);
            CHECK(e1 != e2);
            CHECK(e0 != e2);
            for (int e : {e0, e1, e2}) {
                CHECK(crossed.count(e) == 1);
                used.insert(e);
            }
        }
        CHECK(used == crossed);
    }
}

namespace {

// canonical key for an extracted vertex: the lattice edge it sits on
using VKey = std::pair<int32_t, int32_t>;

// closed-manifold check: every undirected edge bounds exactly two triangles
// with opposite directions; returns Euler characteristic V - E + F
int euler_characteristic(const std::vector<McTriangle>& tris) {
    std::set<VKey> verts;
    std::map<std::pair<VKey, VKey>, int> directed;
    for (const McTriangle& t : tris) {
        VKey k[3];
        for (int v = 0; v < 3; v++) {
            k[v] = {std::min(t.corners[2 * v], t.corners[2 * v + 1]),
                    std::max(t.corners[2 * v], t.corners[2 * v + 1])};
            verts.insert(k[v]);
        }
        REQUIRE(k[0] != k[1]);
        REQUIRE(k[1] != k[2]);
        REQUIRE(k[0] != k[2]);
        for (int v = 0; v < 3; v++) directed[{k[v], k[(v + 1) % 3]}]++;
    }
    std::set<std::pair<VKey, VKey>> undirected;
    for (const auto& [e, count] : directed) {
        REQUIRE(count == 1);  // consistent orientation: each direction once
        REQUIRE(directed.count({e.second, e.first}) == 1);
        undirected.insert({std::min(e.first, e.second), std::max(e.first, e.second)});
    }
    return int(verts.size()) - int(undirected.size()) + int(tris.size());
}

struct SphereField {
    Vec3d c;
    double r;
    std::vector<double> params() const { return {}; }
    double eval(std::span<const double>, const Vec3d& q) const {
        return length(q - c) - r;
    }
};

}  // namespace

TEST_CASE("mc: sphere and torus grids extract closed oriented manifolds") {
    SphereField sphere{{0.013, 0.007, -0.011}, 0.7};
    ImplicitGrid g = field_to_grid(sphere, 12, 12, 12, {-1, -1, -1},
                                   {2.0 / 11, 2.0 / 11, 2.0 / 11});
    std::vector<McTriangle> tris = marching_cubes(g);
    REQUIRE(tris.size() > 100);
    CHECK(euler_characteristic(tris) == 2);

    // normals all point away from the center
    for (const McTriangle& t : tris) {
        Vec3d n = cross(t.pos[1] - t.pos[0], t.pos[2] - t.pos[0]);
        Vec3d centroid = (t.pos[0] + t.pos[1] + t.pos[2]) * (1.0 / 3.0);
        CHECK(dot(n, centroid - sphere.c) > 0);
    }

    SweptSphere torus;
    torus.center = {0.009, -0.006, 0.012};
    torus.r2 = 0.55;
    torus.r1 = 0.2;
    ImplicitGrid gt = field_to_grid(torus, 20, 20, 20, {-1, -1, -1},
                                    {2.0 / 19, 2.0 / 19, 2.0 / 19});
    std::vector<McTriangle> tt = marching_cubes(gt);
    REQUIRE(tt.size() > 100);
    CHECK(euler_characteristic(tt) == 0);
}

TEST_CASE("mc: degenerate and uniform cells extract nothing") {
    ImplicitGrid g;
    g.nx = g.ny = g.nz = 2;
    g.origin = {0, 0, 0};
    g.spacing = {1, 1, 1};
    g.tau = 0;

    // one crossed edge has a vanishing value gap: the cell is dropped
    g.values = {-1e-13, 1e-13, 1, 1, 1, 1, 1, 1};
    CHECK(marching_cubes(g).empty());

    g.values.assign(8, 1.0);  // all outside
    CHECK(marching_cubes(g).empty());
    g.values.assign(8, -1.0);  // all inside
    CHECK(marching_cubes(g).empty());

    Camera cam = make_cam(16, 16);
    g.values.assign(8, 1.0);
    SampleBuffer sb = rasterize_implicit(g, cam, {}, 2);
    CHECK(std::count(sb.valid.begin(), sb.valid.end(), 0) == 2 * 16 * 16);
}

TEST_CASE("sampler: implicit sphere silhouette area and layer records") {
    double r = 0.7, D = 4.0;
    SphereField sphere{{0, 0, 0}, r};
    ImplicitGrid g = field_to_grid(sphere, 40, 40, 40, {-1.1, -1.1, -1.1},
                                   {2.2 / 39, 2.2 / 39, 2.2 / 39});
    Camera cam = make_cam(64, 64);
    PoseParams pose;
    pose.trans = {0, 0, -D};
    SampleBuffer sb = rasterize_implicit(g, cam, pose, 2);

    int area = 0;
    for (int y = 0; y < 64; y++)
        for (int x = 0; x < 64; x++)
            if (sb.is_valid(0, y, x)) area++;
    double f = (cam.width / 2.0) / std::tan(0.5 * cam.fov_y);
    double predicted = pi * std::pow(f * r / std::sqrt(D * D - r * r), 2);
    CHECK(std::abs(area - predicted) < 0.05 * predicted);

    // front and back of the sphere peel into layers 0 and 1 at the center
    int c = 32;
    REQUIRE(sb.is_valid(0, c, c));
    REQUIRE(sb.is_valid(1, c, c));
    CHECK(sb.depth[sb.at(0, c, c)] ==
          doctest::Approx(norm_depth(cam, D - r)).epsilon(5e-3));
    CHECK(sb.depth[sb.at(1, c, c)] ==
          doctest::Approx(norm_depth(cam, D + r)).epsilon(5e-3));

    // recorded corner pairs straddle the threshold; barycentrics are convex
    for (size_t i = 0; i < sb.valid.size(); i++) {
        if (!sb.valid[i]) continue;
        for (int v = 0; v < 3; v++) {
            double fa = g.values[sb.corners[i][2 * v]] - g.tau;
            double fb = g.values[sb.corners[i][2 * v + 1]] - g.tau;
            CHECK(fa * fb < 0);
        }
        CHECK(sb.bary[i].x + sb.bary[i].y + sb.bary[i].z ==
              doctest::Approx(1.0).epsilon(1e-12));
        CHECK(sb.bary[i].x >= -1e-12);
        CHECK(sb.bary[i].y >= -1e-12);
        CHECK(sb.bary[i].z >= -1e-12);
    }
}
