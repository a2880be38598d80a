#include <cmath>
#include <random>

#include "doctest.h"
#include "drender/scene.h"

using namespace drender;

TEST_CASE("project maps the optical axis to the image center") {
    Camera cam;
    cam.width = 200;
    cam.height = 100;
    cam.pos = {0, 0, 4};  // looking down -z at the origin
    Vec3d s = project(Vec3d{0, 0, 0}, cam);
    CHECK(s.x == doctest::Approx(100.0 - 0.5).epsilon(1e-12));
    CHECK(s.y == doctest::Approx(50.0 - 0.5).epsilon(1e-12));
    CHECK(s.z > 0.0);
    CHECK(s.z < 1.0);
}

TEST_CASE("project is invariant to joint translation") {
    Camera cam;
    cam.rot = {0.3, -0.2, 0.1};
    cam.pos = {1, 2, 5};
    Vec3d p{0.4, -0.7, 1.2};
    Vec3d a = project(p, cam);
    Vec3d shift{3.3, -1.1, 0.7};
    Camera cam2 = cam;
    cam2.pos += shift;
    Vec3d b = project(p + shift, cam2);
    CHECK(a.x == doctest::Approx(b.x).epsilon(1e-12));
    CHECK(a.y == doctest::Approx(b.y).epsilon(1e-12));
    CHECK(a.z == doctest::Approx(b.z).epsilon(1e-12));
}

TEST_CASE("normalized depth endpoints") {
    Camera cam;
    cam.pos = {0, 0, 0};
    Vec3d at_near{0.02, -0.01, -cam.znear};
    CHECK(project(at_near, cam).z == doctest::Approx(0.0).epsilon(1e-12));
    Vec3d at_far{0, 0, -cam.zfar};
    CHECK(project(at_far, cam).z == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(view_depth(at_near, cam) == doctest::Approx(cam.znear));
}

TEST_CASE("rigid_transform basics") {
    Pose<double> zero;
    Vec3d p{0.3, 0.8, -1.4};
    Vec3d q = rigid_transform(p, zero);
    CHECK(q.x == p.x);
    CHECK(q.y == p.y);
    CHECK(q.z == p.z);

    Pose<double> flip{{0, 0, M_PI}, {0, 0, 0}};
    q = rigid_transform(Vec3d{1, 0, 0}, flip);
    CHECK(q.x == doctest::Approx(-1.0).epsilon(1e-12));
    CHECK(std::fabs(q.y) < 1e-12);
    CHECK(std::fabs(q.z) < 1e-12);

    // compose a pose with its inverse
    Pose<double> pose{{0.4, -0.9, 0.2}, {1.5, -2.0, 0.3}};
    Vec3d t_inv = rotate_axis_angle(-pose.rot, -pose.trans);
    Pose<double> inv{-pose.rot, t_inv};
    Vec3d r = rigid_transform(rigid_transform(p, pose), inv);
    CHECK(r.x == doctest::Approx(p.x).epsilon(1e-12));
    CHECK(r.y == doctest::Approx(p.y).epsilon(1e-12));
    CHECK(r.z == doctest::Approx(p.z).epsilon(1e-12));
}

TEST_CASE("rotation is stable near the identity") {
    // tiny axis-angle, Taylor branch vs an explicitly evaluated small rotation
    Vec3d r{1e-8, 0, 0};
    Vec3d p{0, 1, 0};
    Vec3d q = rotate_axis_angle(r, p);
    CHECK(q.y == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(q.z == doctest::Approx(1e-8).epsilon(1e-6));

    // derivative of rotation angle about z at theta = 0 moves (1,0,0) along y
    auto j = jacobian_forward(
        [](std::span<const Dual> th) {
            Vec3<Dual> rr{Dual(0.0), Dual(0.0), th[0]};
            Vec3<Dual> out = rotate_axis_angle(rr, Vec3<Dual>{Dual(1.0), Dual(0.0), Dual(0.0)});
            return std::vector<Dual>{out.x, out.y, out.z};
        },
        std::vector{0.0});
    CHECK(j(0, 0) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(j(1, 0) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(j(2, 0) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("project gradient matches finite differences") {
    Camera cam;
    cam.rot = {0.1, 0.25, -0.05};
    cam.pos = {0.4, -0.3, 3.5};
    std::mt19937 rng(991);
    std::uniform_real_distribution<double> u(-0.8, 0.8);
    for (int trial = 0; trial < 20; trial++) {
        // 9 parameters: point + pose; scalar probe mixes the screen coords
        std::vector<double> x{u(rng), u(rng), u(rng), 0.2 * u(rng), 0.2 * u(rng),
                              0.2 * u(rng), u(rng), u(rng), u(rng)};
        auto f = [&](auto xs) {
            using T = std::decay_t<decltype(xs[0])>;
            Vec3<T> p{xs[0], xs[1], xs[2]};
            Pose<T> pose{{xs[3], xs[4], xs[5]}, {xs[6], xs[7], xs[8]}};
            Vec3<T> s = project(rigid_transform(p, pose), cam);
            return s.x + s.y * 2.0 + s.z * 40.0;
        };
        CHECK(check_gradient(f, x, 1e-6) < 1e-5);
    }
}

TEST_CASE("sphere SDF values on the lattice") {
    SphereUnion one;
    one.centers = {{0, 0, 0}};
    one.radii = {1.0};
    ImplicitGrid g = field_to_grid(one, 3, 3, 3, {-1, -1, -1}, {1, 1, 1});
    CHECK(g.at(1, 1, 1) == doctest::Approx(-1.0));     // center
    CHECK(g.at(2, 1, 1) == doctest::Approx(0.0));      // on the surface
    CHECK(g.at(0, 0, 0) == doctest::Approx(std::sqrt(3.0) - 1.0));

    SphereUnion two;
    two.centers = {{0, 0, 0}, {2, 0, 0}};
    two.radii = {1.0, 0.5};
    std::vector<double> p = two.params();
    Vec3d q{1.5, 0, 0};
    double a = length(q) - 1.0, b = length(q - Vec3d{2, 0, 0}) - 0.5;
    CHECK(two.eval(std::span<const double>(p), q) == doctest::Approx(std::min(a, b)));
}

TEST_CASE("swept sphere equals tube depth on the ring") {
    SweptSphere torus;
    torus.r2 = 0.7;
    torus.r1 = 0.25;
    std::vector<double> p = torus.params();
    Vec3d on_ring{0.7, 0, 0};
    CHECK(torus.eval(std::span<const double>(p), on_ring) == doctest::Approx(-0.25));
    Vec3d off{0.7, 0, 0.25};  // tube surface above the ring
    CHECK(torus.eval(std::span<const double>(p), off) == doctest::Approx(0.0));
}

TEST_CASE("field gradients match finite differences on the lattice") {
    SphereUnion field;
    field.centers = {{-0.3, 0.1, 0.0}, {0.4, -0.2, 0.1}};
    field.radii = {0.6, 0.45};
    ImplicitGrid g = field_to_grid(field, 5, 5, 5, {-1, -1, -1}, {0.5, 0.5, 0.5});
    std::vector<double> p = field.params();
    double worst = 0;
    for (int z = 0; z < g.nz; z++)
        for (int y = 0; y < g.ny; y++)
            for (int x = 0; x < g.nx; x++) {
                Vec3d q = g.lattice_to_world(x, y, z);
                auto f = [&](auto xs) { return field.eval(xs, q); };
                worst = std::max(worst, check_gradient(f, p, 1e-6));
            }
    CHECK(worst < 1e-5);

    SweptSphere torus;
    std::vector<double> tp = torus.params();
    worst = 0;
    for (int z = 0; z < g.nz; z++)
        for (int y = 0; y < g.ny; y++)
            for (int x = 0; x < g.nx; x++) {
                Vec3d q = g.lattice_to_world(x, y, z);
                auto f = [&](auto xs) { return torus.eval(xs, q); };
                worst = std::max(worst, check_gradient(f, tp, 1e-6));
            }
    CHECK(worst < 1e-5);
}

TEST_CASE("texture sampling") {
    Texture tex;
    tex.width = 2;
    tex.height = 2;
    tex.texels = {{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 0}};
    // texel centers
    Vec3d c = sample_texture(tex, Vec2d{0.25, 0.25});
    CHECK(c.x == doctest::Approx(1.0));
    CHECK(c.y == doctest::Approx(0.0));
    // midpoint blends all four equally
    c = sample_texture(tex, Vec2d{0.5, 0.5});
    CHECK(c.x == doctest::Approx(0.5));
    CHECK(c.y == doctest::Approx(0.5));
    CHECK(c.z == doctest::Approx(0.25));
    // clamp addressing
    c = sample_texture(tex, Vec2d{-3.0, -3.0});
    CHECK(c.x == doctest::Approx(1.0));
}

TEST_CASE("procedural meshes are well formed") {
    TriangleMesh cube = make_cuboid({0.8, 0.55, 0.35}, {0.9, 0.4, 0.2});
    CHECK(cube.triangles.size() == 12);
    CHECK(cube.positions.size() == 24);

    TriangleMesh ico = make_icosphere(2, 1.5);
    CHECK(ico.triangles.size() == 20 * 4 * 4);
    for (const Vec3d& p : ico.positions)
        CHECK(length(p) == doctest::Approx(1.5).epsilon(1e-9));

    TriangleMesh uv = make_uv_sphere(25, 50, 1.0);
    CHECK(uv.triangles.size() == 2 * 25 * 50);

    TriangleMesh disk = make_disk(1.0, 16, {1, 1, 1});
    CHECK(disk.triangles.size() == 16);

    compute_vertex_normals(ico);
    for (size_t i = 0; i < ico.positions.size(); i++)
        CHECK(dot(ico.normals[i], normalized(ico.positions[i])) > 0.9);
}
