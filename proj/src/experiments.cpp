#include "drender/experiments.h"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <random>

#include "drender/evaluator.h"
#include "drender/splat.h"

namespace drender {

namespace {

using Clock = std::chrono::steady_clock;

double ms_since(Clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(Clock::now() - t0).count();
}

template <class T>
Pose<T> lift_pose(const PoseParams& p) {
    return {to_vec3<T>(p.rot), to_vec3<T>(p.trans)};
}

std::string fmt_g(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string fmt_hex(uint64_t v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

// loss log holds only reproducible columns; wall time goes to timing.csv
void write_records(const std::string& dir, const std::vector<LossRecord>& records) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::vector<double>> times;
    rows.reserve(records.size());
    for (const LossRecord& r : records) {
        rows.push_back({std::to_string(r.iteration), fmt_g(r.loss), fmt_hex(r.param_hash)});
        times.push_back({double(r.iteration), r.wall_ms});
    }
    save_csv(join(dir, "loss.csv"), {"iteration", "loss", "param_hash"}, rows);
    save_csv(join(dir, "timing.csv"), {"iteration", "wall_ms"}, times);
}

void write_renders(const std::string& dir, const Image4<double>& initial,
                   const Image4<double>& final_img, const Image4<double>& target) {
    save_png(join(dir, "initial.png"), initial);
    save_png(join(dir, "final.png"), final_img);
    save_png(join(dir, "target.png"), target);
}

void ensure_dir(const std::string& dir) {
    if (!dir.empty()) std::filesystem::create_directories(dir);
}

void validate_size(int w, int h) {
    if (w < 16 || h < 16) throw std::invalid_argument("image size must be at least 16x16");
}

void append_mesh(TriangleMesh& a, const TriangleMesh& b) {
    int base = int(a.positions.size());
    a.positions.insert(a.positions.end(), b.positions.begin(), b.positions.end());
    a.colors.insert(a.colors.end(), b.colors.begin(), b.colors.end());
    for (const Vec3i& t : b.triangles)
        a.triangles.push_back({t.x + base, t.y + base, t.z + base});
}

Vec3d random_unit(std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    while (true) {
        Vec3d v{u(rng), u(rng), u(rng)};
        double l = length(v);
        if (l > 1e-3 && l <= 1.0) return v / l;
    }
}

// mean alpha mask at the 0.5 threshold
std::vector<uint8_t> alpha_mask(const Image4<double>& img) {
    std::vector<uint8_t> m(img.pixels.size());
    for (size_t i = 0; i < img.pixels.size(); i++) m[i] = img.pixels[i].w > 0.5;
    return m;
}

// evaluation window feeding output rows [y0, y1): splats gather one row out
std::pair<int, int> eval_window(int y0, int y1, int height) {
    return {y0 > 0 ? y0 - 1 : 0, y1 < height ? y1 + 1 : height};
}

template <class Field, class T>
std::vector<T> field_lattice(const Field& field, const ImplicitGrid& g,
                             std::span<const T> params) {
    std::vector<T> out(g.values.size());
    for (int z = 0; z < g.nz; z++)
        for (int y = 0; y < g.ny; y++)
            for (int x = 0; x < g.nx; x++)
                out[(size_t(z) * g.ny + y) * g.nx + x] =
                    field.eval(params, g.lattice_to_world(x, y, z));
    return out;
}

void apply_params(SphereUnion& f, std::span<const double> p) {
    int k = f.per();
    for (size_t i = 0; i < f.centers.size(); i++) {
        f.centers[i].x = p[i * k + 0];
        f.centers[i].y = p[i * k + 1];
        if (!f.planar) f.centers[i].z = p[i * k + 2];
        f.radii[i] = p[i * k + (f.planar ? 2 : 3)];
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// shared helpers

Image4<double> render_mesh_image(const TriangleMesh& mesh, const Camera& cam,
                                 const PoseParams& pose, int layers, int threads,
                                 const Vec3d& background) {
    SampleBuffer sb = rasterize_mesh(mesh, cam, pose, layers, threads);
    GBuffer<double> gb = evaluate_mesh(mesh, MeshAttribs<double>{}, sb);
    ShadedLayer<double> sl = mesh.colors.empty()
                                 ? shade_flat(gb, Vec3d{0.7, 0.7, 0.7})
                                 : shade_vertex_color(gb);
    PositionBuffer<double> pb = build_position_buffer(gb, cam, pose);
    return composite_background(splat_multilayer(sl, pb), background);
}

double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.empty())
        throw std::invalid_argument("correlation needs equal non-empty spans");
    double ma = 0, mb = 0;
    for (size_t i = 0; i < a.size(); i++) {
        ma += a[i];
        mb += b[i];
    }
    ma /= double(a.size());
    mb /= double(b.size());
    double cab = 0, caa = 0, cbb = 0;
    for (size_t i = 0; i < a.size(); i++) {
        cab += (a[i] - ma) * (b[i] - mb);
        caa += (a[i] - ma) * (a[i] - ma);
        cbb += (b[i] - mb) * (b[i] - mb);
    }
    if (caa == 0 || cbb == 0) return 0;
    return cab / std::sqrt(caa * cbb);
}

int count_mask_holes(const std::vector<uint8_t>& mask, int width, int height) {
    if (mask.size() != size_t(width) * height)
        throw std::invalid_argument("mask size mismatch");
    std::vector<uint8_t> visited(mask.size(), 0);
    auto flood = [&](int sx, int sy) {
        std::deque<std::pair<int, int>> q{{sx, sy}};
        visited[size_t(sy) * width + sx] = 1;
        while (!q.empty()) {
            auto [x, y] = q.front();
            q.pop_front();
            const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
            for (int d = 0; d < 4; d++) {
                int nx = x + dx[d], ny = y + dy[d];
                if (nx < 0 || nx >= width || ny < 0 || ny >= height) continue;
                size_t i = size_t(ny) * width + nx;
                if (visited[i] || mask[i]) continue;
                visited[i] = 1;
                q.emplace_back(nx, ny);
            }
        }
    };
    // everything reachable from the border is outside, not a hole
    for (int x = 0; x < width; x++) {
        if (!mask[x] && !visited[x]) flood(x, 0);
        size_t i = size_t(height - 1) * width + x;
        if (!mask[i] && !visited[i]) flood(x, height - 1);
    }
    for (int y = 0; y < height; y++) {
        size_t l = size_t(y) * width, r = l + width - 1;
        if (!mask[l] && !visited[l]) flood(0, y);
        if (!mask[r] && !visited[r]) flood(width - 1, y);
    }
    int holes = 0;
    for (int y = 0; y < height; y++)
        for (int x = 0; x < width; x++) {
            size_t i = size_t(y) * width + x;
            if (!mask[i] && !visited[i]) {
                holes++;
                flood(x, y);
            }
        }
    return holes;
}

Image4<double> colormap_signed(std::span<const double> values, int width, int height,
                               double range) {
    if (values.size() != size_t(width) * height)
        throw std::invalid_argument("value count mismatch");
    if (range <= 0)
        for (double v : values) range = std::max(range, std::fabs(v));
    if (range <= 0) range = 1.0;
    Image4<double> img = alloc_image<double>(width, height);
    for (size_t i = 0; i < values.size(); i++) {
        double t = std::clamp(values[i] / range, -1.0, 1.0);
        img.pixels[i] = t >= 0 ? Vec4<double>{1.0, 1.0 - t, 1.0 - t, 1.0}
                               : Vec4<double>{1.0 + t, 1.0 + t, 1.0, 1.0};
    }
    return img;
}

PfmImage scalar_to_pfm(std::span<const double> values, int width, int height) {
    PfmImage img;
    img.width = width;
    img.height = height;
    img.channels = 1;
    img.data.reserve(values.size());
    for (double v : values) img.data.push_back(float(v));
    return img;
}

// ---------------------------------------------------------------------------
// derivative visualization

namespace {

struct VizScene {
    TriangleMesh mesh;
    int movable_vert = 0;  // vertices >= this move with t
    int movable_prim = 0;  // triangles >= this belong to the movable object
    Vec3d dir;             // world offset per pixel unit of t
    Camera cam;
    PoseParams pose;
};

VizScene make_viz_scene(const std::string& variant, int width, int height) {
    VizScene s;
    s.cam.width = width;
    s.cam.height = height;
    s.pose.trans = {0, 0, -2.5};
    double depth = 2.5;  // camera at the origin looking down -z
    if (variant == "occluded") {
        s.mesh = make_quad({0, 0, 0.9}, {0.35, 0, 0}, {0, 0.35, 0}, {0.25, 0.25, 0.25});
        append_mesh(s.mesh, make_quad({0, 0, 0}, {0.8, 0, 0}, {0, 0.8, 0}, {0.7, 0.7, 0.7}));
        s.movable_vert = 4;
        s.movable_prim = 2;
    } else {
        s.mesh = make_quad({0, 0, 0}, {0.5, 0, 0}, {0, 0.5, 0}, {0.7, 0.7, 0.7});
    }
    double aspect = double(width) / double(height);
    double px_world = 2.0 * depth * std::tan(0.5 * s.cam.fov_y) * aspect / width;
    s.dir = variant == "static" ? Vec3d{0, 0, 0} : Vec3d{px_world, 0, 0};
    return s;
}

// plain re-render of the scene with the movable part offset by t pixels
Image4<double> render_viz(const VizScene& s, double t, int layers, int threads) {
    TriangleMesh shifted = s.mesh;
    for (size_t i = s.movable_vert; i < shifted.positions.size(); i++)
        shifted.positions[i] += s.dir * t;
    return render_mesh_image(shifted, s.cam, s.pose, layers, threads, {0, 0, 0});
}

}  // namespace

DerivViz run_derivative_viz(const ExperimentConfig& config) {
    int W = config.width > 0 ? config.width : 256;
    int H = config.height > 0 ? config.height : 256;
    validate_size(W, H);
    std::string variant = config.scene.empty() ? "square" : config.scene;
    VizScene scene = make_viz_scene(variant, W, H);
    size_t n = size_t(W) * H;

    DerivViz out;
    out.width = W;
    out.height = H;

    // finite differences: full re-render and re-rasterization at t = +-1 px
    Image4<double> at0 = render_viz(scene, 0.0, 2, config.threads);
    Image4<double> plus = render_viz(scene, 1.0, 2, config.threads);
    Image4<double> minus = render_viz(scene, -1.0, 2, config.threads);
    out.fd.resize(n);
    for (size_t i = 0; i < n; i++) {
        const Vec4<double>&p = plus.pixels[i], &m = minus.pixels[i];
        out.fd[i] = ((p.x - m.x) + (p.y - m.y) + (p.z - m.z)) / 6.0;
    }

    // forward-mode derivative at t = 0 through evaluation, shading, splatting
    Dual t = Dual::seeded(0.0, 0, 1);
    std::vector<Vec3<Dual>> pos(scene.mesh.positions.size());
    for (size_t i = 0; i < pos.size(); i++) {
        pos[i] = to_vec3<Dual>(scene.mesh.positions[i]);
        if (int(i) >= scene.movable_vert) {
            pos[i].x += t * scene.dir.x;
            pos[i].y += t * scene.dir.y;
            pos[i].z += t * scene.dir.z;
        }
    }
    MeshAttribs<Dual> attribs;
    attribs.positions = pos;
    Pose<Dual> pose = lift_pose<Dual>(scene.pose);

    Image4<Dual> direct;  // layered sample colors without any splat kernel
    auto deriv_pass = [&](int layers) {
        SampleBuffer sb = rasterize_mesh(scene.mesh, scene.cam, scene.pose, layers,
                                         config.threads);
        GBuffer<Dual> gb = evaluate_mesh(scene.mesh, attribs, sb);
        PositionBuffer<Dual> pb = build_position_buffer(gb, scene.cam, pose);
        ShadedLayer<Dual> sl = shade_vertex_color(gb);
        if (layers == 2) direct = composite_direct(sl, pb);
        return composite_background(splat_multilayer(sl, pb), {0, 0, 0});
    };
    Image4<Dual> img1 = deriv_pass(1);
    Image4<Dual> img2 = deriv_pass(2);
    auto mean_deriv = [](const Image4<Dual>& img, std::vector<double>& out_v) {
        out_v.resize(img.pixels.size());
        for (size_t i = 0; i < img.pixels.size(); i++) {
            const Vec4<Dual>& c = img.pixels[i];
            out_v[i] = (c.x.d[0] + c.y.d[0] + c.z.d[0]) / 3.0;
        }
    };
    mean_deriv(img1, out.rts1);
    mean_deriv(img2, out.rts2);
    mean_deriv(direct, out.nosplat);

    out.corr_rts1 = pearson(out.fd, out.rts1);
    out.corr_rts2 = pearson(out.fd, out.rts2);
    out.corr_nosplat = pearson(out.fd, out.nosplat);

    // scalar loss derivative vs a target rendered at a sub-pixel offset
    Image4<double> target = render_viz(scene, 0.75, 2, config.threads);
    out.dloss_dt = loss_l2(img2, target).d[0];
    out.dloss_dt_fd = (loss_l2(plus, target) - loss_l2(minus, target)) / 2.0;

    // region energies: occlusion uses the layer structure of the 2-layer
    // rasterization at t = 0, the boundary band is where fd itself moves
    SampleBuffer sb2 = rasterize_mesh(scene.mesh, scene.cam, scene.pose, 2,
                                      config.threads);
    auto energy = [&](const std::vector<double>& v, auto&& inside) {
        double e = 0;
        for (int y = 0; y < H; y++)
            for (int x = 0; x < W; x++)
                if (inside(x, y)) e += v[size_t(y) * W + x] * v[size_t(y) * W + x];
        return e;
    };
    out.occluded_mask.assign(n, 0);
    out.boundary_mask.assign(n, 0);
    for (int y = 0; y < H; y++)
        for (int x = 0; x < W; x++) {
            size_t i0 = sb2.at(0, y, x), i1 = sb2.at(1, y, x);
            out.occluded_mask[size_t(y) * W + x] =
                sb2.valid[i0] && sb2.prim[i0] < scene.movable_prim && sb2.valid[i1] &&
                sb2.prim[i1] >= scene.movable_prim;
            out.boundary_mask[size_t(y) * W + x] =
                std::fabs(out.fd[size_t(y) * W + x]) > 1e-12;
        }
    auto occluded = [&](int x, int y) { return out.occluded_mask[size_t(y) * W + x]; };
    auto boundary = [&](int x, int y) { return out.boundary_mask[size_t(y) * W + x]; };
    out.occluded_energy_rts1 = energy(out.rts1, occluded);
    out.occluded_energy_rts2 = energy(out.rts2, occluded);
    out.boundary_energy_rts2 = energy(out.rts2, boundary);
    out.boundary_energy_nosplat = energy(out.nosplat, boundary);

    for (size_t i = 0; i < n; i++)
        out.colormap_range = std::max({out.colormap_range, std::fabs(out.fd[i]),
                                       std::fabs(out.rts1[i]), std::fabs(out.rts2[i]),
                                       std::fabs(out.nosplat[i])});

    if (!config.out_dir.empty()) {
        ensure_dir(config.out_dir);
        write_renders(config.out_dir, at0, at0, target);
        double range = out.colormap_range;
        auto dump = [&](const std::string& name, const std::vector<double>& v) {
            save_pfm(join(config.out_dir, "deriv_" + name + ".pfm"),
                     scalar_to_pfm(v, W, H));
            save_png(join(config.out_dir, "deriv_" + name + ".png"),
                     colormap_signed(v, W, H, range));
        };
        dump("fd", out.fd);
        dump("rts1", out.rts1);
        dump("rts2", out.rts2);
        dump("nosplat", out.nosplat);
        auto occl_energy = [&](const std::vector<double>& v) { return energy(v, occluded); };
        auto bnd_energy = [&](const std::vector<double>& v) { return energy(v, boundary); };
        std::vector<std::vector<std::string>> rows;
        auto row = [&](const std::string& name, const std::vector<double>& v, double corr) {
            rows.push_back({name, fmt_g(corr), fmt_g(occl_energy(v)), fmt_g(bnd_energy(v)),
                            fmt_g(range)});
        };
        row("fd", out.fd, 1.0);
        row("rts1", out.rts1, out.corr_rts1);
        row("rts2", out.rts2, out.corr_rts2);
        row("nosplat", out.nosplat, out.corr_nosplat);
        save_csv(join(config.out_dir, "metrics.csv"),
                 {"image", "correlation_vs_fd", "occluded_energy", "boundary_energy",
                  "colormap_range"},
                 rows);
        LossRecord r0;
        r0.loss = loss_l2(at0, target);
        double t0v = 0.0;
        r0.param_hash = hash_params(std::span<const double>(&t0v, 1));
        write_records(config.out_dir, {r0});
    }
    return out;
}

// ---------------------------------------------------------------------------
// pose recovery

PoseFit run_pose_fit(const ExperimentConfig& config) {
    int W = config.width > 0 ? config.width : 128;
    int H = config.height > 0 ? config.height : 128;
    validate_size(W, H);
    int K = config.layers;
    std::string optimizer = config.optimizer.empty() ? "lm" : config.optimizer;
    int iters = config.iters > 0 ? config.iters : (optimizer == "lm" ? 40 : 400);
    double lr = config.lr > 0 ? config.lr : 0.02;

    // an irregular convex polytope: silhouette corners at many orientations
    // pin all six pose parameters, while flat-edged shapes like boxes and
    // near-quadrics leave shallow tilt/translate valleys the optimizer
    // crawls through; the radial bump is smooth and low-frequency so the
    // inscribed triangulation stays convex
    TriangleMesh mesh;
    if (config.mesh_path.empty()) {
        mesh = make_icosphere(1, 0.8);
        for (Vec3d& p : mesh.positions) {
            Vec3d d = normalized(p);
            double bump = 0.09 * std::sin(2.0 * d.x + 0.7) +
                          0.07 * std::sin(2.6 * d.y - 1.3) +
                          0.08 * std::sin(2.3 * d.z + 2.1) +
                          0.05 * std::sin(1.7 * (d.x + d.y - d.z));
            p = p * (1.0 + bump);
            p = {p.x * 1.25, p.y * 0.9, p.z * 0.7};
        }
    } else {
        mesh = load_obj(config.mesh_path);
    }
    Vec3d lo = mesh.positions[0], hi = mesh.positions[0];
    for (const Vec3d& p : mesh.positions) {
        lo = {std::min(lo.x, p.x), std::min(lo.y, p.y), std::min(lo.z, p.z)};
        hi = {std::max(hi.x, p.x), std::max(hi.y, p.y), std::max(hi.z, p.z)};
    }
    double extent = length(hi - lo);

    Camera cam;
    cam.width = W;
    cam.height = H;

    PoseFit out;
    out.extent = extent;
    out.pose_true.rot = {0.4, 0.7, -0.3};
    out.pose_true.trans = {0, 0, -3};
    std::mt19937_64 rng(config.seed);
    Vec3d rot_axis = random_unit(rng), trans_dir = random_unit(rng);
    out.pose_init.rot = out.pose_true.rot;
    if (config.perturb_rot_deg != 0) {
        Mat3d perturb =
            rotation_matrix(rot_axis * (config.perturb_rot_deg * M_PI / 180.0));
        out.pose_init.rot =
            axis_angle_from_matrix(perturb * rotation_matrix(out.pose_true.rot));
    }
    out.pose_init.trans =
        out.pose_true.trans + trans_dir * (config.perturb_trans_frac * extent);

    Image4<double> target;
    {
        SampleBuffer sb = rasterize_mesh(mesh, cam, out.pose_true, K, config.threads);
        GBuffer<double> gb = evaluate_mesh(mesh, MeshAttribs<double>{}, sb);
        target = splat_multilayer(shade_silhouette(gb),
                                  build_position_buffer(gb, cam, out.pose_true));
    }

    std::vector<double> params = {out.pose_init.rot.x,   out.pose_init.rot.y,
                                  out.pose_init.rot.z,   out.pose_init.trans.x,
                                  out.pose_init.trans.y, out.pose_init.trans.z};
    double px_area = double(W) * H;
    Clock::time_point start = Clock::now();
    auto record = [&](int iteration, double loss) {
        out.records.push_back(
            {iteration, loss, hash_params(std::span<const double>(params)), ms_since(start)});
    };

    // residuals re-rasterize at the candidate pose; derivatives flow through
    // evaluation and projection only, matching the sampled-parameter model
    auto residuals = [&]<class T>(std::span<const T> p) -> std::vector<T> {
        Pose<T> pose = Pose<T>::from(p);
        PoseParams pv{{value(p[0]), value(p[1]), value(p[2])},
                      {value(p[3]), value(p[4]), value(p[5])}};
        SampleBuffer sb = config.fast_path
                              ? sample_positions_for_pose(mesh, cam, pv, K, config.threads)
                              : rasterize_mesh(mesh, cam, pv, K, config.threads);
        GBuffer<T> gb = config.fast_path
                            ? evaluate_positions<T>(sb)
                            : evaluate_mesh(mesh, MeshAttribs<T>{}, sb);
        PositionBuffer<T> pb = build_position_buffer(gb, cam, pose);
        Image4<T> img = splat_multilayer(shade_silhouette(gb), pb);
        std::vector<T> r(img.pixels.size());
        for (size_t i = 0; i < img.pixels.size(); i++)
            r[i] = img.pixels[i].w - target.pixels[i].w;
        return r;
    };

    double initial_loss = -1;
    if (optimizer == "lm") {
        LMState st;
        std::vector<double> r0 = residuals(std::span<const double>(params));
        double sse = 0;
        for (double r : r0) sse += r * r;
        initial_loss = sse / px_area;
        record(0, initial_loss);
        for (int i = 0; i < iters; i++) {
            if (out.records.back().loss < 1e-12) break;
            bool stepped = step_lm(residuals, std::span<double>(params), st);
            record(i + 1, st.loss / px_area);
            if (!stepped) break;
            if (out.records.back().loss > 10.0 * initial_loss && initial_loss > 0) {
                out.diverged = true;
                break;
            }
        }
    } else {
        SampleBuffer sb;
        GBuffer<Rev> gb;
        PositionBuffer<Rev> pb = alloc_position_buffer<Rev>(W, H, K);
        ShadedLayer<Rev> sl;
        Image4<Rev> img = alloc_image<Rev>(W, H);
        auto band_loss = [&](std::span<const Rev> xs, int y0, int y1) -> Rev {
            Pose<Rev> pose = Pose<Rev>::from(xs);
            auto [e0, e1] = eval_window(y0, y1, H);
            if (config.fast_path)
                evaluate_positions(sb, gb, e0, e1);
            else
                evaluate_mesh(mesh, MeshAttribs<Rev>{}, sb, gb, e0, e1);
            build_position_buffer(gb, cam, pose, pb, e0, e1);
            shade_silhouette(gb, sl, e0, e1);
            splat_multilayer(sl, pb, img, y0, y1);
            Rev s = 0.0;
            for (int y = y0; y < y1; y++)
                for (int x = 0; x < W; x++) {
                    Rev d = img.at(y, x).w - target.at(y, x).w;
                    s += d * d;
                }
            return s;
        };
        AdamState adam;
        for (int i = 0; i <= iters; i++) {
            PoseParams pv{{params[0], params[1], params[2]},
                          {params[3], params[4], params[5]}};
            sb = config.fast_path
                     ? sample_positions_for_pose(mesh, cam, pv, K, config.threads)
                     : rasterize_mesh(mesh, cam, pv, K, config.threads);
            if (gb.width == 0) {
                gb = alloc_gbuffer<Rev>(sb);
                sl = alloc_shaded(gb);
            }
            auto [sum, g] = grad_rows(band_loss, params, H);
            double loss = sum / px_area;
            record(i, loss);
            if (initial_loss < 0) initial_loss = loss;
            if (loss < 1e-12 || i == iters) break;
            if (loss > 10.0 * initial_loss && initial_loss > 0) {
                out.diverged = true;
                break;
            }
            for (double& gi : g) gi /= px_area;
            if (optimizer == "gd")
                step_gd(params, g, lr);
            else
                step_adam(params, g, adam, lr);
        }
    }

    out.pose = PoseParams{{params[0], params[1], params[2]},
                          {params[3], params[4], params[5]}};
    Mat3d rel = rotation_matrix(out.pose.rot) * transposed(rotation_matrix(out.pose_true.rot));
    out.rot_error_deg = length(axis_angle_from_matrix(rel)) * 180.0 / M_PI;
    out.trans_error = length(out.pose.trans - out.pose_true.trans);
    out.trans_error_extent = out.trans_error / extent;

    if (!config.out_dir.empty()) {
        ensure_dir(config.out_dir);
        auto silhouette = [&](const PoseParams& pose) {
            SampleBuffer sb = rasterize_mesh(mesh, cam, pose, K, config.threads);
            GBuffer<double> gb = evaluate_mesh(mesh, MeshAttribs<double>{}, sb);
            return composite_background(
                splat_multilayer(shade_silhouette(gb), build_position_buffer(gb, cam, pose)),
                {0, 0, 0});
        };
        write_renders(config.out_dir, silhouette(out.pose_init), silhouette(out.pose),
                      composite_background(target, {0, 0, 0}));
        write_records(config.out_dir, out.records);
    }
    return out;
}

// ---------------------------------------------------------------------------
// multi-view mesh fit

MeshFit run_mesh_fit(const ExperimentConfig& config) {
    int W = config.width > 0 ? config.width : 128;
    int H = config.height > 0 ? config.height : 128;
    validate_size(W, H);
    int K = config.layers;
    bool colors_only = config.scene == "colors";
    int iters = config.iters > 0 ? config.iters : 300;
    double lr = config.lr > 0 ? config.lr : (colors_only ? 0.02 : 0.01);
    double lambda = config.lambda_laplacian >= 0 ? config.lambda_laplacian : 0.25;

    TriangleMesh object = config.mesh_path.empty() ? make_icosphere(2, 0.8)
                                                   : load_obj(config.mesh_path);
    int nv = int(object.positions.size());
    object.colors.assign(nv, {0.5, 0.5, 0.5});

    std::vector<Vec3d> true_positions(nv), true_colors(nv);
    for (int i = 0; i < nv; i++) {
        const Vec3d& p = object.positions[i];
        true_positions[i] = colors_only ? p : Vec3d{p.x * 1.2, p.y * 0.85, p.z};
        true_colors[i] = {std::clamp(0.5 + 0.35 * std::sin(2.0 * p.x), 0.05, 0.95),
                          std::clamp(0.5 + 0.35 * std::sin(2.0 * p.y + 1.0), 0.05, 0.95),
                          std::clamp(0.5 + 0.35 * std::cos(2.0 * p.z), 0.05, 0.95)};
    }

    // three cameras around the object, each with its own backdrop behind it
    const int V = 3;
    std::vector<Camera> cams(V);
    std::vector<TriangleMesh> backdrops(V);
    for (int v = 0; v < V; v++) {
        double az = 2.0 * M_PI * v / V, el = 0.3;
        Vec3d pos{3.1 * std::cos(el) * std::sin(az), 3.1 * std::sin(el),
                  3.1 * std::cos(el) * std::cos(az)};
        cams[v] = look_at_camera(pos, {0, 0, 0}, {0, 1, 0}, W, H);
        Vec3d f = normalized(Vec3d{0, 0, 0} - pos);
        Vec3d u = normalized(cross(f, Vec3d{0, 1, 0}));
        Vec3d w = cross(u, f);
        backdrops[v] = make_quad(f * 1.7, u * 2.6, w * 2.6, {0.3, 0.3, 0.3});
    }

    PoseParams identity;
    auto render_view = [&](int v, std::span<const Vec3d> positions,
                           std::span<const Vec3d> colors) {
        TriangleMesh merged = object;
        std::copy(positions.begin(), positions.end(), merged.positions.begin());
        std::copy(colors.begin(), colors.end(), merged.colors.begin());
        append_mesh(merged, backdrops[v]);
        SampleBuffer sb = rasterize_mesh(merged, cams[v], identity, K, config.threads);
        GBuffer<double> gb = evaluate_mesh(merged, MeshAttribs<double>{}, sb);
        return splat_multilayer(shade_vertex_color(gb),
                                build_position_buffer(gb, cams[v], identity));
    };
    std::vector<Image4<double>> targets(V);
    for (int v = 0; v < V; v++) targets[v] = render_view(v, true_positions, true_colors);

    // parameter vector: object colors, preceded by positions unless frozen
    std::vector<double> params;
    if (!colors_only)
        for (const Vec3d& p : object.positions) {
            params.push_back(p.x);
            params.push_back(p.y);
            params.push_back(p.z);
        }
    int color_base = int(params.size());
    for (const Vec3d& c : object.colors) {
        params.push_back(c.x);
        params.push_back(c.y);
        params.push_back(c.z);
    }
    auto positions_of = [&](std::span<const double> p) {
        std::vector<Vec3d> pos(object.positions.begin(), object.positions.end());
        if (!colors_only)
            for (int i = 0; i < nv; i++)
                pos[i] = {p[size_t(i) * 3], p[size_t(i) * 3 + 1], p[size_t(i) * 3 + 2]};
        return pos;
    };
    auto colors_of = [&](std::span<const double> p) {
        std::vector<Vec3d> col(nv);
        for (int i = 0; i < nv; i++)
            col[i] = {p[size_t(color_base + i * 3)], p[size_t(color_base + i * 3 + 1)],
                      p[size_t(color_base + i * 3 + 2)]};
        return col;
    };

    MeshFit out;
    Clock::time_point start = Clock::now();
    std::vector<SampleBuffer> sbs(V);
    std::vector<TriangleMesh> merged(V);
    GBuffer<Rev> gb;
    PositionBuffer<Rev> pb = alloc_position_buffer<Rev>(W, H, K);
    ShadedLayer<Rev> sl;
    Image4<Rev> img = alloc_image<Rev>(W, H);
    int view = 0;
    auto band_loss = [&](std::span<const Rev> xs, int y0, int y1) -> Rev {
        std::vector<Vec3<Rev>> pos(merged[view].positions.size());
        std::vector<Vec3<Rev>> col(pos.size());
        for (size_t i = 0; i < pos.size(); i++) {
            if (!colors_only && int(i) < nv)
                pos[i] = {xs[i * 3], xs[i * 3 + 1], xs[i * 3 + 2]};
            else
                pos[i] = to_vec3<Rev>(merged[view].positions[i]);
            if (int(i) < nv)
                col[i] = {xs[size_t(color_base) + i * 3], xs[size_t(color_base) + i * 3 + 1],
                          xs[size_t(color_base) + i * 3 + 2]};
            else
                col[i] = to_vec3<Rev>(merged[view].colors[i]);
        }
        MeshAttribs<Rev> attribs;
        attribs.positions = pos;
        attribs.colors = col;
        auto [e0, e1] = eval_window(y0, y1, H);
        evaluate_mesh(merged[view], attribs, sbs[view], gb, e0, e1);
        build_position_buffer(gb, cams[view], lift_pose<Rev>(identity), pb, e0, e1);
        shade_vertex_color(gb, sl, e0, e1);
        splat_multilayer(sl, pb, img, y0, y1);
        Rev s = 0.0;
        for (int y = y0; y < y1; y++)
            for (int x = 0; x < W; x++) {
                Vec4<Rev> d = img.at(y, x) - to_vec4<Rev>(targets[view].at(y, x));
                s += d.x * d.x + d.y * d.y + d.z * d.z + d.w * d.w;
            }
        return s;
    };

    AdamState adam;
    double norm = 4.0 * W * H;
    for (int i = 0; i <= iters; i++) {
        std::vector<Vec3d> cur_pos = positions_of(params);
        std::vector<Vec3d> cur_col = colors_of(params);
        for (int v = 0; v < V; v++) {
            merged[v] = object;
            std::copy(cur_pos.begin(), cur_pos.end(), merged[v].positions.begin());
            std::copy(cur_col.begin(), cur_col.end(), merged[v].colors.begin());
            append_mesh(merged[v], backdrops[v]);
            sbs[v] = rasterize_mesh(merged[v], cams[v], identity, K, config.threads);
        }
        if (gb.width == 0) {
            gb = alloc_gbuffer<Rev>(sbs[0]);
            sl = alloc_shaded(gb);
        }
        double loss = 0;
        std::vector<double> g(params.size(), 0.0);
        for (view = 0; view < V; view++) {
            auto [sum, gv] = grad_rows(band_loss, params, H);
            loss += sum / norm;
            for (size_t j = 0; j < g.size(); j++) g[j] += gv[j] / norm;
        }
        if (!colors_only && lambda > 0) {
            auto reg = [&](std::span<const Rev> xs) -> Rev {
                std::vector<Vec3<Rev>> pos(nv);
                for (int j = 0; j < nv; j++)
                    pos[j] = {xs[size_t(j) * 3], xs[size_t(j) * 3 + 1],
                              xs[size_t(j) * 3 + 2]};
                return regularize_laplacian(object, std::span<const Vec3<Rev>>(pos));
            };
            std::span<const double> pos_params(params.data(), size_t(nv) * 3);
            std::vector<double> gr = grad(reg, pos_params);
            auto cur = positions_of(params);
            loss += lambda * regularize_laplacian(
                                 object, std::span<const Vec3d>(cur.data(), size_t(nv)));
            for (int j = 0; j < nv * 3; j++) g[j] += lambda * gr[j];
        }
        out.records.push_back(
            {i, loss, hash_params(std::span<const double>(params)), ms_since(start)});
        if (i == 0) out.initial_loss = loss;
        if (i == iters) break;
        if (loss > 10.0 * out.initial_loss) {
            out.diverged = true;
            break;
        }
        step_adam(params, g, adam, lr);
    }
    out.final_loss = out.records.back().loss;

    out.mesh = object;
    {
        auto cur_pos = positions_of(params);
        auto cur_col = colors_of(params);
        std::copy(cur_pos.begin(), cur_pos.end(), out.mesh.positions.begin());
        std::copy(cur_col.begin(), cur_col.end(), out.mesh.colors.begin());
        double err = 0;
        for (int i = 0; i < nv; i++) {
            err += std::fabs(cur_col[i].x - true_colors[i].x);
            err += std::fabs(cur_col[i].y - true_colors[i].y);
            err += std::fabs(cur_col[i].z - true_colors[i].z);
        }
        out.color_mean_error = err / (3.0 * nv);
    }

    if (!config.out_dir.empty()) {
        ensure_dir(config.out_dir);
        auto composed = [&](std::span<const Vec3d> p, std::span<const Vec3d> c) {
            return composite_background(render_view(0, p, c), {0, 0, 0});
        };
        std::vector<Vec3d> init_pos(object.positions.begin(), object.positions.end());
        std::vector<Vec3d> init_col(nv, {0.5, 0.5, 0.5});
        write_renders(config.out_dir, composed(init_pos, init_col),
                      composed(out.mesh.positions, out.mesh.colors),
                      composite_background(targets[0], {0, 0, 0}));
        write_records(config.out_dir, out.records);
        save_obj(join(config.out_dir, "final.obj"), out.mesh);
    }
    return out;
}

// ---------------------------------------------------------------------------
// profile radii of a surface of revolution

namespace {

// 12 columns around the y axis; the first and last profile rows are tripled
// so the uniform cubic spline clamps to the end circles, which keeps the end
// radii directly visible in the silhouette
BSplineSurface revolve_profile(std::span<const double> radii,
                               std::span<const double> heights) {
    BSplineSurface s;
    int n = int(radii.size());
    s.m = 12;
    s.n = n + 4;
    s.periodic_u = true;
    s.control.resize(size_t(s.m) * s.n);
    for (int i = 0; i < s.m; i++) {
        double th = 2.0 * M_PI * i / s.m;
        for (int j = 0; j < s.n; j++) {
            int jr = std::clamp(j - 2, 0, n - 1);
            s.at(i, j) = {radii[jr] * std::cos(th), heights[jr],
                          radii[jr] * std::sin(th)};
        }
    }
    return s;
}

template <class T>
std::vector<Vec3<T>> revolve_control(std::span<const T> radii,
                                     std::span<const double> heights) {
    int m = 12, n = int(radii.size()), rows = n + 4;
    std::vector<Vec3<T>> c(size_t(m) * rows);
    for (int i = 0; i < m; i++) {
        double th = 2.0 * M_PI * i / m;
        for (int j = 0; j < rows; j++) {
            int jr = std::clamp(j - 2, 0, n - 1);
            c[size_t(i) * rows + j] = {radii[jr] * std::cos(th), T(heights[jr]),
                                       radii[jr] * std::sin(th)};
        }
    }
    return c;
}

Image4<double> overlap_image(const std::vector<uint8_t>& rendered,
                             const std::vector<uint8_t>& target, int w, int h) {
    Image4<double> img = alloc_image<double>(w, h);
    for (size_t i = 0; i < img.pixels.size(); i++) {
        if (rendered[i] && target[i])
            img.pixels[i] = {0, 0, 0, 1};  // agreement
        else if (rendered[i])
            img.pixels[i] = {0.85, 0.1, 0.1, 1};  // rendered overshoot
        else if (target[i])
            img.pixels[i] = {0.1, 0.7, 0.15, 1};  // missed target
        else
            img.pixels[i] = {1, 1, 1, 1};
    }
    return img;
}

}  // namespace

SplineFit run_spline_fit(const ExperimentConfig& config) {
    // sub-percent radius recovery needs the narrow waist to cover enough
    // pixels, so this experiment defaults to a finer image than the others
    int W = config.width > 0 ? config.width : 256;
    int H = config.height > 0 ? config.height : 256;
    validate_size(W, H);
    int K = config.layers;
    std::string optimizer = config.optimizer.empty() ? "lm" : config.optimizer;
    int iters = config.iters > 0 ? config.iters : (optimizer == "lm" ? 100 : 200);
    double lr = config.lr > 0 ? config.lr : 0.02;

    const int n_radii = 8;
    std::vector<double> heights(n_radii);
    for (int j = 0; j < n_radii; j++) heights[j] = -0.85 + 1.7 * j / (n_radii - 1);

    SplineFit out;
    out.radii_true = {0.32, 0.38, 0.24, 0.14, 0.13, 0.18, 0.34, 0.22};
    std::vector<double> params(n_radii, 0.25);
    if (!config.target_params.empty()) out.radii_true = config.target_params;
    if (!config.init_params.empty()) params = config.init_params;

    Camera cam;
    cam.width = W;
    cam.height = H;
    PoseParams pose;
    pose.trans = {0, 0, -3};

    auto silhouette = [&]<class T>(std::span<const T> radii) {
        std::vector<double> rv(radii.size());
        for (size_t i = 0; i < radii.size(); i++) rv[i] = value(radii[i]);
        BSplineSurface surf = revolve_profile(rv, heights);
        SampleBuffer sb = rasterize_spline(surf, cam, pose, K, config.threads);
        std::vector<Vec3<T>> control = revolve_control(radii, heights);
        GBuffer<T> gb = evaluate_spline(surf, std::span<const Vec3<T>>(control), sb);
        PositionBuffer<T> pb = build_position_buffer(gb, cam, lift_pose<T>(pose));
        return splat_multilayer(shade_silhouette(gb), pb);
    };

    Image4<double> target = silhouette(std::span<const double>(out.radii_true));
    double px_area = double(W) * H;
    Clock::time_point start = Clock::now();
    auto record = [&](int iteration, double loss) {
        out.records.push_back(
            {iteration, loss, hash_params(std::span<const double>(params)), ms_since(start)});
    };
    auto residuals = [&]<class T>(std::span<const T> p) -> std::vector<T> {
        Image4<T> img = silhouette(p);
        std::vector<T> r(img.pixels.size());
        for (size_t i = 0; i < img.pixels.size(); i++)
            r[i] = img.pixels[i].w - target.pixels[i].w;
        return r;
    };

    Image4<double> initial_render = silhouette(std::span<const double>(params));
    out.initial_loss = loss_l2(initial_render, target);
    if (optimizer == "lm") {
        LMState st;
        record(0, out.initial_loss);
        for (int i = 0; i < iters; i++) {
            if (out.records.back().loss < 1e-12) break;
            bool stepped = step_lm(residuals, std::span<double>(params), st);
            record(i + 1, st.loss / px_area);
            if (!stepped) break;
            if (out.records.back().loss > 10.0 * out.initial_loss &&
                out.initial_loss > 0) {
                out.diverged = true;
                break;
            }
        }
    } else {
        SampleBuffer sb;
        BSplineSurface surf;
        GBuffer<Rev> gb;
        PositionBuffer<Rev> pb = alloc_position_buffer<Rev>(W, H, K);
        ShadedLayer<Rev> sl;
        Image4<Rev> img = alloc_image<Rev>(W, H);
        auto band_loss = [&](std::span<const Rev> xs, int y0, int y1) -> Rev {
            std::vector<Vec3<Rev>> control = revolve_control(xs, heights);
            auto [e0, e1] = eval_window(y0, y1, H);
            evaluate_spline(surf, std::span<const Vec3<Rev>>(control), sb, gb, e0, e1);
            build_position_buffer(gb, cam, lift_pose<Rev>(pose), pb, e0, e1);
            shade_silhouette(gb, sl, e0, e1);
            splat_multilayer(sl, pb, img, y0, y1);
            Rev s = 0.0;
            for (int y = y0; y < y1; y++)
                for (int x = 0; x < W; x++) {
                    Rev d = img.at(y, x).w - target.at(y, x).w;
                    s += d * d;
                }
            return s;
        };
        AdamState adam;
        for (int i = 0; i <= iters; i++) {
            surf = revolve_profile(params, heights);
            sb = rasterize_spline(surf, cam, pose, K, config.threads);
            if (gb.width == 0) {
                gb = alloc_gbuffer<Rev>(sb);
                sl = alloc_shaded(gb);
            }
            auto [sum, g] = grad_rows(band_loss, params, H);
            double loss = sum / px_area;
            record(i, loss);
            if (loss < 1e-12 || i == iters) break;
            if (loss > 10.0 * out.initial_loss && out.initial_loss > 0) {
                out.diverged = true;
                break;
            }
            for (double& gi : g) gi /= px_area;
            if (optimizer == "gd")
                step_gd(params, g, lr);
            else
                step_adam(params, g, adam, lr);
        }
    }

    out.radii = params;
    out.final_loss = out.records.back().loss;
    for (int j = 0; j < n_radii; j++)
        out.max_rel_error = std::max(
            out.max_rel_error, std::fabs(params[j] - out.radii_true[j]) /
                                   std::max(1e-12, std::fabs(out.radii_true[j])));

    if (!config.out_dir.empty()) {
        ensure_dir(config.out_dir);
        Image4<double> final_render = silhouette(std::span<const double>(params));
        write_renders(config.out_dir, composite_background(initial_render, {0, 0, 0}),
                      composite_background(final_render, {0, 0, 0}),
                      composite_background(target, {0, 0, 0}));
        std::vector<uint8_t> tgt = alpha_mask(target);
        save_png(join(config.out_dir, "overlap_initial.png"),
                 overlap_image(alpha_mask(initial_render), tgt, W, H));
        save_png(join(config.out_dir, "overlap_final.png"),
                 overlap_image(alpha_mask(final_render), tgt, W, H));
        write_records(config.out_dir, out.records);
    }
    return out;
}

// ---------------------------------------------------------------------------
// implicit-surface fit

ImplicitFit run_implicit_fit(const ExperimentConfig& config) {
    int W = config.width > 0 ? config.width : 128;
    int H = config.height > 0 ? config.height : 128;
    validate_size(W, H);
    int K = config.layers;
    std::string variant = config.scene.empty() ? "union" : config.scene;
    int iters = config.iters > 0 ? config.iters : 400;

    const int N = 50;
    Vec3d origin{-1.1, -1.1, -1.1};
    Vec3d spacing{2.2 / (N - 1), 2.2 / (N - 1), 2.2 / (N - 1)};
    PoseParams identity;

    SweptSphere truth;
    truth.r2 = 0.7;
    truth.r1 = 0.25;
    if (config.target_params.size() == 2) {
        truth.r2 = config.target_params[0];
        truth.r1 = config.target_params[1];
    }

    // the swept fit needs a tilted view to separate ring and tube radii; the
    // sphere-union fit looks straight down the ring axis so the hole shows
    Camera cam = variant == "swept"
                     ? look_at_camera(normalized(Vec3d{0.55, 0.5, 0.8}) * 2.9,
                                      {0, 0, 0}, {0, 1, 0}, W, H)
                     : look_at_camera({0, 0, 2.9}, {0, 0, 0}, {0, 1, 0}, W, H);

    // shaded (not silhouette) images: surface orientation carries gradient
    // signal across the whole interior — the creases between spheres and the
    // tube's curvature are visible — which is what lets buried geometry feel
    // the residual and the topology change nucleate away from the outer rim;
    // |n.l| keeps the shading independent of marching-cubes winding
    Vec3d light = normalized(Vec3d{0.4, 0.55, 0.73});
    auto field_color = [light]<class T>(const PixelAttribs<T>& a) -> Vec4<T> {
        using std::abs;
        using std::sqrt;
        T inv_len = T(1.0) / sqrt(dot(a.normal, a.normal) + T(1e-12));
        T ndotl = abs(dot(a.normal, to_vec3<T>(light)) * inv_len);
        T c = (T(0.25) + T(0.75) * ndotl) * T(0.9);
        return {c, c, c, T(1.0)};
    };
    auto render_field_image = [&](const ImplicitGrid& grid) {
        SampleBuffer sb = rasterize_implicit(grid, cam, identity, K, config.threads);
        GBuffer<double> gb = evaluate_implicit(grid, std::span<const double>{}, sb);
        PositionBuffer<double> pb = build_position_buffer(gb, cam, lift_pose<double>(identity));
        return splat_multilayer(shade_custom(gb, field_color), pb);
    };
    ImplicitGrid target_grid = field_to_grid(truth, N, N, N, origin, spacing);
    Image4<double> target = render_field_image(target_grid);

    ImplicitFit out;
    out.params_true = truth.params();
    Clock::time_point start = Clock::now();
    double norm = 4.0 * W * H;
    Image4<double> initial_render, final_render;

    if (variant == "swept") {
        double lr = config.lr > 0 ? config.lr : 0.004;
        SweptSphere field;
        std::vector<double> params = {0.55, 0.33};
        if (config.init_params.size() == 2) params = config.init_params;
        AdamState adam;
        for (int i = 0; i <= iters; i++) {
            field.r2 = params[0];
            field.r1 = params[1];
            ImplicitGrid grid = field_to_grid(field, N, N, N, origin, spacing);
            SampleBuffer sb = rasterize_implicit(grid, cam, identity, K, config.threads);
            bool any = false;
            for (uint8_t v : sb.valid) any |= v != 0;
            if (!any) {
                if (i == 0)
                    throw std::runtime_error(
                        "isosurface is empty at initialization: no visible surface to fit");
                out.diverged = true;
                break;
            }
            Dual p0 = Dual::seeded(params[0], 0, 2), p1 = Dual::seeded(params[1], 1, 2);
            std::array<Dual, 2> pd{p0, p1};
            std::vector<Dual> lattice =
                field_lattice(field, grid, std::span<const Dual>(pd));
            GBuffer<Dual> gb = evaluate_implicit(grid, std::span<const Dual>(lattice), sb);
            PositionBuffer<Dual> pb =
                build_position_buffer(gb, cam, lift_pose<Dual>(identity));
            Image4<Dual> img = splat_multilayer(shade_custom(gb, field_color), pb);
            Dual l = loss_l1(img, target);
            out.records.push_back({i, l.v, hash_params(std::span<const double>(params)),
                                   ms_since(start)});
            if (i == 0) {
                out.initial_loss = l.v;
                initial_render = render_field_image(grid);
                out.holes_initial = count_mask_holes(alpha_mask(initial_render), W, H);
            }
            if (i == iters) {
                final_render = render_field_image(grid);
                break;
            }
            if (l.v > 10.0 * out.initial_loss && out.initial_loss > 0) {
                out.diverged = true;
                break;
            }
            std::vector<double> g = {l.d[0], l.d[1]};
            step_adam(params, g, adam, lr);
        }
        out.params = params;
    } else {
        double lr = config.lr > 0 ? config.lr : 0.02;
        SphereUnion field;
        field.planar = true;
        std::mt19937_64 rng(config.seed);
        std::uniform_real_distribution<double> jitter(-0.015, 0.015);
        // concentric rings of spheres spanning the target's outer radius:
        // ring pitch and in-ring spacing stay well under a sphere diameter
        // even after the jitter, so the initial union is a hole-free disk
        // and the fit spends its iterations opening the hole (spheres under
        // it shrink away) rather than transporting mass outward
        const double sphere_r = 0.12, ring_pitch = 0.16;
        for (int k = 0; k <= 5; k++) {
            double rk = ring_pitch * k;
            int nk = std::max(1, int(std::ceil(2.0 * M_PI * rk / 0.15)));
            for (int i = 0; i < nk; i++) {
                double th = 2.0 * M_PI * i / nk;
                field.centers.push_back({rk * std::cos(th) + jitter(rng),
                                         rk * std::sin(th) + jitter(rng), 0.0});
                field.radii.push_back(sphere_r);
            }
        }
        std::vector<double> params = field.params();

        SampleBuffer sb;
        ImplicitGrid grid;
        std::vector<int32_t> refs;
        std::vector<Vec3d> ref_world;
        GBuffer<Rev> gb;
        PositionBuffer<Rev> pb = alloc_position_buffer<Rev>(W, H, K);
        ShadedLayer<Rev> sl;
        Image4<Rev> img = alloc_image<Rev>(W, H);
        auto band_loss = [&](std::span<const Rev> xs, int y0, int y1) -> Rev {
            // lattice values are constants except where samples reference them
            std::vector<Rev> lattice(grid.values.begin(), grid.values.end());
            for (size_t i = 0; i < refs.size(); i++)
                lattice[refs[i]] = field.eval(xs, ref_world[i]);
            auto [e0, e1] = eval_window(y0, y1, H);
            evaluate_implicit(grid, std::span<const Rev>(lattice), sb, gb, e0, e1);
            build_position_buffer(gb, cam, lift_pose<Rev>(identity), pb, e0, e1);
            shade_custom(gb, field_color, sl, e0, e1);
            splat_multilayer(sl, pb, img, y0, y1);
            Rev s = 0.0;
            for (int y = y0; y < y1; y++)
                for (int x = 0; x < W; x++) {
                    Vec4<Rev> d = img.at(y, x) - to_vec4<Rev>(target.at(y, x));
                    s += abs(d.x) + abs(d.y) + abs(d.z) + abs(d.w);
                }
            return s;
        };

        AdamState adam;
        for (int i = 0; i <= iters; i++) {
            apply_params(field, params);
            grid = field_to_grid(field, N, N, N, origin, spacing);
            sb = rasterize_implicit(grid, cam, identity, K, config.threads);
            bool any = false;
            for (uint8_t v : sb.valid) any |= v != 0;
            if (!any) {
                if (i == 0)
                    throw std::runtime_error(
                        "isosurface is empty at initialization: no visible surface to fit");
                out.diverged = true;
                break;
            }
            // lattice points actually referenced by this iteration's samples
            std::vector<uint8_t> mark(grid.values.size(), 0);
            refs.clear();
            ref_world.clear();
            for (size_t s = 0; s < sb.valid.size(); s++) {
                if (!sb.valid[s]) continue;
                for (int e = 0; e < 6; e++) {
                    int32_t f = sb.corners[s][e];
                    if (f >= 0 && !mark[f]) {
                        mark[f] = 1;
                        refs.push_back(f);
                    }
                }
            }
            std::sort(refs.begin(), refs.end());
            for (int32_t f : refs) {
                int xg = f % grid.nx, yg = (f / grid.nx) % grid.ny;
                int zg = f / (grid.nx * grid.ny);
                ref_world.push_back(grid.lattice_to_world(xg, yg, zg));
            }
            if (gb.width == 0) {
                gb = alloc_gbuffer<Rev>(sb);
                sl = alloc_shaded(gb);
            }
            auto [sum, g] = grad_rows(band_loss, params, H);
            double loss = sum / norm;
            out.records.push_back({i, loss, hash_params(std::span<const double>(params)),
                                   ms_since(start)});
            if (i == 0) {
                out.initial_loss = loss;
                initial_render = render_field_image(grid);
                out.holes_initial = count_mask_holes(alpha_mask(initial_render), W, H);
            }
            if (i == iters) {
                final_render = render_field_image(grid);
                break;
            }
            if (loss > 10.0 * out.initial_loss && out.initial_loss > 0) {
                out.diverged = true;
                break;
            }
            for (double& gi : g) gi /= norm;
            step_adam(params, g, adam, lr);
        }
        out.params = params;
        out.params_true.clear();  // no direct parameter truth for the union
    }

    if (final_render.width == 0) final_render = initial_render;
    out.final_loss = out.records.empty() ? 0.0 : out.records.back().loss;
    out.holes_final = count_mask_holes(alpha_mask(final_render), W, H);

    if (!config.out_dir.empty()) {
        ensure_dir(config.out_dir);
        write_renders(config.out_dir, composite_background(initial_render, {0, 0, 0}),
                      composite_background(final_render, {0, 0, 0}),
                      composite_background(target, {0, 0, 0}));
        write_records(config.out_dir, out.records);
    }
    return out;
}

}  // namespace drender
