#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "drender/io.h"
#include "drender/optim.h"
#include "drender/sampler.h"
#include "drender/shading.h"

// Inverse-rendering experiment drivers: derivative visualization against
// finite differences, silhouette pose recovery, multi-view mesh fitting,
// profile-curve fitting for a surface of revolution, and implicit-surface
// fitting with topology changes. Every driver renders its own synthetic
// target, records a loss curve, and (when out_dir is set) writes initial /
// final / target renders plus CSV logs. Wall-clock times go to a separate
// CSV so the loss log stays bit-reproducible across thread counts.

namespace drender {

struct ExperimentConfig {
    int width = 0, height = 0;  // 0 picks the experiment default
    int layers = 2;
    int threads = 1;
    int iters = 0;          // 0 picks the experiment default
    uint64_t seed = 7;
    std::string optimizer;  // "adam" | "gd" | "lm"; empty picks the default
    double lr = 0;          // 0 picks the experiment default
    std::string scene;      // experiment-specific variant; empty = default
    std::string mesh_path;  // optional OBJ override where meshes apply
    std::string out_dir;    // empty disables artifact output
    bool fast_path = false;  // pose: reuse sampled positions as constants
    double perturb_rot_deg = 10.0;
    double perturb_trans_frac = 0.05;
    double lambda_laplacian = -1;  // <0 picks the default
    // optional overrides for experiments with small parameter vectors
    // (spline radii, swept-surface radii); empty picks the defaults
    std::vector<double> init_params, target_params;
};

// ---------------------------------------------------------------------------
// derivative visualization (scenes: "square" | "occluded" | "static")

struct DerivViz {
    int width = 0, height = 0;
    // signed per-pixel d(mean rgb)/dt, t in pixel units of object motion
    std::vector<double> fd, rts1, rts2, nosplat;
    double corr_rts1 = 0, corr_rts2 = 0, corr_nosplat = 0;  // vs fd
    double dloss_dt = 0, dloss_dt_fd = 0;  // scalar L2-loss derivative check
    // scene "occluded": derivative energy inside the fully occluded region
    double occluded_energy_rts1 = 0, occluded_energy_rts2 = 0;
    // energy on the moving-silhouette band (where |fd| is non-negligible)
    double boundary_energy_rts2 = 0, boundary_energy_nosplat = 0;
    // the masks backing the energies: occluder in front of the moving object,
    // and the band where the finite-difference image itself is nonzero
    std::vector<uint8_t> occluded_mask, boundary_mask;
    double colormap_range = 0;
};
DerivViz run_derivative_viz(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// pose recovery from a silhouette

struct PoseFit {
    std::vector<LossRecord> records;
    bool diverged = false;
    PoseParams pose, pose_true, pose_init;
    double rot_error_deg = 0;
    double trans_error = 0;         // absolute, world units
    double trans_error_extent = 0;  // fraction of the mesh bounding diameter
    double extent = 0;
};
PoseFit run_pose_fit(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// multi-view mesh fit (scenes: "ellipsoid" | "colors")

struct MeshFit {
    std::vector<LossRecord> records;
    bool diverged = false;
    TriangleMesh mesh;  // optimized positions and colors
    double initial_loss = 0, final_loss = 0;
    double color_mean_error = 0;  // vs ground-truth vertex colors
};
MeshFit run_mesh_fit(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// profile radii of a surface of revolution

struct SplineFit {
    std::vector<LossRecord> records;
    bool diverged = false;
    std::vector<double> radii, radii_true;
    double max_rel_error = 0;
    double initial_loss = 0, final_loss = 0;
};
SplineFit run_spline_fit(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// implicit-surface fit on a lattice (scenes: "union" | "swept")

struct ImplicitFit {
    std::vector<LossRecord> records;
    bool diverged = false;
    std::vector<double> params, params_true;  // swept: (ring radius, tube radius)
    double initial_loss = 0, final_loss = 0;
    int holes_initial = 0, holes_final = 0;  // enclosed background components
};
ImplicitFit run_implicit_fit(const ExperimentConfig& config);

// ---------------------------------------------------------------------------
// shared helpers

// plain forward render of a vertex-colored mesh, composited on a background
Image4<double> render_mesh_image(const TriangleMesh& mesh, const Camera& cam,
                                 const PoseParams& pose, int layers, int threads,
                                 const Vec3d& background);

double pearson(std::span<const double> a, std::span<const double> b);

// background components fully enclosed by the mask (not touching the border)
int count_mask_holes(const std::vector<uint8_t>& mask, int width, int height);

// blue-white-red map of a signed field; range <= 0 uses max |v|
Image4<double> colormap_signed(std::span<const double> values, int width,
                               int height, double range = 0);

PfmImage scalar_to_pfm(std::span<const double> values, int width, int height);

// gradient of a row-banded scalar: f(xs, y0, y1) returns the loss contribution
// of output rows [y0, y1); each band gets its own tape so memory stays small.
// Returns the total and its gradient.
template <class F>
std::pair<double, std::vector<double>> grad_rows(const F& f, std::span<const double> x,
                                                 int height, int band = 16,
                                                 size_t reserve_hint = 1 << 20) {
    double total = 0;
    std::vector<double> g(x.size(), 0.0);
    for (int y0 = 0; y0 < height; y0 += band) {
        int y1 = y0 + band < height ? y0 + band : height;
        Tape tape;
        tape.reserve(reserve_hint);
        std::vector<Rev> xs(x.size());
        for (size_t i = 0; i < x.size(); i++) xs[i] = tape.var(x[i]);
        Rev y = f(std::span<const Rev>(xs), y0, y1);
        if (!std::isfinite(y.v) || tape.first_nonfinite() >= 0)
            throw EvalDomainError("non-finite value in banded gradient",
                                  tape.first_nonfinite());
        total += y.v;
        std::vector<double> adj = tape.backward(y.idx);
        for (size_t i = 0; i < x.size(); i++)
            if (xs[i].idx >= 0) g[i] += adj[xs[i].idx];
    }
    return {total, std::move(g)};
}

}  // namespace drender
