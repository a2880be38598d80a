// Python bindings covering the main pipeline operations: forward rendering,
// silhouette pose gradients, splat-kernel evaluation, and mesh constructors.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "drender/evaluator.h"
#include "drender/optim.h"
#include "drender/splat.h"

namespace py = pybind11;
using namespace drender;

namespace {

using ArrayD = py::array_t<double, py::array::c_style | py::array::forcecast>;
using ArrayI = py::array_t<int, py::array::c_style | py::array::forcecast>;

TriangleMesh mesh_from_arrays(const ArrayD& verts, const ArrayI& tris,
                              const ArrayD& colors) {
    if (verts.ndim() != 2 || verts.shape(1) != 3)
        throw std::invalid_argument("verts must have shape (n, 3)");
    if (tris.ndim() != 2 || tris.shape(1) != 3)
        throw std::invalid_argument("tris must have shape (m, 3)");
    TriangleMesh mesh;
    auto v = verts.unchecked<2>();
    for (py::ssize_t i = 0; i < v.shape(0); i++)
        mesh.positions.push_back({v(i, 0), v(i, 1), v(i, 2)});
    auto t = tris.unchecked<2>();
    for (py::ssize_t i = 0; i < t.shape(0); i++)
        mesh.triangles.push_back({t(i, 0), t(i, 1), t(i, 2)});
    if (colors.size() > 0) {
        if (colors.ndim() != 2 || colors.shape(0) != verts.shape(0) ||
            colors.shape(1) != 3)
            throw std::invalid_argument("colors must have shape (n, 3)");
        auto c = colors.unchecked<2>();
        for (py::ssize_t i = 0; i < c.shape(0); i++)
            mesh.colors.push_back({c(i, 0), c(i, 1), c(i, 2)});
    }
    return mesh;
}

PoseParams pose_from_array(const ArrayD& pose) {
    if (pose.size() != 6)
        throw std::invalid_argument("pose must have 6 entries (axis-angle, translation)");
    auto p = pose.unchecked<1>();
    return {{p(0), p(1), p(2)}, {p(3), p(4), p(5)}};
}

// premultiplied RGBA render of a vertex-colored (or flat gray) mesh
py::array_t<double> render_mesh(const ArrayD& verts, const ArrayI& tris,
                                const ArrayD& pose, const ArrayD& colors, int width,
                                int height, int layers, int threads) {
    TriangleMesh mesh = mesh_from_arrays(verts, tris, colors);
    Camera cam;
    cam.width = width;
    cam.height = height;
    PoseParams pp = pose_from_array(pose);
    SampleBuffer sb = rasterize_mesh(mesh, cam, pp, layers, threads);
    GBuffer<double> gb = evaluate_mesh(mesh, MeshAttribs<double>{}, sb);
    PositionBuffer<double> pb = build_position_buffer(gb, cam, pp);
    ShadedLayer<double> sl = mesh.colors.empty()
                                 ? shade_flat(gb, Vec3d{0.7, 0.7, 0.7})
                                 : shade_vertex_color(gb);
    Image4<double> img = splat_multilayer(sl, pb);
    py::array_t<double> out({height, width, 4});
    auto o = out.mutable_unchecked<3>();
    for (int y = 0; y < height; y++)
        for (int x = 0; x < width; x++) {
            const Vec4<double>& c = img.at(y, x);
            o(y, x, 0) = c.x;
            o(y, x, 1) = c.y;
            o(y, x, 2) = c.z;
            o(y, x, 3) = c.w;
        }
    return out;
}

// L2 silhouette loss against a target alpha image plus its pose gradient
py::tuple pose_silhouette_grad(const ArrayD& verts, const ArrayI& tris,
                               const ArrayD& pose, const ArrayD& target_alpha,
                               int layers, int threads) {
    TriangleMesh mesh = mesh_from_arrays(verts, tris, ArrayD());
    if (target_alpha.ndim() != 2)
        throw std::invalid_argument("target_alpha must have shape (h, w)");
    int height = int(target_alpha.shape(0)), width = int(target_alpha.shape(1));
    Camera cam;
    cam.width = width;
    cam.height = height;
    PoseParams pp = pose_from_array(pose);

    std::array<Dual, 6> p;
    auto pv = pose.unchecked<1>();
    for (int i = 0; i < 6; i++) p[i] = Dual::seeded(pv(i), i, 6);
    Pose<Dual> dual_pose = Pose<Dual>::from(std::span<const Dual>(p));

    SampleBuffer sb = rasterize_mesh(mesh, cam, pp, layers, threads);
    GBuffer<Dual> gb = evaluate_mesh(mesh, MeshAttribs<Dual>{}, sb);
    PositionBuffer<Dual> pb = build_position_buffer(gb, cam, dual_pose);
    Image4<Dual> img = splat_multilayer(shade_silhouette(gb), pb);

    auto t = target_alpha.unchecked<2>();
    Dual loss = 0.0;
    for (int y = 0; y < height; y++)
        for (int x = 0; x < width; x++) {
            Dual d = img.at(y, x).w - t(y, x);
            loss += d * d;
        }
    loss = loss / double(width * height);
    py::array_t<double> grad(6);
    auto g = grad.mutable_unchecked<1>();
    for (int i = 0; i < 6; i++) g(i) = loss.d[i];
    return py::make_tuple(loss.v, grad);
}

py::tuple icosphere(int subdivisions, double radius) {
    TriangleMesh mesh = make_icosphere(subdivisions, radius);
    py::array_t<double> verts({py::ssize_t(mesh.positions.size()), py::ssize_t(3)});
    auto v = verts.mutable_unchecked<2>();
    for (size_t i = 0; i < mesh.positions.size(); i++) {
        v(py::ssize_t(i), 0) = mesh.positions[i].x;
        v(py::ssize_t(i), 1) = mesh.positions[i].y;
        v(py::ssize_t(i), 2) = mesh.positions[i].z;
    }
    py::array_t<int> tris({py::ssize_t(mesh.triangles.size()), py::ssize_t(3)});
    auto t = tris.mutable_unchecked<2>();
    for (size_t i = 0; i < mesh.triangles.size(); i++) {
        t(py::ssize_t(i), 0) = mesh.triangles[i].x;
        t(py::ssize_t(i), 1) = mesh.triangles[i].y;
        t(py::ssize_t(i), 2) = mesh.triangles[i].z;
    }
    return py::make_tuple(verts, tris);
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "differentiable surface rendering via rasterize-then-splat";
    m.def("render_mesh", &render_mesh, py::arg("verts"), py::arg("tris"),
          py::arg("pose"), py::arg("colors") = ArrayD(), py::arg("width") = 128,
          py::arg("height") = 128, py::arg("layers") = 2, py::arg("threads") = 1,
          "Render a triangle mesh to a premultiplied RGBA (h, w, 4) array");
    m.def("pose_silhouette_grad", &pose_silhouette_grad, py::arg("verts"),
          py::arg("tris"), py::arg("pose"), py::arg("target_alpha"),
          py::arg("layers") = 2, py::arg("threads") = 1,
          "Silhouette L2 loss and its 6-vector pose gradient");
    m.def(
        "splat_weight",
        [](double px, double py_, int qx, int qy) {
            return splat_weight(Vec2<double>{px, py_}, qx, qy);
        },
        py::arg("px"), py::arg("py"), py::arg("qx"), py::arg("qy"),
        "Splat kernel weight of point (px, py) at pixel (qx, qy)");
    m.def("icosphere", &icosphere, py::arg("subdivisions") = 2,
          py::arg("radius") = 1.0, "Icosphere as (verts, tris) arrays");
}
