#pragma once

#include <cmath>
#include <span>
#include <vector>

#include "drender/shading.h"

// Differentiable splatting stage: each shaded sample becomes a 3x3 Gaussian
// splat at its differentiable screen position. Multi-layer samples are routed
// into front / surface / behind accumulation buffers by depth pairing, each
// buffer is normalized, and the three are over-composited. Implemented as a
// gather over the 3x3 neighborhood of every output pixel, in a fixed scanline
// order, so results are deterministic.

namespace drender {

inline constexpr double kSplatSigma = 0.5;   // exp(-|q-p|^2 / (2 sigma^2))
inline constexpr double kSplatEps = 0.05;    // overshoot so full coverage sums > 1

template <class T>
struct Image4 {
    int width = 0, height = 0;
    std::vector<Vec4<T>> pixels;

    Vec4<T>& at(int y, int x) { return pixels[size_t(y) * width + x]; }
    const Vec4<T>& at(int y, int x) const { return pixels[size_t(y) * width + x]; }
};

template <class T>
Image4<T> alloc_image(int width, int height) {
    Image4<T> img;
    img.width = width;
    img.height = height;
    img.pixels.assign(size_t(width) * height, Vec4<T>{T(0.0), T(0.0), T(0.0), T(0.0)});
    return img;
}

// splat weight of a sample centered at p evaluated at pixel q: the Gaussian
// normalized over the 3x3 neighborhood of the pixel containing p (pixel
// centers sit on integer coordinates), scaled by 1+eps; exactly zero outside
// that neighborhood. sigma = 0.5 makes the exponent -2 |q-p|^2.
template <class T>
T splat_weight(const Vec2<T>& p, int qx, int qy) {
    using std::exp;
    double fx = std::floor(value(p.x) + 0.5), fy = std::floor(value(p.y) + 0.5);
    if (std::abs(qx - fx) > 1.0 || std::abs(qy - fy) > 1.0) return T(0.0);
    T sx = T(0.0), sy = T(0.0);
    for (int d = -1; d <= 1; d++) {
        T dx = T(fx + d) - p.x, dy = T(fy + d) - p.y;
        sx = sx + exp(dx * dx * -2.0);
        sy = sy + exp(dy * dy * -2.0);
    }
    T ex = T(qx) - p.x, ey = T(qy) - p.y;
    return T(1.0 + kSplatEps) / (sx * sy) * exp((ex * ex + ey * ey) * -2.0);
}

enum class SplatBucket : uint8_t { front, surface, behind };

// routes each p-layer of a splat into an accumulation buffer by pairing it
// with the destination pixel's nearest layer in depth (plain values; the
// pairing is a discrete decision like sampling itself). The p-layer paired
// with the front-most q-layer takes the surface bucket, layers in front of it
// go front, the rest behind. Ties pick the nearer-to-camera layer.
inline void assign_layers(std::span<const double> p_z, std::span<const uint8_t> p_valid,
                          std::span<const double> q_z, std::span<const uint8_t> q_valid,
                          std::span<SplatBucket> out) {
    int qf = -1;
    for (size_t j = 0; j < q_valid.size(); j++)
        if (q_valid[j]) {
            qf = int(j);
            break;
        }
    if (qf < 0) {  // nothing at the destination: background-adjacent case
        for (size_t i = 0; i < out.size(); i++) out[i] = SplatBucket::surface;
        return;
    }
    int ko = -1;
    double best = 1e300;
    for (size_t i = 0; i < p_z.size(); i++) {
        if (!p_valid[i]) continue;
        int nearest = -1;
        double nd = 1e300;
        for (size_t j = 0; j < q_z.size(); j++) {
            if (!q_valid[j]) continue;
            double d = std::abs(p_z[i] - q_z[j]);
            if (d < nd) {
                nd = d;
                nearest = int(j);
            }
        }
        if (nearest == qf && nd < best) {
            best = nd;
            ko = int(i);
        }
    }
    for (size_t i = 0; i < out.size(); i++) {
        if (ko < 0)
            out[i] = SplatBucket::behind;  // everything pairs deeper than the front
        else
            out[i] = int(i) < ko    ? SplatBucket::front
                     : int(i) == ko ? SplatBucket::surface
                                    : SplatBucket::behind;
    }
}

// premultiplied over-compositing
template <class T>
Vec4<T> composite_over(const Vec4<T>& front, const Vec4<T>& back) {
    return front + back * (T(1.0) - front.w);
}

inline constexpr int kMaxSplatLayers = 8;

template <class T>
void splat_multilayer(const ShadedLayer<T>& colors, const PositionBuffer<T>& positions,
                      Image4<T>& out, int y0 = 0, int y1 = -1) {
    using std::exp;
    using std::max;
    const int W = positions.width, H = positions.height, K = positions.layers;
    if (K > kMaxSplatLayers) throw std::invalid_argument("too many splat layers");
    detail::clamp_rows(H, y0, y1);
    size_t n = positions.valid.size();

    // per-sample prepass over the rows this window gathers from: plain depth
    // and anchor pixel for routing, plus the (1+eps)/W_p normalization factor
    std::vector<uint8_t> live(n, 0);
    std::vector<double> zval(n, 0.0), fx(n, 0.0), fy(n, 0.0);
    std::vector<T> norm(n, T(0.0));
    int p0 = y0 > 0 ? y0 - 1 : 0, p1 = y1 < H ? y1 + 1 : H;
    for (int k = 0; k < K; k++)
        for (int y = p0; y < p1; y++)
            for (int x = 0; x < W; x++) {
                size_t i = positions.at(k, y, x);
                live[i] = positions.valid[i] && colors.valid[i];
                if (!live[i]) continue;
                const Vec3<T>& p = positions.screen[i];
                zval[i] = value(p.z);
                fx[i] = std::floor(value(p.x) + 0.5);
                fy[i] = std::floor(value(p.y) + 0.5);
                T sx = T(0.0), sy = T(0.0);
                for (int d = -1; d <= 1; d++) {
                    T dx = T(fx[i] + d) - p.x, dy = T(fy[i] + d) - p.y;
                    sx = sx + exp(dx * dx * -2.0);
                    sy = sy + exp(dy * dy * -2.0);
                }
                norm[i] = T(1.0 + kSplatEps) / (sx * sy);
            }

    double qz[kMaxSplatLayers], pz[kMaxSplatLayers];
    uint8_t qv[kMaxSplatLayers], pv[kMaxSplatLayers];
    SplatBucket bucket[kMaxSplatLayers];
    for (int y = y0; y < y1; y++)
        for (int x = 0; x < W; x++) {
            for (int k = 0; k < K; k++) {
                size_t i = positions.at(k, y, x);
                qz[k] = zval[i];
                qv[k] = live[i];
            }
            Vec4<T> acc[3] = {Vec4<T>{T(0.0), T(0.0), T(0.0), T(0.0)},
                              Vec4<T>{T(0.0), T(0.0), T(0.0), T(0.0)},
                              Vec4<T>{T(0.0), T(0.0), T(0.0), T(0.0)}};
            T wsum[3] = {T(0.0), T(0.0), T(0.0)};
            for (int dy = -1; dy <= 1; dy++)
                for (int dx = -1; dx <= 1; dx++) {
                    int xr = x + dx, yr = y + dy;
                    if (xr < 0 || xr >= W || yr < 0 || yr >= H) continue;
                    for (int k = 0; k < K; k++) {
                        size_t i = positions.at(k, yr, xr);
                        pz[k] = zval[i];
                        pv[k] = live[i];
                    }
                    assign_layers({pz, size_t(K)}, {pv, size_t(K)}, {qz, size_t(K)},
                                  {qv, size_t(K)}, {bucket, size_t(K)});
                    for (int k = 0; k < K; k++) {
                        size_t i = positions.at(k, yr, xr);
                        if (!live[i]) continue;
                        if (std::abs(x - fx[i]) > 1.0 || std::abs(y - fy[i]) > 1.0)
                            continue;  // outside the splat's 3x3 support
                        const Vec3<T>& p = positions.screen[i];
                        T ex = T(double(x)) - p.x, ey = T(double(y)) - p.y;
                        T w = norm[i] * exp((ex * ex + ey * ey) * -2.0);
                        int b = int(bucket[k]);
                        acc[b] += colors.rgba[i] * w;
                        wsum[b] = wsum[b] + w;
                    }
                }
            Vec4<T> front = acc[0] / max(T(1.0), wsum[0]);
            Vec4<T> surface = acc[1] / max(T(1.0), wsum[1]);
            Vec4<T> behind = acc[2] / max(T(1.0), wsum[2]);
            out.at(y, x) = composite_over(front, composite_over(surface, behind));
        }
}

template <class T>
Image4<T> splat_multilayer(const ShadedLayer<T>& colors,
                           const PositionBuffer<T>& positions) {
    Image4<T> out = alloc_image<T>(positions.width, positions.height);
    splat_multilayer(colors, positions, out);
    return out;
}

// single-layer convenience: s_q = sum(w c) / max(1, sum(w)) over the 3x3
// neighborhood, everything in the surface bucket
template <class T>
Image4<T> splat_layer_single(const ShadedLayer<T>& colors,
                             const PositionBuffer<T>& positions) {
    return splat_multilayer(colors, positions);
}

// splat-free reference: composites each pixel's own layer colors front to
// back with no reconstruction kernel, so boundary motion leaves no trace in
// the derivatives
template <class T>
Image4<T> composite_direct(const ShadedLayer<T>& colors,
                           const PositionBuffer<T>& positions) {
    Image4<T> out = alloc_image<T>(positions.width, positions.height);
    for (int y = 0; y < positions.height; y++)
        for (int x = 0; x < positions.width; x++) {
            Vec4<T> acc{T(0.0), T(0.0), T(0.0), T(0.0)};
            for (int k = 0; k < positions.layers; k++) {
                size_t i = positions.at(k, y, x);
                if (positions.valid[i] && colors.valid[i])
                    acc = composite_over(acc, colors.rgba[i]);
            }
            out.at(y, x) = acc;
        }
    return out;
}

// final over-composite onto an opaque background color
template <class T>
Image4<T> composite_background(const Image4<T>& img, const Vec3d& background) {
    Image4<T> out = alloc_image<T>(img.width, img.height);
    Vec3<T> bg = to_vec3<T>(background);
    for (size_t i = 0; i < img.pixels.size(); i++) {
        const Vec4<T>& c = img.pixels[i];
        T t = T(1.0) - c.w;
        out.pixels[i] = {c.x + bg.x * t, c.y + bg.y * t, c.z + bg.z * t, T(1.0)};
    }
    return out;
}

}  // namespace drender
