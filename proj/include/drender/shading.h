#pragma once

#include <span>
#include <stdexcept>
#include <string>

#include "drender/evaluator.h"

// Deferred shading stage: per-pixel differentiable functions of G-buffer
// attributes producing premultiplied-alpha RGBA layers. Invalid pixels carry
// RGBA = 0 so they composite as fully transparent.

namespace drender {

template <class T>
struct ShadedLayer {
    int width = 0, height = 0, layers = 0;
    std::vector<uint8_t> valid;
    std::vector<Vec4<T>> rgba;  // premultiplied alpha

    size_t at(int k, int y, int x) const {
        return (size_t(k) * height + y) * width + x;
    }
};

template <class T>
ShadedLayer<T> alloc_shaded(const GBuffer<T>& gb) {
    ShadedLayer<T> s;
    s.width = gb.width;
    s.height = gb.height;
    s.layers = gb.layers;
    s.valid.assign(gb.valid.size(), 0);
    s.rgba.assign(gb.valid.size(), Vec4<T>{T(0.0), T(0.0), T(0.0), T(0.0)});
    return s;
}

struct ShadingDomainError : EvalDomainError {
    int x = 0, y = 0, layer = 0;
    ShadingDomainError(int x_, int y_, int layer_)
        : EvalDomainError("non-finite shading output at pixel (" + std::to_string(x_) +
                          ", " + std::to_string(y_) + ") layer " + std::to_string(layer_)),
          x(x_),
          y(y_),
          layer(layer_) {}
};

// shading function receives the pixel's attribute record
template <class T>
struct PixelAttribs {
    Vec3<T> position;
    Vec3<T> normal;    // unnormalized interpolated normal (zero if absent)
    Vec2<T> texcoord;  // zero if absent
    Vec3<T> color;     // zero if absent
};

template <class T, class F>
void shade_custom(const GBuffer<T>& gb, const F& f, ShadedLayer<T>& out, int y0 = 0,
                  int y1 = -1) {
    detail::clamp_rows(gb.height, y0, y1);
    Vec2<T> zero2{T(0.0), T(0.0)};
    Vec3<T> zero3{T(0.0), T(0.0), T(0.0)};
    for (int k = 0; k < gb.layers; k++)
        for (int y = y0; y < y1; y++)
            for (int x = 0; x < gb.width; x++) {
                size_t i = gb.at(k, y, x);
                out.valid[i] = gb.valid[i];
                if (!gb.valid[i]) {
                    out.rgba[i] = {T(0.0), T(0.0), T(0.0), T(0.0)};
                    continue;
                }
                PixelAttribs<T> a;
                a.position = gb.position[i];
                a.normal = gb.has_normal ? gb.normal[i] : zero3;
                a.texcoord = gb.has_texcoord ? gb.texcoord[i] : zero2;
                a.color = gb.has_color ? gb.color[i] : zero3;
                Vec4<T> c = f(a);
                Vec4d v = value_of(c);
                if (!std::isfinite(v.x) || !std::isfinite(v.y) || !std::isfinite(v.z) ||
                    !std::isfinite(v.w))
                    throw ShadingDomainError(x, y, k);
                out.rgba[i] = c;
            }
}

template <class T, class F>
ShadedLayer<T> shade_custom(const GBuffer<T>& gb, const F& f) {
    ShadedLayer<T> out = alloc_shaded(gb);
    shade_custom(gb, f, out);
    return out;
}

template <class T>
void shade_silhouette(const GBuffer<T>& gb, ShadedLayer<T>& out, int y0 = 0,
                      int y1 = -1) {
    auto f = [](const PixelAttribs<T>&) {
        return Vec4<T>{T(1.0), T(1.0), T(1.0), T(1.0)};
    };
    shade_custom(gb, f, out, y0, y1);
}

template <class T>
ShadedLayer<T> shade_silhouette(const GBuffer<T>& gb) {
    ShadedLayer<T> out = alloc_shaded(gb);
    shade_silhouette(gb, out);
    return out;
}

template <class T>
void shade_flat(const GBuffer<T>& gb, const Vec3<T>& color, ShadedLayer<T>& out,
                int y0 = 0, int y1 = -1) {
    auto f = [&](const PixelAttribs<T>&) {
        return Vec4<T>{color.x, color.y, color.z, T(1.0)};
    };
    shade_custom(gb, f, out, y0, y1);
}

template <class T>
ShadedLayer<T> shade_flat(const GBuffer<T>& gb, const Vec3<T>& color) {
    ShadedLayer<T> out = alloc_shaded(gb);
    shade_flat(gb, color, out);
    return out;
}

template <class T>
void shade_vertex_color(const GBuffer<T>& gb, ShadedLayer<T>& out, int y0 = 0,
                        int y1 = -1) {
    if (!gb.has_color) throw std::invalid_argument("g-buffer carries no colors");
    auto f = [](const PixelAttribs<T>& a) {
        return Vec4<T>{a.color.x, a.color.y, a.color.z, T(1.0)};
    };
    shade_custom(gb, f, out, y0, y1);
}

template <class T>
ShadedLayer<T> shade_vertex_color(const GBuffer<T>& gb) {
    ShadedLayer<T> out = alloc_shaded(gb);
    shade_vertex_color(gb, out);
    return out;
}

// albedo from a bilinear texture fetch, lit by one directional light:
// albedo * (ambient + light_color * max(0, n.l))
template <class T>
void shade_diffuse_textured(const GBuffer<T>& gb, int tex_width, int tex_height,
                            std::span<const Vec3<T>> texels, const Vec3d& light_dir,
                            const Vec3<T>& light_color, const Vec3<T>& ambient,
                            ShadedLayer<T>& out, int y0 = 0, int y1 = -1) {
    if (!gb.has_normal || !gb.has_texcoord)
        throw std::invalid_argument("diffuse shading needs normals and texcoords");
    Vec3d l = normalized(light_dir);
    auto f = [&](const PixelAttribs<T>& a) {
        using std::max;
        using std::sqrt;
        Vec3<T> albedo = sample_texture(tex_width, tex_height, texels, a.texcoord);
        T inv_len = T(1.0) / sqrt(dot(a.normal, a.normal) + T(1e-12));
        T ndotl = dot(a.normal, to_vec3<T>(l)) * inv_len;
        Vec3<T> c = albedo * (ambient + light_color * max(T(0.0), ndotl));
        return Vec4<T>{c.x, c.y, c.z, T(1.0)};
    };
    shade_custom(gb, f, out, y0, y1);
}

template <class T>
ShadedLayer<T> shade_diffuse_textured(const GBuffer<T>& gb, int tex_width,
                                      int tex_height, std::span<const Vec3<T>> texels,
                                      const Vec3d& light_dir, const Vec3<T>& light_color,
                                      const Vec3<T>& ambient) {
    ShadedLayer<T> out = alloc_shaded(gb);
    shade_diffuse_textured(gb, tex_width, tex_height, texels, light_dir, light_color,
                           ambient, out);
    return out;
}

// constant-texture convenience: lifts the texture's texels per fetch
template <class T>
ShadedLayer<T> shade_diffuse_textured(const GBuffer<T>& gb, const Texture& tex,
                                      const Vec3d& light_dir, const Vec3<T>& light_color,
                                      const Vec3<T>& ambient) {
    if (!gb.has_normal || !gb.has_texcoord)
        throw std::invalid_argument("diffuse shading needs normals and texcoords");
    Vec3d l = normalized(light_dir);
    auto f = [&](const PixelAttribs<T>& a) {
        using std::max;
        using std::sqrt;
        Vec3<T> albedo = sample_texture<T>(tex, a.texcoord);
        T inv_len = T(1.0) / sqrt(dot(a.normal, a.normal) + T(1e-12));
        T ndotl = dot(a.normal, to_vec3<T>(l)) * inv_len;
        Vec3<T> c = albedo * (ambient + light_color * max(T(0.0), ndotl));
        return Vec4<T>{c.x, c.y, c.z, T(1.0)};
    };
    return shade_custom(gb, f);
}

}  // namespace drender
