#include "drender/io.h"

#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

namespace drender {

// ---------------------------------------------------------------- obj

namespace {

// one face corner: position / texcoord / normal indices, 0-based, -1 = absent
struct Corner {
    int v = -1, vt = -1, vn = -1;
    bool operator<(const Corner& o) const {
        return std::tie(v, vt, vn) < std::tie(o.v, o.vt, o.vn);
    }
};

double parse_double(const std::string& tok, const std::string& path, int line) {
    char* end = nullptr;
    double x = std::strtod(tok.c_str(), &end);
    if (end != tok.c_str() + tok.size() || tok.empty())
        throw ParseError(path, line, "expected number, got '" + tok + "'");
    return x;
}

// index within [1, count], converted to 0-based
int parse_index(const std::string& tok, size_t count, const std::string& path,
                int line) {
    char* end = nullptr;
    long idx = std::strtol(tok.c_str(), &end, 10);
    if (end != tok.c_str() + tok.size() || tok.empty())
        throw ParseError(path, line, "expected index, got '" + tok + "'");
    if (idx < 1 || size_t(idx) > count)
        throw ParseError(path, line,
                         "index " + std::to_string(idx) + " out of range [1, " +
                             std::to_string(count) + "]");
    return int(idx - 1);
}

Corner parse_corner(const std::string& tok, size_t nv, size_t nvt, size_t nvn,
                    const std::string& path, int line) {
    Corner c;
    size_t s1 = tok.find('/');
    if (s1 == std::string::npos) {
        c.v = parse_index(tok, nv, path, line);
        return c;
    }
    c.v = parse_index(tok.substr(0, s1), nv, path, line);
    size_t s2 = tok.find('/', s1 + 1);
    if (s2 == std::string::npos) {  // v/vt
        c.vt = parse_index(tok.substr(s1 + 1), nvt, path, line);
        return c;
    }
    if (s2 > s1 + 1)  // v/vt/vn (else v//vn)
        c.vt = parse_index(tok.substr(s1 + 1, s2 - s1 - 1), nvt, path, line);
    c.vn = parse_index(tok.substr(s2 + 1), nvn, path, line);
    return c;
}

}  // namespace

TriangleMesh load_obj(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ParseError(path, 0, "cannot open file");

    std::vector<Vec3d> positions, normals;
    std::vector<Vec2d> texcoords;
    std::vector<std::array<Corner, 3>> faces;

    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string key;
        if (!(ls >> key) || key[0] == '#') continue;
        std::vector<std::string> toks;
        for (std::string t; ls >> t;) toks.push_back(t);
        if (key == "v") {
            if (toks.size() != 3)
                throw ParseError(path, lineno, "vertex needs 3 coordinates");
            positions.push_back({parse_double(toks[0], path, lineno),
                                 parse_double(toks[1], path, lineno),
                                 parse_double(toks[2], path, lineno)});
        } else if (key == "vn") {
            if (toks.size() != 3)
                throw ParseError(path, lineno, "normal needs 3 coordinates");
            normals.push_back({parse_double(toks[0], path, lineno),
                               parse_double(toks[1], path, lineno),
                               parse_double(toks[2], path, lineno)});
        } else if (key == "vt") {
            if (toks.size() < 2)
                throw ParseError(path, lineno, "texcoord needs 2 coordinates");
            texcoords.push_back({parse_double(toks[0], path, lineno),
                                 parse_double(toks[1], path, lineno)});
        } else if (key == "f") {
            if (toks.size() != 3)
                throw ParseError(path, lineno,
                                 "face needs exactly 3 corners (triangles only)");
            std::array<Corner, 3> f;
            for (int i = 0; i < 3; ++i)
                f[i] = parse_corner(toks[i], positions.size(), texcoords.size(),
                                    normals.size(), path, lineno);
            faces.push_back(f);
        }
        // other keywords (o, g, s, usemtl, mtllib, ...) carry no geometry
    }

    TriangleMesh mesh;

    // faces that only reference positions, or whose vt/vn indices always agree
    // with the position index, keep the vertex pools as-is
    bool aligned = true;
    for (const auto& f : faces)
        for (const auto& c : f)
            if ((c.vt >= 0 && c.vt != c.v) || (c.vn >= 0 && c.vn != c.v))
                aligned = false;
    if (aligned) {
        mesh.positions = positions;
        if (!normals.empty() && normals.size() == positions.size())
            mesh.normals = normals;
        if (!texcoords.empty() && texcoords.size() == positions.size())
            mesh.texcoords = texcoords;
        for (const auto& f : faces)
            mesh.triangles.push_back({f[0].v, f[1].v, f[2].v});
        return mesh;
    }

    // otherwise split into one vertex per unique (v, vt, vn) triple
    std::map<Corner, int> remap;
    bool has_vt = false, has_vn = false;
    for (const auto& f : faces)
        for (const auto& c : f) {
            has_vt |= c.vt >= 0;
            has_vn |= c.vn >= 0;
        }
    for (const auto& f : faces) {
        Vec3i tri;
        for (int i = 0; i < 3; ++i) {
            auto [it, fresh] = remap.try_emplace(f[i], int(mesh.positions.size()));
            if (fresh) {
                mesh.positions.push_back(positions[f[i].v]);
                if (has_vt)
                    mesh.texcoords.push_back(f[i].vt >= 0 ? texcoords[f[i].vt]
                                                          : Vec2d{0.0, 0.0});
                if (has_vn)
                    mesh.normals.push_back(f[i].vn >= 0 ? normals[f[i].vn]
                                                        : Vec3d{0.0, 0.0, 0.0});
            }
            (i == 0 ? tri.x : i == 1 ? tri.y : tri.z) = it->second;
        }
        mesh.triangles.push_back(tri);
    }
    return mesh;
}

void save_obj(const std::string& path, const TriangleMesh& mesh) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    char buf[128];
    auto num = [&](double x) {
        std::snprintf(buf, sizeof(buf), "%.17g", x);
        return std::string(buf);
    };
    for (const auto& p : mesh.positions)
        out << "v " << num(p.x) << ' ' << num(p.y) << ' ' << num(p.z) << '\n';
    for (const auto& t : mesh.texcoords)
        out << "vt " << num(t.x) << ' ' << num(t.y) << '\n';
    for (const auto& n : mesh.normals)
        out << "vn " << num(n.x) << ' ' << num(n.y) << ' ' << num(n.z) << '\n';
    bool vt = !mesh.texcoords.empty(), vn = !mesh.normals.empty();
    for (const auto& t : mesh.triangles) {
        out << 'f';
        for (int idx : {t.x, t.y, t.z}) {
            int i = idx + 1;
            out << ' ' << i;
            if (vt && vn)
                out << '/' << i << '/' << i;
            else if (vt)
                out << '/' << i;
            else if (vn)
                out << "//" << i;
        }
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

// ---------------------------------------------------------------- png

void save_png(const std::string& path, const Image4<double>& img) {
    std::FILE* fp = std::fopen(path.c_str(), "wb");
    if (!fp) throw std::runtime_error("cannot open " + path + " for writing");
    png_structp png =
        png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(fp);
        throw std::runtime_error("png write failed for " + path);
    }
    png_init_io(png, fp);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGBA,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
                 PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(size_t(img.width) * 4);
    auto to8 = [](double v) {
        return png_byte(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
    };
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            const Vec4<double>& c = img.at(y, x);
            row[size_t(x) * 4 + 0] = to8(c.x);
            row[size_t(x) * 4 + 1] = to8(c.y);
            row[size_t(x) * 4 + 2] = to8(c.z);
            row[size_t(x) * 4 + 3] = to8(c.w);
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(fp);
}

// ---------------------------------------------------------------- pfm

void save_pfm(const std::string& path, const PfmImage& img) {
    if (img.channels != 1 && img.channels != 3)
        throw std::runtime_error("pfm supports 1 or 3 channels");
    if (img.data.size() != size_t(img.width) * img.height * img.channels)
        throw std::runtime_error("pfm data size mismatch");
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    out << (img.channels == 3 ? "PF" : "Pf") << '\n'
        << img.width << ' ' << img.height << '\n'
        << "-1.0" << '\n';  // negative scale = little-endian
    size_t stride = size_t(img.width) * img.channels;
    for (int y = img.height - 1; y >= 0; --y)  // rows run bottom to top
        out.write(reinterpret_cast<const char*>(img.data.data() + y * stride),
                  std::streamsize(stride * sizeof(float)));
    if (!out) throw std::runtime_error("write failed for " + path);
}

PfmImage load_pfm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, 0, "cannot open file");
    std::string magic;
    int width = 0, height = 0;
    double scale = 0.0;
    in >> magic >> width >> height >> scale;
    if (magic != "PF" && magic != "Pf")
        throw ParseError(path, 1, "not a pfm file (magic '" + magic + "')");
    if (width <= 0 || height <= 0)
        throw ParseError(path, 2, "bad dimensions");
    if (scale >= 0.0)
        throw ParseError(path, 3, "big-endian pfm not supported");
    in.get();  // single whitespace byte after the scale line
    PfmImage img;
    img.width = width;
    img.height = height;
    img.channels = magic == "PF" ? 3 : 1;
    img.data.resize(size_t(width) * height * img.channels);
    size_t stride = size_t(width) * img.channels;
    for (int y = height - 1; y >= 0; --y)
        in.read(reinterpret_cast<char*>(img.data.data() + y * stride),
                std::streamsize(stride * sizeof(float)));
    if (!in) throw ParseError(path, 3, "truncated pixel data");
    return img;
}

// ---------------------------------------------------------------- csv

void save_csv(const std::string& path, const std::vector<std::string>& header,
              const std::vector<std::vector<double>>& rows) {
    std::vector<std::vector<std::string>> cells(rows.size());
    char buf[64];
    for (size_t r = 0; r < rows.size(); ++r) {
        cells[r].reserve(rows[r].size());
        for (double v : rows[r]) {
            std::snprintf(buf, sizeof(buf), "%.17g", v);
            cells[r].emplace_back(buf);
        }
    }
    save_csv(path, header, cells);
}

void save_csv(const std::string& path, const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + path + " for writing");
    for (size_t i = 0; i < header.size(); ++i)
        out << (i ? "," : "") << header[i];
    out << '\n';
    for (const auto& row : rows) {
        if (row.size() != header.size())
            throw std::runtime_error("csv row width mismatch in " + path);
        for (size_t i = 0; i < row.size(); ++i)
            out << (i ? "," : "") << row[i];
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed for " + path);
}

}  // namespace drender
