#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "drender/scene.h"
#include "drender/splat.h"

// Artifact plumbing: triangulated-OBJ meshes, 8-bit PNG renders, 32-bit PFM
// derivative maps, and CSV logs. All writers are deterministic byte-for-byte
// for identical inputs.

namespace drender {

struct ParseError : std::runtime_error {
    std::string file;
    int line = 0;
    ParseError(const std::string& file_, int line_, const std::string& msg)
        : std::runtime_error(file_ + ":" + std::to_string(line_) + ": " + msg),
          file(file_),
          line(line_) {}
};

// v/vt/vn/f subset, 1-based indices, triangles only; mismatched index spaces
// are split into unique corners
TriangleMesh load_obj(const std::string& path);
void save_obj(const std::string& path, const TriangleMesh& mesh);

// 8-bit RGBA, values clamped to [0,1] and scaled; no gamma curve
void save_png(const std::string& path, const Image4<double>& img);

// 32-bit float map; negative scale header marks little-endian; 1 or 3 channels
struct PfmImage {
    int width = 0, height = 0, channels = 1;
    std::vector<float> data;  // row-major, top row first
};
void save_pfm(const std::string& path, const PfmImage& img);
PfmImage load_pfm(const std::string& path);

// header row then %.17g-formatted numeric rows
void save_csv(const std::string& path, const std::vector<std::string>& header,
              const std::vector<std::vector<double>>& rows);

// preformatted cells, for mixed-type logs (hashes, labels)
void save_csv(const std::string& path, const std::vector<std::string>& header,
              const std::vector<std::vector<std::string>>& rows);

}  // namespace drender
