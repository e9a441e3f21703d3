#pragma once

#include <array>
#include <filesystem>
#include <vector>

#include "boostdream/camera_rig.hpp"
#include "boostdream/render.hpp"

namespace boostdream {

// Coarse explicit triangle mesh with per-vertex colors and normals.
struct CoarseAsset {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> triangles;
    std::vector<Vec3> vertex_colors;   // RGB in [0, 1]
    std::vector<Vec3> vertex_normals;  // unit length

    // Throws LoadError on out-of-range indices, empty meshes, non-finite data
    // or size mismatches.
    void validate() const;
};

inline const Vec3 kDefaultVertexColor{0.5, 0.5, 0.5};

// Area-weighted vertex normals.
std::vector<Vec3> compute_vertex_normals(const std::vector<Vec3>& vertices,
                                         const std::vector<std::array<int, 3>>& triangles);

// Uniformly scales and centers the mesh so its bounding box fits [-extent, extent]^3.
void normalize_to_box(CoarseAsset& asset, double extent = 0.9);

// Reads OBJ (v / vn / f, plus "v x y z r g b" colors) or PLY (ascii or binary
// little-endian, optional red/green/blue and nx/ny/nz vertex properties),
// fills missing colors/normals and normalizes into [-0.9, 0.9]^3.
CoarseAsset load_mesh(const std::filesystem::path& path);

// Depth-buffered software rasterization of the unshaded vertex colors.
// The normal channel holds the camera-space geometric (face) normal, flipped
// to face the camera, so encode_normal_map() treats mesh and field renders
// identically. Uncovered pixels: background color, opacity 0, depth +inf.
RenderOutput rasterize(const CoarseAsset& asset, const camera::CameraPose& pose, const RenderSettings& settings = {});

Image rasterize_normal_map(const CoarseAsset& asset, const camera::CameraPose& pose, const RenderSettings& settings = {});

}  // namespace boostdream
