#pragma once

#include <vector>

#include "boostdream/camera_rig.hpp"
#include "boostdream/image.hpp"
#include "boostdream/volume_field.hpp"

// Emission-absorption volume rendering of a VoxelField and its exact
// reverse-mode gradient.
//
// Per ray: N equidistant samples at segment midpoints between box entry and
// exit, delta = segment length / N,
//   T_i = exp(-sum_{j<i} sigma_j delta),  w_i = T_i (1 - exp(-sigma_i delta)),
//   color = sum w_i c_i + (1 - O) bg,     O = sum w_i.
// sigma and c are trilinear interpolations of the activated voxel values.
//
// The default entry points run ray-parallel under OpenMP. Gradient bins are
// accumulated in per-thread buffers over a static row partition and reduced in
// thread order, so results are deterministic for a fixed thread count and
// agree across thread counts to rounding (~1e-12 relative).
// boostdream::reference holds the serial, formula-by-formula implementation
// the tests and benchmarks compare against.
namespace boostdream {

struct RenderSettings {
    int samples_per_ray = 64;
    Vec3 background = Vec3::Ones();
    // Pixels with opacity below this are treated as background for normals.
    double visibility_epsilon = 0.05;
    bool compute_normals = true;
    // Retain per-sample weights, world normals and ray directions (needed by
    // the orientation loss).
    bool keep_samples = false;
    // Samples with weight below this get no normal (excluded from the normal
    // map and orientation loss).
    double normal_min_weight = 1e-6;
};

struct RenderOutput {
    int height = 0;
    int width = 0;
    Image color;      // H x W x 3, in [0, 1]
    Image opacity;    // H x W x 1, accumulated weight O
    Image depth;      // H x W x 1, sum(w t) / max(O, eps); +inf for mesh misses
    Image depth_raw;  // H x W x 1, sum(w t)
    Image normal;     // H x W x 3 camera-space unit normals, zero where O < eps_vis

    int samples_per_ray = 0;
    std::vector<double> sample_weights;  // rays x samples
    std::vector<double> sample_normals;  // rays x samples x 3, world space
    std::vector<double> ray_directions;  // rays x 3, world space

    std::size_t ray_count() const noexcept { return static_cast<std::size_t>(height) * width; }
};

RenderOutput render(const VoxelField& field, const camera::CameraPose& pose, const RenderSettings& settings = {});

// (n + 1) / 2 encoding of camera-space normals; pixels below the visibility
// threshold encode the camera-facing normal (0.5, 0.5, 1.0).
Image encode_normal_map(const RenderOutput& out, double visibility_epsilon);

Image render_normal_map(const VoxelField& field, const camera::CameraPose& pose, const RenderSettings& settings = {});

// Reverse-mode derivative of the render contract. dL_dopacity may be null.
// Throws NumericError naming the first non-finite input pixel.
FieldGradient field_gradient(const VoxelField& field, const camera::CameraPose& pose, const Image& dL_dcolor,
                             const Image* dL_dopacity = nullptr, const RenderSettings& settings = {});

// Orientation penalty: sum over samples of w_i * max(0, n_i . d)^2 divided by
// the ray count, with w_i treated as constant. Requires keep_samples.
double orientation_loss(const RenderOutput& out);

// Adds scale * d(orientation_loss)/d(density_raw) into grad. The weights come
// from `out` (stop-gradient); the normals are differentiated through the
// central-difference density gradient.
void accumulate_orientation_gradient(const VoxelField& field, const camera::CameraPose& pose,
                                     const RenderOutput& out, double scale, FieldGradient& grad,
                                     const RenderSettings& settings = {});

// Mean over rays of sqrt(O^2 + 0.01).
double opacity_loss(const RenderOutput& out);
// d(opacity_loss)/dO per pixel, H x W x 1.
Image opacity_loss_gradient(const RenderOutput& out);

namespace reference {

// Serial renderer evaluating transmittance by explicit prefix sums per sample.
RenderOutput render(const VoxelField& field, const camera::CameraPose& pose, const RenderSettings& settings = {});

// Serial gradient using the closed-form per-sample derivative
//   dC/dsigma_k = delta (T_{k+1} c_k - sum_{i>k} w_i c_i - T_N bg),
//   dO/dsigma_k = delta T_N.
FieldGradient field_gradient(const VoxelField& field, const camera::CameraPose& pose, const Image& dL_dcolor,
                             const Image* dL_dopacity = nullptr, const RenderSettings& settings = {});

}  // namespace reference

}  // namespace boostdream
