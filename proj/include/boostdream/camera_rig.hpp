#pragma once

#include <array>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

#include "boostdream/rng.hpp"

// Camera sampling and the 4-view orbit rig.
//
// World convention: Z-up, azimuth measured from +X towards +Y, all cameras
// look at the origin. Camera space is right-handed with +x right, +y up and
// +z pointing back towards the viewer (the view direction is -z).
namespace boostdream::camera {

using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;

struct Range {
    double min = 0.0;
    double max = 0.0;
};

struct CameraRanges {
    Range elevation_deg{-10.0, 70.0};
    Range azimuth_deg{0.0, 360.0};
    // Narrower than the full (0, 180) pinhole range; configurable.
    Range fov_deg{40.0, 70.0};
    Range distance{3.0, 3.5};

    // Throws ConfigError on min > max or out-of-domain bounds.
    void validate() const;
};

struct CameraSample {
    double elevation_deg = 0.0;
    double azimuth_deg = 0.0;
    double fov_deg = 50.0;
    double distance = 3.0;
};

struct RotationSpec {
    Vec3 axis = Vec3::UnitZ();
    double angle_deg = 90.0;
};

struct CameraPose {
    Vec3 position = Vec3(3.0, 0.0, 0.0);
    Vec3 target = Vec3::Zero();
    Vec3 up = Vec3::UnitZ();
    double fov_deg = 50.0;
    int image_size = 64;

    Vec3 forward() const;
    Vec3 right() const;
    // Orthonormalized up vector (right x forward).
    Vec3 true_up() const;
};

inline constexpr int kRigViews = 4;

struct MultiViewRig {
    CameraSample base;
    RotationSpec rotation;
    std::array<CameraPose, kRigViews> poses;
};

CameraSample sample_camera(const CameraRanges& ranges, Rng& rng);

// Unit vector uniform on the sphere.
Vec3 sample_axis(Rng& rng);

Vec3 spherical_to_position(const CameraSample& sample);

// Cross-product matrix of the given axis, K v = axis x v.
Mat3 skew_matrix(const Vec3& axis);

// Rodrigues rotation I + sin(a) K + (1 - cos(a)) K^2 about the normalized axis.
// Throws std::invalid_argument when |axis| <= 1e-8.
Mat3 rotation_matrix(const RotationSpec& spec);

// positions[i] = R(axis, i * angle) p0; positions[0] == p0 exactly.
std::vector<Vec3> orbit_positions(const Vec3& p0, const RotationSpec& spec, int count = kRigViews);

// Look-at pose towards the origin with up = +Z, falling back to +X near the poles.
CameraPose look_at_origin(const Vec3& position, double fov_deg, int image_size);

MultiViewRig build_rig(const CameraSample& sample, const RotationSpec& spec, int image_size);

// Base sample plus a fresh random axis; the angle is fixed per call.
MultiViewRig sample_rig(const CameraRanges& ranges, Rng& rng, int image_size, double angle_deg = 90.0);

struct Ray {
    Vec3 origin;
    Vec3 direction;  // unit length
};

// Precomputed orthonormal camera basis for per-pixel work.
struct CameraFrame {
    Vec3 origin;
    Vec3 forward;
    Vec3 right;
    Vec3 up;
    double tan_half_fov = 0.0;
    int image_size = 0;

    explicit CameraFrame(const CameraPose& pose);

    // Ray through the center of pixel (x, y).
    Ray ray(int x, int y) const;
    // World-space direction expressed in camera space.
    Vec3 to_camera(const Vec3& v) const { return {v.dot(right), v.dot(up), -v.dot(forward)}; }
};

inline Ray pixel_ray(const CameraPose& pose, int x, int y) { return CameraFrame(pose).ray(x, y); }

}  // namespace boostdream::camera
