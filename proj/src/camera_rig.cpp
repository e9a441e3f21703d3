#include "boostdream/camera_rig.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>

#include "boostdream/errors.hpp"

namespace boostdream::camera {

namespace {

constexpr double kDegToRad = std::numbers::pi / 180.0;

void check_range(const Range& r, const char* key) {
    if (!(r.min <= r.max) || !std::isfinite(r.min) || !std::isfinite(r.max)) {
        throw ConfigError(key, "range min " + std::to_string(r.min) + " exceeds max " + std::to_string(r.max));
    }
}

}  // namespace

void CameraRanges::validate() const {
    check_range(elevation_deg, "elevation_range");
    check_range(azimuth_deg, "azimuth_range");
    check_range(fov_deg, "fov_range");
    check_range(distance, "distance_range");
    if (elevation_deg.min < -90.0 || elevation_deg.max > 90.0) {
        throw ConfigError("elevation_range", "must lie within [-90, 90] degrees");
    }
    if (fov_deg.min <= 0.0 || fov_deg.max >= 180.0) {
        throw ConfigError("fov_range", "must lie strictly inside (0, 180) degrees");
    }
    if (distance.min <= 0.0) {
        throw ConfigError("distance_range", "must be positive");
    }
}

Vec3 CameraPose::forward() const { return (target - position).normalized(); }

Vec3 CameraPose::right() const { return forward().cross(up).normalized(); }

Vec3 CameraPose::true_up() const { return right().cross(forward()); }

CameraSample sample_camera(const CameraRanges& ranges, Rng& rng) {
    ranges.validate();
    CameraSample s;
    s.elevation_deg = rng.uniform(ranges.elevation_deg.min, ranges.elevation_deg.max);
    s.azimuth_deg = rng.uniform(ranges.azimuth_deg.min, ranges.azimuth_deg.max);
    s.fov_deg = rng.uniform(ranges.fov_deg.min, ranges.fov_deg.max);
    s.distance = rng.uniform(ranges.distance.min, ranges.distance.max);
    return s;
}

Vec3 sample_axis(Rng& rng) {
    for (;;) {
        Vec3 v(rng.normal(), rng.normal(), rng.normal());
        const double n = v.norm();
        if (n > 1e-8) return v / n;
    }
}

Vec3 spherical_to_position(const CameraSample& sample) {
    const double phi = sample.elevation_deg * kDegToRad;
    const double theta = sample.azimuth_deg * kDegToRad;
    return sample.distance * Vec3(std::cos(phi) * std::cos(theta), std::cos(phi) * std::sin(theta), std::sin(phi));
}

Mat3 skew_matrix(const Vec3& a) {
    Mat3 k;
    // clang-format off
    k <<  0.0,   -a.z(),  a.y(),
          a.z(),  0.0,   -a.x(),
         -a.y(),  a.x(),  0.0;
    // clang-format on
    return k;
}

Mat3 rotation_matrix(const RotationSpec& spec) {
    const double n = spec.axis.norm();
    if (!(n > 1e-8)) {
        throw std::invalid_argument("rotation axis is (near) zero");
    }
    const Mat3 k = skew_matrix(spec.axis / n);
    const double angle = spec.angle_deg * kDegToRad;
    return Mat3::Identity() + std::sin(angle) * k + (1.0 - std::cos(angle)) * (k * k);
}

std::vector<Vec3> orbit_positions(const Vec3& p0, const RotationSpec& spec, int count) {
    if (count < 1) throw std::invalid_argument("orbit count must be >= 1");
    std::vector<Vec3> out;
    out.reserve(static_cast<std::size_t>(count));
    out.push_back(p0);
    for (int i = 1; i < count; ++i) {
        RotationSpec step = spec;
        step.angle_deg = spec.angle_deg * i;
        out.push_back(rotation_matrix(step) * p0);
    }
    return out;
}

CameraPose look_at_origin(const Vec3& position, double fov_deg, int image_size) {
    CameraPose pose;
    pose.position = position;
    pose.target = Vec3::Zero();
    pose.fov_deg = fov_deg;
    pose.image_size = image_size;
    const Vec3 view = pose.forward();
    pose.up = std::abs(view.dot(Vec3::UnitZ())) > 0.999 ? Vec3::UnitX() : Vec3::UnitZ();
    return pose;
}

MultiViewRig build_rig(const CameraSample& sample, const RotationSpec& spec, int image_size) {
    MultiViewRig rig;
    rig.base = sample;
    rig.rotation = spec;
    const auto positions = orbit_positions(spherical_to_position(sample), spec, kRigViews);
    for (int i = 0; i < kRigViews; ++i) {
        rig.poses[static_cast<std::size_t>(i)] = look_at_origin(positions[static_cast<std::size_t>(i)], sample.fov_deg, image_size);
    }
    return rig;
}

MultiViewRig sample_rig(const CameraRanges& ranges, Rng& rng, int image_size, double angle_deg) {
    const CameraSample sample = sample_camera(ranges, rng);
    RotationSpec spec;
    spec.axis = sample_axis(rng);
    spec.angle_deg = angle_deg;
    return build_rig(sample, spec, image_size);
}

CameraFrame::CameraFrame(const CameraPose& pose)
    : origin(pose.position),
      forward(pose.forward()),
      right(pose.right()),
      up(pose.true_up()),
      tan_half_fov(std::tan(0.5 * pose.fov_deg * kDegToRad)),
      image_size(pose.image_size) {}

Ray CameraFrame::ray(int x, int y) const {
    const double n = static_cast<double>(image_size);
    const double sx = (2.0 * (x + 0.5) / n - 1.0) * tan_half_fov;
    const double sy = (1.0 - 2.0 * (y + 0.5) / n) * tan_half_fov;
    return {origin, (forward + sx * right + sy * up).normalized()};
}

}  // namespace boostdream::camera
