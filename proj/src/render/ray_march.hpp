#pragma once

// Geometry shared by the parallel and reference render kernels.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include "boostdream/camera_rig.hpp"
#include "boostdream/errors.hpp"
#include "boostdream/image.hpp"
#include "boostdream/render.hpp"
#include "boostdream/volume_field.hpp"

namespace boostdream::detail {

struct Segment {
    double t_near = 0.0;
    double t_far = 0.0;
    bool hit = false;
};

inline Segment intersect_box(const camera::Ray& ray, const Aabb& box) {
    double t0 = 0.0;
    double t1 = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        const double o = ray.origin[a];
        const double d = ray.direction[a];
        if (std::abs(d) < 1e-15) {
            if (o < box.min[a] || o > box.max[a]) return {};
            continue;
        }
        double ta = (box.min[a] - o) / d;
        double tb = (box.max[a] - o) / d;
        if (ta > tb) std::swap(ta, tb);
        t0 = std::max(t0, ta);
        t1 = std::min(t1, tb);
    }
    if (!(t1 > t0)) return {};
    return {t0, t1, true};
}

struct Trilinear {
    std::array<std::size_t, 8> index{};
    std::array<double, 8> weight{};
};

// Activated voxel values plus the activation derivatives needed for backprop.
class GridSampler {
  public:
    explicit GridSampler(const VoxelField& field) : field_(field) {
        field.validate();
        const std::size_t n = field.shape.voxel_count();
        sigma_.resize(n);
        dsigma_.resize(n);
        color_.resize(3 * n);
        dcolor_.resize(3 * n);
        for (std::size_t v = 0; v < n; ++v) {
            const double rho = field.density_raw[v];
            sigma_[v] = softplus(rho);
            dsigma_[v] = sigmoid(rho);
        }
        for (std::size_t v = 0; v < 3 * n; ++v) {
            const double s = sigmoid(field.color_raw[v]);
            color_[v] = s;
            dcolor_[v] = s * (1.0 - s);
        }
        spacing_ = field.spacing();
        inv_spacing_ = spacing_.cwiseInverse();
    }

    const VoxelField& field() const { return field_; }
    const Vec3& spacing() const { return spacing_; }

    Trilinear locate(const Vec3& p) const {
        const int dims[3] = {field_.shape.nx, field_.shape.ny, field_.shape.nz};
        int i0[3];
        double f[3];
        for (int a = 0; a < 3; ++a) {
            const double u = std::clamp((p[a] - field_.bbox.min[a]) * inv_spacing_[a], 0.0, static_cast<double>(dims[a] - 1));
            i0[a] = std::min(static_cast<int>(std::floor(u)), dims[a] - 2);
            f[a] = u - i0[a];
        }
        Trilinear t;
        int c = 0;
        for (int dz = 0; dz < 2; ++dz) {
            const double wz = dz ? f[2] : 1.0 - f[2];
            for (int dy = 0; dy < 2; ++dy) {
                const double wy = dy ? f[1] : 1.0 - f[1];
                for (int dx = 0; dx < 2; ++dx) {
                    const double wx = dx ? f[0] : 1.0 - f[0];
                    t.index[c] = field_.index(i0[0] + dx, i0[1] + dy, i0[2] + dz);
                    t.weight[c] = wx * wy * wz;
                    ++c;
                }
            }
        }
        return t;
    }

    double density(const Trilinear& t) const {
        double s = 0.0;
        for (int c = 0; c < 8; ++c) s += t.weight[c] * sigma_[t.index[c]];
        return s;
    }

    Vec3 color(const Trilinear& t) const {
        Vec3 s = Vec3::Zero();
        for (int c = 0; c < 8; ++c) {
            const std::size_t v = 3 * t.index[c];
            s += t.weight[c] * Vec3(color_[v], color_[v + 1], color_[v + 2]);
        }
        return s;
    }

    double density_at(const Vec3& p) const { return density(locate(p)); }

    // Central differences of the interpolated density, one voxel step per axis.
    Vec3 density_gradient(const Vec3& p) const {
        Vec3 g;
        for (int a = 0; a < 3; ++a) {
            Vec3 step = Vec3::Zero();
            step[a] = spacing_[a];
            g[a] = (density_at(p + step) - density_at(p - step)) / (2.0 * spacing_[a]);
        }
        return g;
    }

    // Unit normal -grad(sigma)/|grad(sigma)|, or zero where the gradient vanishes.
    Vec3 normal(const Vec3& p) const {
        const Vec3 g = density_gradient(p);
        const double n = g.norm();
        return n > 1e-12 ? Vec3(-g / n) : Vec3::Zero();
    }

    // d(loss)/d(sigma at t) -> d(loss)/d(density_raw).
    void scatter_density(const Trilinear& t, double d_sigma, std::vector<double>& d_density_raw) const {
        for (int c = 0; c < 8; ++c) {
            d_density_raw[t.index[c]] += d_sigma * t.weight[c] * dsigma_[t.index[c]];
        }
    }

    void scatter_color(const Trilinear& t, const Vec3& d_color, std::vector<double>& d_color_raw) const {
        for (int c = 0; c < 8; ++c) {
            const std::size_t v = 3 * t.index[c];
            for (int ch = 0; ch < 3; ++ch) {
                d_color_raw[v + ch] += d_color[ch] * t.weight[c] * dcolor_[v + ch];
            }
        }
    }

  private:
    const VoxelField& field_;
    std::vector<double> sigma_, dsigma_, color_, dcolor_;
    Vec3 spacing_, inv_spacing_;
};

inline void check_settings(const camera::CameraPose& pose, const RenderSettings& s) {
    if (pose.image_size < 8) throw std::invalid_argument("image_size must be >= 8");
    if (s.samples_per_ray < 1) throw std::invalid_argument("samples_per_ray must be >= 1");
}

inline RenderOutput make_output(int size, const RenderSettings& s) {
    RenderOutput out;
    out.height = size;
    out.width = size;
    out.color = Image(size, size, 3);
    out.opacity = Image(size, size, 1);
    out.depth = Image(size, size, 1);
    out.depth_raw = Image(size, size, 1);
    out.normal = Image(size, size, 3);
    out.samples_per_ray = s.samples_per_ray;
    if (s.keep_samples) {
        const std::size_t rays = static_cast<std::size_t>(size) * size;
        out.sample_weights.assign(rays * s.samples_per_ray, 0.0);
        out.sample_normals.assign(rays * s.samples_per_ray * 3, 0.0);
        out.ray_directions.assign(rays * 3, 0.0);
    }
    return out;
}

inline void check_upstream(const Image& dL_dcolor, const Image* dL_dopacity, int size) {
    if (dL_dcolor.height != size || dL_dcolor.width != size || dL_dcolor.channels != 3) {
        throw std::invalid_argument("dL_dcolor does not match render dimensions");
    }
    if (dL_dopacity && (dL_dopacity->height != size || dL_dopacity->width != size || dL_dopacity->channels != 1)) {
        throw std::invalid_argument("dL_dopacity does not match render dimensions");
    }
    auto scan = [](const Image& img, const char* name) {
        for (std::size_t i = 0; i < img.size(); ++i) {
            if (!std::isfinite(img.data[i])) {
                const std::size_t pixel = i / static_cast<std::size_t>(img.channels);
                throw NumericError(std::string("non-finite ") + name + " at pixel (" +
                                   std::to_string(pixel / static_cast<std::size_t>(img.width)) + ", " +
                                   std::to_string(pixel % static_cast<std::size_t>(img.width)) + ")");
            }
        }
    };
    scan(dL_dcolor, "dL_dcolor");
    if (dL_dopacity) scan(*dL_dopacity, "dL_dopacity");
}

// Camera-space pixel normal from the weighted world-normal sum.
inline Vec3 pixel_normal(const camera::CameraFrame& frame, const Vec3& weighted_sum, double opacity,
                         double visibility_epsilon) {
    if (opacity < visibility_epsilon) return Vec3::Zero();
    const double n = weighted_sum.norm();
    if (n < 1e-12) return Vec3::UnitZ();
    return frame.to_camera(weighted_sum / n);
}

}  // namespace boostdream::detail
