// Serial reference kernels. Deliberately naive: every transmittance and
// every gradient term is evaluated from its closed form with explicit sums,
// independent of the incremental bookkeeping in render_parallel.cpp.

#include <cmath>
#include <vector>

#include "boostdream/render.hpp"
#include "ray_march.hpp"

namespace boostdream::reference {

namespace {

struct RaySamples {
    std::vector<double> t, sigma;
    std::vector<Vec3> color, position;
    std::vector<detail::Trilinear> tri;
    double delta = 0.0;
};

RaySamples sample_ray(const detail::GridSampler& grid, const camera::Ray& ray, const detail::Segment& seg, int ns) {
    RaySamples rs;
    rs.delta = (seg.t_far - seg.t_near) / ns;
    for (int i = 0; i < ns; ++i) {
        const double t = seg.t_near + (i + 0.5) * rs.delta;
        const Vec3 p = ray.origin + t * ray.direction;
        const detail::Trilinear tri = grid.locate(p);
        rs.t.push_back(t);
        rs.position.push_back(p);
        rs.tri.push_back(tri);
        rs.sigma.push_back(grid.density(tri));
        rs.color.push_back(grid.color(tri));
    }
    return rs;
}

double transmittance_before(const RaySamples& rs, std::size_t i) {
    double optical_depth = 0.0;
    for (std::size_t j = 0; j < i; ++j) optical_depth += rs.sigma[j] * rs.delta;
    return std::exp(-optical_depth);
}

double weight(const RaySamples& rs, std::size_t i) {
    return transmittance_before(rs, i) * (1.0 - std::exp(-rs.sigma[i] * rs.delta));
}

}  // namespace

RenderOutput render(const VoxelField& field, const camera::CameraPose& pose, const RenderSettings& settings) {
    detail::check_settings(pose, settings);
    const detail::GridSampler grid(field);
    const camera::CameraFrame frame(pose);
    const int size = pose.image_size;
    const int ns = settings.samples_per_ray;
    RenderOutput out = detail::make_output(size, settings);

    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const std::size_t ray_id = static_cast<std::size_t>(y) * size + x;
            const camera::Ray ray = frame.ray(x, y);
            if (settings.keep_samples) {
                for (int a = 0; a < 3; ++a) out.ray_directions[3 * ray_id + a] = ray.direction[a];
            }
            Vec3 color = Vec3::Zero();
            Vec3 normal_sum = Vec3::Zero();
            double opacity = 0.0;
            double depth = 0.0;
            const detail::Segment seg = detail::intersect_box(ray, field.bbox);
            if (seg.hit) {
                const RaySamples rs = sample_ray(grid, ray, seg, ns);
                for (std::size_t i = 0; i < static_cast<std::size_t>(ns); ++i) {
                    const double w = weight(rs, i);
                    color += w * rs.color[i];
                    opacity += w;
                    depth += w * rs.t[i];
                    if (settings.compute_normals && w >= settings.normal_min_weight) {
                        const Vec3 n = grid.normal(rs.position[i]);
                        normal_sum += w * n;
                        if (settings.keep_samples) {
                            for (int a = 0; a < 3; ++a) out.sample_normals[3 * (ray_id * ns + i) + a] = n[a];
                        }
                    }
                    if (settings.keep_samples) out.sample_weights[ray_id * ns + i] = w;
                }
            }
            color += (1.0 - opacity) * settings.background;
            for (int c = 0; c < 3; ++c) out.color.at(y, x, c) = color[c];
            out.opacity.at(y, x) = opacity;
            out.depth_raw.at(y, x) = depth;
            out.depth.at(y, x) = depth / std::max(opacity, 1e-10);
            if (settings.compute_normals) {
                const Vec3 n = detail::pixel_normal(frame, normal_sum, opacity, settings.visibility_epsilon);
                for (int c = 0; c < 3; ++c) out.normal.at(y, x, c) = n[c];
            }
        }
    }
    return out;
}

FieldGradient field_gradient(const VoxelField& field, const camera::CameraPose& pose, const Image& dL_dcolor,
                             const Image* dL_dopacity, const RenderSettings& settings) {
    detail::check_settings(pose, settings);
    const int size = pose.image_size;
    detail::check_upstream(dL_dcolor, dL_dopacity, size);
    const detail::GridSampler grid(field);
    const camera::CameraFrame frame(pose);
    const int ns = settings.samples_per_ray;
    FieldGradient grad(field);

    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            const Vec3 g_color(dL_dcolor.at(y, x, 0), dL_dcolor.at(y, x, 1), dL_dcolor.at(y, x, 2));
            const double g_opacity = dL_dopacity ? dL_dopacity->at(y, x) : 0.0;
            const camera::Ray ray = frame.ray(x, y);
            const detail::Segment seg = detail::intersect_box(ray, field.bbox);
            if (!seg.hit) continue;
            const RaySamples rs = sample_ray(grid, ray, seg, ns);
            const std::size_t n = static_cast<std::size_t>(ns);
            const double t_final = transmittance_before(rs, n);
            for (std::size_t k = 0; k < n; ++k) {
                const double t_next = transmittance_before(rs, k + 1);
                Vec3 behind = t_final * settings.background;
                for (std::size_t i = k + 1; i < n; ++i) behind += weight(rs, i) * rs.color[i];
                const Vec3 dC_dsigma = rs.delta * (t_next * rs.color[k] - behind);
                const double dO_dsigma = rs.delta * t_final;
                const double d_sigma = g_color.dot(dC_dsigma) + g_opacity * dO_dsigma;
                grid.scatter_density(rs.tri[k], d_sigma, grad.d_density_raw);
                grid.scatter_color(rs.tri[k], weight(rs, k) * g_color, grad.d_color_raw);
            }
        }
    }
    return grad;
}

}  // namespace boostdream::reference
