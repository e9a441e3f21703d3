#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "boostdream/render.hpp"
#include "ray_march.hpp"

namespace boostdream {

namespace {

int max_threads() {
#ifdef _OPENMP
    return omp_get_max_threads();
#else
    return 1;
#endif
}

int thread_id() {
#ifdef _OPENMP
    return omp_get_thread_num();
#else
    return 0;
#endif
}

// Per-thread gradient bins, reduced in thread order.
class GradientBins {
  public:
    GradientBins(const VoxelField& field, int threads) : bins_(static_cast<std::size_t>(threads), FieldGradient(field)) {}

    FieldGradient& local() { return bins_[static_cast<std::size_t>(thread_id())]; }

    void reduce_into(FieldGradient& out) const {
        for (const auto& b : bins_) out += b;
    }

  private:
    std::vector<FieldGradient> bins_;
};

struct SampleRecord {
    detail::Trilinear tri;
    double sigma;
    double transmittance;  // T_i before the sample
    double alpha;          // 1 - exp(-sigma delta)
    Vec3 color;
};

}  // namespace

RenderOutput render(const VoxelField& field, const camera::CameraPose& pose, const RenderSettings& settings) {
    detail::check_settings(pose, settings);
    const detail::GridSampler grid(field);
    const camera::CameraFrame frame(pose);
    const int size = pose.image_size;
    const int ns = settings.samples_per_ray;
    RenderOutput out = detail::make_output(size, settings);

#pragma omp parallel for schedule(static)
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
                const double delta = (seg.t_far - seg.t_near) / ns;
                double trans = 1.0;
                for (int i = 0; i < ns; ++i) {
                    const double t = seg.t_near + (i + 0.5) * delta;
                    const Vec3 p = ray.origin + t * ray.direction;
                    const detail::Trilinear tri = grid.locate(p);
                    const double sigma = grid.density(tri);
                    const double alpha = -std::expm1(-sigma * delta);
                    const double w = trans * alpha;
                    color += w * grid.color(tri);
                    opacity += w;
                    depth += w * t;
                    if (settings.compute_normals && w >= settings.normal_min_weight) {
                        const Vec3 n = grid.normal(p);
                        normal_sum += w * n;
                        if (settings.keep_samples) {
                            const std::size_t s = ray_id * ns + i;
                            for (int a = 0; a < 3; ++a) out.sample_normals[3 * s + a] = n[a];
                        }
                    }
                    if (settings.keep_samples) out.sample_weights[ray_id * ns + i] = w;
                    trans *= std::exp(-sigma * delta);
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

Image encode_normal_map(const RenderOutput& out, double visibility_epsilon) {
    Image img(out.height, out.width, 3);
    for (int y = 0; y < out.height; ++y) {
        for (int x = 0; x < out.width; ++x) {
            if (out.opacity.at(y, x) < visibility_epsilon) {
                img.at(y, x, 0) = 0.5;
                img.at(y, x, 1) = 0.5;
                img.at(y, x, 2) = 1.0;
            } else {
                for (int c = 0; c < 3; ++c) img.at(y, x, c) = 0.5 * (out.normal.at(y, x, c) + 1.0);
            }
        }
    }
    return img;
}

Image render_normal_map(const VoxelField& field, const camera::CameraPose& pose, const RenderSettings& settings) {
    RenderSettings s = settings;
    s.compute_normals = true;
    s.keep_samples = false;
    return encode_normal_map(render(field, pose, s), s.visibility_epsilon);
}

FieldGradient field_gradient(const VoxelField& field, const camera::CameraPose& pose, const Image& dL_dcolor,
                             const Image* dL_dopacity, const RenderSettings& settings) {
    detail::check_settings(pose, settings);
    const int size = pose.image_size;
    detail::check_upstream(dL_dcolor, dL_dopacity, size);
    const detail::GridSampler grid(field);
    const camera::CameraFrame frame(pose);
    const int ns = settings.samples_per_ray;
    GradientBins bins(field, max_threads());

#pragma omp parallel
    {
        std::vector<SampleRecord> samples(static_cast<std::size_t>(ns));
        FieldGradient& local = bins.local();
#pragma omp for schedule(static)
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const Vec3 g_color(dL_dcolor.at(y, x, 0), dL_dcolor.at(y, x, 1), dL_dcolor.at(y, x, 2));
                const double g_opacity = dL_dopacity ? dL_dopacity->at(y, x) : 0.0;
                if (g_color.isZero(0.0) && g_opacity == 0.0) continue;
                const camera::Ray ray = frame.ray(x, y);
                const detail::Segment seg = detail::intersect_box(ray, field.bbox);
                if (!seg.hit) continue;
                const double delta = (seg.t_far - seg.t_near) / ns;
                double trans = 1.0;
                for (int i = 0; i < ns; ++i) {
                    const double t = seg.t_near + (i + 0.5) * delta;
                    SampleRecord& r = samples[static_cast<std::size_t>(i)];
                    r.tri = grid.locate(ray.origin + t * ray.direction);
                    r.sigma = grid.density(r.tri);
                    r.alpha = -std::expm1(-r.sigma * delta);
                    r.transmittance = trans;
                    r.color = grid.color(r.tri);
                    trans *= std::exp(-r.sigma * delta);
                }
                const double t_final = trans;
                // g_color . (sum_{i>k} w_i c_i + T_N bg), built back to front.
                double suffix = t_final * g_color.dot(settings.background);
                for (int k = ns - 1; k >= 0; --k) {
                    const SampleRecord& r = samples[static_cast<std::size_t>(k)];
                    const double w = r.transmittance * r.alpha;
                    const double t_next = r.transmittance * std::exp(-r.sigma * delta);
                    const double gc = g_color.dot(r.color);
                    const double d_sigma = delta * (t_next * gc - suffix) + g_opacity * delta * t_final;
                    suffix += w * gc;
                    grid.scatter_density(r.tri, d_sigma, local.d_density_raw);
                    grid.scatter_color(r.tri, w * g_color, local.d_color_raw);
                }
            }
        }
    }

    FieldGradient grad(field);
    bins.reduce_into(grad);
    return grad;
}

double orientation_loss(const RenderOutput& out) {
    if (out.ray_count() == 0) return 0.0;
    if (out.sample_weights.size() != out.ray_count() * static_cast<std::size_t>(out.samples_per_ray)) {
        throw std::invalid_argument("orientation_loss needs a render with keep_samples");
    }
    const int ns = out.samples_per_ray;
    double total = 0.0;
    for (std::size_t r = 0; r < out.ray_count(); ++r) {
        const Vec3 d(out.ray_directions[3 * r], out.ray_directions[3 * r + 1], out.ray_directions[3 * r + 2]);
        for (int i = 0; i < ns; ++i) {
            const std::size_t s = r * ns + i;
            const Vec3 n(out.sample_normals[3 * s], out.sample_normals[3 * s + 1], out.sample_normals[3 * s + 2]);
            const double m = std::max(0.0, n.dot(d));
            total += out.sample_weights[s] * m * m;
        }
    }
    return total / static_cast<double>(out.ray_count());
}

void accumulate_orientation_gradient(const VoxelField& field, const camera::CameraPose& pose,
                                     const RenderOutput& out, double scale, FieldGradient& grad,
                                     const RenderSettings& settings) {
    detail::check_settings(pose, settings);
    const int size = pose.image_size;
    const int ns = settings.samples_per_ray;
    if (out.height != size || out.samples_per_ray != ns ||
        out.sample_weights.size() != out.ray_count() * static_cast<std::size_t>(ns)) {
        throw std::invalid_argument("orientation gradient needs the matching keep_samples render");
    }
    if (scale == 0.0) return;
    const detail::GridSampler grid(field);
    const camera::CameraFrame frame(pose);
    const double inv_rays = 1.0 / static_cast<double>(out.ray_count());
    const Vec3 spacing = grid.spacing();
    GradientBins bins(field, max_threads());

#pragma omp parallel
    {
        FieldGradient& local = bins.local();
#pragma omp for schedule(static)
        for (int y = 0; y < size; ++y) {
            for (int x = 0; x < size; ++x) {
                const std::size_t ray_id = static_cast<std::size_t>(y) * size + x;
                const camera::Ray ray = frame.ray(x, y);
                const detail::Segment seg = detail::intersect_box(ray, field.bbox);
                if (!seg.hit) continue;
                const double delta = (seg.t_far - seg.t_near) / ns;
                for (int i = 0; i < ns; ++i) {
                    const std::size_t s = ray_id * ns + i;
                    const double w = out.sample_weights[s];
                    if (w < settings.normal_min_weight) continue;
                    const Vec3 p = ray.origin + (seg.t_near + (i + 0.5) * delta) * ray.direction;
                    const Vec3 g = grid.density_gradient(p);
                    const double gn = g.norm();
                    if (gn <= 1e-12) continue;
                    const Vec3 u = g / gn;  // normal is -u
                    const double m = std::max(0.0, -u.dot(ray.direction));
                    if (m == 0.0) continue;
                    const Vec3 d_normal = scale * inv_rays * 2.0 * w * m * ray.direction;
                    // n = -g/|g|  =>  dL/dg = -(I - u u^T) dL/dn / |g|
                    const Vec3 d_g = -(d_normal - u * u.dot(d_normal)) / gn;
                    for (int a = 0; a < 3; ++a) {
                        if (d_g[a] == 0.0) continue;
                        Vec3 step = Vec3::Zero();
                        step[a] = spacing[a];
                        const double d_sample = d_g[a] / (2.0 * spacing[a]);
                        grid.scatter_density(grid.locate(p + step), d_sample, local.d_density_raw);
                        grid.scatter_density(grid.locate(p - step), -d_sample, local.d_density_raw);
                    }
                }
            }
        }
    }
    bins.reduce_into(grad);
}

double opacity_loss(const RenderOutput& out) {
    if (out.ray_count() == 0) return 0.0;
    double total = 0.0;
    for (double o : out.opacity.data) total += std::sqrt(o * o + 0.01);
    return total / static_cast<double>(out.ray_count());
}

Image opacity_loss_gradient(const RenderOutput& out) {
    Image g(out.height, out.width, 1);
    const double inv = out.ray_count() ? 1.0 / static_cast<double>(out.ray_count()) : 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) {
        const double o = out.opacity.data[i];
        g.data[i] = inv * o / std::sqrt(o * o + 0.01);
    }
    return g;
}

}  // namespace boostdream
