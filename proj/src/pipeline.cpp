#include "boostdream/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <iostream>
#include <memory>
#include <stdexcept>

#include "boostdream/errors.hpp"
#include "boostdream/png_io.hpp"

namespace boostdream::pipeline {

std::string to_string(Stage stage) {
    switch (stage) {
        case Stage::distill:
            return "distill";
        case Stage::boost:
            return "boost";
        case Stage::self_boost:
            return "self_boost";
    }
    return "unknown";
}

NormalSource parse_normal_source(const std::string& name) {
    if (name == "mesh") return NormalSource::mesh;
    if (name == "field" || name == "fitted-field") return NormalSource::field;
    throw ConfigError("normal_source_boost", "unknown normal source '" + name + "' (expected mesh or field)");
}

std::string to_string(NormalSource source) { return source == NormalSource::mesh ? "mesh" : "field"; }

void StageConfig::validate() const {
    if (distill_iters < 0) throw ConfigError("distill_iters", "must be >= 0");
    if (boost_iters < 0) throw ConfigError("boost_iters", "must be >= 0");
    if (self_boost_iters < 0) throw ConfigError("self_boost_iters", "must be >= 0");
    if (!(lr_distill > 0.0)) throw ConfigError("lr_distill", "must be > 0");
    if (!(lr_boost > 0.0)) throw ConfigError("lr_boost", "must be > 0");
    if (!(lr_self_boost > 0.0)) throw ConfigError("lr_self_boost", "must be > 0");
    if (!(alpha >= 0.0)) throw ConfigError("alpha", "must be >= 0");
    if (!(beta >= 0.0)) throw ConfigError("beta", "must be >= 0");
    if (!(distill_mask_weight >= 0.0)) throw ConfigError("distill_mask_weight", "must be >= 0");
    if (views_per_iter != camera::kRigViews) throw ConfigError("views_per_iter", "must be 4 (2x2 composite)");
    if (per_view_size < 8) throw ConfigError("per_view_size", "must be >= 8");
    if (skip_budget < 0) throw ConfigError("skip_budget", "must be >= 0");
}

nlohmann::json to_json(const IterationMetrics& m) {
    nlohmann::json j{{"iteration", m.iteration},
                     {"stage", to_string(m.stage)},
                     {"l1", m.l1},
                     {"sds_grad_norm", m.sds_grad_norm},
                     {"orient", m.orient},
                     {"opacity", m.opacity},
                     {"t", m.t_used},
                     {"w", m.w_used},
                     {"wall_ms", m.wall_ms},
                     {"skipped_before", m.skipped_before}};
    if (m.psnr) {
        j["psnr"] = std::isinf(*m.psnr) ? nlohmann::json("inf") : nlohmann::json(*m.psnr);
    }
    return j;
}

Image assemble_composite(std::span<const Image> views) {
    if (views.size() != 4) throw std::invalid_argument("composite needs exactly 4 views");
    const Image& first = views[0];
    for (const auto& v : views) {
        if (!v.same_shape(first)) throw std::invalid_argument("composite views differ in size");
    }
    const int h = first.height;
    const int w = first.width;
    Image out(2 * h, 2 * w, first.channels);
    for (int q = 0; q < 4; ++q) {
        const int oy = (q / 2) * h;
        const int ox = (q % 2) * w;
        const Image& v = views[static_cast<std::size_t>(q)];
        for (int y = 0; y < h; ++y) {
            std::copy_n(v.data.begin() + static_cast<std::ptrdiff_t>(v.offset(y, 0)), static_cast<std::size_t>(w) * v.channels,
                        out.data.begin() + static_cast<std::ptrdiff_t>(out.offset(oy + y, ox)));
        }
    }
    return out;
}

std::array<Image, 4> split_composite(const Image& composite) {
    if (composite.height % 2 != 0 || composite.width % 2 != 0) {
        throw std::invalid_argument("composite dimensions must be even");
    }
    const int h = composite.height / 2;
    const int w = composite.width / 2;
    std::array<Image, 4> out;
    for (int q = 0; q < 4; ++q) {
        Image v(h, w, composite.channels);
        const int oy = (q / 2) * h;
        const int ox = (q % 2) * w;
        for (int y = 0; y < h; ++y) {
            std::copy_n(composite.data.begin() + static_cast<std::ptrdiff_t>(composite.offset(oy + y, ox)),
                        static_cast<std::size_t>(w) * v.channels, v.data.begin() + static_cast<std::ptrdiff_t>(v.offset(y, 0)));
        }
        out[static_cast<std::size_t>(q)] = std::move(v);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Distillation

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point start) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
}

double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

camera::CameraPose sample_single_view(const TrainingContext& ctx, Rng& rng) {
    const camera::CameraSample s = camera::sample_camera(ctx.ranges, rng);
    return camera::look_at_origin(camera::spherical_to_position(s), s.fov_deg, ctx.stages.per_view_size);
}

}  // namespace

DistillLoss distill_loss(const VoxelField& field, const CoarseAsset& asset, const camera::CameraPose& pose,
                         const TrainingContext& ctx) {
    RenderSettings settings = ctx.render;
    settings.compute_normals = false;
    settings.keep_samples = false;
    const RenderOutput ref = rasterize(asset, pose, settings);
    const RenderOutput cur = render(field, pose, settings);

    const double inv_color = 1.0 / static_cast<double>(cur.color.size());
    const double inv_mask = 1.0 / static_cast<double>(cur.opacity.size());
    const double mask_w = ctx.stages.distill_mask_weight;
    Image d_color(cur.height, cur.width, 3);
    Image d_opacity(cur.height, cur.width, 1);
    double loss = 0.0;
    for (std::size_t i = 0; i < cur.color.size(); ++i) {
        const double diff = cur.color.data[i] - ref.color.data[i];
        loss += std::abs(diff) * inv_color;
        d_color.data[i] = sign(diff) * inv_color;
    }
    for (std::size_t i = 0; i < cur.opacity.size(); ++i) {
        const double diff = cur.opacity.data[i] - ref.opacity.data[i];
        loss += mask_w * std::abs(diff) * inv_mask;
        d_opacity.data[i] = mask_w * sign(diff) * inv_mask;
    }
    DistillLoss out;
    out.loss = loss;
    out.grad = field_gradient(field, pose, d_color, &d_opacity, settings);
    return out;
}

DistillResult distill_stage(VoxelField& field, const CoarseAsset& asset, const TrainingContext& ctx, Rng& rng,
                            int iterations, int first_index, const MetricsSink& sink) {
    DistillResult result;
    AdamState optimizer;
    for (int it = 0; it < iterations; ++it) {
        const auto start = std::chrono::steady_clock::now();
        const camera::CameraPose pose = sample_single_view(ctx, rng);
        DistillLoss step = distill_loss(field, asset, pose, ctx);
        if (!std::isfinite(step.loss)) {
            throw NumericError("distillation diverged at iteration " + std::to_string(first_index + it) +
                               " (loss " + std::to_string(step.loss) + ")");
        }
        apply_update(field, step.grad, optimizer, ctx.stages.lr_distill);
        IterationMetrics m;
        m.iteration = first_index + it;
        m.stage = Stage::distill;
        m.l1 = step.loss;
        m.wall_ms = elapsed_ms(start);
        if (sink) sink(m);
        result.metrics.push_back(m);
    }
    return result;
}

// ---------------------------------------------------------------------------
// Multi-view SDS

MvSdsGradient compute_mv_sds_gradient(const VoxelField& field, const camera::MultiViewRig& rig,
                                      NormalSource normal_source, const CoarseAsset* asset,
                                      guidance::GuidanceBackend& backend, const TrainingContext& ctx,
                                      std::uint64_t guidance_seed) {
    if (normal_source == NormalSource::mesh && asset == nullptr) {
        throw std::invalid_argument("mesh normal source requires a coarse asset");
    }
    const double alpha = ctx.stages.alpha;
    const double beta = ctx.stages.beta;
    RenderSettings settings = ctx.render;
    settings.compute_normals = alpha > 0.0 || normal_source == NormalSource::field;
    settings.keep_samples = alpha > 0.0;

    // All views and normal maps come from the same field snapshot and rig.
    std::array<RenderOutput, 4> renders;
    std::array<Image, 4> colors, normals;
    for (std::size_t i = 0; i < 4; ++i) {
        renders[i] = render(field, rig.poses[i], settings);
        colors[i] = renders[i].color;
        normals[i] = normal_source == NormalSource::field
                         ? encode_normal_map(renders[i], settings.visibility_epsilon)
                         : rasterize_normal_map(*asset, rig.poses[i], settings);
    }

    MvSdsGradient out;
    out.composite = assemble_composite(colors);
    out.normal_composite = assemble_composite(normals);

    guidance::GuidanceRequest request;
    request.image = out.composite;
    request.control = out.normal_composite;
    request.prompt = ctx.guidance.prompt;
    request.lambda = ctx.guidance.lambda;
    request.cfg_scale = ctx.guidance.cfg_scale;
    request.seed = guidance_seed;
    out.response = backend.guide(request, rig);
    if (!out.response.grad.same_shape(out.composite)) throw GuidanceError("guidance gradient shape mismatch");
    if (!all_finite(out.response.grad)) throw GuidanceError("guidance gradient contains non-finite values");

    const auto view_grads = split_composite_grad(out.response.grad);
    out.grad = FieldGradient(field);
    double orient = 0.0;
    double opacity = 0.0;
    for (std::size_t i = 0; i < 4; ++i) {
        Image d_opacity;
        if (beta > 0.0) {
            d_opacity = opacity_loss_gradient(renders[i]);
            for (double& g : d_opacity.data) g *= beta / 4.0;
            opacity += opacity_loss(renders[i]) / 4.0;
        }
        out.grad += field_gradient(field, rig.poses[i], view_grads[i], beta > 0.0 ? &d_opacity : nullptr, settings);
        if (alpha > 0.0) {
            orient += orientation_loss(renders[i]) / 4.0;
            accumulate_orientation_gradient(field, rig.poses[i], renders[i], alpha / 4.0, out.grad, settings);
        }
    }

    out.metrics.sds_grad_norm = l2_norm(out.response.grad);
    out.metrics.orient = orient;
    out.metrics.opacity = opacity;
    out.metrics.t_used = out.response.t_used;
    out.metrics.w_used = out.response.w_used;
    if (auto* analytic = dynamic_cast<guidance::AnalyticBackend*>(&backend)) {
        out.metrics.psnr = psnr(out.composite, analytic->last_target());
    }
    return out;
}

IterationMetrics mv_sds_step(VoxelField& field, AdamState& optimizer, double lr, const camera::MultiViewRig& rig,
                             NormalSource normal_source, const CoarseAsset* asset, guidance::GuidanceBackend& backend,
                             const TrainingContext& ctx, std::uint64_t guidance_seed) {
    const auto start = std::chrono::steady_clock::now();
    MvSdsGradient step = compute_mv_sds_gradient(field, rig, normal_source, asset, backend, ctx, guidance_seed);
    apply_update(field, step.grad, optimizer, lr);
    step.metrics.wall_ms = elapsed_ms(start);
    return step.metrics;
}

// ---------------------------------------------------------------------------
// Full run

std::vector<camera::CameraPose> turntable_poses(int frames, double elevation_deg, double distance, double fov_deg,
                                                int image_size) {
    if (frames < 1) throw std::invalid_argument("turntable needs at least one frame");
    std::vector<camera::CameraPose> poses;
    for (int k = 0; k < frames; ++k) {
        camera::CameraSample s;
        s.elevation_deg = elevation_deg;
        s.azimuth_deg = 360.0 * k / frames;
        s.distance = distance;
        s.fov_deg = fov_deg;
        poses.push_back(camera::look_at_origin(camera::spherical_to_position(s), fov_deg, image_size));
    }
    return poses;
}

guidance::TargetProvider mesh_target(const CoarseAsset& asset, RenderSettings settings) {
    auto shared = std::make_shared<const CoarseAsset>(asset);
    return [shared, settings](const camera::MultiViewRig& rig) {
        std::array<Image, 4> views;
        for (std::size_t i = 0; i < 4; ++i) views[i] = rasterize(*shared, rig.poses[i], settings).color;
        return assemble_composite(views);
    };
}

guidance::TargetProvider field_target(VoxelField field, RenderSettings settings) {
    auto shared = std::make_shared<const VoxelField>(std::move(field));
    settings.compute_normals = false;
    settings.keep_samples = false;
    return [shared, settings](const camera::MultiViewRig& rig) {
        std::array<Image, 4> views;
        for (std::size_t i = 0; i < 4; ++i) views[i] = render(*shared, rig.poses[i], settings).color;
        return assemble_composite(views);
    };
}

guidance::TargetProvider image_target(Image composite) {
    auto shared = std::make_shared<const Image>(std::move(composite));
    return [shared](const camera::MultiViewRig&) { return *shared; };
}

namespace {

class RunWriter {
  public:
    RunWriter(std::filesystem::path dir, const RunOptions& options, const TrainingContext& ctx)
        : dir_(std::move(dir)), options_(options), ctx_(ctx) {
        if (dir_.empty()) return;
        std::filesystem::create_directories(dir_ / "checkpoints");
        std::filesystem::create_directories(dir_ / "turntable");
        log_.open(dir_ / "metrics.jsonl", std::ios::trunc);
        if (!log_) throw Error("cannot write metrics log in " + dir_.string());
    }

    void record(const IterationMetrics& m) {
        if (!log_.is_open()) return;
        log_ << to_json(m).dump() << '\n';
        log_.flush();
    }

    void stage_boundary(const std::string& tag, const VoxelField& field) {
        if (dir_.empty()) return;
        save_field(field, dir_ / "checkpoints" / (tag + ".bdf"));
        if (options_.turntable_frames < 1) return;
        const auto frame_dir = dir_ / "turntable" / tag;
        std::filesystem::create_directories(frame_dir);
        RenderSettings settings = ctx_.render;
        settings.compute_normals = false;
        const auto poses = turntable_poses(options_.turntable_frames, options_.turntable_elevation_deg,
                                           options_.turntable_distance, options_.turntable_fov_deg,
                                           ctx_.stages.per_view_size);
        for (std::size_t k = 0; k < poses.size(); ++k) {
            char name[32];
            std::snprintf(name, sizeof(name), "frame_%03zu.png", k);
            png::write(frame_dir / name, render(field, poses[k], settings).color);
        }
    }

    void finish(const VoxelField& field) {
        if (dir_.empty()) return;
        save_field(field, dir_ / "final.bdf");
    }

  private:
    std::filesystem::path dir_;
    const RunOptions& options_;
    const TrainingContext& ctx_;
    std::ofstream log_;
};

}  // namespace

PipelineResult run_pipeline(const CoarseAsset& asset, const TrainingContext& ctx, const RunOptions& options,
                            guidance::GuidanceBackend& backend, const std::filesystem::path& out_dir) {
    ctx.stages.validate();
    ctx.ranges.validate();
    ctx.guidance.validate();

    PipelineResult result;
    result.field = options.initial_field ? *options.initial_field
                                         : init_field(options.resolution, options.seed, options.init_mode);
    RunWriter writer(out_dir, options, ctx);
    const Rng master(options.seed);
    int index = 0;
    auto record = [&](const IterationMetrics& m) {
        writer.record(m);
        result.metrics.push_back(m);
    };

    const int distill_iters = ctx.stages.skip_init ? 0 : ctx.stages.distill_iters;
    if (distill_iters > 0) {
        Rng rng = master.fork(1);
        distill_stage(result.field, asset, ctx, rng, distill_iters, index, record);
        index += distill_iters;
        writer.stage_boundary("distill", result.field);
    }

    auto refine = [&](Stage stage, int iterations, NormalSource source, double lr, std::uint64_t stream) {
        if (iterations <= 0) return;
        Rng camera_rng = master.fork(stream);
        Rng seed_rng = master.fork(stream + 100);
        AdamState optimizer;
        int consecutive_failures = 0;
        for (int it = 0; it < iterations;) {
            const camera::MultiViewRig rig =
                camera::sample_rig(ctx.ranges, camera_rng, ctx.stages.per_view_size, ctx.rotation_angle_deg);
            const std::uint64_t guidance_seed = seed_rng.next_u64();
            IterationMetrics m;
            try {
                m = mv_sds_step(result.field, optimizer, lr, rig, source, &asset, backend, ctx, guidance_seed);
            } catch (const GuidanceError& e) {
                if (++consecutive_failures > ctx.stages.skip_budget) {
                    throw GuidanceError(std::string("guidance skip budget exhausted at iteration ") +
                                        std::to_string(index) + ": " + e.what());
                }
                std::cerr << "[" << to_string(stage) << "] iteration " << index << " skipped: " << e.what() << '\n';
                continue;
            } catch (const TransportError& e) {
                if (++consecutive_failures > ctx.stages.skip_budget) {
                    throw TransportError(std::string("guidance skip budget exhausted at iteration ") +
                                             std::to_string(index) + ": " + e.what(),
                                         e.attempts());
                }
                std::cerr << "[" << to_string(stage) << "] iteration " << index << " skipped: " << e.what() << '\n';
                continue;
            }
            m.iteration = index;
            m.stage = stage;
            m.skipped_before = consecutive_failures;
            consecutive_failures = 0;
            record(m);
            ++index;
            ++it;
        }
        writer.stage_boundary(to_string(stage), result.field);
    };

    refine(Stage::boost, ctx.stages.skip_boost ? 0 : ctx.stages.boost_iters, ctx.stages.normal_source_boost,
           ctx.stages.lr_boost, 2);
    refine(Stage::self_boost, ctx.stages.skip_self_boost ? 0 : ctx.stages.self_boost_iters, NormalSource::field,
           ctx.stages.lr_self_boost, 3);

    writer.finish(result.field);
    return result;
}

}  // namespace boostdream::pipeline
