#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "boostdream/camera_rig.hpp"
#include "boostdream/coarse_asset.hpp"
#include "boostdream/guidance.hpp"
#include "boostdream/render.hpp"
#include "boostdream/volume_field.hpp"

// Three-stage refinement: L1 distillation of the coarse mesh into the voxel
// field, then multi-view SDS under mesh normals (boost) and under the field's
// own normals (self-boost).
namespace boostdream::pipeline {

enum class Stage { distill, boost, self_boost };
std::string to_string(Stage stage);

enum class NormalSource { mesh, field };
NormalSource parse_normal_source(const std::string& name);
std::string to_string(NormalSource source);

struct StageConfig {
    int distill_iters = 200;
    int boost_iters = 1800;
    int self_boost_iters = 3000;
    double lr_distill = 0.05;
    double lr_boost = 0.01;
    double lr_self_boost = 0.01;
    double alpha = 1e-2;  // orientation loss weight
    double beta = 1e-3;   // opacity loss weight
    double distill_mask_weight = 0.5;
    int views_per_iter = camera::kRigViews;
    int per_view_size = 64;
    NormalSource normal_source_boost = NormalSource::mesh;
    int skip_budget = 3;
    bool skip_init = false;
    bool skip_boost = false;
    bool skip_self_boost = false;

    void validate() const;
};

struct IterationMetrics {
    int iteration = 0;
    Stage stage = Stage::distill;
    double l1 = 0.0;             // distillation loss
    double sds_grad_norm = 0.0;  // |dL/dG|, the SDS proxy
    double orient = 0.0;
    double opacity = 0.0;
    std::optional<double> psnr;  // composite vs analytic target, when known
    int t_used = 0;
    double w_used = 0.0;
    double wall_ms = 0.0;
    int skipped_before = 0;  // guidance failures retried before this entry
};

nlohmann::json to_json(const IterationMetrics& m);

using MetricsSink = std::function<void(const IterationMetrics&)>;

// 2x2 tiling, row-major: views 0 1 / 2 3. Throws std::invalid_argument unless
// there are exactly four images of identical shape.
Image assemble_composite(std::span<const Image> views);
// Inverse of assemble_composite (and its adjoint). Throws on odd dimensions.
std::array<Image, 4> split_composite(const Image& composite);
inline std::array<Image, 4> split_composite_grad(const Image& grad) { return split_composite(grad); }

// Everything the training loops need besides the field and the asset.
struct TrainingContext {
    StageConfig stages;
    camera::CameraRanges ranges;
    RenderSettings render;
    guidance::GuidanceConfig guidance;
    double rotation_angle_deg = 90.0;
};

struct DistillResult {
    std::vector<IterationMetrics> metrics;
};

// L1 fit of field renders to mesh renders from one random view per
// iteration; opacity-mask L1 is added with distill_mask_weight.
DistillResult distill_stage(VoxelField& field, const CoarseAsset& asset, const TrainingContext& ctx, Rng& rng,
                            int iterations, int first_index = 0, const MetricsSink& sink = {});

// Distillation loss and its gradient for a single view.
struct DistillLoss {
    double loss = 0.0;
    FieldGradient grad;
};
DistillLoss distill_loss(const VoxelField& field, const CoarseAsset& asset, const camera::CameraPose& pose,
                         const TrainingContext& ctx);

struct MvSdsGradient {
    FieldGradient grad;
    IterationMetrics metrics;
    Image composite;         // G
    Image normal_composite;  // N
    guidance::GuidanceResponse response;
};

// Everything in one MV-SDS iteration except the parameter update: render the
// four views into G, the four normal maps into N, query guidance, split the
// image gradient and chain it through field_gradient, then add alpha * grad
// L_orient + beta * grad L_opacity (both averaged over the four views).
MvSdsGradient compute_mv_sds_gradient(const VoxelField& field, const camera::MultiViewRig& rig,
                                      NormalSource normal_source, const CoarseAsset* asset,
                                      guidance::GuidanceBackend& backend, const TrainingContext& ctx,
                                      std::uint64_t guidance_seed);

// compute_mv_sds_gradient followed by one Adam step.
IterationMetrics mv_sds_step(VoxelField& field, AdamState& optimizer, double lr, const camera::MultiViewRig& rig,
                             NormalSource normal_source, const CoarseAsset* asset, guidance::GuidanceBackend& backend,
                             const TrainingContext& ctx, std::uint64_t guidance_seed);

struct RunOptions {
    GridShape resolution = GridShape::cube(64);
    InitMode init_mode = InitMode::blob;
    std::uint64_t seed = 0;
    int turntable_frames = 8;
    double turntable_elevation_deg = 20.0;
    double turntable_distance = 3.2;
    double turntable_fov_deg = 50.0;
    // Optional starting field; replaces init_field when set.
    std::optional<VoxelField> initial_field;
};

struct PipelineResult {
    VoxelField field;
    std::vector<IterationMetrics> metrics;
};

// init -> distill -> boost (normal_source_boost) -> self-boost (own normals).
// With a non-empty out_dir, writes metrics.jsonl (one record per iteration),
// a BDF1 checkpoint and turntable PNGs after each stage, and final.bdf.
PipelineResult run_pipeline(const CoarseAsset& asset, const TrainingContext& ctx, const RunOptions& options,
                            guidance::GuidanceBackend& backend, const std::filesystem::path& out_dir = {});

// K frames at equally spaced azimuths and fixed elevation.
std::vector<camera::CameraPose> turntable_poses(int frames, double elevation_deg, double distance, double fov_deg,
                                                int image_size);

// Analytic-backend targets.
guidance::TargetProvider mesh_target(const CoarseAsset& asset, RenderSettings settings);
guidance::TargetProvider field_target(VoxelField field, RenderSettings settings);
guidance::TargetProvider image_target(Image composite);

}  // namespace boostdream::pipeline
