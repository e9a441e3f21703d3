#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "boostdream/config.hpp"
#include "boostdream/errors.hpp"
#include "boostdream/pipeline.hpp"
#include "boostdream/png_io.hpp"
#include "boostdream/remote_guidance.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace boostdream;

namespace {

constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Flags {
    std::optional<std::string> config;
    std::optional<std::string> mesh;
    std::optional<std::string> prompt;
    std::optional<std::string> backend;
    std::optional<std::string> endpoint;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<int> distill_iters;
    std::optional<int> boost_iters;
    std::optional<int> self_boost_iters;
    std::optional<double> lambda;
    std::optional<double> cfg_scale;
    std::optional<std::string> target_dir;

    std::optional<std::string> field;
    std::optional<std::string> init;
    std::optional<std::string> reference;
    std::optional<int> frames;
    std::optional<double> elevation;
    std::optional<double> distance;
    std::optional<double> fov;
    std::optional<int> size;
};

void add_common(CLI::App* cmd, Flags& f) {
    cmd->add_option("--config", f.config, "JSON config file");
    cmd->add_option("--seed", f.seed, "Master seed");
    cmd->add_option("--out", f.out, "Output directory");
}

void add_training(CLI::App* cmd, Flags& f) {
    cmd->add_option("--mesh", f.mesh, "Coarse mesh (.obj or .ply)");
    cmd->add_option("--distill-iters", f.distill_iters);
    cmd->add_option("--boost-iters", f.boost_iters);
    cmd->add_option("--self-boost-iters", f.self_boost_iters);
}

void add_guidance(CLI::App* cmd, Flags& f) {
    cmd->add_option("--prompt", f.prompt);
    cmd->add_option("--backend", f.backend, "analytic or remote");
    cmd->add_option("--endpoint", f.endpoint, "Sidecar URL (falls back to $BOOSTDREAM_ENDPOINT)");
    cmd->add_option("--lambda", f.lambda, "Normal-control strength");
    cmd->add_option("--cfg-scale", f.cfg_scale);
    cmd->add_option("--target-dir", f.target_dir, "Analytic target: target.bdf or target.png");
    cmd->add_option("--init", f.init, "Start from this BDF1 checkpoint instead of a fresh field");
}

void add_view(CLI::App* cmd, Flags& f) {
    cmd->add_option("--field", f.field, "BDF1 field checkpoint")->required();
    cmd->add_option("--frames", f.frames, "Number of turntable frames");
    cmd->add_option("--elevation", f.elevation, "Degrees");
    cmd->add_option("--distance", f.distance);
    cmd->add_option("--fov", f.fov, "Degrees");
    cmd->add_option("--size", f.size, "Frame size in pixels");
}

RunConfig resolve(const Flags& f) {
    json o = json::object();
    auto set = [&](const char* key, const auto& value) {
        if (value) o[key] = *value;
    };
    set("mesh", f.mesh);
    set("prompt", f.prompt);
    set("backend", f.backend);
    set("endpoint", f.endpoint);
    set("seed", f.seed);
    set("out_dir", f.out);
    set("distill_iters", f.distill_iters);
    set("boost_iters", f.boost_iters);
    set("self_boost_iters", f.self_boost_iters);
    set("lambda", f.lambda);
    set("cfg_scale", f.cfg_scale);
    set("target_dir", f.target_dir);
    set("turntable_frames", f.frames);
    std::optional<fs::path> path;
    if (f.config) path = *f.config;
    return load_config(path, o);
}

RenderSettings render_settings(const RunConfig& c) { return c.training.render; }

std::vector<camera::CameraPose> view_poses(const Flags& f, int frames, int size) {
    const pipeline::RunOptions d;
    return pipeline::turntable_poses(frames, f.elevation.value_or(d.turntable_elevation_deg),
                                     f.distance.value_or(d.turntable_distance), f.fov.value_or(d.turntable_fov_deg),
                                     size);
}

CoarseAsset require_mesh(const RunConfig& c) {
    if (c.mesh.empty()) throw UsageError("a coarse mesh is required (--mesh or \"mesh\" in the config)");
    return load_mesh(c.mesh);
}

guidance::TargetProvider analytic_target(const RunConfig& c, const CoarseAsset& asset) {
    const RenderSettings rs = render_settings(c);
    if (c.target_dir.empty()) return pipeline::mesh_target(asset, rs);
    const fs::path dir = c.target_dir;
    if (fs::exists(dir / "target.bdf")) return pipeline::field_target(load_field(dir / "target.bdf"), rs);
    if (fs::exists(dir / "target.png")) {
        Image img = png::read(dir / "target.png");
        const int side = 2 * c.training.stages.per_view_size;
        if (img.height != side || img.width != side) {
            throw ConfigError("target_dir", "target.png must be a " + std::to_string(side) + "x" + std::to_string(side) +
                                                " composite");
        }
        return pipeline::image_target(std::move(img));
    }
    throw ConfigError("target_dir", "expected target.bdf or target.png in " + dir.string());
}

std::unique_ptr<guidance::GuidanceBackend> make_backend(const RunConfig& c, const CoarseAsset& asset) {
    if (c.backend == BackendKind::analytic) {
        return std::make_unique<guidance::AnalyticBackend>(c.schedule(), c.training.guidance, analytic_target(c, asset));
    }
    if (c.training.guidance.prompt.empty()) throw UsageError("the remote backend needs a prompt (--prompt)");
    const std::string endpoint =
        guidance::resolve_endpoint(c.endpoint.empty() ? std::nullopt : std::optional<std::string>(c.endpoint));
    guidance::RemoteOptions opts;
    opts.retries = c.retries;
    guidance::RemoteGuidanceClient client(endpoint, opts);
    const guidance::HealthStatus h = client.health();
    if (!h.ok()) {
        throw TransportError("sidecar at " + endpoint + " is not healthy (HTTP " + std::to_string(h.http_status) +
                                 ", status \"" + h.status + "\")",
                             1);
    }
    std::cerr << "sidecar " << endpoint << " ok, mode " << h.mode << "\n";
    return std::make_unique<guidance::RemoteBackend>(std::move(client), c.schedule(), c.training.guidance,
                                                     c.remote_route);
}

void summarize(const pipeline::PipelineResult& r, const fs::path& out) {
    std::cerr << r.metrics.size() << " iterations";
    if (!r.metrics.empty()) {
        const auto& last = r.metrics.back();
        std::cerr << ", last " << pipeline::to_string(last.stage) << " l1=" << last.l1
                  << " sds_grad_norm=" << last.sds_grad_norm;
    }
    std::cerr << "\nwrote " << out.string() << "\n";
}

int run_training(const Flags& f, bool full) {
    RunConfig c = resolve(f);
    if (!full) {
        c.training.stages.skip_boost = true;
        c.training.stages.skip_self_boost = true;
    }
    const CoarseAsset asset = require_mesh(c);
    pipeline::RunOptions opts = c.run_options();
    if (f.init) opts.initial_field = load_field(*f.init);
    const auto backend = full ? make_backend(c, asset)
                              : std::make_unique<guidance::AnalyticBackend>(
                                    c.schedule(), c.training.guidance, pipeline::mesh_target(asset, c.training.render));
    const fs::path out = c.out_dir;
    fs::create_directories(out);
    write_config(c, out);
    summarize(pipeline::run_pipeline(asset, c.training, opts, *backend, out), out);
    return 0;
}

int render_turntable(const Flags& f) {
    const RunConfig c = resolve(f);
    const VoxelField field = load_field(*f.field);
    const int frames = f.frames.value_or(c.turntable_frames);
    if (frames < 1) throw ConfigError("turntable_frames", "must be >= 1");
    const int size = f.size.value_or(c.training.stages.per_view_size);
    const fs::path out = c.out_dir;
    fs::create_directories(out);
    write_config(c, out);
    const auto poses = view_poses(f, frames, size);
    for (std::size_t k = 0; k < poses.size(); ++k) {
        char name[32];
        std::snprintf(name, sizeof name, "frame_%03zu.png", k);
        png::write(out / name, render(field, poses[k], render_settings(c)).color);
    }
    std::cerr << "wrote " << poses.size() << " frames to " << out.string() << "\n";
    return 0;
}

int eval_metrics(const Flags& f) {
    const RunConfig c = resolve(f);
    if (!f.reference) throw UsageError("--reference is required");
    std::vector<fs::path> refs;
    for (const auto& e : fs::directory_iterator(*f.reference)) {
        if (e.path().extension() == ".png") refs.push_back(e.path());
    }
    if (refs.empty()) throw UsageError("no PNG files in " + *f.reference);
    std::sort(refs.begin(), refs.end());

    const VoxelField field = load_field(*f.field);
    std::vector<Image> reference;
    for (const auto& p : refs) reference.push_back(png::read(p));
    const int size = reference.front().height;
    for (std::size_t k = 0; k < reference.size(); ++k) {
        if (reference[k].height != size || reference[k].width != size) {
            throw FormatError(refs[k].string() + ": reference frames must be square and equally sized");
        }
    }
    const auto poses = view_poses(f, static_cast<int>(reference.size()), size);
    double se = 0.0, ae = 0.0;
    std::size_t n = 0;
    for (std::size_t k = 0; k < poses.size(); ++k) {
        const Image rendered = png::quantize(render(field, poses[k], render_settings(c)).color);
        for (std::size_t i = 0; i < rendered.data.size(); ++i) {
            const double d = rendered.data[i] - reference[k].data[i];
            se += d * d;
            ae += std::abs(d);
        }
        n += rendered.data.size();
    }
    const double mse = se / static_cast<double>(n);
    json report{{"frames", poses.size()}, {"l1", ae / static_cast<double>(n)}};
    if (mse == 0.0) {
        report["psnr"] = "inf";
    } else {
        report["psnr"] = -10.0 * std::log10(mse);
    }
    std::cout << report.dump() << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Mesh-to-field refinement with multi-view normal-conditioned guidance"};
    app.require_subcommand(1);
    Flags f;

    auto* distill = app.add_subcommand("distill", "Fit a fresh field to the coarse mesh (stage 1 only)");
    add_common(distill, f);
    add_training(distill, f);
    distill->add_option("--init", f.init, "Start from this BDF1 checkpoint");

    auto* refine = app.add_subcommand("refine", "Run distill, boost and self-boost");
    add_common(refine, f);
    add_training(refine, f);
    add_guidance(refine, f);

    auto* turntable = app.add_subcommand("render-turntable", "Render equally spaced azimuth frames of a field");
    add_common(turntable, f);
    add_view(turntable, f);

    auto* eval = app.add_subcommand("eval-metrics", "PSNR and L1 of a field's turntable against reference frames");
    add_common(eval, f);
    add_view(eval, f);
    eval->add_option("--reference", f.reference, "Directory of reference PNG frames")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitConfig;
    }

    try {
        if (distill->parsed()) return run_training(f, false);
        if (refine->parsed()) return run_training(f, true);
        if (turntable->parsed()) return render_turntable(f);
        return eval_metrics(f);
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return kExitConfig;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
