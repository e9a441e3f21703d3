#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "boostdream/guidance.hpp"
#include "boostdream/pipeline.hpp"
#include "boostdream/remote_guidance.hpp"

namespace boostdream {

enum class BackendKind { analytic, remote };
BackendKind parse_backend(const std::string& name);
std::string to_string(BackendKind kind);

// Fully resolved run configuration. JSON keys are flat (listed in README.md).
struct RunConfig {
    pipeline::TrainingContext training;
    int field_resolution = 64;
    InitMode init_mode = InitMode::blob;
    int diffusion_steps = 1000;
    double beta_start = 1e-4;
    double beta_end = 2e-2;
    BackendKind backend = BackendKind::analytic;
    std::string endpoint;  // empty: BOOSTDREAM_ENDPOINT, then the default
    guidance::RemoteRoute remote_route = guidance::RemoteRoute::grad;
    int retries = 2;
    std::uint64_t seed = 0;
    std::string out_dir = "out";
    std::string mesh;
    std::string target_dir;
    int turntable_frames = 8;

    // Throws ConfigError naming the first invalid key.
    void validate() const;

    pipeline::RunOptions run_options() const;
    guidance::DiffusionSchedule schedule() const;
};

// Applies the keys of a JSON object on top of `base`. Unknown keys and type
// mismatches throw ConfigError naming the key. Does not validate.
RunConfig apply_config(RunConfig base, const nlohmann::json& object);

// Defaults, then the file (when given), then `overrides`; validated.
RunConfig load_config(const std::optional<std::filesystem::path>& path,
                      const nlohmann::json& overrides = nlohmann::json::object());

nlohmann::json to_json(const RunConfig& config);

// Writes to_json(config) to dir/config.json.
void write_config(const RunConfig& config, const std::filesystem::path& dir);

}  // namespace boostdream
