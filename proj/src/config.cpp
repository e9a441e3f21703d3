#include "boostdream/config.hpp"

#include <fstream>
#include <functional>
#include <map>

#include "boostdream/errors.hpp"

namespace boostdream {

using nlohmann::json;

BackendKind parse_backend(const std::string& name) {
    if (name == "analytic") return BackendKind::analytic;
    if (name == "remote") return BackendKind::remote;
    throw ConfigError("backend", "unknown backend '" + name + "' (expected analytic or remote)");
}

std::string to_string(BackendKind kind) { return kind == BackendKind::analytic ? "analytic" : "remote"; }

namespace {

std::string init_mode_name(InitMode mode) { return mode == InitMode::blob ? "blob" : "empty"; }
std::string route_name(guidance::RemoteRoute route) { return route == guidance::RemoteRoute::grad ? "grad" : "eps"; }

int get_int(const std::string& key, const json& v) {
    if (!v.is_number_integer()) throw ConfigError(key, "expected an integer, got " + std::string(v.type_name()));
    const auto wide = v.get<std::int64_t>();
    if (wide < INT32_MIN || wide > INT32_MAX) throw ConfigError(key, "integer out of range");
    return static_cast<int>(wide);
}

double get_double(const std::string& key, const json& v) {
    if (!v.is_number()) throw ConfigError(key, "expected a number, got " + std::string(v.type_name()));
    return v.get<double>();
}

bool get_bool(const std::string& key, const json& v) {
    if (!v.is_boolean()) throw ConfigError(key, "expected a boolean, got " + std::string(v.type_name()));
    return v.get<bool>();
}

std::string get_string(const std::string& key, const json& v) {
    if (!v.is_string()) throw ConfigError(key, "expected a string, got " + std::string(v.type_name()));
    return v.get<std::string>();
}

std::uint64_t get_u64(const std::string& key, const json& v) {
    if (v.is_number_unsigned()) return v.get<std::uint64_t>();
    if (v.is_number_integer()) {
        if (v.get<std::int64_t>() < 0) throw ConfigError(key, "must be >= 0");
        return v.get<std::uint64_t>();
    }
    throw ConfigError(key, "expected a non-negative integer, got " + std::string(v.type_name()));
}

std::pair<double, double> get_pair(const std::string& key, const json& v) {
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number()) {
        throw ConfigError(key, "expected [min, max]");
    }
    return {v[0].get<double>(), v[1].get<double>()};
}

camera::Range get_range(const std::string& key, const json& v) {
    const auto [lo, hi] = get_pair(key, v);
    return {lo, hi};
}

using Setter = std::function<void(RunConfig&, const std::string&, const json&)>;

const std::map<std::string, Setter>& setters() {
    static const std::map<std::string, Setter> table = {
        {"distill_iters", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.distill_iters = get_int(k, v); }},
        {"boost_iters", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.boost_iters = get_int(k, v); }},
        {"self_boost_iters", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.self_boost_iters = get_int(k, v); }},
        {"lr_distill", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.lr_distill = get_double(k, v); }},
        {"lr_boost", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.lr_boost = get_double(k, v); }},
        {"lr_self_boost", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.lr_self_boost = get_double(k, v); }},
        {"alpha", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.alpha = get_double(k, v); }},
        {"beta", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.beta = get_double(k, v); }},
        {"distill_mask_weight", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.distill_mask_weight = get_double(k, v); }},
        {"per_view_size", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.per_view_size = get_int(k, v); }},
        {"normal_source_boost",
         [](RunConfig& c, const std::string& k, const json& v) {
             c.training.stages.normal_source_boost = pipeline::parse_normal_source(get_string(k, v));
         }},
        {"skip_budget", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.skip_budget = get_int(k, v); }},
        {"skip_init", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.skip_init = get_bool(k, v); }},
        {"skip_boost", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.skip_boost = get_bool(k, v); }},
        {"skip_self_boost", [](RunConfig& c, const std::string& k, const json& v) { c.training.stages.skip_self_boost = get_bool(k, v); }},
        {"elevation_range", [](RunConfig& c, const std::string& k, const json& v) { c.training.ranges.elevation_deg = get_range(k, v); }},
        {"azimuth_range", [](RunConfig& c, const std::string& k, const json& v) { c.training.ranges.azimuth_deg = get_range(k, v); }},
        {"fov_range", [](RunConfig& c, const std::string& k, const json& v) { c.training.ranges.fov_deg = get_range(k, v); }},
        {"distance_range", [](RunConfig& c, const std::string& k, const json& v) { c.training.ranges.distance = get_range(k, v); }},
        {"rotation_angle", [](RunConfig& c, const std::string& k, const json& v) { c.training.rotation_angle_deg = get_double(k, v); }},
        {"samples_per_ray", [](RunConfig& c, const std::string& k, const json& v) { c.training.render.samples_per_ray = get_int(k, v); }},
        {"background",
         [](RunConfig& c, const std::string& k, const json& v) {
             if (!v.is_array() || v.size() != 3) throw ConfigError(k, "expected [r, g, b]");
             for (int i = 0; i < 3; ++i) c.training.render.background[i] = get_double(k, v[static_cast<std::size_t>(i)]);
         }},
        {"lambda", [](RunConfig& c, const std::string& k, const json& v) { c.training.guidance.lambda = get_double(k, v); }},
        {"cfg_scale", [](RunConfig& c, const std::string& k, const json& v) { c.training.guidance.cfg_scale = get_double(k, v); }},
        {"prompt", [](RunConfig& c, const std::string& k, const json& v) { c.training.guidance.prompt = get_string(k, v); }},
        {"t_range",
         [](RunConfig& c, const std::string& k, const json& v) {
             std::tie(c.training.guidance.t_min, c.training.guidance.t_max) = get_pair(k, v);
         }},
        {"w_mode",
         [](RunConfig& c, const std::string& k, const json& v) {
             c.training.guidance.w_mode = guidance::parse_weight_mode(get_string(k, v));
         }},
        {"diffusion_steps", [](RunConfig& c, const std::string& k, const json& v) { c.diffusion_steps = get_int(k, v); }},
        {"beta_range",
         [](RunConfig& c, const std::string& k, const json& v) { std::tie(c.beta_start, c.beta_end) = get_pair(k, v); }},
        {"field_resolution", [](RunConfig& c, const std::string& k, const json& v) { c.field_resolution = get_int(k, v); }},
        {"init_mode", [](RunConfig& c, const std::string& k, const json& v) { c.init_mode = parse_init_mode(get_string(k, v)); }},
        {"backend", [](RunConfig& c, const std::string& k, const json& v) { c.backend = parse_backend(get_string(k, v)); }},
        {"endpoint", [](RunConfig& c, const std::string& k, const json& v) { c.endpoint = get_string(k, v); }},
        {"remote_route",
         [](RunConfig& c, const std::string& k, const json& v) { c.remote_route = guidance::parse_remote_route(get_string(k, v)); }},
        {"retries", [](RunConfig& c, const std::string& k, const json& v) { c.retries = get_int(k, v); }},
        {"seed", [](RunConfig& c, const std::string& k, const json& v) { c.seed = get_u64(k, v); }},
        {"out_dir", [](RunConfig& c, const std::string& k, const json& v) { c.out_dir = get_string(k, v); }},
        {"mesh", [](RunConfig& c, const std::string& k, const json& v) { c.mesh = get_string(k, v); }},
        {"target_dir", [](RunConfig& c, const std::string& k, const json& v) { c.target_dir = get_string(k, v); }},
        {"turntable_frames", [](RunConfig& c, const std::string& k, const json& v) { c.turntable_frames = get_int(k, v); }},
    };
    return table;
}

}  // namespace

void RunConfig::validate() const {
    training.stages.validate();
    training.ranges.validate();
    training.guidance.validate();
    if (!(training.rotation_angle_deg > 0.0 && training.rotation_angle_deg < 360.0)) {
        throw ConfigError("rotation_angle", "must lie in (0, 360)");
    }
    if (training.render.samples_per_ray < 1) throw ConfigError("samples_per_ray", "must be >= 1");
    for (int i = 0; i < 3; ++i) {
        const double b = training.render.background[i];
        if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("background", "components must lie in [0, 1]");
    }
    if (field_resolution < 2) throw ConfigError("field_resolution", "must be >= 2");
    if (retries < 0) throw ConfigError("retries", "must be >= 0");
    if (turntable_frames < 0) throw ConfigError("turntable_frames", "must be >= 0");
    (void)schedule();  // diffusion_steps / beta_range
}

pipeline::RunOptions RunConfig::run_options() const {
    pipeline::RunOptions options;
    options.resolution = GridShape::cube(field_resolution);
    options.init_mode = init_mode;
    options.seed = seed;
    options.turntable_frames = turntable_frames;
    return options;
}

guidance::DiffusionSchedule RunConfig::schedule() const { return guidance::build_schedule(diffusion_steps, beta_start, beta_end); }

RunConfig apply_config(RunConfig base, const json& object) {
    if (!object.is_object()) throw ConfigError("config must be a JSON object");
    const auto& table = setters();
    for (const auto& [key, value] : object.items()) {
        const auto it = table.find(key);
        if (it == table.end()) throw ConfigError(key, "unknown configuration key");
        it->second(base, key, value);
    }
    return base;
}

RunConfig load_config(const std::optional<std::filesystem::path>& path, const json& overrides) {
    RunConfig config;
    if (path) {
        std::ifstream in(*path);
        if (!in) throw ConfigError("config", "cannot open " + path->string());
        json file;
        try {
            file = json::parse(in);
        } catch (const json::parse_error& e) {
            throw ConfigError("config", "invalid JSON in " + path->string() + ": " + e.what());
        }
        config = apply_config(std::move(config), file);
    }
    config = apply_config(std::move(config), overrides);
    config.validate();
    return config;
}

json to_json(const RunConfig& c) {
    const auto& s = c.training.stages;
    const auto& r = c.training.ranges;
    const auto& g = c.training.guidance;
    const auto& bg = c.training.render.background;
    return json{
        {"distill_iters", s.distill_iters},
        {"boost_iters", s.boost_iters},
        {"self_boost_iters", s.self_boost_iters},
        {"lr_distill", s.lr_distill},
        {"lr_boost", s.lr_boost},
        {"lr_self_boost", s.lr_self_boost},
        {"alpha", s.alpha},
        {"beta", s.beta},
        {"distill_mask_weight", s.distill_mask_weight},
        {"per_view_size", s.per_view_size},
        {"normal_source_boost", pipeline::to_string(s.normal_source_boost)},
        {"skip_budget", s.skip_budget},
        {"skip_init", s.skip_init},
        {"skip_boost", s.skip_boost},
        {"skip_self_boost", s.skip_self_boost},
        {"elevation_range", {r.elevation_deg.min, r.elevation_deg.max}},
        {"azimuth_range", {r.azimuth_deg.min, r.azimuth_deg.max}},
        {"fov_range", {r.fov_deg.min, r.fov_deg.max}},
        {"distance_range", {r.distance.min, r.distance.max}},
        {"rotation_angle", c.training.rotation_angle_deg},
        {"samples_per_ray", c.training.render.samples_per_ray},
        {"background", {bg[0], bg[1], bg[2]}},
        {"lambda", g.lambda},
        {"cfg_scale", g.cfg_scale},
        {"prompt", g.prompt},
        {"t_range", {g.t_min, g.t_max}},
        {"w_mode", guidance::to_string(g.w_mode)},
        {"diffusion_steps", c.diffusion_steps},
        {"beta_range", {c.beta_start, c.beta_end}},
        {"field_resolution", c.field_resolution},
        {"init_mode", init_mode_name(c.init_mode)},
        {"backend", to_string(c.backend)},
        {"endpoint", c.endpoint},
        {"remote_route", route_name(c.remote_route)},
        {"retries", c.retries},
        {"seed", c.seed},
        {"out_dir", c.out_dir},
        {"mesh", c.mesh},
        {"target_dir", c.target_dir},
        {"turntable_frames", c.turntable_frames},
    };
}

void write_config(const RunConfig& config, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    std::ofstream out(dir / "config.json", std::ios::trunc);
    if (!out) throw Error("cannot write " + (dir / "config.json").string());
    out << to_json(config).dump(2) << '\n';
}

}  // namespace boostdream
