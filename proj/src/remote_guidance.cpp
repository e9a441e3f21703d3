#include "boostdream/remote_guidance.hpp"

#include <cstdlib>

#include <httplib.h>

#include "boostdream/errors.hpp"

namespace boostdream::guidance {

std::string resolve_endpoint(const std::optional<std::string>& flag) {
    if (flag && !flag->empty()) return *flag;
    if (const char* env = std::getenv(kEndpointEnvVar); env && *env) return env;
    return kDefaultEndpoint;
}

RemoteRoute parse_remote_route(const std::string& name) {
    if (name == "grad") return RemoteRoute::grad;
    if (name == "eps") return RemoteRoute::eps;
    throw ConfigError("remote_route", "unknown route '" + name + "' (expected grad or eps)");
}

struct RemoteGuidanceClient::Impl {
    httplib::Client http;
    explicit Impl(const std::string& endpoint) : http(endpoint) {}
};

RemoteGuidanceClient::RemoteGuidanceClient(std::string endpoint, RemoteOptions options)
    : endpoint_(std::move(endpoint)), options_(options) {
    if (endpoint_.rfind("http://", 0) != 0) {
        throw ConfigError("endpoint", "sidecar endpoint must look like http://host:port, got '" + endpoint_ + "'");
    }
    impl_ = std::make_unique<Impl>(endpoint_);
    if (!impl_->http.is_valid()) throw ConfigError("endpoint", "invalid sidecar endpoint '" + endpoint_ + "'");
    auto to_parts = [](double s, auto&& setter) {
        const auto sec = static_cast<time_t>(s);
        setter(sec, static_cast<time_t>((s - static_cast<double>(sec)) * 1e6));
    };
    to_parts(options_.connect_timeout_s, [&](time_t s, time_t us) { impl_->http.set_connection_timeout(s, us); });
    to_parts(options_.read_timeout_s, [&](time_t s, time_t us) { impl_->http.set_read_timeout(s, us); });
    impl_->http.set_keep_alive(true);
}

RemoteGuidanceClient::~RemoteGuidanceClient() = default;
RemoteGuidanceClient::RemoteGuidanceClient(RemoteGuidanceClient&&) noexcept = default;
RemoteGuidanceClient& RemoteGuidanceClient::operator=(RemoteGuidanceClient&&) noexcept = default;

HealthStatus RemoteGuidanceClient::health() {
    auto res = impl_->http.Get("/v1/health");
    if (!res) {
        throw TransportError("sidecar " + endpoint_ + " unreachable: " + httplib::to_string(res.error()), 1);
    }
    HealthStatus h;
    h.http_status = res->status;
    try {
        const auto body = wire::json::parse(res->body);
        h.status = body.value("status", "");
        h.mode = body.value("mode", "");
    } catch (const wire::json::exception&) {
        // non-JSON bodies (e.g. a 503 page) leave status empty
    }
    return h;
}

wire::json RemoteGuidanceClient::post(const std::string& path, const wire::json& body) {
    const std::string payload = body.dump();
    const int attempts = options_.retries + 1;
    std::string last_error;
    for (int attempt = 1; attempt <= attempts; ++attempt) {
        auto res = impl_->http.Post(path, payload, "application/json");
        if (!res) {
            last_error = "connection to " + endpoint_ + " failed: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status != 200) {
            last_error = "POST " + path + " returned HTTP " + std::to_string(res->status) + ": " + res->body.substr(0, 200);
            // Client errors will not improve on retry.
            if (res->status >= 400 && res->status < 500) throw TransportError(last_error, attempt);
            continue;
        }
        try {
            return wire::json::parse(res->body);
        } catch (const wire::json::exception& e) {
            throw TransportError("malformed JSON from " + path + ": " + e.what(), attempt);
        }
    }
    throw TransportError(last_error, attempts);
}

namespace {

void check_grad(const GuidanceResponse& resp, const GuidanceRequest& request) {
    if (!resp.grad.same_shape(request.image)) {
        throw GuidanceError("guidance gradient shape " + std::to_string(resp.grad.height) + "x" +
                            std::to_string(resp.grad.width) + "x" + std::to_string(resp.grad.channels) +
                            " does not match composite");
    }
    if (!all_finite(resp.grad)) throw GuidanceError("guidance gradient contains non-finite values");
}

}  // namespace

GuidanceResponse remote_grad(RemoteGuidanceClient& client, const GuidanceRequest& request, WeightMode w_mode) {
    request.validate();
    const auto body = client.post("/v1/grad", wire::encode_grad_request(request, w_mode));
    GuidanceResponse resp;
    try {
        resp = wire::decode_grad_response(body);
    } catch (const FormatError& e) {
        throw TransportError(std::string("malformed /v1/grad response: ") + e.what(), 1);
    }
    check_grad(resp, request);
    if (auto it = resp.diagnostics.find("backend"); it != resp.diagnostics.end()) {
        resp.diagnostics["sidecar_backend"] = it->second;
    }
    resp.diagnostics["backend"] = "remote";
    return resp;
}

GuidanceResponse remote_eps_grad(RemoteGuidanceClient& client, const GuidanceRequest& request,
                                 const DiffusionSchedule& schedule, const GuidanceConfig& config) {
    request.validate();
    const NoiseDraw draw = draw_noise(request, schedule, config);
    wire::EpsRequest eps_req;
    eps_req.x_t = add_noise(to_signed(request.image), draw.t, draw.eps, schedule);
    eps_req.t = draw.t;
    eps_req.prompt = request.prompt;
    eps_req.lambda = request.lambda;
    eps_req.control = request.control;
    eps_req.seed = request.seed;
    const auto body = client.post("/v1/eps", wire::encode_eps_request(eps_req));
    wire::EpsResponse eps;
    try {
        eps = wire::decode_eps_response(body);
    } catch (const FormatError& e) {
        throw TransportError(std::string("malformed /v1/eps response: ") + e.what(), 1);
    }
    if (!eps.eps_cond.same_shape(request.image) || !eps.eps_uncond.same_shape(request.image)) {
        throw GuidanceError("eps prediction shape does not match composite");
    }
    const Image eps_hat = cfg_compose(eps.eps_cond, eps.eps_uncond, request.cfg_scale);
    GuidanceResponse resp;
    resp.t_used = draw.t;
    resp.w_used = sds_weight(draw.t, schedule, config.w_mode);
    resp.grad = Image(request.image.height, request.image.width, 3);
    for (std::size_t i = 0; i < resp.grad.size(); ++i) {
        resp.grad.data[i] = resp.w_used * (eps_hat.data[i] - draw.eps.data[i]) * 2.0;
    }
    check_grad(resp, request);
    resp.diagnostics["backend"] = "remote-eps";
    return resp;
}

GuidanceResponse RemoteBackend::guide(const GuidanceRequest& request, const camera::MultiViewRig&) {
    if (route_ == RemoteRoute::eps) return remote_eps_grad(client_, request, schedule_, config_);
    // Resolve t against the engine's configured range so the sidecar never
    // needs to know it.
    GuidanceRequest resolved = request;
    if (!resolved.t) {
        Rng rng(request.seed);
        resolved.t = sample_timestep(rng, schedule_, config_.t_min, config_.t_max);
    }
    return remote_grad(client_, resolved, config_.w_mode);
}

}  // namespace boostdream::guidance
