#pragma once

#include <memory>
#include <optional>
#include <string>

#include "boostdream/guidance.hpp"
#include "boostdream/wire.hpp"

namespace boostdream::guidance {

inline constexpr const char* kDefaultEndpoint = "http://127.0.0.1:8765";
inline constexpr const char* kEndpointEnvVar = "BOOSTDREAM_ENDPOINT";

// Flag value if given, else $BOOSTDREAM_ENDPOINT, else the default.
std::string resolve_endpoint(const std::optional<std::string>& flag);

enum class RemoteRoute {
    grad,  // POST /v1/grad: the sidecar returns dL/dG directly
    eps,   // POST /v1/eps: the engine draws noise and composes both branches
};

RemoteRoute parse_remote_route(const std::string& name);

struct RemoteOptions {
    int retries = 2;  // extra attempts after the first
    double connect_timeout_s = 5.0;
    double read_timeout_s = 300.0;
};

struct HealthStatus {
    int http_status = 0;
    std::string status;
    std::string mode;

    bool ok() const { return http_status == 200 && status == "ok"; }
};

// HTTP client for the diffusion sidecar. One request in flight at a time.
class RemoteGuidanceClient {
  public:
    explicit RemoteGuidanceClient(std::string endpoint, RemoteOptions options = {});
    ~RemoteGuidanceClient();
    RemoteGuidanceClient(RemoteGuidanceClient&&) noexcept;
    RemoteGuidanceClient& operator=(RemoteGuidanceClient&&) noexcept;

    const std::string& endpoint() const { return endpoint_; }

    // Throws TransportError when the server is unreachable.
    HealthStatus health();

    // Throws TransportError on connection failures, non-200 replies or
    // malformed bodies.
    wire::json post(const std::string& path, const wire::json& body);

  private:
    struct Impl;
    std::string endpoint_;
    RemoteOptions options_;
    std::unique_ptr<Impl> impl_;
};

// Round trip through /v1/grad. Throws GuidanceError when the returned
// gradient has the wrong shape or non-finite entries.
GuidanceResponse remote_grad(RemoteGuidanceClient& client, const GuidanceRequest& request, WeightMode w_mode);

// Round trip through /v1/eps with the engine doing the noising and the
// classifier-free guidance composition.
GuidanceResponse remote_eps_grad(RemoteGuidanceClient& client, const GuidanceRequest& request,
                                 const DiffusionSchedule& schedule, const GuidanceConfig& config);

class RemoteBackend final : public GuidanceBackend {
  public:
    RemoteBackend(RemoteGuidanceClient client, DiffusionSchedule schedule, GuidanceConfig config,
                  RemoteRoute route = RemoteRoute::grad)
        : client_(std::move(client)), schedule_(std::move(schedule)), config_(std::move(config)), route_(route) {}

    GuidanceResponse guide(const GuidanceRequest& request, const camera::MultiViewRig& rig) override;
    std::string name() const override { return "remote"; }

    RemoteGuidanceClient& client() { return client_; }

  private:
    RemoteGuidanceClient client_;
    DiffusionSchedule schedule_;
    GuidanceConfig config_;
    RemoteRoute route_;
};

}  // namespace boostdream::guidance
