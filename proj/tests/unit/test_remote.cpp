#include <doctest.h>

#include <cmath>
#include <cstdlib>
#include <limits>

#include "boostdream/errors.hpp"
#include "boostdream/remote_guidance.hpp"
#include "mock_sidecar.hpp"
#include "support.hpp"

using namespace boostdream;
using namespace boostdream::guidance;
using testsupport::MockSidecar;
using testsupport::random_image;

namespace {

RemoteOptions fast_options(int retries = 2) {
    RemoteOptions o;
    o.retries = retries;
    o.connect_timeout_s = 1.0;
    o.read_timeout_s = 10.0;
    return o;
}

GuidanceRequest request_for(const Image& image, std::uint64_t seed) {
    GuidanceRequest r;
    r.image = image;
    r.control = Image(image.height, image.width, 3, 0.5);
    r.prompt = "test";
    r.seed = seed;
    return r;
}

}  // namespace

TEST_CASE("endpoint resolution: flag, then environment, then default") {
    ::unsetenv(kEndpointEnvVar);
    CHECK(resolve_endpoint(std::nullopt) == kDefaultEndpoint);
    ::setenv(kEndpointEnvVar, "http://10.0.0.1:9000", 1);
    CHECK(resolve_endpoint(std::nullopt) == "http://10.0.0.1:9000");
    CHECK(resolve_endpoint(std::string("http://h:1")) == "http://h:1");
    ::unsetenv(kEndpointEnvVar);
}

TEST_CASE("route names parse") {
    CHECK(parse_remote_route("grad") == RemoteRoute::grad);
    CHECK(parse_remote_route("eps") == RemoteRoute::eps);
    CHECK_THROWS_AS(parse_remote_route("x"), ConfigError);
}

TEST_CASE("health check reports mode and loading state") {
    MockSidecar mock(Image(4, 4, 3));
    RemoteGuidanceClient client(mock.endpoint(), fast_options());
    HealthStatus h = client.health();
    CHECK(h.ok());
    CHECK(h.mode == "mock");
    mock.set_health_status(503);
    h = client.health();
    CHECK_FALSE(h.ok());
    CHECK(h.http_status == 503);
}

TEST_CASE("unreachable sidecar raises a transport error after all retries") {
    RemoteGuidanceClient client(testsupport::dead_endpoint(), fast_options(2));
    CHECK_THROWS_AS(client.health(), TransportError);
    Rng rng(1);
    try {
        remote_grad(client, request_for(random_image(4, 4, 3, rng, 0, 1), 1), WeightMode::sigma2);
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.attempts() == 3);
    }
}

TEST_CASE("remote grad matches the local analytic grad within f32 transport") {
    Rng rng(2);
    const Image target = random_image(8, 8, 3, rng, 0.0, 1.0);
    MockSidecar mock(target);
    const DiffusionSchedule schedule = build_schedule();
    GuidanceConfig cfg;
    RemoteBackend backend(RemoteGuidanceClient(mock.endpoint(), fast_options()), schedule, cfg);
    for (int trial = 0; trial < 10; ++trial) {
        const GuidanceRequest req = request_for(random_image(8, 8, 3, rng, 0.0, 1.0), 1000 + trial);
        const GuidanceResponse local = analytic_grad(req, target, schedule, cfg);
        const GuidanceResponse remote = backend.guide(req, camera::MultiViewRig{});
        CHECK(remote.t_used == local.t_used);
        CHECK(remote.w_used == doctest::Approx(local.w_used).epsilon(1e-12));
        CHECK(remote.diagnostics.at("backend") == "remote");
        CHECK(remote.diagnostics.at("sidecar_backend") == "analytic");
        CHECK(testsupport::max_abs_diff(remote.grad.data, local.grad.data) < 1e-6);
    }
}

TEST_CASE("eps route composes guidance on the engine side") {
    Rng rng(3);
    const Image target = random_image(4, 6, 3, rng, 0.0, 1.0);
    MockSidecar mock(target);
    const DiffusionSchedule schedule = build_schedule();
    GuidanceConfig cfg;
    RemoteGuidanceClient client(mock.endpoint(), fast_options());
    GuidanceRequest req = request_for(random_image(4, 6, 3, rng, 0.0, 1.0), 77);
    req.cfg_scale = 7.5;

    // With identical branches the composition is the identity and the
    // result matches the analytic oracle.
    const GuidanceResponse plain = remote_eps_grad(client, req, schedule, cfg);
    const GuidanceResponse local = analytic_grad(req, target, schedule, cfg);
    CHECK(plain.t_used == local.t_used);
    CHECK(testsupport::max_abs_diff(plain.grad.data, local.grad.data) < 1e-5);

    // eps_uncond = eps_cond + 0.1 shifts eps_hat by -s * 0.1.
    mock.set_uncond_offset(0.1);
    const GuidanceResponse guided = remote_eps_grad(client, req, schedule, cfg);
    for (std::size_t i = 0; i < guided.grad.size(); ++i) {
        CHECK(guided.grad.data[i] - plain.grad.data[i] ==
              doctest::Approx(-2.0 * plain.w_used * 7.5 * 0.1).epsilon(1e-4));
    }
    CHECK(mock.eps_calls() == 2);
}

TEST_CASE("server errors are retried, client errors are not") {
    Rng rng(4);
    const Image target = random_image(4, 4, 3, rng, 0.0, 1.0);
    MockSidecar mock(target);
    RemoteGuidanceClient client(mock.endpoint(), fast_options(2));
    // The fixed point is exact once both sides hold the same f32 values.
    Image image = target;
    for (double& v : image.data) v = static_cast<float>(v);
    mock.set_target(image);
    const GuidanceRequest req = request_for(image, 5);

    mock.fail_next(2, 500);
    const GuidanceResponse ok = remote_grad(client, req, WeightMode::sigma2);
    CHECK(mock.grad_calls() == 3);
    for (double g : ok.grad.data) CHECK(g == 0.0);

    mock.fail_next(3, 500);
    CHECK_THROWS_AS(remote_grad(client, req, WeightMode::sigma2), TransportError);
    CHECK(mock.grad_calls() == 6);

    mock.fail_next(1, 400);
    try {
        remote_grad(client, req, WeightMode::sigma2);
        FAIL("expected TransportError");
    } catch (const TransportError& e) {
        CHECK(e.attempts() == 1);
    }
    CHECK(mock.grad_calls() == 7);
}

TEST_CASE("bad gradients from the sidecar are guidance errors") {
    Rng rng(5);
    const Image target = random_image(4, 4, 3, rng, 0.0, 1.0);
    MockSidecar mock(target);
    RemoteGuidanceClient client(mock.endpoint(), fast_options());
    const GuidanceRequest req = request_for(target, 6);
    mock.set_corruption([](Image& g) { g = Image(2, 4, 3); });
    CHECK_THROWS_WITH_AS(remote_grad(client, req, WeightMode::sigma2), doctest::Contains("shape"), GuidanceError);
    mock.set_corruption([](Image& g) { g.data[3] = std::numeric_limits<double>::quiet_NaN(); });
    CHECK_THROWS_WITH_AS(remote_grad(client, req, WeightMode::sigma2), doctest::Contains("non-finite"), GuidanceError);
}

TEST_CASE("shape errors reported by the sidecar surface as transport errors") {
    MockSidecar mock(Image(4, 4, 3));
    RemoteGuidanceClient client(mock.endpoint(), fast_options());
    Rng rng(6);
    CHECK_THROWS_WITH_AS(remote_grad(client, request_for(random_image(6, 6, 3, rng, 0, 1), 1), WeightMode::sigma2),
                         doctest::Contains("400"), TransportError);
}

TEST_CASE("invalid endpoint is a configuration error") {
    CHECK_THROWS_AS(RemoteGuidanceClient("not a url"), ConfigError);
}
