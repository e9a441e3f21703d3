#include <doctest.h>

#include <cmath>

#include "boostdream/errors.hpp"
#include "boostdream/guidance.hpp"
#include "support.hpp"

using namespace boostdream;
using namespace boostdream::guidance;
using testsupport::random_image;

namespace {

GuidanceRequest make_request(int h, int w, std::uint64_t seed, Rng& rng) {
    GuidanceRequest r;
    r.image = random_image(h, w, 3, rng, 0.0, 1.0);
    r.control = random_image(h, w, 3, rng, 0.0, 1.0);
    r.seed = seed;
    return r;
}

}  // namespace

TEST_CASE("linear DDPM schedule values") {
    const DiffusionSchedule s = build_schedule();
    CHECK(s.steps == 1000);
    // Frozen from numpy.cumprod(1 - linspace(1e-4, 2e-2, 1000)).
    CHECK(s.alpha_bar_at(1) == doctest::Approx(0.9999).epsilon(1e-14));
    CHECK(s.alpha_bar_at(20) == doctest::Approx(0.9942309516861578).epsilon(1e-12));
    CHECK(s.alpha_bar_at(500) == doctest::Approx(0.07858724288177824).epsilon(1e-10));
    CHECK(s.alpha_bar_at(980) == doctest::Approx(6.021910415675225e-05).epsilon(1e-9));
    CHECK(s.alpha_bar_at(1000) == doctest::Approx(4.035829765375676e-05).epsilon(1e-9));
    for (int t = 1; t <= 1000; ++t) {
        CHECK(s.sigma_at(t) * s.sigma_at(t) + s.alpha_bar_at(t) == doctest::Approx(1.0).epsilon(1e-14));
        if (t > 1) CHECK(s.alpha_bar_at(t) < s.alpha_bar_at(t - 1));
    }
    CHECK_THROWS_AS(s.check_timestep(0), std::out_of_range);
    CHECK_THROWS_AS(s.check_timestep(1001), std::out_of_range);
}

TEST_CASE("schedule rejects bad parameters") {
    CHECK_THROWS_AS(build_schedule(1), ConfigError);
    CHECK_THROWS_AS(build_schedule(100, 0.0, 0.02), ConfigError);
    CHECK_THROWS_AS(build_schedule(100, 0.05, 0.02), ConfigError);
    CHECK_THROWS_AS(build_schedule(100, 0.01, 1.0), ConfigError);
}

TEST_CASE("forward noising") {
    const DiffusionSchedule s = build_schedule();
    Rng rng(1);
    const Image x0 = random_image(4, 6, 3, rng);
    const Image e = random_image(4, 6, 3, rng);
    const Image xt = add_noise(x0, 300, e, s);
    const double a = std::sqrt(s.alpha_bar_at(300));
    for (std::size_t i = 0; i < xt.size(); ++i) {
        CHECK(xt.data[i] == doctest::Approx(a * x0.data[i] + std::sqrt(1 - a * a) * e.data[i]).epsilon(1e-14));
    }
    CHECK_THROWS_AS(add_noise(x0, 300, Image(4, 6, 1), s), std::invalid_argument);
}

TEST_CASE("cfg_compose edge scales") {
    Rng rng(2);
    const Image c = random_image(3, 5, 3, rng);
    const Image u = random_image(3, 5, 3, rng);
    CHECK(cfg_compose(c, u, 0.0) == c);
    const Image one = cfg_compose(c, u, 1.0);
    for (std::size_t i = 0; i < c.size(); ++i) CHECK(one.data[i] == c.data[i] + (c.data[i] - u.data[i]));
    CHECK(cfg_compose(c, c, 7.5) == c);
    CHECK_THROWS_AS(cfg_compose(c, Image(3, 5, 1), 1.0), std::invalid_argument);
    CHECK_THROWS_AS(cfg_compose(c, u, -0.5), std::invalid_argument);
}

TEST_CASE("SDS weights") {
    const DiffusionSchedule s = build_schedule();
    CHECK(sds_weight(500, s, WeightMode::sigma2) == 1.0 - s.alpha_bar_at(500));
    CHECK(sds_weight(500, s, WeightMode::uniform) == 1.0);
    CHECK(parse_weight_mode("sigma2") == WeightMode::sigma2);
    CHECK(parse_weight_mode("uniform") == WeightMode::uniform);
    CHECK(to_string(WeightMode::uniform) == "uniform");
    CHECK_THROWS_AS(parse_weight_mode("snr"), ConfigError);
    CHECK_THROWS_AS(sds_weight(0, s, WeightMode::uniform), std::out_of_range);
}

TEST_CASE("timestep sampling: bounds, uniformity, one draw") {
    const DiffusionSchedule s = build_schedule();
    Rng rng(3);
    std::vector<int> counts(1001, 0);
    const int n = 96100;
    for (int i = 0; i < n; ++i) ++counts[static_cast<std::size_t>(sample_timestep(rng, s, 0.02, 0.98))];
    int lo = 1000, hi = 0;
    for (int t = 1; t <= 1000; ++t) {
        if (counts[static_cast<std::size_t>(t)] > 0) {
            lo = std::min(lo, t);
            hi = std::max(hi, t);
        }
    }
    CHECK(lo == 20);
    CHECK(hi == 980);
    // 961 equally likely values, 100 expected each; bin into 31 groups of 31.
    double chi2 = 0.0;
    for (int g = 0; g < 31; ++g) {
        int c = 0;
        for (int t = 20 + 31 * g; t < 20 + 31 * (g + 1); ++t) c += counts[static_cast<std::size_t>(t)];
        chi2 += (c - 3100.0) * (c - 3100.0) / 3100.0;
    }
    CHECK(chi2 < 59.7);  // 99.9th percentile, 30 dof

    Rng a(77), b(77);
    sample_timestep(a, s, 0.02, 0.98);
    b.next_u64();
    CHECK(a.next_u64() == b.next_u64());
    CHECK_THROWS_AS(sample_timestep(a, s, 0.5, 0.4), ConfigError);
}

TEST_CASE("noise draw replays from the seed in row-major order") {
    const DiffusionSchedule s = build_schedule();
    GuidanceConfig cfg;
    Rng img_rng(4);
    GuidanceRequest req = make_request(4, 6, 1234, img_rng);
    const NoiseDraw d = draw_noise(req, s, cfg);
    Rng replay(1234);
    const int t = sample_timestep(replay, s, cfg.t_min, cfg.t_max);
    CHECK(d.t == t);
    for (int y = 0; y < 4; ++y)
        for (int x = 0; x < 6; ++x)
            for (int c = 0; c < 3; ++c) CHECK(d.eps.at(y, x, c) == replay.normal());
    req.t = 321;
    const NoiseDraw fixed = draw_noise(req, s, cfg);
    CHECK(fixed.t == 321);
    CHECK(fixed.eps == d.eps);
    req.t = 0;
    CHECK_THROWS_AS(draw_noise(req, s, cfg), std::out_of_range);
}

TEST_CASE("ideal denoiser recovers the injected noise") {
    const DiffusionSchedule s = build_schedule();
    Rng rng(5);
    const Image target = random_image(4, 4, 3, rng);
    const Image e = random_image(4, 4, 3, rng);
    for (int t : {1, 20, 500, 980, 1000}) {
        const Image xt = add_noise(target, t, e, s);
        const Image eps = ideal_denoiser_eps(xt, t, target, s);
        CHECK(testsupport::max_abs_diff(eps.data, e.data) < 1e-8 / s.sigma_at(t) + 1e-12);
    }
}

TEST_CASE("analytic grad agrees with the explicit noising path") {
    const DiffusionSchedule s = build_schedule();
    for (WeightMode mode : {WeightMode::sigma2, WeightMode::uniform}) {
        GuidanceConfig cfg;
        cfg.w_mode = mode;
        Rng rng(6);
        for (int trial = 0; trial < 20; ++trial) {
            GuidanceRequest req = make_request(4, 8, 100 + trial, rng);
            const Image target = random_image(4, 8, 3, rng, 0.0, 1.0);
            const GuidanceResponse resp = analytic_grad(req, target, s, cfg);
            const NoiseDraw d = draw_noise(req, s, cfg);
            const Image xt = add_noise(to_signed(req.image), d.t, d.eps, s);
            const Image eps_hat = ideal_denoiser_eps(xt, d.t, to_signed(target), s);
            const double w = sds_weight(d.t, s, mode);
            CHECK(resp.t_used == d.t);
            CHECK(resp.w_used == w);
            CHECK(resp.diagnostics.at("backend") == "analytic");
            for (std::size_t i = 0; i < resp.grad.size(); ++i) {
                const double oracle = w * (eps_hat.data[i] - d.eps.data[i]) * 2.0;
                CHECK(resp.grad.data[i] == doctest::Approx(oracle).epsilon(1e-7).scale(1.0));
            }
        }
    }
}

TEST_CASE("analytic grad is exactly zero at the target") {
    const DiffusionSchedule s = build_schedule();
    GuidanceConfig cfg;
    Rng rng(7);
    for (int trial = 0; trial < 100; ++trial) {
        GuidanceRequest req = make_request(6, 6, rng.next_u64(), rng);
        if (trial % 2) req.t = 1 + static_cast<int>(rng.uniform() * 1000);
        const GuidanceResponse resp = analytic_grad(req, req.image, s, cfg);
        for (double g : resp.grad.data) CHECK(g == 0.0);
    }
}

TEST_CASE("analytic grad points from the target to the image") {
    const DiffusionSchedule s = build_schedule();
    Rng rng(8);
    GuidanceRequest req = make_request(4, 4, 9, rng);
    const Image target = random_image(4, 4, 3, rng, 0.0, 1.0);
    const GuidanceResponse resp = analytic_grad(req, target, s, GuidanceConfig{});
    for (std::size_t i = 0; i < resp.grad.size(); ++i) {
        const double diff = req.image.data[i] - target.data[i];
        CHECK(resp.grad.data[i] * diff >= 0.0);
    }
}

TEST_CASE("requests are validated") {
    const DiffusionSchedule s = build_schedule();
    Rng rng(9);
    GuidanceRequest req = make_request(4, 4, 1, rng);
    req.control = Image(4, 6, 3);
    CHECK_THROWS_AS(analytic_grad(req, req.image, s, GuidanceConfig{}), GuidanceError);
    req = make_request(3, 4, 1, rng);
    CHECK_THROWS_AS(req.validate(), GuidanceError);
    req = make_request(4, 4, 1, rng);
    CHECK_THROWS_AS(analytic_grad(req, Image(2, 2, 3), s, GuidanceConfig{}), GuidanceError);
}

TEST_CASE("guidance config validation names the key") {
    GuidanceConfig c;
    CHECK_NOTHROW(c.validate());
    c.lambda = 1.5;
    try {
        c.validate();
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(e.key() == "lambda");
    }
    c = {};
    c.cfg_scale = -1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
    c = {};
    c.t_min = 0.9;
    c.t_max = 0.1;
    CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("analytic backend queries its target per rig") {
    int calls = 0;
    const Image target(4, 4, 3, 0.25);
    AnalyticBackend backend(build_schedule(), GuidanceConfig{}, [&](const camera::MultiViewRig&) {
        ++calls;
        return target;
    });
    Rng rng(10);
    GuidanceRequest req = make_request(4, 4, 3, rng);
    backend.guide(req, camera::MultiViewRig{});
    backend.guide(req, camera::MultiViewRig{});
    CHECK(calls == 2);
    CHECK(backend.last_target() == target);
    CHECK(backend.name() == "analytic");
}
