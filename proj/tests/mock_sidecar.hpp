#pragma once

// Test-only stand-in for the diffusion sidecar in "mock" mode: the ideal
// denoiser for a fixed target composite, served over the real wire protocol.

#include <atomic>
#include <functional>
#include <mutex>
#include <string>
#include <thread>

#include <httplib.h>

#include "boostdream/guidance.hpp"
#include "boostdream/wire.hpp"

namespace testsupport {

class MockSidecar {
  public:
    explicit MockSidecar(boostdream::Image target) : target_(std::move(target)) {
        using namespace boostdream;
        server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
            if (health_status_ != 200) {
                res.status = health_status_;
                res.set_content("loading", "text/plain");
                return;
            }
            res.set_content(R"({"status":"ok","mode":"mock"})", "application/json");
        });
        server_.Post("/v1/grad", [this](const httplib::Request& req, httplib::Response& res) {
            ++grad_calls_;
            if (fail_next_ > 0) {
                --fail_next_;
                res.status = fail_status_;
                res.set_content(R"({"error":"injected failure"})", "application/json");
                return;
            }
            try {
                guidance::WeightMode mode = guidance::WeightMode::sigma2;
                const guidance::GuidanceRequest r = wire::decode_grad_request(wire::json::parse(req.body), &mode);
                guidance::GuidanceConfig cfg;
                cfg.w_mode = mode;
                guidance::GuidanceResponse out = guidance::analytic_grad(r, target_for(r.image), schedule_, cfg);
                if (corrupt_) corrupt_(out.grad);
                res.set_content(wire::encode_grad_response(out).dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(wire::json{{"error", e.what()}}.dump(), "application/json");
            }
        });
        server_.Post("/v1/eps", [this](const httplib::Request& req, httplib::Response& res) {
            ++eps_calls_;
            try {
                const wire::EpsRequest r = wire::decode_eps_request(wire::json::parse(req.body));
                if (r.t < 1 || r.t > schedule_.steps) {
                    res.status = 422;
                    res.set_content(R"({"error":"t out of range"})", "application/json");
                    return;
                }
                wire::EpsResponse out;
                out.eps_cond = guidance::ideal_denoiser_eps(r.x_t, r.t, guidance::to_signed(target_for(r.x_t)), schedule_);
                out.eps_uncond = uncond_offset_ == 0.0 ? out.eps_cond : shifted(out.eps_cond, uncond_offset_);
                res.set_content(wire::encode_eps_response(out).dump(), "application/json");
            } catch (const std::exception& e) {
                res.status = 400;
                res.set_content(wire::json{{"error", e.what()}}.dump(), "application/json");
            }
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~MockSidecar() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_); }

    void set_health_status(int status) { health_status_ = status; }
    void fail_next(int count, int status = 500) {
        fail_status_ = status;
        fail_next_ = count;
    }
    void set_corruption(std::function<void(boostdream::Image&)> f) { corrupt_ = std::move(f); }
    // eps_uncond = eps_cond + offset, so classifier-free guidance is visible.
    void set_uncond_offset(double offset) { uncond_offset_ = offset; }
    void set_target(boostdream::Image target) {
        std::lock_guard<std::mutex> lock(mutex_);
        target_ = std::move(target);
    }

    int grad_calls() const { return grad_calls_; }
    int eps_calls() const { return eps_calls_; }

  private:
    boostdream::Image target_for(const boostdream::Image& like) {
        std::lock_guard<std::mutex> lock(mutex_);
        if (!target_.same_shape(like)) throw std::invalid_argument("image: shape does not match the mock target");
        return target_;
    }

    static boostdream::Image shifted(boostdream::Image img, double d) {
        for (double& v : img.data) v += d;
        return img;
    }

    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::mutex mutex_;
    boostdream::Image target_;
    boostdream::guidance::DiffusionSchedule schedule_ = boostdream::guidance::build_schedule();
    std::atomic<int> health_status_{200};
    std::atomic<int> fail_next_{0};
    std::atomic<int> fail_status_{500};
    std::atomic<int> grad_calls_{0};
    std::atomic<int> eps_calls_{0};
    std::atomic<double> uncond_offset_{0.0};
    std::function<void(boostdream::Image&)> corrupt_;
};

// A port with nothing listening on it.
inline std::string dead_endpoint() {
    httplib::Server probe;
    const int port = probe.bind_to_any_port("127.0.0.1");
    return "http://127.0.0.1:" + std::to_string(port);
}

}  // namespace testsupport
