#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "boostdream/camera_rig.hpp"
#include "boostdream/image.hpp"
#include "boostdream/rng.hpp"

// Diffusion-side math and the guidance backend contract: given the color
// composite G and the normal composite N, a backend returns dL/dG.
namespace boostdream::guidance {

// DDPM tables, 1-based in t: alpha_bar(t) = prod_{j<=t} (1 - beta_j).
struct DiffusionSchedule {
    int steps = 0;
    std::vector<double> beta;
    std::vector<double> alpha_bar;
    std::vector<double> sigma;  // sqrt(1 - alpha_bar)

    // Throws std::out_of_range unless 1 <= t <= steps.
    void check_timestep(int t) const;
    double alpha_bar_at(int t) const {
        check_timestep(t);
        return alpha_bar[static_cast<std::size_t>(t - 1)];
    }
    double sigma_at(int t) const {
        check_timestep(t);
        return sigma[static_cast<std::size_t>(t - 1)];
    }
};

// Linear beta schedule. Throws ConfigError on invalid bounds.
DiffusionSchedule build_schedule(int steps = 1000, double beta_start = 1e-4, double beta_end = 2e-2);

enum class WeightMode {
    sigma2,   // w(t) = 1 - alpha_bar(t)
    uniform,  // w(t) = 1
};

WeightMode parse_weight_mode(const std::string& name);
std::string to_string(WeightMode mode);

struct GuidanceConfig {
    double lambda = 1.0;     // control strength in [0, 1]
    double cfg_scale = 7.5;  // classifier-free guidance scale s >= 0
    std::string prompt;
    double t_min = 0.02;  // fractions of the schedule length
    double t_max = 0.98;
    WeightMode w_mode = WeightMode::sigma2;

    void validate() const;
};

struct GuidanceRequest {
    Image image;    // composite G, H x W x 3 in [0, 1]
    Image control;  // normal composite N, same shape
    std::string prompt;
    double lambda = 1.0;
    double cfg_scale = 7.5;
    std::optional<int> t;
    std::uint64_t seed = 0;

    // Throws GuidanceError when shapes disagree or H, W are odd.
    void validate() const;
};

struct GuidanceResponse {
    Image grad;  // dL/dG, already including w(t)
    int t_used = 0;
    double w_used = 0.0;
    std::map<std::string, std::string> diagnostics;
};

// x_t = sqrt(alpha_bar) x0 + sqrt(1 - alpha_bar) eps.
Image add_noise(const Image& x0, int t, const Image& eps, const DiffusionSchedule& schedule);

// eps_hat = eps_cond + s (eps_cond - eps_uncond).
Image cfg_compose(const Image& eps_cond, const Image& eps_uncond, double s);

double sds_weight(int t, const DiffusionSchedule& schedule, WeightMode mode);

// Uniform integer timestep in [max(1, round(t_min T)), min(T, round(t_max T))].
int sample_timestep(Rng& rng, const DiffusionSchedule& schedule, double t_min, double t_max);

// [0, 1] -> [-1, 1].
Image to_signed(const Image& unit);

// The (t, eps) draw for a request: Rng(request.seed), one uniform for the
// timestep (consumed even when request.t overrides it), then eps in
// row-major order. Shared by every
// backend so the mock sidecar can replay it.
struct NoiseDraw {
    int t = 0;
    Image eps;
};
NoiseDraw draw_noise(const GuidanceRequest& request, const DiffusionSchedule& schedule, const GuidanceConfig& config);

// Noise prediction of the ideal denoiser for a point-mass data distribution
// at target (given in [-1, 1]): (x_t - sqrt(alpha_bar) target) / sqrt(1 - alpha_bar).
Image ideal_denoiser_eps(const Image& x_t, int t, const Image& signed_target, const DiffusionSchedule& schedule);

// Desk-scale guidance: w(t) (eps* - eps) * 2 with eps* the ideal denoiser
// for `target` (in [0, 1]). The residual is evaluated in its reduced form
// sqrt(alpha_bar)/sigma * (x0' - target'), which is algebraically identical
// and vanishes exactly when image == target. Control and prompt are ignored.
GuidanceResponse analytic_grad(const GuidanceRequest& request, const Image& target, const DiffusionSchedule& schedule,
                               const GuidanceConfig& config);

class GuidanceBackend {
  public:
    virtual ~GuidanceBackend() = default;
    // The rig the composite was rendered from; backends that need a
    // view-dependent target use it, others ignore it.
    virtual GuidanceResponse guide(const GuidanceRequest& request, const camera::MultiViewRig& rig) = 0;
    virtual std::string name() const = 0;
};

// Produces the target composite for the rig of the current iteration.
using TargetProvider = std::function<Image(const camera::MultiViewRig&)>;

class AnalyticBackend final : public GuidanceBackend {
  public:
    AnalyticBackend(DiffusionSchedule schedule, GuidanceConfig config, TargetProvider target)
        : schedule_(std::move(schedule)), config_(std::move(config)), target_(std::move(target)) {}

    GuidanceResponse guide(const GuidanceRequest& request, const camera::MultiViewRig& rig) override;
    std::string name() const override { return "analytic"; }

    // Target of the most recent guide() call.
    const Image& last_target() const { return last_target_; }

  private:
    DiffusionSchedule schedule_;
    GuidanceConfig config_;
    TargetProvider target_;
    Image last_target_;
};

}  // namespace boostdream::guidance
