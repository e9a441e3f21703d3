#include "boostdream/guidance.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "boostdream/errors.hpp"

namespace boostdream::guidance {

void DiffusionSchedule::check_timestep(int t) const {
    if (t < 1 || t > steps) {
        throw std::out_of_range("timestep " + std::to_string(t) + " outside [1, " + std::to_string(steps) + "]");
    }
}

DiffusionSchedule build_schedule(int steps, double beta_start, double beta_end) {
    if (steps < 2) throw ConfigError("diffusion_steps", "must be >= 2");
    if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
        throw ConfigError("beta_range", "need 0 < beta_start <= beta_end < 1");
    }
    DiffusionSchedule s;
    s.steps = steps;
    s.beta.resize(static_cast<std::size_t>(steps));
    s.alpha_bar.resize(static_cast<std::size_t>(steps));
    s.sigma.resize(static_cast<std::size_t>(steps));
    double prod = 1.0;
    for (int i = 0; i < steps; ++i) {
        const double frac = static_cast<double>(i) / static_cast<double>(steps - 1);
        const double beta = beta_start + frac * (beta_end - beta_start);
        prod *= 1.0 - beta;
        s.beta[static_cast<std::size_t>(i)] = beta;
        s.alpha_bar[static_cast<std::size_t>(i)] = prod;
        s.sigma[static_cast<std::size_t>(i)] = std::sqrt(1.0 - prod);
    }
    return s;
}

WeightMode parse_weight_mode(const std::string& name) {
    if (name == "sigma2") return WeightMode::sigma2;
    if (name == "uniform") return WeightMode::uniform;
    throw ConfigError("w_mode", "unknown weighting '" + name + "' (expected sigma2 or uniform)");
}

std::string to_string(WeightMode mode) { return mode == WeightMode::sigma2 ? "sigma2" : "uniform"; }

void GuidanceConfig::validate() const {
    if (!(lambda >= 0.0 && lambda <= 1.0)) throw ConfigError("lambda", "must lie in [0, 1]");
    if (!(cfg_scale >= 0.0)) throw ConfigError("cfg_scale", "must be >= 0");
    if (!(t_min > 0.0 && t_max < 1.0 && t_min < t_max)) throw ConfigError("t_range", "need 0 < t_min < t_max < 1");
}

void GuidanceRequest::validate() const {
    if (image.channels != 3 || !image.same_shape(control)) {
        throw GuidanceError("guidance image and control must both be H x W x 3 with equal shape");
    }
    if (image.height % 2 != 0 || image.width % 2 != 0 || image.height == 0) {
        throw GuidanceError("guidance composite dimensions must be even");
    }
}

Image add_noise(const Image& x0, int t, const Image& eps, const DiffusionSchedule& schedule) {
    if (!x0.same_shape(eps)) throw std::invalid_argument("add_noise: shape mismatch");
    const double ab = schedule.alpha_bar_at(t);
    const double a = std::sqrt(ab);
    const double b = std::sqrt(1.0 - ab);
    Image out = x0;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = a * x0.data[i] + b * eps.data[i];
    return out;
}

Image cfg_compose(const Image& eps_cond, const Image& eps_uncond, double s) {
    if (!eps_cond.same_shape(eps_uncond)) throw std::invalid_argument("cfg_compose: shape mismatch");
    if (!(s >= 0.0)) throw std::invalid_argument("cfg_compose: guidance scale must be >= 0");
    Image out = eps_cond;
    for (std::size_t i = 0; i < out.size(); ++i) {
        out.data[i] = eps_cond.data[i] + s * (eps_cond.data[i] - eps_uncond.data[i]);
    }
    return out;
}

double sds_weight(int t, const DiffusionSchedule& schedule, WeightMode mode) {
    schedule.check_timestep(t);
    switch (mode) {
        case WeightMode::sigma2:
            return 1.0 - schedule.alpha_bar_at(t);
        case WeightMode::uniform:
            return 1.0;
    }
    throw ConfigError("w_mode", "unknown weighting");
}

int sample_timestep(Rng& rng, const DiffusionSchedule& schedule, double t_min, double t_max) {
    const int lo = std::max(1, static_cast<int>(std::lround(t_min * schedule.steps)));
    const int hi = std::min(schedule.steps, static_cast<int>(std::lround(t_max * schedule.steps)));
    if (hi < lo) throw ConfigError("t_range", "empty timestep range");
    const int t = lo + static_cast<int>(std::floor(rng.uniform() * (hi - lo + 1)));
    return std::min(t, hi);
}

Image to_signed(const Image& unit) {
    Image out = unit;
    for (double& v : out.data) v = 2.0 * v - 1.0;
    return out;
}

NoiseDraw draw_noise(const GuidanceRequest& request, const DiffusionSchedule& schedule, const GuidanceConfig& config) {
    Rng rng(request.seed);
    NoiseDraw d;
    // The timestep draw is always consumed so eps is the same stream whether
    // or not t was fixed by the caller.
    const int sampled = sample_timestep(rng, schedule, config.t_min, config.t_max);
    d.t = request.t ? *request.t : sampled;
    schedule.check_timestep(d.t);
    d.eps = Image(request.image.height, request.image.width, request.image.channels);
    for (double& v : d.eps.data) v = rng.normal();
    return d;
}

Image ideal_denoiser_eps(const Image& x_t, int t, const Image& signed_target, const DiffusionSchedule& schedule) {
    if (!x_t.same_shape(signed_target)) throw std::invalid_argument("ideal_denoiser_eps: shape mismatch");
    const double a = std::sqrt(schedule.alpha_bar_at(t));
    const double sigma = schedule.sigma_at(t);
    Image out = x_t;
    for (std::size_t i = 0; i < out.size(); ++i) out.data[i] = (x_t.data[i] - a * signed_target.data[i]) / sigma;
    return out;
}

GuidanceResponse analytic_grad(const GuidanceRequest& request, const Image& target, const DiffusionSchedule& schedule,
                               const GuidanceConfig& config) {
    request.validate();
    if (!target.same_shape(request.image)) throw GuidanceError("analytic target shape does not match composite");
    const NoiseDraw draw = draw_noise(request, schedule, config);
    const double w = sds_weight(draw.t, schedule, config.w_mode);
    const double ratio = std::sqrt(schedule.alpha_bar_at(draw.t)) / schedule.sigma_at(draw.t);
    const Image x0 = to_signed(request.image);
    const Image y = to_signed(target);

    GuidanceResponse resp;
    resp.grad = Image(request.image.height, request.image.width, 3);
    for (std::size_t i = 0; i < resp.grad.size(); ++i) {
        // eps* - eps; the factor 2 is d(x0')/d(image).
        const double residual = ratio * (x0.data[i] - y.data[i]);
        resp.grad.data[i] = w * residual * 2.0;
    }
    resp.t_used = draw.t;
    resp.w_used = w;
    resp.diagnostics["backend"] = "analytic";
    return resp;
}

GuidanceResponse AnalyticBackend::guide(const GuidanceRequest& request, const camera::MultiViewRig& rig) {
    last_target_ = target_(rig);
    return analytic_grad(request, last_target_, schedule_, config_);
}

}  // namespace boostdream::guidance
