#include "boostdream/image.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace boostdream {

namespace {
void require_same_shape(const Image& a, const Image& b) {
    if (!a.same_shape(b)) {
        throw std::invalid_argument("image shape mismatch");
    }
}
}  // namespace

double mean_squared_error(const Image& a, const Image& b) {
    require_same_shape(a, b);
    if (a.size() == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double d = a.data[i] - b.data[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

double mean_abs_error(const Image& a, const Image& b) {
    require_same_shape(a, b);
    if (a.size() == 0) return 0.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a.data[i] - b.data[i]);
    return acc / static_cast<double>(a.size());
}

double psnr(const Image& a, const Image& b) {
    const double mse = mean_squared_error(a, b);
    if (mse == 0.0) return std::numeric_limits<double>::infinity();
    return -10.0 * std::log10(mse);
}

double l2_norm(const Image& a) {
    double acc = 0.0;
    for (double v : a.data) acc += v * v;
    return std::sqrt(acc);
}

bool all_finite(const Image& a) {
    for (double v : a.data) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

}  // namespace boostdream
