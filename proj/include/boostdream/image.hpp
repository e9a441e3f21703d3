#pragma once

#include <cstddef>
#include <vector>

namespace boostdream {

// Dense H x W x C image of doubles, row-major with interleaved channels.
// Row 0 is the top of the image.
struct Image {
    int height = 0;
    int width = 0;
    int channels = 0;
    std::vector<double> data;

    Image() = default;
    Image(int h, int w, int c, double fill = 0.0)
        : height(h), width(w), channels(c), data(static_cast<std::size_t>(h) * w * c, fill) {}

    std::size_t size() const noexcept { return data.size(); }
    std::size_t pixel_count() const noexcept { return static_cast<std::size_t>(height) * width; }

    std::size_t offset(int y, int x, int c = 0) const noexcept {
        return (static_cast<std::size_t>(y) * width + x) * channels + c;
    }
    double& at(int y, int x, int c = 0) noexcept { return data[offset(y, x, c)]; }
    double at(int y, int x, int c = 0) const noexcept { return data[offset(y, x, c)]; }

    bool same_shape(const Image& other) const noexcept {
        return height == other.height && width == other.width && channels == other.channels;
    }

    friend bool operator==(const Image&, const Image&) = default;
};

// Mean squared error over all entries. Shapes must match.
double mean_squared_error(const Image& a, const Image& b);
double mean_abs_error(const Image& a, const Image& b);
// Peak signal-to-noise ratio for unit-range images; +inf when identical.
double psnr(const Image& a, const Image& b);
double l2_norm(const Image& a);
bool all_finite(const Image& a);

}  // namespace boostdream
