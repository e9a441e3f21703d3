#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "boostdream/camera_rig.hpp"
#include "boostdream/coarse_asset.hpp"
#include "boostdream/rng.hpp"
#include "boostdream/volume_field.hpp"

namespace testsupport {

using namespace boostdream;

inline std::filesystem::path data_path(const std::string& name) { return std::filesystem::path(TEST_DATA_DIR) / name; }

inline CoarseAsset colored_cube() { return load_mesh(data_path("colored_cube.obj")); }

// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
  public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = std::filesystem::temp_directory_path() /
                ("boostdream_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        std::filesystem::remove_all(path_);
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

  private:
    std::filesystem::path path_;
};

// Field with random raw parameters drawn so that densities and colors vary
// over their useful ranges.
inline VoxelField random_field(int n, std::uint64_t seed, double density_scale = 1.0) {
    VoxelField field = init_field(GridShape::cube(n), seed, InitMode::empty);
    Rng rng(seed ^ 0xABCDEFULL);
    for (float& v : field.density_raw) v = static_cast<float>(density_scale * rng.uniform(-1.5, 2.5));
    for (float& v : field.color_raw) v = static_cast<float>(rng.uniform(-2.0, 2.0));
    return field;
}

inline Image random_image(int h, int w, int c, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Image img(h, w, c);
    for (double& v : img.data) v = rng.uniform(lo, hi);
    return img;
}

inline double percentile(std::vector<double> values, double q) {
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double pos = q * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
    return m;
}

}  // namespace testsupport
