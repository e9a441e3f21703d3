#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace boostdream {

using Vec3 = Eigen::Vector3d;

struct Aabb {
    Vec3 min = Vec3::Constant(-1.0);
    Vec3 max = Vec3::Constant(1.0);

    Vec3 extent() const { return max - min; }
};

struct GridShape {
    int nx = 0;
    int ny = 0;
    int nz = 0;

    std::size_t voxel_count() const noexcept {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
    }
    static GridShape cube(int n) { return {n, n, n}; }

    friend bool operator==(const GridShape&, const GridShape&) = default;
};

// Dense voxel radiance field. Values live on grid vertices spanning bbox;
// voxel (i, j, k) sits at bbox.min + (i, j, k) * spacing. Storage is x-fastest.
//
// density_raw holds pre-activation values rho (sigma = softplus(rho)),
// color_raw holds 3 interleaved pre-activation channels (c = sigmoid(.)).
struct VoxelField {
    GridShape shape;
    Aabb bbox;
    std::vector<float> density_raw;
    std::vector<float> color_raw;

    VoxelField() = default;
    VoxelField(GridShape s, Aabb box = {});

    std::size_t index(int i, int j, int k) const noexcept {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(shape.nx) * (static_cast<std::size_t>(j) + static_cast<std::size_t>(shape.ny) * static_cast<std::size_t>(k));
    }
    Vec3 voxel_position(int i, int j, int k) const;
    Vec3 spacing() const;

    // Throws std::invalid_argument when shape or array sizes are inconsistent
    // or any stored value is non-finite.
    void validate() const;

    friend bool operator==(const VoxelField& a, const VoxelField& b) {
        return a.shape == b.shape && a.bbox.min == b.bbox.min && a.bbox.max == b.bbox.max &&
               a.density_raw == b.density_raw && a.color_raw == b.color_raw;
    }
};

double softplus(double x);
double sigmoid(double x);
// Inverse of softplus for y > 0.
double softplus_inverse(double y);

enum class InitMode {
    blob,   // faint Gaussian density blob at the center of the box
    empty,  // sigma ~ 0 everywhere
};

InitMode parse_init_mode(const std::string& name);

// Peak density and radius of the initial blob (world units).
inline constexpr double kInitBlobDensity = 1.0;
inline constexpr double kInitBlobRadius = 0.35;

VoxelField init_field(GridShape shape, std::uint64_t seed, InitMode mode = InitMode::blob, Aabb bbox = {});

// Gradient of a scalar loss with respect to the raw field parameters.
struct FieldGradient {
    std::vector<double> d_density_raw;
    std::vector<double> d_color_raw;

    FieldGradient() = default;
    explicit FieldGradient(const VoxelField& field)
        : d_density_raw(field.density_raw.size(), 0.0), d_color_raw(field.color_raw.size(), 0.0) {}

    FieldGradient& operator+=(const FieldGradient& other);
    FieldGradient& operator*=(double s);
    bool is_zero() const;
    double max_abs() const;
};

struct AdamState {
    std::vector<double> m_density, v_density;
    std::vector<double> m_color, v_color;
    std::int64_t step = 0;
};

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.99;
    double epsilon = 1e-8;
};

// One in-place Adam step. Throws NumericError naming the first non-finite
// gradient entry; the field and state are left untouched in that case.
void apply_update(VoxelField& field, const FieldGradient& grad, AdamState& state, double lr,
                  const AdamParams& params = {});

// BDF1 checkpoint format (little-endian):
//   "BDF1" | u32 nx, ny, nz | u32 flags (0) | f64 bbox min xyz, max xyz |
//   f32 density_raw[nx*ny*nz] | f32 color_raw[3*nx*ny*nz]
void save_field(const VoxelField& field, const std::filesystem::path& path);
// Throws FormatError on bad magic, unsupported flags, bad shape or truncation.
VoxelField load_field(const std::filesystem::path& path);
// As above, additionally rejecting files whose resolution differs from expected.
VoxelField load_field(const std::filesystem::path& path, GridShape expected);

}  // namespace boostdream
