#include "boostdream/volume_field.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "boostdream/errors.hpp"
#include "boostdream/rng.hpp"

namespace boostdream {

VoxelField::VoxelField(GridShape s, Aabb box)
    : shape(s), bbox(box), density_raw(s.voxel_count(), 0.0f), color_raw(3 * s.voxel_count(), 0.0f) {
    if (s.nx < 2 || s.ny < 2 || s.nz < 2) {
        throw std::invalid_argument("field resolution must be >= 2 on every axis");
    }
}

Vec3 VoxelField::spacing() const {
    return bbox.extent().cwiseQuotient(Vec3(shape.nx - 1, shape.ny - 1, shape.nz - 1));
}

Vec3 VoxelField::voxel_position(int i, int j, int k) const {
    return bbox.min + Vec3(i, j, k).cwiseProduct(spacing());
}

void VoxelField::validate() const {
    if (shape.nx < 2 || shape.ny < 2 || shape.nz < 2) {
        throw std::invalid_argument("field resolution must be >= 2 on every axis");
    }
    if (density_raw.size() != shape.voxel_count() || color_raw.size() != 3 * shape.voxel_count()) {
        throw std::invalid_argument("field parameter arrays do not match resolution");
    }
    if (!((bbox.max - bbox.min).array() > 0.0).all()) {
        throw std::invalid_argument("field bbox is empty");
    }
    auto finite = [](float v) { return std::isfinite(v); };
    if (!std::all_of(density_raw.begin(), density_raw.end(), finite) ||
        !std::all_of(color_raw.begin(), color_raw.end(), finite)) {
        throw std::invalid_argument("field contains non-finite parameters");
    }
}

double softplus(double x) {
    if (x > 30.0) return x;
    return std::log1p(std::exp(x));
}

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus_inverse(double y) {
    if (y > 30.0) return y;
    return std::log(std::expm1(y));
}

InitMode parse_init_mode(const std::string& name) {
    if (name == "blob") return InitMode::blob;
    if (name == "empty") return InitMode::empty;
    throw ConfigError("init_mode", "unknown init mode '" + name + "'");
}

VoxelField init_field(GridShape shape, std::uint64_t seed, InitMode mode, Aabb bbox) {
    VoxelField field(shape, bbox);
    Rng rng(seed);
    const Vec3 center = 0.5 * (bbox.min + bbox.max);
    for (int k = 0; k < shape.nz; ++k) {
        for (int j = 0; j < shape.ny; ++j) {
            for (int i = 0; i < shape.nx; ++i) {
                const std::size_t v = field.index(i, j, k);
                double rho;
                if (mode == InitMode::empty) {
                    rho = -100.0;
                } else {
                    const double r2 = (field.voxel_position(i, j, k) - center).squaredNorm();
                    const double sigma = kInitBlobDensity * std::exp(-r2 / (2.0 * kInitBlobRadius * kInitBlobRadius));
                    rho = std::max(softplus_inverse(std::max(sigma, 1e-300)), -10.0) + 0.1 * rng.normal();
                }
                field.density_raw[v] = static_cast<float>(rho);
                for (int c = 0; c < 3; ++c) {
                    field.color_raw[3 * v + c] = mode == InitMode::empty ? 0.0f : static_cast<float>(0.1 * rng.normal());
                }
            }
        }
    }
    return field;
}

FieldGradient& FieldGradient::operator+=(const FieldGradient& other) {
    if (other.d_density_raw.size() != d_density_raw.size() || other.d_color_raw.size() != d_color_raw.size()) {
        throw std::invalid_argument("field gradient shape mismatch");
    }
    for (std::size_t i = 0; i < d_density_raw.size(); ++i) d_density_raw[i] += other.d_density_raw[i];
    for (std::size_t i = 0; i < d_color_raw.size(); ++i) d_color_raw[i] += other.d_color_raw[i];
    return *this;
}

FieldGradient& FieldGradient::operator*=(double s) {
    for (double& g : d_density_raw) g *= s;
    for (double& g : d_color_raw) g *= s;
    return *this;
}

bool FieldGradient::is_zero() const {
    auto zero = [](double g) { return g == 0.0; };
    return std::all_of(d_density_raw.begin(), d_density_raw.end(), zero) &&
           std::all_of(d_color_raw.begin(), d_color_raw.end(), zero);
}

double FieldGradient::max_abs() const {
    double m = 0.0;
    for (double g : d_density_raw) m = std::max(m, std::abs(g));
    for (double g : d_color_raw) m = std::max(m, std::abs(g));
    return m;
}

namespace {

void check_finite(const std::vector<double>& g, const char* name) {
    for (std::size_t i = 0; i < g.size(); ++i) {
        if (!std::isfinite(g[i])) {
            throw NumericError(std::string("non-finite gradient in ") + name + " at index " + std::to_string(i) +
                               " (value " + std::to_string(g[i]) + ")");
        }
    }
}

void adam_block(std::vector<float>& params, const std::vector<double>& grad, std::vector<double>& m,
                std::vector<double>& v, double lr, const AdamParams& p, double bias1, double bias2) {
    for (std::size_t i = 0; i < params.size(); ++i) {
        const double g = grad[i];
        m[i] = p.beta1 * m[i] + (1.0 - p.beta1) * g;
        v[i] = p.beta2 * v[i] + (1.0 - p.beta2) * g * g;
        const double m_hat = m[i] / bias1;
        const double v_hat = v[i] / bias2;
        params[i] = static_cast<float>(params[i] - lr * m_hat / (std::sqrt(v_hat) + p.epsilon));
    }
}

}  // namespace

void apply_update(VoxelField& field, const FieldGradient& grad, AdamState& state, double lr, const AdamParams& params) {
    if (grad.d_density_raw.size() != field.density_raw.size() || grad.d_color_raw.size() != field.color_raw.size()) {
        throw std::invalid_argument("gradient shape does not match field");
    }
    check_finite(grad.d_density_raw, "d_density_raw");
    check_finite(grad.d_color_raw, "d_color_raw");
    if (state.m_density.size() != field.density_raw.size()) {
        state = AdamState{};
        state.m_density.assign(field.density_raw.size(), 0.0);
        state.v_density.assign(field.density_raw.size(), 0.0);
        state.m_color.assign(field.color_raw.size(), 0.0);
        state.v_color.assign(field.color_raw.size(), 0.0);
    }
    ++state.step;
    const double bias1 = 1.0 - std::pow(params.beta1, static_cast<double>(state.step));
    const double bias2 = 1.0 - std::pow(params.beta2, static_cast<double>(state.step));
    adam_block(field.density_raw, grad.d_density_raw, state.m_density, state.v_density, lr, params, bias1, bias2);
    adam_block(field.color_raw, grad.d_color_raw, state.m_color, state.v_color, lr, params, bias1, bias2);
}

// ---------------------------------------------------------------------------
// BDF1 I/O

namespace {

constexpr std::array<char, 4> kMagic{'B', 'D', 'F', '1'};

template <typename T>
T to_little(T v) {
    if constexpr (std::endian::native == std::endian::big) {
        auto bytes = std::bit_cast<std::array<unsigned char, sizeof(T)>>(v);
        std::reverse(bytes.begin(), bytes.end());
        return std::bit_cast<T>(bytes);
    } else {
        return v;
    }
}

template <typename T>
void write_le(std::ostream& os, T v) {
    v = to_little(v);
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_le(std::istream& is, const char* what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
        throw FormatError(std::string("truncated field file while reading ") + what);
    }
    return to_little(v);
}

void read_floats(std::istream& is, std::vector<float>& out, const char* what) {
    if (!is.read(reinterpret_cast<char*>(out.data()), static_cast<std::streamsize>(out.size() * sizeof(float)))) {
        throw FormatError(std::string("truncated field file in array ") + what);
    }
    if constexpr (std::endian::native == std::endian::big) {
        for (float& f : out) f = to_little(f);
    }
}

void write_floats(std::ostream& os, const std::vector<float>& in) {
    if constexpr (std::endian::native == std::endian::big) {
        for (float f : in) write_le(os, f);
    } else {
        os.write(reinterpret_cast<const char*>(in.data()), static_cast<std::streamsize>(in.size() * sizeof(float)));
    }
}

}  // namespace

void save_field(const VoxelField& field, const std::filesystem::path& path) {
    field.validate();
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw Error("cannot open " + path.string() + " for writing");
    os.write(kMagic.data(), kMagic.size());
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(field.shape.nx));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(field.shape.ny));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(field.shape.nz));
    write_le<std::uint32_t>(os, 0u);
    for (int a = 0; a < 3; ++a) write_le<double>(os, field.bbox.min[a]);
    for (int a = 0; a < 3; ++a) write_le<double>(os, field.bbox.max[a]);
    write_floats(os, field.density_raw);
    write_floats(os, field.color_raw);
    if (!os) throw Error("failed writing " + path.string());
}

VoxelField load_field(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw FormatError("cannot open field file " + path.string());
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), magic.size()) || magic != kMagic) {
        throw FormatError("bad magic in field file " + path.string());
    }
    GridShape shape;
    shape.nx = static_cast<int>(read_le<std::uint32_t>(is, "resolution"));
    shape.ny = static_cast<int>(read_le<std::uint32_t>(is, "resolution"));
    shape.nz = static_cast<int>(read_le<std::uint32_t>(is, "resolution"));
    const auto flags = read_le<std::uint32_t>(is, "flags");
    if (flags != 0) throw FormatError("unsupported field flags " + std::to_string(flags));
    if (shape.nx < 2 || shape.ny < 2 || shape.nz < 2 || shape.voxel_count() > (std::size_t{1} << 30)) {
        throw FormatError("invalid field resolution");
    }
    Aabb box;
    for (int a = 0; a < 3; ++a) box.min[a] = read_le<double>(is, "bbox");
    for (int a = 0; a < 3; ++a) box.max[a] = read_le<double>(is, "bbox");
    if (!((box.max - box.min).array() > 0.0).all()) throw FormatError("empty bbox in field file");
    VoxelField field(shape, box);
    read_floats(is, field.density_raw, "density_raw");
    read_floats(is, field.color_raw, "color_raw");
    return field;
}

VoxelField load_field(const std::filesystem::path& path, GridShape expected) {
    VoxelField field = load_field(path);
    if (!(field.shape == expected)) {
        throw FormatError("field resolution mismatch: file has " + std::to_string(field.shape.nx) + "x" +
                          std::to_string(field.shape.ny) + "x" + std::to_string(field.shape.nz) + ", expected " +
                          std::to_string(expected.nx) + "x" + std::to_string(expected.ny) + "x" +
                          std::to_string(expected.nz));
    }
    return field;
}

}  // namespace boostdream
