#include <doctest.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "boostdream/coarse_asset.hpp"
#include "boostdream/errors.hpp"
#include "boostdream/render.hpp"
#include "support.hpp"

using namespace boostdream;
using namespace boostdream::camera;
using testsupport::TempDir;

namespace {

void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    out << s;
}

CameraPose axis_pose(const Vec3& position, double fov, int size) { return look_at_origin(position, fov, size); }

// Square at x = x0 spanning [-s, s]^2 in y and z, in normalized coordinates
// (the loader rescales, so the caller provides a reference box vertex).
CoarseAsset plane_x(double x0, double s) {
    CoarseAsset a;
    a.vertices = {Vec3(x0, -s, -s), Vec3(x0, s, -s), Vec3(x0, s, s), Vec3(x0, -s, s)};
    a.triangles = {{0, 1, 2}, {0, 2, 3}};
    a.vertex_colors.assign(4, Vec3(0.3, 0.6, 0.9));
    a.vertex_normals = compute_vertex_normals(a.vertices, a.triangles);
    return a;
}

}  // namespace

TEST_CASE("unit cube OBJ loads as 8 vertices and 12 triangles, centered and normalized") {
    const CoarseAsset a = load_mesh(testsupport::data_path("unit_cube.obj"));
    CHECK(a.vertices.size() == 8);
    CHECK(a.triangles.size() == 12);
    Vec3 lo = Vec3::Constant(1e9), hi = Vec3::Constant(-1e9);
    for (const Vec3& v : a.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    CHECK((lo - Vec3::Constant(-0.9)).norm() < 1e-12);
    CHECK((hi - Vec3::Constant(0.9)).norm() < 1e-12);
    for (const Vec3& n : a.vertex_normals) CHECK(std::abs(n.norm() - 1.0) < 1e-4);
    for (const Vec3& c : a.vertex_colors) CHECK((c - kDefaultVertexColor).norm() == 0.0);
    // Corner normals of a closed cube point outward (area weighting biases
    // them toward faces whose both triangles touch the corner).
    for (std::size_t i = 0; i < a.vertices.size(); ++i) CHECK(a.vertex_normals[i].dot(a.vertices[i].normalized()) > 0.9);
}

TEST_CASE("normalization uses one scale for all axes") {
    CoarseAsset a = plane_x(0.0, 1.0);
    a.vertices.push_back(Vec3(4.0, 0.0, 0.0));
    a.vertex_colors.push_back(Vec3::Zero());
    a.vertex_normals.push_back(Vec3::UnitX());
    normalize_to_box(a, 0.9);
    // x extent 4 maps to 1.8, so y extent 2 maps to 0.9.
    CHECK(a.vertices[0].x() == doctest::Approx(-0.9));
    CHECK(a.vertices[1].y() == doctest::Approx(0.45));
    CHECK(a.vertices[0].y() == doctest::Approx(-0.45));
}

TEST_CASE("area-weighted vertex normals") {
    // Two triangles sharing vertex 0: a large one in the xy plane and a small
    // one in the xz plane.
    const std::vector<Vec3> v = {Vec3(0, 0, 0), Vec3(2, 0, 0), Vec3(0, 2, 0), Vec3(0.1, 0, 0), Vec3(0, 0, 0.1)};
    const std::vector<std::array<int, 3>> t = {{0, 1, 2}, {0, 4, 3}};
    const auto n = compute_vertex_normals(v, t);
    const Vec3 expected = (Vec3(0, 0, 2.0) + Vec3(0, 0.005, 0)).normalized();
    CHECK((n[0] - expected).norm() < 1e-12);
    CHECK((n[1] - Vec3::UnitZ()).norm() < 1e-12);
}

TEST_CASE("OBJ colors, normals, polygons, slashes and negative indices") {
    TempDir dir("obj");
    write_text(dir / "m.obj",
               "# quad with colors\n"
               "v -1 -1 0 1 0 0\n"
               "v 1 -1 0 0 1 0\n"
               "v 1 1 0 0 0 1\n"
               "v -1 1 0 1.5 1 -0.2\n"
               "vt 0 0\n"
               "vn 0 0 1\n"
               "f 1/1/1 2//1 -2/1/1 -1\n");
    const CoarseAsset a = load_mesh(dir / "m.obj");
    CHECK(a.vertices.size() == 4);
    REQUIRE(a.triangles.size() == 2);
    CHECK(a.triangles[0] == std::array<int, 3>{0, 1, 2});
    CHECK(a.triangles[1] == std::array<int, 3>{0, 2, 3});
    CHECK((a.vertex_colors[1] - Vec3(0, 1, 0)).norm() == 0.0);
    CHECK((a.vertex_colors[3] - Vec3(1, 1, 0)).norm() == 0.0);  // clamped
    for (const Vec3& n : a.vertex_normals) CHECK((n - Vec3::UnitZ()).norm() < 1e-12);
}

TEST_CASE("ascii PLY with uchar colors") {
    TempDir dir("ply_ascii");
    write_text(dir / "m.ply",
               "ply\nformat ascii 1.0\ncomment test\n"
               "element vertex 3\nproperty float x\nproperty float y\nproperty float z\n"
               "property uchar red\nproperty uchar green\nproperty uchar blue\n"
               "element face 1\nproperty list uchar int vertex_indices\nend_header\n"
               "0 0 0 255 0 0\n1 0 0 0 255 0\n0 1 0 0 0 51\n3 0 1 2\n");
    const CoarseAsset a = load_mesh(dir / "m.ply");
    CHECK(a.triangles.size() == 1);
    CHECK((a.vertex_colors[0] - Vec3(1, 0, 0)).norm() < 1e-12);
    CHECK(a.vertex_colors[2].z() == doctest::Approx(0.2));
    CHECK((a.vertex_normals[0] - Vec3::UnitZ()).norm() < 1e-12);
}

TEST_CASE("binary little-endian PLY with normals") {
    TempDir dir("ply_bin");
    std::string header =
        "ply\nformat binary_little_endian 1.0\n"
        "element vertex 4\nproperty float x\nproperty float y\nproperty float z\n"
        "property float nx\nproperty float ny\nproperty float nz\n"
        "property uchar red\nproperty uchar green\nproperty uchar blue\n"
        "element face 1\nproperty list uchar uint vertex_indices\nend_header\n";
    std::string body;
    auto put_f = [&](float f) {
        char b[4];
        std::memcpy(b, &f, 4);
        body.append(b, 4);
    };
    const float pos[4][3] = {{0, 0, 0}, {2, 0, 0}, {2, 2, 0}, {0, 2, 0}};
    for (const auto& p : pos) {
        put_f(p[0]);
        put_f(p[1]);
        put_f(p[2]);
        put_f(0);
        put_f(0);
        put_f(1);
        body.push_back(static_cast<char>(0));
        body.push_back(static_cast<char>(128));
        body.push_back(static_cast<char>(255));
    }
    body.push_back(4);
    for (std::uint32_t i = 0; i < 4; ++i) {
        char b[4];
        std::memcpy(b, &i, 4);
        body.append(b, 4);
    }
    write_text(dir / "m.ply", header + body);
    const CoarseAsset a = load_mesh(dir / "m.ply");
    CHECK(a.vertices.size() == 4);
    CHECK(a.triangles.size() == 2);
    CHECK(a.vertex_colors[0].y() == doctest::Approx(128.0 / 255.0));
    CHECK((a.vertices[2] - Vec3(0.9, 0.9, 0)).norm() < 1e-6);
}

TEST_CASE("load errors") {
    TempDir dir("bad_mesh");
    write_text(dir / "empty.obj", "");
    CHECK_THROWS_AS(load_mesh(dir / "empty.obj"), LoadError);
    write_text(dir / "points.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\n");
    CHECK_THROWS_WITH_AS(load_mesh(dir / "points.obj"), doctest::Contains("no triangles"), LoadError);
    write_text(dir / "nan.obj", "v 0 0 nan\nv 1 0 0\nv 0 1 0\nf 1 2 3\n");
    CHECK_THROWS_AS(load_mesh(dir / "nan.obj"), LoadError);
    write_text(dir / "range.obj", "v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 7\n");
    CHECK_THROWS_WITH_AS(load_mesh(dir / "range.obj"), doctest::Contains("out of range"), LoadError);
    write_text(dir / "mesh.stl", "solid x\n");
    CHECK_THROWS_AS(load_mesh(dir / "mesh.stl"), LoadError);
    CHECK_THROWS_AS(load_mesh(dir / "missing.obj"), LoadError);
    write_text(dir / "bad.ply", "ply\nformat binary_big_endian 1.0\nend_header\n");
    CHECK_THROWS_AS(load_mesh(dir / "bad.ply"), LoadError);
}

TEST_CASE("cube face filling the view: constant color and camera-facing normal") {
    const CoarseAsset cube = testsupport::colored_cube();
    // Face x = +0.9 seen from distance 2 along +x with a narrow fov.
    const CameraPose pose = axis_pose(Vec3(2.0, 0, 0), 30.0, 16);
    const RenderOutput out = rasterize(cube, pose);
    const Image n = rasterize_normal_map(cube, pose);
    for (int y = 0; y < 16; ++y)
        for (int x = 0; x < 16; ++x) {
            CHECK(out.opacity.at(y, x) == 1.0);
            CHECK(n.at(y, x, 0) == doctest::Approx(0.5).epsilon(1e-12));
            CHECK(n.at(y, x, 1) == doctest::Approx(0.5).epsilon(1e-12));
            CHECK(n.at(y, x, 2) == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(out.color.at(y, x, 0) == doctest::Approx(0.90).epsilon(1e-9));
            CHECK(out.color.at(y, x, 1) == doctest::Approx(0.25).epsilon(1e-9));
        }
    // Center ray hits the face at distance 2 - 0.9.
    CHECK(out.depth.at(8, 8) == doctest::Approx(1.1 / CameraFrame(pose).ray(8, 8).direction.dot(-Vec3::UnitX())).epsilon(1e-9));
}

TEST_CASE("camera facing away from the mesh sees nothing") {
    const CoarseAsset cube = testsupport::colored_cube();
    CameraPose pose = axis_pose(Vec3(3.0, 0, 0), 50.0, 16);
    pose.target = Vec3(6.0, 0, 0);
    const RenderOutput out = rasterize(cube, pose);
    for (double o : out.opacity.data) CHECK(o == 0.0);
    for (double d : out.depth.data) CHECK(std::isinf(d));
    for (double c : out.color.data) CHECK(c == 1.0);
}

TEST_CASE("rasterize is deterministic and silhouettes match finite depth") {
    const CoarseAsset cube = testsupport::colored_cube();
    Rng rng(5);
    for (int i = 0; i < 5; ++i) {
        const CameraSample s = sample_camera(CameraRanges{}, rng);
        const CameraPose pose = look_at_origin(spherical_to_position(s), s.fov_deg, 24);
        const RenderOutput a = rasterize(cube, pose);
        const RenderOutput b = rasterize(cube, pose);
        CHECK(a.color == b.color);
        CHECK(a.normal == b.normal);
        int covered = 0;
        for (std::size_t p = 0; p < a.ray_count(); ++p) {
            CHECK((a.opacity.data[p] == 1.0) == std::isfinite(a.depth.data[p]));
            covered += a.opacity.data[p] == 1.0;
            if (a.opacity.data[p] == 1.0) {
                const Vec3 n(a.normal.data[3 * p], a.normal.data[3 * p + 1], a.normal.data[3 * p + 2]);
                CHECK(std::abs(n.norm() - 1.0) < 1e-9);
                CHECK(n.z() > 0.0);
            }
        }
        CHECK(covered > 24 * 24 / 10);
    }
}

TEST_CASE("nearer triangles win the depth test") {
    CoarseAsset a = plane_x(0.5, 0.5);
    CoarseAsset b = plane_x(-0.5, 0.5);
    const int off = static_cast<int>(a.vertices.size());
    for (std::size_t i = 0; i < b.vertices.size(); ++i) {
        a.vertices.push_back(b.vertices[i]);
        a.vertex_colors.push_back(Vec3(1, 0, 0));
        a.vertex_normals.push_back(b.vertex_normals[i]);
    }
    for (auto t : b.triangles) a.triangles.push_back({t[0] + off, t[1] + off, t[2] + off});
    // Draw order must not matter.
    std::swap(a.triangles[0], a.triangles[2]);
    const RenderOutput out = rasterize(a, axis_pose(Vec3(3, 0, 0), 30, 8));
    CHECK(out.color.at(4, 4, 0) == doctest::Approx(0.3));
    CHECK(out.color.at(4, 4, 2) == doctest::Approx(0.9));
}

TEST_CASE("perspective-correct color interpolation across an oblique triangle") {
    // A quad receding in depth with color varying linearly in world space:
    // the pixel at the image center sees the world point on the view axis.
    CoarseAsset a;
    a.vertices = {Vec3(0.5, -1, -1), Vec3(-1.5, -1, 1), Vec3(-1.5, 1, 1), Vec3(0.5, 1, -1)};
    a.triangles = {{0, 1, 2}, {0, 2, 3}};
    a.vertex_colors = {Vec3(0, 0, 0), Vec3(1, 1, 1), Vec3(1, 1, 1), Vec3(0, 0, 0)};
    a.vertex_normals = compute_vertex_normals(a.vertices, a.triangles);
    CameraPose pose = axis_pose(Vec3(3, 0, 0.0), 40, 9);
    const RenderOutput out = rasterize(a, pose);
    // The plane contains (x, z) with x = -0.5 - z; the view axis (z = 0)
    // meets it at x = -0.5, halfway along the color ramp.
    CHECK(out.color.at(4, 4, 0) == doctest::Approx(0.5).epsilon(1e-9));
    CHECK(out.depth.at(4, 4) == doctest::Approx(3.5).epsilon(1e-9));
}

TEST_CASE("mesh and field normal maps agree on a plane") {
    const CameraPose pose = axis_pose(Vec3(3.0, 0.0, 0.0), 35.0, 24);
    // Oblique plane through the origin, as a mesh and as a dense half-space.
    const Vec3 normal = Vec3(1.0, 0.3, 0.2).normalized();
    const Vec3 u = normal.cross(Vec3::UnitZ()).normalized();
    const Vec3 v = normal.cross(u);
    CoarseAsset mesh;
    mesh.vertices = {-3 * u - 3 * v, 3 * u - 3 * v, 3 * u + 3 * v, -3 * u + 3 * v};
    mesh.triangles = {{0, 1, 2}, {0, 2, 3}};
    mesh.vertex_colors.assign(4, Vec3::Constant(0.5));
    mesh.vertex_normals = compute_vertex_normals(mesh.vertices, mesh.triangles);
    VoxelField field(GridShape::cube(24));
    for (int k = 0; k < 24; ++k)
        for (int j = 0; j < 24; ++j)
            for (int i = 0; i < 24; ++i) {
                const double s = field.voxel_position(i, j, k).dot(normal);
                field.density_raw[field.index(i, j, k)] = static_cast<float>(softplus_inverse(30.0 / (1.0 + std::exp(s / 0.05))));
            }
    RenderSettings settings;
    const Image mesh_map = rasterize_normal_map(mesh, pose, settings);
    const RenderOutput mesh_out = rasterize(mesh, pose, settings);
    const RenderOutput field_out = render(field, pose, settings);
    const Image field_map = encode_normal_map(field_out, settings.visibility_epsilon);
    double err = 0.0;
    int n = 0;
    for (int y = 0; y < 24; ++y)
        for (int x = 0; x < 24; ++x) {
            if (mesh_out.opacity.at(y, x) < 1.0 || field_out.opacity.at(y, x) < 0.5) continue;
            for (int c = 0; c < 3; ++c) err += std::abs(mesh_map.at(y, x, c) - field_map.at(y, x, c));
            n += 3;
        }
    REQUIRE(n > 300);
    CHECK(err / n < 0.05);
}

TEST_CASE("validate catches inconsistent assets") {
    CoarseAsset a = plane_x(0, 1);
    CHECK_NOTHROW(a.validate());
    a.triangles.push_back({0, 1, 9});
    CHECK_THROWS_AS(a.validate(), LoadError);
    a = plane_x(0, 1);
    a.vertex_colors.pop_back();
    CHECK_THROWS_AS(a.validate(), LoadError);
    a = plane_x(0, 1);
    a.triangles.clear();
    CHECK_THROWS_AS(a.validate(), LoadError);
}
