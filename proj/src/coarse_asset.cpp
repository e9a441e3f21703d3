#include "boostdream/coarse_asset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>
#include <string>

#include "boostdream/errors.hpp"

namespace boostdream {

void CoarseAsset::validate() const {
    if (triangles.empty()) throw LoadError("mesh has no triangles");
    if (vertex_colors.size() != vertices.size() || vertex_normals.size() != vertices.size()) {
        throw LoadError("per-vertex attribute count mismatch");
    }
    const int nv = static_cast<int>(vertices.size());
    for (const auto& tri : triangles) {
        for (int idx : tri) {
            if (idx < 0 || idx >= nv) throw LoadError("triangle index " + std::to_string(idx) + " out of range");
        }
    }
    for (std::size_t i = 0; i < vertices.size(); ++i) {
        if (!vertices[i].allFinite()) throw LoadError("non-finite vertex " + std::to_string(i));
        if (!vertex_colors[i].allFinite()) throw LoadError("non-finite color at vertex " + std::to_string(i));
        if (std::abs(vertex_normals[i].norm() - 1.0) > 1e-4) {
            throw LoadError("vertex normal " + std::to_string(i) + " is not unit length");
        }
    }
}

std::vector<Vec3> compute_vertex_normals(const std::vector<Vec3>& vertices,
                                         const std::vector<std::array<int, 3>>& triangles) {
    std::vector<Vec3> normals(vertices.size(), Vec3::Zero());
    for (const auto& t : triangles) {
        // Cross product length is twice the area, which gives the area weighting.
        const Vec3 n = (vertices[t[1]] - vertices[t[0]]).cross(vertices[t[2]] - vertices[t[0]]);
        for (int idx : t) normals[static_cast<std::size_t>(idx)] += n;
    }
    for (auto& n : normals) {
        const double len = n.norm();
        n = len > 1e-20 ? Vec3(n / len) : Vec3::UnitZ();
    }
    return normals;
}

void normalize_to_box(CoarseAsset& asset, double extent) {
    if (asset.vertices.empty()) return;
    Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity());
    Vec3 hi = -lo;
    for (const auto& v : asset.vertices) {
        lo = lo.cwiseMin(v);
        hi = hi.cwiseMax(v);
    }
    const Vec3 center = 0.5 * (lo + hi);
    const double size = (hi - lo).maxCoeff();
    const double scale = size > 0.0 ? 2.0 * extent / size : 1.0;
    for (auto& v : asset.vertices) v = (v - center) * scale;
}

namespace {

void add_polygon(std::vector<std::array<int, 3>>& tris, const std::vector<int>& poly) {
    for (std::size_t i = 1; i + 1 < poly.size(); ++i) tris.push_back({poly[0], poly[i], poly[i + 1]});
}

int resolve_index(long idx, std::size_t count, int line_no) {
    long r = idx > 0 ? idx - 1 : static_cast<long>(count) + idx;
    if (idx == 0 || r < 0 || r >= static_cast<long>(count)) {
        throw LoadError("OBJ line " + std::to_string(line_no) + ": index " + std::to_string(idx) + " out of range");
    }
    return static_cast<int>(r);
}

CoarseAsset read_obj(std::istream& in) {
    CoarseAsset a;
    std::vector<Vec3> normals;
    std::vector<int> normal_of_vertex;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            std::vector<double> vals;
            double d;
            while (ls >> d) vals.push_back(d);
            if (vals.size() < 3) throw LoadError("OBJ line " + std::to_string(line_no) + ": short vertex");
            a.vertices.emplace_back(vals[0], vals[1], vals[2]);
            if (vals.size() >= 6) {
                a.vertex_colors.emplace_back(vals[3], vals[4], vals[5]);
            } else {
                a.vertex_colors.push_back(kDefaultVertexColor);
            }
        } else if (tag == "vn") {
            double x, y, z;
            if (!(ls >> x >> y >> z)) throw LoadError("OBJ line " + std::to_string(line_no) + ": short normal");
            normals.emplace_back(x, y, z);
        } else if (tag == "f") {
            std::vector<int> poly;
            std::string tok;
            while (ls >> tok) {
                long vi = 0, ni = 0;
                const auto s1 = tok.find('/');
                try {
                    vi = std::stol(tok.substr(0, s1));
                    if (s1 != std::string::npos) {
                        const auto s2 = tok.find('/', s1 + 1);
                        if (s2 != std::string::npos && s2 + 1 < tok.size()) ni = std::stol(tok.substr(s2 + 1));
                    }
                } catch (const std::exception&) {
                    throw LoadError("OBJ line " + std::to_string(line_no) + ": bad face token '" + tok + "'");
                }
                const int v = resolve_index(vi, a.vertices.size(), line_no);
                poly.push_back(v);
                if (ni != 0) {
                    normal_of_vertex.resize(a.vertices.size(), -1);
                    normal_of_vertex[static_cast<std::size_t>(v)] = resolve_index(ni, normals.size(), line_no);
                }
            }
            if (poly.size() < 3) throw LoadError("OBJ line " + std::to_string(line_no) + ": face with < 3 vertices");
            add_polygon(a.triangles, poly);
        }
    }
    // Use file normals only when every vertex received one.
    normal_of_vertex.resize(a.vertices.size(), -1);
    const bool complete = !a.vertices.empty() &&
                          std::none_of(normal_of_vertex.begin(), normal_of_vertex.end(), [](int i) { return i < 0; });
    if (complete) {
        for (int ni : normal_of_vertex) a.vertex_normals.push_back(normals[static_cast<std::size_t>(ni)]);
    }
    return a;
}

// ----- PLY

struct PlyProperty {
    std::string name;
    std::string type;        // scalar type
    bool is_list = false;
    std::string count_type;  // list length type
};

struct PlyElement {
    std::string name;
    std::size_t count = 0;
    std::vector<PlyProperty> props;
};

std::size_t ply_type_size(const std::string& t) {
    static const std::map<std::string, std::size_t> sizes{
        {"char", 1},  {"int8", 1},   {"uchar", 1},  {"uint8", 1},   {"short", 2},  {"int16", 2},
        {"ushort", 2}, {"uint16", 2}, {"int", 4},    {"int32", 4},   {"uint", 4},   {"uint32", 4},
        {"float", 4}, {"float32", 4}, {"double", 8}, {"float64", 8}};
    auto it = sizes.find(t);
    if (it == sizes.end()) throw LoadError("PLY: unsupported property type '" + t + "'");
    return it->second;
}

double read_binary_scalar(std::istream& in, const std::string& t) {
    unsigned char buf[8];
    const std::size_t n = ply_type_size(t);
    if (!in.read(reinterpret_cast<char*>(buf), static_cast<std::streamsize>(n))) throw LoadError("PLY: truncated body");
    if constexpr (std::endian::native == std::endian::big) std::reverse(buf, buf + n);
    if (t == "char" || t == "int8") return static_cast<std::int8_t>(buf[0]);
    if (t == "uchar" || t == "uint8") return buf[0];
    if (t == "short" || t == "int16") { std::int16_t v; std::memcpy(&v, buf, 2); return v; }
    if (t == "ushort" || t == "uint16") { std::uint16_t v; std::memcpy(&v, buf, 2); return v; }
    if (t == "int" || t == "int32") { std::int32_t v; std::memcpy(&v, buf, 4); return v; }
    if (t == "uint" || t == "uint32") { std::uint32_t v; std::memcpy(&v, buf, 4); return v; }
    if (t == "float" || t == "float32") { float v; std::memcpy(&v, buf, 4); return v; }
    double v;
    std::memcpy(&v, buf, 8);
    return v;
}

bool is_integer_color_type(const std::string& t) { return t == "uchar" || t == "uint8"; }

CoarseAsset read_ply(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("ply", 0) != 0) throw LoadError("PLY: missing 'ply' header");
    std::string format;
    std::vector<PlyElement> elements;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        std::istringstream ls(line);
        std::string tag;
        ls >> tag;
        if (tag == "format") {
            ls >> format;
        } else if (tag == "element") {
            PlyElement e;
            ls >> e.name >> e.count;
            elements.push_back(e);
        } else if (tag == "property") {
            if (elements.empty()) throw LoadError("PLY: property before element");
            PlyProperty p;
            std::string t;
            ls >> t;
            if (t == "list") {
                p.is_list = true;
                ls >> p.count_type >> p.type >> p.name;
            } else {
                p.type = t;
                ls >> p.name;
            }
            elements.back().props.push_back(p);
        } else if (tag == "end_header") {
            break;
        }
    }
    if (format != "ascii" && format != "binary_little_endian") {
        throw LoadError("PLY: unsupported format '" + format + "'");
    }
    const bool binary = format == "binary_little_endian";

    CoarseAsset a;
    bool have_normals = false;
    for (const auto& e : elements) {
        for (std::size_t r = 0; r < e.count; ++r) {
            std::map<std::string, double> scalars;
            std::vector<int> list;
            std::istringstream row;
            if (!binary) {
                if (!std::getline(in, line)) throw LoadError("PLY: truncated body in element " + e.name);
                row.str(line);
            }
            for (const auto& p : e.props) {
                auto read = [&](const std::string& t) {
                    if (binary) return read_binary_scalar(in, t);
                    double v;
                    if (!(row >> v)) throw LoadError("PLY: short row in element " + e.name);
                    return v;
                };
                if (p.is_list) {
                    const auto n = static_cast<std::size_t>(read(p.count_type));
                    std::vector<int> vals;
                    for (std::size_t k = 0; k < n; ++k) vals.push_back(static_cast<int>(read(p.type)));
                    if (p.name == "vertex_indices" || p.name == "vertex_index") list = std::move(vals);
                } else {
                    double v = read(p.type);
                    if ((p.name == "red" || p.name == "green" || p.name == "blue") && is_integer_color_type(p.type)) {
                        v /= 255.0;
                    }
                    scalars[p.name] = v;
                }
            }
            if (e.name == "vertex") {
                a.vertices.emplace_back(scalars["x"], scalars["y"], scalars["z"]);
                if (scalars.count("red")) {
                    a.vertex_colors.emplace_back(scalars["red"], scalars["green"], scalars["blue"]);
                } else {
                    a.vertex_colors.push_back(kDefaultVertexColor);
                }
                if (scalars.count("nx")) {
                    a.vertex_normals.emplace_back(scalars["nx"], scalars["ny"], scalars["nz"]);
                    have_normals = true;
                }
            } else if (e.name == "face") {
                if (list.size() < 3) throw LoadError("PLY: face with < 3 vertices");
                for (int idx : list) {
                    if (idx < 0 || static_cast<std::size_t>(idx) >= a.vertices.size()) {
                        throw LoadError("PLY: face index " + std::to_string(idx) + " out of range");
                    }
                }
                add_polygon(a.triangles, list);
            }
        }
    }
    if (!have_normals || a.vertex_normals.size() != a.vertices.size()) a.vertex_normals.clear();
    return a;
}

std::string lower_extension(const std::filesystem::path& p) {
    std::string ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return ext;
}

}  // namespace

CoarseAsset load_mesh(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw LoadError("cannot open mesh " + path.string());
    const std::string ext = lower_extension(path);
    CoarseAsset a;
    if (ext == ".obj") {
        a = read_obj(in);
    } else if (ext == ".ply") {
        a = read_ply(in);
    } else {
        throw LoadError("unsupported mesh format '" + ext + "' (expected .obj or .ply)");
    }
    if (a.triangles.empty()) throw LoadError("mesh " + path.string() + " has no triangles");
    for (std::size_t i = 0; i < a.vertices.size(); ++i) {
        if (!a.vertices[i].allFinite()) throw LoadError("mesh " + path.string() + ": non-finite vertex " + std::to_string(i));
    }
    for (auto& c : a.vertex_colors) c = c.cwiseMax(0.0).cwiseMin(1.0);
    if (a.vertex_normals.empty()) {
        a.vertex_normals = compute_vertex_normals(a.vertices, a.triangles);
    } else {
        for (auto& n : a.vertex_normals) {
            const double len = n.norm();
            n = len > 1e-20 ? Vec3(n / len) : Vec3::UnitZ();
        }
    }
    normalize_to_box(a);
    a.validate();
    return a;
}

// ---------------------------------------------------------------------------
// Rasterizer

namespace {

constexpr double kNearPlane = 1e-3;

struct ClipVertex {
    Vec3 cam;    // (right, up, forward-depth) coordinates
    Vec3 color;
};

// Sutherland-Hodgman clip of a triangle against depth >= near.
std::vector<ClipVertex> clip_near(const std::array<ClipVertex, 3>& tri) {
    std::vector<ClipVertex> out;
    for (int i = 0; i < 3; ++i) {
        const ClipVertex& a = tri[static_cast<std::size_t>(i)];
        const ClipVertex& b = tri[static_cast<std::size_t>((i + 1) % 3)];
        const bool a_in = a.cam.z() >= kNearPlane;
        const bool b_in = b.cam.z() >= kNearPlane;
        if (a_in) out.push_back(a);
        if (a_in != b_in) {
            const double s = (kNearPlane - a.cam.z()) / (b.cam.z() - a.cam.z());
            out.push_back({a.cam + s * (b.cam - a.cam), a.color + s * (b.color - a.color)});
        }
    }
    return out;
}

}  // namespace

RenderOutput rasterize(const CoarseAsset& asset, const camera::CameraPose& pose, const RenderSettings& settings) {
    if (pose.image_size < 8) throw std::invalid_argument("image_size must be >= 8");
    const camera::CameraFrame frame(pose);
    const int size = pose.image_size;
    const double n = static_cast<double>(size);
    const double tan_half = frame.tan_half_fov;

    RenderOutput out;
    out.height = size;
    out.width = size;
    out.color = Image(size, size, 3);
    out.opacity = Image(size, size, 1);
    out.depth = Image(size, size, 1, std::numeric_limits<double>::infinity());
    out.depth_raw = out.depth;
    out.normal = Image(size, size, 3);
    for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
            for (int c = 0; c < 3; ++c) out.color.at(y, x, c) = settings.background[c];
        }
    }
    // Per-pixel view-space depth buffer (distance along the forward axis).
    std::vector<double> zbuf(static_cast<std::size_t>(size) * size, std::numeric_limits<double>::infinity());

    for (const auto& t : asset.triangles) {
        const Vec3& p0 = asset.vertices[static_cast<std::size_t>(t[0])];
        const Vec3& p1 = asset.vertices[static_cast<std::size_t>(t[1])];
        const Vec3& p2 = asset.vertices[static_cast<std::size_t>(t[2])];
        Vec3 face_n = (p1 - p0).cross(p2 - p0);
        if (face_n.norm() < 1e-20) continue;
        face_n.normalize();

        std::array<ClipVertex, 3> tri;
        for (int i = 0; i < 3; ++i) {
            const Vec3 rel = asset.vertices[static_cast<std::size_t>(t[static_cast<std::size_t>(i)])] - frame.origin;
            tri[static_cast<std::size_t>(i)] = {Vec3(rel.dot(frame.right), rel.dot(frame.up), rel.dot(frame.forward)),
                                                asset.vertex_colors[static_cast<std::size_t>(t[static_cast<std::size_t>(i)])]};
        }
        // Normal flipped towards the camera (any point on the plane works).
        const Vec3 to_camera = frame.origin - p0;
        const Vec3 world_n = face_n.dot(to_camera) >= 0.0 ? face_n : Vec3(-face_n);
        const Vec3 cam_n = frame.to_camera(world_n);

        const std::vector<ClipVertex> poly = clip_near(tri);
        if (poly.size() < 3) continue;
        for (std::size_t k = 1; k + 1 < poly.size(); ++k) {
            const ClipVertex* v[3] = {&poly[0], &poly[k], &poly[k + 1]};
            double sx[3], sy[3], inv_z[3];
            for (int i = 0; i < 3; ++i) {
                const Vec3& c = v[i]->cam;
                inv_z[i] = 1.0 / c.z();
                sx[i] = (c.x() * inv_z[i] / tan_half + 1.0) * 0.5 * n;
                sy[i] = (1.0 - c.y() * inv_z[i] / tan_half) * 0.5 * n;
            }
            const double area = (sx[1] - sx[0]) * (sy[2] - sy[0]) - (sx[2] - sx[0]) * (sy[1] - sy[0]);
            if (std::abs(area) < 1e-14) continue;
            const int x_lo = std::max(0, static_cast<int>(std::floor(std::min({sx[0], sx[1], sx[2]}))));
            const int x_hi = std::min(size - 1, static_cast<int>(std::ceil(std::max({sx[0], sx[1], sx[2]}))));
            const int y_lo = std::max(0, static_cast<int>(std::floor(std::min({sy[0], sy[1], sy[2]}))));
            const int y_hi = std::min(size - 1, static_cast<int>(std::ceil(std::max({sy[0], sy[1], sy[2]}))));
            for (int py = y_lo; py <= y_hi; ++py) {
                for (int px = x_lo; px <= x_hi; ++px) {
                    const double cx = px + 0.5;
                    const double cy = py + 0.5;
                    double b[3];
                    b[0] = ((sx[1] - cx) * (sy[2] - cy) - (sx[2] - cx) * (sy[1] - cy)) / area;
                    b[1] = ((sx[2] - cx) * (sy[0] - cy) - (sx[0] - cx) * (sy[2] - cy)) / area;
                    b[2] = 1.0 - b[0] - b[1];
                    if (b[0] < 0.0 || b[1] < 0.0 || b[2] < 0.0) continue;
                    // Perspective-correct interpolation through 1/z.
                    const double iz = b[0] * inv_z[0] + b[1] * inv_z[1] + b[2] * inv_z[2];
                    const double z = 1.0 / iz;
                    const std::size_t pix = static_cast<std::size_t>(py) * size + px;
                    if (!(z < zbuf[pix])) continue;
                    zbuf[pix] = z;
                    Vec3 color = Vec3::Zero();
                    for (int i = 0; i < 3; ++i) color += (b[i] * inv_z[i] * z) * v[i]->color;
                    for (int c = 0; c < 3; ++c) {
                        out.color.at(py, px, c) = color[c];
                        out.normal.at(py, px, c) = cam_n[c];
                    }
                    out.opacity.at(py, px) = 1.0;
                    // Distance along the pixel ray, matching the volume renderer's t.
                    const double ray_t = z / frame.ray(px, py).direction.dot(frame.forward);
                    out.depth.at(py, px) = ray_t;
                    out.depth_raw.at(py, px) = ray_t;
                }
            }
        }
    }
    return out;
}

Image rasterize_normal_map(const CoarseAsset& asset, const camera::CameraPose& pose, const RenderSettings& settings) {
    return encode_normal_map(rasterize(asset, pose, settings), settings.visibility_epsilon);
}

}  // namespace boostdream
