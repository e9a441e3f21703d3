#include "boostdream/wire.hpp"

#include <array>
#include <bit>
#include <cmath>
#include <cstring>

#include "boostdream/errors.hpp"

namespace boostdream::wire {

namespace {

constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

int decode_char(char c) {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
}

template <typename T>
T member(const json& body, const char* key) {
    if (!body.is_object() || !body.contains(key)) throw FormatError(std::string("missing field '") + key + "'");
    try {
        return body.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(std::string("field '") + key + "' has the wrong type");
    }
}

}  // namespace

std::string base64_encode(const std::vector<std::uint8_t>& bytes) {
    std::string out;
    out.reserve((bytes.size() + 2) / 3 * 4);
    std::size_t i = 0;
    for (; i + 2 < bytes.size(); i += 3) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8) | bytes[i + 2];
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += kAlphabet[v & 63];
    }
    const std::size_t rest = bytes.size() - i;
    if (rest == 1) {
        const std::uint32_t v = bytes[i] << 16;
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += "==";
    } else if (rest == 2) {
        const std::uint32_t v = (bytes[i] << 16) | (bytes[i + 1] << 8);
        out += kAlphabet[(v >> 18) & 63];
        out += kAlphabet[(v >> 12) & 63];
        out += kAlphabet[(v >> 6) & 63];
        out += '=';
    }
    return out;
}

std::vector<std::uint8_t> base64_decode(std::string_view text) {
    if (text.size() % 4 != 0) throw FormatError("base64 length is not a multiple of 4");
    std::vector<std::uint8_t> out;
    out.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int v[4];
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + k];
            if (c == '=') {
                if (i + 4 != text.size() || k < 2) throw FormatError("misplaced base64 padding");
                v[k] = 0;
                ++pad;
            } else {
                if (pad) throw FormatError("misplaced base64 padding");
                v[k] = decode_char(c);
                if (v[k] < 0) throw FormatError("invalid base64 character");
            }
        }
        const std::uint32_t w = (v[0] << 18) | (v[1] << 12) | (v[2] << 6) | v[3];
        out.push_back(static_cast<std::uint8_t>((w >> 16) & 0xFF));
        if (pad < 2) out.push_back(static_cast<std::uint8_t>((w >> 8) & 0xFF));
        if (pad < 1) out.push_back(static_cast<std::uint8_t>(w & 0xFF));
    }
    return out;
}

json encode_tensor(const Image& image) {
    std::vector<std::uint8_t> bytes(image.size() * 4);
    for (std::size_t i = 0; i < image.size(); ++i) {
        const auto bits = std::bit_cast<std::uint32_t>(static_cast<float>(image.data[i]));
        for (int b = 0; b < 4; ++b) bytes[4 * i + b] = static_cast<std::uint8_t>((bits >> (8 * b)) & 0xFF);
    }
    return json{{"shape", {image.height, image.width, image.channels}}, {"dtype", "f32"}, {"data", base64_encode(bytes)}};
}

Image decode_tensor(const json& tensor, std::string_view field) {
    const std::string name(field);
    if (!tensor.is_object()) throw FormatError("tensor '" + name + "' is not an object");
    std::vector<long long> shape;
    std::string dtype, data;
    try {
        shape = tensor.at("shape").get<std::vector<long long>>();
        dtype = tensor.at("dtype").get<std::string>();
        data = tensor.at("data").get<std::string>();
    } catch (const json::exception&) {
        throw FormatError("tensor '" + name + "' needs shape, dtype and data");
    }
    if (dtype != "f32") throw FormatError("tensor '" + name + "' has unsupported dtype '" + dtype + "'");
    if (shape.size() != 3 || shape[0] <= 0 || shape[1] <= 0 || shape[2] <= 0) {
        throw FormatError("tensor '" + name + "' must have a positive 3-d shape");
    }
    const auto bytes = base64_decode(data);
    const std::size_t count = static_cast<std::size_t>(shape[0] * shape[1] * shape[2]);
    if (bytes.size() != 4 * count) {
        throw FormatError("tensor '" + name + "' payload has " + std::to_string(bytes.size()) + " bytes, expected " +
                          std::to_string(4 * count));
    }
    Image img(static_cast<int>(shape[0]), static_cast<int>(shape[1]), static_cast<int>(shape[2]));
    for (std::size_t i = 0; i < count; ++i) {
        std::uint32_t bits = 0;
        for (int b = 0; b < 4; ++b) bits |= static_cast<std::uint32_t>(bytes[4 * i + b]) << (8 * b);
        img.data[i] = std::bit_cast<float>(bits);
    }
    return img;
}

json encode_grad_request(const guidance::GuidanceRequest& r, guidance::WeightMode w_mode) {
    json body{{"image", encode_tensor(r.image)},
              {"normal", encode_tensor(r.control)},
              {"prompt", r.prompt},
              {"lambda", r.lambda},
              {"s", r.cfg_scale},
              {"seed", r.seed},
              {"w_mode", guidance::to_string(w_mode)}};
    if (r.t) body["t"] = *r.t;
    return body;
}

guidance::GuidanceRequest decode_grad_request(const json& body, guidance::WeightMode* w_mode) {
    guidance::GuidanceRequest r;
    if (!body.is_object()) throw FormatError("request body is not an object");
    r.image = decode_tensor(body.contains("image") ? body.at("image") : json(), "image");
    r.control = decode_tensor(body.contains("normal") ? body.at("normal") : json(), "normal");
    r.prompt = member<std::string>(body, "prompt");
    r.lambda = member<double>(body, "lambda");
    r.cfg_scale = member<double>(body, "s");
    r.seed = member<std::uint64_t>(body, "seed");
    if (body.contains("t") && !body.at("t").is_null()) r.t = member<int>(body, "t");
    if (w_mode) *w_mode = guidance::parse_weight_mode(member<std::string>(body, "w_mode"));
    return r;
}

json encode_grad_response(const guidance::GuidanceResponse& r) {
    return json{{"grad", encode_tensor(r.grad)}, {"t", r.t_used}, {"w", r.w_used}, {"diagnostics", r.diagnostics}};
}

guidance::GuidanceResponse decode_grad_response(const json& body) {
    guidance::GuidanceResponse r;
    if (!body.is_object()) throw FormatError("response body is not an object");
    r.grad = decode_tensor(body.contains("grad") ? body.at("grad") : json(), "grad");
    r.t_used = member<int>(body, "t");
    r.w_used = member<double>(body, "w");
    if (body.contains("diagnostics") && body.at("diagnostics").is_object()) {
        for (const auto& [k, v] : body.at("diagnostics").items()) {
            r.diagnostics[k] = v.is_string() ? v.get<std::string>() : v.dump();
        }
    }
    return r;
}

json encode_eps_request(const EpsRequest& r) {
    return json{{"x_t", encode_tensor(r.x_t)}, {"t", r.t},           {"prompt", r.prompt},
                {"lambda", r.lambda},          {"control", encode_tensor(r.control)}, {"seed", r.seed}};
}

EpsRequest decode_eps_request(const json& body) {
    EpsRequest r;
    if (!body.is_object()) throw FormatError("request body is not an object");
    r.x_t = decode_tensor(body.contains("x_t") ? body.at("x_t") : json(), "x_t");
    r.control = decode_tensor(body.contains("control") ? body.at("control") : json(), "control");
    r.t = member<int>(body, "t");
    r.prompt = member<std::string>(body, "prompt");
    r.lambda = member<double>(body, "lambda");
    r.seed = member<std::uint64_t>(body, "seed");
    return r;
}

json encode_eps_response(const EpsResponse& r) {
    return json{{"eps_cond", encode_tensor(r.eps_cond)}, {"eps_uncond", encode_tensor(r.eps_uncond)}};
}

EpsResponse decode_eps_response(const json& body) {
    EpsResponse r;
    if (!body.is_object()) throw FormatError("response body is not an object");
    r.eps_cond = decode_tensor(body.contains("eps_cond") ? body.at("eps_cond") : json(), "eps_cond");
    r.eps_uncond = decode_tensor(body.contains("eps_uncond") ? body.at("eps_uncond") : json(), "eps_uncond");
    return r;
}

}  // namespace boostdream::wire
