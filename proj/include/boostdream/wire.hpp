#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "boostdream/guidance.hpp"
#include "boostdream/image.hpp"

// JSON wire format shared with the diffusion sidecar (docs/protocol.md).
// Tensors travel as {"shape": [...], "dtype": "f32", "data": base64} with
// raw little-endian float32 payloads in row-major order.
namespace boostdream::wire {

using json = nlohmann::json;

std::string base64_encode(const std::vector<std::uint8_t>& bytes);
// Throws FormatError on invalid characters or padding.
std::vector<std::uint8_t> base64_decode(std::string_view text);

json encode_tensor(const Image& image);
// Decodes an H x W x C tensor. `field` names the JSON member in errors.
Image decode_tensor(const json& tensor, std::string_view field);

json encode_grad_request(const guidance::GuidanceRequest& request, guidance::WeightMode w_mode);
guidance::GuidanceRequest decode_grad_request(const json& body, guidance::WeightMode* w_mode = nullptr);
json encode_grad_response(const guidance::GuidanceResponse& response);
guidance::GuidanceResponse decode_grad_response(const json& body);

struct EpsRequest {
    Image x_t;
    int t = 0;
    std::string prompt;
    double lambda = 1.0;
    Image control;
    std::uint64_t seed = 0;
};

struct EpsResponse {
    Image eps_cond;
    Image eps_uncond;
};

json encode_eps_request(const EpsRequest& request);
EpsRequest decode_eps_request(const json& body);
json encode_eps_response(const EpsResponse& response);
EpsResponse decode_eps_response(const json& body);

}  // namespace boostdream::wire
