#pragma once

#include <filesystem>
#include <string>

#include "keynet/netir.hpp"

namespace keynet::ir {

// Model container directory:
//   manifest.json  {"format": "keynet-model", "version": 1,
//                   "input_shape": [c, h, w], "layers": [...]}
//   layer_NNN_weights.f64, layer_NNN_bias.f64   little-endian f64 blobs
// Each conv2d / dense layer entry references its blobs as
// {"file", "sha256", "count"}.
void save_model(const std::filesystem::path& dir, const NetworkDef& net);
NetworkDef load_model(const std::filesystem::path& dir);

// Flat JSON description with inline weights, for tiny nets:
//   {"input_shape": [1, 2, 2],
//    "layers": [{"type": "conv2d", "in_ch": 1, "out_ch": 1, "kh": 1, "kw": 2,
//                "stride": 1, "pad": 0, "weights": [-1, 1], "bias": [0]},
//               {"type": "relu"}]}
// Layers other than conv2d / avgpool / dense / relu are rejected with
// UnsupportedLayer.
NetworkDef parse_flat_json(const std::string& text);
NetworkDef load_flat_json(const std::filesystem::path& path);

// Little-endian f64 array blobs.
std::string encode_f64(std::span<const double> values);
std::vector<double> decode_f64(const std::string& bytes);

}  // namespace keynet::ir
