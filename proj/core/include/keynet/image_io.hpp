#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "keynet/netir.hpp"
#include "keynet/sensor.hpp"

namespace keynet::io {

// Binary PGM (P5). maxval <= 255 is stored as 8-bit, otherwise 16-bit
// big-endian as the format requires.
sensor::Image read_pgm(const std::filesystem::path& path);
// Values are rounded and clipped to [0, maxval].
void write_pgm(const std::filesystem::path& path, const sensor::Image& img,
               unsigned maxval = 255);

// Raw little-endian f64 data with a JSON sidecar at "<path>.json":
//   {"h", "w", "channels", "homogeneous": bool, "fingerprint": string?}
// Homogeneous vectors carry one trailing element past h * w * channels.
struct RawArray {
  ir::Shape shape;
  std::vector<double> data;
  bool homogeneous = false;
  std::string fingerprint;
};

void write_raw(const std::filesystem::path& path, const RawArray& raw);
RawArray read_raw(const std::filesystem::path& path);

// Reads a PGM (by extension .pgm) or raw f64 image as a CHW tensor.
ir::Tensor read_image(const std::filesystem::path& path);

sensor::Image to_image(const ir::Tensor& t);
ir::Tensor to_tensor(const sensor::Image& img);

}  // namespace keynet::io
