#include "keynet/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "keynet/errors.hpp"
#include "keynet/kspm_io.hpp"
#include "keynet/model_io.hpp"

namespace keynet::io {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path sidecar(const fs::path& path) {
  fs::path s = path;
  s += ".json";
  return s;
}

// Next whitespace-delimited header token, skipping '#' comments.
std::string next_token(const std::string& bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  if (start == pos) throw FormatError("PGM: truncated header");
  return bytes.substr(start, pos - start);
}

std::size_t parse_count(const std::string& tok) {
  try {
    std::size_t used = 0;
    const unsigned long v = std::stoul(tok, &used);
    if (used != tok.size()) throw FormatError("PGM: bad header value '" + tok + "'");
    return v;
  } catch (const std::logic_error&) {
    throw FormatError("PGM: bad header value '" + tok + "'");
  }
}

}  // namespace

sensor::Image read_pgm(const fs::path& path) {
  const std::string bytes = sparse::read_file_bytes(path);
  std::size_t pos = 0;
  if (next_token(bytes, pos) != "P5") throw FormatError("PGM: only binary P5 is supported");
  const std::size_t w = parse_count(next_token(bytes, pos));
  const std::size_t h = parse_count(next_token(bytes, pos));
  const std::size_t maxval = parse_count(next_token(bytes, pos));
  if (maxval == 0 || maxval > 65535) throw FormatError("PGM: maxval out of range");
  ++pos;  // single whitespace after maxval
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  if (bytes.size() < pos + w * h * bpp) throw FormatError("PGM: truncated pixel data");
  sensor::Image img(h, w);
  for (std::size_t i = 0; i < w * h; ++i) {
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos + i * bpp);
    img.pixels[i] = bpp == 1 ? p[0] : static_cast<double>((p[0] << 8) | p[1]);
  }
  return img;
}

void write_pgm(const fs::path& path, const sensor::Image& img, unsigned maxval) {
  if (maxval == 0 || maxval > 65535) throw ParameterError("PGM: maxval out of range");
  std::ostringstream header;
  header << "P5\n" << img.width << " " << img.height << "\n" << maxval << "\n";
  std::string bytes = header.str();
  const std::size_t bpp = maxval > 255 ? 2 : 1;
  bytes.reserve(bytes.size() + img.pixels.size() * bpp);
  for (const double v : img.pixels) {
    const auto q = static_cast<unsigned>(
        std::clamp(std::nearbyint(v), 0.0, static_cast<double>(maxval)));
    if (bpp == 2) bytes.push_back(static_cast<char>(q >> 8));
    bytes.push_back(static_cast<char>(q & 0xff));
  }
  sparse::write_file_bytes(path, bytes);
}

void write_raw(const fs::path& path, const RawArray& raw) {
  const std::size_t expected = raw.shape.size() + (raw.homogeneous ? 1 : 0);
  if (raw.data.size() != expected)
    throw ShapeError("raw: " + std::to_string(raw.data.size()) + " values for shape " +
                     ir::to_string(raw.shape));
  sparse::write_file_bytes(path, ir::encode_f64(raw.data));
  json j{{"h", raw.shape.height},
         {"w", raw.shape.width},
         {"channels", raw.shape.channels},
         {"homogeneous", raw.homogeneous}};
  if (!raw.fingerprint.empty()) j["fingerprint"] = raw.fingerprint;
  sparse::write_file_bytes(sidecar(path), j.dump(2) + "\n");
}

RawArray read_raw(const fs::path& path) {
  RawArray raw;
  try {
    const json j = json::parse(sparse::read_file_bytes(sidecar(path)));
    raw.shape = {j.at("channels").get<std::size_t>(), j.at("h").get<std::size_t>(),
                 j.at("w").get<std::size_t>()};
    raw.homogeneous = j.value("homogeneous", false);
    raw.fingerprint = j.value("fingerprint", std::string());
  } catch (const json::exception& e) {
    throw FormatError("raw sidecar: " + std::string(e.what()));
  }
  raw.data = ir::decode_f64(sparse::read_file_bytes(path));
  if (raw.data.size() != raw.shape.size() + (raw.homogeneous ? 1 : 0))
    throw FormatError("raw: data length does not match sidecar shape");
  return raw;
}

ir::Tensor read_image(const fs::path& path) {
  if (path.extension() == ".pgm") return to_tensor(read_pgm(path));
  RawArray raw = read_raw(path);
  if (raw.homogeneous) raw.data.pop_back();
  return {raw.shape, std::move(raw.data)};
}

sensor::Image to_image(const ir::Tensor& t) {
  if (t.shape.channels != 1) throw ShapeError("image: expected a single channel");
  sensor::Image img(t.shape.height, t.shape.width);
  img.pixels = t.data;
  return img;
}

ir::Tensor to_tensor(const sensor::Image& img) {
  return {{1, img.height, img.width}, img.pixels};
}

}  // namespace keynet::io
