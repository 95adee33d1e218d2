#include "keynet/keynet_io.hpp"

#include <cstdio>

#include <json.hpp>

#include "keynet/errors.hpp"
#include "keynet/hash.hpp"
#include "keynet/key_io.hpp"
#include "keynet/kspm_io.hpp"

namespace keynet::keyed {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

json shape_json(const Shape& s) { return {s.channels, s.height, s.width}; }

Shape parse_shape(const json& j) {
  if (!j.is_array() || j.size() != 3) throw FormatError("shape must be [c, h, w]");
  return {j[0].get<std::size_t>(), j[1].get<std::size_t>(), j[2].get<std::size_t>()};
}

std::string numbered(const char* prefix, std::size_t i, const char* suffix) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%s%03zu%s", prefix, i, suffix);
  return buf;
}

}  // namespace

void save_keynet(const fs::path& dir, const KeyedNetwork& kn,
                 std::optional<std::size_t> tile_size) {
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "keynet-keyed";
  manifest["version"] = 1;
  manifest["alpha"] = kn.alpha;
  manifest["fingerprint"] = kn.fingerprint;
  manifest["input_shape"] = shape_json(kn.input_shape);
  manifest["output_shape"] = shape_json(kn.output_shape);
  json layers = json::array();
  for (std::size_t i = 0; i < kn.layers.size(); ++i) {
    const KeyedLayer& l = kn.layers[i];
    std::string bytes;
    std::string file;
    json entry;
    if (tile_size) {
      bytes = sparse::encode_kstm(sparse::to_tiled(l.matrix, *tile_size));
      file = numbered("layer_", i, ".kstm");
      entry["encoding"] = "kstm";
      entry["tile_size"] = *tile_size;
    } else {
      bytes = sparse::encode_kspm(l.matrix);
      file = numbered("layer_", i, ".kspm");
      entry["encoding"] = "kspm";
    }
    sparse::write_file_bytes(dir / file, bytes);
    entry["kind"] = l.relu ? "relu" : "linear";
    entry["in_shape"] = shape_json(l.in_shape);
    entry["out_shape"] = shape_json(l.out_shape);
    entry["file"] = file;
    entry["sha256"] = sha256_hex(bytes);
    layers.push_back(std::move(entry));
  }
  manifest["layers"] = std::move(layers);
  sparse::write_file_bytes(dir / "manifest.json", manifest.dump(2) + "\n");
}

KeyedNetwork load_keynet(const fs::path& dir) {
  try {
    const json manifest = json::parse(sparse::read_file_bytes(dir / "manifest.json"));
    if (manifest.value("format", "") != "keynet-keyed")
      throw FormatError(dir.string() + " is not a keynet container");
    KeyedNetwork kn;
    kn.alpha = manifest.at("alpha");
    kn.fingerprint = manifest.at("fingerprint");
    kn.input_shape = parse_shape(manifest.at("input_shape"));
    kn.output_shape = parse_shape(manifest.at("output_shape"));
    const auto& layers = manifest.at("layers");
    for (std::size_t i = 0; i < layers.size(); ++i) {
      const auto& entry = layers[i];
      const std::string file = entry.at("file");
      const std::string bytes = sparse::read_file_bytes(dir / file);
      if (sha256_hex(bytes) != entry.at("sha256").get<std::string>())
        throw IntegrityError("keynet layer " + std::to_string(i) + " (" + file +
                             "): digest mismatch",
                             i);
      KeyedLayer l;
      l.relu = entry.at("kind").get<std::string>() == "relu";
      l.in_shape = parse_shape(entry.at("in_shape"));
      l.out_shape = parse_shape(entry.at("out_shape"));
      const std::string enc = entry.at("encoding");
      if (enc == "kspm") {
        l.matrix = sparse::decode_kspm(bytes);
      } else if (enc == "kstm") {
        l.matrix = sparse::from_tiled(sparse::decode_kstm(bytes));
      } else {
        throw FormatError("keynet layer " + std::to_string(i) + ": unknown encoding " + enc);
      }
      if (l.matrix.rows() != l.out_shape.size() + 1 ||
          l.matrix.cols() != l.in_shape.size() + 1)
        throw FormatError("keynet layer " + std::to_string(i) +
                          ": matrix shape does not match manifest");
      kn.layers.push_back(std::move(l));
    }
    return kn;
  } catch (const json::exception& e) {
    throw FormatError(std::string("keynet manifest: ") + e.what());
  }
}

void save_chain(const fs::path& dir, const KeyChain& chain) {
  fs::create_directories(dir);
  json j;
  j["format"] = "keynet-keychain";
  j["version"] = 1;
  j["alpha"] = chain.alpha;
  j["seed"] = chain.seed;
  j["output_public"] = chain.output_public;
  json bounds = json::array();
  for (std::size_t i = 0; i < chain.keys.size(); ++i) {
    const std::string name = numbered("key_", i, "");
    keys::save_key(dir / name, chain.keys[i]);
    bounds.push_back({{"dir", name}, {"shape", shape_json(chain.shapes[i])}});
  }
  j["boundaries"] = std::move(bounds);
  sparse::write_file_bytes(dir / "chain.json", j.dump(2) + "\n");
}

KeyChain load_chain(const fs::path& dir) {
  try {
    const json j = json::parse(sparse::read_file_bytes(dir / "chain.json"));
    if (j.value("format", "") != "keynet-keychain")
      throw FormatError(dir.string() + " is not a key chain directory");
    KeyChain chain;
    chain.alpha = j.at("alpha");
    chain.seed = j.at("seed");
    chain.output_public = j.at("output_public");
    for (const auto& b : j.at("boundaries")) {
      chain.shapes.push_back(parse_shape(b.at("shape")));
      chain.keys.push_back(keys::load_key(dir / b.at("dir").get<std::string>()));
      if (chain.keys.back().dim() != chain.shapes.back().size())
        throw FormatError("key chain: key dimension does not match boundary shape");
    }
    if (chain.keys.empty()) throw FormatError("key chain is empty");
    return chain;
  } catch (const json::exception& e) {
    throw FormatError(std::string("chain.json: ") + e.what());
  }
}

}  // namespace keynet::keyed
