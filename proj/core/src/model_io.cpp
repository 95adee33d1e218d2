#include "keynet/model_io.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <functional>

#include <json.hpp>

#include "keynet/errors.hpp"
#include "keynet/hash.hpp"
#include "keynet/kspm_io.hpp"

namespace keynet::ir {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

static_assert(std::endian::native == std::endian::little,
              "f64 blobs are written in host order; little-endian hosts only");

const char* padding_name(Padding p) {
  switch (p) {
    case Padding::kZeros: return "zeros";
    case Padding::kReflect: return "reflect";
    case Padding::kReplicate: return "replicate";
    case Padding::kCircular: return "circular";
  }
  return "zeros";
}

Padding parse_padding(const std::string& s) {
  if (s == "zeros") return Padding::kZeros;
  if (s == "reflect") return Padding::kReflect;
  if (s == "replicate") return Padding::kReplicate;
  if (s == "circular") return Padding::kCircular;
  throw FormatError("unknown padding mode '" + s + "'");
}

// Reads weights either inline (flat JSON) or from a blob reference.
using ArrayLoader = std::function<std::vector<double>(const json&)>;

LayerSpec parse_layer(const json& j, const ArrayLoader& load) {
  const std::string type = j.at("type").get<std::string>();
  if (type == "conv2d") {
    Conv2d c;
    c.in_ch = j.at("in_ch");
    c.out_ch = j.at("out_ch");
    c.kh = j.at("kh");
    c.kw = j.at("kw");
    c.stride = j.value("stride", std::size_t{1});
    c.pad = j.value("pad", std::size_t{0});
    c.padding = parse_padding(j.value("padding", std::string("zeros")));
    if (c.padding != Padding::kZeros)
      throw ParameterError("conv2d: unsupported padding mode '" +
                           std::string(padding_name(c.padding)) + "'");
    c.weights = load(j.at("weights"));
    if (j.contains("bias") && !j.at("bias").is_null()) c.bias = load(j.at("bias"));
    return c;
  }
  if (type == "avgpool") {
    AvgPool p;
    p.k = j.at("k");
    p.stride = j.value("stride", p.k);
    return p;
  }
  if (type == "dense") {
    Dense d;
    d.in_dim = j.at("in_dim");
    d.out_dim = j.at("out_dim");
    d.weights = load(j.at("weights"));
    if (j.contains("bias") && !j.at("bias").is_null()) d.bias = load(j.at("bias"));
    return d;
  }
  if (type == "relu") return Relu{};
  throw UnsupportedLayer(type);
}

NetworkDef parse_network(const json& j, const ArrayLoader& load) {
  NetworkDef net;
  const auto& s = j.at("input_shape");
  if (!s.is_array() || s.size() != 3)
    throw FormatError("input_shape must be [channels, height, width]");
  net.input_shape = {s[0].get<std::size_t>(), s[1].get<std::size_t>(),
                     s[2].get<std::size_t>()};
  for (const auto& layer : j.at("layers")) net.layers.push_back(parse_layer(layer, load));
  infer_shapes(net);
  return net;
}

template <typename F>
auto with_json_errors(F&& f) {
  try {
    return f();
  } catch (const json::exception& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
}

}  // namespace

std::string encode_f64(std::span<const double> values) {
  std::string out(values.size() * sizeof(double), '\0');
  if (!values.empty()) std::memcpy(out.data(), values.data(), out.size());
  return out;
}

std::vector<double> decode_f64(const std::string& bytes) {
  if (bytes.size() % sizeof(double) != 0)
    throw FormatError("f64 blob length is not a multiple of 8");
  std::vector<double> v(bytes.size() / sizeof(double));
  if (!v.empty()) std::memcpy(v.data(), bytes.data(), bytes.size());
  return v;
}

void save_model(const fs::path& dir, const NetworkDef& net) {
  infer_shapes(net);
  fs::create_directories(dir);
  json manifest;
  manifest["format"] = "keynet-model";
  manifest["version"] = 1;
  manifest["input_shape"] = {net.input_shape.channels, net.input_shape.height,
                             net.input_shape.width};
  json layers = json::array();
  auto blob = [&](std::size_t i, const char* what, const std::vector<double>& v) {
    char name[64];
    std::snprintf(name, sizeof name, "layer_%03zu_%s.f64", i, what);
    const std::string bytes = encode_f64(v);
    sparse::write_file_bytes(dir / name, bytes);
    return json{{"file", name}, {"sha256", sha256_hex(bytes)}, {"count", v.size()}};
  };
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    json l;
    l["type"] = layer_kind(net.layers[i]);
    if (const auto* c = std::get_if<Conv2d>(&net.layers[i])) {
      l["in_ch"] = c->in_ch;
      l["out_ch"] = c->out_ch;
      l["kh"] = c->kh;
      l["kw"] = c->kw;
      l["stride"] = c->stride;
      l["pad"] = c->pad;
      l["padding"] = padding_name(c->padding);
      l["weights"] = blob(i, "weights", c->weights);
      l["bias"] = c->bias.empty() ? json(nullptr) : blob(i, "bias", c->bias);
    } else if (const auto* p = std::get_if<AvgPool>(&net.layers[i])) {
      l["k"] = p->k;
      l["stride"] = p->stride;
    } else if (const auto* d = std::get_if<Dense>(&net.layers[i])) {
      l["in_dim"] = d->in_dim;
      l["out_dim"] = d->out_dim;
      l["weights"] = blob(i, "weights", d->weights);
      l["bias"] = d->bias.empty() ? json(nullptr) : blob(i, "bias", d->bias);
    }
    layers.push_back(std::move(l));
  }
  manifest["layers"] = std::move(layers);
  sparse::write_file_bytes(dir / "manifest.json", manifest.dump(2) + "\n");
}

NetworkDef load_model(const fs::path& dir) {
  return with_json_errors([&] {
    const json manifest = json::parse(sparse::read_file_bytes(dir / "manifest.json"));
    if (manifest.value("format", "") != "keynet-model")
      throw FormatError(dir.string() + " is not a keynet model directory");
    ArrayLoader load = [&](const json& ref) {
      const std::string bytes =
          sparse::read_file_bytes(dir / ref.at("file").get<std::string>());
      if (sha256_hex(bytes) != ref.at("sha256").get<std::string>())
        throw IntegrityError("model blob " + ref.at("file").get<std::string>() +
                             ": digest mismatch");
      auto v = decode_f64(bytes);
      if (v.size() != ref.at("count").get<std::size_t>())
        throw FormatError("model blob " + ref.at("file").get<std::string>() +
                          ": wrong element count");
      return v;
    };
    return parse_network(manifest, load);
  });
}

NetworkDef parse_flat_json(const std::string& text) {
  return with_json_errors([&] {
    const json j = json::parse(text);
    ArrayLoader load = [](const json& arr) {
      if (!arr.is_array()) throw FormatError("flat model: weights must be arrays");
      return arr.get<std::vector<double>>();
    };
    return parse_network(j, load);
  });
}

NetworkDef load_flat_json(const fs::path& path) {
  return parse_flat_json(sparse::read_file_bytes(path));
}

}  // namespace keynet::ir
