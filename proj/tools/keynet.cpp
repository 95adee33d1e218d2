// keynet command-line tool. JSON results go to stdout, human summaries to
// stderr, artifacts to the paths given on the command line.
//
// Exit codes: 0 success, 1 contract or verification failure, 2 usage error.

#include <unistd.h>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "keynet/analysis.hpp"
#include "keynet/errors.hpp"
#include "keynet/hash.hpp"
#include "keynet/image_io.hpp"
#include "keynet/key_io.hpp"
#include "keynet/keyed.hpp"
#include "keynet/keynet_io.hpp"
#include "keynet/keys.hpp"
#include "keynet/kspm_io.hpp"
#include "keynet/model_io.hpp"
#include "keynet/netir.hpp"
#include "keynet/parallel.hpp"
#include "keynet/rng.hpp"
#include "keynet/sensor.hpp"

namespace {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace keynet;

constexpr const char* kToolVersion = "0.1.0";

// Directory digest: SHA-256 over sorted "relative-path digest" lines.
std::string digest(const fs::path& p) {
  if (!fs::is_directory(p)) return sha256_file(p);
  std::vector<std::string> lines;
  for (const auto& e : fs::recursive_directory_iterator(p)) {
    if (!e.is_regular_file()) continue;
    lines.push_back(fs::relative(e.path(), p).generic_string() + " " + sha256_file(e.path()));
  }
  std::sort(lines.begin(), lines.end());
  std::string all;
  for (const auto& l : lines) all += l + "\n";
  return sha256_hex(all);
}

bool is_raw(const fs::path& p) { return p.extension() != ".pgm"; }

bool has_sidecar(const fs::path& p) {
  return !fs::is_directory(p) && fs::is_regular_file(p.string() + ".json");
}

struct Run {
  std::vector<std::string> argv;
  std::string subcommand;
  json params = json::object();
  json seeds = json::object();
  json inputs = json::object();
  json outputs = json::object();
  json result = json::object();

  void input(const fs::path& p) {
    inputs[p.string()] = digest(p);
    if (has_sidecar(p)) inputs[p.string() + ".json"] = digest(p.string() + ".json");
  }
  void output(const fs::path& p) {
    outputs[p.string()] = digest(p);
    if (has_sidecar(p)) outputs[p.string() + ".json"] = digest(p.string() + ".json");
  }

  json manifest() const {
    json m;
    m["tool"] = "keynet";
    m["version"] = kToolVersion;
    m["subcommand"] = subcommand;
    m["argv"] = argv;
    m["params"] = params;
    m["seeds"] = seeds;
    m["threads"] = worker_count();
    m["inputs"] = inputs;
    m["outputs"] = outputs;
    return m;
  }
};

// Exit code 1 with the result already filled in.
struct VerificationFailed {};

// ---- network sources --------------------------------------------------------

struct ModelSource {
  std::string model;
  std::string network = "example";
  std::uint64_t model_seed = 0;

  void add(CLI::App* sub) {
    sub->add_option("--model", model, "Model container directory or flat JSON weights file");
    sub->add_option("--network", network, "Built-in network when --model is absent")
        ->check(CLI::IsMember({"example", "lenet", "allconv"}))
        ->capture_default_str();
    sub->add_option("--model-seed", model_seed, "Weight seed for built-in networks")
        ->capture_default_str();
  }

  ir::NetworkDef load(Run& run) const {
    if (!model.empty()) {
      run.params["model"] = model;
      run.input(model);
      return fs::is_directory(model) ? ir::load_model(model) : ir::load_flat_json(model);
    }
    run.params["network"] = network;
    if (network == "example") return ir::keynet_example();
    run.params["model_seed"] = model_seed;
    run.seeds["model"] = model_seed;
    return network == "lenet" ? ir::lenet_topology(model_seed) : ir::allconv_topology(model_seed);
  }
};

// ---- image helpers ----------------------------------------------------------

void write_image(const fs::path& path, const sensor::Image& img, unsigned maxval) {
  if (is_raw(path)) {
    io::write_raw(path, {{1, img.height, img.width}, img.pixels, false, {}});
  } else {
    io::write_pgm(path, img, maxval);
  }
}

sensor::Image read_plane(const fs::path& path) {
  const ir::Tensor t = io::read_image(path);
  if (t.shape.channels != 1)
    throw ShapeError(path.string() + ": expected a single-channel image, got " + ir::to_string(t.shape));
  return io::to_image(t);
}

keyed::EncodedImage read_encoded(const fs::path& path) {
  io::RawArray raw = io::read_raw(path);
  if (!raw.homogeneous) throw ContractError(path.string() + ": not an encoded (homogeneous) array");
  return {std::move(raw.data), raw.fingerprint};
}

json vector_json(std::span<const double> v) { return json(std::vector<double>(v.begin(), v.end())); }

double max_abs(std::span<const double> v) {
  double m = 0.0;
  for (const double x : v) m = std::max(m, std::abs(x));
  return m;
}

// ---- keygen -----------------------------------------------------------------

struct KeygenOpts {
  std::size_t dim = 0;
  std::size_t alpha = 1;
  std::uint64_t seed = 0;
  double gain_lo = 0.5;
  double gain_hi = 2.0;
  bool bias = true;
  double bias_lo = 0.0;
  double bias_hi = 1.0;
  std::string out;
};

void keygen(Run& run, const KeygenOpts& o) {
  keys::KeyGenConfig c;
  c.dim = o.dim;
  c.alpha = o.alpha;
  c.seed = o.seed;
  c.gain_lo = o.gain_lo;
  c.gain_hi = o.gain_hi;
  c.bias = o.bias;
  c.bias_lo = o.bias ? o.bias_lo : 0.0;
  c.bias_hi = o.bias ? o.bias_hi : 0.0;
  run.params = {{"dim", o.dim}, {"alpha", o.alpha},     {"gain_lo", o.gain_lo}, {"gain_hi", o.gain_hi},
                {"bias", o.bias}, {"bias_lo", c.bias_lo}, {"bias_hi", c.bias_hi}, {"out", o.out}};
  run.seeds["key"] = o.seed;
  const auto k = keys::gen_key(c);
  keys::save_key(o.out, k);
  run.output(o.out);
  run.result = {{"dim", k.dim()},
                {"alpha", k.alpha()},
                {"fingerprint", k.fingerprint()},
                {"forward_nnz", k.forward().nnz()},
                {"inverse_nnz", k.inverse().nnz()}};
  std::cerr << "keygen: dim " << k.dim() << ", alpha " << k.alpha() << ", fingerprint "
            << k.fingerprint().substr(0, 16) << " -> " << o.out << "\n";
}

// ---- build ------------------------------------------------------------------

struct BuildOpts {
  ModelSource src;
  std::size_t alpha = 1;
  std::uint64_t seed = 0;
  bool private_output = false;
  std::optional<std::size_t> tile_size;
  std::string out;
  std::string keys;
};

void build(Run& run, const BuildOpts& o) {
  const auto net = o.src.load(run);
  run.params["alpha"] = o.alpha;
  run.params["private_output"] = o.private_output;
  run.params["tile_size"] = o.tile_size ? json(*o.tile_size) : json(nullptr);
  run.params["out"] = o.out;
  run.params["keys"] = o.keys;
  run.seeds["keys"] = o.seed;
  keyed::KeyChainOptions ko;
  ko.alpha = o.alpha;
  ko.seed = o.seed;
  ko.output_public = !o.private_output;
  const auto lowered = ir::lower(net);
  const auto chain = keyed::assign_keys(net, ko);
  const auto kn = keyed::build_keynet(lowered, chain);
  keyed::save_keynet(o.out, kn, o.tile_size);
  keyed::save_chain(o.keys, chain);
  run.output(o.out);
  run.output(o.keys);
  json layers = json::array();
  for (std::size_t i = 0; i < kn.layers.size(); ++i) {
    const auto& l = kn.layers[i];
    layers.push_back({{"layer", i}, {"kind", l.relu ? "relu" : "linear"}, {"nnz", l.matrix.nnz()}});
  }
  run.result = {{"fingerprint", kn.fingerprint},
                {"alpha", kn.alpha},
                {"input_shape", ir::to_string(kn.input_shape)},
                {"output_shape", ir::to_string(kn.output_shape)},
                {"layers", layers}};
  std::cerr << "build: " << kn.layers.size() << " keyed layers, alpha " << kn.alpha << " -> " << o.out
            << " (keys -> " << o.keys << ")\n";
}

// ---- encode / decode-image --------------------------------------------------

struct EncodeOpts {
  std::string keys;
  std::string in;
  std::string out;
};

void encode(Run& run, const EncodeOpts& o) {
  run.params = {{"keys", o.keys}, {"in", o.in}, {"out", o.out}};
  run.input(o.keys);
  run.input(o.in);
  const auto chain = keyed::load_chain(o.keys);
  ir::Tensor img = io::read_image(o.in);
  const auto& shape = chain.shapes.front();
  if (img.shape.size() != shape.size())
    throw ShapeError("encode: image " + ir::to_string(img.shape) + " does not match key shape " +
                     ir::to_string(shape));
  img.shape = shape;
  const auto enc = keyed::encode_image(img, chain);
  io::write_raw(o.out, {shape, enc.values, true, enc.fingerprint});
  run.output(o.out);
  run.result = {{"fingerprint", enc.fingerprint}, {"length", enc.values.size()}};
  std::cerr << "encode: " << ir::to_string(shape) << " -> " << o.out << "\n";
}

void decode_image(Run& run, const EncodeOpts& o, unsigned maxval) {
  run.params = {{"keys", o.keys}, {"in", o.in}, {"out", o.out}, {"maxval", maxval}};
  run.input(o.keys);
  run.input(o.in);
  const auto chain = keyed::load_chain(o.keys);
  const auto img = keyed::decode_image(read_encoded(o.in), chain);
  if (is_raw(o.out)) {
    io::write_raw(o.out, {img.shape, img.data, false, {}});
  } else {
    if (img.shape.channels != 1) throw ShapeError("decode-image: PGM output needs a single channel");
    io::write_pgm(o.out, io::to_image(img), maxval);
  }
  run.output(o.out);
  run.result = {{"shape", ir::to_string(img.shape)}};
  std::cerr << "decode-image: " << ir::to_string(img.shape) << " -> " << o.out << "\n";
}

// ---- infer / decode ---------------------------------------------------------

struct InferOpts {
  std::string keynet;
  std::string in;
  std::string out;
};

void infer(Run& run, const InferOpts& o) {
  run.params = {{"keynet", o.keynet}, {"in", o.in}, {"out", o.out}};
  run.input(o.keynet);
  run.input(o.in);
  const auto kn = keyed::load_keynet(o.keynet);
  const auto y = keyed::keyed_forward(kn, read_encoded(o.in));
  if (!o.out.empty()) {
    io::write_raw(o.out, {kn.output_shape, y, true, {}});
    run.output(o.out);
  }
  run.result = {{"output_shape", ir::to_string(kn.output_shape)},
                {"values", vector_json(std::span<const double>(y).first(y.size() - 1))}};
  std::cerr << "infer: " << kn.layers.size() << " layers, output " << ir::to_string(kn.output_shape) << "\n";
}

struct DecodeOpts {
  std::string keys;
  std::string in;
  std::string out;
};

void decode(Run& run, const DecodeOpts& o) {
  run.params = {{"keys", o.keys}, {"in", o.in}, {"out", o.out}};
  run.input(o.keys);
  run.input(o.in);
  const auto chain = keyed::load_chain(o.keys);
  const io::RawArray raw = io::read_raw(o.in);
  if (!raw.homogeneous) throw ContractError(o.in + ": not a homogeneous keyed output");
  const auto y = keyed::decode_output(chain, raw.data);
  const std::span<const double> values = std::span<const double>(y).first(y.size() - 1);
  if (!o.out.empty()) {
    io::write_raw(o.out, {raw.shape, {values.begin(), values.end()}, false, {}});
    run.output(o.out);
  }
  const auto best = std::max_element(values.begin(), values.end());
  run.result = {{"values", vector_json(values)},
                {"argmax", values.empty() ? json(nullptr) : json(best - values.begin())}};
  std::cerr << "decode: " << values.size() << " outputs\n";
}

// ---- verify -----------------------------------------------------------------

struct VerifyOpts {
  ModelSource src;
  std::string keynet;
  std::string keys;
  std::size_t trials = 100;
  double tol = 1e-6;
  std::uint64_t seed = 0;
};

void verify(Run& run, const VerifyOpts& o) {
  const auto net = o.src.load(run);
  run.params["keynet"] = o.keynet;
  run.params["keys"] = o.keys;
  run.params["trials"] = o.trials;
  run.params["tol"] = o.tol;
  run.seeds["trials"] = o.seed;
  run.input(o.keynet);
  run.input(o.keys);
  keyed::KeyedNetwork kn;
  try {
    kn = keyed::load_keynet(o.keynet);
  } catch (const IntegrityError& e) {
    run.result = {{"pass", false},
                  {"reason", "integrity"},
                  {"failing_layer", e.layer() ? json(*e.layer()) : json(nullptr)},
                  {"detail", e.what()}};
    std::cerr << "verify: FAIL, " << e.what() << "\n";
    throw VerificationFailed{};
  }
  const auto chain = keyed::load_chain(o.keys);
  if (chain.image_key().fingerprint() != kn.fingerprint) {
    run.result = {{"pass", false}, {"reason", "wrong-sensor"}, {"failing_layer", nullptr}};
    std::cerr << "verify: FAIL, wrong-sensor: key chain does not belong to this keynet\n";
    throw VerificationFailed{};
  }
  const auto rep = keyed::verify_homomorphism(ir::lower(net), chain, kn, o.trials, o.tol, o.seed);
  run.result = {{"pass", rep.pass},
                {"trials", rep.trials},
                {"tolerance", rep.tolerance},
                {"max_rel_error", rep.max_rel_error},
                {"layer_max_rel_error", rep.layer_max_rel_error},
                {"failing_layer", rep.failing_layer ? json(*rep.failing_layer) : json(nullptr)}};
  std::cerr << "verify: " << (rep.pass ? "PASS" : "FAIL") << ", max relative error " << rep.max_rel_error;
  if (rep.failing_layer) std::cerr << ", first failing layer " << *rep.failing_layer;
  std::cerr << "\n";
  if (!rep.pass) throw VerificationFailed{};
}

// ---- stats ------------------------------------------------------------------

struct StatsOpts {
  ModelSource src;
  std::string keynet;
  std::size_t tile_size = sparse::kDefaultTileSize;
  std::string dump;
};

void stats(Run& run, const StatsOpts& o) {
  const auto net = o.src.load(run);
  run.params["keynet"] = o.keynet;
  run.params["tile_size"] = o.tile_size;
  run.params["dump_structure"] = o.dump;
  run.input(o.keynet);
  const auto kn = keyed::load_keynet(o.keynet);
  const auto lowered = ir::lower(net);
  const auto rep = keyed::memory_stats(kn, lowered, o.tile_size);
  const double bound = static_cast<double>(rep.alpha * rep.alpha);
  json layers = json::array();
  bool lemma2 = true;
  for (std::size_t i = 0; i < rep.layers.size(); ++i) {
    const auto& l = rep.layers[i];
    lemma2 = lemma2 && l.keyed_nnz <= rep.alpha * rep.alpha * l.plain_nnz;
    layers.push_back({{"layer", i},
                      {"kind", l.relu ? "relu" : "linear"},
                      {"plain_nnz", l.plain_nnz},
                      {"keyed_nnz", l.keyed_nnz},
                      {"ratio", l.ratio},
                      {"plain_coo_bytes", l.plain_coo_bytes},
                      {"plain_tiled_bytes", l.plain_tiled_bytes},
                      {"keyed_coo_bytes", l.keyed_coo_bytes},
                      {"keyed_tiled_bytes", l.keyed_tiled_bytes}});
  }
  run.result = {{"alpha", rep.alpha},
                {"tile_size", rep.tile_size},
                {"ratio_bound", bound},
                {"within_bound", lemma2},
                {"layers", layers},
                {"plain_coo_bytes", rep.plain_coo_bytes},
                {"plain_tiled_bytes", rep.plain_tiled_bytes},
                {"keyed_coo_bytes", rep.keyed_coo_bytes},
                {"keyed_tiled_bytes", rep.keyed_tiled_bytes}};
  if (!o.dump.empty()) {
    // Non-zero pattern of every keyed block, for external structure study.
    json dump = json::array();
    for (std::size_t i = 0; i < kn.layers.size(); ++i) {
      const auto& m = kn.layers[i].matrix;
      const auto block = sparse::coo_block(m, m.rows() - 1, m.cols() - 1);
      json entries = json::array();
      for (const auto& t : block.triplets()) entries.push_back({t.row, t.col});
      dump.push_back({{"layer", i},
                      {"rows", block.rows()},
                      {"cols", block.cols()},
                      {"row_counts", block.row_counts()},
                      {"col_counts", block.col_counts()},
                      {"entries", std::move(entries)}});
    }
    sparse::write_file_bytes(o.dump, dump.dump() + "\n");
    run.output(o.dump);
  }
  std::cerr << "stats: alpha " << rep.alpha << ", keyed COO " << rep.keyed_coo_bytes << " B, keyed tiled "
            << rep.keyed_tiled_bytes << " B, nnz ratio bound " << (lemma2 ? "holds" : "VIOLATED") << "\n";
}

// ---- simulate ---------------------------------------------------------------

sensor::FiberBundleConfig parse_fiber(const json& j, std::size_t h, std::size_t w) {
  sensor::FiberBundleConfig c;
  c.height = j.value("height", h);
  c.width = j.value("width", w);
  c.pad = j.value("pad", c.pad);
  c.core_rows = j.value("core_rows", c.core_rows);
  c.core_cols = j.value("core_cols", c.core_cols);
  c.core_area_ratio = j.value("core_area_ratio", c.core_area_ratio);
  c.shear = j.value("shear", c.shear);
  c.blocking = j.value("blocking", c.blocking);
  c.crosstalk_v = j.value("crosstalk_v", c.crosstalk_v);
  c.crosstalk_h = j.value("crosstalk_h", c.crosstalk_h);
  c.routing = j.value("routing", c.routing);
  return c;
}

sensor::CmosConfig parse_cmos(const json& j, std::size_t h, std::size_t w) {
  sensor::CmosConfig c;
  c.height = j.value("height", h);
  c.width = j.value("width", w);
  c.quantum_efficiency = j.value("quantum_efficiency", c.quantum_efficiency);
  c.dark_mean0 = j.value("dark_mean0", c.dark_mean0);
  c.dark_var0 = j.value("dark_var0", c.dark_var0);
  c.dark_slope = j.value("dark_slope", c.dark_slope);
  c.integration_time = j.value("integration_time", c.integration_time);
  c.gain = j.value("gain", c.gain);
  c.system_gain = j.value("system_gain", c.system_gain);
  c.bias = j.value("bias", c.bias);
  c.adc_bits = j.value("adc_bits", c.adc_bits);
  c.adc_noise_var = j.value("adc_noise_var", c.adc_noise_var);
  c.mean_mode = j.value("mean_mode", c.mean_mode);
  c.gaussian_threshold = j.value("gaussian_threshold", c.gaussian_threshold);
  return c;
}

json read_json_file(const std::string& path) {
  try {
    return json::parse(sparse::read_file_bytes(path));
  } catch (const json::exception& e) {
    throw FormatError(path + ": " + e.what());
  }
}

struct SimulateOpts {
  std::string in;
  std::string out;
  std::string fiber_cfg;
  std::string cmos_cfg;
  std::string key;
  bool exact = false;
  std::uint64_t seed = 0;
  std::string report;
  std::string analog_out;
};

void simulate(Run& run, const SimulateOpts& o) {
  run.params = {{"in", o.in},   {"out", o.out},     {"fiber_cfg", o.fiber_cfg},   {"cmos_cfg", o.cmos_cfg},
                {"key", o.key}, {"exact", o.exact}, {"report", o.report}, {"analog_out", o.analog_out}};
  run.seeds["noise"] = o.seed;
  run.input(o.in);
  const sensor::Image img = read_plane(o.in);
  json fj = json::object(), cj = json::object();
  if (!o.fiber_cfg.empty()) {
    run.input(o.fiber_cfg);
    fj = read_json_file(o.fiber_cfg);
  }
  if (!o.cmos_cfg.empty()) {
    run.input(o.cmos_cfg);
    cj = read_json_file(o.cmos_cfg);
  }
  const auto fiber = parse_fiber(fj, img.height, img.width);
  const auto cmos = parse_cmos(cj, img.height, img.width);
  sensor::Realization r{fiber, cmos, false, 0.0};
  std::optional<keys::KeyMatrix> key;
  if (!o.key.empty()) {
    run.input(o.key);
    key = keys::load_key(o.key);
    r = sensor::realize_key(*key, fiber, cmos, o.exact);
  }
  const auto out = sensor::run_pipeline(img, r, o.seed);
  const unsigned maxval = static_cast<unsigned>(std::min<double>(65535.0, std::ldexp(1.0, r.cmos.adc_bits) - 1));
  write_image(o.out, out.digital, maxval);
  run.output(o.out);
  if (!o.analog_out.empty()) {
    write_image(o.analog_out, out.analog, maxval);
    run.output(o.analog_out);
  }
  double sum = 0.0;
  std::size_t clipped = 0;
  for (const double v : out.digital.pixels) {
    sum += v;
    clipped += v <= 0.0 || v >= static_cast<double>(maxval);
  }
  json rep = {{"height", img.height},
              {"width", img.width},
              {"adc_bits", r.cmos.adc_bits},
              {"digital_mean", sum / static_cast<double>(out.digital.pixels.size())},
              {"digital_min", *std::min_element(out.digital.pixels.begin(), out.digital.pixels.end())},
              {"digital_max", *std::max_element(out.digital.pixels.begin(), out.digital.pixels.end())},
              {"saturated_or_zero", clipped}};
  if (key) {
    // Deviation of the physical encoding from the ideal key action.
    std::vector<double> v = img.pixels;
    v.push_back(1.0);
    const auto ideal = keys::key_apply(*key, v);
    double dev = 0.0;
    for (std::size_t i = 0; i < img.pixels.size(); ++i)
      dev = std::max(dev, std::abs(out.digital.pixels[i] - ideal[i]));
    rep["key_fingerprint"] = key->fingerprint();
    rep["realization_exact"] = r.exact;
    rep["mixing_residual"] = r.mixing_residual;
    rep["max_deviation_from_key"] = dev;
    rep["ideal_max"] = max_abs(std::span<const double>(ideal).first(img.pixels.size()));
  }
  if (!o.report.empty()) {
    sparse::write_file_bytes(o.report, rep.dump(2) + "\n");
    run.output(o.report);
  }
  run.result = rep;
  std::cerr << "simulate: " << img.height << "x" << img.width << " -> " << o.out << "\n";
}

// ---- attack -----------------------------------------------------------------

struct AttackOpts {
  std::string keynet;
  std::string key;
  std::string probes = "basis";
  std::size_t n = 0;
  std::uint64_t seed = 0;
  double tol = 1e-9;
  std::string out;
};

void attack(Run& run, const AttackOpts& o) {
  run.params = {{"keynet", o.keynet}, {"key", o.key}, {"probes", o.probes},
                {"n", o.n},           {"tol", o.tol}, {"out", o.out}};
  run.seeds["probes"] = o.seed;
  analysis::AttackConfig cfg;
  cfg.probes = o.probes == "random" ? analysis::ProbeKind::kRandom : analysis::ProbeKind::kBasis;
  cfg.seed = o.seed;
  cfg.tolerance = o.tol;
  sparse::CooMatrix truth;
  analysis::AffineOracle oracle;
  std::size_t in_dim = 0, out_dim = 0;
  std::optional<keys::KeyMatrix> key;
  std::optional<keyed::KeyedNetwork> kn;
  if (!o.key.empty()) {
    run.input(o.key);
    key = keys::load_key(o.key);
    in_dim = key->dim();
    out_dim = key->dim() + 1;
    truth = key->forward();
    oracle = [&key](std::span<const double> x) { return keys::key_apply(*key, x); };
  } else {
    run.input(o.keynet);
    kn = keyed::load_keynet(o.keynet);
    if (kn->layers.empty()) throw ShapeError("attack: keynet has no layers");
    // The first keyed layer as a black box on encoded inputs.
    const auto& m = kn->layers.front().matrix;
    in_dim = m.cols() - 1;
    out_dim = m.rows();
    truth = m;
    const bool relu = kn->layers.front().relu;
    oracle = [&m, relu](std::span<const double> x) {
      auto y = sparse::coo_matvec(m, x);
      if (relu) ir::relu_inplace(std::span<double>(y).first(y.size() - 1));
      return y;
    };
  }
  cfg.n_probes = o.n != 0 ? o.n : in_dim + 1;
  const auto res = analysis::chosen_plaintext_attack(oracle, in_dim, out_dim, cfg);
  if (!o.out.empty()) {
    sparse::write_file_bytes(o.out, sparse::encode_kspm(res.recovered));
    run.output(o.out);
  }
  run.result = {{"target", key ? "key" : "keynet-layer-0"},
                {"in_dim", in_dim},
                {"probes", res.probes},
                {"residual", res.residual},
                {"success", res.success},
                {"max_entry_error", sparse::max_abs_diff(res.recovered, truth)}};
  std::cerr << "attack: " << res.probes << " probes, holdout residual " << res.residual << ", "
            << (res.success ? "recovered" : "not recovered") << "\n";
}

// ---- ssim -------------------------------------------------------------------

struct SsimOpts {
  std::string ref;
  std::string test;
  double range = 255.0;
  std::size_t window = 7;
};

void ssim(Run& run, const SsimOpts& o) {
  run.params = {{"ref", o.ref}, {"test", o.test}, {"range", o.range}, {"window", o.window}};
  run.input(o.ref);
  run.input(o.test);
  const double s = analysis::ssim(read_plane(o.ref), read_plane(o.test),
                                  analysis::SsimParams::standard(o.range, o.window));
  run.result = {{"ssim", s}};
  std::cerr << "ssim: " << s << "\n";
}

// ---- demo -------------------------------------------------------------------

struct DemoOpts {
  ModelSource src;
  std::size_t alpha = 2;
  std::uint64_t seed = 0;
  bool private_output = false;
  std::optional<std::size_t> tile_size;
  std::size_t trials = 100;
  double tol = 1e-6;
  std::string out;
};

void demo(Run& run, const DemoOpts& o) {
  const auto net = o.src.load(run);
  run.params["alpha"] = o.alpha;
  run.params["private_output"] = o.private_output;
  run.params["tile_size"] = o.tile_size ? json(*o.tile_size) : json(nullptr);
  run.params["trials"] = o.trials;
  run.params["tol"] = o.tol;
  run.params["out"] = o.out;
  run.seeds["keys"] = o.seed;
  run.seeds["trials"] = o.seed;

  const bool scratch = o.out.empty();
  const fs::path dir = scratch ? fs::temp_directory_path() / ("keynet-demo-" + std::to_string(::getpid()))
                               : fs::path(o.out);
  struct Cleanup {
    fs::path p;
    ~Cleanup() {
      std::error_code ec;
      if (!p.empty()) fs::remove_all(p, ec);
    }
  } cleanup{scratch ? dir : fs::path()};

  keyed::KeyChainOptions ko;
  ko.alpha = o.alpha;
  ko.seed = o.seed;
  ko.output_public = !o.private_output;
  const auto lowered = ir::lower(net);
  // keygen -> build, then through the on-disk formats.
  keyed::save_chain(dir / "keys", keyed::assign_keys(net, ko));
  const auto chain = keyed::load_chain(dir / "keys");
  keyed::save_keynet(dir / "keynet", keyed::build_keynet(lowered, chain), o.tile_size);
  const auto kn = keyed::load_keynet(dir / "keynet");

  ir::Tensor image;
  if (o.src.model.empty() && o.src.network == "example") {
    image = ir::keynet_example_image();
  } else {
    Rng rng = Rng(o.seed).split(7);
    image = {net.input_shape, std::vector<double>(net.input_shape.size())};
    for (auto& v : image.data) v = rng.uniform();
  }
  const auto enc = keyed::encode_image(image, chain);
  io::write_raw(dir / "encoded.raw", {net.input_shape, enc.values, true, enc.fingerprint});
  const auto y_hat = keyed::keyed_forward(kn, read_encoded(dir / "encoded.raw"));
  const auto y = keyed::decode_output(chain, y_hat);
  const auto plain = ir::plain_forward(lowered, ir::vectorize(image, net.input_shape));
  double diff = 0.0;
  for (std::size_t i = 0; i < plain.size(); ++i) diff = std::max(diff, std::abs(y[i] - plain[i]));
  const double rel = diff / (1.0 + max_abs(plain));
  const auto rep = keyed::verify_homomorphism(lowered, chain, kn, o.trials, o.tol, o.seed);
  const bool pass = rel <= o.tol && rep.pass;
  if (!scratch) {
    run.output(dir / "keys");
    run.output(dir / "keynet");
    run.output(dir / "encoded.raw");
  }
  run.result = {{"pass", pass},
                {"fingerprint", kn.fingerprint},
                {"layers", kn.layers.size()},
                {"input", vector_json(image.data)},
                {"plain_output", vector_json(std::span<const double>(plain).first(plain.size() - 1))},
                {"decoded_output", vector_json(std::span<const double>(y).first(y.size() - 1))},
                {"output_rel_error", rel},
                {"verify", {{"trials", rep.trials},
                            {"max_rel_error", rep.max_rel_error},
                            {"failing_layer", rep.failing_layer ? json(*rep.failing_layer) : json(nullptr)},
                            {"pass", rep.pass}}}};
  if (image.data.size() > 64) run.result.erase("input");
  std::cerr << "demo: keygen -> build -> encode -> infer -> decode -> verify, " << (pass ? "PASS" : "FAIL")
            << " (output error " << rel << ", homomorphism error " << rep.max_rel_error << ")\n";
  if (!pass) throw VerificationFailed{};
}

// ---- error reporting --------------------------------------------------------

const char* error_kind(const std::exception& e) {
  if (dynamic_cast<const WrongSensor*>(&e)) return "wrong-sensor";
  if (dynamic_cast<const IntegrityError*>(&e)) return "integrity";
  if (dynamic_cast<const FormatError*>(&e)) return "format";
  if (dynamic_cast<const ShapeError*>(&e)) return "shape";
  if (dynamic_cast<const ParameterError*>(&e)) return "parameter";
  if (dynamic_cast<const UnsupportedLayer*>(&e)) return "unsupported-layer";
  if (dynamic_cast<const SingularSystem*>(&e)) return "singular-system";
  if (dynamic_cast<const ContractError*>(&e)) return "contract";
  if (dynamic_cast<const fs::filesystem_error*>(&e)) return "io";
  return "error";
}

void emit(const Run& run, const json& extra) {
  json out;
  out["manifest"] = run.manifest();
  for (auto it = extra.begin(); it != extra.end(); ++it) out[it.key()] = it.value();
  std::cout << out.dump(2) << "\n";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"keynet: keyed sparse networks, optical sensor simulation and attack analysis"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Run run;
  run.argv.assign(argv + 1, argv + argc);

  KeygenOpts kg;
  auto* s_keygen = app.add_subcommand("keygen", "Generate one image key");
  s_keygen->add_option("--dim", kg.dim, "Key dimension")->required();
  s_keygen->add_option("--alpha", kg.alpha, "Mixing block size")->capture_default_str();
  s_keygen->add_option("--seed", kg.seed, "Key seed")->required();
  s_keygen->add_option("--gain-lo", kg.gain_lo)->capture_default_str();
  s_keygen->add_option("--gain-hi", kg.gain_hi)->capture_default_str();
  s_keygen->add_flag("--bias,!--no-bias", kg.bias, "Include a random bias column")->capture_default_str();
  s_keygen->add_option("--bias-lo", kg.bias_lo)->capture_default_str();
  s_keygen->add_option("--bias-hi", kg.bias_hi)->capture_default_str();
  s_keygen->add_option("--out", kg.out, "Key directory")->required();

  BuildOpts bo;
  auto* s_build = app.add_subcommand("build", "Assign keys and build a keyed network");
  bo.src.add(s_build);
  s_build->add_option("--alpha", bo.alpha)->capture_default_str();
  s_build->add_option("--seed", bo.seed, "Key chain seed")->required();
  s_build->add_flag("--private-output", bo.private_output, "Key the network output too");
  s_build->add_option("--tile-size", bo.tile_size, "Store layers in the tiled format");
  s_build->add_option("--out", bo.out, "Keynet container directory")->required();
  s_build->add_option("--keys", bo.keys, "Secret key chain directory")->required();

  EncodeOpts eo;
  auto* s_encode = app.add_subcommand("encode", "Encode an image with the chain's image key");
  s_encode->add_option("--keys", eo.keys)->required();
  s_encode->add_option("--in", eo.in, "PGM or raw image")->required();
  s_encode->add_option("--out", eo.out, "Encoded raw array")->required();

  EncodeOpts dio;
  unsigned maxval = 255;
  auto* s_dimg = app.add_subcommand("decode-image", "Invert an image encoding");
  s_dimg->add_option("--keys", dio.keys)->required();
  s_dimg->add_option("--in", dio.in)->required();
  s_dimg->add_option("--out", dio.out, "PGM or raw output")->required();
  s_dimg->add_option("--maxval", maxval, "PGM maxval")->check(CLI::Range(1u, 65535u))->capture_default_str();

  InferOpts io_;
  auto* s_infer = app.add_subcommand("infer", "Run a keyed network on an encoded image");
  s_infer->add_option("--keynet", io_.keynet)->required();
  s_infer->add_option("--in", io_.in)->required();
  s_infer->add_option("--out", io_.out, "Keyed output raw array");

  DecodeOpts dco;
  auto* s_decode = app.add_subcommand("decode", "Decode a keyed network output");
  s_decode->add_option("--keys", dco.keys)->required();
  s_decode->add_option("--in", dco.in)->required();
  s_decode->add_option("--out", dco.out);

  VerifyOpts vo;
  auto* s_verify = app.add_subcommand("verify", "Check the homomorphism layer by layer");
  vo.src.add(s_verify);
  s_verify->add_option("--keynet", vo.keynet)->required();
  s_verify->add_option("--keys", vo.keys)->required();
  s_verify->add_option("--trials", vo.trials)->capture_default_str();
  s_verify->add_option("--tol", vo.tol)->capture_default_str();
  s_verify->add_option("--seed", vo.seed, "Trial input seed")->required();

  StatsOpts so;
  auto* s_stats = app.add_subcommand("stats", "Per-layer sparsity and memory report");
  so.src.add(s_stats);
  s_stats->add_option("--keynet", so.keynet)->required();
  s_stats->add_option("--tile-size", so.tile_size)->capture_default_str();
  s_stats->add_option("--dump-structure", so.dump, "Write keyed non-zero patterns as JSON");

  SimulateOpts sim;
  auto* s_sim = app.add_subcommand("simulate", "Fiber bundle and CMOS sensor simulation");
  s_sim->add_option("--in", sim.in, "Photon image (PGM or raw)")->required();
  s_sim->add_option("--out", sim.out, "Digital image (PGM or raw)")->required();
  s_sim->add_option("--fiber-cfg", sim.fiber_cfg, "Fiber bundle JSON config");
  s_sim->add_option("--cmos-cfg", sim.cmos_cfg, "CMOS JSON config");
  s_sim->add_option("--key", sim.key, "Realize this image key on the sensor");
  s_sim->add_flag("--exact", sim.exact, "Refuse approximate key realizations");
  s_sim->add_option("--seed", sim.seed, "Noise seed")->required();
  s_sim->add_option("--report", sim.report, "Write the report JSON here as well");
  s_sim->add_option("--analog-out", sim.analog_out, "Analog signal before quantization");

  AttackOpts ao;
  auto* s_attack = app.add_subcommand("attack", "Chosen-plaintext recovery of an affine map");
  auto* a_kn = s_attack->add_option("--keynet", ao.keynet, "Attack the first keyed layer");
  auto* a_key = s_attack->add_option("--key", ao.key, "Attack an image key");
  a_kn->excludes(a_key);
  s_attack->add_option("--probes", ao.probes)
      ->check(CLI::IsMember({"basis", "random"}))
      ->capture_default_str();
  s_attack->add_option("--n", ao.n, "Random probe count (default in_dim + 1)");
  s_attack->add_option("--seed", ao.seed, "Probe seed")->required();
  s_attack->add_option("--tol", ao.tol)->capture_default_str();
  s_attack->add_option("--out", ao.out, "Write the recovered matrix as KSPM");

  SsimOpts sso;
  auto* s_ssim = app.add_subcommand("ssim", "Structural similarity of two images");
  s_ssim->add_option("--ref", sso.ref)->required();
  s_ssim->add_option("--test", sso.test)->required();
  s_ssim->add_option("--range", sso.range, "Dynamic range L")->capture_default_str();
  s_ssim->add_option("--window", sso.window)->capture_default_str();

  DemoOpts dm;
  auto* s_demo = app.add_subcommand("demo", "End-to-end pipeline self-check");
  dm.src.add(s_demo);
  s_demo->add_option("--alpha", dm.alpha)->capture_default_str();
  s_demo->add_option("--seed", dm.seed)->required();
  s_demo->add_flag("--private-output", dm.private_output);
  s_demo->add_option("--tile-size", dm.tile_size);
  s_demo->add_option("--trials", dm.trials)->capture_default_str();
  s_demo->add_option("--tol", dm.tol)->capture_default_str();
  s_demo->add_option("--out", dm.out, "Keep artifacts in this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }
  if (s_attack->parsed() && ao.key.empty() && ao.keynet.empty()) {
    std::cerr << "attack: one of --keynet or --key is required\n";
    return 2;
  }

  run.subcommand = app.get_subcommands().front()->get_name();
  try {
    if (s_keygen->parsed()) keygen(run, kg);
    else if (s_build->parsed()) build(run, bo);
    else if (s_encode->parsed()) encode(run, eo);
    else if (s_dimg->parsed()) decode_image(run, dio, maxval);
    else if (s_infer->parsed()) infer(run, io_);
    else if (s_decode->parsed()) decode(run, dco);
    else if (s_verify->parsed()) verify(run, vo);
    else if (s_stats->parsed()) stats(run, so);
    else if (s_sim->parsed()) simulate(run, sim);
    else if (s_attack->parsed()) attack(run, ao);
    else if (s_ssim->parsed()) ssim(run, sso);
    else if (s_demo->parsed()) demo(run, dm);
  } catch (const VerificationFailed&) {
    emit(run, {{"result", run.result}});
    return 1;
  } catch (const std::exception& e) {
    const char* kind = error_kind(e);
    emit(run, {{"error", {{"kind", kind}, {"message", e.what()}}}});
    std::cerr << "keynet " << run.subcommand << ": " << kind << ": " << e.what() << "\n";
    return dynamic_cast<const ParameterError*>(&e) ? 2 : 1;
  }
  emit(run, {{"result", run.result}});
  return 0;
}
