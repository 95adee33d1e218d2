#include "keynet/keyed.hpp"

#include <algorithm>
#include <cmath>

#include "keynet/errors.hpp"
#include "keynet/rng.hpp"

namespace keynet::keyed {
namespace {

double inf_norm(std::span<const double> v) {
  double m = 0.0;
  for (const double x : v) m = std::max(m, std::abs(x));
  return m;
}

// |expected - actual|_inf / (1 + |expected|_inf)
double rel_error(std::span<const double> expected, std::span<const double> actual) {
  double worst = 0.0;
  for (std::size_t i = 0; i < expected.size(); ++i)
    worst = std::max(worst, std::abs(expected[i] - actual[i]));
  return worst / (1.0 + inf_norm(expected));
}

bool is_scaled_permutation(const KeyMatrix& k) {
  if (k.alpha() != 1 || k.has_bias()) return false;
  const std::size_t n = k.dim();
  std::vector<std::size_t> col_hits(n, 0);
  for (std::size_t r = 0; r < n; ++r) {
    const auto row = k.forward().row(r);
    if (row.size() != 1 || row.cols[0] >= n || !(row.values[0] > 0.0)) return false;
    ++col_hits[row.cols[0]];
  }
  return std::all_of(col_hits.begin(), col_hits.end(),
                     [](std::size_t c) { return c == 1; });
}

}  // namespace

KeyChain assign_keys(const ir::NetworkDef& net, const KeyChainOptions& opts) {
  if (opts.alpha == 0) throw ParameterError("assign_keys: alpha must be >= 1");
  if (opts.bias_lo < 0.0)
    throw ParameterError("assign_keys: key bias must be non-negative");
  KeyChain chain;
  chain.shapes = ir::infer_shapes(net);
  chain.alpha = opts.alpha;
  chain.seed = opts.seed;
  chain.output_public = opts.output_public;

  const Rng root(opts.seed);
  const std::size_t last = net.layers.size();
  for (std::size_t i = 0; i <= last; ++i) {
    const std::size_t dim = chain.shapes[i].size();
    const bool relu_boundary = i > 0 && ir::is_relu(net.layers[i - 1]);
    if (opts.identity || (i == last && opts.output_public)) {
      chain.keys.push_back(KeyMatrix::identity(dim));
      continue;
    }
    const std::uint64_t key_seed = root.split(i).seed();
    if (relu_boundary) {
      chain.keys.push_back(
          keys::gen_relu_key(dim, key_seed, opts.gain_lo, opts.gain_hi));
    } else {
      keys::KeyGenConfig cfg;
      cfg.dim = dim;
      cfg.alpha = std::min(opts.alpha, dim);
      cfg.seed = key_seed;
      cfg.gain_lo = opts.gain_lo;
      cfg.gain_hi = opts.gain_hi;
      cfg.bias = true;
      cfg.bias_lo = opts.bias_lo;
      cfg.bias_hi = opts.bias_hi;
      chain.keys.push_back(keys::gen_key(cfg));
    }
  }
  return chain;
}

KeyedNetwork build_keynet(const ir::LoweredNetwork& lowered, const KeyChain& chain) {
  if (chain.keys.size() != lowered.layers.size() + 1)
    throw ShapeError("build_keynet: key chain has " +
                     std::to_string(chain.keys.size()) + " keys for " +
                     std::to_string(lowered.layers.size()) + " layers");
  KeyedNetwork kn;
  kn.fingerprint = chain.image_key().fingerprint();
  kn.input_shape = lowered.input_shape;
  kn.output_shape = lowered.output_shape;
  kn.alpha = chain.alpha;
  kn.layers.reserve(lowered.layers.size());

  for (std::size_t i = 0; i < lowered.layers.size(); ++i) {
    const KeyMatrix& out_key = chain.keys[i + 1];
    const KeyMatrix& in_key = chain.keys[i];
    const std::string where = "build_keynet: layer " + std::to_string(i);
    if (const auto* a = std::get_if<ir::SparseAffine>(&lowered.layers[i])) {
      if (a->matrix.rows() != out_key.dim() + 1 || a->matrix.cols() != in_key.dim() + 1)
        throw ShapeError(where + ": key dimensions do not match layer shape");
      CooMatrix keyed = sparse::coo_matmul(
          sparse::coo_matmul(out_key.forward(), a->matrix), in_key.inverse());
      const std::size_t out_dim = a->out_shape.size();
      const std::size_t in_dim = a->in_shape.size();
      const std::size_t bound = out_key.alpha() * in_key.alpha() *
                                sparse::nnz_block(a->matrix, out_dim, in_dim);
      if (sparse::nnz_block(keyed, out_dim, in_dim) > bound)
        throw ContractError(where + ": keyed layer exceeds the alpha^2 sparsity bound");
      kn.layers.push_back({false, std::move(keyed), a->in_shape, a->out_shape});
    } else {
      const auto& marker = std::get<ir::ReluMarker>(lowered.layers[i]);
      if (out_key.dim() != marker.shape.size() || in_key.dim() != marker.shape.size())
        throw ShapeError(where + ": key dimensions do not match ReLU shape");
      if (!is_scaled_permutation(out_key))
        throw ContractError(where +
                            ": ReLU layer key must be a scaled permutation "
                            "(alpha 1, positive gains, no bias)");
      kn.layers.push_back({true, sparse::coo_matmul(out_key.forward(), in_key.inverse()),
                           marker.shape, marker.shape});
    }
  }
  return kn;
}

EncodedImage encode_image(const ir::Tensor& image, const KeyChain& chain) {
  const auto x = ir::vectorize(image, chain.shapes.front());
  return {keys::key_apply(chain.image_key(), x), chain.image_key().fingerprint()};
}

ir::Tensor decode_image(const EncodedImage& encoded, const KeyChain& chain) {
  const std::string fp = chain.image_key().fingerprint();
  if (encoded.fingerprint != fp) throw WrongSensor(fp, encoded.fingerprint);
  return ir::devectorize(keys::key_unapply(chain.image_key(), encoded.values),
                         chain.shapes.front());
}

DenseVector keyed_forward(const KeyedNetwork& kn, const EncodedImage& e) {
  if (e.fingerprint != kn.fingerprint) throw WrongSensor(kn.fingerprint, e.fingerprint);
  if (e.values.size() != kn.input_shape.size() + 1)
    throw ShapeError("keyed_forward: encoding of length " +
                     std::to_string(e.values.size()) + ", network expects " +
                     std::to_string(kn.input_shape.size() + 1));
  DenseVector v = e.values;
  for (std::size_t i = 0; i < kn.layers.size(); ++i) {
    const KeyedLayer& layer = kn.layers[i];
    if (layer.matrix.cols() != v.size())
      throw ShapeError("keyed_forward: layer " + std::to_string(i) + " shape mismatch");
    v = sparse::coo_matvec(layer.matrix, v);
    if (layer.relu) ir::relu_inplace(v);
  }
  return v;
}

DenseVector decode_output(const KeyChain& chain, std::span<const double> y_hat) {
  return keys::key_unapply(chain.output_key(), y_hat);
}

HomomorphismReport verify_homomorphism(const ir::LoweredNetwork& lowered,
                                       const KeyChain& chain,
                                       const KeyedNetwork& kn, std::size_t trials,
                                       double tol, std::uint64_t seed) {
  if (kn.layers.size() != lowered.layers.size() ||
      chain.keys.size() != lowered.layers.size() + 1)
    throw ShapeError("verify_homomorphism: network, chain and keynet disagree in depth");
  HomomorphismReport rep;
  rep.trials = trials;
  rep.tolerance = tol;
  rep.layer_max_rel_error.assign(lowered.layers.size(), 0.0);

  Rng rng(seed);
  const std::size_t n_in = lowered.input_shape.size();
  for (std::size_t t = 0; t < trials; ++t) {
    DenseVector x(n_in + 1, 1.0);
    for (std::size_t j = 0; j < n_in; ++j) x[j] = rng.uniform();
    DenseVector plain = x;
    DenseVector keyed = keys::key_apply(chain.image_key(), x);
    for (std::size_t i = 0; i < lowered.layers.size(); ++i) {
      if (const auto* a = std::get_if<ir::SparseAffine>(&lowered.layers[i])) {
        plain = sparse::coo_matvec(a->matrix, plain);
      } else {
        ir::relu_inplace(plain);
      }
      keyed = sparse::coo_matvec(kn.layers[i].matrix, keyed);
      if (kn.layers[i].relu) ir::relu_inplace(keyed);
      const DenseVector expected = sparse::coo_matvec(chain.keys[i + 1].forward(), plain);
      rep.layer_max_rel_error[i] =
          std::max(rep.layer_max_rel_error[i], rel_error(expected, keyed));
    }
  }
  if (!rep.layer_max_rel_error.empty()) rep.max_rel_error = rep.layer_max_rel_error.back();
  for (std::size_t i = 0; i < rep.layer_max_rel_error.size(); ++i) {
    if (!(rep.layer_max_rel_error[i] <= tol)) {
      rep.failing_layer = i;
      break;
    }
  }
  rep.pass = !rep.failing_layer.has_value();
  return rep;
}

MemoryReport memory_stats(const KeyedNetwork& kn, const ir::LoweredNetwork& plain,
                          std::size_t tile_size) {
  if (kn.layers.size() != plain.layers.size())
    throw ShapeError("memory_stats: keyed and plain networks differ in depth");
  MemoryReport rep;
  rep.alpha = kn.alpha;
  rep.tile_size = tile_size;
  for (std::size_t i = 0; i < kn.layers.size(); ++i) {
    const KeyedLayer& k = kn.layers[i];
    LayerMemory m;
    m.relu = k.relu;
    const std::size_t out_dim = k.out_shape.size();
    const std::size_t in_dim = k.in_shape.size();
    m.keyed_nnz = sparse::nnz_block(k.matrix, out_dim, in_dim);
    m.keyed_coo_bytes = sparse::coo_bytes(k.matrix);
    m.keyed_tiled_bytes = sparse::to_tiled(k.matrix, tile_size).stored_bytes();
    if (const auto* a = std::get_if<ir::SparseAffine>(&plain.layers[i])) {
      m.plain_nnz = sparse::nnz_block(a->matrix, out_dim, in_dim);
      m.plain_coo_bytes = sparse::coo_bytes(a->matrix);
      m.plain_tiled_bytes = sparse::to_tiled(a->matrix, tile_size).stored_bytes();
    } else {
      // The unkeyed ReLU layer is an identity pass-through.
      const auto id = CooMatrix::identity(in_dim + 1);
      m.plain_nnz = in_dim;
      m.plain_coo_bytes = sparse::coo_bytes(id);
      m.plain_tiled_bytes = sparse::to_tiled(id, tile_size).stored_bytes();
    }
    m.ratio = m.plain_nnz == 0 ? (m.keyed_nnz == 0 ? 1.0 : INFINITY)
                               : static_cast<double>(m.keyed_nnz) /
                                     static_cast<double>(m.plain_nnz);
    rep.plain_coo_bytes += m.plain_coo_bytes;
    rep.plain_tiled_bytes += m.plain_tiled_bytes;
    rep.keyed_coo_bytes += m.keyed_coo_bytes;
    rep.keyed_tiled_bytes += m.keyed_tiled_bytes;
    rep.layers.push_back(m);
  }
  return rep;
}

}  // namespace keynet::keyed
