#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "keynet/keys.hpp"
#include "keynet/netir.hpp"
#include "keynet/tiled.hpp"

namespace keynet::keyed {

using ir::Shape;
using keys::KeyMatrix;
using sparse::CooMatrix;
using sparse::DenseVector;

struct KeyChainOptions {
  std::size_t alpha = 1;
  std::uint64_t seed = 0;
  // A_k = I when the inference result is public.
  bool output_public = true;
  // Debug mode: every key is the identity and the keynet equals the plain net.
  bool identity = false;
  double gain_lo = 0.5;
  double gain_hi = 2.0;
  // Bias range for keys of linear-layer boundaries. Must be >= 0 so the
  // augmented forward matrix stays non-negative.
  double bias_lo = 0.0;
  double bias_hi = 1.0;
};

// Keys A_0 ... A_k, one per layer boundary. keys[0] is the image key and
// keys.back() the output (embedding) key.
struct KeyChain {
  std::vector<KeyMatrix> keys;
  std::vector<Shape> shapes;
  std::size_t alpha = 1;
  std::uint64_t seed = 0;
  bool output_public = true;

  const KeyMatrix& image_key() const { return keys.front(); }
  const KeyMatrix& output_key() const { return keys.back(); }
};

// Boundary i > 0 produced by a ReLU layer gets a scaled permutation key
// (alpha 1, no bias); other boundaries get alpha keys with bias. alpha is
// clamped to the boundary dimension. Pure function of (net, opts).
KeyChain assign_keys(const ir::NetworkDef& net, const KeyChainOptions& opts);

struct KeyedLayer {
  bool relu = false;
  // Linear: A_i * W_i * A_{i-1}^-1. ReLU: A_i * A_{i-1}^-1.
  CooMatrix matrix;
  Shape in_shape;
  Shape out_shape;
};

// The public artifact: only products of keys with weights, never a key.
struct KeyedNetwork {
  std::vector<KeyedLayer> layers;
  // SHA-256 of the image key's forward blob.
  std::string fingerprint;
  Shape input_shape;
  Shape output_shape;
  std::size_t alpha = 1;
};

struct EncodedImage {
  DenseVector values;  // A_0 [x; 1]
  std::string fingerprint;
};

KeyedNetwork build_keynet(const ir::LoweredNetwork& lowered,
                          const KeyChain& chain);

EncodedImage encode_image(const ir::Tensor& image, const KeyChain& chain);
// A_0^-1 applied to an encoding; the inverse of encode_image.
ir::Tensor decode_image(const EncodedImage& encoded, const KeyChain& chain);

// Throws WrongSensor when the encoding's fingerprint does not match.
DenseVector keyed_forward(const KeyedNetwork& kn, const EncodedImage& e);

// A_k^-1 * y_hat.
DenseVector decode_output(const KeyChain& chain, std::span<const double> y_hat);

struct HomomorphismReport {
  std::size_t trials = 0;
  double tolerance = 0.0;
  // Max over trials of |A_k N(x) - N_hat(A_0 x)|_inf / (1 + |A_k N(x)|_inf).
  double max_rel_error = 0.0;
  // Same measure at every layer boundary, comparing A_i x_i to x_hat_i.
  std::vector<double> layer_max_rel_error;
  // First layer whose error exceeds the tolerance.
  std::optional<std::size_t> failing_layer;
  bool pass = false;
};

HomomorphismReport verify_homomorphism(const ir::LoweredNetwork& lowered,
                                       const KeyChain& chain,
                                       const KeyedNetwork& kn,
                                       std::size_t trials, double tol,
                                       std::uint64_t seed);

struct LayerMemory {
  bool relu = false;
  // Non-augmented blocks. For ReLU layers the plain operator is the identity.
  std::size_t plain_nnz = 0;
  std::size_t keyed_nnz = 0;
  double ratio = 0.0;
  std::size_t plain_coo_bytes = 0;
  std::size_t plain_tiled_bytes = 0;
  std::size_t keyed_coo_bytes = 0;
  std::size_t keyed_tiled_bytes = 0;
};

struct MemoryReport {
  std::size_t alpha = 1;
  std::size_t tile_size = sparse::kDefaultTileSize;
  std::vector<LayerMemory> layers;
  std::size_t plain_coo_bytes = 0;
  std::size_t plain_tiled_bytes = 0;
  std::size_t keyed_coo_bytes = 0;
  std::size_t keyed_tiled_bytes = 0;
};

MemoryReport memory_stats(const KeyedNetwork& kn,
                          const ir::LoweredNetwork& plain,
                          std::size_t tile_size = sparse::kDefaultTileSize);

}  // namespace keynet::keyed
