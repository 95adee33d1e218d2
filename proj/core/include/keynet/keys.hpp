#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>

#include "keynet/sparse.hpp"

namespace keynet::keys {

using sparse::CooMatrix;
using sparse::DenseVector;

struct KeyGenConfig {
  std::size_t dim = 1;
  // Privacy parameter: number of permutations mixed per stochastic block.
  std::size_t alpha = 1;
  std::uint64_t seed = 0;
  // Diagonal of the gain matrix D is drawn uniformly from [gain_lo, gain_hi].
  double gain_lo = 1.0;
  double gain_hi = 1.0;
  bool bias = false;
  double bias_lo = 0.0;
  double bias_hi = 0.0;
  // Weight of the identity in each stochastic block; must lie in (0.5, 1).
  double dominance_lo = 0.55;
  double dominance_hi = 0.95;
  // Debug mode: no shuffling at all (global permutation and every block
  // permutation are the identity). Gains and bias are still drawn.
  bool identity_permutation = false;
};

// Throws ParameterError when cfg breaks a documented range.
void validate(const KeyGenConfig& cfg);

// Generalized doubly stochastic key in affine-augmented form
//
//   forward = [ D * Pg * S   b ]      inverse = [ M   -M b ]
//             [ 0            1 ]                [ 0    1   ]
//
// with D a positive diagonal gain, Pg a global permutation, S block-diagonal
// with blocks theta*I + (1 - theta)*R (R the mean of alpha random
// permutations of the block), and M = S^-1 * Pg^T * D^-1 assembled from exact
// per-block inverses. Both the forward block and M have at most alpha
// non-zeros per row and per column.
class KeyMatrix {
 public:
  KeyMatrix(std::size_t dim, std::size_t alpha, std::uint64_t seed,
            bool has_bias, CooMatrix forward, CooMatrix inverse);

  // (dim + 1) x (dim + 1) identity key with alpha = 1.
  static KeyMatrix identity(std::size_t dim);

  std::size_t dim() const { return dim_; }
  std::size_t alpha() const { return alpha_; }
  std::uint64_t seed() const { return seed_; }
  bool has_bias() const { return has_bias_; }
  const CooMatrix& forward() const { return forward_; }
  const CooMatrix& inverse() const { return inverse_; }

  // SHA-256 of the forward matrix's KSPM encoding.
  std::string fingerprint() const;

 private:
  std::size_t dim_;
  std::size_t alpha_;
  std::uint64_t seed_;
  bool has_bias_;
  CooMatrix forward_;
  CooMatrix inverse_;
};

KeyMatrix gen_key(const KeyGenConfig& cfg);

// Scaled permutation key (alpha = 1, no bias) for boundaries consumed by a
// ReLU. Commutes with ReLU because every gain is strictly positive.
KeyMatrix gen_relu_key(std::size_t dim, std::uint64_t seed, double gain_lo,
                       double gain_hi, bool identity_permutation = false);

// forward * v. v must be homogeneous: length dim + 1 with last element 1.
DenseVector key_apply(const KeyMatrix& k, std::span<const double> v);
// inverse * v, same contract.
DenseVector key_unapply(const KeyMatrix& k, std::span<const double> v);

// Non-augmented action D * Pg * S * x on a length-dim vector (no bias).
DenseVector key_apply_linear(const KeyMatrix& k, std::span<const double> x);
// Non-augmented inverse action M * y on a length-dim vector.
DenseVector key_unapply_linear(const KeyMatrix& k, std::span<const double> y);

}  // namespace keynet::keys
