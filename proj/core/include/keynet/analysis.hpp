#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <utility>

#include "keynet/sensor.hpp"
#include "keynet/sparse.hpp"

namespace keynet::analysis {

using sparse::CooMatrix;
using sparse::DenseVector;

// Black-box affine encryption: takes a homogeneous plaintext [x; 1] of length
// in_dim + 1 and returns the ciphertext.
using AffineOracle = std::function<DenseVector(std::span<const double>)>;

enum class ProbeKind { kBasis, kRandom };

struct AttackConfig {
  ProbeKind probes = ProbeKind::kBasis;
  // Random probes only; basis probing always uses in_dim + 1 queries.
  std::size_t n_probes = 0;
  std::uint64_t seed = 0;
  std::size_t holdout = 16;
  double tolerance = 1e-9;
};

struct AttackResult {
  // out_dim x (in_dim + 1): linear block plus bias column.
  CooMatrix recovered;
  std::size_t probes = 0;
  // max ||A_hat p - A p|| / ||A p|| over fresh random probes.
  double residual = 0.0;
  bool success = false;
};

// Chosen-plaintext key recovery. Basis probes read columns directly from
// [e_i; 1] - [0; 1]; random probes solve the normal equations and throw
// SingularSystem when the probe set is rank deficient.
AttackResult chosen_plaintext_attack(const AffineOracle& oracle, std::size_t in_dim,
                                     std::size_t out_dim, const AttackConfig& cfg);

// Elementwise B = B_p - B_n with B_p, B_n >= 0 and disjoint supports.
std::pair<CooMatrix, CooMatrix> nonneg_split(const CooMatrix& b);

struct SsimParams {
  std::size_t window = 7;
  double c1 = 0.0;
  double c2 = 0.0;
  double dynamic_range = 1.0;

  // C1 = (0.01 L)^2, C2 = (0.03 L)^2.
  static SsimParams standard(double dynamic_range, std::size_t window = 7);
};

void validate(const SsimParams& p);

// Mean of the windowed SSIM map over every full window position, clamped to
// [0, 1] (anti-correlated images report 0).
double ssim(const sensor::Image& a, const sensor::Image& b, const SsimParams& p);

// Deterministic natural-like scene in [0, 255]: smooth shading, a few soft
// disks and an oriented texture. Used as an SSIM reference.
sensor::Image synthetic_scene(std::size_t height, std::size_t width, std::uint64_t seed);

}  // namespace keynet::analysis
