#include "keynet/keys.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "keynet/errors.hpp"
#include "keynet/hash.hpp"
#include "keynet/kspm_io.hpp"
#include "keynet/rng.hpp"

namespace keynet::keys {
namespace {

using sparse::Triplet;

// Random streams carved out of the key seed.
enum Stream : std::uint64_t {
  kGlobalPermutation = 0,
  kBlocks = 1,
  kGains = 2,
  kBias = 3,
};

// In-place Gauss-Jordan inverse of a small dense row-major matrix with partial
// pivoting. Blocks are strictly diagonally dominant, so a zero pivot means the
// caller broke that contract.
std::vector<double> invert_block(std::vector<double> a, std::size_t n) {
  std::vector<double> inv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (std::size_t col = 0; col < n; ++col) {
    std::size_t piv = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::abs(a[r * n + col]) > std::abs(a[piv * n + col])) piv = r;
    if (a[piv * n + col] == 0.0)
      throw ContractError("key block is singular");
    if (piv != col) {
      for (std::size_t c = 0; c < n; ++c) {
        std::swap(a[piv * n + c], a[col * n + c]);
        std::swap(inv[piv * n + c], inv[col * n + c]);
      }
    }
    const double p = a[col * n + col];
    for (std::size_t c = 0; c < n; ++c) {
      a[col * n + c] /= p;
      inv[col * n + c] /= p;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == col) continue;
      const double f = a[r * n + col];
      if (f == 0.0) continue;
      for (std::size_t c = 0; c < n; ++c) {
        a[r * n + c] -= f * a[col * n + c];
        inv[r * n + c] -= f * inv[col * n + c];
      }
    }
  }
  return inv;
}

// theta * I + (1 - theta) * mean of alpha random permutations, row-major.
std::vector<double> stochastic_block(std::size_t n, std::size_t alpha,
                                     double theta, Rng& rng,
                                     bool identity_permutation) {
  std::vector<double> b(n * n, 0.0);
  const double w = (1.0 - theta) / static_cast<double>(alpha);
  for (std::size_t p = 0; p < alpha; ++p) {
    std::vector<std::size_t> perm;
    if (identity_permutation) {
      perm.resize(n);
      for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    } else {
      perm = rng.permutation(n);
    }
    for (std::size_t i = 0; i < n; ++i) b[i * n + perm[i]] += w;
  }
  for (std::size_t i = 0; i < n; ++i) b[i * n + i] += theta;
  return b;
}

void check_homogeneous(const KeyMatrix& k, std::span<const double> v,
                       const char* op) {
  if (v.size() == k.dim())
    throw ContractError(std::string(op) +
                        ": missing homogeneous coordinate (length equals key dim)");
  if (v.size() != k.dim() + 1)
    throw ShapeError(std::string(op) + ": expected homogeneous vector of length " +
                     std::to_string(k.dim() + 1) + ", got " +
                     std::to_string(v.size()));
  if (v.back() != 1.0)
    throw ContractError(std::string(op) +
                        ": missing homogeneous coordinate (last element != 1)");
}

}  // namespace

void validate(const KeyGenConfig& cfg) {
  if (cfg.dim == 0) throw ParameterError("keygen: dim must be >= 1");
  if (cfg.alpha == 0) throw ParameterError("keygen: alpha must be >= 1");
  if (cfg.alpha > cfg.dim)
    throw ParameterError("keygen: alpha (" + std::to_string(cfg.alpha) +
                         ") exceeds dim (" + std::to_string(cfg.dim) + ")");
  if (!(cfg.gain_lo > 0.0))
    throw ParameterError("keygen: gain lower bound must be > 0");
  if (!(cfg.gain_hi >= cfg.gain_lo))
    throw ParameterError("keygen: gain range is empty");
  if (cfg.bias && !(cfg.bias_hi >= cfg.bias_lo))
    throw ParameterError("keygen: bias range is empty");
  if (!(cfg.dominance_lo > 0.5) || !(cfg.dominance_hi < 1.0) ||
      !(cfg.dominance_hi >= cfg.dominance_lo))
    throw ParameterError("keygen: dominance range must lie inside (0.5, 1)");
}

KeyMatrix::KeyMatrix(std::size_t dim, std::size_t alpha, std::uint64_t seed,
                     bool has_bias, CooMatrix forward, CooMatrix inverse)
    : dim_(dim),
      alpha_(alpha),
      seed_(seed),
      has_bias_(has_bias),
      forward_(std::move(forward)),
      inverse_(std::move(inverse)) {
  const std::size_t n = dim_ + 1;
  if (forward_.rows() != n || forward_.cols() != n || inverse_.rows() != n ||
      inverse_.cols() != n)
    throw ShapeError("key: forward and inverse must be (dim+1) x (dim+1)");
  for (const CooMatrix* m : {&forward_, &inverse_}) {
    const auto last = m->row(dim_);
    if (last.size() != 1 || last.cols[0] != dim_ || last.values[0] != 1.0)
      throw ContractError("key: last row must be [0, ..., 0, 1]");
  }
}

KeyMatrix KeyMatrix::identity(std::size_t dim) {
  return KeyMatrix(dim, 1, 0, false, CooMatrix::identity(dim + 1),
                   CooMatrix::identity(dim + 1));
}

std::string KeyMatrix::fingerprint() const {
  return sha256_hex(sparse::encode_kspm(forward_));
}

KeyMatrix gen_key(const KeyGenConfig& cfg) {
  validate(cfg);
  const std::size_t n = cfg.dim;
  const std::size_t alpha = cfg.alpha;
  const Rng root(cfg.seed);

  std::vector<std::size_t> pg;
  if (cfg.identity_permutation) {
    pg.resize(n);
    for (std::size_t i = 0; i < n; ++i) pg[i] = i;
  } else {
    Rng r = root.split(kGlobalPermutation);
    pg = r.permutation(n);
  }

  std::vector<double> gains(n);
  {
    Rng r = root.split(kGains);
    for (auto& g : gains) g = r.uniform(cfg.gain_lo, cfg.gain_hi);
  }
  std::vector<double> bias(n, 0.0);
  if (cfg.bias) {
    Rng r = root.split(kBias);
    for (auto& b : bias) b = r.uniform(cfg.bias_lo, cfg.bias_hi);
  }

  // S and S^-1 share the block layout: block q covers [q*alpha, min(n, ...)).
  std::vector<Triplet> s_entries;
  std::vector<Triplet> sinv_entries;
  {
    Rng r = root.split(kBlocks);
    for (std::size_t start = 0; start < n; start += alpha) {
      const std::size_t bn = std::min(alpha, n - start);
      const double theta = r.uniform(cfg.dominance_lo, cfg.dominance_hi);
      auto block = stochastic_block(bn, alpha, theta, r, cfg.identity_permutation);
      const auto inv = invert_block(block, bn);
      for (std::size_t i = 0; i < bn; ++i)
        for (std::size_t j = 0; j < bn; ++j) {
          if (block[i * bn + j] != 0.0)
            s_entries.push_back({start + i, start + j, block[i * bn + j]});
          if (inv[i * bn + j] != 0.0)
            sinv_entries.push_back({start + i, start + j, inv[i * bn + j]});
        }
    }
  }
  const CooMatrix s = CooMatrix::from_triplets(n, n, std::move(s_entries));
  const CooMatrix sinv = CooMatrix::from_triplets(n, n, std::move(sinv_entries));

  // forward row i = d_i * S row pg[i]; bias in the augmented column.
  std::vector<Triplet> fwd;
  fwd.reserve(s.nnz() + 2 * n + 1);
  for (std::size_t i = 0; i < n; ++i) {
    const auto row = s.row(pg[i]);
    for (std::size_t k = 0; k < row.size(); ++k)
      fwd.push_back({i, row.cols[k], gains[i] * row.values[k]});
    fwd.push_back({i, n, bias[i]});
  }
  fwd.push_back({n, n, 1.0});

  // M = S^-1 * Pg^T * D^-1, so M[j, i] = S^-1[j, pg[i]] / d_i.
  std::vector<std::size_t> pg_inv(n);
  for (std::size_t i = 0; i < n; ++i) pg_inv[pg[i]] = i;
  std::vector<Triplet> inv;
  inv.reserve(sinv.nnz() + 2 * n + 1);
  std::vector<double> minus_mb(n, 0.0);
  for (std::size_t j = 0; j < n; ++j) {
    const auto row = sinv.row(j);
    double acc = 0.0;
    for (std::size_t k = 0; k < row.size(); ++k) {
      const std::size_t i = pg_inv[row.cols[k]];
      const double v = row.values[k] / gains[i];
      inv.push_back({j, i, v});
      acc += v * bias[i];
    }
    minus_mb[j] = -acc;
  }
  for (std::size_t j = 0; j < n; ++j) inv.push_back({j, n, minus_mb[j]});
  inv.push_back({n, n, 1.0});

  return KeyMatrix(n, alpha, cfg.seed, cfg.bias,
                   CooMatrix::from_triplets(n + 1, n + 1, std::move(fwd)),
                   CooMatrix::from_triplets(n + 1, n + 1, std::move(inv)));
}

KeyMatrix gen_relu_key(std::size_t dim, std::uint64_t seed, double gain_lo,
                       double gain_hi, bool identity_permutation) {
  KeyGenConfig cfg;
  cfg.dim = dim;
  cfg.alpha = 1;
  cfg.seed = seed;
  cfg.gain_lo = gain_lo;
  cfg.gain_hi = gain_hi;
  cfg.bias = false;
  cfg.identity_permutation = identity_permutation;
  return gen_key(cfg);
}

DenseVector key_apply(const KeyMatrix& k, std::span<const double> v) {
  check_homogeneous(k, v, "key_apply");
  return sparse::coo_matvec(k.forward(), v);
}

DenseVector key_unapply(const KeyMatrix& k, std::span<const double> v) {
  check_homogeneous(k, v, "key_unapply");
  return sparse::coo_matvec(k.inverse(), v);
}

namespace {

DenseVector block_action(const CooMatrix& m, std::size_t dim,
                         std::span<const double> x, const char* op) {
  if (x.size() != dim)
    throw ShapeError(std::string(op) + ": expected length " +
                     std::to_string(dim) + ", got " + std::to_string(x.size()));
  DenseVector y(dim, 0.0);
  for (std::size_t r = 0; r < dim; ++r) {
    const auto row = m.row(r);
    double acc = 0.0;
    for (std::size_t j = 0; j < row.size() && row.cols[j] < dim; ++j)
      acc += row.values[j] * x[row.cols[j]];
    y[r] = acc;
  }
  return y;
}

}  // namespace

DenseVector key_apply_linear(const KeyMatrix& k, std::span<const double> x) {
  return block_action(k.forward(), k.dim(), x, "key_apply_linear");
}

DenseVector key_unapply_linear(const KeyMatrix& k, std::span<const double> y) {
  return block_action(k.inverse(), k.dim(), y, "key_unapply_linear");
}

}  // namespace keynet::keys
