#pragma once

// Independent reference implementations used as test oracles. Everything here
// works on plain dense arrays and never calls into the sparse kernels.

#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "keynet/netir.hpp"
#include "keynet/rng.hpp"
#include "keynet/sparse.hpp"

namespace oracle {

using Dense = std::vector<double>;  // row-major

inline Dense matmul(const Dense& a, const Dense& b, std::size_t n, std::size_t k,
                    std::size_t m) {
  Dense c(n * m, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < m; ++j) {
      double s = 0.0;
      for (std::size_t t = 0; t < k; ++t) s += a[i * k + t] * b[t * m + j];
      c[i * m + j] = s;
    }
  return c;
}

// Accumulates in ascending column order from +0.0, skipping zeros, which is the
// documented summation order of the sparse kernels.
inline Dense matvec(const Dense& a, const Dense& v, std::size_t n, std::size_t k) {
  Dense y(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double s = 0.0;
    for (std::size_t t = 0; t < k; ++t)
      if (a[i * k + t] != 0.0) s += a[i * k + t] * v[t];
    y[i] = s;
  }
  return y;
}

inline std::size_t count_nonzero(const Dense& a) {
  std::size_t n = 0;
  for (const double x : a) n += x != 0.0;
  return n;
}

inline double max_abs(const Dense& a) {
  double m = 0.0;
  for (const double x : a) m = std::max(m, std::abs(x));
  return m;
}

inline double max_abs_diff(const Dense& a, const Dense& b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline double rel_diff(const Dense& a, const Dense& b) {
  return max_abs_diff(a, b) / std::max(1.0, max_abs(b));
}

// Dense Gauss-Jordan inverse with partial pivoting; empty on singularity.
inline Dense inverse(Dense a, std::size_t n) {
  Dense inv(n * n, 0.0);
  for (std::size_t i = 0; i < n; ++i) inv[i * n + i] = 1.0;
  for (std::size_t c = 0; c < n; ++c) {
    std::size_t p = c;
    for (std::size_t r = c + 1; r < n; ++r)
      if (std::abs(a[r * n + c]) > std::abs(a[p * n + c])) p = r;
    if (a[p * n + c] == 0.0) return {};
    for (std::size_t k = 0; k < n; ++k) {
      std::swap(a[c * n + k], a[p * n + k]);
      std::swap(inv[c * n + k], inv[p * n + k]);
    }
    const double d = a[c * n + c];
    for (std::size_t k = 0; k < n; ++k) {
      a[c * n + k] /= d;
      inv[c * n + k] /= d;
    }
    for (std::size_t r = 0; r < n; ++r) {
      if (r == c || a[r * n + c] == 0.0) continue;
      const double f = a[r * n + c];
      for (std::size_t k = 0; k < n; ++k) {
        a[r * n + k] -= f * a[c * n + k];
        inv[r * n + k] -= f * inv[c * n + k];
      }
    }
  }
  return inv;
}

// Random sparse matrix: each entry non-zero with probability density, values
// uniform in [-1, 1).
inline keynet::sparse::CooMatrix random_coo(std::size_t rows, std::size_t cols,
                                            double density, keynet::Rng& rng) {
  std::vector<keynet::sparse::Triplet> t;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      if (rng.uniform() < density) t.push_back({r, c, rng.uniform(-1.0, 1.0)});
  return keynet::sparse::CooMatrix::from_triplets(rows, cols, std::move(t));
}

// Direct zero-padded cross-correlation, one output at a time.
inline keynet::ir::Tensor conv2d(const keynet::ir::Tensor& x, const keynet::ir::Conv2d& c) {
  const std::size_t H = x.shape.height, W = x.shape.width;
  const std::size_t Ho = (H + 2 * c.pad - c.kh) / c.stride + 1;
  const std::size_t Wo = (W + 2 * c.pad - c.kw) / c.stride + 1;
  keynet::ir::Tensor y{{c.out_ch, Ho, Wo}, Dense(c.out_ch * Ho * Wo, 0.0)};
  for (std::size_t o = 0; o < c.out_ch; ++o)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        double s = c.bias.empty() ? 0.0 : c.bias[o];
        for (std::size_t ci = 0; ci < c.in_ch; ++ci)
          for (std::size_t u = 0; u < c.kh; ++u)
            for (std::size_t v = 0; v < c.kw; ++v) {
              const long yy = static_cast<long>(i * c.stride + u) - static_cast<long>(c.pad);
              const long xx = static_cast<long>(j * c.stride + v) - static_cast<long>(c.pad);
              if (yy < 0 || xx < 0 || yy >= static_cast<long>(H) || xx >= static_cast<long>(W))
                continue;
              s += c.weights[((o * c.in_ch + ci) * c.kh + u) * c.kw + v] *
                   x.at(ci, static_cast<std::size_t>(yy), static_cast<std::size_t>(xx));
            }
        y.at(o, i, j) = s;
      }
  return y;
}

inline keynet::ir::Tensor avgpool(const keynet::ir::Tensor& x, const keynet::ir::AvgPool& p) {
  const std::size_t Ho = (x.shape.height - p.k) / p.stride + 1;
  const std::size_t Wo = (x.shape.width - p.k) / p.stride + 1;
  keynet::ir::Tensor y{{x.shape.channels, Ho, Wo}, Dense(x.shape.channels * Ho * Wo)};
  for (std::size_t ch = 0; ch < x.shape.channels; ++ch)
    for (std::size_t i = 0; i < Ho; ++i)
      for (std::size_t j = 0; j < Wo; ++j) {
        double s = 0.0;
        for (std::size_t u = 0; u < p.k; ++u)
          for (std::size_t v = 0; v < p.k; ++v) s += x.at(ch, i * p.stride + u, j * p.stride + v);
        y.at(ch, i, j) = s / static_cast<double>(p.k * p.k);
      }
  return y;
}

inline Dense dense_layer(const Dense& x, const keynet::ir::Dense& d) {
  Dense y(d.out_dim);
  for (std::size_t o = 0; o < d.out_dim; ++o) {
    double s = d.bias.empty() ? 0.0 : d.bias[o];
    for (std::size_t i = 0; i < d.in_dim; ++i) s += d.weights[o * d.in_dim + i] * x[i];
    y[o] = s;
  }
  return y;
}

// Layer-by-layer forward pass on tensors, no matrices involved.
inline Dense network(const keynet::ir::NetworkDef& net, const keynet::ir::Tensor& input) {
  keynet::ir::Tensor x = input;
  for (const auto& layer : net.layers) {
    if (const auto* c = std::get_if<keynet::ir::Conv2d>(&layer)) {
      x = conv2d(x, *c);
    } else if (const auto* p = std::get_if<keynet::ir::AvgPool>(&layer)) {
      x = avgpool(x, *p);
    } else if (const auto* d = std::get_if<keynet::ir::Dense>(&layer)) {
      x = {{d->out_dim, 1, 1}, dense_layer(x.data, *d)};
    } else {
      for (auto& v : x.data) v = std::max(v, 0.0);
    }
  }
  return x.data;
}

inline keynet::ir::Tensor random_tensor(const keynet::ir::Shape& s, keynet::Rng& rng,
                                        double lo = 0.0, double hi = 1.0) {
  keynet::ir::Tensor t{s, Dense(s.size())};
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("keynet_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

}  // namespace oracle
