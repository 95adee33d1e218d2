#include "keynet/analysis.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <vector>

#include "keynet/errors.hpp"
#include "keynet/rng.hpp"

namespace keynet::analysis {
namespace {

DenseVector query(const AffineOracle& oracle, std::span<const double> probe,
                  std::size_t out_dim) {
  DenseVector y = oracle(probe);
  if (y.size() != out_dim)
    throw ShapeError("attack: oracle returned " + std::to_string(y.size()) +
                     " values, expected " + std::to_string(out_dim));
  return y;
}

DenseVector random_probe(std::size_t in_dim, Rng& rng) {
  DenseVector p(in_dim + 1, 1.0);
  for (std::size_t j = 0; j < in_dim; ++j) p[j] = rng.uniform();
  return p;
}

double norm2(std::span<const double> v) {
  double s = 0.0;
  for (const double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

AttackResult chosen_plaintext_attack(const AffineOracle& oracle, std::size_t in_dim,
                                     std::size_t out_dim, const AttackConfig& cfg) {
  const std::size_t n = in_dim + 1;
  Eigen::MatrixXd recovered(out_dim, n);
  AttackResult res;
  Rng rng(cfg.seed);

  if (cfg.probes == ProbeKind::kBasis) {
    DenseVector probe(n, 0.0);
    probe[in_dim] = 1.0;
    const DenseVector origin = query(oracle, probe, out_dim);
    for (std::size_t r = 0; r < out_dim; ++r) recovered(r, in_dim) = origin[r];
    for (std::size_t j = 0; j < in_dim; ++j) {
      probe[j] = 1.0;
      const DenseVector y = query(oracle, probe, out_dim);
      probe[j] = 0.0;
      for (std::size_t r = 0; r < out_dim; ++r) recovered(r, j) = y[r] - origin[r];
    }
    res.probes = n;
  } else {
    const std::size_t m = cfg.n_probes;
    if (m < n)
      throw SingularSystem("attack: " + std::to_string(m) + " random probes for " +
                           std::to_string(n) + " unknowns per row");
    Eigen::MatrixXd X(n, m);
    Eigen::MatrixXd Y(out_dim, m);
    for (std::size_t k = 0; k < m; ++k) {
      const DenseVector p = random_probe(in_dim, rng);
      const DenseVector y = query(oracle, p, out_dim);
      for (std::size_t j = 0; j < n; ++j) X(j, k) = p[j];
      for (std::size_t r = 0; r < out_dim; ++r) Y(r, k) = y[r];
    }
    // Normal equations: A_hat (X X^T) = Y X^T.
    const Eigen::MatrixXd gram = X * X.transpose();
    Eigen::FullPivLU<Eigen::MatrixXd> lu(gram);
    if (lu.rank() < static_cast<Eigen::Index>(n))
      throw SingularSystem("attack: probe set is rank deficient (rank " +
                           std::to_string(lu.rank()) + " < " + std::to_string(n) + ")");
    recovered = lu.solve(X * Y.transpose()).transpose();
    res.probes = m;
  }

  std::vector<double> dense(out_dim * n);
  for (std::size_t r = 0; r < out_dim; ++r)
    for (std::size_t c = 0; c < n; ++c) dense[r * n + c] = recovered(r, c);
  res.recovered = CooMatrix::from_dense(out_dim, n, dense);

  Rng holdout = rng.split(0xfeed);
  for (std::size_t t = 0; t < cfg.holdout; ++t) {
    const DenseVector p = random_probe(in_dim, holdout);
    const DenseVector truth = query(oracle, p, out_dim);
    const DenseVector guess = sparse::coo_matvec(res.recovered, p);
    DenseVector diff(out_dim);
    for (std::size_t r = 0; r < out_dim; ++r) diff[r] = guess[r] - truth[r];
    const double denom = norm2(truth);
    const double rel = denom > 0.0 ? norm2(diff) / denom : norm2(diff);
    res.residual = std::max(res.residual, rel);
  }
  res.success = res.residual <= cfg.tolerance;
  return res;
}

std::pair<CooMatrix, CooMatrix> nonneg_split(const CooMatrix& b) {
  std::vector<sparse::Triplet> pos;
  std::vector<sparse::Triplet> neg;
  for (const auto& t : b.triplets()) {
    if (t.value > 0.0) {
      pos.push_back(t);
    } else {
      neg.push_back({t.row, t.col, -t.value});
    }
  }
  return {CooMatrix::from_triplets(b.rows(), b.cols(), std::move(pos)),
          CooMatrix::from_triplets(b.rows(), b.cols(), std::move(neg))};
}

SsimParams SsimParams::standard(double dynamic_range, std::size_t window) {
  SsimParams p;
  p.window = window;
  p.dynamic_range = dynamic_range;
  p.c1 = (0.01 * dynamic_range) * (0.01 * dynamic_range);
  p.c2 = (0.03 * dynamic_range) * (0.03 * dynamic_range);
  return p;
}

void validate(const SsimParams& p) {
  if (p.window == 0 || p.window % 2 == 0)
    throw ParameterError("ssim: window size must be odd");
  if (!(p.c1 > 0.0) || !(p.c2 > 0.0))
    throw ParameterError("ssim: stabilisation constants must be > 0");
  if (!(p.dynamic_range > 0.0)) throw ParameterError("ssim: dynamic range must be > 0");
}

double ssim(const sensor::Image& a, const sensor::Image& b, const SsimParams& p) {
  validate(p);
  if (a.height != b.height || a.width != b.width)
    throw ShapeError("ssim: images differ in size");
  const std::size_t w = p.window;
  if (a.height < w || a.width < w)
    throw ShapeError("ssim: image smaller than the " + std::to_string(w) + "px window");

  const double inv = 1.0 / static_cast<double>(w * w);
  double total = 0.0;
  std::size_t count = 0;
  for (std::size_t y0 = 0; y0 + w <= a.height; ++y0) {
    for (std::size_t x0 = 0; x0 + w <= a.width; ++x0) {
      double sa = 0.0, sb = 0.0;
      for (std::size_t y = y0; y < y0 + w; ++y)
        for (std::size_t x = x0; x < x0 + w; ++x) {
          sa += a.at(y, x);
          sb += b.at(y, x);
        }
      const double ma = sa * inv;
      const double mb = sb * inv;
      double va = 0.0, vb = 0.0, cov = 0.0;
      for (std::size_t y = y0; y < y0 + w; ++y)
        for (std::size_t x = x0; x < x0 + w; ++x) {
          const double da = a.at(y, x) - ma;
          const double db = b.at(y, x) - mb;
          va += da * da;
          vb += db * db;
          cov += da * db;
        }
      va *= inv;
      vb *= inv;
      cov *= inv;
      total += ((2.0 * ma * mb + p.c1) * (2.0 * cov + p.c2)) /
               ((ma * ma + mb * mb + p.c1) * (va + vb + p.c2));
      ++count;
    }
  }
  return std::clamp(total / static_cast<double>(count), 0.0, 1.0);
}

sensor::Image synthetic_scene(std::size_t height, std::size_t width, std::uint64_t seed) {
  Rng rng(seed);
  const double h = static_cast<double>(height);
  const double w = static_cast<double>(width);
  const double gx = rng.uniform(-1.0, 1.0);
  const double gy = rng.uniform(-1.0, 1.0);
  struct Disk {
    double cy, cx, r, level;
  };
  std::vector<Disk> disks(4);
  for (auto& d : disks) {
    d.cy = rng.uniform(0.15, 0.85) * h;
    d.cx = rng.uniform(0.15, 0.85) * w;
    d.r = rng.uniform(0.08, 0.25) * std::min(h, w);
    d.level = rng.uniform(-0.35, 0.35);
  }
  const double angle = rng.uniform(0.0, 3.14159265358979);
  const double freq = rng.uniform(0.15, 0.35);

  sensor::Image img(height, width);
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const double u = (static_cast<double>(x) + 0.5) / w - 0.5;
      const double v = (static_cast<double>(y) + 0.5) / h - 0.5;
      double val = 0.5 + 0.3 * (gx * u + gy * v);
      for (const auto& d : disks) {
        const double dist = std::hypot(static_cast<double>(y) - d.cy,
                                       static_cast<double>(x) - d.cx);
        // Soft edge over ~1.5 px.
        const double inside = 1.0 / (1.0 + std::exp((dist - d.r) / 1.5));
        val += d.level * inside;
      }
      const double t = std::cos(angle) * static_cast<double>(x) +
                       std::sin(angle) * static_cast<double>(y);
      val += 0.05 * std::sin(freq * t);
      img.at(y, x) = 255.0 * std::clamp(val, 0.0, 1.0);
    }
  }
  return img;
}

}  // namespace keynet::analysis
