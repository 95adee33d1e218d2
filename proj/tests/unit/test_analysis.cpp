#include "doctest.h"
#include "keynet/analysis.hpp"
#include "keynet/errors.hpp"
#include "keynet/keyed.hpp"
#include "keynet/keys.hpp"
#include "oracles.hpp"

using namespace keynet;
using analysis::AttackConfig;
using analysis::ProbeKind;
using sparse::CooMatrix;

namespace {

analysis::AffineOracle key_oracle(const keys::KeyMatrix& k) {
  return [&k](std::span<const double> x) { return keys::key_apply(k, x); };
}

keys::KeyMatrix random_key(std::size_t dim, std::size_t alpha, std::uint64_t seed) {
  keys::KeyGenConfig c;
  c.dim = dim;
  c.alpha = alpha;
  c.seed = seed;
  c.gain_lo = 0.5;
  c.gain_hi = 2.0;
  c.bias = true;
  c.bias_hi = 1.0;
  return keys::gen_key(c);
}

sensor::Image binary_image(std::size_t h, std::size_t w, Rng& rng) {
  sensor::Image img(h, w);
  // Blocky pattern so windows carry structure.
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x) img.at(y, x) = ((x / 3 + y / 5 + rng.below(2)) % 2) ? 1.0 : 0.0;
  return img;
}

}  // namespace

TEST_SUITE("analysis") {

TEST_CASE("identity oracle, basis probes") {
  const auto id = keys::KeyMatrix::identity(6);
  const auto res = analysis::chosen_plaintext_attack(key_oracle(id), 6, 7, {});
  CHECK(res.recovered.bitwise_equal(CooMatrix::identity(7)));
  CHECK(res.probes == 7);
  CHECK(res.residual == 0.0);
  CHECK(res.success);
}

TEST_CASE("basis probes recover random keys") {
  for (const std::size_t alpha : {1, 2, 4, 8}) {
    const auto k = random_key(32, alpha, alpha);
    const auto res = analysis::chosen_plaintext_attack(key_oracle(k), 32, 33, {});
    CHECK(res.residual <= 1e-9);
    CHECK(res.success);
    CHECK(sparse::max_abs_diff(res.recovered, k.forward()) <= 1e-12);
  }
}

TEST_CASE("random probes solve the normal equations") {
  const auto k = random_key(20, 2, 9);
  AttackConfig cfg;
  cfg.probes = ProbeKind::kRandom;
  cfg.n_probes = 40;
  cfg.seed = 3;
  const auto res = analysis::chosen_plaintext_attack(key_oracle(k), 20, 21, cfg);
  CHECK(res.probes == 40);
  CHECK(res.residual <= 1e-9);
  CHECK(res.success);
}

TEST_CASE("underdetermined random probing is singular") {
  const auto k = random_key(20, 2, 9);
  AttackConfig cfg;
  cfg.probes = ProbeKind::kRandom;
  cfg.n_probes = 10;
  CHECK_THROWS_AS(analysis::chosen_plaintext_attack(key_oracle(k), 20, 21, cfg), SingularSystem);
}

TEST_CASE("attack success tracks the tolerance") {
  const auto k = random_key(8, 2, 1);
  // An oracle with a quadratic term is not affine; the fit cannot be exact.
  const analysis::AffineOracle bent = [&k](std::span<const double> x) {
    auto y = keys::key_apply(k, x);
    y[0] += 0.5 * x[0] * x[0];
    return y;
  };
  const auto res = analysis::chosen_plaintext_attack(bent, 8, 9, {});
  CHECK(res.residual > 1e-9);
  CHECK_FALSE(res.success);
  CHECK_THROWS_AS(analysis::chosen_plaintext_attack(key_oracle(k), 8, 5, {}), ShapeError);
}

TEST_CASE("nonneg split") {
  const auto b = CooMatrix::from_dense(1, 2, std::vector<double>{1, -2});
  const auto [bp, bn] = analysis::nonneg_split(b);
  CHECK(bp.to_dense() == std::vector<double>{1, 0});
  CHECK(bn.to_dense() == std::vector<double>{0, 2});

  Rng rng(2);
  auto pos = oracle::random_coo(10, 10, 0.3, rng);
  std::vector<sparse::Triplet> t = pos.triplets();
  for (auto& e : t) e.value = std::abs(e.value);
  pos = CooMatrix::from_triplets(10, 10, t);
  const auto [pp, pn] = analysis::nonneg_split(pos);
  CHECK(pp.bitwise_equal(pos));
  CHECK(pn.nnz() == 0);

  for (int trial = 0; trial < 50; ++trial) {
    const auto m = oracle::random_coo(12, 9, 0.4, rng);
    const auto [p, n] = analysis::nonneg_split(m);
    for (const double v : p.values()) CHECK(v > 0.0);
    for (const double v : n.values()) CHECK(v > 0.0);
    CHECK(sparse::coo_subtract(p, n).bitwise_equal(m));
    for (const auto& e : p.triplets()) CHECK(n.at(e.row, e.col) == 0.0);
  }
}

TEST_CASE("nonneg split reconstructs a keyed layer") {
  ir::NetworkDef net;
  net.input_shape = {1, 5, 5};
  ir::Conv2d c;
  c.kh = c.kw = 3;
  c.pad = 1;
  c.weights = {0.5, -1, 0.25, 1, -2, 1, -0.5, 0.75, 0.3};
  c.bias = {0.2};
  net.layers = {c};
  keyed::KeyChainOptions o;
  o.alpha = 3;
  o.seed = 4;
  o.output_public = false;
  const auto chain = keyed::assign_keys(net, o);
  const auto lowered = ir::lower(net);
  const auto kn = keyed::build_keynet(lowered, chain);
  const auto& a = chain.keys[1].forward();
  const auto b = sparse::coo_matmul(std::get<ir::SparseAffine>(lowered.layers[0]).matrix,
                                    chain.keys[0].inverse());
  const auto [bp, bn] = analysis::nonneg_split(b);
  const auto recon = sparse::coo_subtract(sparse::coo_matmul(a, bp), sparse::coo_matmul(a, bn));
  const double scale = oracle::max_abs(kn.layers[0].matrix.to_dense());
  CHECK(sparse::max_abs_diff(recon, kn.layers[0].matrix) <= 1e-12 * scale);
}

TEST_CASE("ssim basics") {
  Rng rng(3);
  const auto x = binary_image(32, 32, rng);
  const auto p = analysis::SsimParams::standard(1.0);
  CHECK(analysis::ssim(x, x, p) == doctest::Approx(1.0).epsilon(1e-12));
  sensor::Image inv = x;
  for (auto& v : inv.pixels) v = 1.0 - v;
  CHECK(analysis::ssim(x, inv, p) < 0.05);

  const auto a = analysis::synthetic_scene(40, 40, 1);
  const auto b = analysis::synthetic_scene(40, 40, 2);
  const auto p255 = analysis::SsimParams::standard(255.0);
  CHECK(analysis::ssim(a, b, p255) == analysis::ssim(b, a, p255));
  const double s = analysis::ssim(a, b, p255);
  CHECK(s >= 0.0);
  CHECK(s <= 1.0);

  CHECK_THROWS_AS(analysis::ssim(a, sensor::Image(40, 41), p255), ShapeError);
  auto bad = p255;
  bad.window = 8;
  CHECK_THROWS_AS(analysis::ssim(a, a, bad), ParameterError);
  bad = p255;
  bad.c1 = 0.0;
  CHECK_THROWS_AS(analysis::ssim(a, a, bad), ParameterError);
}

TEST_CASE("alpha 8 encoding is not perceptually similar") {
  const auto img = analysis::synthetic_scene(28, 28, 5);
  const auto k = random_key(28 * 28, 8, 6);
  std::vector<double> v = img.pixels;
  v.push_back(1.0);
  auto e = keys::key_apply(k, v);
  e.pop_back();
  sensor::Image enc(28, 28);
  enc.pixels = e;
  CHECK(analysis::ssim(img, enc, analysis::SsimParams::standard(255.0)) < 0.2);
}

}  // TEST_SUITE
