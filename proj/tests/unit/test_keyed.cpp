#include <set>

#include "doctest.h"
#include "keynet/errors.hpp"
#include "keynet/hash.hpp"
#include "keynet/keyed.hpp"
#include "keynet/kspm_io.hpp"
#include "keynet/keynet_io.hpp"
#include "oracles.hpp"

using namespace keynet;
using keyed::KeyChainOptions;
using sparse::CooMatrix;

namespace {

KeyChainOptions opts(std::size_t alpha, std::uint64_t seed, bool output_public = true) {
  KeyChainOptions o;
  o.alpha = alpha;
  o.seed = seed;
  o.output_public = output_public;
  return o;
}

ir::NetworkDef small_net(std::uint64_t seed) {
  Rng rng(seed);
  ir::NetworkDef net;
  net.input_shape = {1, 6, 6};
  ir::Conv2d c;
  c.out_ch = 2;
  c.kh = c.kw = 3;
  c.pad = 1;
  c.weights.resize(18);
  for (auto& w : c.weights) w = rng.uniform(-1, 1);
  c.bias = {0.1, -0.2};
  ir::Dense d;
  d.in_dim = 18;
  d.out_dim = 5;
  d.weights.resize(90);
  for (auto& w : d.weights) w = rng.uniform(-1, 1);
  net.layers = {c, ir::Relu{}, ir::AvgPool{2, 2}, d};
  return net;
}

// Homomorphism oracle: A_k applied to the plain output, against the keyed path.
double homomorphism_error(const ir::NetworkDef& net, const keyed::KeyChain& chain,
                          const keyed::KeyedNetwork& kn, Rng& rng) {
  const auto lowered = ir::lower(net);
  const auto x = oracle::random_tensor(net.input_shape, rng);
  const auto expect = keys::key_apply(chain.output_key(), ir::plain_forward(lowered, ir::vectorize(x)));
  const auto got = keyed::keyed_forward(kn, keyed::encode_image(x, chain));
  return oracle::max_abs_diff(got, expect) / (1.0 + oracle::max_abs(expect));
}

CooMatrix with_entry_scaled(const CooMatrix& m, std::size_t k, double factor) {
  auto t = m.triplets();
  t[k].value *= factor;
  return CooMatrix::from_triplets(m.rows(), m.cols(), std::move(t));
}

}  // namespace

TEST_SUITE("keynet") {

TEST_CASE("identity chain reduces to the plain network") {
  const auto net = small_net(1);
  auto o = opts(1, 0);
  o.identity = true;
  const auto chain = keyed::assign_keys(net, o);
  for (const auto& k : chain.keys) CHECK(k.forward().bitwise_equal(CooMatrix::identity(k.dim() + 1)));
  const auto lowered = ir::lower(net);
  const auto kn = keyed::build_keynet(lowered, chain);
  for (std::size_t i = 0; i < kn.layers.size(); ++i)
    if (const auto* s = std::get_if<ir::SparseAffine>(&lowered.layers[i]))
      CHECK(kn.layers[i].matrix.bitwise_equal(s->matrix));
  Rng rng(2);
  const auto x = oracle::random_tensor(net.input_shape, rng);
  const auto e = keyed::encode_image(x, chain);
  CHECK(e.values == ir::vectorize(x));
  CHECK(keyed::keyed_forward(kn, e) == ir::plain_forward(lowered, ir::vectorize(x)));
  const auto rep = keyed::verify_homomorphism(lowered, chain, kn, 10, 1e-6, 3);
  CHECK(rep.max_rel_error == 0.0);
  CHECK(rep.pass);
  const auto mem = keyed::memory_stats(kn, lowered);
  for (const auto& l : mem.layers) CHECK(l.ratio == 1.0);
}

TEST_CASE("relu boundaries get scaled permutation keys") {
  const auto net = small_net(1);
  const auto chain = keyed::assign_keys(net, opts(4, 9, false));
  REQUIRE(chain.keys.size() == 5);
  CHECK(chain.keys[0].alpha() == 4);
  CHECK(chain.keys[1].alpha() == 4);
  CHECK(chain.keys[2].alpha() == 1);
  CHECK_FALSE(chain.keys[2].has_bias());
  CHECK(chain.keys[3].alpha() == 4);
  CHECK(chain.keys[4].alpha() == 4);
  CHECK_FALSE(chain.keys[4].forward().bitwise_equal(CooMatrix::identity(6)));
  const auto pub = keyed::assign_keys(net, opts(4, 9, true));
  CHECK(pub.output_key().forward().bitwise_equal(CooMatrix::identity(6)));
}

TEST_CASE("key assignment and build are deterministic") {
  const auto net = small_net(3);
  const auto a = keyed::assign_keys(net, opts(2, 77));
  const auto b = keyed::assign_keys(net, opts(2, 77));
  for (std::size_t i = 0; i < a.keys.size(); ++i) {
    CHECK(sparse::encode_kspm(a.keys[i].forward()) == sparse::encode_kspm(b.keys[i].forward()));
    CHECK(sparse::encode_kspm(a.keys[i].inverse()) == sparse::encode_kspm(b.keys[i].inverse()));
  }
  const auto lowered = ir::lower(net);
  const auto ka = keyed::build_keynet(lowered, a);
  const auto kb = keyed::build_keynet(lowered, b);
  for (std::size_t i = 0; i < ka.layers.size(); ++i)
    CHECK(ka.layers[i].matrix.bitwise_equal(kb.layers[i].matrix));
  CHECK(ka.fingerprint == a.image_key().fingerprint());
}

TEST_CASE("single non-zero weight, alpha 2: brute force over positions") {
  for (std::size_t pos = 0; pos < 16; ++pos) {
    ir::NetworkDef net;
    net.input_shape = {4, 1, 1};
    ir::Dense d;
    d.in_dim = d.out_dim = 4;
    d.weights.assign(16, 0.0);
    d.weights[pos] = 1.5;
    net.layers = {d};
    const auto chain = keyed::assign_keys(net, opts(2, pos, false));
    const auto kn = keyed::build_keynet(ir::lower(net), chain);
    const auto block = sparse::coo_block(kn.layers[0].matrix, 4, 4);
    // Dense oracle of A W A^-1 on the linear block.
    const auto a = sparse::coo_block(chain.keys[1].forward(), 4, 4).to_dense();
    const auto ainv = sparse::coo_block(chain.keys[0].inverse(), 4, 4).to_dense();
    const auto ref = oracle::matmul(oracle::matmul(a, d.weights, 4, 4, 4), ainv, 4, 4, 4);
    CHECK(oracle::count_nonzero(ref) <= 4);
    CHECK(block.nnz() <= 4);
    CHECK(oracle::max_abs_diff(block.to_dense(), ref) <= 1e-12);
  }
}

TEST_CASE("LeNet alpha 4 satisfies the alpha^2 bound on every layer") {
  const auto net = ir::lenet_topology(2);
  const auto lowered = ir::lower(net);
  const auto kn = keyed::build_keynet(lowered, keyed::assign_keys(net, opts(4, 5)));
  const auto mem = keyed::memory_stats(kn, lowered);
  for (const auto& l : mem.layers) {
    CHECK(l.keyed_nnz <= 16 * l.plain_nnz);
    CHECK(l.ratio <= 16.0);
  }
}

TEST_CASE("alpha 1 preserves per-layer nnz") {
  const auto net = small_net(8);
  const auto lowered = ir::lower(net);
  const auto kn = keyed::build_keynet(lowered, keyed::assign_keys(net, opts(1, 5)));
  const auto rep = keyed::memory_stats(kn, lowered);
  for (const auto& l : rep.layers) CHECK(l.ratio <= 1.0 + 1e-12);
}

TEST_CASE("homomorphism across alphas") {
  Rng rng(10);
  for (const std::size_t alpha : {1, 2, 4, 8})
    for (const bool pub : {true, false}) {
      const auto net = small_net(alpha);
      const auto chain = keyed::assign_keys(net, opts(alpha, 100 + alpha, pub));
      const auto kn = keyed::build_keynet(ir::lower(net), chain);
      for (int t = 0; t < 10; ++t) CHECK(homomorphism_error(net, chain, kn, rng) <= 1e-9);
    }
}

TEST_CASE("linear-only network, alpha 2") {
  Rng rng(12);
  ir::NetworkDef net = small_net(4);
  net.layers.erase(net.layers.begin() + 1);
  const auto chain = keyed::assign_keys(net, opts(2, 4, false));
  const auto kn = keyed::build_keynet(ir::lower(net), chain);
  for (int t = 0; t < 10; ++t) CHECK(homomorphism_error(net, chain, kn, rng) <= 1e-9);
}

TEST_CASE("encode, decode and output decoding") {
  Rng rng(13);
  const auto net = small_net(5);
  const auto chain = keyed::assign_keys(net, opts(8, 6, false));
  const auto lowered = ir::lower(net);
  const auto kn = keyed::build_keynet(lowered, chain);
  const auto x = oracle::random_tensor(net.input_shape, rng);
  const auto e = keyed::encode_image(x, chain);
  CHECK(e.values.back() == 1.0);
  CHECK(e.fingerprint == kn.fingerprint);
  CHECK(oracle::max_abs_diff(keyed::decode_image(e, chain).data, x.data) <= 1e-9);

  const auto plain = ir::plain_forward(lowered, ir::vectorize(x));
  const auto decoded = keyed::decode_output(chain, keyed::keyed_forward(kn, e));
  CHECK(oracle::max_abs_diff(decoded, plain) <= 1e-9);
  std::vector<double> y(6, 1.0);
  for (std::size_t i = 0; i < 5; ++i) y[i] = rng.uniform(-3, 3);
  CHECK(oracle::max_abs_diff(keyed::decode_output(chain, keys::key_apply(chain.output_key(), y)), y) <= 1e-9);

  const auto pub = keyed::assign_keys(net, opts(8, 6, true));
  CHECK(keyed::decode_output(pub, y) == y);
}

TEST_CASE("wrong sensor") {
  const auto net = small_net(5);
  const auto a = keyed::assign_keys(net, opts(2, 1));
  const auto b = keyed::assign_keys(net, opts(2, 2));
  const auto kn = keyed::build_keynet(ir::lower(net), a);
  Rng rng(1);
  const auto e = keyed::encode_image(oracle::random_tensor(net.input_shape, rng), b);
  CHECK_THROWS_AS(keyed::keyed_forward(kn, e), WrongSensor);
  try {
    keyed::keyed_forward(kn, e);
  } catch (const WrongSensor& err) {
    CHECK(std::string(err.what()).find("wrong-sensor") != std::string::npos);
  }
}

TEST_CASE("verification localizes a corrupted layer") {
  const auto net = small_net(6);
  const auto chain = keyed::assign_keys(net, opts(4, 3));
  const auto lowered = ir::lower(net);
  auto kn = keyed::build_keynet(lowered, chain);
  CHECK(keyed::verify_homomorphism(lowered, chain, kn, 20, 1e-6, 1).pass);
  kn.layers[2].matrix = with_entry_scaled(kn.layers[2].matrix, 3, 1.5);
  const auto rep = keyed::verify_homomorphism(lowered, chain, kn, 20, 1e-6, 1);
  CHECK_FALSE(rep.pass);
  REQUIRE(rep.failing_layer.has_value());
  CHECK(*rep.failing_layer == 2);
  CHECK(rep.layer_max_rel_error[0] <= 1e-9);
  CHECK(rep.layer_max_rel_error[1] <= 1e-9);
}

TEST_CASE("relu boundary with a mixing key is rejected") {
  const auto net = small_net(6);
  auto chain = keyed::assign_keys(net, opts(2, 3));
  keys::KeyGenConfig c;
  c.dim = chain.keys[2].dim();
  c.alpha = 2;
  c.seed = 4;
  chain.keys[2] = keys::gen_key(c);
  CHECK_THROWS_AS(keyed::build_keynet(ir::lower(net), chain), ContractError);
}

TEST_CASE("keynet container round trip, tamper detection and key opacity") {
  const auto net = small_net(7);
  const auto chain = keyed::assign_keys(net, opts(2, 3, false));
  const auto kn = keyed::build_keynet(ir::lower(net), chain);
  for (const std::optional<std::size_t> tile : {std::optional<std::size_t>{}, std::optional<std::size_t>{8}}) {
    const auto dir = oracle::scratch_dir(tile ? "keynet_kstm" : "keynet_kspm");
    keyed::save_keynet(dir, kn, tile);
    const auto back = keyed::load_keynet(dir);
    REQUIRE(back.layers.size() == kn.layers.size());
    for (std::size_t i = 0; i < kn.layers.size(); ++i) {
      CHECK(back.layers[i].matrix.bitwise_equal(kn.layers[i].matrix));
      CHECK(back.layers[i].relu == kn.layers[i].relu);
    }
    CHECK(back.fingerprint == kn.fingerprint);

    std::set<std::string> key_digests;
    for (const auto& k : chain.keys) {
      key_digests.insert(sha256_hex(sparse::encode_kspm(k.forward())));
      key_digests.insert(sha256_hex(sparse::encode_kspm(k.inverse())));
    }
    for (const auto& f : std::filesystem::directory_iterator(dir))
      CHECK(key_digests.count(sha256_file(f.path())) == 0);

    const auto victim = dir / (tile ? "layer_001.kstm" : "layer_001.kspm");
    std::string bytes = sparse::read_file_bytes(victim);
    bytes[bytes.size() / 2] ^= 0x40;
    sparse::write_file_bytes(victim, bytes);
    try {
      keyed::load_keynet(dir);
      FAIL("tampered keynet accepted");
    } catch (const IntegrityError& e) {
      CHECK(std::string(e.what()).find("layer 1") != std::string::npos);
      CHECK(e.layer() == std::optional<std::size_t>(1));
    }
  }

  const auto cdir = oracle::scratch_dir("chain");
  keyed::save_chain(cdir, chain);
  const auto back = keyed::load_chain(cdir);
  REQUIRE(back.keys.size() == chain.keys.size());
  for (std::size_t i = 0; i < chain.keys.size(); ++i)
    CHECK(back.keys[i].forward().bitwise_equal(chain.keys[i].forward()));
  CHECK(back.output_public == chain.output_public);
}

}  // TEST_SUITE
