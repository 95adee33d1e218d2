#include "doctest.h"
#include "keynet/errors.hpp"
#include "keynet/kspm_io.hpp"
#include "keynet/netir.hpp"
#include "keynet/tiled.hpp"
#include "oracles.hpp"

using namespace keynet;
using sparse::CooMatrix;

namespace {

// Block-diagonal matrix made of copies of one dense block.
CooMatrix repeated_blocks(const std::vector<double>& block, std::size_t b, std::size_t copies) {
  std::vector<sparse::Triplet> t;
  for (std::size_t k = 0; k < copies; ++k)
    for (std::size_t r = 0; r < b; ++r)
      for (std::size_t c = 0; c < b; ++c)
        if (block[r * b + c] != 0.0) t.push_back({k * b + r, k * b + c, block[r * b + c]});
  return CooMatrix::from_triplets(b * copies, b * copies, std::move(t));
}

}  // namespace

TEST_SUITE("tiled") {

TEST_CASE("zero matrix has an empty dictionary") {
  const auto t = sparse::to_tiled(CooMatrix(8, 8), 4);
  CHECK(t.grid_rows() == 2);
  CHECK(t.grid_cols() == 2);
  CHECK(t.occupied_cells() == 0);
  CHECK(t.tile_count() == 0);
  CHECK(sparse::tiled_matvec(t, std::vector<double>(8, 3.0)) == std::vector<double>(8, 0.0));
}

TEST_CASE("identical blocks share one tile") {
  Rng rng(3);
  std::vector<double> block(16);
  for (auto& v : block) v = rng.uniform(0.5, 1.0);
  const auto m = repeated_blocks(block, 4, 2);
  const auto t = sparse::to_tiled(m, 4);
  CHECK(t.tile_count() == 1);
  CHECK(t.occupied_cells() == 2);
  CHECK(t.cell(0, 0) == t.cell(1, 1));
  CHECK_FALSE(t.cell(0, 1).has_value());
  CHECK(t.tile(*t.cell(0, 0)) == block);
}

TEST_CASE("dedup is bit-exact") {
  std::vector<double> a(4, 1.0);
  std::vector<double> b = a;
  b[3] = std::nextafter(1.0, 2.0);
  std::vector<sparse::Triplet> tr;
  for (std::size_t i = 0; i < 4; ++i) {
    tr.push_back({i / 2, i % 2, a[i]});
    tr.push_back({2 + i / 2, 2 + i % 2, b[i]});
  }
  const auto t = sparse::to_tiled(CooMatrix::from_triplets(4, 4, tr), 2);
  CHECK(t.tile_count() == 2);
}

TEST_CASE("conv Toeplitz tiles repeat") {
  Rng rng(9);
  ir::Conv2d c;
  c.kh = c.kw = 3;
  c.pad = 1;
  c.weights.resize(9);
  for (auto& w : c.weights) w = rng.uniform(-1, 1);
  const auto lowered = ir::lower_conv2d(c, {1, 8, 8});
  const auto w = sparse::coo_block(lowered.matrix, 64, 64);
  const auto t = sparse::to_tiled(w, 8);
  CHECK(t.occupied_cells() == 22);
  // One tile row per image row: each reads the rows above, at and below it,
  // and those three blocks are the same for every image row.
  CHECK(t.tile_count() == 3);
  CHECK(sparse::from_tiled(t).bitwise_equal(w));
  CHECK(t.stored_bytes() < sparse::coo_bytes(w));
}

TEST_CASE("round trip and matvec are exact for every tile size") {
  Rng rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t rows = 1 + rng.below(70), cols = 1 + rng.below(70);
    const auto m = oracle::random_coo(rows, cols, rng.uniform(0.0, 0.4), rng);
    std::vector<double> v(cols);
    for (auto& x : v) x = rng.normal();
    const auto ref = sparse::coo_matvec(m, v);
    for (const std::size_t T : {1, 2, 4, 8, 16}) {
      const auto t = sparse::to_tiled(m, T);
      CHECK(sparse::from_tiled(t).bitwise_equal(m));
      CHECK(sparse::tiled_matvec(t, v) == ref);
      CHECK(sparse::from_tiled(sparse::decode_kstm(sparse::encode_kstm(t))).bitwise_equal(m));
    }
  }
}

TEST_CASE("identity tiled at T=2") {
  const auto t = sparse::to_tiled(CooMatrix::identity(4), 2);
  CHECK(sparse::tiled_matvec(t, std::vector<double>{1, 2, 3, 4}) ==
        std::vector<double>{1, 2, 3, 4});
  CHECK(t.tile_count() == 1);
  CHECK_THROWS_AS(sparse::tiled_matvec(t, std::vector<double>{1, 2}), ShapeError);
  CHECK_THROWS_AS(sparse::to_tiled(CooMatrix::identity(4), 0), ParameterError);
}

TEST_CASE("stored bytes never exceed COO bytes once a tile repeats") {
  Rng rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 2 + rng.below(60);
    auto m = oracle::random_coo(n, n, rng.uniform(0.0, 0.3), rng);
    const std::size_t T = std::size_t{1} << rng.below(5);
    const auto t = sparse::to_tiled(m, T);
    if (t.tile_count() < t.occupied_cells()) CHECK(t.stored_bytes() <= sparse::coo_bytes(m));
    // The serialized blob is the payload plus fixed header and cell count.
    CHECK(sparse::encode_kstm(t).size() == 4 + 4 + 8 * 4 + t.stored_bytes() + 8);
  }
  // Repeating single-entry tiles: the sparse tile encoding keeps this cheap.
  const auto id = CooMatrix::identity(256);
  const auto t = sparse::to_tiled(id, 16);
  CHECK(t.stored_bytes() < sparse::coo_bytes(id));
}

TEST_CASE("KSPM blob layout and errors") {
  const auto m = CooMatrix::from_triplets(2, 3, {{0, 1, 2.5}, {1, 2, -1.0}});
  const std::string blob = sparse::encode_kspm(m);
  CHECK(blob.size() == 4 + 4 + 24 + 2 * 24);
  CHECK(blob.substr(0, 4) == "KSPM");
  CHECK(static_cast<unsigned char>(blob[4]) == 1);
  CHECK(static_cast<unsigned char>(blob[8]) == 2);   // rows, little-endian
  CHECK(static_cast<unsigned char>(blob[16]) == 3);  // cols
  CHECK(static_cast<unsigned char>(blob[24]) == 2);  // nnz
  CHECK(sparse::decode_kspm(blob).bitwise_equal(m));

  CHECK_THROWS_AS(sparse::decode_kspm("XXXX" + blob.substr(4)), FormatError);
  CHECK_THROWS_AS(sparse::decode_kspm(blob.substr(0, blob.size() - 3)), FormatError);
  CHECK_THROWS_AS(sparse::decode_kspm(blob + "x"), FormatError);
  CHECK_THROWS_AS(sparse::decode_kstm(blob), FormatError);

  const auto dir = oracle::scratch_dir("kspm");
  sparse::write_kspm(dir / "m.kspm", m);
  CHECK(sparse::read_kspm(dir / "m.kspm").bitwise_equal(m));
  sparse::write_kstm(dir / "m.kstm", sparse::to_tiled(m, 2));
  CHECK(sparse::from_tiled(sparse::read_kstm(dir / "m.kstm")).bitwise_equal(m));
}

}  // TEST_SUITE
