#include <fstream>

#include "doctest.h"
#include "keynet/errors.hpp"
#include "keynet/hash.hpp"
#include "keynet/image_io.hpp"
#include "keynet/kspm_io.hpp"
#include "keynet/rng.hpp"
#include "oracles.hpp"

using namespace keynet;

TEST_SUITE("io") {

TEST_CASE("sha256 known answers") {
  CHECK(sha256_hex(std::string()) ==
        "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
  CHECK(sha256_hex(std::string("abc")) ==
        "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST_CASE("rng streams are reproducible and independent of draw history") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  const auto s1 = a.split(3).seed();
  Rng c(42);
  CHECK(c.split(3).seed() == s1);
  CHECK(c.split(4).seed() != s1);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK(u >= 0.0);
    CHECK(u < 1.0);
    CHECK(c.below(7) < 7);
  }
  auto p = c.permutation(50);
  std::sort(p.begin(), p.end());
  for (std::size_t i = 0; i < 50; ++i) CHECK(p[i] == i);
}

TEST_CASE("PGM 8-bit and 16-bit round trips") {
  const auto dir = oracle::scratch_dir("pgm");
  sensor::Image img(3, 5);
  for (std::size_t i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i * 17 % 256);
  io::write_pgm(dir / "a.pgm", img);
  CHECK(io::read_pgm(dir / "a.pgm").pixels == img.pixels);
  const std::string bytes = sparse::read_file_bytes(dir / "a.pgm");
  CHECK(bytes.substr(0, 2) == "P5");

  sensor::Image deep(2, 2);
  deep.pixels = {0, 300, 65535, 1234.4};
  io::write_pgm(dir / "b.pgm", deep, 65535);
  CHECK(io::read_pgm(dir / "b.pgm").pixels == std::vector<double>{0, 300, 65535, 1234});

  sensor::Image clip(1, 2);
  clip.pixels = {-5, 999};
  io::write_pgm(dir / "c.pgm", clip);
  CHECK(io::read_pgm(dir / "c.pgm").pixels == std::vector<double>{0, 255});

  sparse::write_file_bytes(dir / "bad.pgm", "P2\n1 1\n255\n0");
  CHECK_THROWS_AS(io::read_pgm(dir / "bad.pgm"), FormatError);
}

TEST_CASE("raw f64 with sidecar") {
  const auto dir = oracle::scratch_dir("raw");
  io::RawArray raw;
  raw.shape = {2, 2, 3};
  raw.data = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 1};
  raw.homogeneous = true;
  raw.fingerprint = "abc";
  io::write_raw(dir / "x.f64", raw);
  const auto back = io::read_raw(dir / "x.f64");
  CHECK(back.shape == raw.shape);
  CHECK(back.data == raw.data);
  CHECK(back.homogeneous);
  CHECK(back.fingerprint == "abc");
  CHECK(std::filesystem::exists(dir / "x.f64.json"));

  raw.homogeneous = false;
  raw.data.pop_back();
  io::write_raw(dir / "y.f64", raw);
  const auto t = io::read_image(dir / "y.f64");
  CHECK(t.shape == raw.shape);
  CHECK(t.data == raw.data);

  sparse::write_file_bytes(dir / "y.f64", std::string(16, '\0'));
  CHECK_THROWS_AS(io::read_raw(dir / "y.f64"), FormatError);
}

}  // TEST_SUITE
