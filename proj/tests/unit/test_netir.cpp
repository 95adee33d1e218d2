#include "doctest.h"
#include "keynet/errors.hpp"
#include "keynet/kspm_io.hpp"
#include "keynet/model_io.hpp"
#include "keynet/netir.hpp"
#include "oracles.hpp"

using namespace keynet;
using ir::Shape;
using ir::Tensor;

namespace {

ir::Conv2d random_conv(std::size_t in_ch, std::size_t out_ch, std::size_t k, std::size_t stride,
                       std::size_t pad, Rng& rng) {
  ir::Conv2d c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.kh = c.kw = k;
  c.stride = stride;
  c.pad = pad;
  c.weights.resize(out_ch * in_ch * k * k);
  for (auto& w : c.weights) w = rng.uniform(-1, 1);
  c.bias.resize(out_ch);
  for (auto& b : c.bias) b = rng.uniform(-1, 1);
  return c;
}

std::vector<double> matrix_path(const ir::SparseAffine& layer, const Tensor& x) {
  auto y = sparse::coo_matvec(layer.matrix, ir::vectorize(x));
  CHECK(y.back() == 1.0);
  y.pop_back();
  return y;
}

}  // namespace

TEST_SUITE("netir") {

TEST_CASE("vectorize order") {
  CHECK(ir::vectorize(ir::keynet_example_image()) == std::vector<double>{11, 12, 21, 22, 1});
  const Tensor t{{2, 1, 1}, {3.5, -4.0}};
  CHECK(ir::vectorize(t) == std::vector<double>{3.5, -4.0, 1});
  Rng rng(1);
  const auto x = oracle::random_tensor({3, 4, 5}, rng);
  const auto back = ir::devectorize(ir::vectorize(x), x.shape);
  CHECK(back.data == x.data);
  CHECK(back.shape == x.shape);
  CHECK_THROWS_AS(ir::vectorize(x, {3, 5, 4}), ShapeError);
}

TEST_CASE("1x1 identity kernel") {
  ir::Conv2d c;
  c.weights = {1.0};
  const auto l = ir::lower_conv2d(c, {1, 3, 3});
  CHECK(l.matrix.bitwise_equal(sparse::CooMatrix::identity(10)));
}

TEST_CASE("worked example conv against loop oracle") {
  const auto net = ir::keynet_example();
  const auto& conv = std::get<ir::Conv2d>(net.layers[0]);
  const auto l = ir::lower_conv2d(conv, net.input_shape);
  const auto x = ir::keynet_example_image();
  CHECK(matrix_path(l, x) == oracle::conv2d(x, conv).data);
  CHECK(l.out_shape == Shape{1, 2, 1});
  // Last row of the augmented matrix is [0 ... 0 1].
  CHECK(sparse::coo_block(l.matrix, 2, 4).nnz() == 4);
  CHECK(l.matrix.nnz() == 5);
  CHECK(l.matrix.row(2).size() == 1);
  CHECK(l.matrix.at(2, 4) == 1.0);
}

TEST_CASE("strided padded multi-channel conv against direct oracle") {
  Rng rng(2);
  const auto c = random_conv(2, 4, 3, 2, 1, rng);
  const auto l = ir::lower_conv2d(c, {2, 8, 8});
  CHECK(l.out_shape == Shape{4, 4, 4});
  for (int t = 0; t < 20; ++t) {
    const auto x = oracle::random_tensor({2, 8, 8}, rng, -1, 1);
    const auto ref = oracle::conv2d(x, c).data;
    CHECK(oracle::rel_diff(matrix_path(l, x), ref) <= 1e-12);
  }
}

TEST_CASE("avgpool hand cases") {
  const auto l = ir::lower_avgpool({2, 2}, {1, 2, 2});
  CHECK(matrix_path(l, {{1, 2, 2}, {1, 2, 3, 4}}) == std::vector<double>{2.5});
  const auto l4 = ir::lower_avgpool({2, 2}, {3, 4, 6});
  const auto y = matrix_path(l4, {{3, 4, 6}, std::vector<double>(72, 0.7)});
  for (const double v : y) CHECK(v == doctest::Approx(0.7).epsilon(1e-15));
  CHECK_THROWS_AS(ir::lower_avgpool({5, 1}, {1, 4, 4}), ShapeError);
}

TEST_CASE("dense layer cases") {
  ir::Dense d;
  d.in_dim = d.out_dim = 3;
  d.weights = {1, 0, 0, 0, 1, 0, 0, 0, 1};
  const Tensor x{{3, 1, 1}, {4, -5, 6}};
  CHECK(matrix_path(ir::lower_dense(d, {3, 1, 1}), x) == x.data);
  d.weights.assign(9, 0.0);
  d.bias = {1, 2, 3};
  CHECK(matrix_path(ir::lower_dense(d, {3, 1, 1}), x) == std::vector<double>{1, 2, 3});
  CHECK_THROWS(ir::lower_dense(d, {4, 1, 1}));
}

TEST_CASE("lowering soundness, 200 random cases per layer kind") {
  Rng rng(3);
  for (int t = 0; t < 200; ++t) {
    const std::size_t in_ch = 1 + rng.below(3), out_ch = 1 + rng.below(3);
    const std::size_t k = 1 + rng.below(4), stride = 1 + rng.below(2), pad = rng.below(k);
    const std::size_t h = k + rng.below(6), w = k + rng.below(6);
    const auto c = random_conv(in_ch, out_ch, k, stride, pad, rng);
    const auto x = oracle::random_tensor({in_ch, h, w}, rng, -1, 1);
    CHECK(oracle::rel_diff(matrix_path(ir::lower_conv2d(c, x.shape), x),
                           oracle::conv2d(x, c).data) <= 1e-12);

    const ir::AvgPool p{1 + rng.below(3), 1 + rng.below(3)};
    const auto xp = oracle::random_tensor({1 + rng.below(3), p.k + rng.below(6), p.k + rng.below(6)},
                                          rng, -1, 1);
    CHECK(oracle::rel_diff(matrix_path(ir::lower_avgpool(p, xp.shape), xp),
                           oracle::avgpool(xp, p).data) <= 1e-12);

    ir::Dense d;
    d.in_dim = 1 + rng.below(20);
    d.out_dim = 1 + rng.below(20);
    d.weights.resize(d.in_dim * d.out_dim);
    for (auto& v : d.weights) v = rng.uniform(-1, 1);
    d.bias.resize(d.out_dim);
    for (auto& v : d.bias) v = rng.uniform(-1, 1);
    const auto xd = oracle::random_tensor({d.in_dim, 1, 1}, rng, -1, 1);
    CHECK(oracle::rel_diff(matrix_path(ir::lower_dense(d, xd.shape), xd),
                           oracle::dense_layer(xd.data, d)) <= 1e-12);
  }
}

TEST_CASE("unsupported padding") {
  ir::Conv2d c;
  c.kh = c.kw = 3;
  c.pad = 1;
  c.weights.assign(9, 1.0);
  c.padding = ir::Padding::kReflect;
  CHECK_THROWS_AS(ir::lower_conv2d(c, {1, 4, 4}), ParameterError);
}

TEST_CASE("plain forward") {
  ir::NetworkDef id;
  id.input_shape = {1, 2, 3};
  ir::Conv2d one;
  one.weights = {1.0};
  id.layers = {one, ir::Relu{}, one};
  const std::vector<double> x{0.5, 0.1, 0.2, 0.3, 0.4, 0.9, 1};
  CHECK(ir::plain_forward(ir::lower(id), x) == x);

  const auto net = ir::keynet_example();
  const auto y = ir::plain_forward(ir::lower(net), ir::vectorize(ir::keynet_example_image()));
  const auto ref = oracle::network(net, ir::keynet_example_image());
  CHECK(std::vector<double>(y.begin(), y.end() - 1) == ref);
  CHECK(y.back() == 1.0);

  std::vector<double> v{-1, 2, -3, 1};
  ir::relu_inplace(v);
  CHECK(v == std::vector<double>{0, 2, 0, 1});
}

TEST_CASE("reference topologies against layerwise oracle") {
  Rng rng(4);
  for (const auto& net : {ir::lenet_topology(5), ir::allconv_topology(5)}) {
    const auto lowered = ir::lower(net);
    CHECK(lowered.output_shape == Shape{10, 1, 1});
    for (int t = 0; t < 5; ++t) {
      const auto x = oracle::random_tensor({1, 28, 28}, rng);
      auto y = ir::plain_forward(lowered, ir::vectorize(x));
      y.pop_back();
      CHECK(oracle::rel_diff(y, oracle::network(net, x)) <= 1e-9);
    }
  }
}

TEST_CASE("linear composition equals sequential application") {
  Rng rng(6);
  ir::NetworkDef net;
  net.input_shape = {2, 6, 6};
  net.layers = {random_conv(2, 3, 3, 1, 1, rng), ir::AvgPool{2, 2}, random_conv(3, 2, 2, 1, 0, rng)};
  const auto lowered = ir::lower(net);
  const auto composed = ir::compose_linear(lowered);
  for (int t = 0; t < 10; ++t) {
    const auto x = ir::vectorize(oracle::random_tensor(net.input_shape, rng, -1, 1));
    CHECK(oracle::rel_diff(sparse::coo_matvec(composed, x), ir::plain_forward(lowered, x)) <= 1e-9);
  }
  net.layers.push_back(ir::Relu{});
  CHECK_THROWS(ir::compose_linear(ir::lower(net)));
}

TEST_CASE("shape inference errors") {
  ir::NetworkDef net;
  net.input_shape = {1, 4, 4};
  ir::Dense d;
  d.in_dim = 10;
  d.out_dim = 2;
  d.weights.assign(20, 0.0);
  net.layers = {d};
  CHECK_THROWS_AS(ir::infer_shapes(net), ShapeError);
  const auto shapes = ir::infer_shapes(ir::lenet_topology(1));
  CHECK(shapes.size() == 12);
  CHECK(shapes[1] == Shape{6, 28, 28});
  CHECK(shapes[6] == Shape{16, 5, 5});
}

TEST_CASE("model container and flat JSON") {
  const auto net = ir::lenet_topology(9);
  const auto dir = oracle::scratch_dir("model");
  ir::save_model(dir, net);
  const auto back = ir::load_model(dir);
  const auto a = ir::lower(net), b = ir::lower(back);
  REQUIRE(a.layers.size() == b.layers.size());
  for (std::size_t i = 0; i < a.layers.size(); ++i)
    if (const auto* s = std::get_if<ir::SparseAffine>(&a.layers[i]))
      CHECK(s->matrix.bitwise_equal(std::get<ir::SparseAffine>(b.layers[i]).matrix));

  const auto blob = dir / "layer_000_weights.f64";
  std::string bytes = sparse::read_file_bytes(blob);
  bytes[3] ^= 0x10;
  sparse::write_file_bytes(blob, bytes);
  CHECK_THROWS_AS(ir::load_model(dir), IntegrityError);

  const auto flat = ir::parse_flat_json(R"({"input_shape": [1, 2, 2],
    "layers": [{"type": "conv2d", "in_ch": 1, "out_ch": 1, "kh": 1, "kw": 2,
                "stride": 1, "pad": 0, "weights": [-1, 1]}, {"type": "relu"}]})");
  const auto ex = ir::lower(ir::keynet_example());
  CHECK(std::get<ir::SparseAffine>(ir::lower(flat).layers[0]).matrix.bitwise_equal(
      std::get<ir::SparseAffine>(ex.layers[0]).matrix));
  CHECK_THROWS_AS(ir::parse_flat_json(R"({"input_shape": [1, 2, 2],
    "layers": [{"type": "maxpool", "k": 2}]})"), UnsupportedLayer);
  try {
    ir::parse_flat_json(R"({"input_shape": [1, 2, 2], "layers": [{"type": "softmax"}]})");
    FAIL("softmax accepted");
  } catch (const UnsupportedLayer& e) {
    CHECK(std::string(e.what()).find("softmax") != std::string::npos);
  }
  CHECK_THROWS_AS(ir::parse_flat_json(R"({"input_shape": [1, 4, 4],
    "layers": [{"type": "conv2d", "in_ch": 1, "out_ch": 1, "kh": 3, "kw": 3, "pad": 1,
                "padding": "reflect", "weights": [1,1,1,1,1,1,1,1,1]}]})"), ParameterError);
}

}  // TEST_SUITE
