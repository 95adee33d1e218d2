#include "keynet/netir.hpp"

#include <algorithm>
#include <cmath>

#include "keynet/errors.hpp"
#include "keynet/rng.hpp"

namespace keynet::ir {
namespace {

using sparse::Triplet;

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

std::size_t conv_extent(std::size_t in, std::size_t k, std::size_t stride,
                        std::size_t pad, const char* what) {
  if (in + 2 * pad < k)
    throw ShapeError(std::string(what) + ": kernel of " + std::to_string(k) +
                     " exceeds padded input of " + std::to_string(in + 2 * pad));
  return (in + 2 * pad - k) / stride + 1;
}

// Appends the homogeneous row and builds the augmented matrix.
SparseAffine finish_affine(std::vector<Triplet> entries, const Shape& in,
                           const Shape& out) {
  const std::size_t rows = out.size();
  const std::size_t cols = in.size();
  entries.push_back({rows, cols, 1.0});
  return {CooMatrix::from_triplets(rows + 1, cols + 1, std::move(entries)), in,
          out};
}

void fill_uniform(std::vector<double>& v, std::size_t n, double scale,
                  Rng& rng) {
  v.resize(n);
  for (auto& x : v) x = rng.uniform(-scale, scale);
}

Conv2d random_conv(std::size_t in_ch, std::size_t out_ch, std::size_t k,
                   std::size_t stride, std::size_t pad, Rng& rng) {
  Conv2d c;
  c.in_ch = in_ch;
  c.out_ch = out_ch;
  c.kh = c.kw = k;
  c.stride = stride;
  c.pad = pad;
  const double scale = 1.0 / std::sqrt(static_cast<double>(in_ch * k * k));
  fill_uniform(c.weights, out_ch * in_ch * k * k, scale, rng);
  fill_uniform(c.bias, out_ch, 0.1, rng);
  return c;
}

Dense random_dense(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  Dense d;
  d.in_dim = in_dim;
  d.out_dim = out_dim;
  fill_uniform(d.weights, out_dim * in_dim,
               1.0 / std::sqrt(static_cast<double>(in_dim)), rng);
  fill_uniform(d.bias, out_dim, 0.1, rng);
  return d;
}

}  // namespace

std::string to_string(const Shape& s) {
  return std::to_string(s.channels) + "x" + std::to_string(s.height) + "x" +
         std::to_string(s.width);
}

std::string layer_kind(const LayerSpec& layer) {
  return std::visit(Overloaded{[](const Conv2d&) { return "conv2d"; },
                               [](const AvgPool&) { return "avgpool"; },
                               [](const Dense&) { return "dense"; },
                               [](const Relu&) { return "relu"; }},
                    layer);
}

bool is_relu(const LayerSpec& layer) {
  return std::holds_alternative<Relu>(layer);
}

Shape output_shape(const LayerSpec& layer, const Shape& in) {
  return std::visit(
      Overloaded{
          [&](const Conv2d& c) {
            if (c.kh == 0 || c.kw == 0 || c.stride == 0)
              throw ParameterError("conv2d: kernel dims and stride must be >= 1");
            if (c.in_ch != in.channels)
              throw ShapeError("conv2d: expects " + std::to_string(c.in_ch) +
                               " input channels, got " + to_string(in));
            return Shape{c.out_ch,
                         conv_extent(in.height, c.kh, c.stride, c.pad, "conv2d"),
                         conv_extent(in.width, c.kw, c.stride, c.pad, "conv2d")};
          },
          [&](const AvgPool& p) {
            if (p.k == 0 || p.stride == 0)
              throw ParameterError("avgpool: window and stride must be >= 1");
            return Shape{in.channels,
                         conv_extent(in.height, p.k, p.stride, 0, "avgpool"),
                         conv_extent(in.width, p.k, p.stride, 0, "avgpool")};
          },
          [&](const Dense& d) {
            if (d.in_dim != in.size())
              throw ShapeError("dense: expects " + std::to_string(d.in_dim) +
                               " inputs, got " + to_string(in));
            return Shape{d.out_dim, 1, 1};
          },
          [&](const Relu&) { return in; }},
      layer);
}

std::vector<Shape> infer_shapes(const NetworkDef& net) {
  std::vector<Shape> shapes{net.input_shape};
  for (const auto& layer : net.layers)
    shapes.push_back(output_shape(layer, shapes.back()));
  return shapes;
}

DenseVector vectorize(const Tensor& image, const Shape& expected) {
  if (image.shape != expected)
    throw ShapeError("vectorize: image is " + to_string(image.shape) +
                     ", network expects " + to_string(expected));
  return vectorize(image);
}

DenseVector vectorize(const Tensor& image) {
  if (image.data.size() != image.shape.size())
    throw ShapeError("vectorize: tensor data does not match its shape");
  DenseVector v(image.data.begin(), image.data.end());
  v.push_back(1.0);
  return v;
}

Tensor devectorize(std::span<const double> v, const Shape& shape) {
  if (v.size() != shape.size() + 1)
    throw ShapeError("devectorize: vector of length " + std::to_string(v.size()) +
                     " for shape " + to_string(shape));
  return {shape, std::vector<double>(v.begin(), v.end() - 1)};
}

SparseAffine lower_conv2d(const Conv2d& spec, const Shape& in) {
  if (spec.padding != Padding::kZeros)
    throw ParameterError("conv2d: unsupported padding mode (only zero padding)");
  const Shape out = output_shape(spec, in);
  if (spec.weights.size() != spec.out_ch * spec.in_ch * spec.kh * spec.kw)
    throw ShapeError("conv2d: weight tensor has wrong size");
  if (!spec.bias.empty() && spec.bias.size() != spec.out_ch)
    throw ShapeError("conv2d: bias has wrong size");

  const std::size_t H = in.height, W = in.width;
  std::vector<Triplet> entries;
  entries.reserve(out.size() * spec.in_ch * spec.kh * spec.kw + out.size());
  for (std::size_t oc = 0; oc < out.channels; ++oc) {
    for (std::size_t oy = 0; oy < out.height; ++oy) {
      for (std::size_t ox = 0; ox < out.width; ++ox) {
        const std::size_t row = (oc * out.height + oy) * out.width + ox;
        for (std::size_t ic = 0; ic < spec.in_ch; ++ic) {
          for (std::size_t ky = 0; ky < spec.kh; ++ky) {
            const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * spec.stride + ky) -
                                      static_cast<std::ptrdiff_t>(spec.pad);
            if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(H)) continue;
            for (std::size_t kx = 0; kx < spec.kw; ++kx) {
              const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * spec.stride + kx) -
                                        static_cast<std::ptrdiff_t>(spec.pad);
              if (ix < 0 || ix >= static_cast<std::ptrdiff_t>(W)) continue;
              const double w =
                  spec.weights[((oc * spec.in_ch + ic) * spec.kh + ky) * spec.kw + kx];
              entries.push_back({row,
                                 (ic * H + static_cast<std::size_t>(iy)) * W +
                                     static_cast<std::size_t>(ix),
                                 w});
            }
          }
        }
        if (!spec.bias.empty()) entries.push_back({row, in.size(), spec.bias[oc]});
      }
    }
  }
  return finish_affine(std::move(entries), in, out);
}

SparseAffine lower_avgpool(const AvgPool& spec, const Shape& in) {
  const Shape out = output_shape(spec, in);
  const double w = 1.0 / static_cast<double>(spec.k * spec.k);
  std::vector<Triplet> entries;
  entries.reserve(out.size() * spec.k * spec.k + 1);
  for (std::size_t c = 0; c < out.channels; ++c)
    for (std::size_t oy = 0; oy < out.height; ++oy)
      for (std::size_t ox = 0; ox < out.width; ++ox) {
        const std::size_t row = (c * out.height + oy) * out.width + ox;
        for (std::size_t ky = 0; ky < spec.k; ++ky)
          for (std::size_t kx = 0; kx < spec.k; ++kx) {
            const std::size_t iy = oy * spec.stride + ky;
            const std::size_t ix = ox * spec.stride + kx;
            entries.push_back({row, (c * in.height + iy) * in.width + ix, w});
          }
      }
  return finish_affine(std::move(entries), in, out);
}

SparseAffine lower_dense(const Dense& spec, const Shape& in) {
  const Shape out = output_shape(spec, in);
  if (spec.weights.size() != spec.out_dim * spec.in_dim)
    throw ShapeError("dense: weight matrix has wrong size");
  if (!spec.bias.empty() && spec.bias.size() != spec.out_dim)
    throw ShapeError("dense: bias has wrong size");
  std::vector<Triplet> entries;
  entries.reserve(spec.weights.size() + spec.out_dim + 1);
  for (std::size_t r = 0; r < spec.out_dim; ++r) {
    for (std::size_t c = 0; c < spec.in_dim; ++c)
      entries.push_back({r, c, spec.weights[r * spec.in_dim + c]});
    if (!spec.bias.empty()) entries.push_back({r, spec.in_dim, spec.bias[r]});
  }
  return finish_affine(std::move(entries), in, out);
}

LoweredNetwork lower(const NetworkDef& net) {
  const auto shapes = infer_shapes(net);
  LoweredNetwork out{net.input_shape, shapes.back(), {}};
  out.layers.reserve(net.layers.size());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    const Shape& in = shapes[i];
    out.layers.push_back(std::visit(
        Overloaded{
            [&](const Conv2d& c) -> LoweredLayer { return lower_conv2d(c, in); },
            [&](const AvgPool& p) -> LoweredLayer { return lower_avgpool(p, in); },
            [&](const Dense& d) -> LoweredLayer { return lower_dense(d, in); },
            [&](const Relu&) -> LoweredLayer { return ReluMarker{in}; }},
        net.layers[i]));
  }
  return out;
}

void relu_inplace(std::span<double> v) {
  if (v.empty()) return;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) v[i] = std::max(0.0, v[i]);
}

DenseVector plain_forward(const LoweredNetwork& net, std::span<const double> x) {
  if (x.size() != net.input_shape.size() + 1)
    throw ShapeError("plain_forward: input of length " + std::to_string(x.size()) +
                     ", network expects " + std::to_string(net.input_shape.size() + 1));
  if (x.back() != 1.0)
    throw ContractError("plain_forward: input is not homogeneous");
  DenseVector v(x.begin(), x.end());
  for (std::size_t i = 0; i < net.layers.size(); ++i) {
    if (const auto* a = std::get_if<SparseAffine>(&net.layers[i])) {
      if (a->matrix.cols() != v.size())
        throw ShapeError("plain_forward: layer " + std::to_string(i) +
                         " expects length " + std::to_string(a->matrix.cols()) +
                         ", got " + std::to_string(v.size()));
      v = sparse::coo_matvec(a->matrix, v);
    } else {
      relu_inplace(v);
    }
  }
  return v;
}

CooMatrix compose_linear(const LoweredNetwork& net) {
  CooMatrix acc = CooMatrix::identity(net.input_shape.size() + 1);
  for (const auto& layer : net.layers) {
    const auto* a = std::get_if<SparseAffine>(&layer);
    if (!a) throw ContractError("compose_linear: network contains a ReLU layer");
    acc = sparse::coo_matmul(a->matrix, acc);
  }
  return acc;
}

NetworkDef lenet_topology(std::uint64_t seed) {
  Rng rng(seed);
  NetworkDef net;
  net.input_shape = {1, 28, 28};
  net.layers = {random_conv(1, 6, 5, 1, 2, rng),
                Relu{},
                AvgPool{2, 2},
                random_conv(6, 16, 5, 1, 0, rng),
                Relu{},
                AvgPool{2, 2},
                random_dense(400, 120, rng),
                Relu{},
                random_dense(120, 84, rng),
                Relu{},
                random_dense(84, 10, rng)};
  return net;
}

NetworkDef allconv_topology(std::uint64_t seed) {
  Rng rng(seed);
  NetworkDef net;
  net.input_shape = {1, 28, 28};
  net.layers = {random_conv(1, 8, 3, 1, 1, rng),
                Relu{},
                random_conv(8, 8, 3, 2, 1, rng),
                Relu{},
                random_conv(8, 16, 3, 1, 1, rng),
                Relu{},
                random_conv(16, 16, 3, 2, 1, rng),
                Relu{},
                random_conv(16, 10, 1, 1, 0, rng),
                Relu{},
                AvgPool{7, 7}};
  return net;
}

NetworkDef keynet_example() {
  Conv2d conv;
  conv.in_ch = 1;
  conv.out_ch = 1;
  conv.kh = 1;
  conv.kw = 2;
  conv.weights = {-1.0, 1.0};
  NetworkDef net;
  net.input_shape = {1, 2, 2};
  net.layers = {conv, Relu{}};
  return net;
}

Tensor keynet_example_image() {
  return {{1, 2, 2}, {11.0, 12.0, 21.0, 22.0}};
}

}  // namespace keynet::ir
