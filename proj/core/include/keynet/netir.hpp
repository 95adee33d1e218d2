#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "keynet/sparse.hpp"

namespace keynet::ir {

using sparse::CooMatrix;
using sparse::DenseVector;

struct Shape {
  std::size_t channels = 1;
  std::size_t height = 1;
  std::size_t width = 1;

  std::size_t size() const { return channels * height * width; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

// Channel-major CHW tensor.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  double& at(std::size_t c, std::size_t y, std::size_t x) {
    return data[(c * shape.height + y) * shape.width + x];
  }
  double at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * shape.height + y) * shape.width + x];
  }
};

enum class Padding { kZeros, kReflect, kReplicate, kCircular };

struct Conv2d {
  std::size_t in_ch = 1;
  std::size_t out_ch = 1;
  std::size_t kh = 1;
  std::size_t kw = 1;
  std::size_t stride = 1;
  std::size_t pad = 0;
  Padding padding = Padding::kZeros;
  std::vector<double> weights;  // [out_ch][in_ch][kh][kw]
  std::vector<double> bias;     // out_ch values, or empty
};

struct AvgPool {
  std::size_t k = 2;
  std::size_t stride = 2;
};

struct Dense {
  std::size_t in_dim = 1;
  std::size_t out_dim = 1;
  std::vector<double> weights;  // [out_dim][in_dim]
  std::vector<double> bias;     // out_dim values, or empty
};

struct Relu {};

using LayerSpec = std::variant<Conv2d, AvgPool, Dense, Relu>;

std::string layer_kind(const LayerSpec& layer);
bool is_relu(const LayerSpec& layer);

struct NetworkDef {
  Shape input_shape;
  std::vector<LayerSpec> layers;
};

// Output shape of a single layer; ShapeError / ParameterError when the layer
// cannot consume in.
Shape output_shape(const LayerSpec& layer, const Shape& in);

// Shapes at every layer boundary: [input, after layer 1, ..., output].
std::vector<Shape> infer_shapes(const NetworkDef& net);

// Affine-augmented layer matrix: (out + 1) x (in + 1), last row [0 ... 0 1],
// bias in the last column.
struct SparseAffine {
  CooMatrix matrix;
  Shape in_shape;
  Shape out_shape;
};

struct ReluMarker {
  Shape shape;
};

using LoweredLayer = std::variant<SparseAffine, ReluMarker>;

struct LoweredNetwork {
  Shape input_shape;
  Shape output_shape;
  std::vector<LoweredLayer> layers;
};

// CHW flattening (channel, then row, then column) with a trailing 1.
DenseVector vectorize(const Tensor& image, const Shape& expected);
DenseVector vectorize(const Tensor& image);
// Inverse of vectorize; v must have length shape.size() + 1.
Tensor devectorize(std::span<const double> v, const Shape& shape);

SparseAffine lower_conv2d(const Conv2d& spec, const Shape& in_shape);
SparseAffine lower_avgpool(const AvgPool& spec, const Shape& in_shape);
SparseAffine lower_dense(const Dense& spec, const Shape& in_shape);
LoweredNetwork lower(const NetworkDef& net);

// ReLU on every element except the trailing homogeneous coordinate.
void relu_inplace(std::span<double> v);

DenseVector plain_forward(const LoweredNetwork& net, std::span<const double> x);

// Product of all layer matrices (last layer leftmost). Only valid for networks
// without ReLU layers.
CooMatrix compose_linear(const LoweredNetwork& net);

// Reference topologies with deterministic random weights.
//
// LeNet-style: conv5x5(1->6, pad 2) relu avgpool2 conv5x5(6->16) relu avgpool2
// dense(400->120) relu dense(120->84) relu dense(84->10), on 1x28x28.
NetworkDef lenet_topology(std::uint64_t seed);
// All-convolutional: 3x3 convs with stride-2 downsampling in place of pooling,
// a 1x1 class conv and global average pooling, on 1x28x28.
NetworkDef allconv_topology(std::uint64_t seed);
// The 2x2 worked example: conv with kernel [-1, 1] followed by ReLU on a
// 1x2x2 image.
NetworkDef keynet_example();
// Input image of the worked example, [[11, 12], [21, 22]].
Tensor keynet_example_image();

}  // namespace keynet::ir
