#include <benchmark/benchmark.h>

#include "keynet/keyed.hpp"
#include "keynet/keys.hpp"
#include "keynet/netir.hpp"
#include "keynet/rng.hpp"

namespace {

using namespace keynet;

void BM_GenKey(benchmark::State& state) {
  keys::KeyGenConfig c;
  c.dim = 784;
  c.alpha = static_cast<std::size_t>(state.range(0));
  c.gain_lo = 0.5;
  c.gain_hi = 2.0;
  for (auto _ : state) {
    ++c.seed;
    benchmark::DoNotOptimize(keys::gen_key(c));
  }
}
BENCHMARK(BM_GenKey)->Arg(1)->Arg(4)->Arg(16);

void BM_BuildKeynet(benchmark::State& state) {
  const auto net = ir::lenet_topology(1);
  const auto lowered = ir::lower(net);
  keyed::KeyChainOptions o;
  o.alpha = static_cast<std::size_t>(state.range(0));
  const auto chain = keyed::assign_keys(net, o);
  for (auto _ : state) benchmark::DoNotOptimize(keyed::build_keynet(lowered, chain));
}
BENCHMARK(BM_BuildKeynet)->Arg(1)->Arg(2)->Arg(4)->Unit(benchmark::kMillisecond);

void BM_KeyedInference(benchmark::State& state) {
  const auto net = ir::lenet_topology(1);
  keyed::KeyChainOptions o;
  o.alpha = static_cast<std::size_t>(state.range(0));
  const auto chain = keyed::assign_keys(net, o);
  const auto kn = keyed::build_keynet(ir::lower(net), chain);
  Rng rng(4);
  ir::Tensor x{net.input_shape, std::vector<double>(net.input_shape.size())};
  for (auto& v : x.data) v = rng.uniform();
  const auto enc = keyed::encode_image(x, chain);
  for (auto _ : state) benchmark::DoNotOptimize(keyed::keyed_forward(kn, enc));
}
BENCHMARK(BM_KeyedInference)->Arg(1)->Arg(4)->Arg(8)->Unit(benchmark::kMicrosecond);

void BM_PlainInference(benchmark::State& state) {
  const auto net = ir::lenet_topology(1);
  const auto lowered = ir::lower(net);
  Rng rng(4);
  ir::Tensor x{net.input_shape, std::vector<double>(net.input_shape.size())};
  for (auto& v : x.data) v = rng.uniform();
  const auto v = ir::vectorize(x);
  for (auto _ : state) benchmark::DoNotOptimize(ir::plain_forward(lowered, v));
}
BENCHMARK(BM_PlainInference)->Unit(benchmark::kMicrosecond);

}  // namespace
