#include <benchmark/benchmark.h>

#include <map>

#include "keynet/keyed.hpp"
#include "keynet/netir.hpp"
#include "keynet/rng.hpp"
#include "keynet/sparse.hpp"
#include "keynet/tiled.hpp"

namespace {

using namespace keynet;

// Keyed second LeNet conv layer at the given alpha.
const sparse::CooMatrix& conv_matrix(std::size_t alpha) {
  static std::map<std::size_t, sparse::CooMatrix> cache;
  auto it = cache.find(alpha);
  if (it == cache.end()) {
    const auto net = ir::lenet_topology(1);
    keyed::KeyChainOptions o;
    o.alpha = alpha;
    o.seed = 2;
    const auto kn = keyed::build_keynet(ir::lower(net), keyed::assign_keys(net, o));
    it = cache.emplace(alpha, kn.layers[3].matrix).first;
  }
  return it->second;
}

std::vector<double> input_for(const sparse::CooMatrix& m) {
  std::vector<double> x(m.cols());
  Rng rng(3);
  for (auto& v : x) v = rng.uniform();
  x.back() = 1.0;
  return x;
}

void BM_CooMatvec(benchmark::State& state) {
  const auto& m = conv_matrix(static_cast<std::size_t>(state.range(0)));
  const auto x = input_for(m);
  for (auto _ : state) benchmark::DoNotOptimize(sparse::coo_matvec(m, x));
  state.counters["nnz"] = static_cast<double>(m.nnz());
}
BENCHMARK(BM_CooMatvec)->Arg(1)->Arg(2)->Arg(4)->Arg(8);

void BM_TiledMatvec(benchmark::State& state) {
  const auto& m = conv_matrix(static_cast<std::size_t>(state.range(0)));
  const auto t = sparse::to_tiled(m, static_cast<std::size_t>(state.range(1)));
  const auto x = input_for(m);
  for (auto _ : state) benchmark::DoNotOptimize(sparse::tiled_matvec(t, x));
  state.counters["stored_bytes"] = static_cast<double>(t.stored_bytes());
  state.counters["coo_bytes"] = static_cast<double>(sparse::coo_bytes(m));
}
BENCHMARK(BM_TiledMatvec)->ArgsProduct({{1, 4}, {8, 16, 32}});

void BM_ToTiled(benchmark::State& state) {
  const auto& m = conv_matrix(static_cast<std::size_t>(state.range(0)));
  for (auto _ : state) benchmark::DoNotOptimize(sparse::to_tiled(m, 16));
}
BENCHMARK(BM_ToTiled)->Arg(1)->Arg(4);

void BM_CooMatmul(benchmark::State& state) {
  const auto& m = conv_matrix(1);
  const auto& k = conv_matrix(static_cast<std::size_t>(state.range(0)));
  const auto kt = k.transpose();
  for (auto _ : state) benchmark::DoNotOptimize(sparse::coo_matmul(kt, m));
}
BENCHMARK(BM_CooMatmul)->Arg(1)->Arg(4);

}  // namespace
