#include <benchmark/benchmark.h>

#include <vector>

#include "contcal/datastream.hpp"
#include "contcal/metrics.hpp"
#include "contcal/model.hpp"
#include "contcal/numcore.hpp"
#include "contcal/optim.hpp"
#include "contcal/rng.hpp"
#include "contcal/strategies.hpp"

using namespace contcal;

namespace {

Matrix random_matrix(std::size_t r, std::size_t c, SeededRng& rng) {
  Matrix m(r, c);
  for (double& v : m.data()) v = rng.normal();
  return m;
}

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(1);
  const Matrix a = random_matrix(32, 784, rng);
  const Matrix b = random_matrix(784, n, rng);
  for (auto _ : state) benchmark::DoNotOptimize(matmul(a, b));
  state.SetItemsProcessed(state.iterations() * 32 * 784 * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Matmul)->Arg(64)->Arg(256);

// One SGD minibatch step of the MNIST-sized MLP: forward, backward, update.
void BM_TrainStep(benchmark::State& state) {
  SeededRng rng(2);
  CalibratedModel cm{init_mlp(784, 256, 10, 3), CalibrationHead::identity()};
  const Matrix x = random_matrix(32, 784, rng);
  std::vector<int> y(32);
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = static_cast<int>(i % 10);
  Sgd opt(1e-3);
  for (auto _ : state) {
    auto params = cm.parameters();
    zero_grads(params);
    Tape tape;
    Var loss = cross_entropy(cm.logits(tape, x), y);
    tape.backward(loss);
    opt.step(params);
  }
}
BENCHMARK(BM_TrainStep);

void BM_Ece(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  SeededRng rng(4);
  std::vector<double> conf(n);
  std::vector<std::uint8_t> correct(n);
  for (std::size_t i = 0; i < n; ++i) {
    conf[i] = rng.uniform();
    correct[i] = rng.uniform() < conf[i] ? 1 : 0;
  }
  for (auto _ : state) benchmark::DoNotOptimize(ece(build_reliability(conf, correct, 10)).ece);
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n));
}
BENCHMARK(BM_Ece)->Arg(10000);

void BM_ReservoirInsert(benchmark::State& state) {
  ReservoirBuffer buf(2000, 5);
  BufferItem item;
  item.x.assign(784, 0.5);
  for (auto _ : state) buf.insert(item);
  state.SetItemsProcessed(state.iterations());
}
BENCHMARK(BM_ReservoirInsert);

}  // namespace
BENCHMARK_MAIN();
