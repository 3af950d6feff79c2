// Parallel kernels against the serial reference, plus whole-network steps at
// the standard stream size. Use --benchmark_filter to pick a subset; set
// JITSTREAM_THREADS to cap the OpenMP team.

#include <random>

#include <benchmark/benchmark.h>

#include "jitstream/arch.hpp"
#include "jitstream/kernels.hpp"

using namespace jitstream;

namespace {

Tensor<float> random_tensor(Shape shape, std::uint64_t seed) {
  Tensor<float> t(std::move(shape));
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (auto& v : t.values()) v = dist(rng);
  return t;
}

// args: channels in/out, spatial extent, kernel size
struct ConvCase {
  Tensor<float> input, weights, grad_out;
  std::vector<float> bias;
  ConvGeometry geom;

  explicit ConvCase(const benchmark::State& s) {
    const auto c = static_cast<std::size_t>(s.range(0));
    const auto hw = static_cast<std::size_t>(s.range(1));
    const auto k = static_cast<std::size_t>(s.range(2));
    input = random_tensor({c, hw, hw}, 1);
    weights = random_tensor({c, c, k, k}, 2);
    bias.assign(c, 0.1f);
    geom = ConvGeometry::same(k, k);
    grad_out = random_tensor({c, hw, hw}, 3);
  }

  double macs() const {
    return static_cast<double>(weights.size()) * static_cast<double>(input.height() * input.width());
  }
};

template <bool Reference>
void BM_ConvForward(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) {
    auto out = Reference ? reference::conv2d_forward<float>(c.input, c.weights, c.bias, c.geom)
                         : conv2d_forward<float>(c.input, c.weights, c.bias, c.geom);
    benchmark::DoNotOptimize(out.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2.0 * c.macs() * static_cast<double>(state.iterations()) / 1e9,
                         benchmark::Counter::kIsRate);
}

template <bool Reference>
void BM_ConvBackward(benchmark::State& state) {
  ConvCase c(state);
  for (auto _ : state) {
    auto g = Reference ? reference::conv2d_backward<float>(c.input, c.weights, c.grad_out, c.geom, true)
                       : conv2d_backward<float>(c.input, c.weights, c.grad_out, c.geom, true);
    benchmark::DoNotOptimize(g.weights.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(4.0 * c.macs() * static_cast<double>(state.iterations()) / 1e9,
                         benchmark::Counter::kIsRate);
}

template <bool Reference>
void BM_BilinearUpsample(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const auto in = random_tensor({c, hw, hw}, 4);
  for (auto _ : state) {
    auto out = Reference ? reference::bilinear_resize_forward<float>(in, 2 * hw, 2 * hw)
                         : bilinear_resize_forward<float>(in, 2 * hw, 2 * hw);
    benchmark::DoNotOptimize(out.data());
  }
}

template <bool Reference>
void BM_BatchNorm(benchmark::State& state) {
  const auto c = static_cast<std::size_t>(state.range(0));
  const auto hw = static_cast<std::size_t>(state.range(1));
  const auto in = random_tensor({c, hw, hw}, 5);
  const std::vector<float> gamma(c, 1.0f), beta(c, 0.0f);
  for (auto _ : state) {
    auto out = Reference ? reference::batchnorm_forward<float>(in, gamma, beta, 1e-5f)
                         : batchnorm_forward<float>(in, gamma, beta, 1e-5f, nullptr);
    benchmark::DoNotOptimize(out.data());
  }
}

void conv_args(benchmark::internal::Benchmark* b) {
  b->Args({32, 48, 3})->Args({64, 24, 3})->Args({128, 12, 1})->Unit(benchmark::kMillisecond);
}

void BM_NetworkInference(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  Network<float> net(ArchConfig{}, 1);
  const auto frame = random_tensor({3, hw, hw}, 6);
  for (auto _ : state) {
    auto logits = net.forward(frame);
    benchmark::DoNotOptimize(logits.data());
  }
}

void BM_NetworkTrainStep(benchmark::State& state) {
  const auto hw = static_cast<std::size_t>(state.range(0));
  Network<float> net(ArchConfig{}, 1);
  const auto frame = random_tensor({3, hw, hw}, 6);
  for (auto _ : state) {
    auto logits = net.forward(frame);
    auto g = net.backward(logits);
    benchmark::DoNotOptimize(g.data());
  }
}

}  // namespace

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/parallel")->Apply(conv_args);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/reference")->Apply(conv_args);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/parallel")->Apply(conv_args);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/reference")->Apply(conv_args);
BENCHMARK(BM_BilinearUpsample<false>)->Name("upsample2x/parallel")->Args({64, 48});
BENCHMARK(BM_BilinearUpsample<true>)->Name("upsample2x/reference")->Args({64, 48});
BENCHMARK(BM_BatchNorm<false>)->Name("batchnorm/parallel")->Args({64, 48});
BENCHMARK(BM_BatchNorm<true>)->Name("batchnorm/reference")->Args({64, 48});
BENCHMARK(BM_NetworkInference)->Arg(96)->Arg(256)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_NetworkTrainStep)->Arg(96)->Arg(256)->Unit(benchmark::kMillisecond);

int main(int argc, char** argv) {
  apply_thread_env();
  benchmark::Initialize(&argc, argv);
  if (benchmark::ReportUnrecognizedArguments(argc, argv)) return 1;
  benchmark::RunSpecifiedBenchmarks();
  benchmark::Shutdown();
  return 0;
}
