#include <random>
#include <vector>

#include <benchmark/benchmark.h>

#include "lipemo/kernels.hpp"
#include "lipemo/model.hpp"
#include "lipemo/scorers.hpp"

using namespace lipemo;

namespace {

std::vector<real> random_buffer(std::size_t n, unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> dist;
  std::vector<real> v(n);
  for (auto& x : v) x = static_cast<real>(dist(rng));
  return v;
}

// Encoder-like layer: batch of 8 frames, 32 -> 32 channels at the given size.
kernels::ConvGeometry layer(int size) {
  kernels::ConvGeometry g;
  g.batch = 8;
  g.in_ch = 32;
  g.out_ch = 32;
  g.in_h = g.in_w = size;
  return g;
}

struct ConvBuffers {
  explicit ConvBuffers(const kernels::ConvGeometry& g)
      : x(random_buffer(static_cast<std::size_t>(g.batch) * g.in_ch * g.in_h * g.in_w, 1)),
        w(random_buffer(static_cast<std::size_t>(g.out_ch) * g.in_ch * g.kernel * g.kernel, 2)),
        b(random_buffer(static_cast<std::size_t>(g.out_ch), 3)),
        y(static_cast<std::size_t>(g.batch) * g.out_ch * g.out_h() * g.out_w()),
        dy(random_buffer(y.size(), 4)),
        dx(x.size()),
        dw(w.size()),
        db(b.size()) {}
  std::vector<real> x, w, b, y, dy, dx, dw, db;
};

double conv_flops(const kernels::ConvGeometry& g) {
  return 2.0 * g.batch * g.out_ch * g.out_h() * g.out_w() * g.in_ch * g.kernel * g.kernel;
}

template <bool Reference>
void BM_ConvForward(benchmark::State& state) {
  const auto g = layer(static_cast<int>(state.range(0)));
  ConvBuffers buf(g);
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::conv2d_forward(g, buf.x.data(), buf.w.data(), buf.b.data(), buf.y.data());
    else
      kernels::conv2d_forward(g, buf.x.data(), buf.w.data(), buf.b.data(), buf.y.data());
    benchmark::DoNotOptimize(buf.y.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(conv_flops(g) * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

template <bool Reference>
void BM_ConvBackward(benchmark::State& state) {
  const auto g = layer(static_cast<int>(state.range(0)));
  ConvBuffers buf(g);
  for (auto _ : state) {
    if constexpr (Reference)
      kernels::reference::conv2d_backward(g, buf.x.data(), buf.w.data(), buf.dy.data(), buf.dx.data(),
                                          buf.dw.data(), buf.db.data());
    else
      kernels::conv2d_backward(g, buf.x.data(), buf.w.data(), buf.dy.data(), buf.dx.data(),
                               buf.dw.data(), buf.db.data());
    benchmark::DoNotOptimize(buf.dw.data());
  }
  state.counters["GFLOP/s"] =
      benchmark::Counter(2 * conv_flops(g) * 1e-9, benchmark::Counter::kIsIterationInvariantRate);
}

void BM_GeneratorForward(benchmark::State& state) {
  ModelConfig cfg;
  cfg.height = cfg.width = static_cast<int>(state.range(0));
  Models m = init_params(cfg, 1);
  const int frames = 20;
  Tensor x({frames, 2 * cfg.channels, cfg.height, cfg.width},
           random_buffer(static_cast<std::size_t>(frames) * 2 * cfg.channels * cfg.height * cfg.width, 5));
  Tensor a({frames, 1, cfg.steps_per_frame, cfg.bands},
           random_buffer(static_cast<std::size_t>(frames) * cfg.steps_per_frame * cfg.bands, 6));
  NoGradGuard guard;
  for (auto _ : state) benchmark::DoNotOptimize(m.generator(x, a).values().data());
  state.SetItemsProcessed(state.iterations() * frames);
}

}  // namespace

BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/reference")->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/omp")->Arg(16)->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/reference")->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/omp")->Arg(16)->Arg(32)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_GeneratorForward)->Name("generator_forward")->Arg(32)->Arg(64)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
