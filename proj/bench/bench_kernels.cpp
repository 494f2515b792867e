// Serial reference kernels vs the im2col/OpenMP kernels on generator-sized convs.
#include <benchmark/benchmark.h>

#include <vector>

#include "spgan/kernels.hpp"
#include "spgan/rng.hpp"

using namespace spgan;
using kernels::Conv2dGeometry;

namespace {

// args: channels, spatial size, kernel, stride
Conv2dGeometry geometry(const benchmark::State& st) {
    Conv2dGeometry g;
    g.batch = 8;
    g.in_channels = g.out_channels = st.range(0);
    g.in_h = g.in_w = st.range(1);
    g.kernel_h = g.kernel_w = st.range(2);
    g.stride = st.range(3);
    g.padding = 1;
    return g;
}

std::vector<float> random_buffer(int64_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<float> v(static_cast<size_t>(n));
    for (auto& x : v) x = static_cast<float>(rng.normal());
    return v;
}

struct Buffers {
    explicit Buffers(const Conv2dGeometry& g)
        : x(random_buffer(g.batch * g.in_channels * g.in_h * g.in_w, 1)),
          w(random_buffer(g.out_channels * g.patch_size(), 2)),
          b(random_buffer(g.out_channels, 3)),
          out(static_cast<size_t>(g.batch * g.out_channels * g.out_h() * g.out_w())),
          grad_out(random_buffer(static_cast<int64_t>(out.size()), 4)),
          grad_x(x.size()),
          grad_w(w.size()),
          grad_b(b.size()) {}
    std::vector<float> x, w, b, out, grad_out, grad_x, grad_w, grad_b;
};

template <bool Parallel>
void conv_forward(benchmark::State& st) {
    const Conv2dGeometry g = geometry(st);
    Buffers buf(g);
    for (auto _ : st) {
        if constexpr (Parallel)
            kernels::conv2d_forward<float>(g, buf.x, buf.w, buf.b, buf.out);
        else
            kernels::reference::conv2d_forward<float>(g, buf.x, buf.w, buf.b, buf.out);
        benchmark::DoNotOptimize(buf.out.data());
    }
    st.SetItemsProcessed(st.iterations() * static_cast<int64_t>(buf.out.size()) * g.patch_size());
}

template <bool Parallel>
void conv_backward(benchmark::State& st) {
    const Conv2dGeometry g = geometry(st);
    Buffers buf(g);
    for (auto _ : st) {
        if constexpr (Parallel)
            kernels::conv2d_backward<float>(g, buf.grad_out, buf.x, buf.w, buf.grad_x, buf.grad_w, buf.grad_b);
        else
            kernels::reference::conv2d_backward<float>(g, buf.grad_out, buf.x, buf.w, buf.grad_x, buf.grad_w,
                                                       buf.grad_b);
        benchmark::DoNotOptimize(buf.grad_x.data());
    }
    st.SetItemsProcessed(st.iterations() * 2 * static_cast<int64_t>(buf.out.size()) * g.patch_size());
}

void shapes(benchmark::internal::Benchmark* b) {
    b->Args({16, 32, 3, 1})->Args({32, 16, 3, 1})->Args({8, 64, 3, 1})->Args({32, 32, 4, 2});
    b->Unit(benchmark::kMillisecond);
}

}  // namespace

BENCHMARK(conv_forward<false>)->Name("conv2d_forward/reference")->Apply(shapes);
BENCHMARK(conv_forward<true>)->Name("conv2d_forward/parallel")->Apply(shapes);
BENCHMARK(conv_backward<false>)->Name("conv2d_backward/reference")->Apply(shapes);
BENCHMARK(conv_backward<true>)->Name("conv2d_backward/parallel")->Apply(shapes);

BENCHMARK_MAIN();
