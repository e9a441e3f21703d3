// Parallel kernels against the serial reference. Set OMP_NUM_THREADS to vary
// the thread count of the parallel rows.
#include <benchmark/benchmark.h>

#include "boostdream/camera_rig.hpp"
#include "boostdream/render.hpp"
#include "boostdream/volume_field.hpp"

using namespace boostdream;

namespace {

struct Scene {
    VoxelField field;
    camera::CameraPose pose;
    RenderSettings settings;
    Image upstream;
};

Scene make_scene(int resolution, int image_size) {
    Scene s{init_field(GridShape::cube(resolution), 7), camera::look_at_origin(Vec3(2.4, 1.1, 1.3), 50.0, image_size),
            {}, Image(image_size, image_size, 3)};
    Rng rng(11);
    for (double& v : s.upstream.data) v = rng.uniform() - 0.5;
    return s;
}

void args(benchmark::internal::Benchmark* b) {
    b->Args({32, 32})->Args({64, 64})->Unit(benchmark::kMillisecond);
}

void BM_render_parallel(benchmark::State& state) {
    const Scene s = make_scene(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(render(s.field, s.pose, s.settings));
}

void BM_render_reference(benchmark::State& state) {
    const Scene s = make_scene(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(reference::render(s.field, s.pose, s.settings));
}

void BM_gradient_parallel(benchmark::State& state) {
    const Scene s = make_scene(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) benchmark::DoNotOptimize(field_gradient(s.field, s.pose, s.upstream, nullptr, s.settings));
}

void BM_gradient_reference(benchmark::State& state) {
    const Scene s = make_scene(static_cast<int>(state.range(0)), static_cast<int>(state.range(1)));
    for (auto _ : state) {
        benchmark::DoNotOptimize(reference::field_gradient(s.field, s.pose, s.upstream, nullptr, s.settings));
    }
}

}  // namespace

BENCHMARK(BM_render_parallel)->Apply(args);
BENCHMARK(BM_render_reference)->Apply(args);
BENCHMARK(BM_gradient_parallel)->Apply(args);
BENCHMARK(BM_gradient_reference)->Apply(args);

BENCHMARK_MAIN();
