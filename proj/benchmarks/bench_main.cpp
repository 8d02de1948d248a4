#include <cmath>
#include <vector>

#include <benchmark/benchmark.h>

#include "spultra/geometry.hpp"
#include "spultra/recon.hpp"
#include "spultra/sim.hpp"
#include "spultra/ultra.hpp"

using namespace spultra;

namespace {

SystemGeometry square(std::size_t n, std::size_t views) {
    SystemGeometry g;
    g.image_dims = {n, n};
    g.pixel_spacing = {1.0, 1.0};
    g.n_views = views;
    g.detector_spacing = 1.0;
    g.n_detectors = static_cast<std::size_t>(std::ceil(n * std::sqrt(2.0))) + 4;
    return g;
}

void BM_BuildSystemMatrix(benchmark::State& state) {
    const auto g = square(static_cast<std::size_t>(state.range(0)), 180);
    for (auto _ : state) {
        SystemMatrix A(g);
        benchmark::DoNotOptimize(A.nonzeros());
    }
}
BENCHMARK(BM_BuildSystemMatrix)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_ForwardBack(benchmark::State& state) {
    const auto g = square(static_cast<std::size_t>(state.range(0)), 180);
    SystemMatrix A(g);
    const ImageGrid img = make_phantom(thorax_phantom(g.image_dims, g.pixel_spacing, 0));
    std::vector<double> sino(g.n_views * g.n_detectors), back(img.values.size());
    for (auto _ : state) {
        A.forward(img.values, sino);
        A.back(sino, back);
        benchmark::DoNotOptimize(back.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(A.nonzeros()) * 2);
}
BENCHMARK(BM_ForwardBack)->Arg(64)->Arg(128)->Unit(benchmark::kMillisecond);

void BM_SparseCode(benchmark::State& state) {
    const std::size_t n = 128;
    const ImageGrid img = make_phantom(thorax_phantom({n, n}, {1.0, 1.0}, 0));
    const PatchConfig pc{8, 1};
    TransformUnion u;
    for (std::int64_t k = 0; k < state.range(0); ++k) u.transforms.push_back(dct2_matrix(8));
    const std::vector<double> tau(pc.count(img.dims), 1.0);
    for (auto _ : state) {
        auto s = sparse_code_and_cluster(img, u, 2e-3, tau, pc);
        benchmark::DoNotOptimize(s.Z.data());
    }
    state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(tau.size()));
}
BENCHMARK(BM_SparseCode)->Arg(1)->Arg(5)->Unit(benchmark::kMillisecond);

void BM_LearnIteration(benchmark::State& state) {
    const ImageGrid img = make_phantom(thorax_phantom({64, 64}, {1.0, 1.0}, 1));
    const auto X = extract_patches(img, {8, 1});
    LearnOptions lo;
    lo.K = 5;
    lo.gamma_c = 2e-3;
    lo.iters = 1;
    for (auto _ : state) {
        auto r = learn_transforms(X, lo);
        benchmark::DoNotOptimize(r.objective.back());
    }
}
BENCHMARK(BM_LearnIteration)->Unit(benchmark::kMillisecond);

// One outer SPULTRA iteration (coding plus P relaxed OS passes) on a 64 x 64 problem.
void BM_SpultraOuterIteration(benchmark::State& state) {
    auto g = square(64, 180);
    g.pixel_spacing = {2.0, 2.0};
    g.detector_spacing = 2.0;
    SystemMatrix A(g);
    const ImageGrid truth = make_phantom(thorax_phantom(g.image_dims, g.pixel_spacing, 0));
    SpModel model;
    model.I0 = 3e3;
    const auto sim = simulate_prelog(truth, model, A, RngSpec{7});
    const auto post = post_log_convert(sim.counts.values, model);
    ImageGrid x0 = fbp_reconstruct(post.l_tilde, g);
    clip_to_box(x0.values, 0.1);
    TransformUnion u;
    u.transforms.push_back(dct2_matrix(8));
    ReconConfig cfg;
    cfg.beta = 3e3;
    cfg.gamma_c = 2e-3;
    cfg.N = 1;
    cfg.P = 4;
    cfg.M = static_cast<std::size_t>(state.range(0));
    cfg.patch = {8, 2};
    for (auto _ : state) {
        auto r = spultra_reconstruct(sim.counts.values, model, u, A, cfg, x0);
        benchmark::DoNotOptimize(r.image.values.data());
    }
}
BENCHMARK(BM_SpultraOuterIteration)->Arg(1)->Arg(6)->Unit(benchmark::kMillisecond);

} // namespace

BENCHMARK_MAIN();
