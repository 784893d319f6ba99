// Benchmark harness: OpenMP tiled rasterizer against the serial reference
// renderer, and whole-cloud deformation across the fusion modes.

#include <chrono>
#include <cstdio>
#include <random>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "frog/pipeline.hpp"
#include "frog/trainer.hpp"

using namespace frog;

namespace {

double ms_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Splat2D> random_splats(int count, int width, int height, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> ux(0.0, width), uy(0.0, height);
    std::uniform_real_distribution<double> usz(1.0, 30.0), ualpha(0.05, 0.95), uc(0.0, 1.0);
    std::uniform_real_distribution<double> uz(0.5, 10.0);
    std::vector<Splat2D> splats;
    for (int i = 0; i < count; ++i) {
        Splat2D s;
        s.mx = ux(rng);
        s.my = uy(rng);
        s.cxx = usz(rng);
        s.cyy = usz(rng);
        s.cxy = 0.3 * std::min(s.cxx, s.cyy) * (uc(rng) - 0.5);
        s.depth_z = uz(rng);
        s.depth_eucl = s.depth_z;
        s.alpha = ualpha(rng);
        s.r = uc(rng);
        s.g = uc(rng);
        s.b = uc(rng);
        s.index = i;
        if (s.finalize()) splats.push_back(s);
    }
    std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
        if (a.depth_z != b.depth_z) return a.depth_z < b.depth_z;
        return a.index < b.index;
    });
    return splats;
}

} // namespace

int main(int argc, char** argv) {
    int n_splats = 2000;
    int image = 256;
    int n_gaussians = 100000;
    int reps = 20;
    for (int i = 1; i + 1 < argc; i += 2) {
        const std::string key = argv[i];
        const int value = std::atoi(argv[i + 1]);
        if (key == "--splats") n_splats = value;
        if (key == "--image") image = value;
        if (key == "--gaussians") n_gaussians = value;
        if (key == "--reps") reps = value;
        if (key == "--threads") {
#ifdef _OPENMP
            omp_set_num_threads(value);
#endif
        }
    }

    std::mt19937_64 rng(7);
    const std::vector<Splat2D> splats = random_splats(n_splats, image, image, rng);

    std::vector<double> tiled_times, serial_times;
    for (int r = 0; r < reps; ++r) {
        auto t0 = std::chrono::steady_clock::now();
        const RenderOutput out = render(splats, image, image);
        tiled_times.push_back(ms_since(t0));
        t0 = std::chrono::steady_clock::now();
        const std::vector<double> ref = render_reference(splats, image, image);
        serial_times.push_back(ms_since(t0));
        if (r == 0) {
            double max_diff = 0.0;
            for (size_t i = 0; i < ref.size(); ++i) {
                max_diff = std::max(max_diff, std::abs(ref[i] - out.color[i]));
            }
            std::printf("tiled vs reference max channel diff: %.3g\n", max_diff);
        }
    }
    std::sort(tiled_times.begin(), tiled_times.end());
    std::sort(serial_times.begin(), serial_times.end());
    std::printf("render %dx%d, %zu splats: tiled %.2f ms, serial reference %.2f ms (medians)\n",
                image, image, splats.size(), tiled_times[tiled_times.size() / 2],
                serial_times[serial_times.size() / 2]);

    DeformationField field;
    field.fusion = FusionMode::Product;
    field.embed_dim = 8;
    field.sh_count = 4;
    field.tables.dim = 8;
    field.tables.fine_len = 12;
    field.tables.coarse_len = 3;
    field.init_weights(2, 32, 42);

    const std::vector<FusionMode> modes = {FusionMode::Coarse, FusionMode::Fine, FusionMode::Add,
                                           FusionMode::Concat, FusionMode::Product,
                                           FusionMode::Dual};
    const std::vector<BenchResult> results = benchmark_deform(field, n_gaussians, 1, modes, reps);
    std::printf("deform, %d gaussians, %d reps:\n", n_gaussians, reps);
    for (const BenchResult& r : results) {
        std::printf("  %-8s %8.2f ms  passes/gaussian %.2f\n", to_string(r.mode).c_str(),
                    r.median_ms, r.passes_per_gaussian_timestep);
    }
    return 0;
}
