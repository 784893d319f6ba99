#pragma once

#include <random>
#include <vector>

#include "frog/camera.hpp"
#include "frog/deform_field.hpp"
#include "frog/gaussian_cloud.hpp"
#include "frog/image.hpp"

namespace frog {

struct SamplingConfig {
    double error_threshold = 0.10;
    double top_fraction = 0.001; // of all pixels, by descending error
    int max_new_per_pass = 5000;
    double anchor_opacity = 0.1;
    int neighbor_pool = 8; // candidate donors in deformed space
    long long interval = 1000;
    long long start_iter = 3000;
    long long stop_iter = 15000;
    bool enabled = true;
};

struct DensifyConfig {
    double grad_threshold = 2e-4;
    double split_scale_threshold = 0.05; // world units; larger Gaussians split
    double prune_opacity = 0.005;
    long long interval = 100;
    long long start_iter = 500;
    long long stop_iter = 15000;
    double split_scale_shrink = 1.6;
    bool enabled = true;
};

// Per-pixel channel-mean absolute difference, in [0,1].
std::vector<double> error_map(const std::vector<double>& render, const Image& gt);

struct SelectedPixel {
    int u = 0, v = 0;
    double error = 0.0;
    double depth = 0.0; // Euclidean median depth
};

// High-error pixels with a valid median depth, ordered by descending error
// (row-major on ties), truncated to the configured budget.
std::vector<SelectedPixel> select_pixels(const std::vector<double>& err,
                                         const std::vector<double>& median_depth, int width,
                                         int height, const SamplingConfig& cfg);

// World point at the given Euclidean distance along the ray through the pixel
// center.
Vec3 backproject(double u, double v, double depth_euclidean, const Camera& cam);

struct AnchorRecord {
    int u = 0, v = 0;
    double depth = 0.0;
    Vec3 world = Vec3::Zero();
    int donor = -1;
};

// Appends one Gaussian per coordinate to the canonical cloud: identity
// rotation, opacity 0.1, isotropic scale from the nearest canonical neighbor
// distance, DC color from the source pixel, embedding copied from the
// least-deformed donor among the nearest deformed-space neighbors at time t.
// Existing Gaussians are never touched. Returns the records of what was added.
std::vector<AnchorRecord> inject_anchors(GaussianCloud& cloud, const DeformationField& field,
                                         const std::vector<Vec3>& coords,
                                         const std::vector<Vec3>& pixel_colors, double t,
                                         const SamplingConfig& cfg);

struct DensifyCounts {
    int cloned = 0;
    int split = 0;
    int pruned = 0;
};

// Gradient-triggered clone/split plus opacity pruning. `avg_grad` is the
// per-Gaussian mean screen-space positional gradient norm. `keep` reports the
// surviving original rows (for optimizer-state filtering); new rows are
// appended after the survivors.
DensifyCounts densify_and_prune(GaussianCloud& cloud, const std::vector<double>& avg_grad,
                                const DensifyConfig& cfg, std::mt19937_64& rng,
                                std::vector<std::uint8_t>* keep_out);

} // namespace frog
