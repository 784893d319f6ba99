#pragma once

#include <vector>

#include "frog/image.hpp"

namespace frog {

struct LossConfig {
    double lambda_emb = 0.01;
    double lambda_w = 2000.0; // falloff of the neighbor weights, world units^-2
    int k_neighbors = 5;
    long long dssim_start_iter = 10000;
    long long dssim_period = 50;
    long long dssim_active_span = 5;
};

struct LossResult {
    double value = 0.0;
    std::vector<double> grad; // same layout as the rendered image
};

// Mean absolute error over pixels and channels; the gradient is the sign map
// scaled by 1/(H*W*3).
LossResult l1_loss(const std::vector<double>& render, const Image& gt);

// (1 - SSIM) / 2 with an 11x11 Gaussian window (sigma 1.5), C1 = 0.01^2,
// C2 = 0.03^2, channels averaged. Requires images of at least 11x11.
LossResult dssim_loss(const std::vector<double>& render, const Image& gt);

// Intermittent schedule: active for `dssim_active_span` iterations out of
// every `dssim_period`, starting at `dssim_start_iter`.
bool dssim_active(long long iter, const LossConfig& cfg);

// Exact k-nearest-neighbor graph over canonical positions with cached
// falloff weights.
struct KnnGraph {
    int k = 0;       // requested k
    int row_len = 0; // min(k, count - 1)
    int count = 0;
    long long built_at_iter = -1;
    std::vector<int> neighbors;  // count x row_len
    std::vector<double> weights; // count x row_len

    bool empty() const { return count == 0; }
};

// Brute force below `grid_threshold` points, a uniform-grid exact search
// above it.
KnnGraph build_knn(const std::vector<double>& positions, int k, double lambda_w,
                   int grid_threshold = 50000);

struct EmbRegResult {
    double value = 0.0;
    std::vector<double> grad; // per-Gaussian embedding gradients
};

// Smoothness term over neighboring embeddings: mean of w_ij |e_i - e_j| with
// the unsquared norm, normalized by (row_len * count). Subgradient zero at
// identical embeddings. Throws DataError when the graph size no longer
// matches the cloud.
EmbRegResult emb_reg_loss(const std::vector<double>& embeddings, int embed_dim,
                          const KnnGraph& graph);

// 10 log10(1 / MSE) on [0,1] images, capped at 100 dB for exact matches.
double psnr(const std::vector<double>& render, const Image& gt);

// Mean SSIM value (not the loss form).
double ssim_metric(const std::vector<double>& render, const Image& gt);

} // namespace frog
