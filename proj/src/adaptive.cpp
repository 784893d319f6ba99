#include "frog/adaptive.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "frog/errors.hpp"
#include "frog/sh.hpp"

namespace frog {

std::vector<double> error_map(const std::vector<double>& render, const Image& gt) {
    if (render.size() != gt.data.size()) {
        throw DataError("error_map: image size mismatch");
    }
    const size_t pixels = gt.pixel_count();
    std::vector<double> err(pixels);
#pragma omp parallel for schedule(static)
    for (long long p = 0; p < static_cast<long long>(pixels); ++p) {
        double acc = 0.0;
        for (int c = 0; c < 3; ++c) acc += std::abs(render[p * 3 + c] - gt.data[p * 3 + c]);
        err[p] = acc / 3.0;
    }
    return err;
}

std::vector<SelectedPixel> select_pixels(const std::vector<double>& err,
                                         const std::vector<double>& median_depth, int width,
                                         int height, const SamplingConfig& cfg) {
    if (err.size() != median_depth.size() ||
        err.size() != static_cast<size_t>(width) * height) {
        throw DataError("select_pixels: map size mismatch");
    }
    std::vector<SelectedPixel> cand;
    for (int v = 0; v < height; ++v) {
        for (int u = 0; u < width; ++u) {
            const size_t p = static_cast<size_t>(v) * width + u;
            if (err[p] < cfg.error_threshold) continue;
            if (std::isnan(median_depth[p])) continue; // no surface estimate there
            cand.push_back({u, v, err[p], median_depth[p]});
        }
    }
    std::sort(cand.begin(), cand.end(), [](const SelectedPixel& a, const SelectedPixel& b) {
        if (a.error != b.error) return a.error > b.error;
        if (a.v != b.v) return a.v < b.v;
        return a.u < b.u;
    });
    const long long top = std::max<long long>(
        1, static_cast<long long>(std::ceil(cfg.top_fraction * width * height)));
    const size_t limit = std::min<size_t>(
        cand.size(), std::min<long long>(top, cfg.max_new_per_pass));
    cand.resize(limit);
    return cand;
}

Vec3 backproject(double u, double v, double depth_euclidean, const Camera& cam) {
    return cam.center() + depth_euclidean * cam.pixel_ray(u, v);
}

std::vector<AnchorRecord> inject_anchors(GaussianCloud& cloud, const DeformationField& field,
                                         const std::vector<Vec3>& coords,
                                         const std::vector<Vec3>& pixel_colors, double t,
                                         const SamplingConfig& cfg) {
    const int n = cloud.size();
    if (n == 0) {
        throw DataError("inject_anchors: empty cloud has no neighbors to borrow from");
    }
    if (coords.size() != pixel_colors.size()) {
        throw DataError("inject_anchors: coordinate and color counts disagree");
    }
    if (coords.empty()) return {};

    // Deformation magnitudes and deformed positions of the pre-pass cloud.
    DeltaBatch deltas;
    deform_batch(field, cloud.embeddings, n, t, &deltas);
    std::vector<double> deformed_pos(3 * static_cast<size_t>(n));
    std::vector<double> magnitude(n);
    const int sh = cloud.sh_count();
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        double m = 0.0;
        double acc = 0.0;
        for (int a = 0; a < 3; ++a) {
            deformed_pos[3 * i + a] = cloud.positions[3 * i + a] + deltas.dmu[3 * i + a];
            acc += deltas.dmu[3 * i + a] * deltas.dmu[3 * i + a];
        }
        m += std::sqrt(acc);
        acc = 0.0;
        for (int a = 0; a < 3; ++a) acc += deltas.ds[3 * i + a] * deltas.ds[3 * i + a];
        m += std::sqrt(acc);
        acc = 0.0;
        for (int a = 0; a < 4; ++a) acc += deltas.dq[4 * i + a] * deltas.dq[4 * i + a];
        m += std::sqrt(acc);
        m += std::abs(deltas.dalpha[i]);
        acc = 0.0;
        const size_t base = 3 * static_cast<size_t>(sh) * i;
        for (int a = 0; a < 3 * sh; ++a) acc += deltas.dsh[base + a] * deltas.dsh[base + a];
        m += std::sqrt(acc);
        magnitude[i] = m;
    }

    const int pool = std::min(cfg.neighbor_pool, n);
    std::vector<AnchorRecord> records;
    records.reserve(coords.size());
    std::vector<std::pair<double, int>> pool_buf;
    for (size_t a = 0; a < coords.size(); ++a) {
        const Vec3& p = coords[a];

        // Nearest canonical neighbor distance sets the initial footprint.
        double best_d2 = std::numeric_limits<double>::infinity();
        pool_buf.clear();
        for (int i = 0; i < n; ++i) {
            double d2 = 0.0;
            for (int ax = 0; ax < 3; ++ax) {
                const double d = cloud.positions[3 * i + ax] - p[ax];
                d2 += d * d;
            }
            best_d2 = std::min(best_d2, d2);
            double dd2 = 0.0;
            for (int ax = 0; ax < 3; ++ax) {
                const double d = deformed_pos[3 * i + ax] - p[ax];
                dd2 += d * d;
            }
            pool_buf.push_back({dd2, i});
        }
        std::partial_sort(pool_buf.begin(), pool_buf.begin() + pool, pool_buf.end());
        int donor = -1;
        double donor_mag = std::numeric_limits<double>::infinity();
        for (int s = 0; s < pool; ++s) {
            const int i = pool_buf[s].second;
            if (magnitude[i] < donor_mag || (magnitude[i] == donor_mag && i < donor)) {
                donor = i;
                donor_mag = magnitude[i];
            }
        }

        const double log_scale = std::log(std::max(1e-8, std::sqrt(best_d2)));
        for (int ax = 0; ax < 3; ++ax) {
            cloud.positions.push_back(p[ax]);
            cloud.log_scales.push_back(log_scale);
        }
        cloud.rotations.push_back(1.0);
        cloud.rotations.push_back(0.0);
        cloud.rotations.push_back(0.0);
        cloud.rotations.push_back(0.0);
        cloud.opacity_logits.push_back(logit(cfg.anchor_opacity));
        for (int b = 0; b < sh; ++b) {
            for (int c = 0; c < 3; ++c) {
                cloud.sh_coeffs.push_back(b == 0 ? (pixel_colors[a][c] - 0.5) / kSh0 : 0.0);
            }
        }
        for (int d = 0; d < cloud.embed_dim; ++d) {
            cloud.embeddings.push_back(cloud.embeddings[static_cast<size_t>(donor) * cloud.embed_dim + d]);
        }

        AnchorRecord rec;
        rec.world = p;
        rec.donor = donor;
        records.push_back(rec);
    }
    return records;
}

DensifyCounts densify_and_prune(GaussianCloud& cloud, const std::vector<double>& avg_grad,
                                const DensifyConfig& cfg, std::mt19937_64& rng,
                                std::vector<std::uint8_t>* keep_out) {
    const int n = cloud.size();
    if (static_cast<int>(avg_grad.size()) != n) {
        throw DataError("densify_and_prune: gradient accumulator size mismatch");
    }
    const int sh = cloud.sh_count();
    DensifyCounts counts;
    std::vector<std::uint8_t> keep(n, 1);
    std::vector<int> clones, splits;
    for (int i = 0; i < n; ++i) {
        const double alpha = sigmoid(cloud.opacity_logits[i]);
        if (alpha < cfg.prune_opacity) {
            keep[i] = 0;
            ++counts.pruned;
            continue;
        }
        if (avg_grad[i] < cfg.grad_threshold) continue;
        const double max_scale = std::exp(
            std::max({cloud.log_scales[3 * i], cloud.log_scales[3 * i + 1], cloud.log_scales[3 * i + 2]}));
        if (max_scale < cfg.split_scale_threshold) {
            clones.push_back(i);
        } else {
            splits.push_back(i);
            keep[i] = 0; // replaced by its two samples
        }
    }
    counts.cloned = static_cast<int>(clones.size());
    counts.split = static_cast<int>(splits.size());

    GaussianCloud next;
    next.sh_degree = cloud.sh_degree;
    next.embed_dim = cloud.embed_dim;
    auto append_row = [&](const GaussianCloud& src, int i) {
        for (int a = 0; a < 3; ++a) next.positions.push_back(src.positions[3 * i + a]);
        for (int a = 0; a < 3; ++a) next.log_scales.push_back(src.log_scales[3 * i + a]);
        for (int a = 0; a < 4; ++a) next.rotations.push_back(src.rotations[4 * i + a]);
        next.opacity_logits.push_back(src.opacity_logits[i]);
        const size_t base = 3 * static_cast<size_t>(sh) * i;
        for (int a = 0; a < 3 * sh; ++a) next.sh_coeffs.push_back(src.sh_coeffs[base + a]);
        for (int d = 0; d < src.embed_dim; ++d) {
            next.embeddings.push_back(src.embeddings[static_cast<size_t>(i) * src.embed_dim + d]);
        }
    };
    for (int i = 0; i < n; ++i) {
        if (keep[i]) append_row(cloud, i);
    }
    for (int i : clones) append_row(cloud, i);

    std::normal_distribution<double> normal(0.0, 1.0);
    const double shrink = std::log(cfg.split_scale_shrink);
    for (int i : splits) {
        const Vec4 q = cloud.rotation(i).normalized();
        const Mat3 rot = quat_to_rotation(q);
        Vec3 scale(std::exp(cloud.log_scales[3 * i]), std::exp(cloud.log_scales[3 * i + 1]),
                   std::exp(cloud.log_scales[3 * i + 2]));
        for (int child = 0; child < 2; ++child) {
            const Vec3 sample(normal(rng), normal(rng), normal(rng));
            const Vec3 offset = rot * scale.cwiseProduct(sample);
            const size_t row = next.opacity_logits.size();
            append_row(cloud, i);
            for (int a = 0; a < 3; ++a) {
                next.positions[3 * row + a] += offset[a];
                next.log_scales[3 * row + a] -= shrink;
            }
        }
    }
    cloud = std::move(next);
    if (keep_out) *keep_out = std::move(keep);
    return counts;
}

} // namespace frog
