#include "frog/losses.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "frog/errors.hpp"

namespace frog {

LossResult l1_loss(const std::vector<double>& render, const Image& gt) {
    if (render.size() != gt.data.size()) {
        throw DataError("l1_loss: image size mismatch");
    }
    LossResult res;
    res.grad.assign(render.size(), 0.0);
    const double scale = 1.0 / static_cast<double>(render.size());
    double total = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : total)
    for (long long i = 0; i < static_cast<long long>(render.size()); ++i) {
        const double d = render[i] - gt.data[i];
        total += std::abs(d);
        res.grad[i] = d > 0.0 ? scale : (d < 0.0 ? -scale : 0.0);
    }
    res.value = total * scale;
    return res;
}

namespace {

constexpr int kWindow = 11;
constexpr double kSsimC1 = 0.01 * 0.01;
constexpr double kSsimC2 = 0.03 * 0.03;

std::array<double, kWindow> gaussian_window() {
    std::array<double, kWindow> w{};
    const double sigma = 1.5;
    double sum = 0.0;
    for (int i = 0; i < kWindow; ++i) {
        const double d = i - (kWindow - 1) / 2.0;
        w[i] = std::exp(-d * d / (2.0 * sigma * sigma));
        sum += w[i];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable blur with clamp-to-edge boundaries.
void blur_plane(const std::vector<double>& in, int width, int height, std::vector<double>& tmp,
                std::vector<double>& out) {
    static const std::array<double, kWindow> w = gaussian_window();
    const int half = kWindow / 2;
    tmp.resize(in.size());
    out.resize(in.size());
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        const double* row = in.data() + static_cast<size_t>(y) * width;
        double* trow = tmp.data() + static_cast<size_t>(y) * width;
        for (int x = 0; x < width; ++x) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) {
                const int xx = std::clamp(x + k - half, 0, width - 1);
                acc += w[k] * row[xx];
            }
            trow[x] = acc;
        }
    }
#pragma omp parallel for schedule(static)
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) {
            double acc = 0.0;
            for (int k = 0; k < kWindow; ++k) {
                const int yy = std::clamp(y + k - half, 0, height - 1);
                acc += w[k] * tmp[static_cast<size_t>(yy) * width + x];
            }
            out[static_cast<size_t>(y) * width + x] = acc;
        }
    }
}

// Adjoint of blur_plane: scatter with the same clamped taps, vertical stage
// first (the adjoint of a composition reverses the order).
void blur_plane_adjoint(const std::vector<double>& in, int width, int height,
                        std::vector<double>& tmp, std::vector<double>& out) {
    static const std::array<double, kWindow> w = gaussian_window();
    const int half = kWindow / 2;
    tmp.assign(in.size(), 0.0);
    out.assign(in.size(), 0.0);
#pragma omp parallel for schedule(static)
    for (int x = 0; x < width; ++x) {
        for (int y = 0; y < height; ++y) {
            const double v = in[static_cast<size_t>(y) * width + x];
            if (v == 0.0) continue;
            for (int k = 0; k < kWindow; ++k) {
                const int yy = std::clamp(y + k - half, 0, height - 1);
                tmp[static_cast<size_t>(yy) * width + x] += w[k] * v;
            }
        }
    }
#pragma omp parallel for schedule(static)
    for (int y = 0; y < height; ++y) {
        double* orow = out.data() + static_cast<size_t>(y) * width;
        const double* trow = tmp.data() + static_cast<size_t>(y) * width;
        for (int x = 0; x < width; ++x) {
            const double v = trow[x];
            if (v == 0.0) continue;
            for (int k = 0; k < kWindow; ++k) {
                const int xx = std::clamp(x + k - half, 0, width - 1);
                orow[xx] += w[k] * v;
            }
        }
    }
}

} // namespace

LossResult dssim_loss(const std::vector<double>& render, const Image& gt) {
    if (render.size() != gt.data.size()) {
        throw DataError("dssim_loss: image size mismatch");
    }
    const int width = gt.width, height = gt.height;
    if (width < kWindow || height < kWindow) {
        throw DataError("dssim_loss: image smaller than the 11x11 window");
    }
    const size_t pixels = static_cast<size_t>(width) * height;
    LossResult res;
    res.grad.assign(render.size(), 0.0);

    std::vector<double> x(pixels), y(pixels), xx(pixels), xy(pixels), yy(pixels);
    std::vector<double> mu_x, mu_y, m_xx, m_xy, m_yy, tmp;
    std::vector<double> f_u(pixels), f_v(pixels), f_m(pixels), gplane;

    double ssim_sum = 0.0;
    for (int c = 0; c < 3; ++c) {
        for (size_t p = 0; p < pixels; ++p) {
            x[p] = render[p * 3 + c];
            y[p] = gt.data[p * 3 + c];
            xx[p] = x[p] * x[p];
            xy[p] = x[p] * y[p];
            yy[p] = y[p] * y[p];
        }
        blur_plane(x, width, height, tmp, mu_x);
        blur_plane(y, width, height, tmp, mu_y);
        blur_plane(xx, width, height, tmp, m_xx);
        blur_plane(xy, width, height, tmp, m_xy);
        blur_plane(yy, width, height, tmp, m_yy);

        // d(loss)/d(ssim map) for loss = (1 - mean)/2 over pixels and channels.
        const double gmap = -1.0 / (2.0 * static_cast<double>(pixels) * 3.0);
        double channel_sum = 0.0;
#pragma omp parallel for schedule(static) reduction(+ : channel_sum)
        for (long long p = 0; p < static_cast<long long>(pixels); ++p) {
            const double ux = mu_x[p], uy = mu_y[p];
            const double sx = m_xx[p] - ux * ux;
            const double sy = m_yy[p] - uy * uy;
            const double sxy = m_xy[p] - ux * uy;
            const double n1 = 2.0 * ux * uy + kSsimC1;
            const double n2 = 2.0 * sxy + kSsimC2;
            const double d1 = ux * ux + uy * uy + kSsimC1;
            const double d2 = sx + sy + kSsimC2;
            const double f = (n1 * n2) / (d1 * d2);
            channel_sum += f;

            // Partials w.r.t. the blurred intermediates u = mu_x, v = m_xx,
            // m = m_xy, holding the ground-truth statistics fixed.
            const double df_dn1 = n2 / (d1 * d2);
            const double df_dn2 = n1 / (d1 * d2);
            const double df_dd1 = -f / d1;
            const double df_dd2 = -f / d2;
            const double df_dsx = df_dd2;           // sigma_x^2 enters d2 only
            const double df_dsxy = 2.0 * df_dn2;    // sigma_xy enters n2 only
            const double df_dux = 2.0 * uy * df_dn1 + 2.0 * ux * df_dd1 // direct
                                  - 2.0 * ux * df_dsx                   // sx = m_xx - ux^2
                                  - uy * df_dsxy;                       // sxy = m_xy - ux uy
            f_u[p] = gmap * df_dux;
            f_v[p] = gmap * df_dsx;
            f_m[p] = gmap * df_dsxy;
        }
        ssim_sum += channel_sum / static_cast<double>(pixels);

        // dL/dx = blur^T(f_u) + 2 x .* blur^T(f_v) + y .* blur^T(f_m)
        blur_plane_adjoint(f_u, width, height, tmp, gplane);
        for (size_t p = 0; p < pixels; ++p) res.grad[p * 3 + c] += gplane[p];
        blur_plane_adjoint(f_v, width, height, tmp, gplane);
        for (size_t p = 0; p < pixels; ++p) res.grad[p * 3 + c] += 2.0 * x[p] * gplane[p];
        blur_plane_adjoint(f_m, width, height, tmp, gplane);
        for (size_t p = 0; p < pixels; ++p) res.grad[p * 3 + c] += y[p] * gplane[p];
    }
    res.value = (1.0 - ssim_sum / 3.0) / 2.0;
    return res;
}

bool dssim_active(long long iter, const LossConfig& cfg) {
    if (iter < cfg.dssim_start_iter) return false;
    return (iter - cfg.dssim_start_iter) % cfg.dssim_period < cfg.dssim_active_span;
}

namespace {

struct NeighborHeap {
    // Fixed-size insertion sort by (distance, index); small k keeps this fast.
    int cap;
    int size = 0;
    std::vector<double> dist;
    std::vector<int> idx;

    explicit NeighborHeap(int k) : cap(k), dist(k), idx(k) {}

    void reset() { size = 0; }
    double worst() const { return size < cap ? std::numeric_limits<double>::infinity() : dist[size - 1]; }

    void push(double d, int i) {
        if (size == cap && (d > dist[size - 1] || (d == dist[size - 1] && i > idx[size - 1]))) {
            return;
        }
        int pos = size < cap ? size : cap - 1;
        while (pos > 0 && (dist[pos - 1] > d || (dist[pos - 1] == d && idx[pos - 1] > i))) {
            dist[pos] = dist[pos - 1];
            idx[pos] = idx[pos - 1];
            --pos;
        }
        dist[pos] = d;
        idx[pos] = i;
        if (size < cap) ++size;
    }
};

} // namespace

KnnGraph build_knn(const std::vector<double>& positions, int k, double lambda_w,
                   int grid_threshold) {
    const int n = static_cast<int>(positions.size() / 3);
    if (n < 2) throw DataError("build_knn: need at least two points");
    if (k < 1) throw ConfigError("build_knn: k must be >= 1");
    KnnGraph graph;
    graph.k = k;
    graph.count = n;
    graph.row_len = std::min(k, n - 1);
    graph.neighbors.assign(static_cast<size_t>(n) * graph.row_len, -1);
    graph.weights.assign(static_cast<size_t>(n) * graph.row_len, 0.0);

    auto dist2 = [&](int a, int b) {
        const double dx = positions[3 * a] - positions[3 * b];
        const double dy = positions[3 * a + 1] - positions[3 * b + 1];
        const double dz = positions[3 * a + 2] - positions[3 * b + 2];
        return dx * dx + dy * dy + dz * dz;
    };
    auto store = [&](int i, const NeighborHeap& heap) {
        for (int s = 0; s < graph.row_len; ++s) {
            graph.neighbors[static_cast<size_t>(i) * graph.row_len + s] = heap.idx[s];
            graph.weights[static_cast<size_t>(i) * graph.row_len + s] =
                std::exp(-lambda_w * heap.dist[s]);
        }
    };

    if (n <= grid_threshold) {
#pragma omp parallel
        {
            NeighborHeap heap(graph.row_len);
#pragma omp for schedule(static)
            for (int i = 0; i < n; ++i) {
                heap.reset();
                for (int j = 0; j < n; ++j) {
                    if (j == i) continue;
                    heap.push(dist2(i, j), j);
                }
                store(i, heap);
            }
        }
        return graph;
    }

    // Uniform-grid exact search for large clouds: expand cell rings until the
    // guaranteed radius covers the current k-th distance.
    double lo[3], hi[3];
    for (int a = 0; a < 3; ++a) {
        lo[a] = std::numeric_limits<double>::infinity();
        hi[a] = -std::numeric_limits<double>::infinity();
    }
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::min(lo[a], positions[3 * i + a]);
            hi[a] = std::max(hi[a], positions[3 * i + a]);
        }
    }
    const double vol = std::max(1e-30, (hi[0] - lo[0]) * (hi[1] - lo[1]) * (hi[2] - lo[2]));
    const double cell = std::max(1e-12, std::cbrt(vol * graph.row_len / n));
    int dims[3];
    for (int a = 0; a < 3; ++a) {
        dims[a] = std::max(1, static_cast<int>((hi[a] - lo[a]) / cell) + 1);
    }
    auto cell_of = [&](int i, int a) {
        return std::min(dims[a] - 1, static_cast<int>((positions[3 * i + a] - lo[a]) / cell));
    };
    const size_t ncells = static_cast<size_t>(dims[0]) * dims[1] * dims[2];
    std::vector<int> cell_count(ncells + 1, 0);
    std::vector<int> cell_id(n);
    for (int i = 0; i < n; ++i) {
        const size_t id = (static_cast<size_t>(cell_of(i, 2)) * dims[1] + cell_of(i, 1)) * dims[0] +
                          cell_of(i, 0);
        cell_id[i] = static_cast<int>(id);
        cell_count[id + 1]++;
    }
    for (size_t c = 0; c < ncells; ++c) cell_count[c + 1] += cell_count[c];
    std::vector<int> cell_points(n);
    {
        std::vector<int> cursor(cell_count.begin(), cell_count.end() - 1);
        for (int i = 0; i < n; ++i) cell_points[cursor[cell_id[i]]++] = i;
    }

#pragma omp parallel
    {
        NeighborHeap heap(graph.row_len);
#pragma omp for schedule(static)
        for (int i = 0; i < n; ++i) {
            heap.reset();
            const int cx = cell_of(i, 0), cy = cell_of(i, 1), cz = cell_of(i, 2);
            const int max_ring = std::max({dims[0], dims[1], dims[2]});
            for (int ring = 0; ring <= max_ring; ++ring) {
                // Points in cells beyond this ring are at least (ring-1)*cell away.
                if (heap.size == graph.row_len && (ring - 1) * cell > 0 &&
                    (ring - 1) * cell * ((ring - 1) * cell) >= heap.worst()) {
                    break;
                }
                for (int dz = -ring; dz <= ring; ++dz) {
                    const int z = cz + dz;
                    if (z < 0 || z >= dims[2]) continue;
                    for (int dy = -ring; dy <= ring; ++dy) {
                        const int y = cy + dy;
                        if (y < 0 || y >= dims[1]) continue;
                        for (int dx = -ring; dx <= ring; ++dx) {
                            // Only the shell of the ring.
                            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != ring) {
                                continue;
                            }
                            const int xcell = cx + dx;
                            if (xcell < 0 || xcell >= dims[0]) continue;
                            const size_t id =
                                (static_cast<size_t>(z) * dims[1] + y) * dims[0] + xcell;
                            for (int s = cell_count[id]; s < cell_count[id + 1]; ++s) {
                                const int j = cell_points[s];
                                if (j == i) continue;
                                heap.push(dist2(i, j), j);
                            }
                        }
                    }
                }
            }
            store(i, heap);
        }
    }
    return graph;
}

EmbRegResult emb_reg_loss(const std::vector<double>& embeddings, int embed_dim,
                          const KnnGraph& graph) {
    const int n = static_cast<int>(embeddings.size()) / std::max(1, embed_dim);
    if (graph.count != n) {
        throw DataError("emb_reg_loss: stale knn graph, rebuild after densification");
    }
    EmbRegResult res;
    res.grad.assign(embeddings.size(), 0.0);
    if (graph.row_len == 0) return res;
    const double norm = 1.0 / (static_cast<double>(graph.row_len) * n);

    int nthreads = 1;
#ifdef _OPENMP
#pragma omp parallel
    {
#pragma omp single
        nthreads = omp_get_num_threads();
    }
#endif
    std::vector<std::vector<double>> partials(nthreads);
    for (auto& p : partials) p.assign(embeddings.size(), 0.0);
    double total = 0.0;
#pragma omp parallel reduction(+ : total)
    {
#ifdef _OPENMP
        const int tid = omp_get_thread_num();
#else
        const int tid = 0;
#endif
        std::vector<double>& g = partials[tid];
#pragma omp for schedule(static)
        for (int i = 0; i < n; ++i) {
            for (int s = 0; s < graph.row_len; ++s) {
                const int j = graph.neighbors[static_cast<size_t>(i) * graph.row_len + s];
                const double w = graph.weights[static_cast<size_t>(i) * graph.row_len + s];
                double d2 = 0.0;
                for (int d = 0; d < embed_dim; ++d) {
                    const double diff = embeddings[static_cast<size_t>(i) * embed_dim + d] -
                                        embeddings[static_cast<size_t>(j) * embed_dim + d];
                    d2 += diff * diff;
                }
                const double dist = std::sqrt(d2);
                total += w * dist;
                if (dist > 0.0) {
                    const double scale = norm * w / dist;
                    for (int d = 0; d < embed_dim; ++d) {
                        const double diff = embeddings[static_cast<size_t>(i) * embed_dim + d] -
                                            embeddings[static_cast<size_t>(j) * embed_dim + d];
                        g[static_cast<size_t>(i) * embed_dim + d] += scale * diff;
                        g[static_cast<size_t>(j) * embed_dim + d] -= scale * diff;
                    }
                }
            }
        }
    }
    for (int p = 0; p < nthreads; ++p) {
        for (size_t i = 0; i < res.grad.size(); ++i) res.grad[i] += partials[p][i];
    }
    res.value = total * norm;
    return res;
}

double psnr(const std::vector<double>& render, const Image& gt) {
    if (render.size() != gt.data.size()) throw DataError("psnr: image size mismatch");
    double mse = 0.0;
    for (size_t i = 0; i < render.size(); ++i) {
        const double d = render[i] - gt.data[i];
        mse += d * d;
    }
    mse /= static_cast<double>(render.size());
    if (mse <= 1e-10) return 100.0;
    return std::min(100.0, 10.0 * std::log10(1.0 / mse));
}

double ssim_metric(const std::vector<double>& render, const Image& gt) {
    LossResult r = dssim_loss(render, gt);
    return 1.0 - 2.0 * r.value;
}

} // namespace frog
