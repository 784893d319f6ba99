#include "frog/rasterizer.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>

#include "frog/errors.hpp"
#include "frog/sh.hpp"

namespace frog {

bool Splat2D::finalize() {
    const double det = cxx * cyy - cxy * cxy;
    if (det <= 1e-12) return false;
    lxx = cyy / det;
    lxy = -cxy / det;
    lyy = cxx / det;
    if (alpha <= kAlphaSkip) {
        rx = ry = 0.0; // blended alpha can never reach 1/255
        return true;
    }
    // Support bound: alpha * exp(-q/2) >= 1/255  <=>  q <= 2 ln(255 alpha).
    const double q = 2.0 * std::log(alpha * 255.0);
    rx = std::sqrt(q * cxx) + 1e-6;
    ry = std::sqrt(q * cyy) + 1e-6;
    return true;
}

std::optional<ProjectedGeom> project(const Vec3& mu, const Mat3& sigma, const Camera& cam) {
    const Vec3 p = cam.world_to_cam(mu);
    const double z = p[2];
    if (!(z > kNearPlane)) return std::nullopt;
    const double x = p[0], y = p[1];
    ProjectedGeom out;
    out.mean2d = Vec2(cam.fx * x / z + cam.cx, cam.fy * y / z + cam.cy);
    out.depth_z = z;
    out.depth_eucl = (mu - cam.center()).norm();

    Eigen::Matrix<double, 2, 3> j;
    j << cam.fx / z, 0.0, -cam.fx * x / (z * z),
         0.0, cam.fy / z, -cam.fy * y / (z * z);
    const Eigen::Matrix<double, 2, 3> m = j * cam.rotation_w2c();
    const Mat2 cov2 = m * sigma * m.transpose();
    out.cxx = cov2(0, 0) + kCovDilation;
    out.cxy = 0.5 * (cov2(0, 1) + cov2(1, 0));
    out.cyy = cov2(1, 1) + kCovDilation;
    return out;
}

ProjectResult project_cloud(const DeformedCloud& cloud, const Camera& cam) {
    const int n = cloud.size();
    const Vec3 o = cam.center();
    ProjectResult res;
    std::vector<Splat2D> tmp(n);
    std::vector<std::uint8_t> valid(n, 0);
    std::atomic<int> culled{0}, degenerate{0};
    const int sh_degree = cloud.sh_degree;
    const int sh = sh_coeff_count(sh_degree);

#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        const Vec3 mu(cloud.positions[3 * i], cloud.positions[3 * i + 1], cloud.positions[3 * i + 2]);
        const Vec3 scale(cloud.scales[3 * i], cloud.scales[3 * i + 1], cloud.scales[3 * i + 2]);
        const Vec4 quat(cloud.rotations[4 * i], cloud.rotations[4 * i + 1],
                        cloud.rotations[4 * i + 2], cloud.rotations[4 * i + 3]);
        const Mat3 r = quat_to_rotation(quat);
        const Mat3 rs = r * scale.asDiagonal();
        const Mat3 sigma = rs * rs.transpose();
        auto geom = project(mu, sigma, cam);
        if (!geom) {
            culled.fetch_add(1);
            continue;
        }
        Splat2D s;
        s.mx = geom->mean2d[0];
        s.my = geom->mean2d[1];
        s.cxx = geom->cxx;
        s.cxy = geom->cxy;
        s.cyy = geom->cyy;
        s.depth_z = geom->depth_z;
        s.depth_eucl = geom->depth_eucl;
        s.alpha = cloud.alphas[i];
        s.index = i;
        const Vec3 dir = (mu - o).normalized();
        const Vec3 rgb = eval_sh_color(cloud.sh_coeffs.data() + 3 * static_cast<size_t>(sh) * i,
                                       sh_degree, dir);
        s.r = rgb[0];
        s.g = rgb[1];
        s.b = rgb[2];
        if (!s.finalize()) {
            degenerate.fetch_add(1);
            continue;
        }
        tmp[i] = s;
        valid[i] = 1;
    }
    res.culled_near = culled.load();
    res.skipped_degenerate = degenerate.load();
    res.splats.reserve(n);
    for (int i = 0; i < n; ++i) {
        if (valid[i]) res.splats.push_back(tmp[i]);
    }
    std::sort(res.splats.begin(), res.splats.end(), [](const Splat2D& a, const Splat2D& b) {
        if (a.depth_z != b.depth_z) return a.depth_z < b.depth_z;
        return a.index < b.index;
    });
    return res;
}

namespace {

// Blended alpha of a splat at a pixel center, or 0 when below the 1/255
// cutoff. Shared verbatim by the tiled and the reference path.
inline double splat_alpha_at(const Splat2D& s, double px, double py) {
    const double dx = px - s.mx;
    const double dy = py - s.my;
    const double power = -0.5 * (s.lxx * dx * dx + 2.0 * s.lxy * dx * dy + s.lyy * dy * dy);
    if (power > 0.0) return 0.0;
    const double a = std::min(kAlphaClamp, s.alpha * std::exp(power));
    return a < kAlphaSkip ? 0.0 : a;
}

} // namespace

RenderOutput render(const std::vector<Splat2D>& splats, int width, int height) {
    RenderOutput out;
    out.width = width;
    out.height = height;
    const size_t pixels = static_cast<size_t>(width) * height;
    out.color.assign(pixels * 3, 0.0);
    out.mean_depth.assign(pixels, 0.0);
    out.median_depth.assign(pixels, std::numeric_limits<double>::quiet_NaN());
    out.accum_alpha.assign(pixels, 0.0);
    out.final_t.assign(pixels, 1.0);
    out.n_contrib.assign(pixels, 0);
    out.tiles_x = (width + kTileSize - 1) / kTileSize;
    out.tiles_y = (height + kTileSize - 1) / kTileSize;
    const int tiles = out.tiles_x * out.tiles_y;

    // Bin splats into every tile their support box touches. Two passes keep
    // per-tile lists in global front-to-back order.
    const int ns = static_cast<int>(splats.size());
    struct Span {
        int tx0, tx1, ty0, ty1;
        bool empty;
    };
    std::vector<Span> spans(ns);
    std::vector<int> counts(tiles, 0);
    for (int i = 0; i < ns; ++i) {
        const Splat2D& s = splats[i];
        // Pixel u covers the splat when |u + 0.5 - mx| <= rx.
        const int u0 = std::max(0, static_cast<int>(std::ceil(s.mx - s.rx - 0.5)));
        const int u1 = std::min(width - 1, static_cast<int>(std::floor(s.mx + s.rx - 0.5)));
        const int v0 = std::max(0, static_cast<int>(std::ceil(s.my - s.ry - 0.5)));
        const int v1 = std::min(height - 1, static_cast<int>(std::floor(s.my + s.ry - 0.5)));
        Span& sp = spans[i];
        sp.empty = u0 > u1 || v0 > v1 || s.rx <= 0.0;
        if (sp.empty) continue;
        sp.tx0 = u0 / kTileSize;
        sp.tx1 = u1 / kTileSize;
        sp.ty0 = v0 / kTileSize;
        sp.ty1 = v1 / kTileSize;
        for (int ty = sp.ty0; ty <= sp.ty1; ++ty) {
            for (int tx = sp.tx0; tx <= sp.tx1; ++tx) counts[ty * out.tiles_x + tx]++;
        }
    }
    out.tile_offsets.assign(tiles + 1, 0);
    for (int t = 0; t < tiles; ++t) out.tile_offsets[t + 1] = out.tile_offsets[t] + counts[t];
    out.tile_splats.resize(out.tile_offsets[tiles]);
    std::vector<int> cursor(out.tile_offsets.begin(), out.tile_offsets.end() - 1);
    for (int i = 0; i < ns; ++i) {
        const Span& sp = spans[i];
        if (sp.empty) continue;
        for (int ty = sp.ty0; ty <= sp.ty1; ++ty) {
            for (int tx = sp.tx0; tx <= sp.tx1; ++tx) {
                out.tile_splats[cursor[ty * out.tiles_x + tx]++] = i;
            }
        }
    }

#pragma omp parallel for schedule(static)
    for (int tile = 0; tile < tiles; ++tile) {
        const int tx = tile % out.tiles_x;
        const int ty = tile / out.tiles_x;
        const int x0 = tx * kTileSize, x1 = std::min(width, x0 + kTileSize);
        const int y0 = ty * kTileSize, y1 = std::min(height, y0 + kTileSize);
        const int* list = out.tile_splats.data() + out.tile_offsets[tile];
        const int list_len = out.tile_offsets[tile + 1] - out.tile_offsets[tile];
        for (int v = y0; v < y1; ++v) {
            for (int u = x0; u < x1; ++u) {
                const double px = u + 0.5, py = v + 0.5;
                const size_t pix = static_cast<size_t>(v) * width + u;
                double t = 1.0;
                double cr = 0.0, cg = 0.0, cb = 0.0, mean_d = 0.0;
                double median = std::numeric_limits<double>::quiet_NaN();
                int contrib = 0;
                for (int k = 0; k < list_len; ++k) {
                    const Splat2D& s = splats[list[k]];
                    const double a = splat_alpha_at(s, px, py);
                    if (a <= 0.0) continue;
                    const double t_next = t * (1.0 - a);
                    if (t_next < kTransmittanceFloor) break;
                    const double w = a * t;
                    cr += s.r * w;
                    cg += s.g * w;
                    cb += s.b * w;
                    mean_d += s.depth_eucl * w;
                    if (t > 0.5 && t_next <= 0.5) median = s.depth_eucl;
                    t = t_next;
                    contrib = k + 1;
                }
                out.color[pix * 3] = cr;
                out.color[pix * 3 + 1] = cg;
                out.color[pix * 3 + 2] = cb;
                out.mean_depth[pix] = mean_d;
                out.median_depth[pix] = median;
                out.accum_alpha[pix] = 1.0 - t;
                out.final_t[pix] = t;
                out.n_contrib[pix] = contrib;
            }
        }
    }
    return out;
}

std::vector<double> render_reference(const std::vector<Splat2D>& splats, int width, int height) {
    std::vector<double> color(static_cast<size_t>(width) * height * 3, 0.0);
    for (int v = 0; v < height; ++v) {
        for (int u = 0; u < width; ++u) {
            const double px = u + 0.5, py = v + 0.5;
            double t = 1.0, cr = 0.0, cg = 0.0, cb = 0.0;
            for (const Splat2D& s : splats) {
                const double a = splat_alpha_at(s, px, py);
                if (a <= 0.0) continue;
                const double w = a * t;
                cr += s.r * w;
                cg += s.g * w;
                cb += s.b * w;
                t *= 1.0 - a;
            }
            const size_t pix = static_cast<size_t>(v) * width + u;
            color[pix * 3] = cr;
            color[pix * 3 + 1] = cg;
            color[pix * 3 + 2] = cb;
        }
    }
    return color;
}

} // namespace frog
