#include <cmath>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "frog/errors.hpp"
#include "frog/rasterizer.hpp"
#include "frog/sh.hpp"

namespace frog {

SplatGrads render_backward_splats(const std::vector<Splat2D>& splats, const RenderOutput& out,
                                  const std::vector<double>& g_color) {
    if (!out.has_forward_state()) {
        throw DataError("render_backward: forward state missing");
    }
    if (g_color.size() != out.color.size()) {
        throw DataError("render_backward: gradient image size mismatch");
    }
    const int ns = static_cast<int>(splats.size());
    const int tiles = out.tiles_x * out.tiles_y;

    int nthreads = 1;
#ifdef _OPENMP
#pragma omp parallel
    {
#pragma omp single
        nthreads = omp_get_num_threads();
    }
#endif
    std::vector<SplatGrads> partial(nthreads);
    for (auto& p : partial) {
        p.mean2d.assign(2 * static_cast<size_t>(ns), 0.0);
        p.conic.assign(3 * static_cast<size_t>(ns), 0.0);
        p.color.assign(3 * static_cast<size_t>(ns), 0.0);
        p.alpha.assign(static_cast<size_t>(ns), 0.0);
    }

#pragma omp parallel
    {
#ifdef _OPENMP
        const int tid = omp_get_thread_num();
#else
        const int tid = 0;
#endif
        SplatGrads& sg = partial[tid];
#pragma omp for schedule(static)
        for (int tile = 0; tile < tiles; ++tile) {
            const int tx = tile % out.tiles_x;
            const int ty = tile / out.tiles_x;
            const int x0 = tx * kTileSize, x1 = std::min(out.width, x0 + kTileSize);
            const int y0 = ty * kTileSize, y1 = std::min(out.height, y0 + kTileSize);
            const int* list = out.tile_splats.data() + out.tile_offsets[tile];
            const int list_len = out.tile_offsets[tile + 1] - out.tile_offsets[tile];
            if (list_len == 0) continue;
            for (int v = y0; v < y1; ++v) {
                for (int u = x0; u < x1; ++u) {
                    const size_t pix = static_cast<size_t>(v) * out.width + u;
                    const double gr = g_color[pix * 3];
                    const double gg = g_color[pix * 3 + 1];
                    const double gb = g_color[pix * 3 + 2];
                    if (gr == 0.0 && gg == 0.0 && gb == 0.0) continue;
                    const int nc = out.n_contrib[pix];
                    if (nc == 0) continue;
                    const double px = u + 0.5, py = v + 0.5;
                    // Walk contributors back to front, rebuilding transmittance
                    // from the stored final value.
                    double t = out.final_t[pix];
                    double accum[3] = {0.0, 0.0, 0.0};
                    double last_alpha = 0.0;
                    double last_color[3] = {0.0, 0.0, 0.0};
                    for (int k = nc - 1; k >= 0; --k) {
                        const int si = list[k];
                        const Splat2D& s = splats[si];
                        const double dx = px - s.mx;
                        const double dy = py - s.my;
                        const double power =
                            -0.5 * (s.lxx * dx * dx + 2.0 * s.lxy * dx * dy + s.lyy * dy * dy);
                        if (power > 0.0) continue;
                        const double gexp = std::exp(power);
                        const double raw_a = s.alpha * gexp;
                        const double a = std::min(kAlphaClamp, raw_a);
                        if (a < kAlphaSkip) continue;
                        t /= 1.0 - a; // transmittance in front of this splat
                        const double w = a * t;
                        sg.color[3 * static_cast<size_t>(si)] += w * gr;
                        sg.color[3 * static_cast<size_t>(si) + 1] += w * gg;
                        sg.color[3 * static_cast<size_t>(si) + 2] += w * gb;

                        const double sc[3] = {s.r, s.g, s.b};
                        const double gpix[3] = {gr, gg, gb};
                        double g_alpha = 0.0;
                        for (int c = 0; c < 3; ++c) {
                            accum[c] = last_alpha * last_color[c] + (1.0 - last_alpha) * accum[c];
                            g_alpha += (sc[c] - accum[c]) * t * gpix[c];
                            last_color[c] = sc[c];
                        }
                        last_alpha = a;
                        if (raw_a < kAlphaClamp) {
                            sg.alpha[si] += g_alpha * gexp;
                            const double g_power = g_alpha * s.alpha * gexp;
                            sg.mean2d[2 * static_cast<size_t>(si)] +=
                                g_power * (s.lxx * dx + s.lxy * dy);
                            sg.mean2d[2 * static_cast<size_t>(si) + 1] +=
                                g_power * (s.lxy * dx + s.lyy * dy);
                            sg.conic[3 * static_cast<size_t>(si)] += g_power * (-0.5 * dx * dx);
                            sg.conic[3 * static_cast<size_t>(si) + 1] += g_power * (-0.5 * dx * dy);
                            sg.conic[3 * static_cast<size_t>(si) + 2] += g_power * (-0.5 * dy * dy);
                        }
                    }
                }
            }
        }
    }

    SplatGrads total = std::move(partial[0]);
    for (int p = 1; p < nthreads; ++p) {
        for (size_t i = 0; i < total.mean2d.size(); ++i) total.mean2d[i] += partial[p].mean2d[i];
        for (size_t i = 0; i < total.conic.size(); ++i) total.conic[i] += partial[p].conic[i];
        for (size_t i = 0; i < total.color.size(); ++i) total.color[i] += partial[p].color[i];
        for (size_t i = 0; i < total.alpha.size(); ++i) total.alpha[i] += partial[p].alpha[i];
    }
    return total;
}

void DeformedGrads::init(const DeformedCloud& cloud) {
    positions.assign(cloud.positions.size(), 0.0);
    scales.assign(cloud.scales.size(), 0.0);
    rotations.assign(cloud.rotations.size(), 0.0);
    alphas.assign(cloud.alphas.size(), 0.0);
    sh_coeffs.assign(cloud.sh_coeffs.size(), 0.0);
    screen_grad_norm.assign(cloud.alphas.size(), 0.0);
    visible.assign(cloud.alphas.size(), 0);
}

DeformedGrads project_backward(const DeformedCloud& cloud, const Camera& cam,
                               const std::vector<Splat2D>& splats, const SplatGrads& sg) {
    DeformedGrads out;
    out.init(cloud);
    const int ns = static_cast<int>(splats.size());
    const Mat3 w2c = cam.rotation_w2c();
    const Vec3 o = cam.center();
    const int sh_degree = cloud.sh_degree;
    const int sh = sh_coeff_count(sh_degree);

#pragma omp parallel for schedule(static)
    for (int si = 0; si < ns; ++si) {
        const Splat2D& s = splats[si];
        const int i = s.index;
        const Vec3 mu(cloud.positions[3 * i], cloud.positions[3 * i + 1], cloud.positions[3 * i + 2]);
        const Vec3 scale(cloud.scales[3 * i], cloud.scales[3 * i + 1], cloud.scales[3 * i + 2]);
        const Vec4 quat(cloud.rotations[4 * i], cloud.rotations[4 * i + 1],
                        cloud.rotations[4 * i + 2], cloud.rotations[4 * i + 3]);
        const Vec3 p = cam.world_to_cam(mu);
        const double x = p[0], y = p[1], z = p[2];

        const Mat3 rot = quat_to_rotation(quat);
        const Mat3 rs = rot * scale.asDiagonal();
        const Mat3 sigma = rs * rs.transpose();
        Eigen::Matrix<double, 2, 3> j;
        j << cam.fx / z, 0.0, -cam.fx * x / (z * z),
             0.0, cam.fy / z, -cam.fy * y / (z * z);
        const Eigen::Matrix<double, 2, 3> m = j * w2c;

        // Conic -> 2D covariance (the dilation is additive, so the gradient
        // passes straight through to the projected covariance).
        Mat2 lambda;
        lambda << s.lxx, s.lxy, s.lxy, s.lyy;
        Mat2 g_lambda;
        g_lambda << sg.conic[3 * static_cast<size_t>(si)], sg.conic[3 * static_cast<size_t>(si) + 1],
            sg.conic[3 * static_cast<size_t>(si) + 1], sg.conic[3 * static_cast<size_t>(si) + 2];
        const Mat2 g_cov2 = -lambda * g_lambda * lambda;

        // cov2 = M Sigma M^T
        const Mat3 g_sigma = m.transpose() * g_cov2 * m;
        const Eigen::Matrix<double, 2, 3> g_m = (g_cov2 + g_cov2.transpose()) * m * sigma;
        const Eigen::Matrix<double, 2, 3> g_j = g_m * w2c.transpose();

        const double gmx = sg.mean2d[2 * static_cast<size_t>(si)];
        const double gmy = sg.mean2d[2 * static_cast<size_t>(si) + 1];
        double gx = gmx * cam.fx / z;
        double gy = gmy * cam.fy / z;
        double gz = -gmx * cam.fx * x / (z * z) - gmy * cam.fy * y / (z * z);
        // Jacobian entries depend on the camera-frame point.
        gx += g_j(0, 2) * (-cam.fx / (z * z));
        gy += g_j(1, 2) * (-cam.fy / (z * z));
        gz += g_j(0, 0) * (-cam.fx / (z * z)) + g_j(1, 1) * (-cam.fy / (z * z)) +
              g_j(0, 2) * (2.0 * cam.fx * x / (z * z * z)) +
              g_j(1, 2) * (2.0 * cam.fy * y / (z * z * z));
        Vec3 g_pos = w2c.transpose() * Vec3(gx, gy, gz);

        // View-dependent color: chain through the SH basis and the direction
        // normalization. Channels clamped at zero pass no gradient.
        const Vec3 gcol(sg.color[3 * static_cast<size_t>(si)],
                        sg.color[3 * static_cast<size_t>(si) + 1],
                        sg.color[3 * static_cast<size_t>(si) + 2]);
        const Vec3 dvec = mu - o;
        const double rlen = dvec.norm();
        const Vec3 dir = dvec / rlen;
        double basis[16];
        Vec3 dbasis[16];
        eval_sh_basis_grad(sh_degree, dir, basis, dbasis);
        const double* coeffs = cloud.sh_coeffs.data() + 3 * static_cast<size_t>(sh) * i;
        double* g_sh = out.sh_coeffs.data() + 3 * static_cast<size_t>(sh) * i;
        Vec3 g_dir = Vec3::Zero();
        for (int c = 0; c < 3; ++c) {
            double raw = 0.5;
            for (int b = 0; b < sh; ++b) raw += basis[b] * coeffs[3 * b + c];
            if (raw <= 0.0 || gcol[c] == 0.0) continue;
            for (int b = 0; b < sh; ++b) {
                g_sh[3 * b + c] += gcol[c] * basis[b];
                g_dir += gcol[c] * coeffs[3 * b + c] * dbasis[b];
            }
        }
        g_pos += (g_dir - dir * dir.dot(g_dir)) / rlen;

        Vec3 g_scale;
        Vec4 g_quat;
        covariance_backward(scale, quat, g_sigma, &g_scale, &g_quat);

        for (int a = 0; a < 3; ++a) {
            out.positions[3 * i + a] = g_pos[a];
            out.scales[3 * i + a] = g_scale[a];
        }
        for (int a = 0; a < 4; ++a) out.rotations[4 * i + a] = g_quat[a];
        out.alphas[i] = sg.alpha[si];
        out.screen_grad_norm[i] = std::hypot(gmx, gmy);
        out.visible[i] = 1;
    }
    return out;
}

} // namespace frog
