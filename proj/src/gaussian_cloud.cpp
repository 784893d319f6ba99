#include "frog/gaussian_cloud.hpp"

#include <cmath>
#include <string>

#include "frog/errors.hpp"

namespace frog {

void GaussianCloud::resize(int n) {
    positions.resize(3 * static_cast<size_t>(n), 0.0);
    log_scales.resize(3 * static_cast<size_t>(n), 0.0);
    rotations.resize(4 * static_cast<size_t>(n), 0.0);
    opacity_logits.resize(static_cast<size_t>(n), 0.0);
    sh_coeffs.resize(3 * static_cast<size_t>(sh_count()) * n, 0.0);
    embeddings.resize(static_cast<size_t>(embed_dim) * n, 0.0);
}

void GaussianCloud::validate() const {
    const size_t n = opacity_logits.size();
    if (positions.size() != 3 * n || log_scales.size() != 3 * n || rotations.size() != 4 * n ||
        sh_coeffs.size() != 3 * static_cast<size_t>(sh_count()) * n ||
        embeddings.size() != static_cast<size_t>(embed_dim) * n) {
        throw DataError("gaussian cloud attribute arrays disagree on length");
    }
    auto check = [](const std::vector<double>& v, size_t stride, const char* name) {
        for (size_t i = 0; i < v.size(); ++i) {
            if (!std::isfinite(v[i])) {
                throw NumericError("gaussian " + std::to_string(i / stride) + ": non-finite " + name);
            }
        }
    };
    check(positions, 3, "position");
    check(log_scales, 3, "log_scale");
    check(rotations, 4, "rotation");
    check(opacity_logits, 1, "opacity_logit");
    check(sh_coeffs, 3 * static_cast<size_t>(sh_count()), "sh coefficient");
    check(embeddings, static_cast<size_t>(embed_dim), "embedding");
}

ActivatedCloud activated_view(const GaussianCloud& cloud) {
    cloud.validate();
    const int n = cloud.size();
    ActivatedCloud out;
    out.sh_degree = cloud.sh_degree;
    out.positions = cloud.positions;
    out.sh_coeffs = cloud.sh_coeffs;
    out.scales.resize(3 * static_cast<size_t>(n));
    out.rotations.resize(4 * static_cast<size_t>(n));
    out.opacities.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        for (int k = 0; k < 3; ++k) {
            out.scales[3 * i + k] = std::exp(cloud.log_scales[3 * i + k]);
        }
        const Vec4 q = cloud.rotation(i);
        const double norm = q.norm();
        if (norm == 0.0) {
            throw NumericError("gaussian " + std::to_string(i) + ": invalid rotation");
        }
        for (int k = 0; k < 4; ++k) {
            out.rotations[4 * i + k] = cloud.rotations[4 * i + k] / norm;
        }
        out.opacities[i] = sigmoid(cloud.opacity_logits[i]);
    }
    return out;
}

Mat3 build_covariance(const Vec3& scale, const Vec4& quat) {
    const double norm = quat.norm();
    if (!(norm > 0.0) || !std::isfinite(norm)) {
        throw NumericError("invalid rotation");
    }
    const Mat3 r = quat_to_rotation(quat / norm);
    const Mat3 rs = r * scale.asDiagonal();
    return rs * rs.transpose();
}

void covariance_backward(const Vec3& scale, const Vec4& unit_quat, const Mat3& g_sigma,
                         Vec3* g_scale, Vec4* g_quat) {
    const Mat3 r = quat_to_rotation(unit_quat);
    const Mat3 a = r * scale.asDiagonal(); // Sigma = A A^T
    const Mat3 ga = (g_sigma + g_sigma.transpose()) * a;
    const Mat3 gr = ga * scale.asDiagonal();
    for (int k = 0; k < 3; ++k) {
        (*g_scale)[k] = ga.col(k).dot(r.col(k));
    }
    *g_quat = quat_rotation_backward(unit_quat, gr);
}

} // namespace frog
