#pragma once

#include <cstdint>
#include <vector>

#include "frog/geometry.hpp"

namespace frog {

// Canonical field storage. All per-Gaussian attributes are kept as raw,
// unconstrained parameters; activations are applied on read:
//   scales   = exp(log_scales)           (componentwise, > 0)
//   opacity  = sigmoid(opacity_logits)   (in (0,1))
//   rotation = rotations / |rotations|   (unit quaternion, w first)
// SH coefficients are coeff-major: coeff 0 (DC) channels rgb, then coeff 1, ...
struct GaussianCloud {
    int sh_degree = 1;
    int embed_dim = 32;

    std::vector<double> positions;      // 3 per Gaussian
    std::vector<double> log_scales;     // 3 per Gaussian
    std::vector<double> rotations;      // 4 per Gaussian (w, x, y, z)
    std::vector<double> opacity_logits; // 1 per Gaussian
    std::vector<double> sh_coeffs;      // 3 * (sh_degree+1)^2 per Gaussian
    std::vector<double> embeddings;     // embed_dim per Gaussian

    int size() const { return static_cast<int>(opacity_logits.size()); }
    int sh_count() const { return (sh_degree + 1) * (sh_degree + 1); }

    void resize(int n);
    // Throws NumericError naming the first offending Gaussian if any raw
    // parameter is non-finite; DataError on inconsistent array lengths.
    void validate() const;

    Vec3 position(int i) const { return Vec3(positions[3 * i], positions[3 * i + 1], positions[3 * i + 2]); }
    Vec4 rotation(int i) const {
        return Vec4(rotations[4 * i], rotations[4 * i + 1], rotations[4 * i + 2], rotations[4 * i + 3]);
    }
};

// Activated (ready-to-use) attribute arrays. Pure function of the raw cloud.
struct ActivatedCloud {
    int sh_degree = 1;
    std::vector<double> positions;  // copy of raw positions
    std::vector<double> scales;     // exp(log_scales)
    std::vector<double> rotations;  // unit quaternions
    std::vector<double> opacities;  // sigmoid(logits)
    std::vector<double> sh_coeffs;  // copy of raw coefficients

    int size() const { return static_cast<int>(opacities.size()); }
};

ActivatedCloud activated_view(const GaussianCloud& cloud);

// Sigma = R * diag(s) * diag(s) * R^T for scale s and quaternion q
// (normalized internally). Throws NumericError on a zero quaternion.
Mat3 build_covariance(const Vec3& scale, const Vec4& quat);

// Backward through Sigma = R diag(s)^2 R^T. `g_sigma` is the full-matrix
// gradient dL/dSigma; outputs are gradients on the activated scale and the
// unit quaternion.
void covariance_backward(const Vec3& scale, const Vec4& unit_quat, const Mat3& g_sigma,
                         Vec3* g_scale, Vec4* g_quat);

} // namespace frog
