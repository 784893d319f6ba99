#pragma once

#include <Eigen/Dense>
#include <cmath>

namespace frog {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec4 = Eigen::Vector4d;
using Mat2 = Eigen::Matrix2d;
using Mat3 = Eigen::Matrix3d;
using Mat4 = Eigen::Matrix4d;
using VecX = Eigen::VectorXd;

inline double sigmoid(double x) {
    if (x >= 0.0) {
        return 1.0 / (1.0 + std::exp(-x));
    }
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline double sigmoid_derivative(double x) {
    double s = sigmoid(x);
    return s * (1.0 - s);
}

// Inverse sigmoid; y must lie strictly inside (0,1).
inline double logit(double y) {
    return std::log(y) - std::log1p(-y);
}

// Rotation matrix of a unit quaternion (w, x, y, z).
inline Mat3 quat_to_rotation(const Vec4& q) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 r;
    r << 1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - w * z), 2.0 * (x * z + w * y),
         2.0 * (x * y + w * z), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - w * x),
         2.0 * (x * z - w * y), 2.0 * (y * z + w * x), 1.0 - 2.0 * (x * x + y * y);
    return r;
}

// Chain dL/dR back to the unit quaternion entries.
inline Vec4 quat_rotation_backward(const Vec4& q, const Mat3& g) {
    const double w = q[0], x = q[1], y = q[2], z = q[3];
    Mat3 dw, dx, dy, dz;
    dw << 0, -z, y,
          z, 0, -x,
          -y, x, 0;
    dx << 0, y, z,
          y, -2.0 * x, -w,
          z, w, -2.0 * x;
    dy << -2.0 * y, x, w,
          x, 0, z,
          -w, z, -2.0 * y;
    dz << -2.0 * z, -w, x,
          w, -2.0 * z, y,
          x, y, 0;
    Vec4 out;
    out[0] = 2.0 * (g.array() * dw.array()).sum();
    out[1] = 2.0 * (g.array() * dx.array()).sum();
    out[2] = 2.0 * (g.array() * dy.array()).sum();
    out[3] = 2.0 * (g.array() * dz.array()).sum();
    return out;
}

// Gradient through u -> u/|u|, given the unit vector and dL/dunit.
template <typename V>
inline V normalize_backward(const V& unit, double norm, const V& g_unit) {
    return (g_unit - unit * unit.dot(g_unit)) / norm;
}

} // namespace frog
