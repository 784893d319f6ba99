#include "frog/sh.hpp"

#include <algorithm>
#include <cassert>

namespace frog {

namespace {

constexpr double kC1 = 0.4886025119029199;
constexpr double kC2[5] = {1.0925484305920792, -1.0925484305920792, 0.31539156525252005,
                           -1.0925484305920792, 0.5462742152960396};
constexpr double kC3[7] = {-0.5900435899266435, 2.890611442640554,  -0.4570457994644658,
                           0.3731763325901154,  -0.4570457994644658, 1.445305721320277,
                           -0.5900435899266435};

} // namespace

void eval_sh_basis(int degree, const Vec3& dir, double* basis) {
    assert(degree >= 0 && degree <= kMaxShDegree);
    const double x = dir[0], y = dir[1], z = dir[2];
    basis[0] = kSh0;
    if (degree < 1) return;
    basis[1] = -kC1 * y;
    basis[2] = kC1 * z;
    basis[3] = -kC1 * x;
    if (degree < 2) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    basis[4] = kC2[0] * x * y;
    basis[5] = kC2[1] * y * z;
    basis[6] = kC2[2] * (2.0 * zz - xx - yy);
    basis[7] = kC2[3] * x * z;
    basis[8] = kC2[4] * (xx - yy);
    if (degree < 3) return;
    basis[9] = kC3[0] * y * (3.0 * xx - yy);
    basis[10] = kC3[1] * x * y * z;
    basis[11] = kC3[2] * y * (4.0 * zz - xx - yy);
    basis[12] = kC3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy);
    basis[13] = kC3[4] * x * (4.0 * zz - xx - yy);
    basis[14] = kC3[5] * z * (xx - yy);
    basis[15] = kC3[6] * x * (xx - 3.0 * yy);
}

void eval_sh_basis_grad(int degree, const Vec3& dir, double* basis, Vec3* dbasis) {
    eval_sh_basis(degree, dir, basis);
    const double x = dir[0], y = dir[1], z = dir[2];
    dbasis[0] = Vec3::Zero();
    if (degree < 1) return;
    dbasis[1] = Vec3(0.0, -kC1, 0.0);
    dbasis[2] = Vec3(0.0, 0.0, kC1);
    dbasis[3] = Vec3(-kC1, 0.0, 0.0);
    if (degree < 2) return;
    dbasis[4] = kC2[0] * Vec3(y, x, 0.0);
    dbasis[5] = kC2[1] * Vec3(0.0, z, y);
    dbasis[6] = kC2[2] * Vec3(-2.0 * x, -2.0 * y, 4.0 * z);
    dbasis[7] = kC2[3] * Vec3(z, 0.0, x);
    dbasis[8] = kC2[4] * Vec3(2.0 * x, -2.0 * y, 0.0);
    if (degree < 3) return;
    const double xx = x * x, yy = y * y, zz = z * z;
    dbasis[9] = kC3[0] * Vec3(6.0 * x * y, 3.0 * xx - 3.0 * yy, 0.0);
    dbasis[10] = kC3[1] * Vec3(y * z, x * z, x * y);
    dbasis[11] = kC3[2] * Vec3(-2.0 * x * y, 4.0 * zz - xx - 3.0 * yy, 8.0 * y * z);
    dbasis[12] = kC3[3] * Vec3(-6.0 * x * z, -6.0 * y * z, 6.0 * zz - 3.0 * xx - 3.0 * yy);
    dbasis[13] = kC3[4] * Vec3(4.0 * zz - 3.0 * xx - yy, -2.0 * x * y, 8.0 * x * z);
    dbasis[14] = kC3[5] * Vec3(2.0 * x * z, -2.0 * y * z, xx - yy);
    dbasis[15] = kC3[6] * Vec3(3.0 * xx - 3.0 * yy, -6.0 * x * y, 0.0);
}

Vec3 eval_sh_color(const double* coeffs, int degree, const Vec3& dir) {
    double basis[16];
    eval_sh_basis(degree, dir, basis);
    const int count = sh_coeff_count(degree);
    Vec3 out(0.5, 0.5, 0.5);
    for (int b = 0; b < count; ++b) {
        for (int c = 0; c < 3; ++c) {
            out[c] += basis[b] * coeffs[3 * b + c];
        }
    }
    return out.cwiseMax(0.0);
}

} // namespace frog
