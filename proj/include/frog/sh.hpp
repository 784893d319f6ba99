#pragma once

#include "frog/geometry.hpp"

namespace frog {

inline constexpr int kMaxShDegree = 3;
inline constexpr double kSh0 = 0.28209479177387814;

inline int sh_coeff_count(int degree) { return (degree + 1) * (degree + 1); }

// Real spherical-harmonic basis values for a unit direction, lowest band first.
// `basis` must hold sh_coeff_count(degree) entries.
void eval_sh_basis(int degree, const Vec3& dir, double* basis);

// Basis values plus their direction derivatives d basis[i] / d dir.
void eval_sh_basis_grad(int degree, const Vec3& dir, double* basis, Vec3* dbasis);

// Color from SH coefficients: basis . coeffs + 0.5, clamped at zero from below.
// Coefficients are coeff-major, 3 channels each.
Vec3 eval_sh_color(const double* coeffs, int degree, const Vec3& dir);

} // namespace frog
