#include <doctest.h>

#include <cmath>
#include <random>

#include "frog/errors.hpp"
#include "frog/gaussian_cloud.hpp"
#include "frog/sh.hpp"

using namespace frog;

namespace {

// Independent rotation oracle: Rodrigues formula from axis-angle.
Mat3 rodrigues(const Vec3& axis, double angle) {
    const Vec3 k = axis.normalized();
    Mat3 kx;
    kx << 0, -k[2], k[1],
          k[2], 0, -k[0],
          -k[1], k[0], 0;
    return Mat3::Identity() + std::sin(angle) * kx + (1.0 - std::cos(angle)) * kx * kx;
}

Vec4 random_quat(std::mt19937_64& rng) {
    std::normal_distribution<double> n(0.0, 1.0);
    Vec4 q(n(rng), n(rng), n(rng), n(rng));
    while (q.norm() < 1e-3) q = Vec4(n(rng), n(rng), n(rng), n(rng));
    return q;
}

} // namespace

TEST_CASE("build_covariance: isotropic unit case") {
    const Mat3 s = build_covariance(Vec3(1, 1, 1), Vec4(1, 0, 0, 0));
    CHECK((s - Mat3::Identity()).cwiseAbs().maxCoeff() == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("build_covariance: axis-aligned squaring") {
    const Mat3 s = build_covariance(Vec3(2, 1, 1), Vec4(1, 0, 0, 0));
    Mat3 expect = Mat3::Zero();
    expect.diagonal() << 4.0, 1.0, 1.0;
    CHECK((s - expect).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("build_covariance: quarter turn about z against the Rodrigues oracle") {
    const double half = M_PI / 4.0; // quaternion half-angle for a 90 degree turn
    const Vec4 q(std::cos(half), 0.0, 0.0, std::sin(half));
    const Mat3 got = build_covariance(Vec3(2, 1, 1), q);

    const Mat3 r = rodrigues(Vec3(0, 0, 1), M_PI / 2.0);
    Mat3 d = Mat3::Zero();
    d.diagonal() << 4.0, 1.0, 1.0;
    const Mat3 expect = r * d * r.transpose();
    CHECK((got - expect).cwiseAbs().maxCoeff() < 1e-12);
    // The long axis lands on y.
    CHECK(got(1, 1) == doctest::Approx(4.0).epsilon(1e-12));
    CHECK(got(0, 0) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("build_covariance: zero quaternion is rejected") {
    CHECK_THROWS_AS(build_covariance(Vec3(1, 1, 1), Vec4(0, 0, 0, 0)), NumericError);
}

TEST_CASE("build_covariance: q and -q agree (double cover)") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Vec4 q = random_quat(rng);
        std::uniform_real_distribution<double> s(0.2, 3.0);
        const Vec3 scale(s(rng), s(rng), s(rng));
        const Mat3 a = build_covariance(scale, q);
        const Mat3 b = build_covariance(scale, -q);
        CHECK((a - b).cwiseAbs().maxCoeff() < 1e-9);
    }
}

TEST_CASE("build_covariance: eigenvalues are the squared scales") {
    std::mt19937_64 rng(17);
    std::uniform_real_distribution<double> s(0.2, 3.0);
    for (int trial = 0; trial < 50; ++trial) {
        Vec3 scale(s(rng), s(rng), s(rng));
        const Mat3 sigma = build_covariance(scale, random_quat(rng));
        Eigen::SelfAdjointEigenSolver<Mat3> eig(sigma);
        Vec3 expect = scale.cwiseProduct(scale);
        std::sort(expect.data(), expect.data() + 3);
        for (int i = 0; i < 3; ++i) {
            CHECK(eig.eigenvalues()[i] == doctest::Approx(expect[i]).epsilon(1e-6));
        }
    }
}

TEST_CASE("eval_sh_color: dc-only offset and clamp") {
    const double zero[3] = {0.0, 0.0, 0.0};
    const Vec3 c = eval_sh_color(zero, 0, Vec3(0, 0, 1));
    CHECK(c[0] == 0.5);
    CHECK(c[1] == 0.5);
    CHECK(c[2] == 0.5);

    // Inverting the band-0 constant reaches pure white.
    const double v = (1.0 - 0.5) / kSh0;
    const double dc[3] = {v, v, v};
    const Vec3 w = eval_sh_color(dc, 0, Vec3(1, 0, 0));
    for (int i = 0; i < 3; ++i) CHECK(w[i] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("eval_sh_color: degree 0 ignores the view direction exactly") {
    const double dc[3] = {0.3, -0.2, 0.9};
    const Vec3 a = eval_sh_color(dc, 0, Vec3(0, 0, 1));
    const Vec3 b = eval_sh_color(dc, 0, Vec3(1, 0, 0).normalized());
    const Vec3 c = eval_sh_color(dc, 0, Vec3(-0.3, 0.8, 0.52).normalized());
    CHECK(a == b);
    CHECK(a == c);
}

TEST_CASE("eval_sh_color: +z vs -z difference matches the band-1 constant") {
    // Only the z-linear basis function distinguishes the two poles; the
    // expected gap is 2 * sqrt(3/(4 pi)) * coeff per channel.
    double coeffs[12] = {};
    coeffs[3 * 2 + 0] = 0.4; // z coefficient, red channel
    coeffs[3 * 2 + 1] = -0.1;
    const Vec3 up = eval_sh_color(coeffs, 1, Vec3(0, 0, 1));
    const Vec3 down = eval_sh_color(coeffs, 1, Vec3(0, 0, -1));
    const double c1 = std::sqrt(3.0 / (4.0 * M_PI));
    CHECK(up[0] - down[0] == doctest::Approx(2.0 * c1 * 0.4).epsilon(1e-12));
    CHECK(std::abs(up[1] - down[1]) == doctest::Approx(2.0 * c1 * 0.1).epsilon(1e-12));
    CHECK(up[2] - down[2] == 0.0);
}

TEST_CASE("sh basis derivatives match finite differences") {
    std::mt19937_64 rng(3);
    std::normal_distribution<double> n(0.0, 1.0);
    for (int trial = 0; trial < 10; ++trial) {
        Vec3 dir(n(rng), n(rng), n(rng));
        dir.normalize();
        double basis[16];
        Vec3 grad[16];
        eval_sh_basis_grad(3, dir, basis, grad);
        const double h = 1e-6;
        for (int axis = 0; axis < 3; ++axis) {
            Vec3 dp = dir, dm = dir;
            dp[axis] += h;
            dm[axis] -= h;
            double bp[16], bm[16];
            // Derivatives are in ambient coordinates; do not renormalize.
            eval_sh_basis(3, dp, bp);
            eval_sh_basis(3, dm, bm);
            for (int b = 0; b < 16; ++b) {
                const double fd = (bp[b] - bm[b]) / (2.0 * h);
                CHECK(grad[b][axis] == doctest::Approx(fd).epsilon(1e-5));
            }
        }
    }
}

TEST_CASE("activated_view: activation conventions") {
    GaussianCloud cloud;
    cloud.sh_degree = 0;
    cloud.embed_dim = 2;
    cloud.resize(1);
    cloud.rotations[0] = 2.0; // (2,0,0,0) normalizes to identity
    cloud.opacity_logits[0] = 0.0;

    const ActivatedCloud act = activated_view(cloud);
    CHECK(act.opacities[0] == 0.5);
    CHECK(act.scales[0] == 1.0);
    CHECK(act.rotations[0] == 1.0);
    CHECK(act.rotations[1] == 0.0);

    // Deterministic, bitwise-identical on repeat.
    const ActivatedCloud again = activated_view(cloud);
    CHECK(act.scales == again.scales);
    CHECK(act.rotations == again.rotations);
    CHECK(act.opacities == again.opacities);
}

TEST_CASE("activated_view: non-finite parameter names the gaussian") {
    GaussianCloud cloud;
    cloud.sh_degree = 0;
    cloud.embed_dim = 1;
    cloud.resize(3);
    for (int i = 0; i < 3; ++i) cloud.rotations[4 * i] = 1.0;
    cloud.log_scales[3 * 2 + 1] = std::numeric_limits<double>::quiet_NaN();
    try {
        activated_view(cloud);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("2") != std::string::npos);
    }
}

TEST_CASE("quaternion normalization has unit norm within 1e-6") {
    std::mt19937_64 rng(5);
    GaussianCloud cloud;
    cloud.sh_degree = 0;
    cloud.embed_dim = 1;
    cloud.resize(20);
    std::normal_distribution<double> n(0.0, 2.0);
    for (int i = 0; i < 20; ++i) {
        for (int a = 0; a < 4; ++a) cloud.rotations[4 * i + a] = n(rng);
        if (cloud.rotation(i).norm() < 1e-3) cloud.rotations[4 * i] += 1.0;
    }
    const ActivatedCloud act = activated_view(cloud);
    for (int i = 0; i < 20; ++i) {
        const Vec4 q(act.rotations[4 * i], act.rotations[4 * i + 1], act.rotations[4 * i + 2],
                     act.rotations[4 * i + 3]);
        CHECK(std::abs(q.norm() - 1.0) < 1e-6);
    }
}
