#pragma once

#include <optional>
#include <vector>

#include "frog/camera.hpp"
#include "frog/deform_field.hpp"
#include "frog/geometry.hpp"

namespace frog {

inline constexpr int kTileSize = 16;
inline constexpr double kNearPlane = 0.01;
inline constexpr double kCovDilation = 0.3;
inline constexpr double kAlphaClamp = 0.99;
inline constexpr double kAlphaSkip = 1.0 / 255.0;
inline constexpr double kTransmittanceFloor = 1e-4;

// A projected Gaussian ready for compositing. Pixel (u, v) is sampled at its
// center (u + 0.5, v + 0.5).
struct Splat2D {
    double mx = 0.0, my = 0.0;            // projected mean, pixel coordinates
    double cxx = 1.0, cxy = 0.0, cyy = 1.0; // dilated 2D covariance
    double lxx = 0.0, lxy = 0.0, lyy = 0.0; // conic (inverse covariance)
    double rx = 0.0, ry = 0.0;            // support AABB half extents
    double depth_z = 0.0;                 // camera-frame z, the sort key
    double depth_eucl = 0.0;              // |mu - camera center|
    double r = 0.0, g = 0.0, b = 0.0;     // view-dependent color
    double alpha = 0.0;                   // deformed opacity
    int index = 0;                        // source Gaussian

    // Inverts the covariance and bounds the pixel support where the blended
    // alpha can reach 1/255. Returns false when the covariance is numerically
    // singular (det <= 1e-12) and the splat must be dropped.
    bool finalize();
};

struct ProjectedGeom {
    Vec2 mean2d;
    double cxx, cxy, cyy; // dilated
    double depth_z;
    double depth_eucl;
};

// EWA-style perspective projection of one Gaussian. Returns nullopt when the
// center lies behind the near plane (z <= 0.01).
std::optional<ProjectedGeom> project(const Vec3& mu, const Mat3& sigma, const Camera& cam);

struct ProjectResult {
    std::vector<Splat2D> splats; // sorted by (depth_z, index)
    int culled_near = 0;
    int skipped_degenerate = 0;
};

ProjectResult project_cloud(const DeformedCloud& cloud, const Camera& cam);

struct RenderOutput {
    int width = 0, height = 0;
    std::vector<double> color;        // H x W x 3
    std::vector<double> mean_depth;   // H x W, transmittance-weighted distance sum
    std::vector<double> median_depth; // H x W, NaN where transmittance never crosses 0.5
    std::vector<double> accum_alpha;  // H x W

    // Forward state kept for the backward pass.
    std::vector<double> final_t; // H x W
    std::vector<int> n_contrib;  // H x W, 1-based rank of last contributor in its tile list
    std::vector<int> tile_offsets;
    std::vector<int> tile_splats; // splat indices per tile, front-to-back
    int tiles_x = 0, tiles_y = 0;

    bool has_forward_state() const { return !final_t.empty(); }
};

// Tiled forward pass; parallel over tiles.
RenderOutput render(const std::vector<Splat2D>& splats, int width, int height);

// Per-pixel full-scan oracle with no tiling and no termination floor. Serial;
// kept as the reference implementation for equivalence tests. Returns the
// color image only.
std::vector<double> render_reference(const std::vector<Splat2D>& splats, int width, int height);

// Per-splat gradients of the compositing stage.
struct SplatGrads {
    std::vector<double> mean2d; // 2 per splat
    std::vector<double> conic;  // 3 per splat, full-matrix convention
    std::vector<double> color;  // 3 per splat
    std::vector<double> alpha;  // 1 per splat
};

// Backward over pixels. Recomputes per-tile compositing state from the
// forward output; throws DataError when the forward state is missing.
SplatGrads render_backward_splats(const std::vector<Splat2D>& splats, const RenderOutput& out,
                                  const std::vector<double>& g_color);

// Gradients on the deformed attribute arrays plus densification statistics.
struct DeformedGrads {
    std::vector<double> positions, scales, rotations, alphas, sh_coeffs;
    std::vector<double> screen_grad_norm; // per Gaussian, |dL/dmean2d|
    std::vector<std::uint8_t> visible;    // per Gaussian, produced a splat

    void init(const DeformedCloud& cloud);
};

// Chains per-splat 2D gradients through conic inversion, projection and SH
// color evaluation back to the deformed attributes.
DeformedGrads project_backward(const DeformedCloud& cloud, const Camera& cam,
                               const std::vector<Splat2D>& splats, const SplatGrads& sg);

} // namespace frog
