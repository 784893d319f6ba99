#pragma once

#include <string>
#include <vector>

#include "frog/camera.hpp"
#include "frog/image.hpp"
#include "frog/ply.hpp"

namespace frog {

struct Frame {
    std::string image_path; // relative to the manifest directory
    Image image;
    Camera camera;
    double time = 0.0;
    bool is_test = false;
};

struct SceneDataset {
    std::vector<Frame> frames;
    std::vector<ColoredPoint> init_points;

    std::vector<int> train_indices() const;
    std::vector<int> test_indices() const;
    void validate() const; // at least one train frame, times in range
};

// Manifest format "frog-manifest" v1: shared or per-frame pinhole intrinsics,
// row-major camera_to_world, normalized time, train/test split tag, plus an
// initialization point cloud PLY. `path` may be the manifest file or a
// directory containing manifest.json.
SceneDataset load_dataset(const std::string& path);
void save_dataset(const SceneDataset& dataset, const std::string& dir);

// Analytic per-axis trajectory: polynomial in t or a sine.
struct AxisTrajectory {
    enum class Kind { Poly, Sin } kind = Kind::Poly;
    std::vector<double> coeffs = {0.0};                        // poly
    double amp = 0.0, freq = 1.0, phase = 0.0, offset = 0.0;   // sin

    double eval(double t) const;
};

struct SyntheticPrimitive {
    Vec3 scale = Vec3(0.3, 0.3, 0.3);
    Vec4 rotation = Vec4(1.0, 0.0, 0.0, 0.0);
    double alpha = 0.9;
    Vec3 rgb = Vec3(0.8, 0.8, 0.8);
    AxisTrajectory x, y, z;

    Vec3 position(double t) const { return Vec3(x.eval(t), y.eval(t), z.eval(t)); }
};

struct DecimateRegion {
    Vec3 lo = Vec3::Zero(), hi = Vec3::Zero();
    double fraction = 0.0; // fraction of points removed inside the box
};

struct CameraRigSpec {
    int count = 8;
    double ring_radius = 6.0;
    double ring_height = 1.0;
    Vec3 look_at = Vec3::Zero();
    double fov_deg = 45.0; // horizontal
    std::vector<int> test_indices;
};

struct SyntheticSceneSpec {
    std::string name = "scene";
    int width = 64, height = 64;
    int frame_count = 60;
    std::uint64_t seed = 1;
    CameraRigSpec rig;
    int points_per_gaussian = 20;
    double init_jitter_sigma = 0.05;
    std::vector<DecimateRegion> decimate_regions;
    std::vector<SyntheticPrimitive> primitives;
};

SyntheticSceneSpec load_scene_spec(const std::string& path);

// Renders ground truth with the naive reference renderer and quantizes to
// 8-bit levels so saved and in-memory datasets train identically. Throws
// DataError when a primitive leaves every camera frustum.
SceneDataset generate_synthetic(const SyntheticSceneSpec& spec);

} // namespace frog
