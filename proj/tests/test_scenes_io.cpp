#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include "frog/errors.hpp"
#include "frog/image.hpp"
#include "frog/ply.hpp"
#include "frog/scene_io.hpp"

using namespace frog;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& tag) {
        path = fs::temp_directory_path() / ("frog_test_" + tag);
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

SyntheticSceneSpec tiny_spec() {
    SyntheticSceneSpec spec;
    spec.name = "tiny";
    spec.width = spec.height = 32;
    spec.frame_count = 4;
    spec.seed = 5;
    spec.rig.count = 3;
    spec.rig.ring_radius = 5.0;
    spec.rig.ring_height = 0.8;
    spec.rig.fov_deg = 40.0;
    spec.rig.test_indices = {2};
    spec.points_per_gaussian = 4;
    spec.init_jitter_sigma = 0.02;
    SyntheticPrimitive p;
    p.scale = Vec3(0.3, 0.3, 0.3);
    p.alpha = 0.9;
    p.rgb = Vec3(0.8, 0.3, 0.2);
    p.x.kind = AxisTrajectory::Kind::Sin;
    p.x.amp = 0.5;
    p.x.freq = 1.0;
    spec.primitives.push_back(p);
    SyntheticPrimitive q = p;
    q.rgb = Vec3(0.2, 0.6, 0.9);
    q.x = AxisTrajectory{};
    q.x.coeffs = {0.8};
    q.y.coeffs = {-0.4, 0.8}; // linear drift
    spec.primitives.push_back(q);
    return spec;
}

} // namespace

TEST_CASE("png roundtrip is lossless for quantized images") {
    TempDir dir("png");
    Image img(9, 7);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> u8(0, 255);
    for (double& v : img.data) v = u8(rng) / 255.0;
    const std::string path = (dir.path / "img.png").string();
    save_png(img, path);
    const Image back = load_png(path);
    REQUIRE(back.width == 9);
    REQUIRE(back.height == 7);
    CHECK(back.data == img.data);
}

TEST_CASE("raster dump roundtrip") {
    TempDir dir("raster");
    std::vector<double> plane = {1.0f, 2.5f, -3.25f, 0.0f, 100.0f, 0.125f};
    const std::string path = (dir.path / "map.raster").string();
    save_raster(plane, 3, 2, path);
    int w = 0, h = 0;
    const std::vector<double> back = load_raster(path, &w, &h);
    CHECK(w == 3);
    CHECK(h == 2);
    CHECK(back == plane);
}

TEST_CASE("points ply roundtrip") {
    TempDir dir("pts");
    std::vector<ColoredPoint> pts = {{0.5, -1.25, 3.0, 1.0, 0.0, 128.0 / 255.0},
                                     {7.5, 2.0, -0.5, 0.0, 1.0, 64.0 / 255.0}};
    const std::string path = (dir.path / "points.ply").string();
    write_points_ply(pts, path);
    const auto back = read_points_ply(path);
    REQUIRE(back.size() == 2);
    CHECK(back[0].x == 0.5);
    CHECK(back[1].z == -0.5);
    CHECK(back[0].b == doctest::Approx(128.0 / 255.0).epsilon(1e-12));
}

TEST_CASE("cloud ply roundtrip holds f32 precision and layout") {
    TempDir dir("cloud");
    GaussianCloud cloud;
    cloud.sh_degree = 2;
    cloud.embed_dim = 3;
    cloud.resize(5);
    std::mt19937_64 rng(8);
    std::normal_distribution<double> d(0.0, 1.0);
    for (double& v : cloud.positions) v = d(rng);
    for (double& v : cloud.log_scales) v = d(rng);
    for (double& v : cloud.rotations) v = d(rng);
    for (double& v : cloud.opacity_logits) v = d(rng);
    for (double& v : cloud.sh_coeffs) v = d(rng);
    for (double& v : cloud.embeddings) v = d(rng);

    const std::string path = (dir.path / "cloud.ply").string();
    write_cloud_ply(cloud, path);
    const GaussianCloud back = read_cloud_ply(path);
    REQUIRE(back.size() == 5);
    CHECK(back.sh_degree == 2);
    CHECK(back.embed_dim == 3);
    for (size_t i = 0; i < cloud.positions.size(); ++i) {
        CHECK(back.positions[i] == static_cast<double>(static_cast<float>(cloud.positions[i])));
    }
    for (size_t i = 0; i < cloud.sh_coeffs.size(); ++i) {
        CHECK(back.sh_coeffs[i] == static_cast<double>(static_cast<float>(cloud.sh_coeffs[i])));
    }
    for (size_t i = 0; i < cloud.embeddings.size(); ++i) {
        CHECK(back.embeddings[i] == static_cast<double>(static_cast<float>(cloud.embeddings[i])));
    }
}

TEST_CASE("synthetic generation: static trajectories give identical frames") {
    SyntheticSceneSpec spec = tiny_spec();
    spec.primitives[0].x = AxisTrajectory{}; // constants only
    spec.primitives[0].x.coeffs = {0.2};
    spec.primitives[1].y = AxisTrajectory{};
    spec.primitives[1].y.coeffs = {-0.3};
    const SceneDataset ds = generate_synthetic(spec);
    // Compare frames of camera 0 across times.
    const Frame* first = nullptr;
    for (const Frame& f : ds.frames) {
        if (f.image_path.find("cam00") == std::string::npos) continue;
        if (!first) {
            first = &f;
            continue;
        }
        CHECK(f.image.data == first->image.data);
    }
}

TEST_CASE("synthetic generation: bitwise reproducible, orthonormal cameras") {
    const SyntheticSceneSpec spec = tiny_spec();
    const SceneDataset a = generate_synthetic(spec);
    const SceneDataset b = generate_synthetic(spec);
    REQUIRE(a.frames.size() == b.frames.size());
    for (size_t i = 0; i < a.frames.size(); ++i) {
        CHECK(a.frames[i].image.data == b.frames[i].image.data);
    }
    REQUIRE(a.init_points.size() == b.init_points.size());
    for (size_t i = 0; i < a.init_points.size(); ++i) {
        CHECK(a.init_points[i].x == b.init_points[i].x);
    }
    for (const Frame& f : a.frames) {
        const Mat3 r = f.camera.rotation_c2w();
        CHECK((r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff() < 1e-12);
    }
}

TEST_CASE("synthetic generation: linear trajectory moves linearly in pixels") {
    // Fronto-parallel setup: camera on the axis, motion parallel to the image
    // plane, so pixel position is an affine function of time.
    SyntheticSceneSpec spec = tiny_spec();
    spec.rig.count = 1;
    spec.rig.test_indices.clear();
    spec.frame_count = 3;
    spec.primitives.resize(1);
    spec.primitives[0].x = AxisTrajectory{};
    spec.primitives[0].x.coeffs = {-0.5, 1.0}; // x = -0.5 + t
    spec.primitives[0].y = AxisTrajectory{};
    spec.primitives[0].z = AxisTrajectory{};

    const SceneDataset ds = generate_synthetic(spec);
    const Camera& cam = ds.frames[0].camera;
    std::vector<double> us;
    for (double t : {0.0, 0.5, 1.0}) {
        const Vec3 p = spec.primitives[0].position(t);
        const Vec3 c = cam.world_to_cam(p);
        us.push_back(cam.fx * c[0] / c[2] + cam.cx);
    }
    CHECK(us[1] - us[0] == doctest::Approx(us[2] - us[1]).epsilon(1e-9));
}

TEST_CASE("synthetic generation: full decimation empties the masked region") {
    SyntheticSceneSpec spec = tiny_spec();
    DecimateRegion r;
    // Box around the second primitive's start position (0.8, -0.4, 0).
    r.lo = Vec3(0.5, -0.8, -0.5);
    r.hi = Vec3(1.1, 0.0, 0.5);
    r.fraction = 1.0;
    spec.decimate_regions.push_back(r);
    const SceneDataset ds = generate_synthetic(spec);
    for (const ColoredPoint& p : ds.init_points) {
        const bool inside = p.x >= r.lo[0] && p.x <= r.hi[0] && p.y >= r.lo[1] && p.y <= r.hi[1] &&
                            p.z >= r.lo[2] && p.z <= r.hi[2];
        CHECK_FALSE(inside);
    }
    CHECK(ds.init_points.size() < 8); // the other primitive's points survive
    CHECK(!ds.init_points.empty());
}

TEST_CASE("synthetic generation: primitive leaving all frusta is an error") {
    SyntheticSceneSpec spec = tiny_spec();
    spec.primitives[0].y = AxisTrajectory{};
    spec.primitives[0].y.coeffs = {0.0, 100.0}; // flies away
    CHECK_THROWS_AS(generate_synthetic(spec), DataError);
}

TEST_CASE("dataset save/load roundtrip: poses survive to 1e-9, images exactly") {
    TempDir dir("roundtrip");
    const SceneDataset ds = generate_synthetic(tiny_spec());
    save_dataset(ds, dir.path.string());
    const SceneDataset back = load_dataset(dir.path.string());
    REQUIRE(back.frames.size() == ds.frames.size());
    for (size_t i = 0; i < ds.frames.size(); ++i) {
        const Mat4 diff = back.frames[i].camera.camera_to_world - ds.frames[i].camera.camera_to_world;
        CHECK(diff.cwiseAbs().maxCoeff() < 1e-9);
        CHECK(back.frames[i].time == ds.frames[i].time);
        CHECK(back.frames[i].is_test == ds.frames[i].is_test);
        CHECK(back.frames[i].image.data == ds.frames[i].image.data);
    }
    REQUIRE(back.init_points.size() == ds.init_points.size());
    for (size_t i = 0; i < ds.init_points.size(); ++i) {
        CHECK(back.init_points[i].x ==
              doctest::Approx(ds.init_points[i].x).epsilon(1e-6)); // f32 storage
    }
}

TEST_CASE("load_dataset: minimal manifest and validation errors") {
    TempDir dir("manifest");
    // Two frames sharing intrinsics, one test split.
    Image img(8, 8);
    save_png(img, (dir.path / "f0.png").string());
    save_png(img, (dir.path / "f1.png").string());
    std::vector<ColoredPoint> pts = {{0, 0, 1, 0.5, 0.5, 0.5}};
    write_points_ply(pts, (dir.path / "points.ply").string());

    auto manifest = [&](double t1) {
        std::ofstream out(dir.path / "manifest.json");
        out << R"({"format":"frog-manifest","version":1,
  "intrinsics":{"fx":10,"fy":10,"cx":4,"cy":4,"width":8,"height":8},
  "init_points":"points.ply",
  "frames":[
    {"image":"f0.png","time":0.0,"split":"train",
     "camera_to_world":[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]},
    {"image":"f1.png","time":)"
            << t1 << R"(,"split":"test",
     "camera_to_world":[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}
  ]})";
    };

    manifest(1.0);
    const SceneDataset ds = load_dataset(dir.path.string());
    CHECK(ds.frames.size() == 2);
    CHECK(ds.frames[0].time == 0.0);
    CHECK(ds.frames[1].time == 1.0);
    CHECK(ds.train_indices() == std::vector<int>{0});
    CHECK(ds.test_indices() == std::vector<int>{1});
    CHECK(ds.init_points.size() == 1);

    // Out-of-range time is rejected with a message naming the problem.
    manifest(1.5);
    try {
        load_dataset(dir.path.string());
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("time out of range") != std::string::npos);
    }
}

TEST_CASE("load_dataset: missing image and skewed rotation are rejected") {
    TempDir dir("badmanifest");
    Image img(4, 4);
    save_png(img, (dir.path / "ok.png").string());
    {
        std::ofstream out(dir.path / "manifest.json");
        out << R"({"format":"frog-manifest","version":1,"frames":[
   {"image":"missing.png","time":0,"split":"train","fx":5,"fy":5,"cx":2,"cy":2,
    "width":4,"height":4,
    "camera_to_world":[1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}]})";
    }
    CHECK_THROWS_AS(load_dataset(dir.path.string()), DataError);
    {
        std::ofstream out(dir.path / "manifest.json");
        out << R"({"format":"frog-manifest","version":1,"frames":[
   {"image":"ok.png","time":0,"split":"train","fx":5,"fy":5,"cx":2,"cy":2,
    "width":4,"height":4,
    "camera_to_world":[1,0.5,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}]})";
    }
    CHECK_THROWS_AS(load_dataset(dir.path.string()), DataError);
}

TEST_CASE("scene spec json parsing") {
    TempDir dir("spec");
    {
        std::ofstream out(dir.path / "scene.json");
        out << R"({"name":"demo","resolution":[16,18],"frames":5,"seed":3,
  "cameras":{"count":2,"ring_radius":4.0,"ring_height":0.5,"fov_deg":50,
             "look_at":[0,0.1,0],"test_indices":[1]},
  "points_per_gaussian":6,"init_jitter_sigma":0.01,
  "primitives":[
    {"scale":[0.2,0.2,0.2],"alpha":0.8,"rgb":[0.9,0.5,0.1],
     "trajectory":{"x":{"type":"sin","amp":0.4,"freq":1.5,"phase":0.25},
                   "y":{"type":"poly","coeffs":[0.1,-0.2]}}}]})";
    }
    const SyntheticSceneSpec spec = load_scene_spec((dir.path / "scene.json").string());
    CHECK(spec.width == 16);
    CHECK(spec.height == 18);
    CHECK(spec.frame_count == 5);
    CHECK(spec.rig.count == 2);
    CHECK(spec.rig.test_indices == std::vector<int>{1});
    REQUIRE(spec.primitives.size() == 1);
    CHECK(spec.primitives[0].x.kind == AxisTrajectory::Kind::Sin);
    CHECK(spec.primitives[0].x.amp == 0.4);
    CHECK(spec.primitives[0].y.coeffs == std::vector<double>{0.1, -0.2});
    // sin eval: offset + amp sin(2 pi (f t + phase))
    CHECK(spec.primitives[0].x.eval(0.0) ==
          doctest::Approx(0.4 * std::sin(2.0 * M_PI * 0.25)).epsilon(1e-12));
}
