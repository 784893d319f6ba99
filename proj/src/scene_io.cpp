#include "frog/scene_io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>

#include <json.hpp>

#include "frog/errors.hpp"
#include "frog/rasterizer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace frog {

std::vector<int> SceneDataset::train_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < frames.size(); ++i) {
        if (!frames[i].is_test) out.push_back(static_cast<int>(i));
    }
    return out;
}

std::vector<int> SceneDataset::test_indices() const {
    std::vector<int> out;
    for (size_t i = 0; i < frames.size(); ++i) {
        if (frames[i].is_test) out.push_back(static_cast<int>(i));
    }
    return out;
}

void SceneDataset::validate() const {
    bool any_train = false;
    for (const Frame& f : frames) {
        if (f.time < 0.0 || f.time > 1.0) {
            throw DataError("frame " + f.image_path + ": time out of range");
        }
        if (f.image.width != f.camera.width || f.image.height != f.camera.height) {
            throw DataError("frame " + f.image_path + ": image does not match camera size");
        }
        any_train = any_train || !f.is_test;
    }
    if (!any_train) throw DataError("dataset has no training frames");
}

namespace {

Mat3 orthonormalized(const Mat3& r) {
    // Gram-Schmidt on the columns; input is already within tolerance.
    Vec3 c0 = r.col(0).normalized();
    Vec3 c1 = (r.col(1) - c0 * c0.dot(r.col(1))).normalized();
    Vec3 c2 = c0.cross(c1);
    Mat3 out;
    out << c0, c1, c2;
    return out;
}

Camera camera_from_json(const json& frame, const json* shared, const std::string& name) {
    auto field = [&](const char* key) -> double {
        if (frame.contains(key)) return frame.at(key).get<double>();
        if (shared && shared->contains(key)) return shared->at(key).get<double>();
        throw DataError("frame " + name + ": missing intrinsic " + key);
    };
    Camera cam;
    cam.fx = field("fx");
    cam.fy = field("fy");
    cam.cx = field("cx");
    cam.cy = field("cy");
    cam.width = static_cast<int>(field("width"));
    cam.height = static_cast<int>(field("height"));
    if (!frame.contains("camera_to_world")) {
        throw DataError("frame " + name + ": missing camera_to_world");
    }
    const auto& m = frame.at("camera_to_world");
    if (!m.is_array() || m.size() != 16) {
        throw DataError("frame " + name + ": camera_to_world must hold 16 numbers");
    }
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            cam.camera_to_world(r, c) = m.at(4 * r + c).get<double>();
        }
    }
    const Mat3 rot = cam.rotation_c2w();
    const double err = (rot * rot.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= 1e-3)) {
        throw DataError("frame " + name + ": camera rotation not orthonormal");
    }
    cam.camera_to_world.block<3, 3>(0, 0) = orthonormalized(rot);
    cam.validate();
    return cam;
}

} // namespace

SceneDataset load_dataset(const std::string& path) {
    fs::path manifest_path(path);
    if (fs::is_directory(manifest_path)) manifest_path /= "manifest.json";
    if (!fs::exists(manifest_path)) {
        throw DataError("manifest not found: " + manifest_path.string());
    }
    std::ifstream in(manifest_path);
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw DataError("manifest parse error: " + std::string(e.what()));
    }
    if (root.value("format", "") != "frog-manifest" || root.value("version", 0) != 1) {
        throw DataError("manifest: expected frog-manifest v1");
    }
    const fs::path base = manifest_path.parent_path();
    SceneDataset ds;
    const json* shared = root.contains("intrinsics") ? &root.at("intrinsics") : nullptr;
    if (!root.contains("frames") || !root.at("frames").is_array()) {
        throw DataError("manifest: missing frames array");
    }
    for (const auto& jf : root.at("frames")) {
        Frame f;
        f.image_path = jf.value("image", "");
        if (f.image_path.empty()) throw DataError("manifest: frame without an image path");
        const fs::path img = base / f.image_path;
        if (!fs::exists(img)) {
            throw DataError("frame " + f.image_path + ": image file missing");
        }
        f.time = jf.value("time", -1.0);
        if (f.time < 0.0 || f.time > 1.0) {
            throw DataError("frame " + f.image_path + ": time out of range");
        }
        const std::string split = jf.value("split", "train");
        if (split != "train" && split != "test") {
            throw DataError("frame " + f.image_path + ": unknown split tag " + split);
        }
        f.is_test = split == "test";
        f.camera = camera_from_json(jf, shared, f.image_path);
        f.image = load_png(img.string());
        ds.frames.push_back(std::move(f));
    }
    if (root.contains("init_points")) {
        const fs::path pts = base / root.at("init_points").get<std::string>();
        if (!fs::exists(pts)) throw DataError("init point cloud missing: " + pts.string());
        ds.init_points = read_points_ply(pts.string());
    }
    ds.validate();
    return ds;
}

void save_dataset(const SceneDataset& dataset, const std::string& dir) {
    fs::create_directories(fs::path(dir) / "images");
    json root;
    root["format"] = "frog-manifest";
    root["version"] = 1;
    root["init_points"] = "points.ply";
    json frames = json::array();
    int counter = 0;
    for (const Frame& f : dataset.frames) {
        json jf;
        std::string rel = f.image_path.empty()
                              ? "images/frame_" + std::to_string(counter) + ".png"
                              : f.image_path;
        jf["image"] = rel;
        jf["time"] = f.time;
        jf["split"] = f.is_test ? "test" : "train";
        jf["fx"] = f.camera.fx;
        jf["fy"] = f.camera.fy;
        jf["cx"] = f.camera.cx;
        jf["cy"] = f.camera.cy;
        jf["width"] = f.camera.width;
        jf["height"] = f.camera.height;
        json m = json::array();
        for (int r = 0; r < 4; ++r) {
            for (int c = 0; c < 4; ++c) m.push_back(f.camera.camera_to_world(r, c));
        }
        jf["camera_to_world"] = m;
        frames.push_back(jf);
        save_png(f.image, (fs::path(dir) / rel).string());
        ++counter;
    }
    root["frames"] = frames;
    write_points_ply(dataset.init_points, (fs::path(dir) / "points.ply").string());
    std::ofstream out(fs::path(dir) / "manifest.json");
    out << root.dump(1) << "\n";
}

double AxisTrajectory::eval(double t) const {
    if (kind == Kind::Poly) {
        double acc = 0.0, p = 1.0;
        for (double c : coeffs) {
            acc += c * p;
            p *= t;
        }
        return acc;
    }
    return offset + amp * std::sin(2.0 * M_PI * (freq * t + phase));
}

namespace {

AxisTrajectory trajectory_from_json(const json& j) {
    AxisTrajectory tr;
    const std::string type = j.value("type", "poly");
    if (type == "poly") {
        tr.kind = AxisTrajectory::Kind::Poly;
        tr.coeffs = j.value("coeffs", std::vector<double>{0.0});
    } else if (type == "sin") {
        tr.kind = AxisTrajectory::Kind::Sin;
        tr.amp = j.value("amp", 0.0);
        tr.freq = j.value("freq", 1.0);
        tr.phase = j.value("phase", 0.0);
        tr.offset = j.value("offset", 0.0);
    } else {
        throw DataError("scene spec: unknown trajectory type " + type);
    }
    return tr;
}

Vec3 vec3_from_json(const json& j) {
    if (!j.is_array() || j.size() != 3) throw DataError("scene spec: expected a 3-vector");
    return Vec3(j.at(0).get<double>(), j.at(1).get<double>(), j.at(2).get<double>());
}

} // namespace

SyntheticSceneSpec load_scene_spec(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("scene spec not found: " + path);
    json root;
    try {
        in >> root;
    } catch (const json::exception& e) {
        throw DataError("scene spec parse error: " + std::string(e.what()));
    }
    SyntheticSceneSpec spec;
    spec.name = root.value("name", "scene");
    if (root.contains("resolution")) {
        spec.width = root.at("resolution").at(0).get<int>();
        spec.height = root.at("resolution").at(1).get<int>();
    }
    spec.frame_count = root.value("frames", 60);
    spec.seed = root.value("seed", 1ULL);
    spec.points_per_gaussian = root.value("points_per_gaussian", 20);
    spec.init_jitter_sigma = root.value("init_jitter_sigma", 0.05);
    if (root.contains("cameras")) {
        const auto& jc = root.at("cameras");
        spec.rig.count = jc.value("count", 8);
        spec.rig.ring_radius = jc.value("ring_radius", 6.0);
        spec.rig.ring_height = jc.value("ring_height", 1.0);
        spec.rig.fov_deg = jc.value("fov_deg", 45.0);
        if (jc.contains("look_at")) spec.rig.look_at = vec3_from_json(jc.at("look_at"));
        spec.rig.test_indices = jc.value("test_indices", std::vector<int>{});
    }
    if (root.contains("decimate_regions")) {
        for (const auto& jr : root.at("decimate_regions")) {
            DecimateRegion r;
            r.lo = vec3_from_json(jr.at("min"));
            r.hi = vec3_from_json(jr.at("max"));
            r.fraction = jr.value("fraction", 0.0);
            spec.decimate_regions.push_back(r);
        }
    }
    if (!root.contains("primitives") || root.at("primitives").empty()) {
        throw DataError("scene spec: no primitives");
    }
    for (const auto& jp : root.at("primitives")) {
        SyntheticPrimitive p;
        if (jp.contains("scale")) p.scale = vec3_from_json(jp.at("scale"));
        if (jp.contains("rotation")) {
            const auto& q = jp.at("rotation");
            p.rotation = Vec4(q.at(0).get<double>(), q.at(1).get<double>(), q.at(2).get<double>(),
                              q.at(3).get<double>());
        }
        p.alpha = jp.value("alpha", 0.9);
        if (jp.contains("rgb")) p.rgb = vec3_from_json(jp.at("rgb"));
        if (jp.contains("trajectory")) {
            const auto& jt = jp.at("trajectory");
            if (jt.contains("x")) p.x = trajectory_from_json(jt.at("x"));
            if (jt.contains("y")) p.y = trajectory_from_json(jt.at("y"));
            if (jt.contains("z")) p.z = trajectory_from_json(jt.at("z"));
        }
        spec.primitives.push_back(p);
    }
    return spec;
}

SceneDataset generate_synthetic(const SyntheticSceneSpec& spec) {
    if (spec.rig.count < 1) throw DataError("scene spec: need at least one camera");
    if (spec.frame_count < 1) throw DataError("scene spec: need at least one frame");
    std::vector<Camera> cams;
    const double fov = spec.rig.fov_deg * M_PI / 180.0;
    const double fx = (spec.width / 2.0) / std::tan(fov / 2.0);
    for (int c = 0; c < spec.rig.count; ++c) {
        const double angle = 2.0 * M_PI * c / spec.rig.count;
        const Vec3 eye = spec.rig.look_at + Vec3(spec.rig.ring_radius * std::cos(angle),
                                                 spec.rig.ring_height,
                                                 spec.rig.ring_radius * std::sin(angle));
        cams.push_back(Camera::look_at(eye, spec.rig.look_at, Vec3(0, 1, 0), fx, fx,
                                       spec.width / 2.0, spec.height / 2.0, spec.width,
                                       spec.height));
    }

    SceneDataset ds;
    for (int f = 0; f < spec.frame_count; ++f) {
        const double t = spec.frame_count > 1 ? static_cast<double>(f) / (spec.frame_count - 1) : 0.0;

        // Every primitive must stay visible from at least one camera.
        for (size_t pi = 0; pi < spec.primitives.size(); ++pi) {
            const Vec3 mu = spec.primitives[pi].position(t);
            bool visible = false;
            for (const Camera& cam : cams) {
                const Vec3 p = cam.world_to_cam(mu);
                if (p[2] <= kNearPlane) continue;
                const double u = cam.fx * p[0] / p[2] + cam.cx;
                const double v = cam.fy * p[1] / p[2] + cam.cy;
                if (u >= 0.0 && u < cam.width && v >= 0.0 && v < cam.height) {
                    visible = true;
                    break;
                }
            }
            if (!visible) {
                throw DataError("scene spec: primitive " + std::to_string(pi) +
                                " leaves all frusta at frame " + std::to_string(f));
            }
        }

        for (int c = 0; c < spec.rig.count; ++c) {
            std::vector<Splat2D> splats;
            for (size_t pi = 0; pi < spec.primitives.size(); ++pi) {
                const SyntheticPrimitive& prim = spec.primitives[pi];
                const Mat3 sigma = build_covariance(prim.scale, prim.rotation);
                auto geom = project(prim.position(t), sigma, cams[c]);
                if (!geom) continue;
                Splat2D s;
                s.mx = geom->mean2d[0];
                s.my = geom->mean2d[1];
                s.cxx = geom->cxx;
                s.cxy = geom->cxy;
                s.cyy = geom->cyy;
                s.depth_z = geom->depth_z;
                s.depth_eucl = geom->depth_eucl;
                s.alpha = prim.alpha;
                s.r = prim.rgb[0];
                s.g = prim.rgb[1];
                s.b = prim.rgb[2];
                s.index = static_cast<int>(pi);
                if (s.finalize()) splats.push_back(s);
            }
            std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
                if (a.depth_z != b.depth_z) return a.depth_z < b.depth_z;
                return a.index < b.index;
            });
            const std::vector<double> color = render_reference(splats, spec.width, spec.height);

            Frame frame;
            frame.camera = cams[c];
            frame.time = t;
            frame.is_test = std::find(spec.rig.test_indices.begin(), spec.rig.test_indices.end(),
                                      c) != spec.rig.test_indices.end();
            frame.image = Image(spec.width, spec.height);
            for (size_t i = 0; i < color.size(); ++i) {
                // Quantize to the 8-bit levels the PNG files will carry.
                const double v = std::clamp(color[i], 0.0, 1.0);
                frame.image.data[i] = std::lround(v * 255.0) / 255.0;
            }
            char buf[64];
            std::snprintf(buf, sizeof(buf), "images/cam%02d_f%04d.png", c, f);
            frame.image_path = buf;
            ds.frames.push_back(std::move(frame));
        }
    }

    // Initialization points: jittered samples around each primitive at t = 0.
    std::mt19937_64 rng(spec.seed);
    std::normal_distribution<double> jitter(0.0, spec.init_jitter_sigma);
    for (const SyntheticPrimitive& prim : spec.primitives) {
        const Vec3 mu = prim.position(0.0);
        for (int s = 0; s < spec.points_per_gaussian; ++s) {
            ColoredPoint p;
            p.x = mu[0] + jitter(rng);
            p.y = mu[1] + jitter(rng);
            p.z = mu[2] + jitter(rng);
            p.r = prim.rgb[0];
            p.g = prim.rgb[1];
            p.b = prim.rgb[2];
            ds.init_points.push_back(p);
        }
    }
    for (const DecimateRegion& region : spec.decimate_regions) {
        std::vector<int> inside;
        for (size_t i = 0; i < ds.init_points.size(); ++i) {
            const ColoredPoint& p = ds.init_points[i];
            if (p.x >= region.lo[0] && p.x <= region.hi[0] && p.y >= region.lo[1] &&
                p.y <= region.hi[1] && p.z >= region.lo[2] && p.z <= region.hi[2]) {
                inside.push_back(static_cast<int>(i));
            }
        }
        std::shuffle(inside.begin(), inside.end(), rng);
        const size_t remove = std::min(inside.size(),
                                       static_cast<size_t>(std::llround(region.fraction * inside.size())));
        std::vector<std::uint8_t> drop(ds.init_points.size(), 0);
        for (size_t i = 0; i < remove; ++i) drop[inside[i]] = 1;
        std::vector<ColoredPoint> kept;
        for (size_t i = 0; i < ds.init_points.size(); ++i) {
            if (!drop[i]) kept.push_back(ds.init_points[i]);
        }
        ds.init_points = std::move(kept);
    }
    ds.validate();
    return ds;
}

} // namespace frog
