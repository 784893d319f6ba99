#pragma once

#include "frog/geometry.hpp"

namespace frog {

// Pinhole camera, OpenCV axes: +x right, +y down, +z forward.
struct Camera {
    Mat4 camera_to_world = Mat4::Identity();
    double fx = 1.0, fy = 1.0;
    double cx = 0.0, cy = 0.0;
    int width = 0, height = 0;

    Vec3 center() const { return camera_to_world.block<3, 1>(0, 3); }
    Mat3 rotation_c2w() const { return camera_to_world.block<3, 3>(0, 0); }
    // World-to-camera rotation and translation: x_cam = R x_world + t.
    Mat3 rotation_w2c() const { return rotation_c2w().transpose(); }
    Vec3 translation_w2c() const { return -rotation_w2c() * center(); }

    Vec3 world_to_cam(const Vec3& p) const { return rotation_w2c() * (p - center()); }

    // World-space unit ray through the center of pixel (u, v).
    Vec3 pixel_ray(double u, double v) const {
        Vec3 d((u + 0.5 - cx) / fx, (v + 0.5 - cy) / fy, 1.0);
        return (rotation_c2w() * d).normalized();
    }

    // Throws DataError if intrinsics are invalid or the rotation block is not
    // orthonormal within `rot_tol`.
    void validate(double rot_tol = 1e-6) const;

    // Build a camera at `eye` looking toward `target`, y axis pointing down.
    static Camera look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up, double fx,
                          double fy, double cx, double cy, int width, int height);
};

} // namespace frog
