#include "frog/camera.hpp"

#include <cmath>

#include "frog/errors.hpp"

namespace frog {

void Camera::validate(double rot_tol) const {
    if (width <= 0 || height <= 0) {
        throw DataError("camera: non-positive image dimensions");
    }
    if (!(fx > 0.0) || !(fy > 0.0)) {
        throw DataError("camera: focal lengths must be positive");
    }
    if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) {
        throw DataError("camera: principal point outside image");
    }
    const Mat3 r = rotation_c2w();
    const double err = (r * r.transpose() - Mat3::Identity()).cwiseAbs().maxCoeff();
    if (!(err <= rot_tol) || !(std::abs(r.determinant() - 1.0) <= 10.0 * rot_tol)) {
        throw DataError("camera: rotation block not orthonormal");
    }
    for (int i = 0; i < 4; ++i) {
        for (int j = 0; j < 4; ++j) {
            if (!std::isfinite(camera_to_world(i, j))) {
                throw DataError("camera: non-finite pose entry");
            }
        }
    }
}

Camera Camera::look_at(const Vec3& eye, const Vec3& target, const Vec3& world_up, double fx,
                       double fy, double cx, double cy, int width, int height) {
    Vec3 forward = target - eye;
    if (forward.norm() < 1e-12) {
        throw DataError("camera look_at: eye coincides with target");
    }
    forward.normalize();
    Vec3 right = forward.cross(world_up);
    if (right.norm() < 1e-9) {
        // Forward parallel to up; pick any orthogonal axis.
        right = forward.cross(Vec3(1.0, 0.0, 0.0));
        if (right.norm() < 1e-9) right = forward.cross(Vec3(0.0, 0.0, 1.0));
    }
    right.normalize();
    const Vec3 down = forward.cross(right); // unit, makes (right, down, forward) right-handed

    Camera cam;
    cam.camera_to_world = Mat4::Identity();
    cam.camera_to_world.block<3, 1>(0, 0) = right;
    cam.camera_to_world.block<3, 1>(0, 1) = down;
    cam.camera_to_world.block<3, 1>(0, 2) = forward;
    cam.camera_to_world.block<3, 1>(0, 3) = eye;
    cam.fx = fx;
    cam.fy = fy;
    cam.cx = cx;
    cam.cy = cy;
    cam.width = width;
    cam.height = height;
    return cam;
}

} // namespace frog
