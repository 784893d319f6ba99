#pragma once

#include <string>
#include <vector>

#include "frog/gaussian_cloud.hpp"

namespace frog {

// Checkpoint layout, binary little-endian float32:
//   x y z, opacity (logit), scale_0..2 (log), rot_0..3,
//   f_dc_0..2, f_rest_* (channel-major, present when degree > 0),
//   embed_0..D_e-1.
void write_cloud_ply(const GaussianCloud& cloud, const std::string& path);
GaussianCloud read_cloud_ply(const std::string& path);

struct ColoredPoint {
    double x = 0.0, y = 0.0, z = 0.0;
    double r = 0.0, g = 0.0, b = 0.0; // [0,1]
};

// Initialization point clouds: x y z float32 plus red green blue uchar.
void write_points_ply(const std::vector<ColoredPoint>& points, const std::string& path);
std::vector<ColoredPoint> read_points_ply(const std::string& path);

} // namespace frog
