#pragma once

#include <string>
#include <vector>

namespace frog {

// RGB image, values in [0,1], row-major H x W x 3.
struct Image {
    int width = 0, height = 0;
    std::vector<double> data;

    Image() = default;
    Image(int w, int h) : width(w), height(h), data(static_cast<size_t>(w) * h * 3, 0.0) {}

    double& at(int x, int y, int c) { return data[(static_cast<size_t>(y) * width + x) * 3 + c]; }
    double at(int x, int y, int c) const {
        return data[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    size_t pixel_count() const { return static_cast<size_t>(width) * height; }
};

// 8-bit PNG round trip. Values are clamped to [0,1] and quantized on save.
Image load_png(const std::string& path);
void save_png(const Image& img, const std::string& path);

// Scalar raster dump: magic "FRGR", u8 dtype (0 = f32), u32 height, u32 width,
// then f32 row-major, little-endian.
void save_raster(const std::vector<double>& plane, int width, int height, const std::string& path);
std::vector<double> load_raster(const std::string& path, int* width, int* height);

// Grayscale visualization of a scalar map; NaN pixels get a magenta sentinel.
Image visualize_map(const std::vector<double>& plane, int width, int height);

} // namespace frog
