#include "frog/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <limits>

#include <png.h>

#include "frog/errors.hpp"

namespace frog {

Image load_png(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open image: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(f);
        throw DataError("png reader allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(f);
        throw DataError("failed to decode png: " + path);
    }
    png_init_io(png, f);
    png_read_info(png, info);

    png_set_expand(png);
    png_set_strip_16(png);
    png_set_strip_alpha(png);
    png_set_gray_to_rgb(png);
    png_read_update_info(png, info);

    const int width = static_cast<int>(png_get_image_width(png, info));
    const int height = static_cast<int>(png_get_image_height(png, info));
    if (png_get_channels(png, info) != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(f);
        throw DataError("unexpected channel count in png: " + path);
    }
    std::vector<png_byte> row(static_cast<size_t>(width) * 3);
    Image img(width, height);
    for (int y = 0; y < height; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (int x = 0; x < width; ++x) {
            for (int c = 0; c < 3; ++c) {
                img.at(x, y, c) = row[3 * static_cast<size_t>(x) + c] / 255.0;
            }
        }
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(f);
    return img;
}

void save_png(const Image& img, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write image: " + path);
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_write_struct(&png, &info);
        std::fclose(f);
        throw DataError("png writer allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        std::fclose(f);
        throw DataError("failed to encode png: " + path);
    }
    png_init_io(png, f);
    png_set_IHDR(png, info, img.width, img.height, 8, PNG_COLOR_TYPE_RGB, PNG_INTERLACE_NONE,
                 PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    std::vector<png_byte> row(static_cast<size_t>(img.width) * 3);
    for (int y = 0; y < img.height; ++y) {
        for (int x = 0; x < img.width; ++x) {
            for (int c = 0; c < 3; ++c) {
                const double v = std::clamp(img.at(x, y, c), 0.0, 1.0);
                row[3 * static_cast<size_t>(x) + c] =
                    static_cast<png_byte>(std::lround(v * 255.0));
            }
        }
        png_write_row(png, row.data());
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    std::fclose(f);
}

void save_raster(const std::vector<double>& plane, int width, int height, const std::string& path) {
    if (plane.size() != static_cast<size_t>(width) * height) {
        throw DataError("raster dump: plane size mismatch");
    }
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("cannot write raster: " + path);
    const char magic[4] = {'F', 'R', 'G', 'R'};
    std::fwrite(magic, 1, 4, f);
    const std::uint8_t dtype = 0; // f32
    std::fwrite(&dtype, 1, 1, f);
    const std::uint32_t h = static_cast<std::uint32_t>(height);
    const std::uint32_t w = static_cast<std::uint32_t>(width);
    std::fwrite(&h, 4, 1, f);
    std::fwrite(&w, 4, 1, f);
    for (double v : plane) {
        const float fv = static_cast<float>(v);
        std::fwrite(&fv, 4, 1, f);
    }
    std::fclose(f);
}

std::vector<double> load_raster(const std::string& path, int* width, int* height) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("cannot open raster: " + path);
    char magic[4];
    std::uint8_t dtype = 0;
    std::uint32_t h = 0, w = 0;
    if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, "FRGR", 4) != 0 ||
        std::fread(&dtype, 1, 1, f) != 1 || dtype != 0 || std::fread(&h, 4, 1, f) != 1 ||
        std::fread(&w, 4, 1, f) != 1) {
        std::fclose(f);
        throw DataError("bad raster header: " + path);
    }
    std::vector<double> plane(static_cast<size_t>(h) * w);
    for (double& v : plane) {
        float fv = 0;
        if (std::fread(&fv, 4, 1, f) != 1) {
            std::fclose(f);
            throw DataError("truncated raster: " + path);
        }
        v = fv;
    }
    std::fclose(f);
    *width = static_cast<int>(w);
    *height = static_cast<int>(h);
    return plane;
}

Image visualize_map(const std::vector<double>& plane, int width, int height) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double v : plane) {
        if (std::isnan(v)) continue;
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi > lo ? hi - lo : 1.0;
    Image img(width, height);
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const double v = plane[static_cast<size_t>(y) * width + x];
            if (std::isnan(v)) {
                img.at(x, y, 0) = 1.0;
                img.at(x, y, 1) = 0.0;
                img.at(x, y, 2) = 1.0;
            } else {
                const double g = std::isfinite(lo) ? (v - lo) / span : 0.0;
                img.at(x, y, 0) = img.at(x, y, 1) = img.at(x, y, 2) = g;
            }
        }
    }
    return img;
}

} // namespace frog
