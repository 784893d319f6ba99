#include "frog/ply.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <map>
#include <sstream>
#include <string>

#include "frog/errors.hpp"

namespace frog {

namespace {

enum class PlyType { F32, F64, U8 };

struct PlyProperty {
    std::string name;
    PlyType type;
};

struct PlyHeader {
    long long count = 0;
    std::vector<PlyProperty> props;
};

size_t type_size(PlyType t) {
    switch (t) {
    case PlyType::F32: return 4;
    case PlyType::F64: return 8;
    case PlyType::U8: return 1;
    }
    return 0;
}

PlyHeader read_header(std::FILE* f, const std::string& path) {
    PlyHeader h;
    char line[512];
    bool magic = false, fmt = false;
    while (std::fgets(line, sizeof(line), f)) {
        std::string s(line);
        while (!s.empty() && (s.back() == '\n' || s.back() == '\r')) s.pop_back();
        if (!magic) {
            if (s != "ply") throw DataError("not a ply file: " + path);
            magic = true;
            continue;
        }
        std::istringstream iss(s);
        std::string tok;
        iss >> tok;
        if (tok == "format") {
            std::string kind;
            iss >> kind;
            if (kind != "binary_little_endian") {
                throw DataError("ply: only binary_little_endian is supported: " + path);
            }
            fmt = true;
        } else if (tok == "element") {
            std::string name;
            iss >> name >> h.count;
            if (name != "vertex") throw DataError("ply: expected a vertex element: " + path);
        } else if (tok == "property") {
            std::string type, name;
            iss >> type >> name;
            PlyType t;
            if (type == "float" || type == "float32") {
                t = PlyType::F32;
            } else if (type == "double" || type == "float64") {
                t = PlyType::F64;
            } else if (type == "uchar" || type == "uint8") {
                t = PlyType::U8;
            } else {
                throw DataError("ply: unsupported property type " + type + " in " + path);
            }
            h.props.push_back({name, t});
        } else if (tok == "end_header") {
            if (!fmt) throw DataError("ply: missing format line: " + path);
            return h;
        }
        // comments and obj_info ignored
    }
    throw DataError("ply: truncated header: " + path);
}

struct RowReader {
    std::vector<PlyProperty> props;
    std::vector<unsigned char> buf;
    size_t row_size = 0;

    explicit RowReader(const PlyHeader& h) : props(h.props) {
        for (const auto& p : props) row_size += type_size(p.type);
        buf.resize(row_size);
    }

    void read_row(std::FILE* f, std::vector<double>& out) {
        if (std::fread(buf.data(), 1, row_size, f) != row_size) {
            throw DataError("ply: truncated body");
        }
        out.resize(props.size());
        size_t off = 0;
        for (size_t i = 0; i < props.size(); ++i) {
            switch (props[i].type) {
            case PlyType::F32: {
                float v;
                std::memcpy(&v, buf.data() + off, 4);
                out[i] = v;
                break;
            }
            case PlyType::F64: {
                double v;
                std::memcpy(&v, buf.data() + off, 8);
                out[i] = v;
                break;
            }
            case PlyType::U8: out[i] = buf[off] / 255.0; break;
            }
            off += type_size(props[i].type);
        }
    }
};

void write_f32(std::FILE* f, double v) {
    const float fv = static_cast<float>(v);
    std::fwrite(&fv, 4, 1, f);
}

} // namespace

void write_cloud_ply(const GaussianCloud& cloud, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("ply: cannot open for writing: " + path);
    const int n = cloud.size();
    const int sh = cloud.sh_count();
    std::string header = "ply\nformat binary_little_endian 1.0\nelement vertex " +
                         std::to_string(n) + "\n";
    auto prop = [&](const std::string& name) { header += "property float " + name + "\n"; };
    prop("x");
    prop("y");
    prop("z");
    prop("opacity");
    for (int i = 0; i < 3; ++i) prop("scale_" + std::to_string(i));
    for (int i = 0; i < 4; ++i) prop("rot_" + std::to_string(i));
    for (int i = 0; i < 3; ++i) prop("f_dc_" + std::to_string(i));
    for (int i = 0; i < 3 * (sh - 1); ++i) prop("f_rest_" + std::to_string(i));
    for (int i = 0; i < cloud.embed_dim; ++i) prop("embed_" + std::to_string(i));
    header += "end_header\n";
    std::fwrite(header.data(), 1, header.size(), f);

    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) write_f32(f, cloud.positions[3 * i + a]);
        write_f32(f, cloud.opacity_logits[i]);
        for (int a = 0; a < 3; ++a) write_f32(f, cloud.log_scales[3 * i + a]);
        for (int a = 0; a < 4; ++a) write_f32(f, cloud.rotations[4 * i + a]);
        const size_t base = 3 * static_cast<size_t>(sh) * i;
        for (int c = 0; c < 3; ++c) write_f32(f, cloud.sh_coeffs[base + c]);
        // Higher bands channel-major for tooling compatibility.
        for (int c = 0; c < 3; ++c) {
            for (int b = 1; b < sh; ++b) write_f32(f, cloud.sh_coeffs[base + 3 * b + c]);
        }
        for (int d = 0; d < cloud.embed_dim; ++d) {
            write_f32(f, cloud.embeddings[static_cast<size_t>(i) * cloud.embed_dim + d]);
        }
    }
    std::fclose(f);
}

GaussianCloud read_cloud_ply(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("ply: cannot open: " + path);
    GaussianCloud cloud;
    try {
        const PlyHeader h = read_header(f, path);
        std::map<std::string, int> index;
        for (size_t i = 0; i < h.props.size(); ++i) index[h.props[i].name] = static_cast<int>(i);
        auto need = [&](const std::string& name) {
            auto it = index.find(name);
            if (it == index.end()) throw DataError("ply: missing property " + name + " in " + path);
            return it->second;
        };
        int rest = 0;
        while (index.count("f_rest_" + std::to_string(rest))) ++rest;
        if (rest % 3 != 0) throw DataError("ply: f_rest count not divisible by 3: " + path);
        const int sh = 1 + rest / 3;
        int degree = 0;
        while ((degree + 1) * (degree + 1) < sh) ++degree;
        if ((degree + 1) * (degree + 1) != sh) {
            throw DataError("ply: f_rest count is not a full sh band: " + path);
        }
        int embed_dim = 0;
        while (index.count("embed_" + std::to_string(embed_dim))) ++embed_dim;

        cloud.sh_degree = degree;
        cloud.embed_dim = embed_dim;
        cloud.resize(static_cast<int>(h.count));

        const int ix = need("x"), iy = need("y"), iz = need("z"), io = need("opacity");
        int iscale[3], irot[4], idc[3];
        for (int a = 0; a < 3; ++a) iscale[a] = need("scale_" + std::to_string(a));
        for (int a = 0; a < 4; ++a) irot[a] = need("rot_" + std::to_string(a));
        for (int a = 0; a < 3; ++a) idc[a] = need("f_dc_" + std::to_string(a));
        std::vector<int> irest(rest);
        for (int a = 0; a < rest; ++a) irest[a] = need("f_rest_" + std::to_string(a));
        std::vector<int> iembed(embed_dim);
        for (int a = 0; a < embed_dim; ++a) iembed[a] = need("embed_" + std::to_string(a));

        RowReader reader(h);
        std::vector<double> row;
        for (long long i = 0; i < h.count; ++i) {
            reader.read_row(f, row);
            cloud.positions[3 * i] = row[ix];
            cloud.positions[3 * i + 1] = row[iy];
            cloud.positions[3 * i + 2] = row[iz];
            cloud.opacity_logits[i] = row[io];
            for (int a = 0; a < 3; ++a) cloud.log_scales[3 * i + a] = row[iscale[a]];
            for (int a = 0; a < 4; ++a) cloud.rotations[4 * i + a] = row[irot[a]];
            const size_t base = 3 * static_cast<size_t>(sh) * i;
            for (int c = 0; c < 3; ++c) cloud.sh_coeffs[base + c] = row[idc[c]];
            for (int c = 0; c < 3; ++c) {
                for (int b = 1; b < sh; ++b) {
                    cloud.sh_coeffs[base + 3 * b + c] = row[irest[c * (sh - 1) + (b - 1)]];
                }
            }
            for (int d = 0; d < embed_dim; ++d) {
                cloud.embeddings[static_cast<size_t>(i) * embed_dim + d] = row[iembed[d]];
            }
        }
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
    return cloud;
}

void write_points_ply(const std::vector<ColoredPoint>& points, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("ply: cannot open for writing: " + path);
    std::string header = "ply\nformat binary_little_endian 1.0\nelement vertex " +
                         std::to_string(points.size()) +
                         "\nproperty float x\nproperty float y\nproperty float z\n"
                         "property uchar red\nproperty uchar green\nproperty uchar blue\n"
                         "end_header\n";
    std::fwrite(header.data(), 1, header.size(), f);
    for (const ColoredPoint& p : points) {
        write_f32(f, p.x);
        write_f32(f, p.y);
        write_f32(f, p.z);
        const unsigned char rgb[3] = {
            static_cast<unsigned char>(std::lround(std::min(1.0, std::max(0.0, p.r)) * 255.0)),
            static_cast<unsigned char>(std::lround(std::min(1.0, std::max(0.0, p.g)) * 255.0)),
            static_cast<unsigned char>(std::lround(std::min(1.0, std::max(0.0, p.b)) * 255.0))};
        std::fwrite(rgb, 1, 3, f);
    }
    std::fclose(f);
}

std::vector<ColoredPoint> read_points_ply(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("ply: cannot open: " + path);
    std::vector<ColoredPoint> points;
    try {
        const PlyHeader h = read_header(f, path);
        std::map<std::string, int> index;
        for (size_t i = 0; i < h.props.size(); ++i) index[h.props[i].name] = static_cast<int>(i);
        auto need = [&](const std::string& name) {
            auto it = index.find(name);
            if (it == index.end()) throw DataError("ply: missing property " + name + " in " + path);
            return it->second;
        };
        const int ix = need("x"), iy = need("y"), iz = need("z");
        const int ir = need("red"), ig = need("green"), ib = need("blue");
        RowReader reader(h);
        std::vector<double> row;
        points.resize(h.count);
        for (long long i = 0; i < h.count; ++i) {
            reader.read_row(f, row);
            points[i] = {row[ix], row[iy], row[iz], row[ir], row[ig], row[ib]};
        }
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
    return points;
}

} // namespace frog
