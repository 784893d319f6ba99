#include "frog/adam.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>

#include "frog/errors.hpp"

namespace frog {

void AdamState::init(const GaussianCloud& cloud, const DeformationField& field) {
    step_count = 0;
    const size_t n = static_cast<size_t>(cloud.size());
    positions.init(3 * n);
    log_scales.init(3 * n);
    rotations.init(4 * n);
    opacity_logits.init(n);
    sh.init(3 * static_cast<size_t>(cloud.sh_count()) * n);
    embeddings.init(static_cast<size_t>(cloud.embed_dim) * n);
    hidden_w.resize(field.hidden.size());
    hidden_b.resize(field.hidden.size());
    for (size_t l = 0; l < field.hidden.size(); ++l) {
        hidden_w[l].init(field.hidden[l].w.size());
        hidden_b[l].init(field.hidden[l].b.size());
    }
    out_w.init(field.output.w.size());
    out_b.init(field.output.b.size());
    table_fine.init(field.tables.fine.size());
    table_coarse.init(field.tables.coarse.size());
}

void AdamState::update(AdamGroup& group, std::vector<double>& param,
                       const std::vector<double>& grad, double lr) const {
    if (group.m.size() != param.size() || grad.size() != param.size()) {
        throw NumericError("adam: moment buffers out of sync with parameters");
    }
    const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step_count));
    const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step_count));
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(param.size()); ++i) {
        const double g = grad[i];
        group.m[i] = beta1 * group.m[i] + (1.0 - beta1) * g;
        group.v[i] = beta2 * group.v[i] + (1.0 - beta2) * g * g;
        const double mhat = group.m[i] / bc1;
        const double vhat = group.v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

namespace {

void filter_group(AdamGroup& g, const std::vector<std::uint8_t>& keep, int stride) {
    const size_t n = keep.size();
    size_t w = 0;
    for (size_t i = 0; i < n; ++i) {
        if (!keep[i]) continue;
        for (int a = 0; a < stride; ++a) {
            g.m[w * stride + a] = g.m[i * stride + a];
            g.v[w * stride + a] = g.v[i * stride + a];
        }
        ++w;
    }
    g.m.resize(w * stride);
    g.v.resize(w * stride);
}

} // namespace

void AdamState::keep_rows(const std::vector<std::uint8_t>& keep, const GaussianCloud& cloud_after) {
    filter_group(positions, keep, 3);
    filter_group(log_scales, keep, 3);
    filter_group(rotations, keep, 4);
    filter_group(opacity_logits, keep, 1);
    filter_group(sh, keep, 3 * cloud_after.sh_count());
    filter_group(embeddings, keep, cloud_after.embed_dim);
}

void AdamState::append_rows(int added, const GaussianCloud& cloud_after) {
    if (added < 0) throw NumericError("adam: negative row count");
    auto grow = [&](AdamGroup& g, int stride) {
        g.m.resize(g.m.size() + static_cast<size_t>(added) * stride, 0.0);
        g.v.resize(g.v.size() + static_cast<size_t>(added) * stride, 0.0);
    };
    grow(positions, 3);
    grow(log_scales, 3);
    grow(rotations, 4);
    grow(opacity_logits, 1);
    grow(sh, 3 * cloud_after.sh_count());
    grow(embeddings, cloud_after.embed_dim);
    if (positions.m.size() != cloud_after.positions.size()) {
        throw NumericError("adam: row bookkeeping out of sync with the cloud");
    }
}

namespace {

constexpr char kOptMagic[4] = {'F', 'R', 'G', 'O'};

void write_group(std::FILE* f, const AdamGroup& g) {
    const std::uint64_t n = g.m.size();
    std::fwrite(&n, 8, 1, f);
    std::fwrite(g.m.data(), 8, g.m.size(), f);
    std::fwrite(g.v.data(), 8, g.v.size(), f);
}

void read_group(std::FILE* f, AdamGroup& g, const std::string& path) {
    std::uint64_t n = 0;
    if (std::fread(&n, 8, 1, f) != 1) throw DataError("optimizer blob truncated: " + path);
    g.m.resize(n);
    g.v.resize(n);
    if (std::fread(g.m.data(), 8, n, f) != n || std::fread(g.v.data(), 8, n, f) != n) {
        throw DataError("optimizer blob truncated: " + path);
    }
}

} // namespace

void AdamState::save(const std::string& path) const {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("optimizer blob: cannot open for writing: " + path);
    std::fwrite(kOptMagic, 1, 4, f);
    const std::uint32_t version = 1;
    std::fwrite(&version, 4, 1, f);
    std::fwrite(&step_count, 8, 1, f);
    const std::uint32_t layer_count = static_cast<std::uint32_t>(hidden_w.size());
    std::fwrite(&layer_count, 4, 1, f);
    write_group(f, positions);
    write_group(f, log_scales);
    write_group(f, rotations);
    write_group(f, opacity_logits);
    write_group(f, sh);
    write_group(f, embeddings);
    for (size_t l = 0; l < hidden_w.size(); ++l) {
        write_group(f, hidden_w[l]);
        write_group(f, hidden_b[l]);
    }
    write_group(f, out_w);
    write_group(f, out_b);
    write_group(f, table_fine);
    write_group(f, table_coarse);
    std::fclose(f);
}

void AdamState::load(const std::string& path, const GaussianCloud& cloud,
                     const DeformationField& field) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("optimizer blob: cannot open: " + path);
    try {
        char magic[4];
        std::uint32_t version = 0, layer_count = 0;
        if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, kOptMagic, 4) != 0) {
            throw DataError("optimizer blob: bad magic: " + path);
        }
        if (std::fread(&version, 4, 1, f) != 1 || version != 1) {
            throw DataError("optimizer blob: unsupported version: " + path);
        }
        if (std::fread(&step_count, 8, 1, f) != 1 || std::fread(&layer_count, 4, 1, f) != 1) {
            throw DataError("optimizer blob truncated: " + path);
        }
        if (layer_count != field.hidden.size()) {
            throw DataError("optimizer blob: layer count mismatch: " + path);
        }
        hidden_w.resize(layer_count);
        hidden_b.resize(layer_count);
        read_group(f, positions, path);
        read_group(f, log_scales, path);
        read_group(f, rotations, path);
        read_group(f, opacity_logits, path);
        read_group(f, sh, path);
        read_group(f, embeddings, path);
        for (size_t l = 0; l < layer_count; ++l) {
            read_group(f, hidden_w[l], path);
            read_group(f, hidden_b[l], path);
        }
        read_group(f, out_w, path);
        read_group(f, out_b, path);
        read_group(f, table_fine, path);
        read_group(f, table_coarse, path);
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
    if (positions.m.size() != cloud.positions.size()) {
        throw DataError("optimizer blob: row count disagrees with the checkpoint cloud");
    }
}

} // namespace frog
