#include "frog/deform_field.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "frog/errors.hpp"

namespace frog {

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "coarse") return FusionMode::Coarse;
    if (s == "fine") return FusionMode::Fine;
    if (s == "add") return FusionMode::Add;
    if (s == "concat") return FusionMode::Concat;
    if (s == "product") return FusionMode::Product;
    if (s == "dual") return FusionMode::Dual;
    throw ConfigError("unknown fusion mode: " + s);
}

std::string to_string(FusionMode m) {
    switch (m) {
    case FusionMode::Coarse: return "coarse";
    case FusionMode::Fine: return "fine";
    case FusionMode::Add: return "add";
    case FusionMode::Concat: return "concat";
    case FusionMode::Product: return "product";
    case FusionMode::Dual: return "dual";
    }
    return "?";
}

OpacityMode opacity_mode_from_string(const std::string& s) {
    if (s == "standard") return OpacityMode::Standard;
    if (s == "aggressive") return OpacityMode::Aggressive;
    if (s == "bypass") return OpacityMode::Bypass;
    throw ConfigError("unknown opacity mode: " + s);
}

std::string to_string(OpacityMode m) {
    switch (m) {
    case OpacityMode::Standard: return "standard";
    case OpacityMode::Aggressive: return "aggressive";
    case OpacityMode::Bypass: return "bypass";
    }
    return "?";
}

void DeltaBatch::resize(int n, int sh) {
    count = n;
    sh_count = sh;
    dmu.assign(3 * static_cast<size_t>(n), 0.0);
    ds.assign(3 * static_cast<size_t>(n), 0.0);
    dq.assign(4 * static_cast<size_t>(n), 0.0);
    dalpha.assign(static_cast<size_t>(n), 0.0);
    dsh.assign(3 * static_cast<size_t>(sh) * n, 0.0);
}

void DeltaBatch::zero() {
    std::fill(dmu.begin(), dmu.end(), 0.0);
    std::fill(ds.begin(), ds.end(), 0.0);
    std::fill(dq.begin(), dq.end(), 0.0);
    std::fill(dalpha.begin(), dalpha.end(), 0.0);
    std::fill(dsh.begin(), dsh.end(), 0.0);
}

void DeformationField::init_weights(int hidden_layers, int hidden_width, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    hidden.clear();
    int in = input_dim();
    for (int l = 0; l < hidden_layers; ++l) {
        DenseLayer layer;
        layer.in = in;
        layer.out = hidden_width;
        layer.w.resize(static_cast<size_t>(layer.in) * layer.out);
        layer.b.assign(layer.out, 0.0);
        const double bound = std::sqrt(6.0 / (layer.in + layer.out));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& w : layer.w) w = dist(rng);
        hidden.push_back(std::move(layer));
        in = hidden_width;
    }
    output.in = in;
    output.out = delta_dim();
    output.w.assign(static_cast<size_t>(output.in) * output.out, 0.0);
    output.b.assign(output.out, 0.0);

    std::normal_distribution<double> table_dist(1.0, 0.25);
    tables.fine.resize(static_cast<size_t>(tables.fine_len) * tables.dim);
    tables.coarse.resize(static_cast<size_t>(tables.coarse_len) * tables.dim);
    for (double& v : tables.fine) v = table_dist(rng);
    for (double& v : tables.coarse) v = table_dist(rng);
}

TemporalSample sample_temporal(const TemporalTables& tables, double t, long* clamp_warnings) {
    if (t < 0.0 || t > 1.0) {
        if (clamp_warnings) ++(*clamp_warnings);
        t = std::min(1.0, std::max(0.0, t));
    }
    TemporalSample s;
    auto lerp = [&](const std::vector<double>& rows, int len, int* i0, int* i1, double* w) {
        const double pos = t * (len - 1);
        int lo = std::min(static_cast<int>(pos), len - 2);
        lo = std::max(lo, 0);
        *i0 = lo;
        *i1 = lo + 1;
        *w = pos - lo;
        VecX out(tables.dim);
        for (int d = 0; d < tables.dim; ++d) {
            out[d] = (1.0 - *w) * rows[static_cast<size_t>(lo) * tables.dim + d] +
                     *w * rows[static_cast<size_t>(lo + 1) * tables.dim + d];
        }
        return out;
    };
    s.coarse = lerp(tables.coarse, tables.coarse_len, &s.c0, &s.c1, &s.cw);
    s.fine = lerp(tables.fine, tables.fine_len, &s.f0, &s.f1, &s.fw);
    return s;
}

VecX fuse(const VecX& t_coarse, const VecX& t_fine, FusionMode mode) {
    if (t_coarse.size() != t_fine.size()) {
        throw DataError("fuse: embedding dimension mismatch");
    }
    switch (mode) {
    case FusionMode::Coarse: return t_coarse;
    case FusionMode::Fine: return t_fine;
    case FusionMode::Add: return t_coarse + t_fine;
    case FusionMode::Product: return t_coarse.cwiseProduct(t_fine);
    case FusionMode::Concat: {
        VecX out(2 * t_coarse.size());
        out << t_coarse, t_fine;
        return out;
    }
    case FusionMode::Dual:
        throw ConfigError("fuse: dual mode keeps embeddings separate");
    }
    throw ConfigError("fuse: bad mode");
}

namespace {

// y = W x + b
void dense_forward(const DenseLayer& layer, const double* x, double* y) {
    for (int o = 0; o < layer.out; ++o) {
        const double* row = layer.w.data() + static_cast<size_t>(o) * layer.in;
        double acc = layer.b[o];
        for (int i = 0; i < layer.in; ++i) acc += row[i] * x[i];
        y[o] = acc;
    }
}

struct MlpScratch {
    std::vector<std::vector<double>> acts; // acts[0] = input, acts[l+1] = relu output of layer l
    std::vector<double> out;

    void init(const DeformationField& field, int in_dim) {
        acts.resize(field.hidden.size() + 1);
        acts[0].resize(in_dim);
        for (size_t l = 0; l < field.hidden.size(); ++l) acts[l + 1].resize(field.hidden[l].out);
        out.resize(field.delta_dim());
    }
};

// Returns the index of the first layer producing a non-finite value, or -1.
int mlp_forward(const DeformationField& field, MlpScratch& s) {
    for (size_t l = 0; l < field.hidden.size(); ++l) {
        dense_forward(field.hidden[l], s.acts[l].data(), s.acts[l + 1].data());
        bool ok = true;
        for (double& v : s.acts[l + 1]) {
            if (!std::isfinite(v)) ok = false;
            v = v > 0.0 ? v : 0.0;
        }
        if (!ok) return static_cast<int>(l);
    }
    dense_forward(field.output, s.acts.back().data(), s.out.data());
    for (double v : s.out) {
        if (!std::isfinite(v)) return static_cast<int>(field.hidden.size());
    }
    return -1;
}

void scatter_delta(const std::vector<double>& flat, int sh_count, int g, DeltaBatch* out,
                   bool accumulate) {
    const double* p = flat.data();
    auto put = [&](double* dst, const double* src, int n) {
        if (accumulate) {
            for (int k = 0; k < n; ++k) dst[k] += src[k];
        } else {
            for (int k = 0; k < n; ++k) dst[k] = src[k];
        }
    };
    put(out->dmu.data() + 3 * g, p, 3);
    put(out->ds.data() + 3 * g, p + 3, 3);
    put(out->dq.data() + 4 * g, p + 6, 4);
    put(out->dalpha.data() + g, p + 10, 1);
    put(out->dsh.data() + 3 * static_cast<size_t>(sh_count) * g, p + 11, 3 * sh_count);
}

void build_input(const DeformationField& field, const TemporalSample& ts, const VecX* fused,
                 const double* embedding, int pass, std::vector<double>& input) {
    const int dt = field.tables.dim;
    double* dst = input.data();
    if (field.fusion == FusionMode::Dual) {
        const VecX& t = pass == 0 ? ts.coarse : ts.fine;
        std::memcpy(dst, t.data(), sizeof(double) * dt);
        dst += dt;
    } else if (field.fusion == FusionMode::Concat) {
        std::memcpy(dst, fused->data(), sizeof(double) * 2 * dt);
        dst += 2 * dt;
    } else {
        std::memcpy(dst, fused->data(), sizeof(double) * dt);
        dst += dt;
    }
    std::memcpy(dst, embedding, sizeof(double) * field.embed_dim);
}

DeformationDelta delta_from_flat(const std::vector<double>& flat, int sh_count) {
    DeformationDelta d;
    d.dmu = Vec3(flat[0], flat[1], flat[2]);
    d.ds = Vec3(flat[3], flat[4], flat[5]);
    d.dq = Vec4(flat[6], flat[7], flat[8], flat[9]);
    d.dalpha = flat[10];
    d.dsh.assign(flat.begin() + 11, flat.begin() + 11 + 3 * sh_count);
    return d;
}

} // namespace

DeformationDelta deform(const DeformationField& field, const double* embedding, double t) {
    if (field.fusion == FusionMode::Dual) {
        throw ConfigError("deform: field is configured for dual passes, use deform_dual");
    }
    TemporalSample ts = sample_temporal(field.tables, t, &field.clamp_warnings);
    const VecX fused = fuse(ts.coarse, ts.fine, field.fusion);
    MlpScratch s;
    s.init(field, field.input_dim());
    build_input(field, ts, &fused, embedding, 0, s.acts[0]);
    const int bad = mlp_forward(field, s);
    if (bad >= 0) {
        throw NumericError("deform: non-finite activation in mlp layer " + std::to_string(bad));
    }
    field.mlp_evals += 1;
    return delta_from_flat(s.out, field.sh_count);
}

DeformationDelta deform_dual(const DeformationField& field, const double* embedding, double t) {
    if (field.fusion != FusionMode::Dual) {
        throw ConfigError("deform_dual: field is not configured for dual passes");
    }
    TemporalSample ts = sample_temporal(field.tables, t, &field.clamp_warnings);
    MlpScratch s;
    s.init(field, field.input_dim());
    DeformationDelta total;
    total.dsh.assign(3 * static_cast<size_t>(field.sh_count), 0.0);
    for (int pass = 0; pass < 2; ++pass) {
        build_input(field, ts, nullptr, embedding, pass, s.acts[0]);
        const int bad = mlp_forward(field, s);
        if (bad >= 0) {
            throw NumericError("deform_dual: non-finite activation in mlp layer " +
                               std::to_string(bad));
        }
        DeformationDelta d = delta_from_flat(s.out, field.sh_count);
        total.dmu += d.dmu;
        total.ds += d.ds;
        total.dq += d.dq;
        total.dalpha += d.dalpha;
        for (size_t i = 0; i < total.dsh.size(); ++i) total.dsh[i] += d.dsh[i];
    }
    field.mlp_evals += 2;
    return total;
}

void deform_batch(const DeformationField& field, const std::vector<double>& embeddings, int count,
                  double t, DeltaBatch* out) {
    if (static_cast<int>(embeddings.size()) != count * field.embed_dim) {
        throw DataError("deform_batch: embedding array size mismatch");
    }
    out->resize(count, field.sh_count);
    TemporalSample ts = sample_temporal(field.tables, t, &field.clamp_warnings);
    VecX fused;
    if (field.fusion != FusionMode::Dual) {
        fused = fuse(ts.coarse, ts.fine, field.fusion);
    }
    const int passes = field.fusion == FusionMode::Dual ? 2 : 1;
    std::atomic<long> bad_layer{-1};
    std::atomic<long> bad_gaussian{-1};
#pragma omp parallel
    {
        MlpScratch s;
        s.init(field, field.input_dim());
#pragma omp for schedule(static)
        for (int g = 0; g < count; ++g) {
            for (int pass = 0; pass < passes; ++pass) {
                build_input(field, ts, &fused, embeddings.data() + static_cast<size_t>(g) * field.embed_dim,
                            pass, s.acts[0]);
                const int bad = mlp_forward(field, s);
                if (bad >= 0) {
                    bad_layer.store(bad);
                    bad_gaussian.store(g);
                    continue;
                }
                scatter_delta(s.out, field.sh_count, g, out, pass > 0);
            }
        }
    }
    if (bad_layer.load() >= 0) {
        throw NumericError("deform_batch: non-finite activation in mlp layer " +
                           std::to_string(bad_layer.load()) + " (gaussian " +
                           std::to_string(bad_gaussian.load()) + ")");
    }
    field.mlp_evals += static_cast<std::uint64_t>(passes) * count;
}

DeformedCloud apply_delta(const GaussianCloud& cloud, const DeltaBatch* deltas, OpacityMode mode,
                          double k, bool dc_only) {
    cloud.validate();
    const int n = cloud.size();
    const int sh = cloud.sh_count();
    if (deltas && (deltas->count != n || deltas->sh_count != sh)) {
        throw DataError("apply_delta: delta batch shape mismatch");
    }
    // k = 0 disables the attenuation term entirely rather than evaluating it,
    // which would halve every opacity.
    if (mode == OpacityMode::Aggressive && k == 0.0) {
        mode = OpacityMode::Standard;
    }
    DeformedCloud out;
    out.sh_degree = cloud.sh_degree;
    out.positions.resize(3 * static_cast<size_t>(n));
    out.scales.resize(3 * static_cast<size_t>(n));
    out.rotations.resize(4 * static_cast<size_t>(n));
    out.alphas.resize(static_cast<size_t>(n));
    out.sh_coeffs.resize(3 * static_cast<size_t>(sh) * n);
    out.rot_fallback.assign(static_cast<size_t>(n), 0);

    std::atomic<long> bad_rotation{-1};
    long degenerate = 0;
#pragma omp parallel for schedule(static) reduction(+ : degenerate)
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) {
            const double dmu = deltas ? deltas->dmu[3 * i + a] : 0.0;
            const double ds = deltas ? deltas->ds[3 * i + a] : 0.0;
            out.positions[3 * i + a] = cloud.positions[3 * i + a] + dmu;
            out.scales[3 * i + a] = std::exp(cloud.log_scales[3 * i + a] + ds);
        }
        Vec4 q = cloud.rotation(i);
        const double raw_norm = q.norm();
        if (raw_norm == 0.0 || !std::isfinite(raw_norm)) {
            bad_rotation.store(i);
            continue;
        }
        q /= raw_norm;
        if (deltas) {
            const Vec4 dq(deltas->dq[4 * i], deltas->dq[4 * i + 1], deltas->dq[4 * i + 2],
                          deltas->dq[4 * i + 3]);
            // An exactly-zero variation keeps the activated quaternion bit for
            // bit instead of renormalizing a second time.
            if (!(dq[0] == 0.0 && dq[1] == 0.0 && dq[2] == 0.0 && dq[3] == 0.0)) {
                const Vec4 u = q + dq;
                const double un = u.norm();
                if (un < 1e-12) {
                    out.rot_fallback[i] = 1;
                    ++degenerate;
                } else {
                    q = u / un;
                }
            }
        }
        for (int a = 0; a < 4; ++a) out.rotations[4 * i + a] = q[a];

        const double l = cloud.opacity_logits[i];
        const double da = deltas ? deltas->dalpha[i] : 0.0;
        double alpha;
        if (mode == OpacityMode::Bypass) {
            alpha = sigmoid(l);
        } else if (mode == OpacityMode::Aggressive) {
            // Null deltas take the zero-variation limit, attenuation included.
            alpha = sigmoid(l + da) * sigmoid(k * da);
        } else {
            alpha = sigmoid(l + da);
        }
        out.alphas[i] = alpha;

        const size_t base = 3 * static_cast<size_t>(sh) * i;
        for (int b = 0; b < sh; ++b) {
            for (int c = 0; c < 3; ++c) {
                double d = deltas ? deltas->dsh[base + 3 * b + c] : 0.0;
                if (dc_only && b > 0) d = 0.0;
                out.sh_coeffs[base + 3 * b + c] = cloud.sh_coeffs[base + 3 * b + c] + d;
            }
        }
    }
    if (bad_rotation.load() >= 0) {
        throw NumericError("gaussian " + std::to_string(bad_rotation.load()) + ": invalid rotation");
    }
    out.degenerate_rotations = degenerate;
    return out;
}

void CloudGrads::init(const GaussianCloud& cloud) {
    positions.assign(cloud.positions.size(), 0.0);
    log_scales.assign(cloud.log_scales.size(), 0.0);
    rotations.assign(cloud.rotations.size(), 0.0);
    opacity_logits.assign(cloud.opacity_logits.size(), 0.0);
    sh_coeffs.assign(cloud.sh_coeffs.size(), 0.0);
}

void apply_delta_backward(const GaussianCloud& cloud, const DeltaBatch* deltas,
                          const DeformedCloud& deformed, OpacityMode mode, double k, bool dc_only,
                          const std::vector<double>& g_positions, const std::vector<double>& g_scales,
                          const std::vector<double>& g_rotations, const std::vector<double>& g_alphas,
                          const std::vector<double>& g_sh, CloudGrads* g_cloud, DeltaBatch* g_deltas) {
    const int n = cloud.size();
    const int sh = cloud.sh_count();
    if (mode == OpacityMode::Aggressive && k == 0.0) {
        mode = OpacityMode::Standard;
    }
#pragma omp parallel for schedule(static)
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) {
            const double gp = g_positions[3 * i + a];
            g_cloud->positions[3 * i + a] += gp;
            if (g_deltas) g_deltas->dmu[3 * i + a] = gp;

            const double gs = g_scales[3 * i + a] * deformed.scales[3 * i + a];
            g_cloud->log_scales[3 * i + a] += gs;
            if (g_deltas) g_deltas->ds[3 * i + a] = gs;
        }

        // Rotation chain: raw -> unit -> (+dq) -> unit.
        Vec4 q_raw = cloud.rotation(i);
        const double raw_norm = q_raw.norm();
        const Vec4 q_act = q_raw / raw_norm;
        Vec4 g_unit(g_rotations[4 * i], g_rotations[4 * i + 1], g_rotations[4 * i + 2],
                    g_rotations[4 * i + 3]);
        Vec4 g_qact;
        if (deltas && !deformed.rot_fallback[i]) {
            Vec4 u = q_act + Vec4(deltas->dq[4 * i], deltas->dq[4 * i + 1], deltas->dq[4 * i + 2],
                                  deltas->dq[4 * i + 3]);
            const double un = u.norm();
            const Vec4 q_def(deformed.rotations[4 * i], deformed.rotations[4 * i + 1],
                             deformed.rotations[4 * i + 2], deformed.rotations[4 * i + 3]);
            const Vec4 g_u = normalize_backward(q_def, un, g_unit);
            g_qact = g_u;
            if (g_deltas) {
                for (int a = 0; a < 4; ++a) g_deltas->dq[4 * i + a] = g_u[a];
            }
        } else {
            g_qact = g_unit;
            if (g_deltas) {
                for (int a = 0; a < 4; ++a) g_deltas->dq[4 * i + a] = 0.0;
            }
        }
        const Vec4 g_raw = normalize_backward(q_act, raw_norm, g_qact);
        for (int a = 0; a < 4; ++a) g_cloud->rotations[4 * i + a] += g_raw[a];

        // Opacity.
        const double l = cloud.opacity_logits[i];
        const double da = deltas ? deltas->dalpha[i] : 0.0;
        const double ga = g_alphas[i];
        double gl = 0.0, gda = 0.0;
        if (mode == OpacityMode::Bypass) {
            gl = ga * sigmoid_derivative(l);
        } else if (mode == OpacityMode::Aggressive) {
            const double s1 = sigmoid(l + da);
            const double s2 = sigmoid(k * da);
            gl = ga * s1 * (1.0 - s1) * s2;
            gda = ga * (s1 * (1.0 - s1) * s2 + s1 * k * s2 * (1.0 - s2));
        } else {
            const double d = sigmoid_derivative(l + da);
            gl = ga * d;
            gda = ga * d;
        }
        g_cloud->opacity_logits[i] += gl;
        if (g_deltas) g_deltas->dalpha[i] = gda;

        const size_t base = 3 * static_cast<size_t>(sh) * i;
        for (int b = 0; b < sh; ++b) {
            for (int c = 0; c < 3; ++c) {
                const double g = g_sh[base + 3 * b + c];
                g_cloud->sh_coeffs[base + 3 * b + c] += g;
                if (g_deltas) {
                    g_deltas->dsh[base + 3 * b + c] = (dc_only && b > 0) ? 0.0 : g;
                }
            }
        }
    }
}

void FieldGrads::init(const DeformationField& field, int count) {
    hidden_w.resize(field.hidden.size());
    hidden_b.resize(field.hidden.size());
    for (size_t l = 0; l < field.hidden.size(); ++l) {
        hidden_w[l].assign(field.hidden[l].w.size(), 0.0);
        hidden_b[l].assign(field.hidden[l].b.size(), 0.0);
    }
    out_w.assign(field.output.w.size(), 0.0);
    out_b.assign(field.output.b.size(), 0.0);
    table_fine.assign(field.tables.fine.size(), 0.0);
    table_coarse.assign(field.tables.coarse.size(), 0.0);
    embeddings.assign(static_cast<size_t>(field.embed_dim) * count, 0.0);
}

void FieldGrads::add(const FieldGrads& other) {
    auto axpy = [](std::vector<double>& dst, const std::vector<double>& src) {
        for (size_t i = 0; i < dst.size(); ++i) dst[i] += src[i];
    };
    for (size_t l = 0; l < hidden_w.size(); ++l) {
        axpy(hidden_w[l], other.hidden_w[l]);
        axpy(hidden_b[l], other.hidden_b[l]);
    }
    axpy(out_w, other.out_w);
    axpy(out_b, other.out_b);
    axpy(table_fine, other.table_fine);
    axpy(table_coarse, other.table_coarse);
}

namespace {

// Backprop through one MLP evaluation; writes weight gradients into `fg` and
// the input gradient into `g_input`.
void mlp_backward(const DeformationField& field, const MlpScratch& s, const double* g_out,
                  FieldGrads& fg, std::vector<double>& g_input, std::vector<double>& g_buf_a,
                  std::vector<double>& g_buf_b) {
    const size_t layers = field.hidden.size();
    // Output layer.
    const std::vector<double>& z_last = s.acts[layers];
    g_buf_a.assign(field.output.in, 0.0);
    for (int o = 0; o < field.output.out; ++o) {
        const double g = g_out[o];
        fg.out_b[o] += g;
        double* gw = fg.out_w.data() + static_cast<size_t>(o) * field.output.in;
        const double* row = field.output.w.data() + static_cast<size_t>(o) * field.output.in;
        for (int i = 0; i < field.output.in; ++i) {
            gw[i] += g * z_last[i];
            g_buf_a[i] += g * row[i];
        }
    }
    // Hidden layers in reverse.
    std::vector<double>* gz = &g_buf_a;
    std::vector<double>* gprev = &g_buf_b;
    for (int l = static_cast<int>(layers) - 1; l >= 0; --l) {
        const DenseLayer& layer = field.hidden[l];
        const std::vector<double>& z = s.acts[l + 1];
        const std::vector<double>& x = s.acts[l];
        gprev->assign(layer.in, 0.0);
        for (int o = 0; o < layer.out; ++o) {
            if (z[o] <= 0.0) continue; // ReLU mask
            const double g = (*gz)[o];
            fg.hidden_b[l][o] += g;
            double* gw = fg.hidden_w[l].data() + static_cast<size_t>(o) * layer.in;
            const double* row = layer.w.data() + static_cast<size_t>(o) * layer.in;
            for (int i = 0; i < layer.in; ++i) {
                gw[i] += g * x[i];
                (*gprev)[i] += g * row[i];
            }
        }
        std::swap(gz, gprev);
    }
    g_input = *gz;
}

void gather_delta_grad(const DeltaBatch& g_deltas, int sh_count, int g, std::vector<double>& flat) {
    double* p = flat.data();
    std::memcpy(p, g_deltas.dmu.data() + 3 * g, sizeof(double) * 3);
    std::memcpy(p + 3, g_deltas.ds.data() + 3 * g, sizeof(double) * 3);
    std::memcpy(p + 6, g_deltas.dq.data() + 4 * g, sizeof(double) * 4);
    p[10] = g_deltas.dalpha[g];
    std::memcpy(p + 11, g_deltas.dsh.data() + 3 * static_cast<size_t>(sh_count) * g,
                sizeof(double) * 3 * sh_count);
}

} // namespace

void deform_batch_backward(const DeformationField& field, const std::vector<double>& embeddings,
                           int count, double t, const DeltaBatch& g_deltas, FieldGrads* grads) {
    TemporalSample ts = sample_temporal(field.tables, t, nullptr);
    VecX fused;
    if (field.fusion != FusionMode::Dual) {
        fused = fuse(ts.coarse, ts.fine, field.fusion);
    }
    const int dt = field.tables.dim;
    const int passes = field.fusion == FusionMode::Dual ? 2 : 1;
    const int temporal_width = field.fusion == FusionMode::Concat ? 2 * dt : dt;

    int nthreads = 1;
#ifdef _OPENMP
#pragma omp parallel
    {
#pragma omp single
        nthreads = omp_get_num_threads();
    }
#endif
    std::vector<FieldGrads> partials(nthreads);
    // Accumulated gradient on the fused (or per-pass) temporal vectors.
    std::vector<VecX> g_temp_c(nthreads, VecX::Zero(temporal_width));
    std::vector<VecX> g_temp_f(nthreads, VecX::Zero(dt));
    for (auto& p : partials) p.init(field, 0);

#pragma omp parallel
    {
#ifdef _OPENMP
        const int tid = omp_get_thread_num();
#else
        const int tid = 0;
#endif
        FieldGrads& fg = partials[tid];
        MlpScratch s;
        s.init(field, field.input_dim());
        std::vector<double> g_out(field.delta_dim());
        std::vector<double> g_input, buf_a, buf_b;
#pragma omp for schedule(static)
        for (int g = 0; g < count; ++g) {
            gather_delta_grad(g_deltas, field.sh_count, g, g_out);
            for (int pass = 0; pass < passes; ++pass) {
                build_input(field, ts, &fused, embeddings.data() + static_cast<size_t>(g) * field.embed_dim,
                            pass, s.acts[0]);
                mlp_forward(field, s);
                mlp_backward(field, s, g_out.data(), fg, g_input, buf_a, buf_b);
                // Split the input gradient into temporal and embedding parts.
                if (field.fusion == FusionMode::Dual) {
                    VecX& gt = pass == 0 ? g_temp_c[tid] : g_temp_f[tid];
                    for (int d = 0; d < dt; ++d) gt[d] += g_input[d];
                } else {
                    for (int d = 0; d < temporal_width; ++d) g_temp_c[tid][d] += g_input[d];
                }
                const int off = field.fusion == FusionMode::Dual ? dt : temporal_width;
                double* ge = grads->embeddings.data() + static_cast<size_t>(g) * field.embed_dim;
                for (int d = 0; d < field.embed_dim; ++d) ge[d] += g_input[off + d];
            }
        }
    }

    for (int tgt = 0; tgt < nthreads; ++tgt) grads->add(partials[tgt]);
    VecX g_temp = VecX::Zero(temporal_width);
    VecX g_dual_f = VecX::Zero(dt);
    for (int tgt = 0; tgt < nthreads; ++tgt) {
        g_temp += g_temp_c[tgt];
        g_dual_f += g_temp_f[tgt];
    }

    // Chain through the fusion into the two table samples.
    VecX g_tc = VecX::Zero(dt), g_tf = VecX::Zero(dt);
    switch (field.fusion) {
    case FusionMode::Coarse: g_tc = g_temp; break;
    case FusionMode::Fine: g_tf = g_temp; break;
    case FusionMode::Add: g_tc = g_temp; g_tf = g_temp; break;
    case FusionMode::Product:
        g_tc = g_temp.cwiseProduct(ts.fine);
        g_tf = g_temp.cwiseProduct(ts.coarse);
        break;
    case FusionMode::Concat:
        g_tc = g_temp.head(dt);
        g_tf = g_temp.tail(dt);
        break;
    case FusionMode::Dual:
        g_tc = g_temp.head(dt);
        g_tf = g_dual_f;
        break;
    }

    // Interpolation backward into table rows.
    for (int d = 0; d < dt; ++d) {
        grads->table_coarse[static_cast<size_t>(ts.c0) * dt + d] += (1.0 - ts.cw) * g_tc[d];
        grads->table_coarse[static_cast<size_t>(ts.c1) * dt + d] += ts.cw * g_tc[d];
        grads->table_fine[static_cast<size_t>(ts.f0) * dt + d] += (1.0 - ts.fw) * g_tf[d];
        grads->table_fine[static_cast<size_t>(ts.f1) * dt + d] += ts.fw * g_tf[d];
    }
}

namespace {

constexpr char kSidecarMagic[4] = {'F', 'R', 'G', 'D'};
constexpr std::uint32_t kSidecarVersion = 1;

struct BinaryWriter {
    std::FILE* f;
    void u8(std::uint8_t v) { std::fwrite(&v, 1, 1, f); }
    void u32(std::uint32_t v) { std::fwrite(&v, 4, 1, f); }
    void f32(float v) { std::fwrite(&v, 4, 1, f); }
    void f32_array(const std::vector<double>& v) {
        for (double d : v) f32(static_cast<float>(d));
    }
};

struct BinaryReader {
    std::FILE* f;
    std::uint8_t u8() {
        std::uint8_t v = 0;
        if (std::fread(&v, 1, 1, f) != 1) throw DataError("sidecar: truncated file");
        return v;
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        if (std::fread(&v, 4, 1, f) != 1) throw DataError("sidecar: truncated file");
        return v;
    }
    float f32() {
        float v = 0;
        if (std::fread(&v, 4, 1, f) != 1) throw DataError("sidecar: truncated file");
        return v;
    }
    void f32_array(std::vector<double>& v, size_t n) {
        v.resize(n);
        for (size_t i = 0; i < n; ++i) v[i] = static_cast<double>(f32());
    }
};

std::uint8_t fusion_tag(FusionMode m) { return static_cast<std::uint8_t>(m); }

} // namespace

void save_field(const DeformationField& field, const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw DataError("sidecar: cannot open for writing: " + path);
    BinaryWriter w{f};
    std::fwrite(kSidecarMagic, 1, 4, f);
    w.u32(kSidecarVersion);
    w.u32(static_cast<std::uint32_t>(field.embed_dim));
    w.u32(static_cast<std::uint32_t>(field.tables.dim));
    w.u32(static_cast<std::uint32_t>(field.tables.fine_len));
    w.u32(static_cast<std::uint32_t>(field.tables.coarse_len));
    w.u32(static_cast<std::uint32_t>(field.hidden.size()));
    w.u8(fusion_tag(field.fusion));
    w.u8(0); // nonlinearity tag: 0 = relu
    w.u8(0);
    w.u8(0);
    w.f32(static_cast<float>(field.opacity_k));
    w.u32(static_cast<std::uint32_t>(field.sh_count));
    for (const DenseLayer& l : field.hidden) {
        w.u32(static_cast<std::uint32_t>(l.in));
        w.u32(static_cast<std::uint32_t>(l.out));
    }
    w.u32(static_cast<std::uint32_t>(field.output.in));
    w.u32(static_cast<std::uint32_t>(field.output.out));
    w.f32_array(field.tables.coarse);
    w.f32_array(field.tables.fine);
    for (const DenseLayer& l : field.hidden) {
        w.f32_array(l.w);
        w.f32_array(l.b);
    }
    w.f32_array(field.output.w);
    w.f32_array(field.output.b);
    std::fclose(f);
}

DeformationField load_field(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw DataError("sidecar: cannot open: " + path);
    BinaryReader r{f};
    char magic[4];
    if (std::fread(magic, 1, 4, f) != 4 || std::memcmp(magic, kSidecarMagic, 4) != 0) {
        std::fclose(f);
        throw DataError("sidecar: bad magic in " + path);
    }
    DeformationField field;
    try {
        const std::uint32_t version = r.u32();
        if (version != kSidecarVersion) throw DataError("sidecar: unsupported version");
        field.embed_dim = static_cast<int>(r.u32());
        field.tables.dim = static_cast<int>(r.u32());
        field.tables.fine_len = static_cast<int>(r.u32());
        field.tables.coarse_len = static_cast<int>(r.u32());
        const std::uint32_t layers = r.u32();
        field.fusion = static_cast<FusionMode>(r.u8());
        const std::uint8_t nonlinearity = r.u8();
        if (nonlinearity != 0) throw DataError("sidecar: unknown nonlinearity tag");
        r.u8();
        r.u8();
        field.opacity_k = static_cast<double>(r.f32());
        field.sh_count = static_cast<int>(r.u32());
        field.hidden.resize(layers);
        for (DenseLayer& l : field.hidden) {
            l.in = static_cast<int>(r.u32());
            l.out = static_cast<int>(r.u32());
        }
        field.output.in = static_cast<int>(r.u32());
        field.output.out = static_cast<int>(r.u32());
        r.f32_array(field.tables.coarse,
                    static_cast<size_t>(field.tables.coarse_len) * field.tables.dim);
        r.f32_array(field.tables.fine, static_cast<size_t>(field.tables.fine_len) * field.tables.dim);
        for (DenseLayer& l : field.hidden) {
            r.f32_array(l.w, static_cast<size_t>(l.in) * l.out);
            r.f32_array(l.b, static_cast<size_t>(l.out));
        }
        r.f32_array(field.output.w, static_cast<size_t>(field.output.in) * field.output.out);
        r.f32_array(field.output.b, static_cast<size_t>(field.output.out));
    } catch (...) {
        std::fclose(f);
        throw;
    }
    std::fclose(f);
    if (field.output.out != field.delta_dim()) {
        throw DataError("sidecar: head width disagrees with sh count");
    }
    return field;
}

} // namespace frog
