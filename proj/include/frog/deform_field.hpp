#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frog/gaussian_cloud.hpp"
#include "frog/geometry.hpp"

namespace frog {

enum class FusionMode { Coarse, Fine, Add, Concat, Product, Dual };
enum class OpacityMode { Standard, Aggressive, Bypass };

FusionMode fusion_mode_from_string(const std::string& s);
std::string to_string(FusionMode m);
OpacityMode opacity_mode_from_string(const std::string& s);
std::string to_string(OpacityMode m);

// Learnable temporal embedding rows, indexed by normalized time. The fine
// table covers the frame sequence; the coarse table is its downsampled
// counterpart. Both are read through linear interpolation.
struct TemporalTables {
    int dim = 32;
    int fine_len = 2;
    int coarse_len = 2;
    std::vector<double> fine;   // fine_len x dim, row-major
    std::vector<double> coarse; // coarse_len x dim, row-major
};

struct TemporalSample {
    VecX coarse, fine;
    int c0 = 0, c1 = 0;
    int f0 = 0, f1 = 0;
    double cw = 0.0, fw = 0.0; // weight of the upper row
};

struct DenseLayer {
    int in = 0, out = 0;
    std::vector<double> w; // out x in, row-major
    std::vector<double> b; // out
};

// Per-Gaussian attribute variations, struct-of-arrays.
struct DeltaBatch {
    int count = 0;
    int sh_count = 0;
    std::vector<double> dmu;    // 3 per Gaussian
    std::vector<double> ds;     // 3 per Gaussian (log-scale units)
    std::vector<double> dq;     // 4 per Gaussian
    std::vector<double> dalpha; // 1 per Gaussian (logit units)
    std::vector<double> dsh;    // 3 * sh_count per Gaussian

    void resize(int n, int sh);
    void zero();
};

// Single-Gaussian variation, used by the scalar API and tests.
struct DeformationDelta {
    Vec3 dmu = Vec3::Zero();
    Vec3 ds = Vec3::Zero();
    Vec4 dq = Vec4::Zero();
    double dalpha = 0.0;
    std::vector<double> dsh; // 3 * sh_count
};

// Maps (per-Gaussian embedding, time) to attribute variations through a
// shared MLP. Temporal information enters as an interpolated table row pair,
// combined according to `fusion`; the Dual mode runs the network once per
// table instead and sums the results.
struct DeformationField {
    FusionMode fusion = FusionMode::Product;
    int embed_dim = 32;
    int sh_count = 4; // (sh_degree + 1)^2
    double opacity_k = 10.0;
    TemporalTables tables;
    std::vector<DenseLayer> hidden; // ReLU between layers
    DenseLayer output;              // linear, zero-initialized

    mutable std::uint64_t mlp_evals = 0;    // forward passes, for instrumentation
    mutable long clamp_warnings = 0;        // out-of-range time samples

    int temporal_dim() const { return tables.dim; }
    int input_dim() const {
        return embed_dim + (fusion == FusionMode::Concat ? 2 * tables.dim : tables.dim);
    }
    int delta_dim() const { return 3 + 3 + 4 + 1 + 3 * sh_count; }

    // Builds the layer stack for the current fusion mode and dimensions.
    // Hidden layers get Xavier-uniform weights, the output layer is zeroed so
    // training starts from the identity deformation. Tables are drawn around
    // one so multiplicative fusion starts with signal, embeddings are not
    // touched here.
    void init_weights(int hidden_layers, int hidden_width, std::uint64_t seed);
};

// Interpolated rows of both tables at normalized time t. Times outside [0,1]
// are clamped; the field's warning counter is incremented when provided.
TemporalSample sample_temporal(const TemporalTables& tables, double t, long* clamp_warnings);

// Combine the coarse and fine rows. Throws ConfigError for Dual (the caller
// must run two passes) and DataError on dimension mismatch.
VecX fuse(const VecX& t_coarse, const VecX& t_fine, FusionMode mode);

// One network evaluation; `fusion` must not be Dual.
DeformationDelta deform(const DeformationField& field, const double* embedding, double t);

// Two network evaluations (coarse pass + fine pass), deltas summed; requires
// fusion == Dual.
DeformationDelta deform_dual(const DeformationField& field, const double* embedding, double t);

// Whole-cloud deformation at time t. Parallel over Gaussians.
void deform_batch(const DeformationField& field, const std::vector<double>& embeddings, int count,
                  double t, DeltaBatch* out);

// Deformed, activated attribute arrays produced by adding a variation batch
// to the canonical cloud.
struct DeformedCloud {
    int sh_degree = 1;
    std::vector<double> positions;
    std::vector<double> scales;    // activated
    std::vector<double> rotations; // unit quaternions
    std::vector<double> alphas;    // final rendering opacity
    std::vector<double> sh_coeffs;
    long degenerate_rotations = 0;
    std::vector<std::uint8_t> rot_fallback; // per-Gaussian: q + dq vanished

    int size() const { return static_cast<int>(alphas.size()); }
};

// deltas == nullptr takes the zero-variation limit (canonical rendering); the
// opacity path still follows `mode`, so the attenuated mode keeps its factor
// of one half. `dc_only` zeroes SH variations beyond the DC band.
DeformedCloud apply_delta(const GaussianCloud& cloud, const DeltaBatch* deltas, OpacityMode mode,
                          double k, bool dc_only);

struct CloudGrads {
    std::vector<double> positions, log_scales, rotations, opacity_logits, sh_coeffs;
    void init(const GaussianCloud& cloud);
};

// Gradients through apply_delta: from deformed-attribute gradients to raw
// canonical parameters and to the variation batch.
void apply_delta_backward(const GaussianCloud& cloud, const DeltaBatch* deltas,
                          const DeformedCloud& deformed, OpacityMode mode, double k, bool dc_only,
                          const std::vector<double>& g_positions, const std::vector<double>& g_scales,
                          const std::vector<double>& g_rotations, const std::vector<double>& g_alphas,
                          const std::vector<double>& g_sh, CloudGrads* g_cloud, DeltaBatch* g_deltas);

struct FieldGrads {
    std::vector<std::vector<double>> hidden_w, hidden_b;
    std::vector<double> out_w, out_b;
    std::vector<double> table_fine, table_coarse;
    std::vector<double> embeddings; // per-Gaussian rows

    void init(const DeformationField& field, int count);
    void add(const FieldGrads& other);
};

// Backward through deform_batch: recomputes per-Gaussian activations, so no
// forward state is needed beyond the inputs.
void deform_batch_backward(const DeformationField& field, const std::vector<double>& embeddings,
                           int count, double t, const DeltaBatch& g_deltas, FieldGrads* grads);

// Checkpoint sidecar, binary little-endian f32.
void save_field(const DeformationField& field, const std::string& path);
DeformationField load_field(const std::string& path);

} // namespace frog
