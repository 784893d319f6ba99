#pragma once

#include <string>
#include <vector>

#include "frog/adaptive.hpp"
#include "frog/deform_field.hpp"
#include "frog/losses.hpp"

namespace frog {

// Everything the training loop needs, with 3DGS-style defaults. Parsed from a
// flat key = value text file; unknown keys are rejected.
struct TrainConfig {
    long long iterations = 7000;
    std::uint64_t seed = 0;
    long long eval_every = 0;       // 0 disables periodic evaluation
    long long checkpoint_every = 0; // 0 keeps only the final checkpoint
    long long deform_warmup = 0;    // canonical-only iterations before the field unfreezes

    // Model shape.
    int sh_degree = 1;
    int embed_dim = 32;
    int temporal_dim = 32;
    int mlp_hidden_layers = 4;
    int mlp_hidden_width = 128;
    int fine_table_divisor = 5;   // fine rows = max(2, frames / divisor)
    int coarse_table_divisor = 5; // coarse rows = max(2, fine rows / divisor)
    int fine_table_len = 0;       // nonzero overrides the divisor
    int coarse_table_len = 0;

    FusionMode fusion_mode = FusionMode::Product;
    OpacityMode opacity_mode = OpacityMode::Aggressive;
    double opacity_k = 10.0;
    bool deform_sh_dc_only = false;

    // Learning rates.
    double lr_position = 1.6e-4;
    double lr_position_final = 1.6e-6;
    double lr_scale = 5e-3;
    double lr_rotation = 1e-3;
    double lr_opacity = 5e-2;
    double lr_sh = 2.5e-3;
    double lr_embedding = 1e-3;
    double lr_mlp = 1e-3;
    double lr_tables = 1e-3;

    LossConfig loss;
    DensifyConfig densify;
    SamplingConfig sampling;

    // Initialization of the cloud from points.
    double init_embedding_sigma = 0.1;
    double init_opacity = 0.1;

    double position_lr(long long iter) const;
    void validate() const;
};

// Parses `key = value` lines ('#' comments); throws ConfigError naming any
// unknown key or bad value.
TrainConfig parse_config_file(const std::string& path);
void apply_override(TrainConfig* cfg, const std::string& key, const std::string& value);

// The documented key list (for --help and the README).
std::vector<std::string> config_keys();

} // namespace frog
