#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "frog/deform_field.hpp"
#include "frog/gaussian_cloud.hpp"

namespace frog {

struct AdamGroup {
    std::vector<double> m, v;

    void init(size_t n) {
        m.assign(n, 0.0);
        v.assign(n, 0.0);
    }
};

// Moment buffers for every parameter group. Per-Gaussian groups follow the
// cloud through densification: appended rows start with zero moments, pruned
// rows are dropped.
struct AdamState {
    double beta1 = 0.9, beta2 = 0.999, eps = 1e-15;
    long long step_count = 0;

    AdamGroup positions, log_scales, rotations, opacity_logits, sh, embeddings;
    std::vector<AdamGroup> hidden_w, hidden_b;
    AdamGroup out_w, out_b, table_fine, table_coarse;

    void init(const GaussianCloud& cloud, const DeformationField& field);

    // One bias-corrected update of a parameter vector.
    void update(AdamGroup& group, std::vector<double>& param, const std::vector<double>& grad,
                double lr) const;

    // Row bookkeeping across adaptive events.
    void keep_rows(const std::vector<std::uint8_t>& keep, const GaussianCloud& cloud_after);
    void append_rows(int added, const GaussianCloud& cloud_after);

    void save(const std::string& path) const;
    void load(const std::string& path, const GaussianCloud& cloud, const DeformationField& field);
};

} // namespace frog
