#pragma once

#include "frog/camera.hpp"
#include "frog/deform_field.hpp"
#include "frog/gaussian_cloud.hpp"
#include "frog/rasterizer.hpp"

namespace frog {

struct RenderSettings {
    OpacityMode opacity_mode = OpacityMode::Standard;
    double opacity_k = 10.0;
    bool deform_sh_dc_only = false;
    bool use_deform = true; // false renders the canonical field directly
};

// Everything the backward pass needs from one rendered frame.
struct ForwardContext {
    Camera cam;
    double t = 0.0;
    RenderSettings settings;
    DeltaBatch deltas;
    DeformedCloud deformed;
    ProjectResult projected;
    RenderOutput image;
    double deform_ms = 0.0;
    double raster_ms = 0.0;
};

ForwardContext forward_render(const GaussianCloud& cloud, const DeformationField& field,
                              const Camera& cam, double t, const RenderSettings& settings);

// Gradients for every trainable parameter class.
struct ParamGrads {
    CloudGrads cloud;
    FieldGrads field;
    std::vector<double> screen_grad_norm; // per Gaussian
    std::vector<std::uint8_t> visible;

    void init(const GaussianCloud& c, const DeformationField& f);
};

// Full chain: compositing -> projection -> covariance/SH -> deltas -> MLP and
// temporal tables. `g_color` is dLoss/dColor for ctx.image.
void backward_render(const GaussianCloud& cloud, const DeformationField& field,
                     const ForwardContext& ctx, const std::vector<double>& g_color,
                     ParamGrads* grads);

} // namespace frog
