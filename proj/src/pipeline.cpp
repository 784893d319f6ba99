#include "frog/pipeline.hpp"

#include <chrono>

namespace frog {

ForwardContext forward_render(const GaussianCloud& cloud, const DeformationField& field,
                              const Camera& cam, double t, const RenderSettings& settings) {
    ForwardContext ctx;
    ctx.cam = cam;
    ctx.t = t;
    ctx.settings = settings;
    auto t0 = std::chrono::steady_clock::now();
    if (settings.use_deform) {
        deform_batch(field, cloud.embeddings, cloud.size(), t, &ctx.deltas);
        ctx.deformed = apply_delta(cloud, &ctx.deltas, settings.opacity_mode, settings.opacity_k,
                                   settings.deform_sh_dc_only);
    } else {
        ctx.deformed = apply_delta(cloud, nullptr, settings.opacity_mode, settings.opacity_k,
                                   settings.deform_sh_dc_only);
    }
    ctx.deform_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    t0 = std::chrono::steady_clock::now();
    ctx.projected = project_cloud(ctx.deformed, cam);
    ctx.image = render(ctx.projected.splats, cam.width, cam.height);
    ctx.raster_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return ctx;
}

void ParamGrads::init(const GaussianCloud& c, const DeformationField& f) {
    cloud.init(c);
    field.init(f, c.size());
    screen_grad_norm.assign(static_cast<size_t>(c.size()), 0.0);
    visible.assign(static_cast<size_t>(c.size()), 0);
}

void backward_render(const GaussianCloud& cloud, const DeformationField& field,
                     const ForwardContext& ctx, const std::vector<double>& g_color,
                     ParamGrads* grads) {
    const SplatGrads sg = render_backward_splats(ctx.projected.splats, ctx.image, g_color);
    const DeformedGrads dg = project_backward(ctx.deformed, ctx.cam, ctx.projected.splats, sg);

    DeltaBatch g_deltas;
    DeltaBatch* g_deltas_ptr = nullptr;
    if (ctx.settings.use_deform) {
        g_deltas.resize(cloud.size(), cloud.sh_count());
        g_deltas_ptr = &g_deltas;
    }
    apply_delta_backward(cloud, ctx.settings.use_deform ? &ctx.deltas : nullptr, ctx.deformed,
                         ctx.settings.opacity_mode, ctx.settings.opacity_k,
                         ctx.settings.deform_sh_dc_only, dg.positions, dg.scales, dg.rotations,
                         dg.alphas, dg.sh_coeffs, &grads->cloud, g_deltas_ptr);
    if (ctx.settings.use_deform) {
        deform_batch_backward(field, cloud.embeddings, cloud.size(), ctx.t, g_deltas, &grads->field);
    }
    grads->screen_grad_norm = dg.screen_grad_norm;
    grads->visible = dg.visible;
}

} // namespace frog
