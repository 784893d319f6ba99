#include "frog/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

#include <json.hpp>

#include "frog/errors.hpp"
#include "frog/ply.hpp"
#include "frog/sh.hpp"

namespace fs = std::filesystem;

namespace frog {

namespace {

double elapsed_ms(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
}

} // namespace

Trainer::Trainer(TrainConfig cfg, SceneDataset dataset)
    : cfg_(std::move(cfg)), data_(std::move(dataset)), rng_(cfg_.seed) {
    cfg_.validate();
    data_.validate();
    for (size_t i = 0; i < data_.frames.size(); ++i) {
        if (!data_.frames[i].is_test) train_frames_.push_back(static_cast<int>(i));
    }
    init_cloud_from_points();
    init_field();
    adam_.init(cloud_, field_);
    grad_accum_.assign(cloud_.size(), 0.0);
    grad_count_.assign(cloud_.size(), 0);
    rebuild_knn();
}

void Trainer::init_cloud_from_points() {
    if (data_.init_points.empty()) {
        throw DataError("dataset has no initialization points");
    }
    const int n = static_cast<int>(data_.init_points.size());
    cloud_.sh_degree = cfg_.sh_degree;
    cloud_.embed_dim = cfg_.embed_dim;
    cloud_.resize(n);
    const int sh = cloud_.sh_count();

    std::vector<double> positions(3 * static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
        positions[3 * i] = data_.init_points[i].x;
        positions[3 * i + 1] = data_.init_points[i].y;
        positions[3 * i + 2] = data_.init_points[i].z;
    }
    // Initial footprint from the mean distance to the three nearest points.
    std::vector<double> nn_dist(n, 0.1);
    if (n >= 2) {
        const KnnGraph g = build_knn(positions, std::min(3, n - 1), 0.0);
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int s = 0; s < g.row_len; ++s) {
                const int j = g.neighbors[static_cast<size_t>(i) * g.row_len + s];
                double d2 = 0.0;
                for (int a = 0; a < 3; ++a) {
                    const double d = positions[3 * i + a] - positions[3 * j + a];
                    d2 += d * d;
                }
                acc += d2;
            }
            nn_dist[i] = std::sqrt(std::max(1e-7, acc / g.row_len));
        }
    }

    std::normal_distribution<double> emb_dist(0.0, cfg_.init_embedding_sigma);
    for (int i = 0; i < n; ++i) {
        for (int a = 0; a < 3; ++a) {
            cloud_.positions[3 * i + a] = positions[3 * i + a];
            cloud_.log_scales[3 * i + a] = std::log(nn_dist[i]);
        }
        cloud_.rotations[4 * i] = 1.0;
        cloud_.opacity_logits[i] = logit(cfg_.init_opacity);
        const size_t base = 3 * static_cast<size_t>(sh) * i;
        cloud_.sh_coeffs[base] = (data_.init_points[i].r - 0.5) / kSh0;
        cloud_.sh_coeffs[base + 1] = (data_.init_points[i].g - 0.5) / kSh0;
        cloud_.sh_coeffs[base + 2] = (data_.init_points[i].b - 0.5) / kSh0;
        for (int d = 0; d < cloud_.embed_dim; ++d) {
            cloud_.embeddings[static_cast<size_t>(i) * cloud_.embed_dim + d] = emb_dist(rng_);
        }
    }
}

void Trainer::init_field() {
    std::set<double> times;
    for (int idx : train_frames_) times.insert(data_.frames[idx].time);
    const int frame_count = static_cast<int>(times.size());
    field_.fusion = cfg_.fusion_mode;
    field_.embed_dim = cfg_.embed_dim;
    field_.sh_count = cloud_.sh_count();
    // k = 0 in the sidecar marks the attenuation as disabled, so only record
    // a nonzero k when training actually uses it.
    field_.opacity_k = cfg_.opacity_mode == OpacityMode::Aggressive ? cfg_.opacity_k : 0.0;
    field_.tables.dim = cfg_.temporal_dim;
    field_.tables.fine_len = cfg_.fine_table_len > 0
                                 ? cfg_.fine_table_len
                                 : std::max(2, frame_count / cfg_.fine_table_divisor);
    field_.tables.coarse_len =
        cfg_.coarse_table_len > 0
            ? cfg_.coarse_table_len
            : std::max(2, field_.tables.fine_len / cfg_.coarse_table_divisor);
    if (field_.tables.coarse_len > field_.tables.fine_len) {
        field_.tables.coarse_len = field_.tables.fine_len;
    }
    field_.init_weights(cfg_.mlp_hidden_layers, cfg_.mlp_hidden_width, cfg_.seed + 0x9e3779b9ULL);
}

void Trainer::rebuild_knn() {
    if (cfg_.loss.lambda_emb > 0.0 && cloud_.size() >= 2) {
        knn_ = build_knn(cloud_.positions, cfg_.loss.k_neighbors, cfg_.loss.lambda_w);
        knn_.built_at_iter = iter_;
    } else {
        knn_ = KnnGraph{};
        knn_.count = cloud_.size();
    }
}

RenderSettings Trainer::render_settings() const {
    RenderSettings s;
    s.opacity_mode = cfg_.opacity_mode;
    s.opacity_k = cfg_.opacity_k;
    s.deform_sh_dc_only = cfg_.deform_sh_dc_only;
    // The canonical field alone carries the warmup phase; the deformation
    // network joins afterwards.
    s.use_deform = iter_ >= cfg_.deform_warmup;
    return s;
}

void Trainer::adam_step(const ParamGrads& grads) {
    ++adam_.step_count;
    adam_.update(adam_.positions, cloud_.positions, grads.cloud.positions, cfg_.position_lr(iter_));
    adam_.update(adam_.log_scales, cloud_.log_scales, grads.cloud.log_scales, cfg_.lr_scale);
    adam_.update(adam_.rotations, cloud_.rotations, grads.cloud.rotations, cfg_.lr_rotation);
    adam_.update(adam_.opacity_logits, cloud_.opacity_logits, grads.cloud.opacity_logits,
                 cfg_.lr_opacity);
    adam_.update(adam_.sh, cloud_.sh_coeffs, grads.cloud.sh_coeffs, cfg_.lr_sh);
    adam_.update(adam_.embeddings, cloud_.embeddings, grads.field.embeddings, cfg_.lr_embedding);
    for (size_t l = 0; l < field_.hidden.size(); ++l) {
        adam_.update(adam_.hidden_w[l], field_.hidden[l].w, grads.field.hidden_w[l], cfg_.lr_mlp);
        adam_.update(adam_.hidden_b[l], field_.hidden[l].b, grads.field.hidden_b[l], cfg_.lr_mlp);
    }
    adam_.update(adam_.out_w, field_.output.w, grads.field.out_w, cfg_.lr_mlp);
    adam_.update(adam_.out_b, field_.output.b, grads.field.out_b, cfg_.lr_mlp);
    adam_.update(adam_.table_fine, field_.tables.fine, grads.field.table_fine, cfg_.lr_tables);
    adam_.update(adam_.table_coarse, field_.tables.coarse, grads.field.table_coarse,
                 cfg_.lr_tables);
}

StepMetrics Trainer::train_step() {
    StepMetrics m;
    m.iter = iter_;
    const int frame_idx = train_frames_[rng_() % train_frames_.size()];
    const Frame& frame = data_.frames[frame_idx];

    ForwardContext ctx = forward_render(cloud_, field_, frame.camera, frame.time,
                                        render_settings());
    m.deform_ms = ctx.deform_ms;
    m.render_ms = ctx.raster_ms;
    auto t0 = std::chrono::steady_clock::now();

    LossResult l1 = l1_loss(ctx.image.color, frame.image);
    m.l1 = l1.value;
    std::vector<double>& g_img = l1.grad;
    if (dssim_active(iter_, cfg_.loss)) {
        const LossResult ds = dssim_loss(ctx.image.color, frame.image);
        m.dssim = ds.value;
        for (size_t i = 0; i < g_img.size(); ++i) g_img[i] += ds.grad[i];
    }
    EmbRegResult emb;
    if (cfg_.loss.lambda_emb > 0.0 && cloud_.size() >= 2) {
        emb = emb_reg_loss(cloud_.embeddings, cloud_.embed_dim, knn_);
        m.emb_reg = emb.value;
    }
    m.total = m.l1 + m.dssim + cfg_.loss.lambda_emb * m.emb_reg;
    m.psnr = psnr(ctx.image.color, frame.image);

    if (!std::isfinite(m.total)) {
        throw NumericError("iteration " + std::to_string(iter_) + ": non-finite loss (l1=" +
                           std::to_string(m.l1) + ", dssim=" + std::to_string(m.dssim) +
                           ", emb_reg=" + std::to_string(m.emb_reg) + ")");
    }

    t0 = std::chrono::steady_clock::now();
    ParamGrads grads;
    grads.init(cloud_, field_);
    backward_render(cloud_, field_, ctx, g_img, &grads);
    if (cfg_.loss.lambda_emb > 0.0 && !emb.grad.empty()) {
        for (size_t i = 0; i < emb.grad.size(); ++i) {
            grads.field.embeddings[i] += cfg_.loss.lambda_emb * emb.grad[i];
        }
    }
    m.backward_ms = elapsed_ms(t0);

    adam_step(grads);

    for (int i = 0; i < cloud_.size(); ++i) {
        grad_accum_[i] += grads.screen_grad_norm[i];
        grad_count_[i] += grads.visible[i];
    }

    const DensifyConfig& dc = cfg_.densify;
    if (dc.enabled && iter_ >= dc.start_iter && iter_ < dc.stop_iter &&
        (iter_ - dc.start_iter) % dc.interval == 0) {
        run_densify_hook();
        m.densify = last_densify_;
    }
    const SamplingConfig& sc = cfg_.sampling;
    if (sc.enabled && iter_ >= sc.start_iter && iter_ <= sc.stop_iter &&
        (iter_ - sc.start_iter) % sc.interval == 0) {
        const int before = cloud_.size();
        run_sampling_hook(ctx, frame);
        m.injected = cloud_.size() - before;
    }

    m.n_gaussians = cloud_.size();
    ++iter_;
    return m;
}

void Trainer::run_densify_hook() {
    std::vector<double> avg(cloud_.size(), 0.0);
    for (int i = 0; i < cloud_.size(); ++i) {
        avg[i] = grad_count_[i] > 0 ? grad_accum_[i] / grad_count_[i] : 0.0;
    }
    std::vector<std::uint8_t> keep;
    last_densify_ = densify_and_prune(cloud_, avg, cfg_.densify, rng_, &keep);
    const int new_rows = last_densify_.cloned + 2 * last_densify_.split;
    adam_.keep_rows(keep, cloud_);
    adam_.append_rows(new_rows, cloud_);
    grad_accum_.assign(cloud_.size(), 0.0);
    grad_count_.assign(cloud_.size(), 0);
    rebuild_knn();
}

void Trainer::run_sampling_hook(const ForwardContext& ctx, const Frame& frame) {
    const std::vector<double> err = error_map(ctx.image.color, frame.image);
    const std::vector<SelectedPixel> picks = select_pixels(err, ctx.image.median_depth,
                                                           frame.camera.width,
                                                           frame.camera.height, cfg_.sampling);
    if (picks.empty()) return;
    std::vector<Vec3> coords, colors;
    coords.reserve(picks.size());
    colors.reserve(picks.size());
    for (const SelectedPixel& p : picks) {
        coords.push_back(backproject(p.u, p.v, p.depth, frame.camera));
        colors.push_back(Vec3(frame.image.at(p.u, p.v, 0), frame.image.at(p.u, p.v, 1),
                              frame.image.at(p.u, p.v, 2)));
    }
    std::vector<AnchorRecord> recs =
        inject_anchors(cloud_, field_, coords, colors, ctx.t, cfg_.sampling);
    adam_.append_rows(static_cast<int>(recs.size()), cloud_);
    grad_accum_.resize(cloud_.size(), 0.0);
    grad_count_.resize(cloud_.size(), 0);
    rebuild_knn();

    if (!debug_dir_.empty()) {
        char name[64];
        std::snprintf(name, sizeof(name), "error_%06lld.raster", static_cast<long long>(iter_));
        save_raster(err, frame.camera.width, frame.camera.height, (fs::path(debug_dir_) / name).string());
        std::snprintf(name, sizeof(name), "median_%06lld.raster", static_cast<long long>(iter_));
        save_raster(ctx.image.median_depth, frame.camera.width, frame.camera.height,
                    (fs::path(debug_dir_) / name).string());
        std::ofstream csv(fs::path(debug_dir_) / "anchors.csv", std::ios::app);
        for (size_t i = 0; i < recs.size(); ++i) {
            csv << iter_ << "," << picks[i].u << "," << picks[i].v << "," << picks[i].depth << ","
                << recs[i].world[0] << "," << recs[i].world[1] << "," << recs[i].world[2] << ","
                << recs[i].donor << "\n";
        }
    }
}

EvalResult evaluate_views(const GaussianCloud& cloud, const DeformationField& field,
                          const SceneDataset& data, const RenderSettings& settings,
                          bool test_only) {
    EvalResult res;
    for (const Frame& frame : data.frames) {
        if (test_only && !frame.is_test) continue;
        const ForwardContext ctx = forward_render(cloud, field, frame.camera, frame.time, settings);
        res.psnr += psnr(ctx.image.color, frame.image);
        res.ssim += ssim_metric(ctx.image.color, frame.image);
        ++res.frames;
    }
    if (res.frames == 0) throw DataError("evaluate: no frames in the requested split");
    res.psnr /= res.frames;
    res.ssim /= res.frames;
    return res;
}

std::vector<Camera> unique_cameras(const SceneDataset& data) {
    std::vector<Camera> cams;
    for (const Frame& f : data.frames) {
        bool seen = false;
        for (const Camera& c : cams) {
            if ((c.camera_to_world - f.camera.camera_to_world).cwiseAbs().maxCoeff() < 1e-12 &&
                c.fx == f.camera.fx && c.fy == f.camera.fy) {
                seen = true;
                break;
            }
        }
        if (!seen) cams.push_back(f.camera);
    }
    return cams;
}

EvalResult Trainer::evaluate(const OpacityMode* mode_override) const {
    RenderSettings settings = render_settings();
    if (mode_override) settings.opacity_mode = *mode_override;
    return evaluate_views(cloud_, field_, data_, settings, true);
}

void Trainer::save_checkpoint(const std::string& prefix) const {
    write_cloud_ply(cloud_, prefix + ".ply");
    save_field(field_, prefix + ".field");
    adam_.save(prefix + ".opt");
}

RenderSettings Checkpoint::render_settings() const {
    RenderSettings s;
    s.opacity_mode = field.opacity_k > 0.0 ? OpacityMode::Aggressive : OpacityMode::Standard;
    s.opacity_k = field.opacity_k;
    s.use_deform = true;
    return s;
}

Checkpoint load_checkpoint(const std::string& prefix) {
    Checkpoint ck;
    ck.cloud = read_cloud_ply(prefix + ".ply");
    ck.field = load_field(prefix + ".field");
    if (ck.field.embed_dim != ck.cloud.embed_dim) {
        throw DataError("checkpoint: embedding width mismatch between ply and sidecar");
    }
    return ck;
}

void Trainer::run(const std::string& out_dir) {
    std::ofstream csv;
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        csv.open(fs::path(out_dir) / "metrics.csv");
        csv << "iter,l1,dssim,emb_reg,total,psnr,n_gaussians,deform_ms,render_ms,backward_ms\n";
    }
    const auto start = std::chrono::steady_clock::now();
    for (long long i = 0; i < cfg_.iterations; ++i) {
        const StepMetrics m = train_step();
        if (csv.is_open()) {
            csv << m.iter << "," << m.l1 << "," << m.dssim << "," << m.emb_reg << "," << m.total
                << "," << m.psnr << "," << m.n_gaussians << "," << m.deform_ms << ","
                << m.render_ms << "," << m.backward_ms << "\n";
        }
        if (!out_dir.empty() && cfg_.checkpoint_every > 0 && (i + 1) % cfg_.checkpoint_every == 0 &&
            i + 1 < cfg_.iterations) {
            char name[64];
            std::snprintf(name, sizeof(name), "checkpoint_%06lld", i + 1);
            save_checkpoint((fs::path(out_dir) / name).string());
        }
        if (cfg_.eval_every > 0 && (i + 1) % cfg_.eval_every == 0 && !data_.test_indices().empty()) {
            const EvalResult ev = evaluate();
            std::printf("iter %lld  psnr %.3f  ssim %.4f  n %d\n", i + 1, ev.psnr, ev.ssim,
                        cloud_.size());
            std::fflush(stdout);
        }
    }
    const double seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    if (!out_dir.empty()) {
        save_checkpoint((fs::path(out_dir) / "checkpoint_final").string());
        nlohmann::json j;
        if (!data_.test_indices().empty()) {
            const EvalResult ev = evaluate();
            j["psnr"] = ev.psnr;
            j["ssim"] = ev.ssim;
        }
        j["n_gaussians"] = cloud_.size();
        j["train_seconds"] = seconds;
        j["iterations"] = cfg_.iterations;
        std::ofstream out(fs::path(out_dir) / "eval.json");
        out << j.dump(1) << "\n";
    }
}

std::vector<BenchResult> benchmark_deform(const DeformationField& tmpl, int count, int timesteps,
                                          const std::vector<FusionMode>& modes, int repetitions) {
    std::mt19937_64 rng(1234);
    std::normal_distribution<double> dist(0.0, 0.1);
    std::vector<double> embeddings(static_cast<size_t>(count) * tmpl.embed_dim);
    for (double& v : embeddings) v = dist(rng);

    std::vector<BenchResult> results;
    for (FusionMode mode : modes) {
        DeformationField field = tmpl;
        field.fusion = mode;
        if (!field.hidden.empty() && field.hidden.front().in != field.input_dim()) {
            // Concat widens the input; rebuild the first layer at equal width.
            DenseLayer& first = field.hidden.front();
            first.in = field.input_dim();
            first.w.assign(static_cast<size_t>(first.in) * first.out, 0.0);
            std::mt19937_64 wrng(99);
            const double bound = std::sqrt(6.0 / (first.in + first.out));
            std::uniform_real_distribution<double> wd(-bound, bound);
            for (double& w : first.w) w = wd(wrng);
        }
        field.mlp_evals = 0;
        DeltaBatch batch;
        std::vector<double> times;
        times.reserve(repetitions);
        for (int rep = 0; rep < repetitions; ++rep) {
            const auto t0 = std::chrono::steady_clock::now();
            for (int s = 0; s < timesteps; ++s) {
                const double t = timesteps > 1 ? static_cast<double>(s) / (timesteps - 1) : 0.0;
                deform_batch(field, embeddings, count, t, &batch);
            }
            times.push_back(elapsed_ms(t0));
        }
        std::sort(times.begin(), times.end());
        BenchResult r;
        r.mode = mode;
        r.median_ms = times[times.size() / 2];
        r.mlp_passes = field.mlp_evals;
        r.passes_per_gaussian_timestep =
            static_cast<double>(field.mlp_evals) /
            (static_cast<double>(count) * timesteps * repetitions);
        results.push_back(r);
    }
    return results;
}

} // namespace frog
