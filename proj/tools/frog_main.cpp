#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "frog/errors.hpp"
#include "frog/trainer.hpp"

namespace fs = std::filesystem;
using namespace frog;

namespace {

struct CommonOpts {
    std::string config_path;
    std::string data_path;
    std::string out_dir;
    long long seed = -1;
    int threads = 0;
    std::vector<std::string> overrides;
};

void add_common(CLI::App* cmd, CommonOpts* o) {
    cmd->add_option("--config", o->config_path, "flat key = value config file");
    cmd->add_option("--data", o->data_path, "dataset manifest (file or directory)");
    cmd->add_option("--out", o->out_dir, "output directory");
    cmd->add_option("--seed", o->seed, "seed override");
    cmd->add_option("--threads", o->threads, "worker thread count (overrides OMP_NUM_THREADS)");
    cmd->add_option("--set", o->overrides, "config override key=value, repeatable");
}

TrainConfig build_config(const CommonOpts& o) {
    TrainConfig cfg;
    if (!o.config_path.empty()) cfg = parse_config_file(o.config_path);
    for (const std::string& kv : o.overrides) {
        const size_t eq = kv.find('=');
        if (eq == std::string::npos) {
            throw ConfigError("--set expects key=value, got: " + kv);
        }
        apply_override(&cfg, kv.substr(0, eq), kv.substr(eq + 1));
    }
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    cfg.validate();
    return cfg;
}

void apply_threads(const CommonOpts& o) {
#ifdef _OPENMP
    if (o.threads > 0) omp_set_num_threads(o.threads);
#else
    (void)o;
#endif
}

void announce(const std::string& path) { std::printf("artifact: %s\n", path.c_str()); }

int cmd_train(const CommonOpts& o, bool debug_adaptive) {
    apply_threads(o);
    if (o.data_path.empty()) throw ConfigError("train: --data is required");
    if (o.out_dir.empty()) throw ConfigError("train: --out is required");
    const TrainConfig cfg = build_config(o);
    SceneDataset data = load_dataset(o.data_path);
    Trainer trainer(cfg, std::move(data));
    if (debug_adaptive) {
        fs::create_directories(fs::path(o.out_dir) / "debug");
        trainer.set_debug_dir((fs::path(o.out_dir) / "debug").string());
    }
    trainer.run(o.out_dir);
    announce((fs::path(o.out_dir) / "metrics.csv").string());
    announce((fs::path(o.out_dir) / "checkpoint_final.ply").string());
    announce((fs::path(o.out_dir) / "checkpoint_final.field").string());
    announce((fs::path(o.out_dir) / "checkpoint_final.opt").string());
    announce((fs::path(o.out_dir) / "eval.json").string());
    return 0;
}

int cmd_render(const CommonOpts& o, const std::string& ckpt, int camera, double time,
               bool canonical, bool bypass_opacity) {
    apply_threads(o);
    if (ckpt.empty() || o.data_path.empty()) {
        throw ConfigError("render: --ckpt and --data are required");
    }
    const Checkpoint ck = load_checkpoint(ckpt);
    const SceneDataset data = load_dataset(o.data_path);
    const std::vector<Camera> cams = unique_cameras(data);
    if (camera < 0 || camera >= static_cast<int>(cams.size())) {
        throw DataError("render: camera index out of range (have " +
                        std::to_string(cams.size()) + ")");
    }
    RenderSettings settings = ck.render_settings();
    settings.use_deform = !canonical;
    if (bypass_opacity) settings.opacity_mode = OpacityMode::Bypass;
    const ForwardContext ctx = forward_render(ck.cloud, ck.field, cams[camera], time, settings);
    Image img(cams[camera].width, cams[camera].height);
    img.data = ctx.image.color;
    const fs::path dir = o.out_dir.empty() ? fs::path(".") : fs::path(o.out_dir);
    fs::create_directories(dir);
    const std::string path = (dir / "render.png").string();
    save_png(img, path);
    announce(path);
    return 0;
}

int cmd_eval(const CommonOpts& o, const std::string& ckpt) {
    apply_threads(o);
    if (ckpt.empty() || o.data_path.empty()) {
        throw ConfigError("eval: --ckpt and --data are required");
    }
    const Checkpoint ck = load_checkpoint(ckpt);
    const SceneDataset data = load_dataset(o.data_path);
    const EvalResult r = evaluate_views(ck.cloud, ck.field, data, ck.render_settings(), true);
    nlohmann::json j;
    j["psnr"] = r.psnr;
    j["ssim"] = r.ssim;
    j["frames"] = r.frames;
    j["n_gaussians"] = ck.cloud.size();
    std::printf("%s\n", j.dump().c_str());
    if (!o.out_dir.empty()) {
        fs::create_directories(o.out_dir);
        const std::string path = (fs::path(o.out_dir) / "eval.json").string();
        std::ofstream out(path);
        out << j.dump(1) << "\n";
        announce(path);
    }
    return 0;
}

int cmd_depth(const CommonOpts& o, const std::string& ckpt, int camera, double time,
              const std::string& mode) {
    apply_threads(o);
    if (ckpt.empty() || o.data_path.empty()) {
        throw ConfigError("depth: --ckpt and --data are required");
    }
    if (mode != "mean" && mode != "median") {
        throw ConfigError("depth: --mode must be mean or median");
    }
    const Checkpoint ck = load_checkpoint(ckpt);
    const SceneDataset data = load_dataset(o.data_path);
    const std::vector<Camera> cams = unique_cameras(data);
    if (camera < 0 || camera >= static_cast<int>(cams.size())) {
        throw DataError("depth: camera index out of range (have " + std::to_string(cams.size()) +
                        ")");
    }
    const ForwardContext ctx =
        forward_render(ck.cloud, ck.field, cams[camera], time, ck.render_settings());
    const std::vector<double>& plane =
        mode == "mean" ? ctx.image.mean_depth : ctx.image.median_depth;
    const fs::path dir = o.out_dir.empty() ? fs::path(".") : fs::path(o.out_dir);
    fs::create_directories(dir);
    const std::string raster = (dir / ("depth_" + mode + ".raster")).string();
    const std::string png = (dir / ("depth_" + mode + ".png")).string();
    save_raster(plane, cams[camera].width, cams[camera].height, raster);
    save_png(visualize_map(plane, cams[camera].width, cams[camera].height), png);
    announce(raster);
    announce(png);
    return 0;
}

int cmd_ablate_fusion(const CommonOpts& o, const std::string& modes_csv) {
    apply_threads(o);
    if (o.data_path.empty() || o.out_dir.empty()) {
        throw ConfigError("ablate-fusion: --data and --out are required");
    }
    std::vector<FusionMode> modes;
    std::stringstream ss(modes_csv);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        if (!tok.empty()) modes.push_back(fusion_mode_from_string(tok));
    }
    if (modes.empty()) throw ConfigError("ablate-fusion: no modes given");
    const TrainConfig base = build_config(o);
    const SceneDataset data = load_dataset(o.data_path);

    fs::create_directories(o.out_dir);
    const std::string table_path = (fs::path(o.out_dir) / "ablation.csv").string();
    std::ofstream table(table_path);
    table << "mode,status,psnr,ssim,deform_ms_per_frame,mlp_passes_per_gaussian_frame\n";
    for (FusionMode mode : modes) {
        TrainConfig cfg = base;
        cfg.fusion_mode = mode;
        try {
            Trainer trainer(cfg, data);
            double deform_ms = 0.0;
            long long gaussian_frames = 0;
            const std::uint64_t evals_before = trainer.field().mlp_evals;
            for (long long i = 0; i < cfg.iterations; ++i) {
                const int before = trainer.cloud().size();
                const StepMetrics m = trainer.train_step();
                deform_ms += m.deform_ms;
                // Warmup steps never evaluate the network; keep the
                // per-gaussian pass count meaningful.
                if (i >= cfg.deform_warmup) gaussian_frames += before;
            }
            const double passes =
                static_cast<double>(trainer.field().mlp_evals - evals_before);
            const EvalResult ev = trainer.evaluate();
            table << to_string(mode) << ",ok," << ev.psnr << "," << ev.ssim << ","
                  << deform_ms / cfg.iterations << "," << passes / gaussian_frames << "\n";
        } catch (const std::exception& e) {
            table << to_string(mode) << ",failed,,,,\n";
            std::fprintf(stderr, "mode %s failed: %s\n", to_string(mode).c_str(), e.what());
        }
    }
    table.close();
    announce(table_path);
    return 0;
}

int cmd_gen_synthetic(const CommonOpts& o, const std::string& spec_path) {
    apply_threads(o);
    if (spec_path.empty() || o.out_dir.empty()) {
        throw ConfigError("gen-synthetic: --spec and --out are required");
    }
    const SyntheticSceneSpec spec = load_scene_spec(spec_path);
    const SceneDataset ds = generate_synthetic(spec);
    save_dataset(ds, o.out_dir);
    announce((fs::path(o.out_dir) / "manifest.json").string());
    announce((fs::path(o.out_dir) / "points.ply").string());
    std::printf("frames: %zu, init points: %zu\n", ds.frames.size(), ds.init_points.size());
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"frog: deformable Gaussian splatting on the CPU"};
    app.require_subcommand(1);

    CommonOpts train_o, render_o, eval_o, depth_o, ablate_o, gen_o;
    bool debug_adaptive = false;
    std::string ckpt, depth_mode = "median", modes_csv = "product", spec_path;
    int camera = 0;
    double time = 0.0;
    bool canonical = false, bypass_opacity = false;

    CLI::App* train = app.add_subcommand("train", "optimize a model on a dataset");
    add_common(train, &train_o);
    train->add_flag("--debug-adaptive", debug_adaptive, "dump error/depth rasters and anchors");

    CLI::App* render = app.add_subcommand("render", "render one view from a checkpoint");
    add_common(render, &render_o);
    render->add_option("--ckpt", ckpt, "checkpoint prefix (without extension)");
    render->add_option("--camera", camera, "camera index");
    render->add_option("--time", time, "normalized time in [0,1]");
    render->add_flag("--canonical", canonical, "render the undeformed canonical field");
    render->add_flag("--bypass-opacity", bypass_opacity, "disable opacity deformation");

    CLI::App* eval = app.add_subcommand("eval", "held-out metrics for a checkpoint");
    add_common(eval, &eval_o);
    eval->add_option("--ckpt", ckpt, "checkpoint prefix");

    CLI::App* depth = app.add_subcommand("depth", "dump a depth map from a checkpoint");
    add_common(depth, &depth_o);
    depth->add_option("--ckpt", ckpt, "checkpoint prefix");
    depth->add_option("--camera", camera, "camera index");
    depth->add_option("--time", time, "normalized time in [0,1]");
    depth->add_option("--mode", depth_mode, "mean or median");

    CLI::App* ablate = app.add_subcommand("ablate-fusion", "train each fusion mode, emit a table");
    add_common(ablate, &ablate_o);
    ablate->add_option("--modes", modes_csv, "comma-separated fusion modes");

    CLI::App* gen = app.add_subcommand("gen-synthetic", "generate a synthetic dataset");
    add_common(gen, &gen_o);
    gen->add_option("--spec", spec_path, "scene spec json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (train->parsed()) return cmd_train(train_o, debug_adaptive);
        if (render->parsed()) return cmd_render(render_o, ckpt, camera, time, canonical, bypass_opacity);
        if (eval->parsed()) return cmd_eval(eval_o, ckpt);
        if (depth->parsed()) return cmd_depth(depth_o, ckpt, camera, time, depth_mode);
        if (ablate->parsed()) return cmd_ablate_fusion(ablate_o, modes_csv);
        if (gen->parsed()) return cmd_gen_synthetic(gen_o, spec_path);
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const DataError& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return 3;
    } catch (const NumericError& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return 4;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 3;
    }
    return 2;
}
