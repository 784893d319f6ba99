#pragma once

#include <random>
#include <string>
#include <vector>

#include "frog/adam.hpp"
#include "frog/adaptive.hpp"
#include "frog/config.hpp"
#include "frog/losses.hpp"
#include "frog/pipeline.hpp"
#include "frog/scene_io.hpp"

namespace frog {

struct StepMetrics {
    long long iter = 0;
    double l1 = 0.0;
    double dssim = 0.0;
    double emb_reg = 0.0;
    double total = 0.0;
    double psnr = 0.0;
    int n_gaussians = 0;
    double deform_ms = 0.0;
    double render_ms = 0.0;
    double backward_ms = 0.0;
    int injected = 0;
    DensifyCounts densify;
};

struct EvalResult {
    double psnr = 0.0;
    double ssim = 0.0;
    int frames = 0;
};

// End-to-end optimization: owns the canonical cloud, the deformation field,
// the optimizer and the adaptive schedules.
class Trainer {
  public:
    Trainer(TrainConfig cfg, SceneDataset dataset);

    // One optimization step on a random training frame.
    StepMetrics train_step();

    // Runs cfg.iterations steps; when `out_dir` is nonempty, writes the
    // metrics CSV, checkpoints and the final eval JSON there.
    void run(const std::string& out_dir);

    // Held-out metrics; renders with the training opacity mode unless
    // `mode_override` is given. Does not mutate any parameter.
    EvalResult evaluate(const OpacityMode* mode_override = nullptr) const;

    const GaussianCloud& cloud() const { return cloud_; }
    const DeformationField& field() const { return field_; }
    const TrainConfig& config() const { return cfg_; }
    const SceneDataset& dataset() const { return data_; }
    GaussianCloud& mutable_cloud() { return cloud_; }
    long long iteration() const { return iter_; }
    const AdamState& adam() const { return adam_; }
    const KnnGraph& knn() const { return knn_; }

    RenderSettings render_settings() const;

    void save_checkpoint(const std::string& prefix) const;

    // Enables the adaptive debug dumps (error/median rasters, anchor CSV).
    void set_debug_dir(const std::string& dir) { debug_dir_ = dir; }

  private:
    void init_cloud_from_points();
    void init_field();
    void rebuild_knn();
    void run_densify_hook();
    void run_sampling_hook(const ForwardContext& ctx, const Frame& frame);
    void adam_step(const ParamGrads& grads);

    TrainConfig cfg_;
    SceneDataset data_;
    GaussianCloud cloud_;
    DeformationField field_;
    AdamState adam_;
    KnnGraph knn_;
    std::mt19937_64 rng_;
    long long iter_ = 0;
    std::vector<int> train_frames_;
    std::vector<double> grad_accum_;
    std::vector<int> grad_count_;
    DensifyCounts last_densify_;
    std::string debug_dir_;
};

// Loads a checkpoint pair written by save_checkpoint (prefix + ".ply" and
// ".field").
struct Checkpoint {
    GaussianCloud cloud;
    DeformationField field;

    // The sidecar's k determines the rendering opacity path: nonzero means
    // the attenuation was trained in.
    RenderSettings render_settings() const;
};
Checkpoint load_checkpoint(const std::string& prefix);

// Mean held-out (or all-frame) metrics for a model outside a Trainer.
EvalResult evaluate_views(const GaussianCloud& cloud, const DeformationField& field,
                          const SceneDataset& data, const RenderSettings& settings,
                          bool test_only = true);

// Unique cameras in order of first appearance, for the render/depth CLI.
std::vector<Camera> unique_cameras(const SceneDataset& data);

struct BenchResult {
    FusionMode mode;
    double median_ms = 0.0;
    std::uint64_t mlp_passes = 0;
    double passes_per_gaussian_timestep = 0.0;
};

// Median wall time of whole-cloud deformation per mode, plus the exact MLP
// evaluation counts. Modes whose input width differs from the template get a
// fresh first layer of matching shape; hidden widths stay equal throughout.
std::vector<BenchResult> benchmark_deform(const DeformationField& tmpl, int count, int timesteps,
                                          const std::vector<FusionMode>& modes,
                                          int repetitions = 20);

} // namespace frog
