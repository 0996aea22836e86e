#pragma once

#include <cstdint>
#include <functional>
#include <stdexcept>
#include <string>
#include <vector>

#include "nrsfm/losses.hpp"
#include "nrsfm/networks.hpp"

namespace nrsfm {

// Training aborted because the objective left the finite domain.
struct DivergenceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct TrainConfig {
    int batch_size = 256;
    double lr = 0.001;
    double momentum = 0.9;
    int plateau_patience = 5;
    double plateau_rel_improvement = 1e-3;
    double lr_decay_factor = 10.0;
    double min_lr = 1e-6;
    int max_epochs = 100;
    std::uint64_t seed = 0;
    int basis_rank = 10;  // D
    TrunkConfig trunk;
    LossConfig loss;
    int checkpoint_every = 0;  // epochs, 0 disables periodic checkpoints
};

// Global scale factor, computed once from the training split and reused at
// test time: centered 2D extents come out around [-1,1] on average along the
// dataset's highest-variance axis.
struct NormalizationStats {
    double scale = 1.0;
};

NormalizationStats compute_scale(const std::vector<KeypointView>& views);

// center_view followed by multiplication with the global scale.
KeypointView normalize(const KeypointView& view, const NormalizationStats& stats);

// T = mean of visible input keypoints - mean of visible reprojections.
Eigen::Vector2d estimate_translation(const KeypointView& view,
                                     const Eigen::Matrix2Xd& reprojected);

// v <- momentum*v + g; w <- w - lr*v. A non-finite gradient aborts the whole
// step (no parameter moves) and is reported through the return value.
class SgdMomentum {
  public:
    SgdMomentum(double lr, double momentum) : lr_(lr), momentum_(momentum) {}

    bool step(const std::vector<std::pair<std::string, Tensor*>>& params,
              const std::vector<Tensor>& grads);

    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }
    double momentum() const { return momentum_; }
    std::vector<Tensor>& velocity() { return velocity_; }

  private:
    double lr_;
    double momentum_;
    std::vector<Tensor> velocity_;
};

// Divides the learning rate by the decay factor when the best objective has
// not improved by a relative margin for `patience` epochs; the improvement
// counter restarts after a decay so two decays are at least one patience
// window apart.
class PlateauSchedule {
  public:
    PlateauSchedule(double initial_lr, int patience, double rel_improvement, double decay_factor)
        : lr_(initial_lr), patience_(patience), rel_improvement_(rel_improvement),
          decay_factor_(decay_factor) {}

    // feed one epoch objective, returns the learning rate for the next epoch
    double observe(double objective);

    double lr() const { return lr_; }
    int decay_count() const { return decays_; }
    double best() const { return best_; }
    int counter() const { return counter_; }
    void restore(double best, int counter, double lr, int decays) {
        best_ = best;
        counter_ = counter;
        lr_ = lr;
        decays_ = decays;
    }

  private:
    double lr_;
    int patience_;
    double rel_improvement_;
    double decay_factor_;
    double best_ = std::numeric_limits<double>::infinity();
    int counter_ = 0;
    int decays_ = 0;
};

struct EpochRecord {
    int epoch = 0;
    double l1 = 0, l2 = 0, l3 = 0, total = 0;
    double lr = 0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    double wall_time_sec = 0;
    double final_objective = 0;
    int steps = 0;
    int aborted_steps = 0;
};

// Everything needed to checkpoint or resume a run.
struct TrainState {
    ModelWeights weights;
    NormalizationStats stats;
    std::vector<Tensor> velocity;
    int epoch = 0;
    double lr = 0;
    double best_objective = 0;
    int plateau_counter = 0;
    int decay_count = 0;
    std::string rng_state;
};

struct FitResult {
    TrainState state;
    TrainReport report;
};

using StepLogger = std::function<void(int step, const LossBreakdown&, double lr)>;
using CheckpointSink = std::function<void(const TrainState&, const TrainReport&)>;

// End-to-end training loop over pre-split training views (raw units;
// normalization is computed and applied internally). Deterministic in
// cfg.seed. Throws DivergenceError on a non-finite objective, after handing
// the last state to `checkpoint_sink`.
FitResult fit(const std::vector<KeypointView>& train_views, bool has_occlusions,
              const TrainConfig& cfg, const StepLogger& step_logger = nullptr,
              const CheckpointSink& checkpoint_sink = nullptr,
              const TrainState* resume = nullptr);

}  // namespace nrsfm
