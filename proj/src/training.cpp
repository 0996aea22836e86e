#include "nrsfm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace nrsfm {

NormalizationStats compute_scale(const std::vector<KeypointView>& views) {
    if (views.empty()) throw std::invalid_argument("compute_scale: empty dataset");
    // highest-variance axis over all centered visible keypoints
    double sq[2] = {0, 0};
    double count = 0;
    std::vector<KeypointView> centered;
    centered.reserve(views.size());
    for (const auto& view : views) {
        centered.push_back(center_view(view));
        const auto& c = centered.back();
        for (Eigen::Index i = 0; i < c.keypoints(); ++i) {
            if (c.v[i] <= 0) continue;
            sq[0] += c.y(0, i) * c.y(0, i);
            sq[1] += c.y(1, i) * c.y(1, i);
            count += 1;
        }
    }
    const int axis = sq[1] > sq[0] ? 1 : 0;

    double extent_sum = 0;
    for (const auto& c : centered) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i < c.keypoints(); ++i) {
            if (c.v[i] <= 0) continue;
            lo = std::min(lo, c.y(axis, i));
            hi = std::max(hi, c.y(axis, i));
        }
        extent_sum += (hi - lo) / 2.0;
    }
    const double mean_half_extent = extent_sum / static_cast<double>(views.size());
    if (!(mean_half_extent > 0))
        throw std::invalid_argument("compute_scale: degenerate dataset, zero mean extent");
    return NormalizationStats{1.0 / mean_half_extent};
}

KeypointView normalize(const KeypointView& view, const NormalizationStats& stats) {
    KeypointView out = center_view(view);
    out.y *= stats.scale;
    return out;
}

Eigen::Vector2d estimate_translation(const KeypointView& view,
                                     const Eigen::Matrix2Xd& reprojected) {
    if (view.keypoints() != reprojected.cols())
        throw std::invalid_argument("estimate_translation: keypoint count mismatch");
    Eigen::Vector2d my = Eigen::Vector2d::Zero(), mp = Eigen::Vector2d::Zero();
    double nvis = 0;
    for (Eigen::Index i = 0; i < view.keypoints(); ++i) {
        if (view.v[i] <= 0) continue;
        my += view.y.col(i);
        mp += reprojected.col(i);
        nvis += 1;
    }
    if (nvis == 0) throw std::invalid_argument("estimate_translation: no visible keypoints");
    return (my - mp) / nvis;
}

bool SgdMomentum::step(const std::vector<std::pair<std::string, Tensor*>>& params,
                       const std::vector<Tensor>& grads) {
    if (params.size() != grads.size())
        throw std::invalid_argument("sgd: parameter/gradient count mismatch");
    if (velocity_.empty()) {
        velocity_.reserve(params.size());
        for (const auto& [name, p] : params) velocity_.push_back(Tensor::zeros(p->shape()));
    }
    for (const auto& g : grads)
        if (!g.all_finite()) return false;  // abort the whole step
    for (std::size_t i = 0; i < params.size(); ++i) {
        velocity_[i].vec() = momentum_ * velocity_[i].vec() + grads[i].vec();
        params[i].second->vec() -= lr_ * velocity_[i].vec();
    }
    return true;
}

double PlateauSchedule::observe(double objective) {
    if (objective < best_ * (1.0 - rel_improvement_) || !std::isfinite(best_)) {
        best_ = objective;
        counter_ = 0;
    } else {
        ++counter_;
        if (counter_ >= patience_) {
            lr_ /= decay_factor_;
            ++decays_;
            counter_ = 0;
        }
    }
    return lr_;
}

FitResult fit(const std::vector<KeypointView>& train_views, bool has_occlusions,
              const TrainConfig& cfg, const StepLogger& step_logger,
              const CheckpointSink& checkpoint_sink, const TrainState* resume) {
    if (train_views.empty()) throw std::invalid_argument("fit: empty dataset");
    if (cfg.batch_size < 1 || !(cfg.lr > 0) || !(cfg.lr_decay_factor > 1))
        throw std::invalid_argument("fit: invalid config");
    const auto t_start = std::chrono::steady_clock::now();

    FitResult result;
    TrainState& state = result.state;
    Rng rng(mix64(cfg.seed, 0x747261696eULL));  // "train"
    if (resume) {
        state = *resume;
        rng = Rng::from_state(resume->rng_state);
    } else {
        state.weights = init_weights(cfg.seed, static_cast<int>(train_views.front().keypoints()),
                                     cfg.basis_rank, cfg.trunk);
        state.stats = compute_scale(train_views);
        state.lr = cfg.lr;
        state.best_objective = std::numeric_limits<double>::infinity();
    }

    std::vector<KeypointView> normalized;
    normalized.reserve(train_views.size());
    for (const auto& view : train_views) normalized.push_back(normalize(view, state.stats));

    SgdMomentum opt(state.lr, cfg.momentum);
    if (resume) opt.velocity() = state.velocity;
    PlateauSchedule schedule(state.lr, cfg.plateau_patience, cfg.plateau_rel_improvement,
                             cfg.lr_decay_factor);
    if (resume)
        schedule.restore(state.best_objective, state.plateau_counter, state.lr, state.decay_count);

    auto params = state.weights.parameters();
    std::vector<std::size_t> order(normalized.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

    TrainReport& report = result.report;
    int step = state.epoch * static_cast<int>((normalized.size() + cfg.batch_size - 1) /
                                              static_cast<std::size_t>(cfg.batch_size));

    auto snapshot = [&](double objective) {
        state.velocity = opt.velocity();
        state.lr = schedule.lr();
        state.best_objective = schedule.best();
        state.plateau_counter = schedule.counter();
        state.decay_count = schedule.decay_count();
        state.rng_state = rng.state();
        report.final_objective = objective;
        report.steps = step;
        report.wall_time_sec =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };

    for (int epoch = state.epoch; epoch < cfg.max_epochs; ++epoch) {
        // one shuffled pass, last partial batch kept
        for (std::size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[rng.uniform_int(i)]);

        LossBreakdown epoch_sums;
        double epoch_items = 0;
        for (std::size_t start = 0; start < order.size();
             start += static_cast<std::size_t>(cfg.batch_size)) {
            const std::size_t stop =
                std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::vector<KeypointView> batch;
            batch.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i) batch.push_back(normalized[order[i]]);

            Tape tape;
            BoundModel model = BoundModel::bind(tape, state.weights);
            BatchLoss loss;
            try {
                loss = total_loss(tape, batch, has_occlusions, state.weights, model, cfg.loss,
                                  rng, /*training=*/true);
                tape.backward(loss.total);
            } catch (const std::domain_error& e) {
                state.epoch = epoch;
                snapshot(std::numeric_limits<double>::quiet_NaN());
                if (checkpoint_sink) checkpoint_sink(state, report);
                throw DivergenceError(std::string("fit: objective left the finite domain: ") +
                                      e.what());
            }

            std::vector<Tensor> grads;
            grads.reserve(params.size());
            for (Var v : model.param_order) grads.push_back(tape.grad(v));
            if (!opt.step(params, grads)) ++report.aborted_steps;

            const double w = static_cast<double>(batch.size());
            epoch_sums.l1 += loss.breakdown.l1 * w;
            epoch_sums.l2 += loss.breakdown.l2 * w;
            epoch_sums.l3 += loss.breakdown.l3 * w;
            epoch_sums.total += loss.breakdown.total * w;
            epoch_items += w;
            ++step;
            if (step_logger) step_logger(step, loss.breakdown, opt.lr());
        }

        EpochRecord rec;
        rec.epoch = epoch;
        rec.l1 = epoch_sums.l1 / epoch_items;
        rec.l2 = epoch_sums.l2 / epoch_items;
        rec.l3 = epoch_sums.l3 / epoch_items;
        rec.total = epoch_sums.total / epoch_items;
        rec.lr = opt.lr();
        report.epochs.push_back(rec);

        const double new_lr = schedule.observe(rec.total);
        opt.set_lr(new_lr);
        state.epoch = epoch + 1;

        if (checkpoint_sink && cfg.checkpoint_every > 0 &&
            (epoch + 1) % cfg.checkpoint_every == 0) {
            snapshot(rec.total);
            checkpoint_sink(state, report);
        }
        if (new_lr < cfg.min_lr) break;
    }

    snapshot(report.epochs.empty() ? std::numeric_limits<double>::quiet_NaN()
                                   : report.epochs.back().total);
    return result;
}

}  // namespace nrsfm
