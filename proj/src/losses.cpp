#include "nrsfm/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace nrsfm {

std::string to_string(LossVariant v) {
    switch (v) {
        case LossVariant::Base: return "base";
        case LossVariant::Equiv: return "equiv";
        case LossVariant::Full: return "full";
    }
    return "full";
}

LossVariant loss_variant_from_string(const std::string& s) {
    if (s == "base") return LossVariant::Base;
    if (s == "equiv") return LossVariant::Equiv;
    if (s == "full") return LossVariant::Full;
    throw std::invalid_argument("unknown loss variant: " + s);
}

double pseudo_huber(const Eigen::VectorXd& z, double eps) {
    if (!(eps > 0)) throw std::invalid_argument("pseudo_huber: eps must be positive");
    if (!z.allFinite()) throw std::domain_error("pseudo_huber: non-finite input");
    const double q = z.squaredNorm() / (eps * eps);
    return eps * (std::sqrt(1.0 + q) - 1.0);
}

Var masked_pseudo_huber_mean(Tape& tape, Var residual, const Eigen::VectorXd* mask, double eps) {
    const Tensor& r = tape.value(residual);
    if (r.rank() != 2) throw std::invalid_argument("masked_pseudo_huber_mean: residual not 2-D");
    const std::size_t k = r.shape()[1];
    if (mask && mask->size() != static_cast<Eigen::Index>(k))
        throw std::invalid_argument("masked_pseudo_huber_mean: mask length mismatch");
    Var sq = tape.mul(residual, residual);
    Var per_point = tape.colsum(sq);
    Var ph = tape.pseudo_huber_sq(per_point, eps);
    if (mask) ph = tape.mul(ph, tape.constant(Tensor::from_vector(*mask)));
    return tape.scale(tape.sum(ph), 1.0 / static_cast<double>(k));
}

Var reprojection_loss_item(Tape& tape, const KeypointView& view, const Eigen::Matrix2d* rz,
                           Var structure, Var theta, double eps, bool estimate_translation) {
    const Eigen::Index k = view.keypoints();
    if (k == 0) throw std::invalid_argument("reprojection loss: view has no keypoints");
    Var r = tape.rot_expm(theta);
    Var m = tape.slice_rows(r, 0, 2);
    Var p = tape.matmul(m, structure);

    Eigen::Matrix2Xd target_y = rz ? Eigen::Matrix2Xd(*rz * view.y) : view.y;
    Var target = tape.constant(Tensor::from_matrix(target_y));

    if (estimate_translation) {
        const double nvis = view.visible_count();
        if (nvis <= 0) throw std::invalid_argument("reprojection loss: no visible keypoints");
        Tensor wvis({static_cast<std::size_t>(k), 1});
        Eigen::Vector2d mean_target = Eigen::Vector2d::Zero();
        for (Eigen::Index i = 0; i < k; ++i) {
            wvis(static_cast<std::size_t>(i), 0) = view.v[i] / nvis;
            if (view.v[i] > 0) mean_target += target_y.col(i);
        }
        mean_target /= nvis;
        Var t = tape.sub(tape.constant(Tensor::from_matrix(mean_target)),
                         tape.matmul(p, tape.constant(std::move(wvis))));
        Var t_cols = tape.matmul(t, tape.constant(Tensor::ones({1, static_cast<std::size_t>(k)})));
        p = tape.add(p, t_cols);
    }

    Var residual = tape.sub(target, p);
    return masked_pseudo_huber_mean(tape, residual, &view.v, eps);
}

std::vector<Var> reconstruct_batch(Tape& tape, Var alpha, const BoundModel& model,
                                   Eigen::Index keypoints) {
    const std::size_t n = tape.value(alpha).shape()[0];
    Var flat = tape.matmul(alpha, model.basis_d3k);  // (N, 3K)
    std::vector<Var> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Var row = tape.row(flat, i);
        out.push_back(tape.reshape(row, {3, static_cast<std::size_t>(keypoints)}));
    }
    return out;
}

namespace {

Var batch_mean(Tape& tape, const std::vector<Var>& items) {
    Var acc = items.front();
    for (std::size_t i = 1; i < items.size(); ++i) acc = tape.add(acc, items[i]);
    return tape.scale(acc, 1.0 / static_cast<double>(items.size()));
}

Var theta_row(Tape& tape, Var theta, std::size_t i) { return tape.row(theta, i); }

}  // namespace

Var reprojection_loss_l1(Tape& tape, const std::vector<KeypointView>& batch,
                         const std::vector<Var>& structures, Var theta, const LossConfig& cfg,
                         bool estimate_translation) {
    if (batch.empty()) throw std::invalid_argument("reprojection loss: empty batch");
    std::vector<Var> items;
    items.reserve(batch.size());
    for (std::size_t n = 0; n < batch.size(); ++n)
        items.push_back(reprojection_loss_item(tape, batch[n], nullptr, structures[n],
                                               theta_row(tape, theta, n), cfg.epsilon,
                                               estimate_translation));
    return batch_mean(tape, items);
}

Var equivariance_loss_l3(Tape& tape, const std::vector<KeypointView>& batch,
                         const std::vector<Eigen::Matrix2d>& rz,
                         const std::vector<Var>& structures_plain, Var theta_rotated,
                         const LossConfig& cfg, bool estimate_translation) {
    if (batch.empty()) throw std::invalid_argument("equivariance loss: empty batch");
    if (rz.size() != batch.size())
        throw std::invalid_argument("equivariance loss: rotation count mismatch");
    std::vector<Var> items;
    items.reserve(batch.size());
    for (std::size_t n = 0; n < batch.size(); ++n)
        items.push_back(reprojection_loss_item(tape, batch[n], &rz[n], structures_plain[n],
                                               theta_row(tape, theta_rotated, n), cfg.epsilon,
                                               estimate_translation));
    return batch_mean(tape, items);
}

Var canonicalization_loss_l2(Tape& tape, const std::vector<Eigen::Matrix3d>& rotations,
                             const std::vector<Var>& structures, const BoundModel& model,
                             const TrunkConfig& trunk_cfg, const LossConfig& cfg, bool training,
                             Eigen::Index keypoints, Var* psi_alpha_out) {
    if (structures.empty()) throw std::invalid_argument("canonicalization loss: empty batch");
    if (rotations.size() != structures.size())
        throw std::invalid_argument("canonicalization loss: rotation count mismatch");
    const std::size_t n = structures.size();
    std::vector<Var> targets;
    std::vector<Var> rotated_flat;
    targets.reserve(n);
    rotated_flat.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Var x = cfg.detach_psi_input ? tape.detach(structures[i]) : structures[i];
        targets.push_back(x);
        Var xr = tape.matmul(tape.constant(Tensor::from_matrix(rotations[i])), x);
        rotated_flat.push_back(tape.reshape(xr, {static_cast<std::size_t>(3 * keypoints)}));
    }
    Var psi_in = tape.stack_rows(rotated_flat);
    Var alpha_hat = psi_forward(tape, psi_in, model, trunk_cfg, training);
    if (psi_alpha_out) *psi_alpha_out = alpha_hat;
    std::vector<Var> hats = reconstruct_batch(tape, alpha_hat, model, keypoints);
    std::vector<Var> items;
    items.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        Var diff = tape.sub(targets[i], hats[i]);
        items.push_back(masked_pseudo_huber_mean(tape, diff, nullptr, cfg.epsilon));
    }
    return batch_mean(tape, items);
}

BatchLoss total_loss(Tape& tape, const std::vector<KeypointView>& batch, bool has_occlusions,
                     ModelWeights& weights, const BoundModel& model, const LossConfig& cfg,
                     Rng& rng, bool training) {
    if (batch.empty()) throw std::invalid_argument("total_loss: empty batch");
    const Eigen::Index k = batch.front().keypoints();
    const bool translate = has_occlusions;

    Var input = tape.constant(phi_input(batch));
    PhiOutput plain = phi_forward(tape, input, model, weights.trunk, training);
    std::vector<Var> structures = reconstruct_batch(tape, plain.alpha, model, k);

    BatchLoss out;
    out.total = Var{-1};

    if (cfg.variant == LossVariant::Base) {
        Var l1 = reprojection_loss_l1(tape, batch, structures, plain.theta, cfg, translate);
        out.breakdown.l1 = tape.value(l1).value();
        out.total = tape.scale(l1, cfg.w1);
    } else {
        // rotated pass
        std::vector<Eigen::Matrix2d> rz;
        rz.reserve(batch.size());
        std::vector<KeypointView> rotated;
        rotated.reserve(batch.size());
        for (const auto& view : batch) {
            const auto [rz2, rz3] = sample_inplane_rotation(rng);
            (void)rz3;
            rz.push_back(rz2);
            KeypointView rv;
            rv.y = rz2 * view.y;
            rv.v = view.v;
            rotated.push_back(std::move(rv));
        }
        Var input_rot = tape.constant(phi_input(rotated));
        PhiOutput rot = phi_forward(tape, input_rot, model, weights.trunk, training);
        Var l3 = equivariance_loss_l3(tape, batch, rz, structures, rot.theta, cfg, translate);
        out.breakdown.l3 = tape.value(l3).value();
        out.total = tape.scale(l3, cfg.w3);

        if (cfg.variant == LossVariant::Full) {
            std::vector<Eigen::Matrix3d> rhat;
            rhat.reserve(batch.size());
            for (std::size_t i = 0; i < batch.size(); ++i) rhat.push_back(sample_rotation(rng));
            Var l2 = canonicalization_loss_l2(tape, rhat, structures, model, weights.trunk, cfg,
                                              training, k);
            out.breakdown.l2 = tape.value(l2).value();
            out.total = tape.add(out.total, tape.scale(l2, cfg.w2));
        }
    }
    out.breakdown.total = tape.value(out.total).value();
    return out;
}

}  // namespace nrsfm
