#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "nrsfm/networks.hpp"
#include "nrsfm/rng.hpp"

namespace nrsfm {

enum class LossVariant { Base, Equiv, Full };

std::string to_string(LossVariant v);
LossVariant loss_variant_from_string(const std::string& s);

struct LossConfig {
    double epsilon = 0.01;
    LossVariant variant = LossVariant::Full;
    double w1 = 1.0;
    double w2 = 1.0;
    double w3 = 1.0;
    // ablation switch: stop gradients at the canonicalization input so the
    // canonicalization term trains only the canonicalization network
    bool detach_psi_input = false;
};

// ||z||_eps = eps * (sqrt(1 + (||z||/eps)^2) - 1)
double pseudo_huber(const Eigen::VectorXd& z, double eps);

// (1/K) sum_k mask_k * ph(||residual_{:,k}||); mask == nullptr counts all.
Var masked_pseudo_huber_mean(Tape& tape, Var residual, const Eigen::VectorXd* mask, double eps);

// Reprojection penalty of one view. The target is rz*y when rz is given.
// With estimate_translation set, a 2D translation equal to the difference of
// visible means is removed from the residual (it enters the graph, so
// gradients flow through it).
Var reprojection_loss_item(Tape& tape, const KeypointView& view, const Eigen::Matrix2d* rz,
                           Var structure, Var theta, double eps, bool estimate_translation);

// Per-item reconstructions of a pose batch: element n is the (3,K) structure
// of row n of alpha.
std::vector<Var> reconstruct_batch(Tape& tape, Var alpha, const BoundModel& model,
                                   Eigen::Index keypoints);

// Mean reprojection loss over a batch (alpha and theta from the same pass).
Var reprojection_loss_l1(Tape& tape, const std::vector<KeypointView>& batch,
                         const std::vector<Var>& structures, Var theta, const LossConfig& cfg,
                         bool estimate_translation);

// Mean in-plane equivariance loss: pose from the plain pass reprojected under
// the viewpoint of the rotated pass against rotated targets.
Var equivariance_loss_l3(Tape& tape, const std::vector<KeypointView>& batch,
                         const std::vector<Eigen::Matrix2d>& rz,
                         const std::vector<Var>& structures_plain, Var theta_rotated,
                         const LossConfig& cfg, bool estimate_translation);

// Mean canonicalization loss: random rotations applied to the reconstructed
// structures, undone by the canonicalization network through the shared
// basis. Returns the loss and, through `psi_alpha_out`, the predicted
// coefficients when requested.
Var canonicalization_loss_l2(Tape& tape, const std::vector<Eigen::Matrix3d>& rotations,
                             const std::vector<Var>& structures, const BoundModel& model,
                             const TrunkConfig& trunk_cfg, const LossConfig& cfg, bool training,
                             Eigen::Index keypoints, Var* psi_alpha_out = nullptr);

struct LossBreakdown {
    double l1 = 0.0;
    double l2 = 0.0;
    double l3 = 0.0;
    double total = 0.0;
};

struct BatchLoss {
    Var total;
    LossBreakdown breakdown;
};

// Full training objective of one batch under the configured variant:
//   base  -> w1 * l1
//   equiv -> w3 * l3
//   full  -> w3 * l3 + w2 * l2
BatchLoss total_loss(Tape& tape, const std::vector<KeypointView>& batch, bool has_occlusions,
                     ModelWeights& weights, const BoundModel& model, const LossConfig& cfg,
                     Rng& rng, bool training);

}  // namespace nrsfm
