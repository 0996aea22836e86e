#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "nrsfm/geometry.hpp"
#include "nrsfm/shape_model.hpp"

namespace nrsfm {

struct DegenerateStructureError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MetricUpgradeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct RigidSfmSolution {
    Eigen::MatrixXd m_stack;  // (2N, 3), first block gauge-fixed to [I2 0]
    std::vector<Eigen::Matrix3d> rotations;
    Eigen::Matrix3Xd structure;  // (3, K), centered
    double max_residual = 0;     // max abs reprojection residual
};

// Rank-3 factorization of stacked centered views, metric upgrade through the
// row-orthonormality constraints (linear system in the Gram matrix followed
// by Cholesky), rotation completion and first-view gauge fixing.
// Requires N >= 2 fully visible views of a non-degenerate (rank 3) structure.
RigidSfmSolution rigid_factorize(const std::vector<KeypointView>& views);

struct MonocularFit {
    PoseEstimate pose;
    double residual = 0;  // sqrt(mean over visible keypoints of squared residual norm)
    int iterations = 0;
    int best_restart = -1;
};

// Damped Gauss-Newton fit of (alpha, theta) to one view given a fixed basis,
// squared-norm objective, several random restarts (rotation restarts with the
// linear least-squares alpha for each).
MonocularFit monocular_fit(const KeypointView& view, const ShapeBasis& basis, int restarts,
                           std::uint64_t seed);

struct FeasibilityReport {
    long long constraints = 0;            // 2NK
    long long unknowns = 0;               // 6N + ND + 3DK (rigid D=0: 6N + 3K)
    int gauge_dof = 9;                    // intrinsic ambiguity credit
    bool counting_feasible = false;       // constraints >= unknowns - gauge_dof
    long long monocular_constraints = 0;  // 2K
    long long monocular_unknowns = 0;     // 6 + D
    bool keypoint_feasible = false;       // 2K >= 6 + D, i.e. K >= 3 + D/2
    bool feasible = false;                // verdict
};

// Degrees-of-freedom bookkeeping. basis_rank == 0 selects the rigid model,
// whose verdict combines the joint counting inequality with K >= 3; for a
// deformable model the keypoint bound is the operative condition (the joint
// inequality never amortizes the basis at the boundary).
FeasibilityReport feasibility_check(int n_views, int keypoints, int basis_rank);

// Kabsch: the rotation minimizing ||R*a - b||_F for centered clouds.
Eigen::Matrix3d optimal_rotation(const Eigen::Matrix3Xd& a, const Eigen::Matrix3Xd& b);

// Mean per-point distance after centering, optimal rotation and the better
// of the two depth flips; the gauge-invariant recovery error.
double aligned_structure_error(const Eigen::Matrix3Xd& pred, const Eigen::Matrix3Xd& gt);

}  // namespace nrsfm
