#pragma once

#include <Eigen/Core>

#include <vector>

#include "nrsfm/geometry.hpp"
#include "nrsfm/tape.hpp"

namespace nrsfm {

// Linear low-rank shape basis: D stacked 3xK blocks. Structures are linear
// combinations X = sum_d alpha_d * block_d.
struct ShapeBasis {
    Eigen::MatrixXd s;  // (3D, K)

    int rank() const { return static_cast<int>(s.rows() / 3); }
    Eigen::Index keypoints() const { return s.cols(); }
    Eigen::Block<const Eigen::MatrixXd> block(int d) const { return s.middleRows(3 * d, 3); }
};

struct PoseEstimate {
    Eigen::VectorXd alpha;
    Eigen::Vector3d theta;
};

// Keypoint layout for training several keypoint classes in one model:
// class C owns a contiguous block of the concatenated keypoint vector.
struct MulticlassLayout {
    std::vector<int> counts;
    std::vector<int> offsets;
    int total = 0;

    static MulticlassLayout from_counts(const std::vector<int>& counts);
    int class_count() const { return static_cast<int>(counts.size()); }
};

Eigen::Matrix3Xd reconstruct(const Eigen::VectorXd& alpha, const ShapeBasis& basis);

// M(theta) = first two rows of rot_expm(theta).
Eigen::Matrix<double, 2, 3> camera_view(const Eigen::Vector3d& theta);

// Place a per-class view into its block of the padded layout; everything
// outside the block is zero and invisible.
KeypointView pad_multiclass(const KeypointView& class_view, int class_id,
                            const MulticlassLayout& layout);

KeypointView extract_class(const KeypointView& padded, int class_id,
                           const MulticlassLayout& layout);

// --- differentiable counterparts ----------------------------------------

// Reshape a (3D,K) basis to (D,3K); row d is the row-major 3xK block d.
Var basis_matrix(Tape& tape, Var basis, int rank, Eigen::Index keypoints);

// alpha (1,D) x basis (D,3K) -> structure (3,K)
Var reconstruct_on_tape(Tape& tape, Var alpha_row, Var basis_d_by_3k, Eigen::Index keypoints);

}  // namespace nrsfm
