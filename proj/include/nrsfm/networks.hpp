#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "nrsfm/geometry.hpp"
#include "nrsfm/shape_model.hpp"
#include "nrsfm/tape.hpp"
#include "nrsfm/tensor.hpp"

namespace nrsfm {

// Fully connected residual trunk: an embedding layer into `outer` units
// followed by num_blocks blocks of
//   linear(outer) -> norm -> relu -> linear(bottleneck) -> norm -> relu
//   -> linear(outer), plus a skip connection from block input to output.
struct TrunkConfig {
    int num_blocks = 6;
    int outer = 1024;
    int bottleneck = 256;
    bool batchnorm = true;

    bool operator==(const TrunkConfig&) const = default;
};

struct LinearParams {
    Tensor w;  // (in, out)
    Tensor b;  // (out,)
};

struct NormParams {
    Tensor gamma;
    Tensor beta;
    BatchNormState state;
};

struct ResidualBlockParams {
    LinearParams lin1, lin2, lin3;
    NormParams norm1, norm2;
};

struct TrunkParams {
    LinearParams embed;
    std::vector<ResidualBlockParams> blocks;
};

// All trainable state of the model: the factorization network (keypoints to
// pose coefficients and rotation parameters), the canonicalization network
// (rotated structures to pose coefficients) and the shared shape basis.
struct ModelWeights {
    int keypoints = 0;   // K
    int basis_rank = 0;  // D
    TrunkConfig trunk;

    TrunkParams phi_trunk;
    LinearParams phi_head_alpha;  // outer -> D
    LinearParams phi_head_theta;  // outer -> 3
    TrunkParams psi_trunk;
    LinearParams psi_head_alpha;  // outer -> D
    Tensor basis;                 // (3D, K)

    // Trainable tensors in a fixed traversal order (checkpoint / optimizer
    // order). Buffers are the normalization running statistics.
    std::vector<std::pair<std::string, Tensor*>> parameters();
    std::vector<std::pair<std::string, const Tensor*>> parameters() const;
    std::vector<std::pair<std::string, Tensor*>> buffers();
    std::vector<std::pair<std::string, const Tensor*>> buffers() const;

    ShapeBasis shape_basis() const;

    int input_dim() const { return 3 * keypoints; }
};

// Deterministic initialization: fan-in-scaled Gaussians for the trunk,
// near-zero heads (0.01-scaled) so pose and rotation start at the origin,
// zero-mean 0.01-std basis.
ModelWeights init_weights(std::uint64_t seed, int keypoints, int basis_rank,
                          const TrunkConfig& cfg);

// --- tape bindings --------------------------------------------------------

struct LinearVars {
    Var w, b;
};

struct NormVars {
    Var gamma, beta;
    BatchNormState* state = nullptr;
};

struct BlockVars {
    LinearVars lin1, lin2, lin3;
    NormVars norm1, norm2;
};

struct TrunkVars {
    LinearVars embed;
    std::vector<BlockVars> blocks;
};

// Registers every trainable tensor of a model as a leaf on the tape. The
// Vars in `param_order` line up with ModelWeights::parameters().
struct BoundModel {
    TrunkVars phi_trunk;
    LinearVars phi_head_alpha, phi_head_theta;
    TrunkVars psi_trunk;
    LinearVars psi_head_alpha;
    Var basis;         // (3D, K)
    Var basis_d3k;     // (D, 3K) reshape of basis
    std::vector<Var> param_order;

    static BoundModel bind(Tape& tape, ModelWeights& weights);
};

Var trunk_forward(Tape& tape, Var input, const TrunkVars& trunk, const TrunkConfig& cfg,
                  bool training);

struct PhiOutput {
    Var alpha;  // (N, D)
    Var theta;  // (N, 3)
};

// Batched factorization network: rows of `input` are [y_x | y_y | v].
PhiOutput phi_forward(Tape& tape, Var input, const BoundModel& model, const TrunkConfig& cfg,
                      bool training);

// Batched canonicalization network: rows are row-major flattened structures.
Var psi_forward(Tape& tape, Var input, const BoundModel& model, const TrunkConfig& cfg,
                bool training);

// Row-major [y_x | y_y | v] encoding of a batch of (already normalized) views.
Tensor phi_input(const std::vector<KeypointView>& batch);

// Eval-mode single view convenience forward.
PoseEstimate phi_eval(const KeypointView& normalized_view, ModelWeights& weights);
Eigen::VectorXd psi_eval(const Eigen::Matrix3Xd& structure, ModelWeights& weights);

}  // namespace nrsfm
