#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "nrsfm/geometry.hpp"
#include "nrsfm/shape_model.hpp"

namespace nrsfm {

// Procedural low-rank NR-SFM benchmark: deformable shapes drawn from a
// random basis, Haar-random viewpoints, orthographic renders with optional
// Gaussian keypoint noise and Bernoulli occlusion.
struct SynthConfig {
    int keypoints = 30;      // per class
    int basis_rank = 4;      // generative D
    int num_shapes = 100;    // per class
    int views_per_shape = 30;
    double alpha_std = 1.0;
    double noise_sigma = 0.0;
    double occlusion_prob = 0.0;
    std::uint64_t seed = 0;
    double train_fraction = 0.8;
    bool rigid = false;  // one shared structure, alpha pinned to 1
    int classes = 1;

    bool operator==(const SynthConfig&) const = default;
};

struct SynthView {
    KeypointView view;
    Eigen::Matrix3Xd gt_structure;  // camera frame, zero outside the class block
    Eigen::Matrix3d gt_rotation;
    Eigen::VectorXd gt_alpha;
    int shape_index = 0;  // global, disjoint across splits
    int class_id = 0;
    bool is_train = true;
};

struct SynthDataset {
    SynthConfig config;
    bool has_occlusions = false;
    std::vector<SynthView> views;
    std::vector<Eigen::MatrixXd> gt_bases;  // one (3D, K_c) basis per class
    std::optional<MulticlassLayout> layout;

    Eigen::Index total_keypoints() const;
    const Eigen::MatrixXd& gt_basis() const { return gt_bases.front(); }
    std::vector<KeypointView> split_views(bool train) const;
    std::vector<const SynthView*> split(bool train) const;
};

// Throws std::invalid_argument when the config violates the keypoint bound
// 2K >= 6 + D or has empty grids/sizes.
SynthDataset generate(const SynthConfig& config);

// All views share one structure (basis rank forced to 1, alpha pinned to 1).
SynthDataset generate_rigid(SynthConfig config);

// One dataset per (sigma, p_occ) cell; identical underlying shapes and
// viewpoints across cells, only the corruption differs. Cell (0,0) is
// bit-identical to generate(base).
std::vector<SynthDataset> sweep_grid(const SynthConfig& base, const std::vector<double>& sigmas,
                                     const std::vector<double>& p_occs);

}  // namespace nrsfm
