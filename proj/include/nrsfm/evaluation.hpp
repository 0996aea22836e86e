#pragma once

#include <functional>
#include <vector>

#include "nrsfm/networks.hpp"
#include "nrsfm/synthetic.hpp"
#include "nrsfm/training.hpp"

namespace nrsfm {

// 3D metric protocol: absolute-depth handling plus optional depth-flip
// resolution (orthographic views cannot distinguish a structure from its
// depth-negated mirror).
struct EvalProtocol {
    enum class Centering { MeanDepth, RootJoint };
    Centering centering = Centering::MeanDepth;
    int root_index = -1;  // required for RootJoint
    bool allow_depth_flip = true;
};

// mean per-joint position error, inputs already protocol-centered
double mpjpe(const Eigen::Matrix3Xd& pred, const Eigen::Matrix3Xd& gt);

// sum_{i<j} | |Xi-Xj| - |Xi*-Xj*| | / (K(K-1)); invariant to rigid motion
// and reflection of either argument
double stress(const Eigen::Matrix3Xd& pred, const Eigen::Matrix3Xd& gt);

Eigen::Matrix3Xd flip_depth(const Eigen::Matrix3Xd& x);

struct FlipResult {
    double value = 0;
    bool flipped = false;  // ties keep the unflipped cloud
};

FlipResult resolve_depth_flip(
    const Eigen::Matrix3Xd& pred, const Eigen::Matrix3Xd& gt,
    const std::function<double(const Eigen::Matrix3Xd&, const Eigen::Matrix3Xd&)>& metric);

// Monocular prediction in the raw units of the input view.
struct Prediction {
    Eigen::VectorXd alpha;
    Eigen::Vector3d theta;
    Eigen::Matrix3Xd x_canonical;
    Eigen::Matrix3Xd x_camera;
    Eigen::Matrix2Xd reprojection;
};

// Wires normalization, the factorization network, the shared basis and
// translation handling into a single raw-view to prediction map.
class ModelPredictor {
  public:
    ModelPredictor(ModelWeights& weights, NormalizationStats stats, bool has_occlusions)
        : weights_(weights), stats_(stats), has_occlusions_(has_occlusions) {}

    Prediction predict(const KeypointView& raw_view) const;

  private:
    ModelWeights& weights_;
    NormalizationStats stats_;
    bool has_occlusions_;
};

struct ViewMetrics {
    int view_index = 0;
    double mpjpe = 0;
    double stress = 0;
    double reproj_error = 0;
    bool depth_flipped = false;
};

struct EvalReport {
    std::vector<ViewMetrics> per_view;
    double mean_mpjpe = 0;
    double mean_stress = 0;
    double mean_reproj = 0;
    double flip_rate = 0;
};

// rms distance of the reprojection from the visible input keypoints
double reprojection_error(const KeypointView& view, const Eigen::Matrix2Xd& reprojection);

using PredictFn = std::function<Prediction(const SynthView&)>;

// Runs the protocol over one split of a ground-truth dataset. Multiclass
// views are scored on their active class block only.
EvalReport evaluate(const SynthDataset& data, bool train_split, const PredictFn& predict,
                    const EvalProtocol& protocol);

}  // namespace nrsfm
