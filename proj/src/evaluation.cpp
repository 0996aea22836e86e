#include "nrsfm/evaluation.hpp"

#include <cmath>
#include <stdexcept>

namespace nrsfm {

namespace {

class KahanSum {
  public:
    void add(double v) {
        const double y = v - c_;
        const double t = s_ + y;
        c_ = (t - s_) - y;
        s_ = t;
    }
    double value() const { return s_; }

  private:
    double s_ = 0, c_ = 0;
};

Eigen::Vector2d visible_mean(const KeypointView& view) {
    Eigen::Vector2d m = Eigen::Vector2d::Zero();
    double n = 0;
    for (Eigen::Index i = 0; i < view.keypoints(); ++i) {
        if (view.v[i] <= 0) continue;
        m += view.y.col(i);
        n += 1;
    }
    if (n == 0) throw std::invalid_argument("evaluate: view with no visible keypoints");
    return m / n;
}

void protocol_center(Eigen::Matrix3Xd& x, const EvalProtocol& p) {
    if (p.centering == EvalProtocol::Centering::MeanDepth) {
        x.row(2).array() -= x.row(2).mean();
    } else {
        if (p.root_index < 0 || p.root_index >= x.cols())
            throw std::invalid_argument("evaluate: root joint index out of range");
        x = x.colwise() - Eigen::Vector3d(x.col(p.root_index));
    }
}

}  // namespace

double mpjpe(const Eigen::Matrix3Xd& pred, const Eigen::Matrix3Xd& gt) {
    if (pred.cols() != gt.cols()) throw std::invalid_argument("mpjpe: keypoint count mismatch");
    return (pred - gt).colwise().norm().mean();
}

double stress(const Eigen::Matrix3Xd& pred, const Eigen::Matrix3Xd& gt) {
    const Eigen::Index k = pred.cols();
    if (k != gt.cols()) throw std::invalid_argument("stress: keypoint count mismatch");
    if (k < 2) throw std::invalid_argument("stress: needs at least 2 keypoints");
    double acc = 0;
    for (Eigen::Index i = 0; i < k; ++i)
        for (Eigen::Index j = i + 1; j < k; ++j)
            acc += std::abs((pred.col(i) - pred.col(j)).norm() - (gt.col(i) - gt.col(j)).norm());
    return acc / (static_cast<double>(k) * static_cast<double>(k - 1));
}

Eigen::Matrix3Xd flip_depth(const Eigen::Matrix3Xd& x) {
    Eigen::Matrix3Xd out = x;
    out.row(2) = -out.row(2);
    return out;
}

FlipResult resolve_depth_flip(
    const Eigen::Matrix3Xd& pred, const Eigen::Matrix3Xd& gt,
    const std::function<double(const Eigen::Matrix3Xd&, const Eigen::Matrix3Xd&)>& metric) {
    const double plain = metric(pred, gt);
    const double flipped = metric(flip_depth(pred), gt);
    if (flipped < plain) return {flipped, true};
    return {plain, false};
}

double reprojection_error(const KeypointView& view, const Eigen::Matrix2Xd& reprojection) {
    if (view.keypoints() != reprojection.cols())
        throw std::invalid_argument("reprojection_error: keypoint count mismatch");
    double acc = 0, n = 0;
    for (Eigen::Index i = 0; i < view.keypoints(); ++i) {
        if (view.v[i] <= 0) continue;
        acc += (view.y.col(i) - reprojection.col(i)).squaredNorm();
        n += 1;
    }
    if (n == 0) throw std::invalid_argument("reprojection_error: no visible keypoints");
    return std::sqrt(acc / n);
}

Prediction ModelPredictor::predict(const KeypointView& raw_view) const {
    const KeypointView normalized = normalize(raw_view, stats_);
    const PoseEstimate pose = phi_eval(normalized, weights_);
    const ShapeBasis basis = weights_.shape_basis();

    Prediction out;
    out.alpha = pose.alpha;
    out.theta = pose.theta;
    const Eigen::Matrix3Xd x_norm = reconstruct(pose.alpha, basis);
    const Eigen::Matrix3d rot = rot_expm(pose.theta);
    Eigen::Matrix3Xd x_cam_norm = rot * x_norm;

    Eigen::Vector2d offset = visible_mean(raw_view);
    if (has_occlusions_) {
        const Eigen::Vector2d t = estimate_translation(normalized, project(x_cam_norm));
        offset += t / stats_.scale;
    }
    out.x_canonical = x_norm / stats_.scale;
    out.x_camera = x_cam_norm / stats_.scale;
    out.x_camera.topRows<2>().colwise() += offset;
    out.reprojection = project(out.x_camera);
    return out;
}

EvalReport evaluate(const SynthDataset& data, bool train_split, const PredictFn& predict,
                    const EvalProtocol& protocol) {
    EvalReport report;
    KahanSum sum_mpjpe, sum_stress, sum_reproj, sum_flips;
    int index = 0;
    for (const auto& sv : data.views) {
        ++index;
        if (sv.is_train != train_split) continue;
        const Prediction pred = predict(sv);
        if (pred.x_camera.cols() != sv.gt_structure.cols())
            throw std::invalid_argument("evaluate: prediction keypoint count mismatch");

        Eigen::Matrix3Xd p = pred.x_camera;
        Eigen::Matrix3Xd g = sv.gt_structure;
        if (data.layout) {  // score the active class block only
            const int off = data.layout->offsets[static_cast<std::size_t>(sv.class_id)];
            const int cnt = data.layout->counts[static_cast<std::size_t>(sv.class_id)];
            p = p.middleCols(off, cnt).eval();
            g = g.middleCols(off, cnt).eval();
        }
        protocol_center(p, protocol);
        protocol_center(g, protocol);

        ViewMetrics m;
        m.view_index = index - 1;
        if (protocol.allow_depth_flip) {
            const FlipResult f = resolve_depth_flip(p, g, [](const auto& a, const auto& b) {
                return nrsfm::mpjpe(a, b);
            });
            m.mpjpe = f.value;
            m.depth_flipped = f.flipped;
        } else {
            m.mpjpe = mpjpe(p, g);
        }
        m.stress = stress(p, g);
        m.reproj_error = reprojection_error(sv.view, pred.reprojection);
        report.per_view.push_back(m);

        sum_mpjpe.add(m.mpjpe);
        sum_stress.add(m.stress);
        sum_reproj.add(m.reproj_error);
        sum_flips.add(m.depth_flipped ? 1.0 : 0.0);
    }
    if (report.per_view.empty()) throw std::invalid_argument("evaluate: empty split");
    const double n = static_cast<double>(report.per_view.size());
    report.mean_mpjpe = sum_mpjpe.value() / n;
    report.mean_stress = sum_stress.value() / n;
    report.mean_reproj = sum_reproj.value() / n;
    report.flip_rate = sum_flips.value() / n;
    return report;
}

}  // namespace nrsfm
