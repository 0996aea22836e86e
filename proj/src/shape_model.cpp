#include "nrsfm/shape_model.hpp"

#include <stdexcept>

namespace nrsfm {

MulticlassLayout MulticlassLayout::from_counts(const std::vector<int>& counts) {
    if (counts.empty()) throw std::invalid_argument("multiclass layout: no classes");
    MulticlassLayout l;
    l.counts = counts;
    l.offsets.reserve(counts.size());
    for (int c : counts) {
        if (c <= 0) throw std::invalid_argument("multiclass layout: non-positive class size");
        l.offsets.push_back(l.total);
        l.total += c;
    }
    return l;
}

Eigen::Matrix3Xd reconstruct(const Eigen::VectorXd& alpha, const ShapeBasis& basis) {
    if (alpha.size() != basis.rank())
        throw std::invalid_argument("reconstruct: alpha length does not match basis rank");
    Eigen::Matrix3Xd x = Eigen::Matrix3Xd::Zero(3, basis.keypoints());
    for (int d = 0; d < basis.rank(); ++d) x += alpha[d] * basis.block(d);
    return x;
}

Eigen::Matrix<double, 2, 3> camera_view(const Eigen::Vector3d& theta) {
    return rot_expm(theta).topRows<2>();
}

KeypointView pad_multiclass(const KeypointView& class_view, int class_id,
                            const MulticlassLayout& layout) {
    if (class_id < 0 || class_id >= layout.class_count())
        throw std::out_of_range("pad_multiclass: class id out of range");
    if (class_view.keypoints() != layout.counts[class_id])
        throw std::invalid_argument("pad_multiclass: keypoint count does not match layout");
    KeypointView out;
    out.y = Eigen::Matrix2Xd::Zero(2, layout.total);
    out.v = Eigen::VectorXd::Zero(layout.total);
    const int off = layout.offsets[class_id];
    out.y.middleCols(off, layout.counts[class_id]) = class_view.y;
    out.v.segment(off, layout.counts[class_id]) = class_view.v;
    return out;
}

KeypointView extract_class(const KeypointView& padded, int class_id,
                           const MulticlassLayout& layout) {
    if (class_id < 0 || class_id >= layout.class_count())
        throw std::out_of_range("extract_class: class id out of range");
    if (padded.keypoints() != layout.total)
        throw std::invalid_argument("extract_class: view does not match layout");
    KeypointView out;
    const int off = layout.offsets[class_id];
    out.y = padded.y.middleCols(off, layout.counts[class_id]);
    out.v = padded.v.segment(off, layout.counts[class_id]);
    return out;
}

Var basis_matrix(Tape& tape, Var basis, int rank, Eigen::Index keypoints) {
    // (3D,K) row-major -> (D,3K): the three K-long rows of block d become
    // one contiguous 3K row, i.e. the row-major vec of the 3xK block.
    return tape.reshape(basis, {static_cast<std::size_t>(rank),
                                static_cast<std::size_t>(3 * keypoints)});
}

Var reconstruct_on_tape(Tape& tape, Var alpha_row, Var basis_d_by_3k, Eigen::Index keypoints) {
    Var flat = tape.matmul(alpha_row, basis_d_by_3k);
    return tape.reshape(flat, {3, static_cast<std::size_t>(keypoints)});
}

}  // namespace nrsfm
