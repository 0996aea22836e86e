#include "nrsfm/synthetic.hpp"

#include <cmath>
#include <stdexcept>

namespace nrsfm {

namespace {

constexpr std::uint64_t kBasisTag = 1;
constexpr std::uint64_t kAlphaTag = 2;
constexpr std::uint64_t kRotationTag = 3;
constexpr std::uint64_t kNoiseTag = 4;
constexpr std::uint64_t kOcclusionTag = 5;
constexpr std::uint64_t kSplitTag = 6;

Eigen::MatrixXd make_basis(const SynthConfig& cfg, int class_id) {
    Rng rng(mix64(mix64(cfg.seed, kBasisTag), static_cast<std::uint64_t>(class_id)));
    Eigen::MatrixXd s(3 * cfg.basis_rank, cfg.keypoints);
    for (int d = 0; d < cfg.basis_rank; ++d) {
        // geometrically decaying component scale, first block dominates
        const double std = std::pow(0.5, d);
        for (int r = 0; r < 3; ++r)
            for (int k = 0; k < cfg.keypoints; ++k) s(3 * d + r, k) = rng.normal(0.0, std);
        // center each block so every reconstructed structure is centered
        Eigen::MatrixXd block = s.middleRows(3 * d, 3);
        s.middleRows(3 * d, 3) = block.colwise() - Eigen::Vector3d(block.rowwise().mean());
    }
    return s;
}

}  // namespace

Eigen::Index SynthDataset::total_keypoints() const {
    return layout ? layout->total : static_cast<Eigen::Index>(config.keypoints);
}

std::vector<KeypointView> SynthDataset::split_views(bool train) const {
    std::vector<KeypointView> out;
    for (const auto& v : views)
        if (v.is_train == train) out.push_back(v.view);
    return out;
}

std::vector<const SynthView*> SynthDataset::split(bool train) const {
    std::vector<const SynthView*> out;
    for (const auto& v : views)
        if (v.is_train == train) out.push_back(&v);
    return out;
}

SynthDataset generate(const SynthConfig& cfg) {
    if (cfg.keypoints < 1 || cfg.basis_rank < 1 || cfg.num_shapes < 1 ||
        cfg.views_per_shape < 1 || cfg.classes < 1)
        throw std::invalid_argument("generate: non-positive sizes");
    if (2 * cfg.keypoints < 6 + cfg.basis_rank)
        throw std::invalid_argument("generate: infeasible config, needs 2K >= 6 + D");
    if (cfg.noise_sigma < 0 || cfg.occlusion_prob < 0 || cfg.occlusion_prob >= 1)
        throw std::invalid_argument("generate: invalid corruption parameters");
    if (cfg.train_fraction < 0 || cfg.train_fraction > 1)
        throw std::invalid_argument("generate: invalid train fraction");

    SynthDataset data;
    data.config = cfg;
    data.has_occlusions = cfg.occlusion_prob > 0;
    if (cfg.classes > 1) {
        data.layout = MulticlassLayout::from_counts(
            std::vector<int>(static_cast<std::size_t>(cfg.classes), cfg.keypoints));
    }

    for (int c = 0; c < cfg.classes; ++c) data.gt_bases.push_back(make_basis(cfg, c));

    const int total_shapes = cfg.classes * cfg.num_shapes;
    // per-class shuffled split over shape indices
    std::vector<bool> shape_is_train(static_cast<std::size_t>(total_shapes), true);
    {
        Rng split_rng(mix64(cfg.seed, kSplitTag));
        for (int c = 0; c < cfg.classes; ++c) {
            std::vector<int> ids(static_cast<std::size_t>(cfg.num_shapes));
            for (int i = 0; i < cfg.num_shapes; ++i) ids[static_cast<std::size_t>(i)] = i;
            for (std::size_t i = ids.size(); i > 1; --i)
                std::swap(ids[i - 1], ids[split_rng.uniform_int(i)]);
            const int n_train =
                static_cast<int>(std::lround(cfg.train_fraction * cfg.num_shapes));
            for (int i = 0; i < cfg.num_shapes; ++i) {
                const int gid = c * cfg.num_shapes + ids[static_cast<std::size_t>(i)];
                shape_is_train[static_cast<std::size_t>(gid)] = i < n_train;
            }
        }
    }

    data.views.reserve(static_cast<std::size_t>(total_shapes) *
                       static_cast<std::size_t>(cfg.views_per_shape));
    int view_gid = 0;
    for (int c = 0; c < cfg.classes; ++c) {
        ShapeBasis basis{data.gt_bases[static_cast<std::size_t>(c)]};
        for (int s = 0; s < cfg.num_shapes; ++s) {
            const int shape_gid = c * cfg.num_shapes + s;
            Eigen::VectorXd alpha(cfg.basis_rank);
            if (cfg.rigid) {
                alpha.setOnes();
            } else {
                Rng arng(mix64(mix64(cfg.seed, kAlphaTag), static_cast<std::uint64_t>(shape_gid)));
                for (int d = 0; d < cfg.basis_rank; ++d) alpha[d] = arng.normal(0.0, cfg.alpha_std);
            }
            const Eigen::Matrix3Xd x = reconstruct(alpha, basis);

            for (int v = 0; v < cfg.views_per_shape; ++v, ++view_gid) {
                Rng rot_rng(mix64(mix64(cfg.seed, kRotationTag),
                                  static_cast<std::uint64_t>(view_gid)));
                const Eigen::Matrix3d r = sample_rotation(rot_rng);
                const Eigen::Matrix3Xd x_cam = r * x;

                KeypointView view;
                view.y = project(x_cam);
                view.v = Eigen::VectorXd::Ones(cfg.keypoints);

                if (cfg.noise_sigma > 0) {
                    Rng nrng(mix64(mix64(cfg.seed, kNoiseTag),
                                   static_cast<std::uint64_t>(view_gid)));
                    for (int k = 0; k < cfg.keypoints; ++k)
                        for (int rr = 0; rr < 2; ++rr)
                            view.y(rr, k) += nrng.normal(0.0, cfg.noise_sigma);
                }
                if (cfg.occlusion_prob > 0) {
                    Rng orng(mix64(mix64(cfg.seed, kOcclusionTag),
                                   static_cast<std::uint64_t>(view_gid)));
                    // resample the mask until at least one point survives
                    while (true) {
                        bool any = false;
                        std::vector<bool> drop(static_cast<std::size_t>(cfg.keypoints));
                        for (int k = 0; k < cfg.keypoints; ++k) {
                            drop[static_cast<std::size_t>(k)] =
                                orng.bernoulli(cfg.occlusion_prob);
                            any = any || !drop[static_cast<std::size_t>(k)];
                        }
                        if (!any) continue;
                        for (int k = 0; k < cfg.keypoints; ++k) {
                            if (drop[static_cast<std::size_t>(k)]) {
                                view.y.col(k).setZero();
                                view.v[k] = 0;
                            }
                        }
                        break;
                    }
                }

                SynthView sv;
                sv.gt_rotation = r;
                sv.gt_alpha = alpha;
                sv.shape_index = shape_gid;
                sv.class_id = c;
                sv.is_train = shape_is_train[static_cast<std::size_t>(shape_gid)];
                if (data.layout) {
                    sv.view = pad_multiclass(view, c, *data.layout);
                    sv.gt_structure = Eigen::Matrix3Xd::Zero(3, data.layout->total);
                    sv.gt_structure.middleCols(data.layout->offsets[static_cast<std::size_t>(c)],
                                               cfg.keypoints) = x_cam;
                } else {
                    sv.view = std::move(view);
                    sv.gt_structure = x_cam;
                }
                data.views.push_back(std::move(sv));
            }
        }
    }
    return data;
}

SynthDataset generate_rigid(SynthConfig cfg) {
    cfg.basis_rank = 1;
    cfg.rigid = true;
    return generate(cfg);
}

std::vector<SynthDataset> sweep_grid(const SynthConfig& base, const std::vector<double>& sigmas,
                                     const std::vector<double>& p_occs) {
    if (sigmas.empty() || p_occs.empty()) throw std::invalid_argument("sweep_grid: empty grid");
    std::vector<SynthDataset> out;
    out.reserve(sigmas.size() * p_occs.size());
    for (double sigma : sigmas) {
        for (double p : p_occs) {
            SynthConfig cfg = base;
            cfg.noise_sigma = sigma;
            cfg.occlusion_prob = p;
            out.push_back(generate(cfg));
        }
    }
    return out;
}

}  // namespace nrsfm
