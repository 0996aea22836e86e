#include "nrsfm/networks.hpp"

#include <cmath>
#include <stdexcept>

#include "nrsfm/rng.hpp"

namespace nrsfm {

namespace {

void collect_trunk(const std::string& prefix, TrunkParams& t,
                   std::vector<std::pair<std::string, Tensor*>>& out) {
    out.emplace_back(prefix + ".embed.w", &t.embed.w);
    out.emplace_back(prefix + ".embed.b", &t.embed.b);
    for (std::size_t i = 0; i < t.blocks.size(); ++i) {
        auto& b = t.blocks[i];
        const std::string bp = prefix + ".block" + std::to_string(i);
        out.emplace_back(bp + ".lin1.w", &b.lin1.w);
        out.emplace_back(bp + ".lin1.b", &b.lin1.b);
        out.emplace_back(bp + ".norm1.gamma", &b.norm1.gamma);
        out.emplace_back(bp + ".norm1.beta", &b.norm1.beta);
        out.emplace_back(bp + ".lin2.w", &b.lin2.w);
        out.emplace_back(bp + ".lin2.b", &b.lin2.b);
        out.emplace_back(bp + ".norm2.gamma", &b.norm2.gamma);
        out.emplace_back(bp + ".norm2.beta", &b.norm2.beta);
        out.emplace_back(bp + ".lin3.w", &b.lin3.w);
        out.emplace_back(bp + ".lin3.b", &b.lin3.b);
    }
}

void collect_trunk_buffers(const std::string& prefix, TrunkParams& t,
                           std::vector<std::pair<std::string, Tensor*>>& out) {
    for (std::size_t i = 0; i < t.blocks.size(); ++i) {
        auto& b = t.blocks[i];
        const std::string bp = prefix + ".block" + std::to_string(i);
        out.emplace_back(bp + ".norm1.running_mean", &b.norm1.state.running_mean);
        out.emplace_back(bp + ".norm1.running_var", &b.norm1.state.running_var);
        out.emplace_back(bp + ".norm2.running_mean", &b.norm2.state.running_mean);
        out.emplace_back(bp + ".norm2.running_var", &b.norm2.state.running_var);
    }
}

LinearParams make_linear(Rng& rng, int in, int out, double weight_scale) {
    LinearParams p;
    p.w = Tensor({static_cast<std::size_t>(in), static_cast<std::size_t>(out)});
    const double std = weight_scale / std::sqrt(static_cast<double>(in));
    for (std::size_t i = 0; i < p.w.size(); ++i) p.w[i] = rng.normal(0.0, std);
    p.b = Tensor::zeros({static_cast<std::size_t>(out)});
    return p;
}

NormParams make_norm(int width) {
    NormParams p;
    p.gamma = Tensor::ones({static_cast<std::size_t>(width)});
    p.beta = Tensor::zeros({static_cast<std::size_t>(width)});
    p.state.running_mean = Tensor::zeros({static_cast<std::size_t>(width)});
    p.state.running_var = Tensor::ones({static_cast<std::size_t>(width)});
    return p;
}

TrunkParams make_trunk(Rng& rng, int in, const TrunkConfig& cfg) {
    TrunkParams t;
    t.embed = make_linear(rng, in, cfg.outer, 1.0);
    t.blocks.resize(cfg.num_blocks);
    for (auto& b : t.blocks) {
        b.lin1 = make_linear(rng, cfg.outer, cfg.outer, 1.0);
        b.norm1 = make_norm(cfg.outer);
        b.lin2 = make_linear(rng, cfg.outer, cfg.bottleneck, 1.0);
        b.norm2 = make_norm(cfg.bottleneck);
        b.lin3 = make_linear(rng, cfg.bottleneck, cfg.outer, 1.0);
    }
    return t;
}

LinearVars bind_linear(Tape& tape, LinearParams& p, std::vector<Var>& order) {
    LinearVars v;
    v.w = tape.leaf(p.w);
    v.b = tape.leaf(p.b);
    order.push_back(v.w);
    order.push_back(v.b);
    return v;
}

NormVars bind_norm(Tape& tape, NormParams& p, std::vector<Var>& order) {
    NormVars v;
    v.gamma = tape.leaf(p.gamma);
    v.beta = tape.leaf(p.beta);
    v.state = &p.state;
    order.push_back(v.gamma);
    order.push_back(v.beta);
    return v;
}

TrunkVars bind_trunk(Tape& tape, TrunkParams& p, std::vector<Var>& order) {
    TrunkVars t;
    t.embed = bind_linear(tape, p.embed, order);
    t.blocks.reserve(p.blocks.size());
    for (auto& b : p.blocks) {
        BlockVars bv;
        bv.lin1 = bind_linear(tape, b.lin1, order);
        bv.norm1 = bind_norm(tape, b.norm1, order);
        bv.lin2 = bind_linear(tape, b.lin2, order);
        bv.norm2 = bind_norm(tape, b.norm2, order);
        bv.lin3 = bind_linear(tape, b.lin3, order);
        t.blocks.push_back(std::move(bv));
    }
    return t;
}

Var linear(Tape& tape, Var x, const LinearVars& p) {
    return tape.add_rowvec(tape.matmul(x, p.w), p.b);
}

}  // namespace

std::vector<std::pair<std::string, Tensor*>> ModelWeights::parameters() {
    std::vector<std::pair<std::string, Tensor*>> out;
    collect_trunk("phi", phi_trunk, out);
    out.emplace_back("phi.head_alpha.w", &phi_head_alpha.w);
    out.emplace_back("phi.head_alpha.b", &phi_head_alpha.b);
    out.emplace_back("phi.head_theta.w", &phi_head_theta.w);
    out.emplace_back("phi.head_theta.b", &phi_head_theta.b);
    collect_trunk("psi", psi_trunk, out);
    out.emplace_back("psi.head_alpha.w", &psi_head_alpha.w);
    out.emplace_back("psi.head_alpha.b", &psi_head_alpha.b);
    out.emplace_back("basis", &basis);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelWeights::parameters() const {
    auto mut = const_cast<ModelWeights*>(this)->parameters();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [k, v] : mut) out.emplace_back(k, v);
    return out;
}

std::vector<std::pair<std::string, Tensor*>> ModelWeights::buffers() {
    std::vector<std::pair<std::string, Tensor*>> out;
    collect_trunk_buffers("phi", phi_trunk, out);
    collect_trunk_buffers("psi", psi_trunk, out);
    return out;
}

std::vector<std::pair<std::string, const Tensor*>> ModelWeights::buffers() const {
    auto mut = const_cast<ModelWeights*>(this)->buffers();
    std::vector<std::pair<std::string, const Tensor*>> out;
    out.reserve(mut.size());
    for (auto& [k, v] : mut) out.emplace_back(k, v);
    return out;
}

ShapeBasis ModelWeights::shape_basis() const {
    ShapeBasis b;
    b.s = basis.mat();
    return b;
}

ModelWeights init_weights(std::uint64_t seed, int keypoints, int basis_rank,
                          const TrunkConfig& cfg) {
    if (keypoints < 1 || basis_rank < 1 || cfg.num_blocks < 1 || cfg.outer < 1 ||
        cfg.bottleneck < 1)
        throw std::invalid_argument("init_weights: invalid dimensions");
    ModelWeights w;
    w.keypoints = keypoints;
    w.basis_rank = basis_rank;
    w.trunk = cfg;
    Rng rng(mix64(seed, 0x6e657473));  // "nets"
    const int in = w.input_dim();
    w.phi_trunk = make_trunk(rng, in, cfg);
    // near-zero heads: pose coefficients and rotation start at the origin
    w.phi_head_alpha = make_linear(rng, cfg.outer, basis_rank, 0.01);
    w.phi_head_theta = make_linear(rng, cfg.outer, 3, 0.01);
    w.psi_trunk = make_trunk(rng, in, cfg);
    w.psi_head_alpha = make_linear(rng, cfg.outer, basis_rank, 0.01);
    w.basis = Tensor({static_cast<std::size_t>(3 * basis_rank), static_cast<std::size_t>(keypoints)});
    for (std::size_t i = 0; i < w.basis.size(); ++i) w.basis[i] = rng.normal(0.0, 0.01);
    return w;
}

BoundModel BoundModel::bind(Tape& tape, ModelWeights& weights) {
    BoundModel m;
    m.phi_trunk = bind_trunk(tape, weights.phi_trunk, m.param_order);
    m.phi_head_alpha = bind_linear(tape, weights.phi_head_alpha, m.param_order);
    m.phi_head_theta = bind_linear(tape, weights.phi_head_theta, m.param_order);
    m.psi_trunk = bind_trunk(tape, weights.psi_trunk, m.param_order);
    m.psi_head_alpha = bind_linear(tape, weights.psi_head_alpha, m.param_order);
    m.basis = tape.leaf(weights.basis);
    m.param_order.push_back(m.basis);
    m.basis_d3k = basis_matrix(tape, m.basis, weights.basis_rank, weights.keypoints);
    return m;
}

Var trunk_forward(Tape& tape, Var input, const TrunkVars& trunk, const TrunkConfig& cfg,
                  bool training) {
    Var h = linear(tape, input, trunk.embed);
    for (const auto& b : trunk.blocks) {
        Var z = linear(tape, h, b.lin1);
        if (cfg.batchnorm) z = tape.batchnorm(z, b.norm1.gamma, b.norm1.beta, b.norm1.state, training);
        z = tape.relu(z);
        z = linear(tape, z, b.lin2);
        if (cfg.batchnorm) z = tape.batchnorm(z, b.norm2.gamma, b.norm2.beta, b.norm2.state, training);
        z = tape.relu(z);
        z = linear(tape, z, b.lin3);
        h = tape.add(h, z);
    }
    return h;
}

PhiOutput phi_forward(Tape& tape, Var input, const BoundModel& model, const TrunkConfig& cfg,
                      bool training) {
    Var h = trunk_forward(tape, input, model.phi_trunk, cfg, training);
    return {linear(tape, h, model.phi_head_alpha), linear(tape, h, model.phi_head_theta)};
}

Var psi_forward(Tape& tape, Var input, const BoundModel& model, const TrunkConfig& cfg,
                bool training) {
    Var h = trunk_forward(tape, input, model.psi_trunk, cfg, training);
    return linear(tape, h, model.psi_head_alpha);
}

Tensor phi_input(const std::vector<KeypointView>& batch) {
    if (batch.empty()) throw std::invalid_argument("phi_input: empty batch");
    const Eigen::Index k = batch.front().keypoints();
    Tensor t({batch.size(), static_cast<std::size_t>(3 * k)});
    for (std::size_t n = 0; n < batch.size(); ++n) {
        const KeypointView& view = batch[n];
        if (view.keypoints() != k) throw std::invalid_argument("phi_input: ragged batch");
        for (Eigen::Index i = 0; i < k; ++i) {
            t(n, static_cast<std::size_t>(i)) = view.y(0, i);
            t(n, static_cast<std::size_t>(k + i)) = view.y(1, i);
            t(n, static_cast<std::size_t>(2 * k + i)) = view.v[i];
        }
    }
    return t;
}

PoseEstimate phi_eval(const KeypointView& normalized_view, ModelWeights& weights) {
    Tape tape;
    BoundModel model = BoundModel::bind(tape, weights);
    Var input = tape.constant(phi_input({normalized_view}));
    PhiOutput out = phi_forward(tape, input, model, weights.trunk, /*training=*/false);
    PoseEstimate pose;
    pose.alpha = tape.value(out.alpha).mat().row(0).transpose();
    const Tensor& th = tape.value(out.theta);
    pose.theta = Eigen::Vector3d(th(0, 0), th(0, 1), th(0, 2));
    return pose;
}

Eigen::VectorXd psi_eval(const Eigen::Matrix3Xd& structure, ModelWeights& weights) {
    Tape tape;
    BoundModel model = BoundModel::bind(tape, weights);
    Tensor input({1, static_cast<std::size_t>(3 * structure.cols())});
    Eigen::Index idx = 0;
    for (Eigen::Index r = 0; r < 3; ++r)
        for (Eigen::Index c = 0; c < structure.cols(); ++c)
            input[static_cast<std::size_t>(idx++)] = structure(r, c);
    Var in = tape.constant(std::move(input));
    Var alpha = psi_forward(tape, in, model, weights.trunk, /*training=*/false);
    return tape.value(alpha).mat().row(0).transpose();
}

}  // namespace nrsfm
