#include "nrsfm/io.hpp"

#include <cstring>
#include <fstream>
#include <iomanip>

namespace nrsfm::io {

using nlohmann::json;

namespace {

constexpr char kB64Chars[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";

json matrix_to_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
    json rows = json::array();
    for (Eigen::Index r = 0; r < m.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
        rows.push_back(std::move(row));
    }
    return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
    if (!j.is_array() || j.empty()) throw DataError("expected a non-empty matrix");
    const std::size_t rows = j.size();
    const std::size_t cols = j.at(0).size();
    Eigen::MatrixXd m(rows, cols);
    for (std::size_t r = 0; r < rows; ++r) {
        const json& row = j.at(r);
        if (row.size() != cols) throw DataError("ragged matrix rows");
        for (std::size_t c = 0; c < cols; ++c)
            m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                row.at(c).get<double>();
    }
    return m;
}

json vector_to_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v[i]);
    return out;
}

Eigen::VectorXd vector_from_json(const json& j) {
    Eigen::VectorXd v(j.size());
    for (std::size_t i = 0; i < j.size(); ++i)
        v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
    return v;
}

json tensor_to_json(const Tensor& t, WeightEncoding enc) {
    json out;
    out["shape"] = t.shape();
    if (enc == WeightEncoding::Base64) {
        out["b64"] = base64_encode(t.data(), t.size());
    } else {
        json data = json::array();
        for (std::size_t i = 0; i < t.size(); ++i) data.push_back(t[i]);
        out["data"] = std::move(data);
    }
    return out;
}

Tensor tensor_from_json(const json& j) {
    Shape shape = j.at("shape").get<Shape>();
    std::vector<double> data;
    if (j.contains("b64")) {
        data = base64_decode(j.at("b64").get<std::string>());
    } else {
        data = j.at("data").get<std::vector<double>>();
    }
    try {
        return Tensor(std::move(shape), std::move(data));
    } catch (const std::invalid_argument& e) {
        throw DataError(std::string("bad tensor: ") + e.what());
    }
}

void require_kind(const json& j, const std::string& kind, int version) {
    if (!j.is_object() || j.value("kind", "") != kind)
        throw DataError("file is not a " + kind + " file");
    if (j.value("schema_version", -1) != version)
        throw DataError(kind + " schema version mismatch, expected " + std::to_string(version));
}

}  // namespace

std::string base64_encode(const double* data, std::size_t count) {
    const auto* bytes = reinterpret_cast<const unsigned char*>(data);
    const std::size_t n = count * sizeof(double);
    std::string out;
    out.reserve((n + 2) / 3 * 4);
    for (std::size_t i = 0; i < n; i += 3) {
        unsigned int v = bytes[i] << 16;
        if (i + 1 < n) v |= bytes[i + 1] << 8;
        if (i + 2 < n) v |= bytes[i + 2];
        out.push_back(kB64Chars[(v >> 18) & 63]);
        out.push_back(kB64Chars[(v >> 12) & 63]);
        out.push_back(i + 1 < n ? kB64Chars[(v >> 6) & 63] : '=');
        out.push_back(i + 2 < n ? kB64Chars[v & 63] : '=');
    }
    return out;
}

std::vector<double> base64_decode(const std::string& text) {
    static int lookup[256];
    static bool init = [] {
        std::memset(lookup, -1, sizeof lookup);
        for (int i = 0; i < 64; ++i) lookup[static_cast<unsigned char>(kB64Chars[i])] = i;
        return true;
    }();
    (void)init;
    if (text.size() % 4 != 0) throw DataError("base64: length not a multiple of 4");
    std::vector<unsigned char> bytes;
    bytes.reserve(text.size() / 4 * 3);
    for (std::size_t i = 0; i < text.size(); i += 4) {
        int vals[4] = {0, 0, 0, 0};
        int pad = 0;
        for (int k = 0; k < 4; ++k) {
            const char c = text[i + static_cast<std::size_t>(k)];
            if (c == '=') {
                ++pad;
                continue;
            }
            vals[k] = lookup[static_cast<unsigned char>(c)];
            if (vals[k] < 0) throw DataError("base64: invalid character");
        }
        const unsigned int v = (static_cast<unsigned int>(vals[0]) << 18) |
                               (static_cast<unsigned int>(vals[1]) << 12) |
                               (static_cast<unsigned int>(vals[2]) << 6) |
                               static_cast<unsigned int>(vals[3]);
        bytes.push_back((v >> 16) & 0xff);
        if (pad < 2) bytes.push_back((v >> 8) & 0xff);
        if (pad < 1) bytes.push_back(v & 0xff);
    }
    if (bytes.size() % sizeof(double) != 0) throw DataError("base64: not a double array");
    std::vector<double> out(bytes.size() / sizeof(double));
    std::memcpy(out.data(), bytes.data(), bytes.size());
    return out;
}

// --- datasets ----------------------------------------------------------------

json dataset_to_json(const SynthDataset& data) {
    json j;
    j["kind"] = "dataset";
    j["schema_version"] = kDatasetSchemaVersion;
    const SynthConfig& c = data.config;
    j["config"] = {{"keypoints", c.keypoints},
                   {"basis_rank", c.basis_rank},
                   {"num_shapes", c.num_shapes},
                   {"views_per_shape", c.views_per_shape},
                   {"alpha_std", c.alpha_std},
                   {"noise_sigma", c.noise_sigma},
                   {"occlusion_prob", c.occlusion_prob},
                   {"seed", c.seed},
                   {"train_fraction", c.train_fraction},
                   {"rigid", c.rigid},
                   {"classes", c.classes}};
    j["has_occlusions"] = data.has_occlusions;
    if (data.layout) j["multiclass"] = {{"counts", data.layout->counts}};

    json views = json::array();
    for (const auto& sv : data.views) {
        json v;
        v["y"] = matrix_to_json(sv.view.y);
        v["v"] = vector_to_json(sv.view.v);
        v["shape"] = sv.shape_index;
        v["class"] = sv.class_id;
        v["train"] = sv.is_train;
        views.push_back(std::move(v));
    }
    j["views"] = std::move(views);

    json gt;
    json bases = json::array();
    for (const auto& b : data.gt_bases) bases.push_back(matrix_to_json(b));
    gt["bases"] = std::move(bases);
    json gtviews = json::array();
    for (const auto& sv : data.views) {
        json v;
        v["structure"] = matrix_to_json(sv.gt_structure);
        v["rotation"] = matrix_to_json(sv.gt_rotation);
        v["alpha"] = vector_to_json(sv.gt_alpha);
        gtviews.push_back(std::move(v));
    }
    gt["views"] = std::move(gtviews);
    j["gt"] = std::move(gt);
    return j;
}

SynthDataset dataset_from_json(const json& j) {
    require_kind(j, "dataset", kDatasetSchemaVersion);
    SynthDataset data;
    const json& c = j.at("config");
    data.config.keypoints = c.at("keypoints").get<int>();
    data.config.basis_rank = c.at("basis_rank").get<int>();
    data.config.num_shapes = c.at("num_shapes").get<int>();
    data.config.views_per_shape = c.at("views_per_shape").get<int>();
    data.config.alpha_std = c.at("alpha_std").get<double>();
    data.config.noise_sigma = c.at("noise_sigma").get<double>();
    data.config.occlusion_prob = c.at("occlusion_prob").get<double>();
    data.config.seed = c.at("seed").get<std::uint64_t>();
    data.config.train_fraction = c.at("train_fraction").get<double>();
    data.config.rigid = c.at("rigid").get<bool>();
    data.config.classes = c.at("classes").get<int>();
    data.has_occlusions = j.at("has_occlusions").get<bool>();
    if (j.contains("multiclass"))
        data.layout =
            MulticlassLayout::from_counts(j.at("multiclass").at("counts").get<std::vector<int>>());

    const json& views = j.at("views");
    const json* gtviews = nullptr;
    if (j.contains("gt")) {
        for (const auto& b : j.at("gt").at("bases")) data.gt_bases.push_back(matrix_from_json(b));
        gtviews = &j.at("gt").at("views");
        if (gtviews->size() != views.size())
            throw DataError("dataset: gt view count does not match views");
    }
    const Eigen::Index total_k =
        data.layout ? data.layout->total : static_cast<Eigen::Index>(data.config.keypoints);
    data.views.reserve(views.size());
    for (std::size_t i = 0; i < views.size(); ++i) {
        const json& v = views.at(i);
        SynthView sv;
        sv.view.y = matrix_from_json(v.at("y"));
        sv.view.v = vector_from_json(v.at("v"));
        if (sv.view.y.rows() != 2 || sv.view.y.cols() != total_k ||
            sv.view.v.size() != total_k)
            throw DataError("dataset: view arrays are dimensionally inconsistent");
        sv.shape_index = v.at("shape").get<int>();
        sv.class_id = v.at("class").get<int>();
        sv.is_train = v.at("train").get<bool>();
        if (gtviews) {
            const json& g = gtviews->at(i);
            sv.gt_structure = matrix_from_json(g.at("structure"));
            sv.gt_rotation = matrix_from_json(g.at("rotation"));
            sv.gt_alpha = vector_from_json(g.at("alpha"));
            if (sv.gt_structure.cols() != total_k)
                throw DataError("dataset: gt structure dimensionally inconsistent");
        } else {
            sv.gt_structure = Eigen::Matrix3Xd::Zero(3, total_k);
            sv.gt_rotation = Eigen::Matrix3d::Identity();
            sv.gt_alpha = Eigen::VectorXd::Zero(data.config.basis_rank);
        }
        data.views.push_back(std::move(sv));
    }
    return data;
}

// --- checkpoints ---------------------------------------------------------------

json train_config_to_json(const TrainConfig& cfg) {
    return {{"batch_size", cfg.batch_size},
            {"lr", cfg.lr},
            {"momentum", cfg.momentum},
            {"plateau_patience", cfg.plateau_patience},
            {"plateau_rel_improvement", cfg.plateau_rel_improvement},
            {"lr_decay_factor", cfg.lr_decay_factor},
            {"min_lr", cfg.min_lr},
            {"max_epochs", cfg.max_epochs},
            {"seed", cfg.seed},
            {"basis_rank", cfg.basis_rank},
            {"trunk",
             {{"num_blocks", cfg.trunk.num_blocks},
              {"outer", cfg.trunk.outer},
              {"bottleneck", cfg.trunk.bottleneck},
              {"batchnorm", cfg.trunk.batchnorm}}},
            {"loss",
             {{"epsilon", cfg.loss.epsilon},
              {"variant", to_string(cfg.loss.variant)},
              {"w1", cfg.loss.w1},
              {"w2", cfg.loss.w2},
              {"w3", cfg.loss.w3},
              {"detach_psi_input", cfg.loss.detach_psi_input}}},
            {"checkpoint_every", cfg.checkpoint_every}};
}

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    cfg.batch_size = j.at("batch_size").get<int>();
    cfg.lr = j.at("lr").get<double>();
    cfg.momentum = j.at("momentum").get<double>();
    cfg.plateau_patience = j.at("plateau_patience").get<int>();
    cfg.plateau_rel_improvement = j.at("plateau_rel_improvement").get<double>();
    cfg.lr_decay_factor = j.at("lr_decay_factor").get<double>();
    cfg.min_lr = j.at("min_lr").get<double>();
    cfg.max_epochs = j.at("max_epochs").get<int>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    cfg.basis_rank = j.at("basis_rank").get<int>();
    const json& t = j.at("trunk");
    cfg.trunk.num_blocks = t.at("num_blocks").get<int>();
    cfg.trunk.outer = t.at("outer").get<int>();
    cfg.trunk.bottleneck = t.at("bottleneck").get<int>();
    cfg.trunk.batchnorm = t.at("batchnorm").get<bool>();
    const json& l = j.at("loss");
    cfg.loss.epsilon = l.at("epsilon").get<double>();
    cfg.loss.variant = loss_variant_from_string(l.at("variant").get<std::string>());
    cfg.loss.w1 = l.at("w1").get<double>();
    cfg.loss.w2 = l.at("w2").get<double>();
    cfg.loss.w3 = l.at("w3").get<double>();
    cfg.loss.detach_psi_input = l.at("detach_psi_input").get<bool>();
    cfg.checkpoint_every = j.at("checkpoint_every").get<int>();
    return cfg;
}

json checkpoint_to_json(const Checkpoint& ckpt, WeightEncoding enc) {
    json j;
    j["kind"] = "checkpoint";
    j["schema_version"] = kCheckpointSchemaVersion;
    const ModelWeights& w = ckpt.state.weights;
    j["dims"] = {{"keypoints", w.keypoints},
                 {"basis_rank", w.basis_rank},
                 {"trunk",
                  {{"num_blocks", w.trunk.num_blocks},
                   {"outer", w.trunk.outer},
                   {"bottleneck", w.trunk.bottleneck},
                   {"batchnorm", w.trunk.batchnorm}}}};
    j["normalization"] = {{"scale", ckpt.state.stats.scale}};
    j["has_occlusions"] = ckpt.has_occlusions;
    j["train_config"] = train_config_to_json(ckpt.config);

    json weights;
    for (const auto& [name, t] : w.parameters()) weights[name] = tensor_to_json(*t, enc);
    j["weights"] = std::move(weights);
    json buffers;
    for (const auto& [name, t] : w.buffers()) buffers[name] = tensor_to_json(*t, enc);
    j["buffers"] = std::move(buffers);

    json opt;
    opt["epoch"] = ckpt.state.epoch;
    opt["lr"] = ckpt.state.lr;
    opt["best_objective"] = ckpt.state.best_objective;
    opt["plateau_counter"] = ckpt.state.plateau_counter;
    opt["decay_count"] = ckpt.state.decay_count;
    json velocity = json::array();
    for (const auto& v : ckpt.state.velocity) velocity.push_back(tensor_to_json(v, enc));
    opt["velocity"] = std::move(velocity);
    j["optimizer"] = std::move(opt);
    j["rng_state"] = ckpt.state.rng_state;
    return j;
}

Checkpoint checkpoint_from_json(const json& j) {
    require_kind(j, "checkpoint", kCheckpointSchemaVersion);
    Checkpoint ckpt;
    ckpt.config = train_config_from_json(j.at("train_config"));
    ckpt.has_occlusions = j.at("has_occlusions").get<bool>();

    const json& dims = j.at("dims");
    TrunkConfig trunk;
    const json& t = dims.at("trunk");
    trunk.num_blocks = t.at("num_blocks").get<int>();
    trunk.outer = t.at("outer").get<int>();
    trunk.bottleneck = t.at("bottleneck").get<int>();
    trunk.batchnorm = t.at("batchnorm").get<bool>();
    ckpt.state.weights = init_weights(0, dims.at("keypoints").get<int>(),
                                      dims.at("basis_rank").get<int>(), trunk);

    const json& weights = j.at("weights");
    for (auto& [name, tensor] : ckpt.state.weights.parameters()) {
        if (!weights.contains(name)) throw DataError("checkpoint: missing parameter " + name);
        Tensor loaded = tensor_from_json(weights.at(name));
        if (!loaded.same_shape(*tensor))
            throw DataError("checkpoint: parameter " + name + " has wrong shape");
        *tensor = std::move(loaded);
    }
    const json& buffers = j.at("buffers");
    for (auto& [name, tensor] : ckpt.state.weights.buffers()) {
        if (!buffers.contains(name)) throw DataError("checkpoint: missing buffer " + name);
        Tensor loaded = tensor_from_json(buffers.at(name));
        if (!loaded.same_shape(*tensor))
            throw DataError("checkpoint: buffer " + name + " has wrong shape");
        *tensor = std::move(loaded);
    }

    ckpt.state.stats.scale = j.at("normalization").at("scale").get<double>();
    const json& opt = j.at("optimizer");
    ckpt.state.epoch = opt.at("epoch").get<int>();
    ckpt.state.lr = opt.at("lr").get<double>();
    ckpt.state.best_objective = opt.at("best_objective").get<double>();
    ckpt.state.plateau_counter = opt.at("plateau_counter").get<int>();
    ckpt.state.decay_count = opt.at("decay_count").get<int>();
    for (const auto& v : opt.at("velocity")) ckpt.state.velocity.push_back(tensor_from_json(v));
    ckpt.state.rng_state = j.at("rng_state").get<std::string>();
    return ckpt;
}

// --- reports -------------------------------------------------------------------

json train_report_to_json(const TrainReport& report, const TrainConfig& cfg,
                          bool has_occlusions) {
    json epochs = json::array();
    for (const auto& e : report.epochs)
        epochs.push_back({{"epoch", e.epoch},
                          {"l1", e.l1},
                          {"l2", e.l2},
                          {"l3", e.l3},
                          {"total", e.total},
                          {"lr", e.lr}});
    return {{"kind", "train_report"},
            {"config", train_config_to_json(cfg)},
            {"has_occlusions", has_occlusions},
            {"epochs", std::move(epochs)},
            {"final_objective", report.final_objective},
            {"steps", report.steps},
            {"aborted_steps", report.aborted_steps},
            {"wall_time_sec", report.wall_time_sec}};
}

json eval_report_to_json(const EvalReport& report, const EvalProtocol& protocol) {
    json per_view = json::array();
    for (const auto& m : report.per_view)
        per_view.push_back({{"view", m.view_index},
                            {"mpjpe", m.mpjpe},
                            {"stress", m.stress},
                            {"reproj_error", m.reproj_error},
                            {"depth_flipped", m.depth_flipped}});
    return {{"kind", "eval_report"},
            {"protocol",
             {{"centering",
               protocol.centering == EvalProtocol::Centering::MeanDepth ? "mean_depth"
                                                                        : "root_joint"},
              {"root_index", protocol.root_index},
              {"allow_depth_flip", protocol.allow_depth_flip}}},
            {"aggregate",
             {{"mpjpe", report.mean_mpjpe},
              {"stress", report.mean_stress},
              {"reproj_error", report.mean_reproj},
              {"flip_rate", report.flip_rate},
              {"views", report.per_view.size()}}},
            {"per_view", std::move(per_view)}};
}

void save_json(const json& j, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << j.dump(2) << '\n';
    if (!out) throw DataError("write failed: " + path);
}

json load_json(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open: " + path);
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw DataError("json parse error in " + path + ": " + e.what());
    }
    return j;
}

void save_dataset(const SynthDataset& data, const std::string& path) {
    save_json(dataset_to_json(data), path);
}

SynthDataset load_dataset(const std::string& path) {
    try {
        return dataset_from_json(load_json(path));
    } catch (const json::exception& e) {
        throw DataError("malformed dataset " + path + ": " + e.what());
    }
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path, WeightEncoding enc) {
    save_json(checkpoint_to_json(ckpt, enc), path);
}

Checkpoint load_checkpoint(const std::string& path) {
    try {
        return checkpoint_from_json(load_json(path));
    } catch (const json::exception& e) {
        throw DataError("malformed checkpoint " + path + ": " + e.what());
    }
}

// --- point clouds ----------------------------------------------------------------

void write_ply(const Eigen::Matrix3Xd& points, const Eigen::VectorXd& visibility,
               const std::string& path) {
    if (points.cols() != visibility.size())
        throw std::invalid_argument("write_ply: visibility length mismatch");
    std::ofstream out(path);
    if (!out) throw DataError("cannot open for writing: " + path);
    out << "ply\n"
        << "format ascii 1.0\n"
        << "element vertex " << points.cols() << "\n"
        << "property double x\n"
        << "property double y\n"
        << "property double z\n"
        << "property double visibility\n"
        << "end_header\n";
    out << std::setprecision(17);
    for (Eigen::Index i = 0; i < points.cols(); ++i)
        out << points(0, i) << ' ' << points(1, i) << ' ' << points(2, i) << ' ' << visibility[i]
            << '\n';
    if (!out) throw DataError("write failed: " + path);
}

}  // namespace nrsfm::io
