#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "nrsfm/classical.hpp"
#include "nrsfm/evaluation.hpp"
#include "nrsfm/io.hpp"
#include "nrsfm/losses.hpp"
#include "nrsfm/synthetic.hpp"
#include "nrsfm/training.hpp"

namespace {

using nlohmann::json;
using namespace nrsfm;

std::string resolve_out(const std::string& path) {
    const char* dir = std::getenv("NRSFM_OUT_DIR");
    if (!dir || path.empty()) return path;
    std::filesystem::path p(path);
    if (p.is_absolute()) return path;
    return (std::filesystem::path(dir) / p).string();
}

int default_jobs() {
    if (const char* t = std::getenv("NRSFM_THREADS")) {
        const int n = std::atoi(t);
        if (n > 0) return n;
    }
    return 1;
}

std::vector<double> parse_list(const std::string& csv) {
    std::vector<double> out;
    std::stringstream ss(csv);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (!item.empty()) out.push_back(std::stod(item));
    }
    if (out.empty()) throw CLI::ValidationError("expected a comma-separated number list");
    return out;
}

double visible_fraction(const SynthDataset& data) {
    double vis = 0, total = 0;
    for (const auto& sv : data.views) {
        if (data.layout) {
            const int off = data.layout->offsets[static_cast<std::size_t>(sv.class_id)];
            const int cnt = data.layout->counts[static_cast<std::size_t>(sv.class_id)];
            vis += sv.view.v.segment(off, cnt).sum();
            total += cnt;
        } else {
            vis += sv.view.v.sum();
            total += static_cast<double>(sv.view.v.size());
        }
    }
    return vis / total;
}

struct TrainOptions {
    TrainConfig cfg;
    std::string variant = "full";
    std::string data_path;
    std::string ckpt_path = "checkpoint.json";
    std::string report_path;
    std::string log_path;
    std::string resume_path;
    bool weights_b64 = false;

    void add_flags(CLI::App* cmd, bool with_io = true) {
        if (with_io) {
            cmd->add_option("--data", data_path, "dataset file")->required();
            cmd->add_option("--out", ckpt_path, "checkpoint output path");
            cmd->add_option("--report", report_path, "training report output path");
            cmd->add_option("--log", log_path, "per-step JSON-lines log path");
            cmd->add_option("--resume", resume_path, "checkpoint to resume from");
            cmd->add_flag("--weights-b64", weights_b64, "store weight arrays base64-encoded");
        }
        cmd->add_option("--variant", variant, "loss variant: base|equiv|full")
            ->check(CLI::IsMember({"base", "equiv", "full"}));
        cmd->add_option("--epochs", cfg.max_epochs, "training epochs");
        cmd->add_option("--batch", cfg.batch_size, "batch size");
        cmd->add_option("--lr", cfg.lr, "initial learning rate");
        cmd->add_option("--momentum", cfg.momentum, "SGD momentum");
        cmd->add_option("--patience", cfg.plateau_patience, "plateau patience in epochs");
        cmd->add_option("--decay", cfg.lr_decay_factor, "plateau decay factor");
        cmd->add_option("--min-lr", cfg.min_lr, "stop once lr falls below this");
        cmd->add_option("--seed", cfg.seed, "training seed");
        cmd->add_option("--rank", cfg.basis_rank, "model basis rank D");
        cmd->add_option("--blocks", cfg.trunk.num_blocks, "residual blocks");
        cmd->add_option("--outer", cfg.trunk.outer, "trunk outer width");
        cmd->add_option("--bottleneck", cfg.trunk.bottleneck, "trunk bottleneck width");
        cmd->add_flag(
            "--no-batchnorm", [this](std::int64_t) { cfg.trunk.batchnorm = false; },
            "disable normalization layers");
        cmd->add_option("--epsilon", cfg.loss.epsilon, "pseudo-Huber threshold");
        cmd->add_option("--w1", cfg.loss.w1, "reprojection loss weight");
        cmd->add_option("--w2", cfg.loss.w2, "canonicalization loss weight");
        cmd->add_option("--w3", cfg.loss.w3, "equivariance loss weight");
        cmd->add_flag("--detach-psi-input", cfg.loss.detach_psi_input,
                      "stop gradients at the canonicalization input");
        cmd->add_option("--checkpoint-every", cfg.checkpoint_every,
                        "write a checkpoint every N epochs");
    }
};

int cmd_generate(const SynthConfig& cfg, const std::string& out_path) {
    const SynthDataset data = generate(cfg);
    io::save_dataset(data, resolve_out(out_path));
    std::cout << "dataset: " << data.views.size() << " views, K=" << data.total_keypoints()
              << ", D_true=" << cfg.basis_rank << ", sigma=" << cfg.noise_sigma
              << ", p_occ=" << cfg.occlusion_prob << ", visible fraction "
              << visible_fraction(data) << "\n"
              << "wrote " << resolve_out(out_path) << "\n";
    return 0;
}

int run_train(TrainOptions& opt) {
    opt.cfg.loss.variant = loss_variant_from_string(opt.variant);
    const SynthDataset data = io::load_dataset(opt.data_path);
    const std::vector<KeypointView> train_views = data.split_views(true);
    if (train_views.empty()) throw io::DataError("train: dataset has no training views");

    std::ofstream log;
    if (!opt.log_path.empty()) {
        log.open(resolve_out(opt.log_path));
        if (!log) throw io::DataError("cannot open log: " + opt.log_path);
    }
    StepLogger logger;
    if (log.is_open()) {
        logger = [&log](int step, const LossBreakdown& b, double lr) {
            json line = {{"step", step}, {"l1", b.l1},       {"l2", b.l2},
                         {"l3", b.l3},   {"total", b.total}, {"lr", lr}};
            log << line.dump() << '\n';
        };
    }

    const auto enc = opt.weights_b64 ? io::WeightEncoding::Base64 : io::WeightEncoding::Numbers;
    CheckpointSink sink = [&](const TrainState& state, const TrainReport& report) {
        io::Checkpoint ckpt{state, opt.cfg, data.has_occlusions};
        io::save_checkpoint(ckpt, resolve_out(opt.ckpt_path), enc);
        if (!opt.report_path.empty())
            io::save_json(io::train_report_to_json(report, opt.cfg, data.has_occlusions),
                          resolve_out(opt.report_path));
    };

    std::optional<io::Checkpoint> resume;
    if (!opt.resume_path.empty()) {
        resume = io::load_checkpoint(opt.resume_path);
        if (resume->state.weights.keypoints != data.total_keypoints())
            throw io::DataError("resume: checkpoint keypoint count does not match dataset");
    }

    FitResult result = fit(train_views, data.has_occlusions, opt.cfg, logger, sink,
                           resume ? &resume->state : nullptr);
    sink(result.state, result.report);
    std::cout << "trained " << result.report.epochs.size() << " epoch records, final objective "
              << result.report.final_objective << "\nwrote " << resolve_out(opt.ckpt_path)
              << "\n";
    return 0;
}

EvalProtocol protocol_from_flags(const std::string& centering, int root_index, bool no_flip) {
    EvalProtocol p;
    p.centering = centering == "root" ? EvalProtocol::Centering::RootJoint
                                      : EvalProtocol::Centering::MeanDepth;
    p.root_index = root_index;
    p.allow_depth_flip = !no_flip;
    return p;
}

int cmd_eval(const std::string& data_path, const std::vector<std::string>& ckpt_paths,
             const std::string& out_path, const std::string& csv_path,
             const EvalProtocol& protocol, bool train_split) {
    const SynthDataset data = io::load_dataset(data_path);
    json models = json::array();
    std::ostringstream csv;
    csv << "model,mpjpe,stress,reproj_error,flip_rate\n";
    std::cout << "model       mpjpe       stress      reproj      flip-rate\n";
    for (const auto& path : ckpt_paths) {
        io::Checkpoint ckpt = io::load_checkpoint(path);
        if (ckpt.state.weights.keypoints != data.total_keypoints())
            throw io::DataError("eval: checkpoint keypoint count does not match dataset");
        ModelPredictor predictor(ckpt.state.weights, ckpt.state.stats, data.has_occlusions);
        const EvalReport report = evaluate(
            data, train_split, [&](const SynthView& sv) { return predictor.predict(sv.view); },
            protocol);
        const std::string variant = to_string(ckpt.config.loss.variant);
        json entry = io::eval_report_to_json(report, protocol);
        entry["model"] = path;
        entry["variant"] = variant;
        models.push_back(std::move(entry));
        csv << variant << ',' << report.mean_mpjpe << ',' << report.mean_stress << ','
            << report.mean_reproj << ',' << report.flip_rate << '\n';
        std::cout.setf(std::ios::left);
        std::cout.width(12);
        std::cout << variant;
        std::cout.unsetf(std::ios::left);
        std::cout << report.mean_mpjpe << "  " << report.mean_stress << "  "
                  << report.mean_reproj << "  " << report.flip_rate << "\n";
    }
    if (!out_path.empty())
        io::save_json(json{{"kind", "eval_table"}, {"models", models}}, resolve_out(out_path));
    if (!csv_path.empty()) {
        std::ofstream f(resolve_out(csv_path));
        if (!f) throw io::DataError("cannot open csv: " + csv_path);
        f << csv.str();
    }
    return 0;
}

int cmd_reconstruct(const std::string& ckpt_path, const std::string& data_path, int index,
                    const std::string& view_path, const std::string& ply_canonical,
                    const std::string& ply_camera, const std::string& out_path) {
    io::Checkpoint ckpt = io::load_checkpoint(ckpt_path);
    KeypointView view;
    bool has_occlusions = ckpt.has_occlusions;
    if (!view_path.empty()) {
        const json j = io::load_json(view_path);
        const json& y = j.at("y");
        if (!y.is_array() || y.size() != 2) throw io::DataError("view: y must have two rows");
        view.y.resize(2, static_cast<Eigen::Index>(y.at(0).size()));
        for (std::size_t r = 0; r < 2; ++r) {
            if (y.at(r).size() != static_cast<std::size_t>(view.y.cols()))
                throw io::DataError("view: ragged y rows");
            for (std::size_t c = 0; c < y.at(r).size(); ++c)
                view.y(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                    y.at(r).at(c).get<double>();
        }
        const json& v = j.at("v");
        view.v.resize(static_cast<Eigen::Index>(v.size()));
        for (std::size_t i = 0; i < v.size(); ++i)
            view.v[static_cast<Eigen::Index>(i)] = v.at(i).get<double>();
    } else {
        if (data_path.empty())
            throw io::DataError("reconstruct: provide --view or --data with --index");
        const SynthDataset data = io::load_dataset(data_path);
        if (index < 0 || index >= static_cast<int>(data.views.size()))
            throw io::DataError("reconstruct: view index out of range");
        view = data.views[static_cast<std::size_t>(index)].view;
        has_occlusions = data.has_occlusions;
    }
    if (view.keypoints() != ckpt.state.weights.keypoints)
        throw io::DataError("reconstruct: view keypoint count does not match checkpoint");

    ModelPredictor predictor(ckpt.state.weights, ckpt.state.stats, has_occlusions);
    const Prediction pred = predictor.predict(view);
    const double reproj = reprojection_error(view, pred.reprojection);

    json out;
    out["alpha"] = std::vector<double>(pred.alpha.data(), pred.alpha.data() + pred.alpha.size());
    out["theta"] = {pred.theta[0], pred.theta[1], pred.theta[2]};
    out["reproj_error"] = reproj;
    std::cout << "alpha:";
    for (Eigen::Index i = 0; i < pred.alpha.size(); ++i) std::cout << ' ' << pred.alpha[i];
    std::cout << "\ntheta: " << pred.theta.transpose() << "\nreproj error: " << reproj << "\n";
    if (!ply_canonical.empty()) {
        io::write_ply(pred.x_canonical, view.v, resolve_out(ply_canonical));
        std::cout << "wrote " << resolve_out(ply_canonical) << "\n";
    }
    if (!ply_camera.empty()) {
        io::write_ply(pred.x_camera, view.v, resolve_out(ply_camera));
        std::cout << "wrote " << resolve_out(ply_camera) << "\n";
    }
    if (!out_path.empty()) io::save_json(out, resolve_out(out_path));
    return 0;
}

int cmd_sweep(const SynthConfig& base, const std::string& sigmas_csv, const std::string& poccs_csv,
              TrainOptions& train_opt, const std::string& out_path, const std::string& csv_path,
              int jobs) {
    const std::vector<double> sigmas = parse_list(sigmas_csv);
    const std::vector<double> poccs = parse_list(poccs_csv);
    train_opt.cfg.loss.variant = loss_variant_from_string(train_opt.variant);

    struct Cell {
        double sigma = 0, p_occ = 0;
        double mpjpe = 0, stress = 0;
        bool failed = false;
        std::string error;
    };
    std::vector<Cell> cells(sigmas.size() * poccs.size());
    const std::vector<SynthDataset> datasets = sweep_grid(base, sigmas, poccs);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t i = next.fetch_add(1);
            if (i >= cells.size()) return;
            Cell& cell = cells[i];
            cell.sigma = sigmas[i / poccs.size()];
            cell.p_occ = poccs[i % poccs.size()];
            try {
                const SynthDataset& data = datasets[i];
                TrainConfig cfg = train_opt.cfg;
                cfg.seed = mix64(train_opt.cfg.seed, i);  // independent per-cell stream
                FitResult result = fit(data.split_views(true), data.has_occlusions, cfg);
                ModelPredictor predictor(result.state.weights, result.state.stats,
                                         data.has_occlusions);
                const EvalReport report = evaluate(
                    data, /*train_split=*/false,
                    [&](const SynthView& sv) { return predictor.predict(sv.view); },
                    EvalProtocol{});
                cell.mpjpe = report.mean_mpjpe;
                cell.stress = report.mean_stress;
            } catch (const std::exception& e) {
                cell.failed = true;
                cell.error = e.what();
            }
        }
    };
    std::vector<std::thread> pool;
    const int n_jobs = std::max(1, jobs);
    for (int t = 1; t < n_jobs; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    json jcells = json::array();
    std::ostringstream csv;
    csv << "sigma\\p_occ";
    for (double p : poccs) csv << ',' << p;
    csv << '\n';
    std::cout << "MPJPE matrix (rows sigma, cols p_occ):\n";
    for (std::size_t si = 0; si < sigmas.size(); ++si) {
        csv << sigmas[si];
        std::cout << "sigma=" << sigmas[si] << ":";
        for (std::size_t pi = 0; pi < poccs.size(); ++pi) {
            const Cell& cell = cells[si * poccs.size() + pi];
            json jc = {{"sigma", cell.sigma}, {"p_occ", cell.p_occ}};
            if (cell.failed) {
                jc["error"] = cell.error;
                csv << ",error";
                std::cout << "  error";
            } else {
                jc["mpjpe"] = cell.mpjpe;
                jc["stress"] = cell.stress;
                csv << ',' << cell.mpjpe;
                std::cout << "  " << cell.mpjpe;
            }
            jcells.push_back(std::move(jc));
        }
        csv << '\n';
        std::cout << "\n";
    }
    if (!out_path.empty())
        io::save_json(
            json{{"kind", "sweep"}, {"sigmas", sigmas}, {"p_occs", poccs}, {"cells", jcells}},
            resolve_out(out_path));
    if (!csv_path.empty()) {
        std::ofstream f(resolve_out(csv_path));
        if (!f) throw io::DataError("cannot open csv: " + csv_path);
        f << csv.str();
    }
    return 0;
}

int cmd_oracle_rigid(const std::string& data_path, int max_views, const std::string& out_path) {
    const SynthDataset data = io::load_dataset(data_path);
    std::vector<KeypointView> views;
    for (const auto& sv : data.views) {
        views.push_back(sv.view);
        if (max_views > 0 && static_cast<int>(views.size()) >= max_views) break;
    }
    const RigidSfmSolution sol = rigid_factorize(views);
    std::cout << "rigid factorization over " << views.size()
              << " views: max reprojection residual " << sol.max_residual << "\n";
    json out = {{"kind", "rigid_oracle"},
                {"views", views.size()},
                {"max_residual", sol.max_residual}};
    if (!data.views.empty()) {
        const double err = aligned_structure_error(
            sol.structure, center_structure(data.views.front().gt_structure));
        std::cout << "aligned structure error vs ground truth: " << err << "\n";
        out["aligned_structure_error"] = err;
    }
    if (!out_path.empty()) io::save_json(out, resolve_out(out_path));
    return 0;
}

int cmd_oracle_fit(const std::string& data_path, const std::string& ckpt_path, int index,
                   int restarts, std::uint64_t seed, const std::string& out_path) {
    const SynthDataset data = io::load_dataset(data_path);
    ShapeBasis basis;
    if (!ckpt_path.empty()) {
        io::Checkpoint ckpt = io::load_checkpoint(ckpt_path);
        basis = ckpt.state.weights.shape_basis();
    } else {
        if (data.gt_bases.empty()) throw io::DataError("oracle-fit: dataset has no gt basis");
        basis.s = data.gt_basis();
    }
    json records = json::array();
    double sum = 0;
    int count = 0;
    auto run_one = [&](int i) {
        const MonocularFit fitres =
            monocular_fit(data.views[static_cast<std::size_t>(i)].view, basis, restarts,
                          mix64(seed, static_cast<std::uint64_t>(i)));
        records.push_back({{"view", i},
                           {"residual", fitres.residual},
                           {"iterations", fitres.iterations},
                           {"restart", fitres.best_restart}});
        sum += fitres.residual;
        ++count;
    };
    if (index >= 0) {
        if (index >= static_cast<int>(data.views.size()))
            throw io::DataError("oracle-fit: view index out of range");
        run_one(index);
    } else {
        for (std::size_t i = 0; i < data.views.size(); ++i) {
            if (!data.views[i].is_train) run_one(static_cast<int>(i));
        }
    }
    std::cout << "monocular fit over " << count << " views: mean residual "
              << (count ? sum / count : 0.0) << "\n";
    if (!out_path.empty())
        io::save_json(json{{"kind", "fit_oracle"}, {"records", records}}, resolve_out(out_path));
    return 0;
}

int cmd_feasibility(int n, int k, int d) {
    const FeasibilityReport rep = feasibility_check(n, k, d);
    std::cout << "constraints 2NK = " << rep.constraints << "\n"
              << "unknowns " << (d == 0 ? "6N + 3K" : "6N + ND + 3DK") << " = " << rep.unknowns
              << " (gauge credit " << rep.gauge_dof << ")\n"
              << "joint counting: " << (rep.counting_feasible ? "satisfied" : "violated") << "\n"
              << "single view: 2K = " << rep.monocular_constraints
              << " vs 6 + D = " << rep.monocular_unknowns << " -> "
              << (rep.keypoint_feasible ? "satisfied" : "violated") << "\n"
              << "verdict: " << (rep.feasible ? "feasible" : "infeasible") << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"monocular non-rigid 3D keypoint lifting: synthetic benchmarks, training, "
                 "evaluation and classical factorization oracles"};
    app.require_subcommand(1);

    // generate
    SynthConfig gen_cfg;
    std::string gen_out = "dataset.json";
    auto* gen = app.add_subcommand("generate", "generate a synthetic benchmark dataset");
    gen->add_option("--out", gen_out, "output path");
    gen->add_option("--keypoints", gen_cfg.keypoints, "keypoints per class");
    gen->add_option("--basis-rank", gen_cfg.basis_rank, "generative basis rank D_true");
    gen->add_option("--shapes", gen_cfg.num_shapes, "shapes per class");
    gen->add_option("--views", gen_cfg.views_per_shape, "views per shape");
    gen->add_option("--alpha-std", gen_cfg.alpha_std, "pose coefficient std");
    gen->add_option("--noise-sigma", gen_cfg.noise_sigma, "2D Gaussian noise sigma");
    gen->add_option("--p-occ", gen_cfg.occlusion_prob, "occlusion probability");
    gen->add_option("--seed", gen_cfg.seed, "generator seed");
    gen->add_option("--train-fraction", gen_cfg.train_fraction, "train split fraction");
    gen->add_flag("--rigid", gen_cfg.rigid, "rigid dataset (single structure)");
    gen->add_option("--classes", gen_cfg.classes, "number of keypoint classes");

    // train
    TrainOptions train_opt;
    auto* train = app.add_subcommand("train", "train a model on a dataset");
    train_opt.add_flags(train);

    // eval
    std::string eval_data, eval_out, eval_csv, eval_centering = "mean-depth";
    std::vector<std::string> eval_ckpts;
    int eval_root = -1;
    bool eval_no_flip = false, eval_train_split = false;
    auto* eval_cmd = app.add_subcommand("eval", "evaluate checkpoints against ground truth");
    eval_cmd->add_option("--data", eval_data, "dataset file")->required();
    eval_cmd->add_option("--checkpoint", eval_ckpts, "checkpoint file(s)")->required();
    eval_cmd->add_option("--out", eval_out, "metrics report path");
    eval_cmd->add_option("--csv", eval_csv, "CSV table path");
    eval_cmd->add_option("--centering", eval_centering, "depth centering: mean-depth|root")
        ->check(CLI::IsMember({"mean-depth", "root"}));
    eval_cmd->add_option("--root-index", eval_root, "root keypoint for root centering");
    eval_cmd->add_flag("--no-flip", eval_no_flip, "disable depth-flip resolution");
    eval_cmd->add_flag("--train-split", eval_train_split, "evaluate the training split");

    // reconstruct
    std::string rec_ckpt, rec_data, rec_view, rec_ply_can, rec_ply_cam, rec_out;
    int rec_index = 0;
    auto* rec = app.add_subcommand("reconstruct", "lift a single view to 3D");
    rec->add_option("--checkpoint", rec_ckpt, "checkpoint file")->required();
    rec->add_option("--data", rec_data, "dataset file to pick a view from");
    rec->add_option("--index", rec_index, "view index in the dataset");
    rec->add_option("--view", rec_view,
                    "standalone view JSON ({\"y\": [[..],[..]], \"v\": [..]})");
    rec->add_option("--ply-canonical", rec_ply_can, "canonical-frame PLY output");
    rec->add_option("--ply-camera", rec_ply_cam, "camera-frame PLY output");
    rec->add_option("--out", rec_out, "JSON output");

    // sweep
    SynthConfig sweep_cfg;
    TrainOptions sweep_train;
    std::string sweep_sigmas = "0", sweep_poccs = "0", sweep_out, sweep_csv;
    int sweep_jobs = default_jobs();
    auto* sweep = app.add_subcommand("sweep", "noise/occlusion robustness grid");
    sweep->add_option("--keypoints", sweep_cfg.keypoints, "keypoints per class");
    sweep->add_option("--basis-rank", sweep_cfg.basis_rank, "generative basis rank");
    sweep->add_option("--shapes", sweep_cfg.num_shapes, "shapes per class");
    sweep->add_option("--views", sweep_cfg.views_per_shape, "views per shape");
    sweep->add_option("--alpha-std", sweep_cfg.alpha_std, "pose coefficient std");
    sweep->add_option("--data-seed", sweep_cfg.seed, "generator seed");
    sweep->add_option("--train-fraction", sweep_cfg.train_fraction, "train split fraction");
    sweep->add_option("--sigmas", sweep_sigmas, "comma-separated noise levels");
    sweep->add_option("--p-occs", sweep_poccs, "comma-separated occlusion probabilities");
    sweep->add_option("--out", sweep_out, "matrix JSON output");
    sweep->add_option("--csv", sweep_csv, "matrix CSV output");
    sweep->add_option("--jobs", sweep_jobs, "parallel cells");
    sweep_train.add_flags(sweep, /*with_io=*/false);

    // oracles
    std::string orr_data, orr_out;
    int orr_max_views = 0;
    auto* orr = app.add_subcommand("oracle-rigid", "classical rigid factorization");
    orr->add_option("--data", orr_data, "rigid dataset file")->required();
    orr->add_option("--max-views", orr_max_views, "cap the number of views (0 = all)");
    orr->add_option("--out", orr_out, "JSON output");

    std::string orf_data, orf_ckpt, orf_out;
    int orf_index = -1, orf_restarts = 8;
    std::uint64_t orf_seed = 0;
    auto* orf = app.add_subcommand("oracle-fit", "nonlinear monocular fit with a known basis");
    orf->add_option("--data", orf_data, "dataset file")->required();
    orf->add_option("--checkpoint", orf_ckpt, "take the basis from this checkpoint");
    orf->add_option("--index", orf_index, "single view index (default: all test views)");
    orf->add_option("--restarts", orf_restarts, "random restarts");
    orf->add_option("--seed", orf_seed, "restart seed");
    orf->add_option("--out", orf_out, "JSON output");

    int fea_n = 2, fea_k = 3, fea_d = 0;
    auto* fea = app.add_subcommand("feasibility", "degrees-of-freedom feasibility check");
    fea->add_option("--views", fea_n, "number of views N");
    fea->add_option("--keypoints", fea_k, "keypoints K");
    fea->add_option("--basis-rank", fea_d, "basis rank D (0 = rigid)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) return cmd_generate(gen_cfg, gen_out);
        if (train->parsed()) return run_train(train_opt);
        if (eval_cmd->parsed())
            return cmd_eval(eval_data, eval_ckpts, eval_out, eval_csv,
                            protocol_from_flags(eval_centering, eval_root, eval_no_flip),
                            eval_train_split);
        if (rec->parsed())
            return cmd_reconstruct(rec_ckpt, rec_data, rec_index, rec_view, rec_ply_can,
                                   rec_ply_cam, rec_out);
        if (sweep->parsed())
            return cmd_sweep(sweep_cfg, sweep_sigmas, sweep_poccs, sweep_train, sweep_out,
                             sweep_csv, sweep_jobs);
        if (orr->parsed()) return cmd_oracle_rigid(orr_data, orr_max_views, orr_out);
        if (orf->parsed())
            return cmd_oracle_fit(orf_data, orf_ckpt, orf_index, orf_restarts, orf_seed, orf_out);
        if (fea->parsed()) return cmd_feasibility(fea_n, fea_k, fea_d);
    } catch (const DivergenceError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const std::domain_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const io::DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
