// SPDX-License-Identifier: Apache-2.0
#include "snd/pipeline.hpp"

#include "snd/blending.hpp"
#include "snd/io.hpp"
#include "snd/pca.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

namespace snd::harness {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<std::vector<ContextView>> views_of(const std::vector<synth::DatasetScene>& scenes) {
    std::vector<std::vector<ContextView>> out;
    out.reserve(scenes.size());
    for (const auto& s : scenes) {
        out.push_back(s.views);
    }
    return out;
}

// Per-patch statistics on the token grid.
struct PatchTargets {
    std::vector<double> depth; // mean foreground depth, 0 when the patch has no foreground
    std::vector<int> semantic; // majority semantic class
};

PatchTargets patch_targets(const ContextView& view, const synth::SceneSpec& spec, int grid) {
    const int ph = view.depth.height() / grid;
    const int pw = view.depth.width() / grid;
    PatchTargets t;
    for (int r = 0; r < grid; ++r) {
        for (int c = 0; c < grid; ++c) {
            double sum = 0.0;
            int fg = 0;
            std::array<int, synth::kNumSemanticClasses> votes{};
            for (int y = r * ph; y < (r + 1) * ph; ++y) {
                for (int x = c * pw; x < (c + 1) * pw; ++x) {
                    const double d = view.depth.at(y, x, 0);
                    if (d > 0.0) {
                        sum += d;
                        ++fg;
                    }
                    ++votes[static_cast<int>(synth::semantic_class(spec, view.mask.at(y, x)))];
                }
            }
            t.depth.push_back(fg > 0 ? sum / fg : 0.0);
            t.semantic.push_back(static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin()));
        }
    }
    return t;
}

struct ProbeRows {
    std::vector<Eigen::VectorXd> x;
    std::vector<double> depth;
    std::vector<int> label;
};

Eigen::MatrixXd stack(const std::vector<Eigen::VectorXd>& rows) {
    Eigen::MatrixXd m(rows.size(), rows.empty() ? 0 : rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
        m.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
    }
    return m;
}

json manifest_json(const RunConfig& cfg, const std::string& ckpt_sha, double seconds) {
    return json{{"config", to_json(cfg)},
                {"config_hash", config_hash(cfg)},
                {"checkpoint", "checkpoint.sndc"},
                {"checkpoint_sha256", ckpt_sha},
                {"train_seconds", seconds}};
}

std::string fmt(double v, int precision = 4) {
    std::ostringstream ss;
    ss << std::fixed << std::setprecision(precision) << v;
    return ss.str();
}

Checkpoint load_checked_checkpoint(const RunConfig& cfg, const fs::path& run_dir) {
    const json manifest = json::parse(read_file(run_dir / "manifest.json"));
    const std::string expected = manifest.at("config_hash").get<std::string>();
    const std::string actual = config_hash(cfg);
    if (expected != actual) {
        throw std::runtime_error("config hash mismatch: manifest has " + expected + ", config hashes to " + actual);
    }
    const std::string bytes = read_file(run_dir / "checkpoint.sndc");
    if (manifest.contains("checkpoint_sha256") && manifest.at("checkpoint_sha256").get<std::string>() != sha256_hex(bytes)) {
        throw std::runtime_error("checkpoint hash disagrees with manifest in " + run_dir.string());
    }
    return decode_checkpoint(bytes, cfg.train.encoder, cfg.train.head);
}

} // namespace

synth::ViewSpec view_spec(const RunConfig& cfg) {
    synth::ViewSpec v;
    v.num_views = cfg.views_per_scene;
    v.image_size = cfg.train.encoder.image_size;
    v.validate();
    return v;
}

std::vector<synth::DatasetScene> training_scenes(const RunConfig& cfg) {
    if (cfg.scene_dir.empty()) {
        return synth::make_dataset(cfg.train_scene_seed_base(), 0, cfg.train_scenes, cfg.objects_per_scene,
                                   view_spec(cfg));
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(cfg.scene_dir)) {
        if (entry.path().extension() == ".json" && entry.path().filename().string().starts_with("scene_")) {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (static_cast<int>(files.size()) < cfg.train_scenes) {
        throw std::runtime_error("scene_dir " + cfg.scene_dir + " holds " + std::to_string(files.size()) +
                                 " scenes, config needs " + std::to_string(cfg.train_scenes));
    }
    files.resize(static_cast<std::size_t>(cfg.train_scenes));
    std::vector<synth::DatasetScene> out;
    for (const fs::path& f : files) {
        synth::GeneratedScene scene = scene_from_json(read_file(f));
        std::vector<ContextView> views = synth::render_views(scene, view_spec(cfg));
        out.push_back({std::move(scene), std::move(views)});
    }
    return out;
}

std::vector<synth::DatasetScene> heldout_scenes(const RunConfig& cfg) {
    return synth::make_dataset(cfg.heldout_scene_seed_base(), 0, cfg.heldout_scenes, cfg.objects_per_scene,
                               view_spec(cfg));
}

std::vector<fs::path> generate_scene_files(const RunConfig& cfg, const fs::path& dir) {
    std::vector<fs::path> out;
    for (int i = 0; i < cfg.train_scenes; ++i) {
        const std::uint64_t seed = cfg.train_scene_seed_base() + static_cast<std::uint64_t>(i);
        const synth::GeneratedScene scene = synth::generate_scene(synth::random_scene_spec(seed, cfg.objects_per_scene));
        std::ostringstream name;
        name << "scene_" << std::setw(4) << std::setfill('0') << i << ".json";
        out.push_back(dir / name.str());
        write_file(out.back(), scene_to_json(scene));
    }
    return out;
}

distill::TrainState train(const RunConfig& cfg, const std::vector<synth::DatasetScene>& scenes,
                          const StepCallback& on_log) {
    cfg.validate();
    const auto views = views_of(scenes);
    distill::TrainState state = distill::TrainState::fresh(cfg.train.encoder, cfg.train.head, cfg.model_seed());
    for (int i = 0; i < cfg.steps; ++i) {
        const distill::StepDiagnostics d = distill::train_step(state, views, cfg.train);
        if (on_log && !d.skipped && (state.step % cfg.log_every == 0 || i + 1 == cfg.steps)) {
            on_log({state.step, d.loss, d.prototype_entropy, d.grad_norm});
        }
    }
    return state;
}

ProbeSummary probe_encoder(const distill::ModelParams& encoder, const std::vector<synth::DatasetScene>& heldout,
                           const RunConfig& cfg) {
    const int grid = cfg.train.encoder.grid();
    ProbeRows train_rows, test_rows;
    std::int64_t hits = 0, queries = 0;
    metrics::CorrespondenceSettings cs;
    cs.ratio = cfg.probe.correspondence_ratio;

    for (const auto& scene : heldout) {
        std::vector<FeatureMap> feats;
        for (const ContextView& v : scene.views) {
            feats.push_back(distill::encode(encoder, v.image));
        }
        for (std::size_t v = 0; v < scene.views.size(); ++v) {
            const PatchTargets t = patch_targets(scene.views[v], scene.scene.spec, grid);
            ProbeRows& rows = v % 2 == 0 ? train_rows : test_rows;
            for (int p = 0; p < grid * grid; ++p) {
                const auto f = feats[v].pixel(p / grid, p % grid);
                rows.x.push_back(Eigen::Map<const Eigen::VectorXd>(f.data(), static_cast<Eigen::Index>(f.size())));
                rows.depth.push_back(t.depth[p]);
                rows.label.push_back(t.semantic[p]);
            }
            const std::size_t w = v + static_cast<std::size_t>(cfg.probe.correspondence_view_gap);
            if (w < scene.views.size()) {
                const auto r = metrics::correspondence_recall(feats[v], feats[w], scene.views[v].depth,
                                                              scene.views[v].camera, scene.views[w].camera,
                                                              cfg.probe.correspondence_threshold_px, cs);
                hits += r.hits;
                queries += r.queries;
            }
        }
    }

    ProbeSummary s;
    s.recall = queries > 0 ? static_cast<double>(hits) / static_cast<double>(queries) : 0.0;
    s.recall_queries = queries;

    // depth probe on foreground patches only
    auto foreground = [](const ProbeRows& rows, std::vector<Eigen::VectorXd>& x, std::vector<double>& y) {
        for (std::size_t i = 0; i < rows.x.size(); ++i) {
            if (rows.depth[i] > 0.0) {
                x.push_back(rows.x[i]);
                y.push_back(rows.depth[i]);
            }
        }
    };
    std::vector<Eigen::VectorXd> dx_train, dx_test;
    std::vector<double> dy_train, dy_test;
    foreground(train_rows, dx_train, dy_train);
    foreground(test_rows, dx_test, dy_test);
    const auto depth = metrics::depth_probe(stack(dx_train), Eigen::Map<Eigen::VectorXd>(dy_train.data(), dy_train.size()),
                                            stack(dx_test), Eigen::Map<Eigen::VectorXd>(dy_test.data(), dy_test.size()),
                                            cfg.probe.depth_ridge_lambda);
    s.depth_rmse = depth.rmse;
    s.depth_abs_rel = depth.abs_rel;
    s.depth_samples = depth.num_test;

    metrics::SegmentationSettings ss;
    ss.l2_reg = cfg.probe.seg_l2;
    ss.max_iterations = cfg.probe.seg_max_iterations;
    const auto seg = metrics::segmentation_probe(stack(train_rows.x), train_rows.label, stack(test_rows.x),
                                                 test_rows.label, ss);
    s.seg_accuracy = seg.accuracy;
    s.seg_miou = seg.mean_iou;
    s.seg_samples = seg.num_test;
    return s;
}

std::vector<metrics::ProbeReport> to_reports(const ProbeSummary& s, const std::string& prefix, std::uint64_t seed) {
    std::vector<metrics::ProbeReport> out{
        {prefix + "/correspondence", "recall@10px", s.recall, std::max<std::int64_t>(s.recall_queries, 1), seed},
        {prefix + "/depth", "rmse", s.depth_rmse, s.depth_samples, seed},
        {prefix + "/depth", "abs_rel", s.depth_abs_rel, s.depth_samples, seed},
        {prefix + "/segmentation", "accuracy", s.seg_accuracy, s.seg_samples, seed},
        {prefix + "/segmentation", "miou", s.seg_miou, s.seg_samples, seed},
    };
    return out;
}

TrainRunResult train_run(const RunConfig& cfg, const fs::path& out_dir) {
    const auto t0 = std::chrono::steady_clock::now();
    fs::create_directories(out_dir);
    const auto scenes = training_scenes(cfg);

    const fs::path log_path = out_dir / "loss.jsonl";
    std::ofstream log(log_path, std::ios::trunc);
    if (!log) {
        throw std::runtime_error("cannot write " + log_path.string());
    }
    const distill::TrainState state = train(cfg, scenes, [&](const LossRecord& r) {
        log << json{{"step", r.step}, {"loss", r.loss}, {"prototype_entropy", r.prototype_entropy},
                    {"grad_norm", r.grad_norm}}
                   .dump()
            << '\n';
        log.flush();
        std::clog << "step " << r.step << " loss " << fmt(r.loss) << " entropy " << fmt(r.prototype_entropy)
                  << " grad_norm " << fmt(r.grad_norm) << '\n';
    });

    TrainRunResult res;
    res.checkpoint = out_dir / "checkpoint.sndc";
    const std::string bytes = encode_checkpoint(canonical_json(cfg), state.student, state.teacher);
    write_file(res.checkpoint, bytes);
    res.checkpoint_sha256 = sha256_hex(bytes);
    res.seconds = seconds_since(t0);
    write_file(out_dir / "manifest.json", manifest_json(cfg, res.checkpoint_sha256, res.seconds).dump(2) + "\n");
    return res;
}

EvalRunResult eval_run(const RunConfig& cfg, const fs::path& run_dir) {
    const Checkpoint ckpt = load_checked_checkpoint(cfg, run_dir);
    const auto heldout = heldout_scenes(cfg);
    EvalRunResult res;
    res.student = probe_encoder(ckpt.student, heldout, cfg);
    res.baseline = probe_encoder(distill::init_params(cfg.train.encoder, cfg.train.head, cfg.model_seed()), heldout, cfg);
    res.reports = to_reports(res.student, "student", cfg.seed);
    for (auto& r : to_reports(res.baseline, "baseline", cfg.seed)) {
        res.reports.push_back(std::move(r));
    }
    write_reports(run_dir / "report.jsonl", res.reports);

    std::ostringstream md;
    md << "# Probe report\n\n"
       << "Held-out scenes: " << cfg.heldout_scenes << ", seed " << cfg.seed << ".\n"
       << "Depth is probed by closed-form ridge regression (lambda " << cfg.probe.depth_ridge_lambda
       << ") on per-patch mean depth, not by a binned depth classifier.\n\n"
       << "| Encoder | Recall@" << cfg.probe.correspondence_threshold_px << "px | Depth RMSE | Depth AbsRel | Seg Acc | Seg mIoU |\n"
       << "|---|---|---|---|---|---|\n";
    for (const auto& [name, s] : {std::pair{"untrained", res.baseline}, std::pair{"student", res.student}}) {
        md << "| " << name << " | " << fmt(s.recall) << " | " << fmt(s.depth_rmse) << " | " << fmt(s.depth_abs_rel)
           << " | " << fmt(s.seg_accuracy) << " | " << fmt(s.seg_miou) << " |\n";
    }
    write_file(run_dir / "report.md", md.str());
    return res;
}

void render_run(const RunConfig& cfg, const fs::path& run_dir, int scene, const fs::path& out_dir) {
    const Checkpoint ckpt = load_checked_checkpoint(cfg, run_dir);
    RunConfig one = cfg;
    one.heldout_scenes = std::max(scene + 1, 2);
    const auto heldout = heldout_scenes(one);
    if (scene < 0 || scene >= static_cast<int>(heldout.size())) {
        throw std::invalid_argument("render: scene index out of range");
    }
    const synth::ViewSpec vs = view_spec(cfg);
    const distill::ViewTriple triple{0, vs.context_a, vs.context_b, vs.target};
    const auto& views = heldout[static_cast<std::size_t>(scene)].views;
    const distill::TeacherSupervision sup = distill::teacher_supervision(ckpt.teacher, views, triple, cfg.train);

    fs::create_directories(out_dir);
    write_tensor(out_dir / "supervision.sndt", sup.target_tokens);
    write_tensor(out_dir / "rendered.sndt", sup.rendered.features);
    pca_visualize(sup.rendered.features, out_dir / "rendered_pca.png");
    pca_visualize(sup.target_tokens, out_dir / "supervision_pca.png");
    const ContextView& target = views[static_cast<std::size_t>(triple.target)];
    pca_visualize(distill::encode(ckpt.student, target.image), out_dir / "student_target_pca.png");
    pca_visualize(distill::encode(ckpt.teacher, target.image), out_dir / "teacher_target_pca.png");

    std::vector<std::uint8_t> rgb;
    rgb.reserve(target.image.data().size());
    for (double v : target.image.data()) {
        rgb.push_back(static_cast<std::uint8_t>(std::clamp(std::round(255.0 * v), 0.0, 255.0)));
    }
    write_png(out_dir / "target_rgb.png", target.image.width(), target.image.height(), rgb);
}

AblationResult run_ablations(const RunConfig& base, const std::vector<Ablation>& which) {
    const auto scenes = training_scenes(base);
    const auto heldout = heldout_scenes(base);
    AblationResult res;
    res.baseline =
        probe_encoder(distill::init_params(base.train.encoder, base.train.head, base.model_seed()), heldout, base);
    for (Ablation a : which) {
        RunConfig cfg = base;
        cfg.ablation = a;
        cfg.apply_ablation();
        const auto t0 = std::chrono::steady_clock::now();
        const distill::TrainState state = train(cfg, scenes);
        res.rows.push_back({a, probe_encoder(state.student, heldout, cfg)});
        std::clog << "ablation " << to_string(a) << " done in " << fmt(seconds_since(t0), 1) << " s\n";
    }
    return res;
}

std::string ablation_table(const AblationResult& result) {
    std::ostringstream md;
    md << "| Variant | Recall@10px | Depth RMSE | Depth AbsRel | Seg Acc | Seg mIoU |\n"
       << "|---|---|---|---|---|---|\n";
    auto row = [&](const std::string& name, const ProbeSummary& s) {
        md << "| " << name << " | " << fmt(s.recall) << " | " << fmt(s.depth_rmse) << " | " << fmt(s.depth_abs_rel)
           << " | " << fmt(s.seg_accuracy) << " | " << fmt(s.seg_miou) << " |\n";
    };
    row("Untrained initialisation", result.baseline);
    for (const AblationRow& r : result.rows) {
        row(ablation_row_label(r.ablation), r.summary);
    }
    return md.str();
}

AblationResult ablate_run(const RunConfig& cfg, const fs::path& out_dir) {
    AblationResult res = run_ablations(cfg, ablation_grid());
    fs::create_directories(out_dir);
    write_file(out_dir / "ablation.md", ablation_table(res));
    std::vector<metrics::ProbeReport> reports = to_reports(res.baseline, "untrained", cfg.seed);
    for (const AblationRow& r : res.rows) {
        for (auto& rep : to_reports(r.summary, to_string(r.ablation), cfg.seed)) {
            reports.push_back(std::move(rep));
        }
    }
    write_reports(out_dir / "ablation.jsonl", reports);
    return res;
}

} // namespace snd::harness
