// SPDX-License-Identifier: Apache-2.0
// Command-line front end: gen, train, render, eval, ablate, selftest.
#include "snd/config.hpp"
#include "snd/io.hpp"
#include "snd/parallel.hpp"
#include "snd/pipeline.hpp"
#include "snd/selftest.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

namespace {

using namespace snd;
using namespace snd::harness;

struct CommonFlags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::optional<int> threads;
    std::string ablation;
};

void add_common(CLI::App* cmd, CommonFlags& f) {
    cmd->add_option("--config", f.config, "Run config (JSON)");
    cmd->add_option("--seed", f.seed, "Override the config seed");
    cmd->add_option("--out", f.out, "Output directory (overrides out_dir)");
    cmd->add_option("--threads", f.threads, "Worker threads (falls back to SND_THREADS)")->check(CLI::PositiveNumber);
    cmd->add_option("--ablation", f.ablation, "Ablation preset")
        ->check(CLI::IsMember({"A", "B", "C", "D", "E", "G", "H", "full"}));
}

RunConfig resolve(const CommonFlags& f) {
    RunConfig cfg = f.config.empty() ? RunConfig{} : load_config(f.config);
    if (f.seed) {
        cfg.seed = *f.seed;
    }
    if (!f.out.empty()) {
        cfg.out_dir = f.out;
    }
    if (!f.ablation.empty()) {
        cfg.ablation = ablation_from_string(f.ablation);
        cfg.apply_ablation();
    }
    if (f.threads) {
        set_num_threads(*f.threads);
    }
    cfg.validate();
    return cfg;
}

int selftest() {
    const OracleReport oracle = rasterizer_oracle(20, 1);
    std::cout << "rasterizer_oracle scenes=" << oracle.scenes << " mismatched=" << oracle.mismatched_scenes
              << " seconds=" << oracle.seconds << '\n';
    const GradientReport grad = gradient_gate(6, 2);
    std::cout << "gradient_gate configs=" << grad.configs << " params=" << grad.parameters_checked
              << " failures=" << grad.failures << " max_rel_error=" << grad.max_rel_error << " seconds=" << grad.seconds
              << '\n';
    const bool ok = oracle.mismatched_scenes == 0 && grad.failures == 0;
    std::cout << (ok ? "selftest PASS" : "selftest FAIL") << '\n';
    return ok ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Splat-and-distill pipeline on synthetic scenes"};
    app.require_subcommand(1);

    CommonFlags flags;
    int gen_count = -1;
    int render_scene = 0;
    std::string render_out;

    CLI::App* gen = app.add_subcommand("gen", "Write training scene files");
    add_common(gen, flags);
    gen->add_option("--count", gen_count, "Number of scenes (default: train_scenes)");

    CLI::App* train = app.add_subcommand("train", "Run distillation; writes checkpoint, manifest and loss log");
    add_common(train, flags);

    CLI::App* render = app.add_subcommand("render", "Export teacher supervision maps and PCA images");
    add_common(render, flags);
    render->add_option("--scene", render_scene, "Held-out scene index");
    render->add_option("--render-out", render_out, "Image directory (default: <out>/render)");

    CLI::App* eval = app.add_subcommand("eval", "Probe a checkpoint against the untrained baseline");
    add_common(eval, flags);

    CLI::App* ablate = app.add_subcommand("ablate", "Train and probe every ablation row");
    add_common(ablate, flags);

    CLI::App* self = app.add_subcommand("selftest", "Rasterizer oracle and gradient gates");
    add_common(self, flags);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        const RunConfig base = resolve(flags);
        RunConfig cfg = base;
        if (*gen) {
            if (gen_count >= 0) {
                cfg.train_scenes = gen_count;
            }
            const auto files = generate_scene_files(cfg, std::filesystem::path(cfg.out_dir) / "scenes");
            std::cout << "wrote " << files.size() << " scenes to " << (std::filesystem::path(cfg.out_dir) / "scenes").string()
                      << '\n';
        } else if (*train) {
            const TrainRunResult r = train_run(cfg, cfg.out_dir);
            std::cout << "checkpoint " << r.checkpoint.string() << " sha256 " << r.checkpoint_sha256 << " seconds "
                      << r.seconds << '\n';
        } else if (*render) {
            const std::filesystem::path dir = render_out.empty() ? std::filesystem::path(cfg.out_dir) / "render"
                                                                 : std::filesystem::path(render_out);
            render_run(cfg, cfg.out_dir, render_scene, dir);
            std::cout << "wrote " << dir.string() << '\n';
        } else if (*eval) {
            const EvalRunResult r = eval_run(cfg, cfg.out_dir);
            for (const auto& rep : r.reports) {
                std::cout << report_line(rep) << '\n';
            }
        } else if (*ablate) {
            const AblationResult r = ablate_run(cfg, cfg.out_dir);
            std::cout << ablation_table(r);
        } else if (*self) {
            return selftest();
        }
    } catch (const std::exception& e) {
        std::string msg = e.what();
        std::replace(msg.begin(), msg.end(), '\n', ' ');
        std::cerr << "error: " << msg << '\n';
        return 1;
    }
    return 0;
}
