// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snd/config.hpp"
#include "snd/metrics.hpp"
#include "snd/synth.hpp"

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace snd::harness {

synth::ViewSpec view_spec(const RunConfig& cfg);

/// Training scenes: read from cfg.scene_dir when set, otherwise generated.
std::vector<synth::DatasetScene> training_scenes(const RunConfig& cfg);
/// Held-out scenes, generated from seeds disjoint from every training seed.
std::vector<synth::DatasetScene> heldout_scenes(const RunConfig& cfg);

/// Writes cfg.train_scenes scene files into `dir`; returns their paths.
std::vector<std::filesystem::path> generate_scene_files(const RunConfig& cfg, const std::filesystem::path& dir);

struct LossRecord {
    std::int64_t step = 0;
    double loss = 0.0;
    double prototype_entropy = 0.0;
    double grad_norm = 0.0;
};

using StepCallback = std::function<void(const LossRecord&)>;

/// Runs cfg.steps training iterations from a fresh state.
distill::TrainState train(const RunConfig& cfg, const std::vector<synth::DatasetScene>& scenes,
                          const StepCallback& on_log = {});

/// Probe-ready summary of one encoder on the held-out scenes.
struct ProbeSummary {
    double recall = 0.0;
    std::int64_t recall_queries = 0;
    double depth_rmse = 0.0;
    double depth_abs_rel = 0.0;
    std::int64_t depth_samples = 0;
    double seg_accuracy = 0.0;
    double seg_miou = 0.0;
    std::int64_t seg_samples = 0;
};

/// Correspondence recall pooled over view pairs (v, v + gap); depth and
/// segmentation probes fit on even views and tested on odd views.
ProbeSummary probe_encoder(const distill::ModelParams& encoder, const std::vector<synth::DatasetScene>& heldout,
                           const RunConfig& cfg);

std::vector<metrics::ProbeReport> to_reports(const ProbeSummary& s, const std::string& prefix, std::uint64_t seed);

// File-level commands. Each writes into `out_dir`.

struct TrainRunResult {
    std::filesystem::path checkpoint;
    std::string checkpoint_sha256;
    double seconds = 0.0;
};

/// checkpoint.sndc, manifest.json and loss.jsonl.
TrainRunResult train_run(const RunConfig& cfg, const std::filesystem::path& out_dir);

struct EvalRunResult {
    ProbeSummary student;
    ProbeSummary baseline;
    std::vector<metrics::ProbeReport> reports;
};

/// Probes the checkpoint in `run_dir` against the untrained initialisation and
/// writes report.jsonl and report.md. Throws when cfg does not hash to the
/// manifest's config hash.
EvalRunResult eval_run(const RunConfig& cfg, const std::filesystem::path& run_dir);

/// Teacher supervision for held-out scene `scene` (views from view_spec) plus
/// PCA images of the rendered map and of student/teacher target-view features.
void render_run(const RunConfig& cfg, const std::filesystem::path& run_dir, int scene,
                const std::filesystem::path& out_dir);

struct AblationRow {
    Ablation ablation = Ablation::kFull;
    ProbeSummary summary;
};

struct AblationResult {
    ProbeSummary baseline;
    std::vector<AblationRow> rows;
};

/// Trains and probes each requested ablation (same seed and data).
AblationResult run_ablations(const RunConfig& base, const std::vector<Ablation>& which);
std::string ablation_table(const AblationResult& result);
/// Writes ablation.md and ablation.jsonl.
AblationResult ablate_run(const RunConfig& cfg, const std::filesystem::path& out_dir);

} // namespace snd::harness
