// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snd/lifting.hpp"
#include "snd/model.hpp"
#include "snd/rasterizer.hpp"

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace snd::distill {

// ---------------------------------------------------------------------------
// Losses. Logit matrices hold one row per token.

/// Row-wise softmax of logits / tau (log-sum-exp stabilised).
Matrix softmax_rows(const Matrix& logits, double tau);

/// Mean over tokens of H(softmax(teacher / tau_t), log_softmax(student / tau_s)).
double distill_loss(const Matrix& student_logits, const Matrix& teacher_logits, double tau_s, double tau_t);

/// 1 - mean per-token cosine similarity; a token with a zero-norm side contributes
/// a similarity of 0.
double cosine_loss(const FeatureMap& student, const FeatureMap& target);

/// Mean squared error over all tokens and channels.
double feature_mse_loss(const FeatureMap& student, const FeatureMap& target);

enum class LossKind { kDistill, kCosine, kFeatureMse };
enum class HeadMode { kShared, kEma };

std::string to_string(LossKind kind);
std::string to_string(HeadMode mode);

// ---------------------------------------------------------------------------
// Optimiser and teacher update.

struct AdamSettings {
    double lr = 1e-3; // full scale: 2e-5 with cosine annealing
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.01;
};

struct AdamMoments {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t steps = 0;

    friend bool operator==(const AdamMoments&, const AdamMoments&) = default;
};

/// Adam with decoupled weight decay: p <- p (1 - lr wd) - lr mhat / (sqrt(vhat) + eps).
void adam_step(ModelParams& params, AdamMoments& moments, std::span<const double> grads, const AdamSettings& settings);

/// teacher <- lambda teacher + (1 - lambda) student. Throws on layout mismatch.
ModelParams ema_update(const ModelParams& teacher, const ModelParams& student, double lambda);

// ---------------------------------------------------------------------------
// Training.

struct DistillSettings {
    double tau_s = 0.1;
    double tau_t = 0.07;
    HeadMode head_mode = HeadMode::kEma;
    LossKind loss = LossKind::kDistill;
};

struct TrainState {
    ModelParams student;
    ModelParams teacher;
    std::int64_t step = 0;
    AdamMoments moments;
    std::uint64_t seed = 0;

    static TrainState fresh(const EncoderConfig& encoder, const HeadConfig& head, std::uint64_t seed);

    friend bool operator==(const TrainState&, const TrainState&) = default;
};

struct LossGradient {
    double loss = 0.0;
    std::vector<double> grad; // aligned with the student's layout
    Matrix teacher_probs;     // K x T teacher distribution (distillation loss only)
};

/// Exact reverse-mode gradient of the chosen loss with respect to the student
/// parameters. `teacher_target` (h x w x C) is treated as a constant. The
/// teacher-side head is the student's head in shared mode and the teacher's in
/// EMA mode; either way no gradient flows through it.
/// Throws std::runtime_error naming the segment when a gradient is non-finite.
LossGradient backward(const TrainState& state, const FeatureMap& image, const FeatureMap& teacher_target,
                      const DistillSettings& settings);

/// Loss only (same semantics as backward().loss); used by finite-difference checks.
double evaluate_loss(const ModelParams& student, const ModelParams& teacher_head_source, const FeatureMap& image,
                     const FeatureMap& teacher_target, const DistillSettings& settings);

enum class UpscaleMode { kMaskAware, kBilinear };
enum class TeacherMode { kEma, kFrozen };
enum class TargetMode { kNovel, kContext };

struct TrainConfig {
    EncoderConfig encoder;
    HeadConfig head;
    DistillSettings distill;
    AdamSettings adam;
    int ema_every = 10;
    double ema_lambda = 0.999;
    TeacherMode teacher = TeacherMode::kEma;
    UpscaleMode upscale = UpscaleMode::kMaskAware;
    TargetMode target = TargetMode::kNovel;
    bool blend = true;
    double blend_alpha = 0.5;
    bool blend_alpha_weighted = false;
    int stride = 1;
    int max_context_gap = 4; // context views are i and i + gap, gap in [2, max_context_gap]
    LiftSettings lift;
    RasterSettings raster;
};

/// Views chosen for one iteration.
struct ViewTriple {
    std::size_t scene = 0;
    int context_a = 0;
    int context_b = 0;
    int target = 0;
};

/// Deterministic view sampling for step `step` of a run seeded with `seed`.
/// Views of a scene are assumed ordered along the camera arc.
ViewTriple sample_views(std::uint64_t seed, std::int64_t step, std::size_t num_scenes, int views_per_scene,
                        int max_gap, TargetMode target);

/// Supervision map for the target view: teacher features of both context views,
/// upscaled, lifted, rendered at the target, optionally blended, then downscaled
/// to the token grid.
struct TeacherSupervision {
    FeatureMap target_tokens;  // h x w x C
    RenderOutput rendered;     // H x W (before blending)
    std::size_t num_gaussians = 0;
};
TeacherSupervision teacher_supervision(const ModelParams& teacher, std::span<const ContextView> scene_views,
                                       const ViewTriple& views, const TrainConfig& config);

struct StepDiagnostics {
    double loss = 0.0;
    double grad_norm = 0.0;
    double prototype_entropy = 0.0; // entropy of the mean teacher distribution
    bool skipped = false;
    ViewTriple views;
};

/// One iteration: sample views, build the teacher target, backprop into the
/// student, Adam step, and EMA teacher update every `ema_every` steps.
StepDiagnostics train_step(TrainState& state, std::span<const std::vector<ContextView>> scenes,
                           const TrainConfig& config);

} // namespace snd::distill
