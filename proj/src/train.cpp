// SPDX-License-Identifier: Apache-2.0
#include "snd/blending.hpp"
#include "snd/distill.hpp"

#include <array>
#include <cmath>
#include <iostream>
#include <random>
#include <stdexcept>

namespace snd::distill {
namespace {

// Column-wise softmax of logits / tau.
Matrix softmax_cols(const Matrix& logits, double tau) {
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index t = 0; t < logits.cols(); ++t) {
        const Eigen::VectorXd scaled = logits.col(t) / tau;
        const Eigen::VectorXd e = (scaled.array() - scaled.maxCoeff()).exp();
        out.col(t) = e / e.sum();
    }
    return out;
}

double cross_entropy_cols(const Matrix& teacher_probs, const Matrix& student_logits, double tau_s) {
    double total = 0.0;
    for (Eigen::Index t = 0; t < student_logits.cols(); ++t) {
        const Eigen::VectorXd scaled = student_logits.col(t) / tau_s;
        const double peak = scaled.maxCoeff();
        const double lse = peak + std::log((scaled.array() - peak).exp().sum());
        total -= teacher_probs.col(t).dot((scaled.array() - lse).matrix());
    }
    return total / static_cast<double>(student_logits.cols());
}

void check_target(const EncoderConfig& cfg, const FeatureMap& target) {
    if (target.height() != cfg.grid() || target.width() != cfg.grid() || target.channels() != cfg.embed_dim) {
        throw std::invalid_argument("backward: teacher target must be " + std::to_string(cfg.grid()) + "x" +
                                    std::to_string(cfg.grid()) + "x" + std::to_string(cfg.embed_dim));
    }
}

struct Forward {
    EncoderCache encoder;
    double loss = 0.0;
    Matrix d_features;      // d loss / d student features (C x T)
    HeadCache head;         // distillation only
    Matrix d_logits;        // distillation only
    Matrix teacher_probs;   // distillation only
};

Forward forward_loss(const ModelParams& student, const ModelParams& head_source, const FeatureMap& image,
                     const FeatureMap& teacher_target, const DistillSettings& settings, bool want_grad) {
    const EncoderConfig& cfg = student.layout().encoder();
    check_target(cfg, teacher_target);
    if (!head_source.same_layout(student)) {
        throw std::invalid_argument("backward: teacher and student layouts differ");
    }
    Forward f;
    f.encoder = encoder_forward(student, extract_patches(cfg, image));
    const Matrix& y = f.encoder.out;
    const Matrix target = to_tokens(teacher_target);
    const double tokens = static_cast<double>(y.cols());

    switch (settings.loss) {
    case LossKind::kDistill: {
        if (!(settings.tau_s > 0.0) || !(settings.tau_t > 0.0)) {
            throw std::invalid_argument("backward: temperatures must be positive");
        }
        // stop-gradient: the teacher side is evaluated once and treated as data
        f.teacher_probs = softmax_cols(head_forward(head_source, target).logits, settings.tau_t);
        f.head = head_forward(student, y);
        f.loss = cross_entropy_cols(f.teacher_probs, f.head.logits, settings.tau_s);
        if (want_grad) {
            f.d_logits = (softmax_cols(f.head.logits, settings.tau_s) - f.teacher_probs) / (settings.tau_s * tokens);
        }
        break;
    }
    case LossKind::kCosine: {
        double sum = 0.0;
        f.d_features = Matrix::Zero(y.rows(), y.cols());
        for (Eigen::Index t = 0; t < y.cols(); ++t) {
            const double ny = y.col(t).norm();
            const double ng = target.col(t).norm();
            if (!(ny > 0.0 && ng > 0.0)) {
                continue;
            }
            const double cos = y.col(t).dot(target.col(t)) / (ny * ng);
            sum += cos;
            f.d_features.col(t) = -(target.col(t) / (ny * ng) - cos * y.col(t) / (ny * ny)) / tokens;
        }
        f.loss = 1.0 - sum / tokens;
        break;
    }
    case LossKind::kFeatureMse: {
        const Matrix diff = y - target;
        const double count = static_cast<double>(diff.size());
        f.loss = diff.squaredNorm() / count;
        f.d_features = 2.0 * diff / count;
        break;
    }
    }
    return f;
}

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

} // namespace

TrainState TrainState::fresh(const EncoderConfig& encoder, const HeadConfig& head, std::uint64_t seed) {
    TrainState s;
    s.student = init_params(encoder, head, seed);
    s.teacher = s.student;
    s.seed = seed;
    return s;
}

LossGradient backward(const TrainState& state, const FeatureMap& image, const FeatureMap& teacher_target,
                      const DistillSettings& settings) {
    const ModelParams& student = state.student;
    const ModelParams& head_source = settings.head_mode == HeadMode::kShared ? state.student : state.teacher;
    Forward f = forward_loss(student, head_source, image, teacher_target, settings, true);

    LossGradient out;
    out.loss = f.loss;
    out.grad.assign(student.values().size(), 0.0);
    Matrix d_features;
    if (settings.loss == LossKind::kDistill) {
        d_features = head_backward(student, f.head, f.d_logits, out.grad);
        out.teacher_probs = std::move(f.teacher_probs);
    } else {
        d_features = std::move(f.d_features);
    }
    encoder_backward(student, f.encoder, d_features, out.grad);

    for (const Segment& s : student.layout().segments()) {
        for (std::size_t i = s.offset; i < s.offset + s.size(); ++i) {
            if (!std::isfinite(out.grad[i])) {
                throw std::runtime_error("backward: non-finite gradient in segment " + s.name);
            }
        }
    }
    return out;
}

double evaluate_loss(const ModelParams& student, const ModelParams& teacher_head_source, const FeatureMap& image,
                     const FeatureMap& teacher_target, const DistillSettings& settings) {
    return forward_loss(student, teacher_head_source, image, teacher_target, settings, false).loss;
}

ViewTriple sample_views(std::uint64_t seed, std::int64_t step, std::size_t num_scenes, int views_per_scene,
                        int max_gap, TargetMode target) {
    if (num_scenes == 0) {
        throw std::invalid_argument("sample_views: no scenes");
    }
    if (views_per_scene < 3) {
        throw std::invalid_argument("sample_views: need at least 3 views per scene");
    }
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(step))));
    ViewTriple v;
    v.scene = std::uniform_int_distribution<std::size_t>(0, num_scenes - 1)(rng);
    const int gap_hi = std::max(2, std::min(max_gap, views_per_scene - 1));
    const int gap = std::uniform_int_distribution<int>(2, gap_hi)(rng);
    v.context_a = std::uniform_int_distribution<int>(0, views_per_scene - 1 - gap)(rng);
    v.context_b = v.context_a + gap;
    if (target == TargetMode::kNovel) {
        v.target = std::uniform_int_distribution<int>(v.context_a + 1, v.context_b - 1)(rng);
    } else {
        v.target = std::uniform_int_distribution<int>(0, 1)(rng) == 0 ? v.context_a : v.context_b;
    }
    return v;
}

TeacherSupervision teacher_supervision(const ModelParams& teacher, std::span<const ContextView> scene_views,
                                       const ViewTriple& views, const TrainConfig& config) {
    const auto n = static_cast<int>(scene_views.size());
    if (views.context_a < 0 || views.context_a >= n || views.context_b < 0 || views.context_b >= n ||
        views.target < 0 || views.target >= n) {
        throw std::out_of_range("teacher_supervision: view index out of range");
    }
    const std::array<ContextView, 2> contexts{scene_views[views.context_a], scene_views[views.context_b]};
    const ContextView& target = scene_views[views.target];
    const EncoderConfig& cfg = teacher.layout().encoder();

    std::array<FeatureMap, 2> high;
    for (std::size_t j = 0; j < 2; ++j) {
        const FeatureMap low = encode(teacher, contexts[j].image);
        high[j] = config.upscale == UpscaleMode::kMaskAware ? mask_aware_upscale(low, contexts[j].mask)
                                                           : bilinear_upscale(low, cfg.patch_size);
    }

    TeacherSupervision sup;
    LiftedGeometry geometry = lift_geometry(contexts, config.stride, config.lift);
    sup.num_gaussians = geometry.gaussians.size();
    const FeatureScene scene = attach_features(std::move(geometry), high);
    sup.rendered = render(scene, target.camera, config.raster);

    FeatureMap supervision = sup.rendered.features;
    if (config.blend) {
        supervision = semantic_blend(supervision, target.mask, config.blend_alpha,
                                     config.blend_alpha_weighted ? &sup.rendered.alpha : nullptr);
    }
    sup.target_tokens = bilinear_downscale(supervision, cfg.grid(), cfg.grid());
    return sup;
}

StepDiagnostics train_step(TrainState& state, std::span<const std::vector<ContextView>> scenes,
                           const TrainConfig& config) {
    if (config.ema_every < 1) {
        throw std::invalid_argument("train_step: ema_every must be positive");
    }
    StepDiagnostics diag;
    diag.views = sample_views(state.seed, state.step, scenes.size(),
                              static_cast<int>(scenes.front().size()), config.max_context_gap, config.target);
    const std::vector<ContextView>& views = scenes[diag.views.scene];
    const TeacherSupervision sup = teacher_supervision(state.teacher, views, diag.views, config);
    if (sup.num_gaussians == 0) {
        std::cerr << "warning: step " << state.step << " skipped: context views lifted no Gaussians\n";
        diag.skipped = true;
        ++state.step;
        return diag;
    }

    const LossGradient lg = backward(state, views[diag.views.target].image, sup.target_tokens, config.distill);
    adam_step(state.student, state.moments, lg.grad, config.adam);
    ++state.step;
    if (config.teacher == TeacherMode::kEma && state.step % config.ema_every == 0) {
        state.teacher = ema_update(state.teacher, state.student, config.ema_lambda);
    }

    diag.loss = lg.loss;
    double sq = 0.0;
    for (double g : lg.grad) {
        sq += g * g;
    }
    diag.grad_norm = std::sqrt(sq);
    if (lg.teacher_probs.size() > 0) {
        const Eigen::VectorXd usage = lg.teacher_probs.rowwise().mean();
        double h = 0.0;
        for (Eigen::Index k = 0; k < usage.size(); ++k) {
            if (usage(k) > 0.0) {
                h -= usage(k) * std::log(usage(k));
            }
        }
        diag.prototype_entropy = h;
    }
    return diag;
}

} // namespace snd::distill
