// SPDX-License-Identifier: Apache-2.0
#include "snd/distill.hpp"

#include <cmath>
#include <stdexcept>

namespace snd::distill {

Matrix softmax_rows(const Matrix& logits, double tau) {
    if (!(tau > 0.0)) {
        throw std::invalid_argument("softmax_rows: temperature must be positive");
    }
    Matrix out(logits.rows(), logits.cols());
    for (Eigen::Index r = 0; r < logits.rows(); ++r) {
        const Eigen::RowVectorXd scaled = logits.row(r) / tau;
        const double peak = scaled.maxCoeff();
        const Eigen::RowVectorXd e = (scaled.array() - peak).exp();
        out.row(r) = e / e.sum();
    }
    return out;
}

double distill_loss(const Matrix& student_logits, const Matrix& teacher_logits, double tau_s, double tau_t) {
    if (student_logits.rows() != teacher_logits.rows() || student_logits.cols() != teacher_logits.cols()) {
        throw std::invalid_argument("distill_loss: logit shapes differ");
    }
    if (!(tau_s > 0.0) || !(tau_t > 0.0)) {
        throw std::invalid_argument("distill_loss: temperatures must be positive");
    }
    const Matrix teacher = softmax_rows(teacher_logits, tau_t);
    double total = 0.0;
    for (Eigen::Index r = 0; r < student_logits.rows(); ++r) {
        const Eigen::RowVectorXd scaled = student_logits.row(r) / tau_s;
        const double peak = scaled.maxCoeff();
        const double lse = peak + std::log((scaled.array() - peak).exp().sum());
        total -= teacher.row(r).dot((scaled.array() - lse).matrix());
    }
    return total / static_cast<double>(student_logits.rows());
}

double cosine_loss(const FeatureMap& student, const FeatureMap& target) {
    if (student.height() != target.height() || student.width() != target.width() ||
        student.channels() != target.channels()) {
        throw std::invalid_argument("cosine_loss: feature map shapes differ");
    }
    const Matrix a = to_tokens(student);
    const Matrix b = to_tokens(target);
    double sum = 0.0;
    for (Eigen::Index t = 0; t < a.cols(); ++t) {
        const double na = a.col(t).norm();
        const double nb = b.col(t).norm();
        if (na > 0.0 && nb > 0.0) {
            sum += a.col(t).dot(b.col(t)) / (na * nb);
        }
    }
    return 1.0 - sum / static_cast<double>(a.cols());
}

double feature_mse_loss(const FeatureMap& student, const FeatureMap& target) {
    if (student.height() != target.height() || student.width() != target.width() ||
        student.channels() != target.channels()) {
        throw std::invalid_argument("feature_mse_loss: feature map shapes differ");
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < student.data().size(); ++i) {
        const double d = student.data()[i] - target.data()[i];
        sum += d * d;
    }
    return sum / static_cast<double>(student.data().size());
}

std::string to_string(LossKind kind) {
    switch (kind) {
    case LossKind::kDistill: return "distill";
    case LossKind::kCosine: return "cosine";
    case LossKind::kFeatureMse: return "feature_mse";
    }
    return "?";
}

std::string to_string(HeadMode mode) { return mode == HeadMode::kShared ? "shared" : "ema"; }

void adam_step(ModelParams& params, AdamMoments& moments, std::span<const double> grads, const AdamSettings& settings) {
    std::vector<double>& p = params.values();
    if (grads.size() != p.size()) {
        throw std::invalid_argument("adam_step: gradient length does not match parameters");
    }
    if (moments.m.empty()) {
        moments.m.assign(p.size(), 0.0);
        moments.v.assign(p.size(), 0.0);
    }
    if (moments.m.size() != p.size() || moments.v.size() != p.size()) {
        throw std::invalid_argument("adam_step: optimiser moments do not match parameters");
    }
    moments.steps += 1;
    const double t = static_cast<double>(moments.steps);
    const double bias1 = 1.0 - std::pow(settings.beta1, t);
    const double bias2 = 1.0 - std::pow(settings.beta2, t);
    const double decay = 1.0 - settings.lr * settings.weight_decay;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = grads[i];
        moments.m[i] = settings.beta1 * moments.m[i] + (1.0 - settings.beta1) * g;
        moments.v[i] = settings.beta2 * moments.v[i] + (1.0 - settings.beta2) * g * g;
        const double m_hat = moments.m[i] / bias1;
        const double v_hat = moments.v[i] / bias2;
        p[i] = p[i] * decay - settings.lr * m_hat / (std::sqrt(v_hat) + settings.eps);
    }
}

ModelParams ema_update(const ModelParams& teacher, const ModelParams& student, double lambda) {
    if (!teacher.same_layout(student)) {
        throw std::invalid_argument("ema_update: teacher and student layouts differ");
    }
    if (!(lambda >= 0.0 && lambda <= 1.0)) {
        throw std::invalid_argument("ema_update: momentum outside [0, 1]");
    }
    ModelParams out = teacher;
    auto& v = out.values();
    const auto& s = student.values();
    for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = lambda * v[i] + (1.0 - lambda) * s[i];
    }
    return out;
}

} // namespace snd::distill
