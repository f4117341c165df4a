// SPDX-License-Identifier: Apache-2.0
#include "snd/selftest.hpp"

#include "snd/distill.hpp"
#include "snd/rasterizer.hpp"

#include <chrono>
#include <cmath>
#include <random>

namespace snd::harness {
namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::vector<Gaussian> random_gaussians(std::mt19937_64& rng, int count, int channels) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::vector<Gaussian> out;
    out.reserve(count);
    for (int i = 0; i < count; ++i) {
        const Vec3 mean(1.5 * u(rng), 1.5 * u(rng), 2.0 + 4.0 * unit(rng));
        const Eigen::Quaterniond q(u(rng), u(rng), u(rng), u(rng) + 1e-3);
        const Vec3 scale(0.02 + 0.2 * unit(rng), 0.02 + 0.2 * unit(rng), 0.02 + 0.2 * unit(rng));
        VecX f(channels);
        for (int c = 0; c < channels; ++c) {
            f[c] = u(rng);
        }
        out.emplace_back(mean, q, scale, unit(rng), std::move(f));
    }
    return out;
}

} // namespace

OracleReport rasterizer_oracle(int scenes, std::uint64_t seed) {
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(seed);
    constexpr int kChannels[] = {1, 3, 32};
    OracleReport rep;
    for (int s = 0; s < scenes; ++s) {
        const int count = std::uniform_int_distribution<int>(1, 1000)(rng);
        const int channels = kChannels[s % 3];
        const std::vector<Gaussian> gs = random_gaussians(rng, count, channels);
        const Camera cam = Camera::from_fov(1.2, 64, 64);
        const RenderOutput a = render(gs, channels, cam);
        const RenderOutput b = render_reference(gs, channels, cam);
        ++rep.scenes;
        if (!(a.features == b.features) || !(a.alpha == b.alpha)) {
            ++rep.mismatched_scenes;
        }
        for (std::size_t i = 0; i < a.features.data().size(); ++i) {
            rep.max_abs_diff = std::max(rep.max_abs_diff, std::abs(a.features.data()[i] - b.features.data()[i]));
        }
    }
    rep.seconds = seconds_since(t0);
    return rep;
}

GradientReport gradient_gate(int configs, std::uint64_t seed, const GradientGateSettings& settings) {
    using namespace distill;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    auto pick = [&](int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); };

    GradientReport rep;
    for (int k = 0; k < configs; ++k) {
        EncoderConfig enc;
        enc.patch_size = pick(2, 4);
        enc.image_size = enc.patch_size * pick(2, 3);
        enc.embed_dim = pick(3, 6);
        enc.hidden_dim = pick(3, 8);
        HeadConfig head;
        head.layers = pick(1, 3);
        head.hidden = pick(3, 8);
        head.bottleneck = pick(2, 5);
        head.prototypes = pick(3, 10);

        DistillSettings ds;
        ds.loss = std::array{LossKind::kDistill, LossKind::kCosine, LossKind::kFeatureMse}[k % 3];
        ds.head_mode = (k / 3) % 2 == 0 ? HeadMode::kShared : HeadMode::kEma;

        TrainState state = TrainState::fresh(enc, head, rng());
        state.teacher = init_params(enc, head, rng());
        FeatureMap image(enc.image_size, enc.image_size, 3);
        for (double& v : image.data()) {
            v = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
        }
        FeatureMap target(enc.grid(), enc.grid(), enc.embed_dim);
        for (double& v : target.data()) {
            v = normal(rng);
        }

        const LossGradient lg = backward(state, image, target, ds);
        // the head source is held fixed: no gradient flows through the teacher side
        const ModelParams head_source = ds.head_mode == HeadMode::kShared ? state.student : state.teacher;
        ModelParams probe = state.student;
        for (std::size_t i = 0; i < probe.values().size(); ++i) {
            const double orig = probe.values()[i];
            probe.values()[i] = orig + settings.step;
            const double up = evaluate_loss(probe, head_source, image, target, ds);
            probe.values()[i] = orig - settings.step;
            const double down = evaluate_loss(probe, head_source, image, target, ds);
            probe.values()[i] = orig;
            const double fd = (up - down) / (2.0 * settings.step);
            const double diff = std::abs(fd - lg.grad[i]);
            ++rep.parameters_checked;
            if (diff <= settings.abs_floor) {
                continue;
            }
            const double rel = diff / std::max(std::abs(fd), std::abs(lg.grad[i]));
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst = "config" + std::to_string(k) + "/" + to_string(ds.loss) + "/" +
                            probe.layout().owner(i).name + "[" + std::to_string(i - probe.layout().owner(i).offset) +
                            "]";
            }
            if (!(rel < settings.rel_tolerance)) {
                ++rep.failures;
            }
        }
        ++rep.configs;
    }
    rep.seconds = seconds_since(t0);
    return rep;
}

} // namespace snd::harness
