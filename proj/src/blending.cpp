// SPDX-License-Identifier: Apache-2.0
#include "snd/blending.hpp"

#include "snd/parallel.hpp"

#include <stdexcept>
#include <unordered_map>
#include <vector>

namespace snd {

FeatureMap semantic_blend(const FeatureMap& rendered, const SemanticMask& mask, double alpha_blend,
                          const FeatureMap* mean_weights) {
    if (rendered.height() != mask.height() || rendered.width() != mask.width()) {
        throw std::invalid_argument("semantic_blend: feature map and mask sizes differ");
    }
    if (!(alpha_blend >= 0.0 && alpha_blend <= 1.0)) {
        throw std::invalid_argument("semantic_blend: blend factor outside [0, 1]");
    }
    if (mean_weights && (mean_weights->height() != mask.height() || mean_weights->width() != mask.width() ||
                         mean_weights->channels() != 1)) {
        throw std::invalid_argument("semantic_blend: weight map must be H x W x 1");
    }

    const int channels = rendered.channels();
    const int width = rendered.width();

    // Pass 1: per-label sums in row-major order (fixed order -> reproducible bits).
    std::unordered_map<Label, std::size_t> slot;
    std::vector<double> sums;
    std::vector<double> weighted_sums;
    std::vector<double> counts;
    std::vector<double> weight_totals;
    std::vector<std::size_t> pixel_slot(rendered.pixels());
    for (int r = 0; r < rendered.height(); ++r) {
        for (int c = 0; c < width; ++c) {
            auto [it, inserted] = slot.try_emplace(mask.at(r, c), counts.size());
            if (inserted) {
                sums.resize(sums.size() + channels, 0.0);
                weighted_sums.resize(weighted_sums.size() + channels, 0.0);
                counts.push_back(0.0);
                weight_totals.push_back(0.0);
            }
            const std::size_t k = it->second;
            pixel_slot[static_cast<std::size_t>(r) * width + c] = k;
            const auto f = rendered.pixel(r, c);
            const double wgt = mean_weights ? mean_weights->at(r, c, 0) : 1.0;
            for (int ch = 0; ch < channels; ++ch) {
                sums[k * channels + ch] += f[ch];
                weighted_sums[k * channels + ch] += wgt * f[ch];
            }
            counts[k] += 1.0;
            weight_totals[k] += wgt;
        }
    }

    std::vector<double> means(sums.size());
    for (std::size_t k = 0; k < counts.size(); ++k) {
        const bool weighted = mean_weights && weight_totals[k] > 0.0;
        for (int ch = 0; ch < channels; ++ch) {
            means[k * channels + ch] = weighted ? weighted_sums[k * channels + ch] / weight_totals[k]
                                                : sums[k * channels + ch] / counts[k];
        }
    }

    // Pass 2: blend.
    FeatureMap out(rendered.height(), width, channels);
    const double keep = alpha_blend;
    const double mix = 1.0 - alpha_blend;
    parallel_for(static_cast<std::size_t>(rendered.height()), [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            for (int c = 0; c < width; ++c) {
                const std::size_t k = pixel_slot[r * width + c];
                const auto f = rendered.pixel(static_cast<int>(r), c);
                auto dst = out.pixel(static_cast<int>(r), c);
                for (int ch = 0; ch < channels; ++ch) {
                    dst[ch] = keep * f[ch] + mix * means[k * channels + ch];
                }
            }
        }
    });
    return out;
}

} // namespace snd
