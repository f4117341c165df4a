// SPDX-License-Identifier: Apache-2.0
#include "snd/lifting.hpp"

#include "snd/parallel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>

namespace snd {
namespace {

// Source coordinate of output index `i` when resampling n_in -> n_out with
// half-pixel centres; returns the two clamped taps and the weight of the second.
struct Taps {
    int lo;
    int hi;
    double frac;
    double coord; // continuous source coordinate (unclamped)
};

Taps taps_for(int i, int n_in, int n_out) {
    const double coord = (i + 0.5) * static_cast<double>(n_in) / n_out - 0.5;
    const double base = std::floor(coord);
    Taps t;
    t.coord = coord;
    t.frac = coord - base;
    const int b = static_cast<int>(base);
    t.lo = std::clamp(b, 0, n_in - 1);
    t.hi = std::clamp(b + 1, 0, n_in - 1);
    return t;
}

FeatureMap bilinear_resample(const FeatureMap& in, int out_h, int out_w) {
    FeatureMap out(out_h, out_w, in.channels());
    const int channels = in.channels();
    parallel_for(static_cast<std::size_t>(out_h), [&](std::size_t begin, std::size_t end) {
        for (std::size_t r = begin; r < end; ++r) {
            const Taps ty = taps_for(static_cast<int>(r), in.height(), out_h);
            for (int c = 0; c < out_w; ++c) {
                const Taps tx = taps_for(c, in.width(), out_w);
                const std::array<double, 4> w{(1 - tx.frac) * (1 - ty.frac), tx.frac * (1 - ty.frac),
                                              (1 - tx.frac) * ty.frac, tx.frac * ty.frac};
                const std::array<std::span<const double>, 4> f{in.pixel(ty.lo, tx.lo), in.pixel(ty.lo, tx.hi),
                                                               in.pixel(ty.hi, tx.lo), in.pixel(ty.hi, tx.hi)};
                auto dst = out.pixel(static_cast<int>(r), c);
                for (int ch = 0; ch < channels; ++ch) {
                    dst[ch] = w[0] * f[0][ch] + w[1] * f[1][ch] + w[2] * f[2][ch] + w[3] * f[3][ch];
                }
            }
        }
    });
    return out;
}

int integer_scale(const FeatureMap& low, const SemanticMask& mask) {
    if (mask.height() % low.height() != 0 || mask.width() % low.width() != 0) {
        throw std::invalid_argument("mask_aware_upscale: mask size is not an integer multiple of the feature map");
    }
    const int sy = mask.height() / low.height();
    const int sx = mask.width() / low.width();
    if (sy != sx) {
        throw std::invalid_argument("mask_aware_upscale: anisotropic scale factors");
    }
    return sy;
}

} // namespace

std::optional<std::array<double, 4>> same_label_weights(const std::array<double, 4>& bilinear,
                                                        const std::array<bool, 4>& same_label) {
    std::array<double, 4> wt = bilinear;
    double kept = 0.0;
    for (int k = 0; k < 4; ++k) {
        if (same_label[k]) {
            kept += wt[k];
        } else {
            wt[k] = 0.0;
        }
    }
    if (!(kept > 0.0)) {
        return std::nullopt;
    }
    for (double& v : wt) {
        v /= kept;
    }
    return wt;
}

void ContextView::validate() const {
    const int h = camera.height();
    const int w = camera.width();
    if (image.height() != h || image.width() != w || image.channels() != 3) {
        throw std::invalid_argument("ContextView: image must be H x W x 3 matching the camera");
    }
    if (depth.height() != h || depth.width() != w || depth.channels() != 1) {
        throw std::invalid_argument("ContextView: depth must be H x W x 1 matching the camera");
    }
    if (mask.height() != h || mask.width() != w) {
        throw std::invalid_argument("ContextView: mask must match the camera size");
    }
    for (double d : depth.data()) {
        if (!(d >= 0.0)) {
            throw std::invalid_argument("ContextView: negative or NaN depth");
        }
    }
}

LiftedGeometry lift_geometry(std::span<const ContextView> views, int stride, const LiftSettings& settings) {
    if (views.empty()) {
        throw std::invalid_argument("lift_geometry: no context views");
    }
    if (stride < 1) {
        throw std::invalid_argument("lift_geometry: stride must be positive");
    }
    if (!(settings.pixel_footprint_factor > 0.0) || !(settings.default_opacity >= 0.0 && settings.default_opacity <= 1.0)) {
        throw std::invalid_argument("lift_geometry: invalid settings");
    }
    LiftedGeometry out;
    for (std::size_t v = 0; v < views.size(); ++v) {
        const ContextView& view = views[v];
        view.validate();
        const Camera& cam = view.camera;
        if (cam.height() % stride != 0 || cam.width() % stride != 0) {
            throw std::invalid_argument("lift_geometry: stride must divide the image size");
        }
        for (int row = stride / 2; row < cam.height(); row += stride) {
            for (int col = stride / 2; col < cam.width(); col += stride) {
                const double d = view.depth.at(row, col, 0);
                if (d <= 0.0) {
                    continue;
                }
                const double sigma = settings.pixel_footprint_factor * d / cam.fx();
                out.gaussians.emplace_back(unproject_pixel(cam, pixel_center(row, col), d),
                                           Eigen::Quaterniond::Identity(), Vec3::Constant(sigma),
                                           settings.default_opacity, VecX{}, view.mask.at(row, col));
                out.source.push_back({static_cast<int>(v), row, col});
            }
        }
    }
    return out;
}

FeatureMap mask_aware_upscale(const FeatureMap& low, const SemanticMask& mask_high, UpscaleTrace* trace) {
    const int s = integer_scale(low, mask_high);
    const int h = low.height();
    const int w = low.width();
    const int big_h = mask_high.height();
    const int big_w = mask_high.width();
    const int channels = low.channels();

    std::vector<Label> low_labels(static_cast<std::size_t>(h) * w);
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            low_labels[static_cast<std::size_t>(r) * w + c] = mask_high.at(r * s + s / 2, c * s + s / 2);
        }
    }
    auto low_label = [&](int r, int c) { return low_labels[static_cast<std::size_t>(r) * w + c]; };

    FeatureMap out(big_h, big_w, channels);
    std::vector<UpscaleRoute> route(static_cast<std::size_t>(big_h) * big_w, UpscaleRoute::kMasked);

    parallel_for(static_cast<std::size_t>(big_h), [&](std::size_t begin, std::size_t end) {
        for (std::size_t rr = begin; rr < end; ++rr) {
            const int row = static_cast<int>(rr);
            const Taps ty = taps_for(row, h, big_h);
            for (int col = 0; col < big_w; ++col) {
                const Taps tx = taps_for(col, w, big_w);
                const Label target = mask_high.at(row, col);
                const std::array<int, 4> nr{ty.lo, ty.lo, ty.hi, ty.hi};
                const std::array<int, 4> nc{tx.lo, tx.hi, tx.lo, tx.hi};
                std::array<bool, 4> same{};
                for (int k = 0; k < 4; ++k) {
                    same[k] = low_label(nr[k], nc[k]) == target;
                }
                const auto wt = same_label_weights({(1 - tx.frac) * (1 - ty.frac), tx.frac * (1 - ty.frac),
                                                    (1 - tx.frac) * ty.frac, tx.frac * ty.frac},
                                                   same);
                auto dst = out.pixel(row, col);
                if (wt) {
                    for (int k = 0; k < 4; ++k) {
                        if ((*wt)[k] == 0.0) {
                            continue;
                        }
                        const auto f = low.pixel(nr[k], nc[k]);
                        for (int ch = 0; ch < channels; ++ch) {
                            dst[ch] += (*wt)[k] * f[ch];
                        }
                    }
                    continue;
                }

                // Nearest same-label low-res point by increasing Chebyshev ring.
                const int cr = std::clamp(static_cast<int>(std::lround(ty.coord)), 0, h - 1);
                const int cc = std::clamp(static_cast<int>(std::lround(tx.coord)), 0, w - 1);
                int best_r = -1;
                int best_c = -1;
                for (int radius = 0; radius <= kUpscaleFallbackRadius && best_r < 0; ++radius) {
                    double best_d2 = std::numeric_limits<double>::infinity();
                    for (int r = cr - radius; r <= cr + radius; ++r) {
                        if (r < 0 || r >= h) {
                            continue;
                        }
                        for (int c = cc - radius; c <= cc + radius; ++c) {
                            if (c < 0 || c >= w) {
                                continue;
                            }
                            if (std::max(std::abs(r - cr), std::abs(c - cc)) != radius || low_label(r, c) != target) {
                                continue;
                            }
                            const double d2 = (r - ty.coord) * (r - ty.coord) + (c - tx.coord) * (c - tx.coord);
                            if (d2 < best_d2) {
                                best_d2 = d2;
                                best_r = r;
                                best_c = c;
                            }
                        }
                    }
                }
                if (best_r >= 0) {
                    const auto f = low.pixel(best_r, best_c);
                    std::copy(f.begin(), f.end(), dst.begin());
                    route[static_cast<std::size_t>(row) * big_w + col] = UpscaleRoute::kNearestLabel;
                    continue;
                }

                const std::array<double, 4> bw{(1 - tx.frac) * (1 - ty.frac), tx.frac * (1 - ty.frac),
                                               (1 - tx.frac) * ty.frac, tx.frac * ty.frac};
                for (int k = 0; k < 4; ++k) {
                    const auto f = low.pixel(nr[k], nc[k]);
                    for (int ch = 0; ch < channels; ++ch) {
                        dst[ch] += bw[k] * f[ch];
                    }
                }
                route[static_cast<std::size_t>(row) * big_w + col] = UpscaleRoute::kPlainBilinear;
            }
        }
    });

    if (trace) {
        trace->route = std::move(route);
    }
    return out;
}

FeatureMap bilinear_upscale(const FeatureMap& low, int factor) {
    if (factor < 1) {
        throw std::invalid_argument("bilinear_upscale: factor must be positive");
    }
    return bilinear_resample(low, low.height() * factor, low.width() * factor);
}

FeatureMap bilinear_downscale(const FeatureMap& high, int out_height, int out_width) {
    if (out_height < 1 || out_width < 1 || out_height > high.height() || out_width > high.width()) {
        throw std::invalid_argument("bilinear_downscale: invalid output size");
    }
    return bilinear_resample(high, out_height, out_width);
}

FeatureScene attach_features(LiftedGeometry geometry, std::span<const FeatureMap> high_maps) {
    if (high_maps.empty()) {
        throw std::invalid_argument("attach_features: no feature maps");
    }
    const int channels = high_maps.front().channels();
    for (const FeatureMap& m : high_maps) {
        if (m.channels() != channels) {
            throw std::invalid_argument("attach_features: feature maps disagree on channel count");
        }
    }
    if (geometry.source.size() != geometry.gaussians.size()) {
        throw std::invalid_argument("attach_features: source records do not match Gaussians");
    }

    FeatureScene scene;
    scene.channels = channels;
    for (std::size_t i = 0; i < geometry.gaussians.size(); ++i) {
        const SourcePixel& src = geometry.source[i];
        if (src.view < 0 || static_cast<std::size_t>(src.view) >= high_maps.size()) {
            throw std::out_of_range("attach_features: source view " + std::to_string(src.view) + " out of range");
        }
        const FeatureMap& map = high_maps[static_cast<std::size_t>(src.view)];
        if (src.row < 0 || src.row >= map.height() || src.col < 0 || src.col >= map.width()) {
            throw std::out_of_range("attach_features: source pixel (" + std::to_string(src.row) + ", " +
                                    std::to_string(src.col) + ") outside view " + std::to_string(src.view));
        }
        const auto f = map.pixel(src.row, src.col);
        geometry.gaussians[i].set_feature(Eigen::Map<const VecX>(f.data(), channels));
    }
    scene.gaussians = std::move(geometry.gaussians);
    scene.source = std::move(geometry.source);
    return scene;
}

} // namespace snd
