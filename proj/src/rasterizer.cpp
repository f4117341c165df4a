// SPDX-License-Identifier: Apache-2.0
#include "snd/rasterizer.hpp"

#include "snd/lifting.hpp"
#include "snd/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>

namespace snd {
namespace {

double splat_alpha(const Splat2D& s, const Vec2& at, double alpha_clamp) {
    const Vec2 d = at - s.center;
    const double power = -0.5 * (s.conic(0, 0) * d.x() * d.x() + 2.0 * s.conic(0, 1) * d.x() * d.y() +
                                 s.conic(1, 1) * d.y() * d.y());
    const double a = s.opacity * std::exp(power);
    return std::clamp(a, 0.0, alpha_clamp);
}

// Shared by the tiled and reference paths so both produce identical bits.
// `order` lists candidate splats in (depth, index) order; splats whose box does
// not contain the pixel are skipped.
[[gnu::noinline]] double composite_candidates(const std::vector<Splat2D>& splats,
                                              std::span<const std::uint32_t> order, int row, int col,
                                              std::span<double> out, const RasterSettings& settings) {
    const Vec2 at = pixel_center(row, col);
    double transmittance = 1.0;
    for (const std::uint32_t idx : order) {
        const Splat2D& s = splats[idx];
        if (!s.bounds.contains(row, col)) {
            continue;
        }
        const double a = splat_alpha(s, at, settings.alpha_clamp);
        const double w = a * transmittance;
        for (std::size_t c = 0; c < out.size(); ++c) {
            out[c] += s.feature[c] * w;
        }
        transmittance *= (1.0 - a);
        if (transmittance < settings.transmittance_cutoff) {
            break;
        }
    }
    return 1.0 - transmittance;
}

void check_channels(std::span<const Gaussian> gaussians, int channels) {
    if (channels < 1) {
        throw std::invalid_argument("render: channel count must be positive");
    }
    for (const Gaussian& g : gaussians) {
        if (g.feature().size() != channels) {
            throw std::invalid_argument("render: Gaussian feature has " + std::to_string(g.feature().size()) +
                                        " channels, expected " + std::to_string(channels));
        }
    }
}

} // namespace

std::optional<Splat2D> project_gaussian(const Gaussian& g, int gaussian_index, const Camera& cam,
                                        const RasterSettings& settings) {
    const auto proj = project_point(cam, g.mean());
    if (!proj) {
        return std::nullopt;
    }
    const Vec3 pc = cam.pose().apply(g.mean());
    const double z = pc.z();
    // Jacobian evaluated at the mean with x/z, y/z clamped to 1.3x the half field of view
    const double lim_x = 1.3 * 0.5 * cam.width() / cam.fx();
    const double lim_y = 1.3 * 0.5 * cam.height() / cam.fy();
    const double tx = std::clamp(pc.x() / z, -lim_x, lim_x);
    const double ty = std::clamp(pc.y() / z, -lim_y, lim_y);
    Eigen::Matrix<double, 2, 3> jac;
    jac << cam.fx() / z, 0.0, -cam.fx() * tx / z,
           0.0, cam.fy() / z, -cam.fy() * ty / z;
    const Eigen::Matrix<double, 2, 3> t = jac * cam.pose().rotation;
    Mat2 cov = t * covariance_of(g) * t.transpose();
    cov(0, 1) = cov(1, 0) = 0.5 * (cov(0, 1) + cov(1, 0));
    cov(0, 0) += settings.lowpass_floor;
    cov(1, 1) += settings.lowpass_floor;

    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(0, 1);
    if (!(det > 0.0) || !std::isfinite(det)) {
        return std::nullopt;
    }

    Splat2D s;
    s.center = proj->pixel;
    s.cov2d = cov;
    s.conic << cov(1, 1) / det, -cov(0, 1) / det, -cov(0, 1) / det, cov(0, 0) / det;
    s.depth = proj->depth;
    s.opacity = g.opacity();
    s.feature = {g.feature().data(), static_cast<std::size_t>(g.feature().size())};
    s.gaussian_index = gaussian_index;

    const double hx = 3.0 * std::sqrt(cov(0, 0));
    const double hy = 3.0 * std::sqrt(cov(1, 1));
    const double col_lo = std::ceil(s.center.x() - hx - 0.5);
    const double col_hi = std::floor(s.center.x() + hx - 0.5);
    const double row_lo = std::ceil(s.center.y() - hy - 0.5);
    const double row_hi = std::floor(s.center.y() + hy - 0.5);
    if (col_hi < 0.0 || row_hi < 0.0 || col_lo > cam.width() - 1 || row_lo > cam.height() - 1) {
        return std::nullopt;
    }
    s.bounds.col_min = static_cast<int>(std::max(col_lo, 0.0));
    s.bounds.col_max = static_cast<int>(std::min(col_hi, cam.width() - 1.0));
    s.bounds.row_min = static_cast<int>(std::max(row_lo, 0.0));
    s.bounds.row_max = static_cast<int>(std::min(row_hi, cam.height() - 1.0));
    if (s.bounds.empty()) {
        return std::nullopt;
    }
    return s;
}

CompositeResult composite_pixel(std::span<const Splat2D> splats, const Vec2& at, int channels,
                                const RasterSettings& settings) {
    CompositeResult result{VecX::Zero(channels), 0.0};
    double transmittance = 1.0;
    for (const Splat2D& s : splats) {
        const double a = splat_alpha(s, at, settings.alpha_clamp);
        const double w = a * transmittance;
        for (int c = 0; c < channels; ++c) {
            result.feature[c] += s.feature[c] * w;
        }
        transmittance *= (1.0 - a);
        if (transmittance < settings.transmittance_cutoff) {
            break;
        }
    }
    result.alpha = 1.0 - transmittance;
    return result;
}

std::vector<Splat2D> project_and_sort(std::span<const Gaussian> gaussians, int channels, const Camera& cam,
                                      const RasterSettings& settings) {
    check_channels(gaussians, channels);
    std::vector<std::optional<Splat2D>> projected(gaussians.size());
    parallel_for(gaussians.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t i = begin; i < end; ++i) {
            projected[i] = project_gaussian(gaussians[i], static_cast<int>(i), cam, settings);
        }
    });
    std::vector<Splat2D> splats;
    splats.reserve(gaussians.size());
    for (auto& s : projected) {
        if (s) {
            splats.push_back(std::move(*s));
        }
    }
    std::sort(splats.begin(), splats.end(), [](const Splat2D& a, const Splat2D& b) {
        if (a.depth != b.depth) {
            return a.depth < b.depth;
        }
        return a.gaussian_index < b.gaussian_index;
    });
    return splats;
}

RenderOutput render(std::span<const Gaussian> gaussians, int channels, const Camera& cam,
                    const RasterSettings& settings) {
    const std::vector<Splat2D> splats = project_and_sort(gaussians, channels, cam, settings);
    const int width = cam.width();
    const int height = cam.height();
    const int tile = settings.tile_size;
    if (tile < 1) {
        throw std::invalid_argument("render: tile size must be positive");
    }
    const int tiles_x = (width + tile - 1) / tile;
    const int tiles_y = (height + tile - 1) / tile;

    // Binning in sorted order keeps every tile list sorted by (depth, index).
    std::vector<std::vector<std::uint32_t>> bins(static_cast<std::size_t>(tiles_x) * tiles_y);
    for (std::size_t i = 0; i < splats.size(); ++i) {
        const PixelRect& b = splats[i].bounds;
        for (int ty = b.row_min / tile; ty <= b.row_max / tile; ++ty) {
            for (int tx = b.col_min / tile; tx <= b.col_max / tile; ++tx) {
                bins[static_cast<std::size_t>(ty) * tiles_x + tx].push_back(static_cast<std::uint32_t>(i));
            }
        }
    }

    RenderOutput out{FeatureMap(height, width, channels), FeatureMap(height, width, 1)};
    parallel_for(bins.size(), [&](std::size_t begin, std::size_t end) {
        for (std::size_t t = begin; t < end; ++t) {
            const int ty = static_cast<int>(t) / tiles_x;
            const int tx = static_cast<int>(t) % tiles_x;
            const auto& bin = bins[t];
            if (bin.empty()) {
                continue;
            }
            const int row_end = std::min(height, (ty + 1) * tile);
            const int col_end = std::min(width, (tx + 1) * tile);
            for (int row = ty * tile; row < row_end; ++row) {
                for (int col = tx * tile; col < col_end; ++col) {
                    out.alpha.at(row, col, 0) =
                        composite_candidates(splats, bin, row, col, out.features.pixel(row, col), settings);
                }
            }
        }
    });
    return out;
}

RenderOutput render_reference(std::span<const Gaussian> gaussians, int channels, const Camera& cam,
                              const RasterSettings& settings) {
    const std::vector<Splat2D> splats = project_and_sort(gaussians, channels, cam, settings);
    std::vector<std::uint32_t> all(splats.size());
    std::iota(all.begin(), all.end(), 0u);

    RenderOutput out{FeatureMap(cam.height(), cam.width(), channels), FeatureMap(cam.height(), cam.width(), 1)};
    for (int row = 0; row < cam.height(); ++row) {
        for (int col = 0; col < cam.width(); ++col) {
            out.alpha.at(row, col, 0) =
                composite_candidates(splats, all, row, col, out.features.pixel(row, col), settings);
        }
    }
    return out;
}

RenderOutput render(const FeatureScene& scene, const Camera& cam, const RasterSettings& settings) {
    return render(scene.gaussians, scene.channels, cam, settings);
}

RenderOutput render_reference(const FeatureScene& scene, const Camera& cam, const RasterSettings& settings) {
    return render_reference(scene.gaussians, scene.channels, cam, settings);
}

} // namespace snd
