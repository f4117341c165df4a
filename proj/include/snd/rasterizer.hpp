// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snd/geometry.hpp"

#include <optional>
#include <span>
#include <vector>

namespace snd {

struct FeatureScene;

struct RasterSettings {
    double lowpass_floor = 0.3;          // px^2 added to the projected covariance diagonal
    double alpha_clamp = 0.999;
    double transmittance_cutoff = 1e-4;
    int tile_size = 16;
};

/// Inclusive pixel rectangle; a splat only touches pixels whose centres fall inside
/// its 3-sigma box.
struct PixelRect {
    int col_min = 0, col_max = -1, row_min = 0, row_max = -1;

    bool empty() const { return col_max < col_min || row_max < row_min; }
    bool contains(int row, int col) const {
        return row >= row_min && row <= row_max && col >= col_min && col <= col_max;
    }
};

struct Splat2D {
    Vec2 center;
    Mat2 cov2d;
    Mat2 conic; // cov2d^-1
    double depth = 0.0;
    double opacity = 0.0;
    std::span<const double> feature;
    int gaussian_index = -1;
    PixelRect bounds;
};

struct RenderOutput {
    FeatureMap features;
    FeatureMap alpha;
};

/// EWA flattening of a 3D Gaussian. The projection Jacobian uses x/z and y/z
/// clamped to 1.3 times the half field of view, so near-plane Gaussians far off
/// axis cannot smear across the image. Returns std::nullopt when the Gaussian is
/// behind the camera or its 3-sigma box misses the viewport.
std::optional<Splat2D> project_gaussian(const Gaussian& g, int gaussian_index, const Camera& cam,
                                        const RasterSettings& settings = {});

struct CompositeResult {
    VecX feature;
    double alpha = 0.0;
};

/// Front-to-back compositing of `splats` (already sorted by (depth, index)) at the
/// continuous pixel position `at`. Every splat is evaluated; no box test.
CompositeResult composite_pixel(std::span<const Splat2D> splats, const Vec2& at, int channels,
                                const RasterSettings& settings = {});

/// Tiled renderer.
RenderOutput render(std::span<const Gaussian> gaussians, int channels, const Camera& cam,
                    const RasterSettings& settings = {});
RenderOutput render(const FeatureScene& scene, const Camera& cam, const RasterSettings& settings = {});

/// O(pixels * gaussians) oracle with the same per-pixel semantics as render().
RenderOutput render_reference(std::span<const Gaussian> gaussians, int channels, const Camera& cam,
                              const RasterSettings& settings = {});
RenderOutput render_reference(const FeatureScene& scene, const Camera& cam,
                              const RasterSettings& settings = {});

/// Projects, culls and sorts by (depth, gaussian_index).
std::vector<Splat2D> project_and_sort(std::span<const Gaussian> gaussians, int channels, const Camera& cam,
                                      const RasterSettings& settings);

} // namespace snd
