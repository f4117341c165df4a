// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>

namespace snd::harness {

struct OracleReport {
    int scenes = 0;
    int mismatched_scenes = 0;
    double max_abs_diff = 0.0;
    double seconds = 0.0;
};

/// Renders random scenes (up to 1000 Gaussians, 64x64, C in {1, 3, 32}) with the
/// tiled and reference rasterizers and compares the outputs bit for bit.
OracleReport rasterizer_oracle(int scenes, std::uint64_t seed);

struct GradientReport {
    int configs = 0;
    std::int64_t parameters_checked = 0;
    std::int64_t failures = 0;
    double max_rel_error = 0.0; // over entries above the absolute floor
    std::string worst;          // "<config>/<segment>[index]" of the largest error
    double seconds = 0.0;
};

struct GradientGateSettings {
    double step = 1e-5;
    double rel_tolerance = 1e-4;
    double abs_floor = 1e-8;
};

/// Central finite differences against backward() for every parameter of
/// `configs` random small models, cycling through loss kinds and head modes.
GradientReport gradient_gate(int configs, std::uint64_t seed, const GradientGateSettings& settings = {});

} // namespace snd::harness
