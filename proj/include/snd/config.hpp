// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snd/distill.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <vector>

namespace snd::harness {

/// Ablation presets. `kCustom` leaves the individual toggles free.
enum class Ablation { kFull, kA, kB, kC, kD, kE, kG, kH, kCustom };

std::string to_string(Ablation a);
Ablation ablation_from_string(const std::string& s);
/// Row label used in comparison tables.
std::string ablation_row_label(Ablation a);
/// Grid run by `ablate`, in table order.
const std::vector<Ablation>& ablation_grid();

struct ProbeConfig {
    double depth_ridge_lambda = 1e-4;
    double seg_l2 = 1e-3;
    int seg_max_iterations = 3000;
    double correspondence_threshold_px = 10.0;
    double correspondence_ratio = 0.9;
    int correspondence_view_gap = 2;
};

struct RunConfig {
    std::uint64_t seed = 0;
    int train_scenes = 20;
    int heldout_scenes = 5;
    int objects_per_scene = 4;
    int views_per_scene = 12;
    int steps = 3000;
    int log_every = 50;
    std::string scene_dir; // when set, training scenes are read from gen output
    std::string out_dir = "runs/default";

    Ablation ablation = Ablation::kFull;
    distill::TrainConfig train;
    ProbeConfig probe;

    /// Applies the toggles implied by `ablation` (no-op for kCustom).
    void apply_ablation();
    /// Throws std::invalid_argument on out-of-range values or toggles that
    /// contradict the named ablation.
    void validate() const;

    std::uint64_t model_seed() const;
    std::uint64_t train_scene_seed_base() const;
    std::uint64_t heldout_scene_seed_base() const;
};

nlohmann::json to_json(const RunConfig& cfg);
/// Unknown keys are rejected. Toggles absent from `j` are filled from the
/// ablation preset; toggles present must agree with it.
RunConfig config_from_json(const nlohmann::json& j);

/// Sorted-key compact JSON text, without the placement keys out_dir and scene_dir.
std::string canonical_json(const RunConfig& cfg);
/// Hex SHA-256 of canonical_json(cfg).
std::string config_hash(const RunConfig& cfg);

RunConfig load_config(const std::string& path);

} // namespace snd::harness
