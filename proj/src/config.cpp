// SPDX-License-Identifier: Apache-2.0
#include "snd/config.hpp"

#include "snd/io.hpp"

#include <fstream>
#include <set>
#include <stdexcept>

namespace snd::harness {
namespace {

using nlohmann::json;
using distill::HeadMode;
using distill::LossKind;
using distill::TargetMode;
using distill::TeacherMode;
using distill::UpscaleMode;

struct Toggles {
    bool blend = true;
    UpscaleMode upscale = UpscaleMode::kMaskAware;
    LossKind loss = LossKind::kDistill;
    TeacherMode teacher = TeacherMode::kEma;
    TargetMode target = TargetMode::kNovel;
};

Toggles preset(Ablation a) {
    Toggles t;
    switch (a) {
    case Ablation::kA: t.blend = false; break;
    case Ablation::kB: t.upscale = UpscaleMode::kBilinear; break;
    case Ablation::kC: t.loss = LossKind::kCosine; break;
    case Ablation::kD: t.teacher = TeacherMode::kFrozen; break;
    case Ablation::kE: t.target = TargetMode::kContext; break;
    case Ablation::kG:
        t.loss = LossKind::kFeatureMse;
        t.teacher = TeacherMode::kFrozen;
        break;
    case Ablation::kH:
        t.blend = false;
        t.upscale = UpscaleMode::kBilinear;
        t.teacher = TeacherMode::kFrozen;
        break;
    case Ablation::kFull:
    case Ablation::kCustom: break;
    }
    return t;
}

Toggles toggles_of(const distill::TrainConfig& c) {
    return {c.blend, c.upscale, c.distill.loss, c.teacher, c.target};
}

std::string upscale_name(UpscaleMode m) { return m == UpscaleMode::kMaskAware ? "mask_aware" : "bilinear"; }
std::string teacher_name(TeacherMode m) { return m == TeacherMode::kEma ? "ema" : "frozen"; }
std::string target_name(TargetMode m) { return m == TargetMode::kNovel ? "novel" : "context"; }

template <typename Enum>
Enum parse_enum(const std::string& key, const std::string& value,
                std::initializer_list<std::pair<const char*, Enum>> options) {
    for (const auto& [name, e] : options) {
        if (value == name) {
            return e;
        }
    }
    throw std::invalid_argument("config: invalid value '" + value + "' for " + key);
}

const std::set<std::string> kToggleKeys{"blend", "upscale", "loss", "teacher", "target"};

} // namespace

std::string to_string(Ablation a) {
    switch (a) {
    case Ablation::kFull: return "full";
    case Ablation::kA: return "A";
    case Ablation::kB: return "B";
    case Ablation::kC: return "C";
    case Ablation::kD: return "D";
    case Ablation::kE: return "E";
    case Ablation::kG: return "G";
    case Ablation::kH: return "H";
    case Ablation::kCustom: return "custom";
    }
    return "?";
}

Ablation ablation_from_string(const std::string& s) {
    for (Ablation a : {Ablation::kFull, Ablation::kA, Ablation::kB, Ablation::kC, Ablation::kD, Ablation::kE,
                       Ablation::kG, Ablation::kH, Ablation::kCustom}) {
        if (to_string(a) == s) {
            return a;
        }
    }
    throw std::invalid_argument("unknown ablation '" + s + "' (expected A, B, C, D, E, G, H, full or custom)");
}

std::string ablation_row_label(Ablation a) {
    switch (a) {
    case Ablation::kA: return "Without Blending (A)";
    case Ablation::kB: return "Bilinear instead of Masked Upscaling (B)";
    case Ablation::kC: return "Cosine Loss instead of Distillation Loss (C)";
    case Ablation::kD: return "Frozen instead of Learnable Teacher (D)";
    case Ablation::kE: return "Context instead of Novel Views (E)";
    case Ablation::kG: return "Feature Rendering Loss (G)";
    case Ablation::kH: return "Basic Variant (H)";
    case Ablation::kFull: return "Ours (Full Model)";
    case Ablation::kCustom: return "Custom";
    }
    return "?";
}

const std::vector<Ablation>& ablation_grid() {
    static const std::vector<Ablation> grid{Ablation::kA, Ablation::kB, Ablation::kC, Ablation::kD,
                                            Ablation::kE, Ablation::kG, Ablation::kH, Ablation::kFull};
    return grid;
}

void RunConfig::apply_ablation() {
    if (ablation == Ablation::kCustom) {
        return;
    }
    const Toggles t = preset(ablation);
    train.blend = t.blend;
    train.upscale = t.upscale;
    train.distill.loss = t.loss;
    train.teacher = t.teacher;
    train.target = t.target;
}

void RunConfig::validate() const {
    auto require = [](bool ok, const std::string& what) {
        if (!ok) {
            throw std::invalid_argument("config: " + what);
        }
    };
    require(train_scenes >= 1, "train_scenes must be >= 1");
    require(heldout_scenes >= 2, "heldout_scenes must be >= 2");
    require(objects_per_scene >= 1, "objects_per_scene must be >= 1");
    require(views_per_scene >= 3, "views_per_scene must be >= 3");
    require(steps >= 0, "steps must be >= 0");
    require(log_every >= 1, "log_every must be >= 1");
    train.encoder.validate();
    train.head.validate();
    require(train.encoder.channels_in == 3, "encoder channels_in must be 3");
    require(train.distill.tau_s > 0.0 && train.distill.tau_t > 0.0, "temperatures must be positive");
    require(train.adam.lr > 0.0, "lr must be positive");
    require(train.adam.beta1 >= 0.0 && train.adam.beta1 < 1.0 && train.adam.beta2 >= 0.0 && train.adam.beta2 < 1.0,
            "Adam betas must lie in [0, 1)");
    require(train.adam.weight_decay >= 0.0, "weight_decay must be >= 0");
    require(train.ema_every >= 1, "ema_every must be >= 1");
    require(train.ema_lambda >= 0.0 && train.ema_lambda <= 1.0, "ema_lambda must lie in [0, 1]");
    require(train.blend_alpha >= 0.0 && train.blend_alpha <= 1.0, "blend_alpha must lie in [0, 1]");
    require(train.stride >= 1 && train.encoder.image_size % train.stride == 0, "stride must divide image_size");
    require(train.max_context_gap >= 2, "max_context_gap must be >= 2");
    require(train.lift.pixel_footprint_factor > 0.0, "pixel_footprint_factor must be positive");
    require(train.lift.default_opacity >= 0.0 && train.lift.default_opacity <= 1.0, "default_opacity must lie in [0, 1]");
    require(probe.depth_ridge_lambda > 0.0, "depth_ridge_lambda must be positive");
    require(probe.seg_l2 >= 0.0 && probe.seg_max_iterations >= 1, "invalid segmentation probe settings");
    require(probe.correspondence_threshold_px > 0.0, "correspondence threshold must be positive");
    require(probe.correspondence_ratio > 0.0 && probe.correspondence_ratio <= 1.0, "ratio must lie in (0, 1]");
    require(probe.correspondence_view_gap >= 1 && probe.correspondence_view_gap < views_per_scene,
            "correspondence_view_gap must be in [1, views_per_scene)");
    if (ablation != Ablation::kCustom) {
        const Toggles want = preset(ablation);
        const Toggles have = toggles_of(train);
        require(want.blend == have.blend && want.upscale == have.upscale && want.loss == have.loss &&
                    want.teacher == have.teacher && want.target == have.target,
                "toggles contradict ablation " + to_string(ablation));
    }
}

std::uint64_t RunConfig::model_seed() const { return seed * 0x9E3779B97F4A7C15ull + 1; }
std::uint64_t RunConfig::train_scene_seed_base() const { return seed << 20; }
std::uint64_t RunConfig::heldout_scene_seed_base() const { return (seed << 20) + (1u << 19); }

json to_json(const RunConfig& c) {
    const distill::TrainConfig& t = c.train;
    json j;
    j["seed"] = c.seed;
    j["train_scenes"] = c.train_scenes;
    j["heldout_scenes"] = c.heldout_scenes;
    j["objects_per_scene"] = c.objects_per_scene;
    j["views_per_scene"] = c.views_per_scene;
    j["steps"] = c.steps;
    j["log_every"] = c.log_every;
    j["scene_dir"] = c.scene_dir;
    j["out_dir"] = c.out_dir;
    j["ablation"] = to_string(c.ablation);

    j["image_size"] = t.encoder.image_size;
    j["patch_size"] = t.encoder.patch_size;
    j["embed_dim"] = t.encoder.embed_dim;
    j["hidden_dim"] = t.encoder.hidden_dim;
    j["head_layers"] = t.head.layers;
    j["head_hidden"] = t.head.hidden;
    j["head_bottleneck"] = t.head.bottleneck;
    j["head_prototypes"] = t.head.prototypes;

    j["tau_s"] = t.distill.tau_s;
    j["tau_t"] = t.distill.tau_t;
    j["head_mode"] = distill::to_string(t.distill.head_mode);
    j["lr"] = t.adam.lr;
    j["beta1"] = t.adam.beta1;
    j["beta2"] = t.adam.beta2;
    j["adam_eps"] = t.adam.eps;
    j["weight_decay"] = t.adam.weight_decay;
    j["ema_every"] = t.ema_every;
    j["ema_lambda"] = t.ema_lambda;

    j["blend"] = t.blend;
    j["upscale"] = upscale_name(t.upscale);
    j["loss"] = distill::to_string(t.distill.loss);
    j["teacher"] = teacher_name(t.teacher);
    j["target"] = target_name(t.target);
    j["blend_alpha"] = t.blend_alpha;
    j["blend_alpha_weighted"] = t.blend_alpha_weighted;
    j["stride"] = t.stride;
    j["max_context_gap"] = t.max_context_gap;
    j["pixel_footprint_factor"] = t.lift.pixel_footprint_factor;
    j["default_opacity"] = t.lift.default_opacity;

    j["depth_ridge_lambda"] = c.probe.depth_ridge_lambda;
    j["seg_l2"] = c.probe.seg_l2;
    j["seg_max_iterations"] = c.probe.seg_max_iterations;
    j["correspondence_threshold_px"] = c.probe.correspondence_threshold_px;
    j["correspondence_ratio"] = c.probe.correspondence_ratio;
    j["correspondence_view_gap"] = c.probe.correspondence_view_gap;
    return j;
}

RunConfig config_from_json(const json& j) {
    if (!j.is_object()) {
        throw std::invalid_argument("config: top level must be a JSON object");
    }
    RunConfig c;
    const json known = to_json(c);
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) {
            throw std::invalid_argument("config: unknown key '" + key + "'");
        }
    }
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) {
            try {
                field = j.at(key).get<std::remove_reference_t<decltype(field)>>();
            } catch (const json::exception&) {
                throw std::invalid_argument(std::string("config: wrong type for ") + key);
            }
        }
    };

    if (j.contains("ablation")) {
        c.ablation = ablation_from_string(j.at("ablation").get<std::string>());
    }
    c.apply_ablation();

    distill::TrainConfig& t = c.train;
    get("seed", c.seed);
    get("train_scenes", c.train_scenes);
    get("heldout_scenes", c.heldout_scenes);
    get("objects_per_scene", c.objects_per_scene);
    get("views_per_scene", c.views_per_scene);
    get("steps", c.steps);
    get("log_every", c.log_every);
    get("scene_dir", c.scene_dir);
    get("out_dir", c.out_dir);
    get("image_size", t.encoder.image_size);
    get("patch_size", t.encoder.patch_size);
    get("embed_dim", t.encoder.embed_dim);
    get("hidden_dim", t.encoder.hidden_dim);
    get("head_layers", t.head.layers);
    get("head_hidden", t.head.hidden);
    get("head_bottleneck", t.head.bottleneck);
    get("head_prototypes", t.head.prototypes);
    get("tau_s", t.distill.tau_s);
    get("tau_t", t.distill.tau_t);
    get("lr", t.adam.lr);
    get("beta1", t.adam.beta1);
    get("beta2", t.adam.beta2);
    get("adam_eps", t.adam.eps);
    get("weight_decay", t.adam.weight_decay);
    get("ema_every", t.ema_every);
    get("ema_lambda", t.ema_lambda);
    get("blend", t.blend);
    get("blend_alpha", t.blend_alpha);
    get("blend_alpha_weighted", t.blend_alpha_weighted);
    get("stride", t.stride);
    get("max_context_gap", t.max_context_gap);
    get("pixel_footprint_factor", t.lift.pixel_footprint_factor);
    get("default_opacity", t.lift.default_opacity);
    get("depth_ridge_lambda", c.probe.depth_ridge_lambda);
    get("seg_l2", c.probe.seg_l2);
    get("seg_max_iterations", c.probe.seg_max_iterations);
    get("correspondence_threshold_px", c.probe.correspondence_threshold_px);
    get("correspondence_ratio", c.probe.correspondence_ratio);
    get("correspondence_view_gap", c.probe.correspondence_view_gap);

    auto get_string = [&](const char* key) -> std::optional<std::string> {
        if (!j.contains(key)) {
            return std::nullopt;
        }
        if (!j.at(key).is_string()) {
            throw std::invalid_argument(std::string("config: wrong type for ") + key);
        }
        return j.at(key).get<std::string>();
    };
    if (auto v = get_string("head_mode")) {
        t.distill.head_mode = parse_enum<HeadMode>("head_mode", *v, {{"shared", HeadMode::kShared}, {"ema", HeadMode::kEma}});
    }
    if (auto v = get_string("upscale")) {
        t.upscale = parse_enum<UpscaleMode>("upscale", *v,
                                            {{"mask_aware", UpscaleMode::kMaskAware}, {"bilinear", UpscaleMode::kBilinear}});
    }
    if (auto v = get_string("loss")) {
        t.distill.loss = parse_enum<LossKind>(
            "loss", *v,
            {{"distill", LossKind::kDistill}, {"cosine", LossKind::kCosine}, {"feature_mse", LossKind::kFeatureMse}});
    }
    if (auto v = get_string("teacher")) {
        t.teacher = parse_enum<TeacherMode>("teacher", *v, {{"ema", TeacherMode::kEma}, {"frozen", TeacherMode::kFrozen}});
    }
    if (auto v = get_string("target")) {
        t.target = parse_enum<TargetMode>("target", *v, {{"novel", TargetMode::kNovel}, {"context", TargetMode::kContext}});
    }
    c.validate();
    return c;
}

std::string canonical_json(const RunConfig& cfg) {
    json j = to_json(cfg);
    // placement only; identical runs in different directories hash alike
    j.erase("out_dir");
    j.erase("scene_dir");
    return j.dump();
}

std::string config_hash(const RunConfig& cfg) { return sha256_hex(canonical_json(cfg)); }

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open config " + path);
    }
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw std::invalid_argument("config: " + path + " is not valid JSON: " + e.what());
    }
    return config_from_json(j);
}

} // namespace snd::harness
