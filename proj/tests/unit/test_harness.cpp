// SPDX-License-Identifier: Apache-2.0
#include "snd/config.hpp"
#include "snd/io.hpp"
#include "snd/pca.hpp"
#include "snd/synth.hpp"

#include <gtest/gtest.h>

#include <bit>
#include <filesystem>
#include <fstream>
#include <random>

namespace snd {
namespace {

using harness::Ablation;
using harness::RunConfig;

std::filesystem::path temp_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("snd_unit_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

FeatureMap random_map(std::uint64_t seed, int h, int w, int c) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> n;
    FeatureMap m(h, w, c);
    for (double& v : m.data()) {
        v = n(rng);
    }
    return m;
}

TEST(Config, JsonRoundTrip) {
    RunConfig c;
    c.seed = 77;
    c.steps = 12;
    c.train.blend_alpha = 0.3;
    c.train.distill.head_mode = distill::HeadMode::kShared;
    const RunConfig back = harness::config_from_json(harness::to_json(c));
    EXPECT_EQ(harness::to_json(back), harness::to_json(c));
    EXPECT_EQ(harness::config_hash(back), harness::config_hash(c));
}

TEST(Config, DefaultsFromEmptyObject) {
    const RunConfig c = harness::config_from_json(nlohmann::json::object());
    EXPECT_EQ(c.ablation, Ablation::kFull);
    EXPECT_TRUE(c.train.blend);
    EXPECT_EQ(c.train.distill.tau_s, 0.1);
    EXPECT_EQ(c.train.distill.tau_t, 0.07);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
    EXPECT_THROW(harness::config_from_json({{"stepz", 3}}), std::invalid_argument);
    EXPECT_THROW(harness::config_from_json({{"steps", "many"}}), std::invalid_argument);
    EXPECT_THROW(harness::config_from_json({{"blend_alpha", 1.5}}), std::invalid_argument);
    EXPECT_THROW(harness::config_from_json({{"loss", "l1"}}), std::invalid_argument);
    EXPECT_THROW(harness::config_from_json(nlohmann::json::array()), std::invalid_argument);
}

TEST(Config, AblationPresets) {
    const RunConfig a = harness::config_from_json({{"ablation", "A"}});
    EXPECT_FALSE(a.train.blend);
    const RunConfig h = harness::config_from_json({{"ablation", "H"}});
    EXPECT_FALSE(h.train.blend);
    EXPECT_EQ(h.train.upscale, distill::UpscaleMode::kBilinear);
    EXPECT_EQ(h.train.teacher, distill::TeacherMode::kFrozen);
    const RunConfig g = harness::config_from_json({{"ablation", "G"}});
    EXPECT_EQ(g.train.distill.loss, distill::LossKind::kFeatureMse);
    // contradicting a preset is an error, agreeing with it is fine
    EXPECT_THROW(harness::config_from_json({{"ablation", "A"}, {"blend", true}}), std::invalid_argument);
    EXPECT_NO_THROW(harness::config_from_json({{"ablation", "A"}, {"blend", false}}));
    EXPECT_NO_THROW(harness::config_from_json({{"ablation", "custom"}, {"blend", false}, {"loss", "cosine"}}));
    EXPECT_EQ(harness::ablation_grid().back(), Ablation::kFull);
    EXPECT_THROW(harness::ablation_from_string("F"), std::invalid_argument);
}

TEST(Config, HashIgnoresPlacementKeys) {
    RunConfig a, b;
    a.out_dir = "/tmp/x";
    b.out_dir = "/tmp/y";
    b.scene_dir = "/tmp/scenes";
    EXPECT_EQ(harness::config_hash(a), harness::config_hash(b));
    b.seed = 1;
    EXPECT_NE(harness::config_hash(a), harness::config_hash(b));
    EXPECT_EQ(harness::canonical_json(a).find("out_dir"), std::string::npos);
}

TEST(Config, ShippedFilesParse) {
    std::ifstream def(SND_CONFIG_DIR "/default.json");
    ASSERT_TRUE(def);
    EXPECT_EQ(harness::to_json(harness::config_from_json(nlohmann::json::parse(def))), harness::to_json(RunConfig{}));
    std::ifstream full(SND_CONFIG_DIR "/full_scale_reference.json");
    ASSERT_TRUE(full);
    const RunConfig big = harness::config_from_json(nlohmann::json::parse(full));
    EXPECT_NO_THROW(big.validate());
    EXPECT_EQ(big.train.head.prototypes, 65536);
}

TEST(Config, SeedStreamsAreDisjoint) {
    RunConfig c;
    c.seed = 3;
    EXPECT_NE(c.train_scene_seed_base(), c.heldout_scene_seed_base());
    EXPECT_GE(c.heldout_scene_seed_base() - c.train_scene_seed_base(), 1u << 19);
}

TEST(Hashing, KnownDigest) {
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
}

TEST(TensorIo, RoundTripIsBitExact) {
    const FeatureMap m = random_map(1, 5, 7, 3);
    EXPECT_EQ(decode_tensor(encode_tensor(m)), m);
    const auto dir = temp_dir("tensor");
    write_tensor(dir / "t.sndt", m);
    EXPECT_EQ(read_tensor(dir / "t.sndt"), m);
}

TEST(TensorIo, HeaderLayout) {
    const std::string bytes = encode_tensor(FeatureMap(2, 3, 4, 1.5));
    ASSERT_EQ(bytes.size(), 4u + 4 + 4 + 12 + 2 * 3 * 4 * 8);
    EXPECT_EQ(bytes.substr(0, 4), "SNDT");
    EXPECT_EQ(static_cast<unsigned char>(bytes[4]), 1); // version, little-endian
    EXPECT_EQ(static_cast<unsigned char>(bytes[8]), 3); // ndim
    EXPECT_EQ(static_cast<unsigned char>(bytes[12]), 2);
    EXPECT_EQ(static_cast<unsigned char>(bytes[16]), 3);
    EXPECT_EQ(static_cast<unsigned char>(bytes[20]), 4);
    std::uint64_t first = 0;
    for (int i = 0; i < 8; ++i) {
        first |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[24 + i])) << (8 * i);
    }
    EXPECT_EQ(std::bit_cast<double>(first), 1.5);
}

TEST(TensorIo, RejectsMalformedInput) {
    const std::string good = encode_tensor(random_map(2, 2, 2, 2));
    EXPECT_THROW(decode_tensor(good.substr(0, good.size() - 1)), FormatError);
    EXPECT_THROW(decode_tensor(good + "x"), FormatError);
    std::string bad_magic = good;
    bad_magic[0] = 'X';
    EXPECT_THROW(decode_tensor(bad_magic), FormatError);
    std::string bad_version = good;
    bad_version[4] = 9;
    EXPECT_THROW(decode_tensor(bad_version), FormatError);
    std::string no_dims = good;
    no_dims[8] = 0;
    EXPECT_THROW(decode_tensor(no_dims), FormatError);
    EXPECT_THROW(decode_tensor(""), FormatError);
    EXPECT_THROW(read_tensor("/nonexistent/file.sndt"), std::runtime_error);
}

TEST(Reports, LineRoundTrip) {
    const metrics::ProbeReport r{"student/depth", "rmse", 0.123456789012345678, 400, 9};
    const std::string line = report_line(r);
    EXPECT_EQ(line.find('\n'), std::string::npos);
    EXPECT_EQ(parse_report_line(line), r);
    EXPECT_THROW(parse_report_line("{\"task\": 1}"), FormatError);
    const auto dir = temp_dir("reports");
    write_reports(dir / "r.jsonl", {r, r});
    EXPECT_EQ(read_reports(dir / "r.jsonl").size(), 2u);
}

TEST(CheckpointIo, RoundTripAndValidation) {
    distill::EncoderConfig enc;
    enc.image_size = 16;
    enc.patch_size = 4;
    enc.embed_dim = 4;
    enc.hidden_dim = 8;
    distill::HeadConfig head;
    head.layers = 2;
    head.hidden = 8;
    head.bottleneck = 4;
    head.prototypes = 6;
    const distill::ModelParams s = distill::init_params(enc, head, 1);
    const distill::ModelParams t = distill::init_params(enc, head, 2);
    const std::string bytes = encode_checkpoint("{\"seed\":1}", s, t);
    const Checkpoint c = decode_checkpoint(bytes, enc, head);
    EXPECT_EQ(c.config_json, "{\"seed\":1}");
    EXPECT_EQ(c.student, s);
    EXPECT_EQ(c.teacher, t);
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - 3), enc, head), FormatError);
    // drop the last segment entirely
    const std::size_t last = head.prototypes * head.bottleneck * 8 + 8 + 4 + std::string("teacher/head.prototypes").size();
    EXPECT_THROW(decode_checkpoint(bytes.substr(0, bytes.size() - last), enc, head), FormatError);
    distill::HeadConfig other = head;
    other.prototypes = 7;
    EXPECT_THROW(decode_checkpoint(bytes, enc, other), FormatError);
}

TEST(SceneIo, RoundTripIsBitExact) {
    synth::SceneSpec spec = synth::random_scene_spec(5, 2);
    spec.gaussians_per_object = 50;
    spec.shell_spacing = 0.3;
    const synth::GeneratedScene scene = synth::generate_scene(spec);
    const synth::GeneratedScene back = scene_from_json(scene_to_json(scene));
    EXPECT_EQ(back.spec, scene.spec);
    ASSERT_EQ(back.gaussians.size(), scene.gaussians.size());
    for (std::size_t i = 0; i < scene.gaussians.size(); ++i) {
        const Gaussian& a = scene.gaussians[i];
        const Gaussian& b = back.gaussians[i];
        EXPECT_EQ(a.mean(), b.mean());
        EXPECT_EQ(a.rotation().coeffs(), b.rotation().coeffs());
        EXPECT_EQ(a.scale(), b.scale());
        EXPECT_EQ(a.opacity(), b.opacity());
        EXPECT_EQ(a.feature(), b.feature());
        EXPECT_EQ(a.label(), b.label());
    }
    EXPECT_THROW(scene_from_json("{\"spec\": 3}"), FormatError);
}

TEST(Pca, ThreeChannelPlanesMapToComponents) {
    // features vary along three independent axes with decreasing variance
    FeatureMap f(4, 4, 5);
    for (int r = 0; r < 4; ++r) {
        for (int c = 0; c < 4; ++c) {
            f.at(r, c, 0) = 10.0 * c;
            f.at(r, c, 2) = 3.0 * r;
            f.at(r, c, 4) = (r + c) % 2 == 0 ? 0.5 : -0.5;
        }
    }
    const PcaImage img = pca_rgb(f);
    ASSERT_EQ(img.rgb.size(), 4u * 4 * 3);
    // first component follows the column, scaled to the full range
    EXPECT_EQ(img.rgb[0], 0);
    EXPECT_EQ(img.rgb[3 * 3], 255);
    // second component follows the row
    EXPECT_EQ(img.rgb[1], 0);
    EXPECT_EQ(img.rgb[(3 * 4) * 3 + 1], 255);
}

TEST(Pca, DegenerateInputs) {
    const PcaImage gray = pca_rgb(FeatureMap(3, 3, 4, 2.0));
    for (std::uint8_t v : gray.rgb) {
        EXPECT_EQ(v, 128);
    }
    // rank one: the second and third components are flat
    FeatureMap line(2, 2, 3);
    for (int i = 0; i < 4; ++i) {
        line.data()[static_cast<std::size_t>(i) * 3] = i;
    }
    const PcaImage one = pca_rgb(line);
    EXPECT_EQ(one.rgb[1], 0);
    EXPECT_EQ(one.rgb[2], 0);
    EXPECT_THROW(pca_rgb(FeatureMap(2, 2, 2)), std::invalid_argument);
    const auto dir = temp_dir("pca");
    pca_visualize(random_map(3, 8, 8, 6), dir / "x.png");
    EXPECT_GT(std::filesystem::file_size(dir / "x.png"), 50u);
}

} // namespace
} // namespace snd
