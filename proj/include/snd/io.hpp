// SPDX-License-Identifier: Apache-2.0
#pragma once

#include "snd/distill.hpp"
#include "snd/metrics.hpp"
#include "snd/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace snd {

/// Malformed or truncated input file.
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_file(const std::filesystem::path& path);
/// Writes to a sibling temporary file and renames it into place.
void write_file(const std::filesystem::path& path, std::string_view bytes);

// Tensor files: "SNDT", u32 version, u32 ndim, u32 dims[ndim], f64 payload (all little-endian).
inline constexpr std::uint32_t kTensorVersion = 1;

std::string encode_tensor(const FeatureMap& map);
FeatureMap decode_tensor(std::string_view bytes);
void write_tensor(const std::filesystem::path& path, const FeatureMap& map);
FeatureMap read_tensor(const std::filesystem::path& path);

// Probe reports: one compact JSON object per line.
std::string report_line(const metrics::ProbeReport& report);
metrics::ProbeReport parse_report_line(std::string_view line);
void write_reports(const std::filesystem::path& path, const std::vector<metrics::ProbeReport>& reports);
std::vector<metrics::ProbeReport> read_reports(const std::filesystem::path& path);

// Checkpoints: "SNDC", u32 version, u32 config length + config JSON, then named
// f64 segments ("student/<name>", "teacher/<name>") until end of file.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    std::string config_json;
    distill::ModelParams student;
    distill::ModelParams teacher;
};

std::string encode_checkpoint(const std::string& config_json, const distill::ModelParams& student,
                              const distill::ModelParams& teacher);
/// `encoder`/`head` fix the expected layout; every segment must be present exactly once.
Checkpoint decode_checkpoint(std::string_view bytes, const distill::EncoderConfig& encoder,
                             const distill::HeadConfig& head);

// Scene files.
std::string scene_to_json(const synth::GeneratedScene& scene);
synth::GeneratedScene scene_from_json(std::string_view text);

/// 8-bit RGB PNG; `rgb` holds height * width * 3 bytes, row-major.
void write_png(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb);

} // namespace snd
