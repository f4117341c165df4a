// SPDX-License-Identifier: Apache-2.0
#include "snd/io.hpp"

#include <nlohmann/json.hpp>
#include <openssl/evp.h>
#include <png.h>

#include <array>
#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <memory>
#include <sstream>

namespace snd {
namespace {

using nlohmann::json;

void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
    }
}

void put_f64s(std::string& out, std::span<const double> values) {
    out.reserve(out.size() + values.size() * 8);
    for (double v : values) {
        put_u64(out, std::bit_cast<std::uint64_t>(v));
    }
}

class Reader {
public:
    Reader(std::string_view bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

    bool at_end() const { return pos_ == bytes_.size(); }

    std::string_view take(std::size_t n) {
        if (bytes_.size() - pos_ < n) {
            throw FormatError(what_ + ": truncated (needed " + std::to_string(n) + " bytes at offset " +
                              std::to_string(pos_) + ", " + std::to_string(bytes_.size() - pos_) + " left)");
        }
        std::string_view s = bytes_.substr(pos_, n);
        pos_ += n;
        return s;
    }

    std::uint32_t u32() {
        const std::string_view s = take(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        }
        return v;
    }

    std::uint64_t u64() {
        const std::string_view s = take(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) {
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[i])) << (8 * i);
        }
        return v;
    }

    void f64s(std::span<double> out) {
        if ((bytes_.size() - pos_) / 8 < out.size()) {
            take(out.size() * 8); // throws with the truncation message
        }
        for (double& v : out) {
            v = std::bit_cast<double>(u64());
        }
    }

    void magic(std::string_view expected) {
        if (take(expected.size()) != expected) {
            throw FormatError(what_ + ": bad magic (expected \"" + std::string(expected) + "\")");
        }
    }

private:
    std::string_view bytes_;
    std::string what_;
    std::size_t pos_ = 0;
};

json vec_json(const Eigen::Ref<const Eigen::VectorXd>& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        a.push_back(v[i]);
    }
    return a;
}

Vec3 vec3_from(const json& a) {
    if (!a.is_array() || a.size() != 3) {
        throw FormatError("scene: expected a 3-vector");
    }
    return {a[0].get<double>(), a[1].get<double>(), a[2].get<double>()};
}

} // namespace

std::string sha256_hex(std::string_view bytes) {
    std::array<unsigned char, EVP_MAX_MD_SIZE> digest{};
    unsigned int len = 0;
    if (EVP_Digest(bytes.data(), bytes.size(), digest.data(), &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("sha256: digest failed");
    }
    static constexpr char kHex[] = "0123456789abcdef";
    std::string out;
    out.reserve(2 * len);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(kHex[digest[i] >> 4]);
        out.push_back(kHex[digest[i] & 0xF]);
    }
    return out;
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    return std::move(ss).str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write " + tmp.string());
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw std::runtime_error("write failed: " + tmp.string());
        }
    }
    std::filesystem::rename(tmp, path);
}

std::string encode_tensor(const FeatureMap& map) {
    if (map.empty()) {
        throw std::invalid_argument("tensor: refusing to write an empty map");
    }
    std::string out = "SNDT";
    put_u32(out, kTensorVersion);
    put_u32(out, 3);
    put_u32(out, static_cast<std::uint32_t>(map.height()));
    put_u32(out, static_cast<std::uint32_t>(map.width()));
    put_u32(out, static_cast<std::uint32_t>(map.channels()));
    put_f64s(out, map.data());
    return out;
}

FeatureMap decode_tensor(std::string_view bytes) {
    Reader r(bytes, "tensor");
    r.magic("SNDT");
    const std::uint32_t version = r.u32();
    if (version != kTensorVersion) {
        throw FormatError("tensor: unsupported version " + std::to_string(version));
    }
    const std::uint32_t ndim = r.u32();
    if (ndim == 0) {
        throw FormatError("tensor: empty dims");
    }
    if (ndim > 3) {
        throw FormatError("tensor: " + std::to_string(ndim) + " dims, a feature map has at most 3");
    }
    std::array<std::uint32_t, 3> dims{1, 1, 1};
    std::uint64_t count = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        dims[i] = r.u32();
        if (dims[i] == 0 || dims[i] > (1u << 24)) {
            throw FormatError("tensor: invalid dimension " + std::to_string(dims[i]));
        }
        count *= dims[i];
    }
    if (count > (std::uint64_t{1} << 32)) {
        throw FormatError("tensor: payload too large");
    }
    std::vector<double> data(count);
    r.f64s(data);
    if (!r.at_end()) {
        throw FormatError("tensor: trailing bytes after payload");
    }
    return FeatureMap(static_cast<int>(dims[0]), static_cast<int>(dims[1]), static_cast<int>(dims[2]),
                      std::move(data));
}

void write_tensor(const std::filesystem::path& path, const FeatureMap& map) { write_file(path, encode_tensor(map)); }

FeatureMap read_tensor(const std::filesystem::path& path) { return decode_tensor(read_file(path)); }

std::string report_line(const metrics::ProbeReport& report) {
    report.validate();
    const json j{{"task", report.task},
                 {"metric", report.metric},
                 {"value", report.value},
                 {"num_samples", report.num_samples},
                 {"seed", report.seed}};
    return j.dump();
}

metrics::ProbeReport parse_report_line(std::string_view line) {
    try {
        const json j = json::parse(line);
        metrics::ProbeReport r{j.at("task").get<std::string>(), j.at("metric").get<std::string>(),
                               j.at("value").get<double>(), j.at("num_samples").get<std::int64_t>(),
                               j.at("seed").get<std::uint64_t>()};
        r.validate();
        return r;
    } catch (const json::exception& e) {
        throw FormatError(std::string("report: ") + e.what());
    }
}

void write_reports(const std::filesystem::path& path, const std::vector<metrics::ProbeReport>& reports) {
    std::string out;
    for (const auto& r : reports) {
        out += report_line(r);
        out += '\n';
    }
    write_file(path, out);
}

std::vector<metrics::ProbeReport> read_reports(const std::filesystem::path& path) {
    std::istringstream in(read_file(path));
    std::vector<metrics::ProbeReport> out;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty()) {
            out.push_back(parse_report_line(line));
        }
    }
    return out;
}

std::string encode_checkpoint(const std::string& config_json, const distill::ModelParams& student,
                              const distill::ModelParams& teacher) {
    if (!student.same_layout(teacher)) {
        throw std::invalid_argument("checkpoint: student and teacher layouts differ");
    }
    std::string out = "SNDC";
    put_u32(out, kCheckpointVersion);
    put_u32(out, static_cast<std::uint32_t>(config_json.size()));
    out += config_json;
    for (const auto& [prefix, params] : {std::pair{"student/", &student}, std::pair{"teacher/", &teacher}}) {
        for (const distill::Segment& s : params->layout().segments()) {
            const std::string name = prefix + s.name;
            put_u32(out, static_cast<std::uint32_t>(name.size()));
            out += name;
            put_u64(out, s.size());
            put_f64s(out, std::span<const double>(params->values()).subspan(s.offset, s.size()));
        }
    }
    return out;
}

Checkpoint decode_checkpoint(std::string_view bytes, const distill::EncoderConfig& encoder,
                             const distill::HeadConfig& head) {
    Reader r(bytes, "checkpoint");
    r.magic("SNDC");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint: unsupported version " + std::to_string(version));
    }
    Checkpoint ckpt;
    ckpt.config_json = std::string(r.take(r.u32()));

    auto layout = std::make_shared<const distill::ParamLayout>(encoder, head);
    ckpt.student = distill::ModelParams(layout);
    ckpt.teacher = distill::ModelParams(layout);
    std::map<std::string, bool> seen;
    while (!r.at_end()) {
        const std::string name(r.take(r.u32()));
        const std::uint64_t count = r.u64();
        distill::ModelParams* target = nullptr;
        std::string segment;
        if (name.starts_with("student/")) {
            target = &ckpt.student;
            segment = name.substr(8);
        } else if (name.starts_with("teacher/")) {
            target = &ckpt.teacher;
            segment = name.substr(8);
        } else {
            throw FormatError("checkpoint: unexpected segment '" + name + "'");
        }
        const distill::Segment* s = nullptr;
        try {
            s = &layout->segment(segment);
        } catch (const std::exception&) {
            throw FormatError("checkpoint: segment '" + name + "' not in model layout");
        }
        if (count != s->size()) {
            throw FormatError("checkpoint: segment '" + name + "' has " + std::to_string(count) + " values, expected " +
                              std::to_string(s->size()));
        }
        if (seen[name]) {
            throw FormatError("checkpoint: duplicate segment '" + name + "'");
        }
        seen[name] = true;
        r.f64s(std::span<double>(target->values()).subspan(s->offset, s->size()));
    }
    if (seen.size() != 2 * layout->segments().size()) {
        throw FormatError("checkpoint: missing segments (found " + std::to_string(seen.size()) + " of " +
                          std::to_string(2 * layout->segments().size()) + ")");
    }
    return ckpt;
}

std::string scene_to_json(const synth::GeneratedScene& scene) {
    const synth::SceneSpec& spec = scene.spec;
    json objects = json::array();
    for (const auto& o : spec.objects) {
        objects.push_back({{"kind", synth::to_string(o.kind)}, {"label", o.label}, {"color", vec_json(o.color)}});
    }
    json gaussians = json::array();
    for (const Gaussian& g : scene.gaussians) {
        const auto& q = g.rotation();
        gaussians.push_back({{"mean", vec_json(g.mean())},
                             {"quaternion", {q.w(), q.x(), q.y(), q.z()}},
                             {"scale", vec_json(g.scale())},
                             {"opacity", g.opacity()},
                             {"color", vec_json(g.feature())},
                             {"label", g.label()}});
    }
    const json j{{"spec",
                  {{"seed", spec.seed},
                   {"room_half_extent", spec.room_half_extent},
                   {"wall_height", spec.wall_height},
                   {"gaussians_per_object", spec.gaussians_per_object},
                   {"shell_spacing", spec.shell_spacing},
                   {"objects", objects}}},
                 {"gaussians", gaussians}};
    return j.dump();
}

synth::GeneratedScene scene_from_json(std::string_view text) {
    try {
        const json j = json::parse(text);
        synth::GeneratedScene scene;
        const json& s = j.at("spec");
        scene.spec.seed = s.at("seed").get<std::uint64_t>();
        scene.spec.room_half_extent = s.at("room_half_extent").get<double>();
        scene.spec.wall_height = s.at("wall_height").get<double>();
        scene.spec.gaussians_per_object = s.at("gaussians_per_object").get<int>();
        scene.spec.shell_spacing = s.at("shell_spacing").get<double>();
        for (const json& o : s.at("objects")) {
            scene.spec.objects.push_back({synth::object_kind_from_string(o.at("kind").get<std::string>()),
                                          o.at("label").get<Label>(), vec3_from(o.at("color"))});
        }
        scene.spec.validate();
        for (const json& g : j.at("gaussians")) {
            const json& q = g.at("quaternion");
            if (!q.is_array() || q.size() != 4) {
                throw FormatError("scene: quaternion must have 4 components");
            }
            const Vec3 color = vec3_from(g.at("color"));
            scene.gaussians.emplace_back(vec3_from(g.at("mean")),
                                         Eigen::Quaterniond(q[0].get<double>(), q[1].get<double>(),
                                                            q[2].get<double>(), q[3].get<double>()),
                                         vec3_from(g.at("scale")), g.at("opacity").get<double>(), VecX(color),
                                         g.at("label").get<Label>());
        }
        return scene;
    } catch (const json::exception& e) {
        throw FormatError(std::string("scene: ") + e.what());
    }
}

void write_png(const std::filesystem::path& path, int width, int height, const std::vector<std::uint8_t>& rgb) {
    if (width <= 0 || height <= 0 || rgb.size() != static_cast<std::size_t>(width) * height * 3) {
        throw std::invalid_argument("png: buffer size does not match dimensions");
    }
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    std::unique_ptr<FILE, int (*)(FILE*)> fp(std::fopen(path.c_str(), "wb"), &std::fclose);
    if (!fp) {
        throw std::runtime_error("png: cannot open " + path.string());
    }
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        png_destroy_write_struct(&png, nullptr);
        throw std::runtime_error("png: allocation failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw std::runtime_error("png: encoding failed for " + path.string());
    }
    png_init_io(png, fp.get());
    png_set_IHDR(png, info, static_cast<png_uint_32>(width), static_cast<png_uint_32>(height), 8, PNG_COLOR_TYPE_RGB,
                 PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int row = 0; row < height; ++row) {
        png_write_row(png, rgb.data() + static_cast<std::size_t>(row) * width * 3);
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
}

} // namespace snd
