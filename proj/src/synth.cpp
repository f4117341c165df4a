// SPDX-License-Identifier: Apache-2.0
#include "snd/synth.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <random>
#include <set>
#include <stdexcept>

namespace snd::synth {
namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;
constexpr double kDegToRad = std::numbers::pi / 180.0;
constexpr double kSurfaceOpacity = 0.95;
constexpr double kColorNoise = 0.03;

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(engine_); }
    int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(engine_); }

private:
    std::mt19937_64 engine_;
};

Eigen::Quaterniond disc_orientation(const Vec3& normal) {
    return Eigen::Quaterniond::FromTwoVectors(Vec3::UnitZ(), normal.normalized());
}

Vec3 clamp_color(const Vec3& c) { return c.cwiseMax(0.0).cwiseMin(1.0); }

struct SurfaceSampler {
    std::vector<Gaussian>& out;
    Rng& rng;

    void add(const Vec3& p, const Vec3& normal, double spacing, const Vec3& color, Label label) {
        const Vec3 noisy = color + Vec3(rng.uniform(-kColorNoise, kColorNoise), rng.uniform(-kColorNoise, kColorNoise),
                                        rng.uniform(-kColorNoise, kColorNoise));
        out.emplace_back(p, disc_orientation(normal), Vec3(0.7 * spacing, 0.7 * spacing, 0.1 * spacing),
                         kSurfaceOpacity, clamp_color(noisy), label);
    }
};

// Periodic shading in [0.7, 1.0] along a direction.
struct Stripes {
    Vec3 direction;
    double frequency;
    double phase;

    double operator()(const Vec3& p) const {
        return 0.7 + 0.3 * (0.5 + 0.5 * std::cos(kTwoPi * frequency * direction.dot(p) + phase));
    }
};

Stripes random_stripes(Rng& rng) {
    const double az = rng.uniform(0.0, kTwoPi);
    const double el = rng.uniform(-0.6, 0.6);
    return {Vec3(std::cos(az) * std::cos(el), std::sin(az) * std::cos(el), std::sin(el)), rng.uniform(3.0, 7.0),
            rng.uniform(0.0, kTwoPi)};
}

struct Placement {
    Vec2 center;
    double radius;
};

void sample_box(const ObjectSpec& obj, const Placement& where, int count, Rng& rng, std::vector<Gaussian>& out) {
    const double yaw = rng.uniform(0.0, kTwoPi);
    const double hx = where.radius * rng.uniform(0.55, 0.7);
    const double hy = where.radius * rng.uniform(0.55, 0.7);
    const double height = rng.uniform(0.3, 0.9);
    const Stripes stripes = random_stripes(rng);
    const Eigen::Matrix3d rot = Eigen::AngleAxisd(yaw, Vec3::UnitZ()).toRotationMatrix();
    const Vec3 base(where.center.x(), where.center.y(), 0.0);

    struct Face {
        Vec3 origin, u, v, normal;
        double lu, lv;
    };
    // local frame: box spans [-hx, hx] x [-hy, hy] x [0, height]; bottom face omitted
    const std::vector<Face> faces{
        {{-hx, -hy, height}, Vec3::UnitX(), Vec3::UnitY(), Vec3::UnitZ(), 2 * hx, 2 * hy},
        {{hx, -hy, 0}, Vec3::UnitY(), Vec3::UnitZ(), Vec3::UnitX(), 2 * hy, height},
        {{-hx, -hy, 0}, Vec3::UnitY(), Vec3::UnitZ(), -Vec3::UnitX(), 2 * hy, height},
        {{-hx, hy, 0}, Vec3::UnitX(), Vec3::UnitZ(), Vec3::UnitY(), 2 * hx, height},
        {{-hx, -hy, 0}, Vec3::UnitX(), Vec3::UnitZ(), -Vec3::UnitY(), 2 * hx, height},
    };
    double area = 0.0;
    for (const Face& f : faces) {
        area += f.lu * f.lv;
    }
    const double spacing = std::sqrt(area / std::max(count, 1));
    SurfaceSampler sampler{out, rng};
    for (const Face& f : faces) {
        const int nu = std::max(1, static_cast<int>(std::lround(f.lu / spacing)));
        const int nv = std::max(1, static_cast<int>(std::lround(f.lv / spacing)));
        for (int a = 0; a < nu; ++a) {
            for (int b = 0; b < nv; ++b) {
                const Vec3 local = f.origin + f.u * ((a + 0.5) * f.lu / nu) + f.v * ((b + 0.5) * f.lv / nv);
                const Vec3 p = base + rot * local;
                sampler.add(p, rot * f.normal, spacing, obj.color * stripes(p), obj.label);
            }
        }
    }
}

void sample_ellipsoids(const ObjectSpec& obj, const Placement& where, int count, Rng& rng,
                       std::vector<Gaussian>& out) {
    const int k = rng.integer(1, 3);
    const Stripes stripes = random_stripes(rng);
    SurfaceSampler sampler{out, rng};
    double stack = 0.0;
    for (int e = 0; e < k; ++e) {
        const Vec3 radii(where.radius * rng.uniform(0.35, 0.6), where.radius * rng.uniform(0.35, 0.6),
                         rng.uniform(0.12, 0.3));
        const double offset = where.radius - std::max(radii.x(), radii.y());
        const double ang = rng.uniform(0.0, kTwoPi);
        const double rr = rng.uniform(0.0, std::max(0.0, offset));
        const Vec3 center(where.center.x() + rr * std::cos(ang), where.center.y() + rr * std::sin(ang),
                          stack + radii.z());
        stack += rng.uniform(0.5, 1.2) * radii.z();

        const double p = 1.6;
        const double area = 4.0 * std::numbers::pi *
                            std::pow((std::pow(radii.x() * radii.y(), p) + std::pow(radii.x() * radii.z(), p) +
                                      std::pow(radii.y() * radii.z(), p)) / 3.0, 1.0 / p);
        const int n = std::max(8, count / k);
        const double spacing = std::sqrt(area / n);
        const double golden = std::numbers::pi * (3.0 - std::sqrt(5.0));
        for (int i = 0; i < n; ++i) {
            const double z = 1.0 - 2.0 * (i + 0.5) / n;
            const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
            const Vec3 u(r * std::cos(golden * i), r * std::sin(golden * i), z);
            const Vec3 pos = center + radii.cwiseProduct(u);
            const Vec3 normal = u.cwiseQuotient(radii).cwiseQuotient(radii);
            sampler.add(pos, normal, spacing, obj.color * stripes(pos), obj.label);
        }
    }
}

// Per-cell colour tint in [0.7, 1.3]^3, so tiles and stripes are not exact repeats.
Vec3 tint(std::uint64_t salt, long i, long j) {
    std::seed_seq seq{static_cast<std::uint64_t>(salt), static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)};
    std::mt19937_64 engine(seq);
    std::uniform_real_distribution<double> u(0.7, 1.3);
    return {u(engine), u(engine), u(engine)};
}

void sample_shell(const SceneSpec& spec, Rng& rng, std::vector<Gaussian>& out) {
    const double e = spec.room_half_extent;
    const double s = spec.shell_spacing;
    SurfaceSampler sampler{out, rng};

    const Vec3 tile_a(rng.uniform(0.3, 0.8), rng.uniform(0.3, 0.8), rng.uniform(0.3, 0.8));
    const Vec3 tile_b = tile_a * rng.uniform(0.45, 0.65);
    const double tile = rng.uniform(0.35, 0.6);
    const std::uint64_t salt = static_cast<std::uint64_t>(rng.integer(0, 1 << 30));
    const int n = static_cast<int>(std::lround(2.0 * e / s));
    for (int a = 0; a < n; ++a) {
        for (int b = 0; b < n; ++b) {
            const Vec3 p(-e + (a + 0.5) * 2.0 * e / n, -e + (b + 0.5) * 2.0 * e / n, 0.0);
            const long ix = static_cast<long>(std::floor(p.x() / tile));
            const long iy = static_cast<long>(std::floor(p.y() / tile));
            const Vec3 base = ((ix + iy) % 2 == 0) ? tile_a : tile_b;
            sampler.add(p, Vec3::UnitZ(), s, base.cwiseProduct(tint(salt, ix, iy)), spec.floor_label());
        }
    }

    const int nh = std::max(1, static_cast<int>(std::lround(spec.wall_height / s)));
    for (int w = 0; w < 4; ++w) {
        const Vec3 color(rng.uniform(0.4, 0.95), rng.uniform(0.4, 0.95), rng.uniform(0.4, 0.95));
        const double period = rng.uniform(0.4, 0.9);
        for (int a = 0; a < n; ++a) {
            const double t = -e + (a + 0.5) * 2.0 * e / n;
            for (int b = 0; b < nh; ++b) {
                const double z = (b + 0.5) * spec.wall_height / nh;
                Vec3 p;
                Vec3 normal;
                switch (w) {
                case 0: p = {e, t, z}; normal = -Vec3::UnitX(); break;
                case 1: p = {-e, t, z}; normal = Vec3::UnitX(); break;
                case 2: p = {t, e, z}; normal = -Vec3::UnitY(); break;
                default: p = {t, -e, z}; normal = Vec3::UnitY(); break;
                }
                const double shade = 0.75 + 0.25 * std::cos(kTwoPi * t / period);
                const long stripe = static_cast<long>(std::floor(t / period));
                const long band = static_cast<long>(std::floor(2.0 * z / spec.wall_height));
                sampler.add(p, normal, s, shade * color.cwiseProduct(tint(salt + 1 + w, stripe, band)),
                            spec.wall_label(w));
            }
        }
    }
}

} // namespace

std::string to_string(ObjectKind kind) { return kind == ObjectKind::kBox ? "box" : "ellipsoid_cluster"; }

ObjectKind object_kind_from_string(const std::string& s) {
    if (s == "box") {
        return ObjectKind::kBox;
    }
    if (s == "ellipsoid_cluster") {
        return ObjectKind::kEllipsoidCluster;
    }
    throw std::invalid_argument("unknown object kind '" + s + "'");
}

void SceneSpec::validate() const {
    if (objects.empty()) {
        throw std::invalid_argument("SceneSpec: num_objects must be >= 1");
    }
    if (!(room_half_extent > 0.5) || !(wall_height > 0.0) || !(shell_spacing > 0.0) || gaussians_per_object < 1) {
        throw std::invalid_argument("SceneSpec: invalid room dimensions or densities");
    }
    std::set<Label> seen;
    for (const ObjectSpec& o : objects) {
        if (o.label == 0) {
            throw std::invalid_argument("SceneSpec: label 0 is reserved for background");
        }
        if (!seen.insert(o.label).second) {
            throw std::invalid_argument("SceneSpec: duplicate object label " + std::to_string(o.label));
        }
        if ((o.color.array() < 0.0).any() || (o.color.array() > 1.0).any()) {
            throw std::invalid_argument("SceneSpec: object colour outside [0, 1]");
        }
    }
}

Label SceneSpec::floor_label() const {
    Label top = 0;
    for (const ObjectSpec& o : objects) {
        top = std::max(top, o.label);
    }
    return top + 1;
}

Label SceneSpec::wall_label(int wall) const { return floor_label() + 1 + static_cast<Label>(wall); }

SceneSpec random_scene_spec(std::uint64_t seed, int num_objects) {
    if (num_objects < 1) {
        throw std::invalid_argument("random_scene_spec: num_objects must be >= 1");
    }
    Rng rng(seed ^ 0x5EED5CE7Eull);
    SceneSpec spec;
    spec.seed = seed;
    for (int i = 0; i < num_objects; ++i) {
        ObjectSpec o;
        o.kind = rng.integer(0, 1) == 0 ? ObjectKind::kBox : ObjectKind::kEllipsoidCluster;
        o.label = static_cast<Label>(i + 1);
        o.color = Vec3(rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0), rng.uniform(0.1, 1.0));
        spec.objects.push_back(o);
    }
    return spec;
}

SemanticClass semantic_class(const SceneSpec& spec, Label label) {
    if (label == 0) {
        return SemanticClass::kBackground;
    }
    if (label == spec.floor_label()) {
        return SemanticClass::kFloor;
    }
    if (label > spec.floor_label() && label <= spec.wall_label(3)) {
        return SemanticClass::kWall;
    }
    for (const ObjectSpec& o : spec.objects) {
        if (o.label == label) {
            return o.kind == ObjectKind::kBox ? SemanticClass::kBox : SemanticClass::kEllipsoid;
        }
    }
    throw std::invalid_argument("semantic_class: label " + std::to_string(label) + " not in scene");
}

GeneratedScene generate_scene(const SceneSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    GeneratedScene scene;
    scene.spec = spec;

    const double spread = std::min(1.2, spec.room_half_extent - 0.6);
    std::vector<Placement> placed;
    for (const ObjectSpec& obj : spec.objects) {
        Placement where{};
        bool ok = false;
        double radius_hi = 0.4;
        for (int attempt = 0; attempt < 2000 && !ok; ++attempt) {
            if (attempt > 0 && attempt % 400 == 0) {
                radius_hi *= 0.8;
            }
            where.radius = rng.uniform(0.5 * radius_hi, radius_hi);
            const double ang = rng.uniform(0.0, kTwoPi);
            const double rr = spread * std::sqrt(rng.uniform(0.0, 1.0));
            where.center = {rr * std::cos(ang), rr * std::sin(ang)};
            ok = std::all_of(placed.begin(), placed.end(), [&](const Placement& p) {
                return (p.center - where.center).norm() > p.radius + where.radius + 0.08;
            });
        }
        if (!ok) {
            throw std::runtime_error("generate_scene: could not place " + std::to_string(spec.num_objects()) +
                                     " disjoint objects");
        }
        placed.push_back(where);
        if (obj.kind == ObjectKind::kBox) {
            sample_box(obj, where, spec.gaussians_per_object, rng, scene.gaussians);
        } else {
            sample_ellipsoids(obj, where, spec.gaussians_per_object, rng, scene.gaussians);
        }
    }
    sample_shell(spec, rng, scene.gaussians);
    return scene;
}

void ViewSpec::validate() const {
    if (num_views < 3 || image_size < 1 || !(fov_deg > 0.0 && fov_deg < 180.0) || !(radius > 0.0)) {
        throw std::invalid_argument("ViewSpec: invalid camera arc");
    }
    const auto in_range = [&](int i) { return i >= 0 && i < num_views; };
    if (!in_range(context_a) || !in_range(context_b) || !in_range(target)) {
        throw std::invalid_argument("ViewSpec: view index out of range");
    }
    if (context_a == context_b || target == context_a || target == context_b) {
        throw std::invalid_argument("ViewSpec: context views must be distinct and the target distinct from both");
    }
}

std::vector<Camera> camera_arc(const ViewSpec& spec, std::uint64_t seed) {
    spec.validate();
    Rng rng(seed ^ 0xCA3E7A5ull);
    const double start = rng.uniform(0.0, kTwoPi);
    std::vector<Camera> cams;
    for (int i = 0; i < spec.num_views; ++i) {
        const double frac = static_cast<double>(i) / (spec.num_views - 1) - 0.5;
        const double theta =
            start + (frac * spec.arc_deg + rng.uniform(-spec.angle_jitter_deg, spec.angle_jitter_deg)) * kDegToRad;
        const Vec3 jitter(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0));
        const Vec3 eye = Vec3(spec.radius * std::cos(theta), spec.radius * std::sin(theta), spec.height) +
                         spec.position_jitter * jitter;
        const Vec3 target = spec.look_at + spec.position_jitter * Vec3(rng.uniform(-1.0, 1.0), rng.uniform(-1.0, 1.0), 0.0);
        cams.push_back(Camera::from_fov(spec.fov_deg * kDegToRad, spec.image_size, spec.image_size,
                                        RigidTransform::look_at(eye, target, Vec3::UnitZ())));
    }
    return cams;
}

GroundTruthView render_groundtruth(const GeneratedScene& scene, const Camera& cam, const RasterSettings& settings) {
    std::map<Label, int> label_slot;
    for (const Gaussian& g : scene.gaussians) {
        label_slot.emplace(g.label(), 0);
    }
    std::vector<Label> slot_label;
    for (auto& [label, slot] : label_slot) {
        slot = static_cast<int>(slot_label.size());
        slot_label.push_back(label);
    }
    const int num_labels = static_cast<int>(slot_label.size());
    const int channels = 4 + num_labels;

    // colour | camera depth | one-hot label
    std::vector<Gaussian> augmented;
    augmented.reserve(scene.gaussians.size());
    for (const Gaussian& g : scene.gaussians) {
        if (g.feature().size() != 3) {
            throw std::invalid_argument("render_groundtruth: scene Gaussians must carry RGB features");
        }
        VecX f = VecX::Zero(channels);
        f.head<3>() = g.feature();
        f(3) = cam.pose().apply(g.mean()).z();
        f(4 + label_slot.at(g.label())) = 1.0;
        augmented.emplace_back(g.mean(), g.rotation(), g.scale(), g.opacity(), std::move(f), g.label());
    }
    const RenderOutput out = render(augmented, channels, cam, settings);

    const int h = cam.height();
    const int w = cam.width();
    GroundTruthView view{FeatureMap(h, w, 3), FeatureMap(h, w, 1), SemanticMask(h, w), out.alpha};
    for (int r = 0; r < h; ++r) {
        for (int c = 0; c < w; ++c) {
            const auto f = out.features.pixel(r, c);
            for (int ch = 0; ch < 3; ++ch) {
                view.color.at(r, c, ch) = f[ch];
            }
            const double a = out.alpha.at(r, c, 0);
            if (a < 0.5) {
                continue;
            }
            view.depth.at(r, c, 0) = f[3] / a;
            int best = 0;
            for (int k = 1; k < num_labels; ++k) {
                if (f[4 + k] > f[4 + best]) {
                    best = k;
                }
            }
            view.mask.at(r, c) = slot_label[best];
        }
    }
    return view;
}

std::vector<ContextView> render_views(const GeneratedScene& scene, const ViewSpec& views,
                                      const RasterSettings& settings) {
    std::vector<ContextView> out;
    for (const Camera& cam : camera_arc(views, scene.spec.seed)) {
        GroundTruthView gt = render_groundtruth(scene, cam, settings);
        out.push_back({std::move(gt.color), cam, std::move(gt.depth), std::move(gt.mask)});
    }
    return out;
}

std::vector<DatasetScene> make_dataset(std::uint64_t base_seed, int first_index, int count, int num_objects,
                                       const ViewSpec& views) {
    std::vector<DatasetScene> out;
    for (int i = 0; i < count; ++i) {
        const std::uint64_t seed = base_seed + static_cast<std::uint64_t>(first_index + i);
        GeneratedScene scene = generate_scene(random_scene_spec(seed, num_objects));
        std::vector<ContextView> rendered = render_views(scene, views);
        out.push_back({std::move(scene), std::move(rendered)});
    }
    return out;
}

} // namespace snd::synth
