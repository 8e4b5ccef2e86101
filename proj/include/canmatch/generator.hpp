#pragma once

// Synthetic articulated-body generator with exact correspondence ground truth.
//
// A body (torso + head + four two-segment limbs) is sampled as n/2 surface
// points on the x >= 0 half and mirrored across x = 0, so the bilateral
// symmetry is the exact index pairing i <-> i + n/2. Poses rotate limb
// segments rigidly about their joints with independent left/right angles,
// which preserves each segment's intrinsic geometry and keeps the pairing a
// ground-truth intrinsic symmetry. Surface sampling depends only on the
// template seed, so two poses of one template are index-aligned.

#include <cstdint>
#include <vector>

#include <Eigen/Geometry>

#include "canmatch/errors.hpp"
#include "canmatch/geodesic.hpp"
#include "canmatch/geom.hpp"
#include "canmatch/rng.hpp"
#include "canmatch/types.hpp"

namespace canmatch {

struct GeneratedShape {
    PointCloud cloud;
    IndexMap sym;
};

enum class Partiality { None, Cut, Hole };

inline const char* to_string(Partiality p) {
    switch (p) {
        case Partiality::Cut: return "cut";
        case Partiality::Hole: return "hole";
        default: return "none";
    }
}

inline Partiality partiality_from_string(const std::string& s) {
    if (s == "none") return Partiality::None;
    if (s == "cut") return Partiality::Cut;
    if (s == "hole") return Partiality::Hole;
    throw ConfigError("unknown partiality mode '" + s + "' (expected none|cut|hole)");
}

namespace bodygen {

enum class Part { TorsoHalf, HeadHalf, ArmUpper, ArmLower, LegUpper, LegLower };
inline constexpr int kPartCount = 6;

struct BodyTemplate {
    Vec3 torso_center, torso_radii;
    Vec3 head_center;
    double head_radius;
    Vec3 shoulder, elbow, wrist;
    double arm_upper_r, arm_lower_r;
    Vec3 hip, knee, ankle;
    double leg_upper_r, leg_lower_r;

    static BodyTemplate sample(std::uint64_t seed) {
        Rng rng = make_rng(mix_seed(seed, 0x74656d70ULL));
        auto v = [&](double lo, double hi) { return uniform(rng, lo, hi); };
        BodyTemplate b;
        double s = v(0.9, 1.1);  // overall stature
        b.torso_radii = Vec3(0.17 * v(0.92, 1.08), 0.30 * v(0.92, 1.08), 0.11 * v(0.92, 1.08)) * s;
        b.torso_center = Vec3(0.0, 0.28 * s, 0.0);
        b.head_radius = 0.105 * s * v(0.9, 1.1);
        b.head_center = Vec3(0.0, b.torso_center.y() + b.torso_radii.y() + 0.45 * b.head_radius, 0.0);
        b.shoulder = Vec3(0.8 * b.torso_radii.x(), b.torso_center.y() + 0.72 * b.torso_radii.y(), 0.0);
        double lu = 0.24 * s * v(0.9, 1.1), lf = 0.24 * s * v(0.9, 1.1);
        b.elbow = b.shoulder + Vec3(lu, 0.0, 0.0);
        b.wrist = b.elbow + Vec3(lf, 0.0, 0.0);
        b.arm_upper_r = 0.045 * s * v(0.92, 1.08);
        b.arm_lower_r = 0.040 * s * v(0.92, 1.08);
        b.hip = Vec3(0.5 * b.torso_radii.x(), b.torso_center.y() - 0.92 * b.torso_radii.y(), 0.0);
        b.knee = b.hip + Vec3(0.01 * s, -0.44 * s * v(0.9, 1.1), 0.0);
        b.ankle = b.knee + Vec3(0.0, -0.42 * s * v(0.9, 1.1), 0.0);
        b.leg_upper_r = std::min(0.062 * s * v(0.92, 1.08), b.hip.x() - 0.005);
        b.leg_lower_r = 0.048 * s * v(0.92, 1.08);
        return b;
    }
};

struct PoseAngles {
    // index 0 = right, 1 = left
    double arm_swing[2] = {0, 0}, arm_sweep[2] = {0, 0}, elbow_bend[2] = {0, 0};
    double hip_swing[2] = {0, 0}, hip_abduct[2] = {0, 0}, knee_bend[2] = {0, 0};

    // Pose seed 0 keeps the rest pose.
    static PoseAngles sample(std::uint64_t seed) {
        PoseAngles p;
        if (seed == 0) return p;
        Rng rng = make_rng(mix_seed(seed, 0x706f7365ULL));
        for (int side = 0; side < 2; ++side) {
            p.arm_swing[side] = uniform(rng, -0.6, 0.6);
            p.arm_sweep[side] = uniform(rng, -0.5, 0.5);
            p.elbow_bend[side] = uniform(rng, 0.0, 0.7);
            p.hip_swing[side] = uniform(rng, -0.5, 0.5);
            p.hip_abduct[side] = uniform(rng, -0.1, 0.28);
            p.knee_bend[side] = uniform(rng, 0.0, 0.6);
        }
        return p;
    }
};

inline Mat3 rot_x(double a) { return Eigen::AngleAxisd(a, Vec3::UnitX()).toRotationMatrix(); }
inline Mat3 rot_y(double a) { return Eigen::AngleAxisd(a, Vec3::UnitY()).toRotationMatrix(); }
inline Mat3 rot_z(double a) { return Eigen::AngleAxisd(a, Vec3::UnitZ()).toRotationMatrix(); }

inline Vec3 sphere_dir(Rng& rng) {
    while (true) {
        Vec3 v(normal(rng), normal(rng), normal(rng));
        double n = v.norm();
        if (n > 1e-6) return v / n;
    }
}

// Half-ellipsoid surface point with x >= 0.
inline Vec3 sample_half_ellipsoid(Rng& rng, const Vec3& center, const Vec3& radii) {
    Vec3 d = sphere_dir(rng);
    d.x() = std::abs(d.x());
    return center + radii.cwiseProduct(d);
}

// Capsule surface point (cylinder side + hemispherical caps), area-weighted.
inline Vec3 sample_capsule(Rng& rng, const Vec3& p0, const Vec3& p1, double r) {
    Vec3 axis = p1 - p0;
    double len = axis.norm();
    Vec3 d = axis / len;
    Vec3 ref = std::abs(d.z()) < 0.9 ? Vec3::UnitZ() : Vec3::UnitX();
    Vec3 e1 = d.cross(ref).normalized();
    Vec3 e2 = d.cross(e1);
    double side_area = len, cap_area = 2.0 * r;  // shared factor 2*pi*r dropped
    if (uniform(rng, 0.0, side_area + cap_area) < side_area) {
        double t = uniform(rng, 0.0, len);
        double phi = uniform(rng, 0.0, 2.0 * EIGEN_PI);
        return p0 + d * t + r * (std::cos(phi) * e1 + std::sin(phi) * e2);
    }
    Vec3 u = sphere_dir(rng);
    return (u.dot(d) < 0.0 ? p0 : p1) + r * u;
}

// Point on the sphere around a joint; both adjoining segments end in caps of
// this sphere, so these points tie the segments together in the kNN graph.
inline Vec3 sample_joint_cap(Rng& rng, const Vec3& center, double r) {
    return center + r * sphere_dir(rng);
}

inline double ellipsoid_area(const Vec3& r) {
    // Thomsen approximation
    constexpr double p = 1.6075;
    double ab = std::pow(r.x() * r.y(), p), ac = std::pow(r.x() * r.z(), p),
           bc = std::pow(r.y() * r.z(), p);
    return 4.0 * EIGEN_PI * std::pow((ab + ac + bc) / 3.0, 1.0 / p);
}

inline double capsule_area(const Vec3& p0, const Vec3& p1, double r) {
    return 2.0 * EIGEN_PI * r * (p1 - p0).norm() + 4.0 * EIGEN_PI * r * r;
}

struct SampledHalf {
    std::vector<Vec3> points;
    std::vector<Part> parts;
};

// Counts are proportional to part surface areas so the sampled density is
// close to uniform; a share of every limb segment's points sits on its joint
// cap, which keeps the kNN graph connected across elbows, knees, shoulders and
// hips even at low resolutions.
inline SampledHalf sample_half(const BodyTemplate& b, int half, std::uint64_t template_seed) {
    double areas[kPartCount] = {
        0.5 * ellipsoid_area(b.torso_radii),
        0.5 * ellipsoid_area(Vec3::Constant(b.head_radius)),
        capsule_area(b.shoulder, b.elbow, b.arm_upper_r),
        capsule_area(b.elbow, b.wrist, b.arm_lower_r),
        capsule_area(b.hip, b.knee, b.leg_upper_r),
        capsule_area(b.knee, b.ankle, b.leg_lower_r),
    };
    double total = 0.0;
    for (double a : areas) total += a;
    int counts[kPartCount];
    int used = 0;
    for (int p = 1; p < kPartCount; ++p) {
        counts[p] = std::max(1, static_cast<int>(areas[p] / total * half));
        used += counts[p];
    }
    counts[0] = std::max(1, half - used);  // torso absorbs the remainder
    // if the minimums overflowed tiny n, trim the largest parts
    used = 0;
    for (int c : counts) used += c;
    for (int p = 0; used > half && p < kPartCount; ++p) {
        int give = std::min(counts[p] - 1, used - half);
        counts[p] -= give;
        used -= give;
    }

    Rng rng = make_rng(mix_seed(template_seed, 0x73616d70ULL));
    SampledHalf out;
    out.points.reserve(static_cast<std::size_t>(half));
    out.parts.reserve(static_cast<std::size_t>(half));
    for (int p = 0; p < kPartCount; ++p) {
        Part part = static_cast<Part>(p);
        // joint anchor and radius for the limb segments
        Vec3 joint = Vec3::Zero();
        double joint_r = 0.0;
        switch (part) {
            case Part::ArmUpper: joint = b.shoulder; joint_r = b.arm_upper_r; break;
            case Part::ArmLower: joint = b.elbow; joint_r = b.arm_lower_r; break;
            case Part::LegUpper: joint = b.hip; joint_r = b.leg_upper_r; break;
            case Part::LegLower: joint = b.knee; joint_r = b.leg_lower_r; break;
            default: break;
        }
        int joint_count = joint_r > 0.0 ? std::max(2, static_cast<int>(std::lround(0.18 * counts[p]))) : 0;
        joint_count = std::min(joint_count, counts[p]);

        for (int c = 0; c < counts[p]; ++c) {
            Vec3 pt;
            if (c < joint_count) {
                pt = sample_joint_cap(rng, joint, joint_r);
            } else {
                switch (part) {
                    case Part::TorsoHalf: pt = sample_half_ellipsoid(rng, b.torso_center, b.torso_radii); break;
                    case Part::HeadHalf:
                        pt = sample_half_ellipsoid(rng, b.head_center, Vec3::Constant(b.head_radius));
                        break;
                    case Part::ArmUpper: pt = sample_capsule(rng, b.shoulder, b.elbow, b.arm_upper_r); break;
                    case Part::ArmLower: pt = sample_capsule(rng, b.elbow, b.wrist, b.arm_lower_r); break;
                    case Part::LegUpper: pt = sample_capsule(rng, b.hip, b.knee, b.leg_upper_r); break;
                    case Part::LegLower: pt = sample_capsule(rng, b.knee, b.ankle, b.leg_lower_r); break;
                }
            }
            out.points.push_back(pt);
            out.parts.push_back(part);
        }
    }
    return out;
}

inline Vec3 mirror_x(const Vec3& v) { return Vec3(-v.x(), v.y(), v.z()); }

// Kinematic chain per side. Left-side z/y rotations conjugate through the
// mirror (angle sign flips) so equal left/right angles reproduce an exactly
// mirror-symmetric pose.
inline Vec3 pose_point(const BodyTemplate& b, const PoseAngles& pose, Part part, bool left, Vec3 p) {
    double sgn = left ? -1.0 : 1.0;
    int s = left ? 1 : 0;
    Vec3 sh = left ? mirror_x(b.shoulder) : b.shoulder;
    Vec3 el = left ? mirror_x(b.elbow) : b.elbow;
    Vec3 hp = left ? mirror_x(b.hip) : b.hip;
    Vec3 kn = left ? mirror_x(b.knee) : b.knee;
    switch (part) {
        case Part::ArmLower:
            p = rot_z(sgn * pose.elbow_bend[s]) * (p - el) + el;
            [[fallthrough]];
        case Part::ArmUpper:
            return rot_z(sgn * pose.arm_swing[s]) * rot_y(sgn * pose.arm_sweep[s]) * (p - sh) + sh;
        case Part::LegLower:
            p = rot_x(pose.knee_bend[s]) * (p - kn) + kn;
            [[fallthrough]];
        case Part::LegUpper:
            return rot_x(pose.hip_swing[s]) * rot_z(sgn * pose.hip_abduct[s]) * (p - hp) + hp;
        default:
            return p;  // torso and head stay put
    }
}

}  // namespace bodygen

// Samples one articulated body. The symmetry pairing is i <-> i + n/2 by
// construction; at pose seed 0 (rest pose) the two halves are exact mirror
// images.
inline GeneratedShape gen_shape(std::uint64_t template_seed, std::uint64_t pose_seed, int n) {
    if (n < 8 || n % 2 != 0) throw DataError("gen_shape: n must be even and at least 8");
    using namespace bodygen;
    BodyTemplate body = BodyTemplate::sample(template_seed);
    int half = n / 2;
    SampledHalf right = sample_half(body, half, template_seed);
    PoseAngles pose = PoseAngles::sample(pose_seed);

    Mat coords(n, 3);
    for (int i = 0; i < half; ++i) {
        const std::size_t si = static_cast<std::size_t>(i);
        coords.row(i) = pose_point(body, pose, right.parts[si], false, right.points[si]);
        coords.row(i + half) = pose_point(body, pose, right.parts[si], true, mirror_x(right.points[si]));
    }

    std::vector<int> sym(static_cast<std::size_t>(n));
    for (int i = 0; i < half; ++i) {
        sym[static_cast<std::size_t>(i)] = i + half;
        sym[static_cast<std::size_t>(i + half)] = i;
    }
    return GeneratedShape{PointCloud(std::move(coords)), IndexMap(n, n, std::move(sym))};
}

namespace detail_partial {

inline void check_not_degenerate(std::size_t removed, int n) {
    if (static_cast<double>(removed) > 0.7 * n)
        throw DataError("degenerate sample: partiality removed " + std::to_string(removed) + " of " +
                        std::to_string(n) + " points (more than 70%)");
}

}  // namespace detail_partial

// Survivors after removing round(fraction * n) points on one side of the plane
// through the centroid with the given normal.
inline std::vector<int> cut_survivors(const PointCloud& p, const Vec3& normal, double fraction) {
    const int n = p.size();
    int removed = static_cast<int>(std::lround(fraction * n));
    detail_partial::check_not_degenerate(static_cast<std::size_t>(removed), n);
    Vec signed_d = (p.coords.rowwise() - p.coords.colwise().mean()) * normal;
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) { return signed_d(a) > signed_d(b); });
    std::vector<char> keep(static_cast<std::size_t>(n), 1);
    for (int i = 0; i < removed; ++i) keep[static_cast<std::size_t>(order[static_cast<std::size_t>(i)])] = 0;
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n - removed));
    for (int i = 0; i < n; ++i)
        if (keep[static_cast<std::size_t>(i)]) out.push_back(i);
    return out;
}

// Survivors after removing `n_balls` geodesic balls, each covering the given
// fraction of points around a random center.
inline std::vector<int> hole_survivors(const PointCloud& p, int n_balls, double min_frac, double max_frac,
                                       std::uint64_t seed) {
    const int n = p.size();
    GeodesicField geo(p);
    Rng rng = make_rng(mix_seed(seed, 0x686f6c65ULL));
    std::vector<char> keep(static_cast<std::size_t>(n), 1);
    std::size_t removed = 0;
    for (int b = 0; b < n_balls; ++b) {
        int center = uniform_int(rng, 0, n - 1);
        int ball = static_cast<int>(std::lround(uniform(rng, min_frac, max_frac) * n));
        const auto& dist = geo.row(center);
        std::vector<int> order(static_cast<std::size_t>(n));
        std::iota(order.begin(), order.end(), 0);
        std::partial_sort(order.begin(), order.begin() + ball, order.end(),
                          [&](int a, int c) { return dist[static_cast<std::size_t>(a)] < dist[static_cast<std::size_t>(c)]; });
        for (int i = 0; i < ball; ++i) {
            auto idx = static_cast<std::size_t>(order[static_cast<std::size_t>(i)]);
            if (keep[idx]) {
                keep[idx] = 0;
                ++removed;
            }
        }
    }
    detail_partial::check_not_degenerate(removed, n);
    std::vector<int> out;
    out.reserve(static_cast<std::size_t>(n) - removed);
    for (int i = 0; i < n; ++i)
        if (keep[static_cast<std::size_t>(i)]) out.push_back(i);
    return out;
}

struct PairGenResult {
    ShapePairSample sample;
    double removed_fraction = 0.0;
};

// Two poses of one template with index-aligned sampling. Without partiality
// map_xy is the identity from X to Y. Cut and hole modes remove points from Y
// and map_xy then sends each surviving Y point to its X index (X stays full).
inline PairGenResult gen_pair(std::uint64_t template_seed, std::uint64_t pose_seed_x,
                              std::uint64_t pose_seed_y, int n, Partiality partial, std::uint64_t seed) {
    GeneratedShape gx = gen_shape(template_seed, pose_seed_x, n);
    GeneratedShape gy = gen_shape(template_seed, pose_seed_y, n);

    PairGenResult res;
    res.sample.x = std::move(gx.cloud);
    res.sample.sym_x = std::move(gx.sym);

    if (partial == Partiality::None) {
        res.sample.y = std::move(gy.cloud);
        res.sample.sym_y = std::move(gy.sym);
        res.sample.map_xy = identity_map(n);
        return res;
    }

    std::vector<int> kept;
    if (partial == Partiality::Cut) {
        Rng rng = make_rng(mix_seed(seed, 0x637574ULL));
        Vec3 normal = bodygen::sphere_dir(rng);
        double fraction = uniform(rng, 0.26, 0.44);
        kept = cut_survivors(gy.cloud, normal, fraction);
    } else {
        Rng rng = make_rng(mix_seed(seed, 0x62616c6cULL));
        int balls = uniform_int(rng, 6, 10);
        kept = hole_survivors(gy.cloud, balls, 0.03, 0.06, seed);
    }
    res.removed_fraction = 1.0 - static_cast<double>(kept.size()) / n;

    std::vector<int> new_index(static_cast<std::size_t>(n), -1);
    for (std::size_t i = 0; i < kept.size(); ++i) new_index[static_cast<std::size_t>(kept[i])] = static_cast<int>(i);
    res.sample.y = detail_geom::gather_cloud(gy.cloud, kept);
    res.sample.sym_y = detail_geom::restrict_symmetry(gy.sym, kept, new_index, gy.cloud.coords);
    res.sample.map_xy = IndexMap(static_cast<int>(kept.size()), n, kept);
    return res;
}

}  // namespace canmatch
