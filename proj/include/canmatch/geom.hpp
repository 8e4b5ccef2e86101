#pragma once

// Point-cloud data model and the index-map machinery: flips, rotation
// augmentation, and symmetric-pair subsampling.

#include <algorithm>
#include <array>
#include <cstdint>
#include <limits>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Geometry>

#include "canmatch/errors.hpp"
#include "canmatch/rng.hpp"
#include "canmatch/types.hpp"

namespace canmatch {

struct PointCloud {
    Mat coords;  // n x 3
    std::vector<std::array<int, 3>> faces;
    std::string label;

    PointCloud() = default;
    PointCloud(Mat c, std::vector<std::array<int, 3>> f = {}, std::string lbl = {})
        : coords(std::move(c)), faces(std::move(f)), label(std::move(lbl)) {
        validate();
    }

    int size() const { return static_cast<int>(coords.rows()); }

    void validate() const {
        if (coords.rows() < 4) throw DataError("PointCloud: need at least 4 points, got " +
                                               std::to_string(coords.rows()));
        if (coords.cols() != 3) throw DimensionError("PointCloud: coords must be n x 3");
        if (!coords.allFinite()) throw NumericalError("PointCloud: non-finite coordinates");
        for (const auto& f : faces)
            for (int v : f)
                if (v < 0 || v >= size())
                    throw IndexError("PointCloud: face index " + std::to_string(v) + " out of range");
    }
};

// A pointwise map T: one destination index per source point. As a matrix Pi,
// Pi(i, j) = 1 iff T(i) = j, exactly one 1 per row.
struct IndexMap {
    int src_size = 0;
    int dst_size = 0;
    std::vector<int> targets;

    IndexMap() = default;
    IndexMap(int src, int dst, std::vector<int> t) : src_size(src), dst_size(dst), targets(std::move(t)) {
        validate();
    }

    int operator()(int i) const { return targets[static_cast<std::size_t>(i)]; }

    void validate() const {
        if (static_cast<int>(targets.size()) != src_size)
            throw DataError("IndexMap: have " + std::to_string(targets.size()) + " targets for src_size " +
                            std::to_string(src_size));
        for (int v : targets)
            if (v < 0 || v >= dst_size)
                throw IndexError("IndexMap: target " + std::to_string(v) + " out of range [0," +
                                 std::to_string(dst_size) + ")");
    }

    bool is_involution() const {
        if (src_size != dst_size) return false;
        for (int i = 0; i < src_size; ++i)
            if (targets[static_cast<std::size_t>(targets[static_cast<std::size_t>(i)])] != i) return false;
        return true;
    }
};

inline IndexMap identity_map(int n) {
    std::vector<int> t(static_cast<std::size_t>(n));
    std::iota(t.begin(), t.end(), 0);
    return IndexMap(n, n, std::move(t));
}

// Dense 0/1 matrix form Pi of an index map (used by oracles and fixtures).
inline Mat index_map_matrix(const IndexMap& m) {
    Mat pi = Mat::Zero(m.src_size, m.dst_size);
    for (int i = 0; i < m.src_size; ++i) pi(i, m(i)) = 1.0;
    return pi;
}

// A training/evaluation sample: two shapes, the ground-truth correspondence,
// and a self-symmetry map per shape. For full pairs map_xy goes from X to Y;
// for partial pairs it goes from the (partial) Y back into the full X, which
// the src/dst sizes record.
struct ShapePairSample {
    PointCloud x;
    PointCloud y;
    IndexMap map_xy;
    IndexMap sym_x;
    IndexMap sym_y;
};

enum class MapDirection { XtoY, YtoX };

inline MapDirection map_direction(const ShapePairSample& s) {
    if (s.map_xy.src_size == s.x.size() && s.map_xy.dst_size == s.y.size()) return MapDirection::XtoY;
    if (s.map_xy.src_size == s.y.size() && s.map_xy.dst_size == s.x.size()) return MapDirection::YtoX;
    throw DataError("ShapePairSample: map_xy sizes match neither X->Y nor Y->X");
}

inline void validate(const ShapePairSample& s) {
    s.x.validate();
    s.y.validate();
    s.map_xy.validate();
    s.sym_x.validate();
    s.sym_y.validate();
    map_direction(s);
    if (s.sym_x.src_size != s.x.size() || s.sym_y.src_size != s.y.size())
        throw DataError("ShapePairSample: symmetry map sizes disagree with cloud sizes");
}

enum class Axis { X = 0, Y = 1, Z = 2 };

// Reflects the cloud across the plane through its centroid orthogonal to the
// chosen axis: center, negate the axis, restore. Point indexing is unchanged.
inline PointCloud flip(const PointCloud& p, Axis axis = Axis::X) {
    const int a = static_cast<int>(axis);
    PointCloud out = p;
    double c = p.coords.col(a).mean();
    out.coords.col(a) = (2.0 * c - p.coords.col(a).array()).matrix();
    return out;
}

// Uniform yaw about the vertical (y) axis composed with a tilt of at most
// `max_tilt_deg` about a random horizontal axis. Orthogonal with det +1.
inline Mat3 random_rotation(std::uint64_t seed, double max_tilt_deg = 15.0) {
    Rng rng = make_rng(mix_seed(seed, 0x726f7461ULL));
    double yaw = uniform(rng, 0.0, 2.0 * EIGEN_PI);
    double axis_angle = uniform(rng, 0.0, 2.0 * EIGEN_PI);
    double tilt = uniform(rng, 0.0, max_tilt_deg * EIGEN_PI / 180.0);
    Mat3 ry = Eigen::AngleAxisd(yaw, Vec3::UnitY()).toRotationMatrix();
    Vec3 horiz(std::cos(axis_angle), 0.0, std::sin(axis_angle));
    Mat3 rt = Eigen::AngleAxisd(tilt, horiz).toRotationMatrix();
    return rt * ry;
}

inline PointCloud rotated(const PointCloud& p, const Mat3& r) {
    PointCloud out = p;
    out.coords = p.coords * r.transpose();
    return out;
}

namespace detail_geom {

// Restricts an involution-like map to the kept index set. When the original
// target was dropped the point is re-targeted to the kept point nearest to the
// dropped target's coordinates.
inline IndexMap restrict_symmetry(const IndexMap& sym, const std::vector<int>& kept,
                                  const std::vector<int>& new_index, const Mat& coords) {
    std::vector<int> t;
    t.reserve(kept.size());
    const int n_new = static_cast<int>(kept.size());
    for (int orig : kept) {
        int target = sym(orig);
        if (new_index[static_cast<std::size_t>(target)] >= 0) {
            t.push_back(new_index[static_cast<std::size_t>(target)]);
        } else {
            Vec3 want = coords.row(target);
            int best = 0;
            double best_d = std::numeric_limits<double>::infinity();
            for (int j = 0; j < n_new; ++j) {
                double d = (Vec3(coords.row(kept[static_cast<std::size_t>(j)])) - want).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            t.push_back(best);
        }
    }
    return IndexMap(n_new, n_new, std::move(t));
}

inline PointCloud gather_cloud(const PointCloud& p, const std::vector<int>& kept) {
    Mat c(static_cast<Eigen::Index>(kept.size()), 3);
    for (std::size_t i = 0; i < kept.size(); ++i) c.row(static_cast<Eigen::Index>(i)) = p.coords.row(kept[i]);
    return PointCloud(std::move(c), {}, p.label);
}

}  // namespace detail_geom

// Selects q points of X in symmetric pairs (so the restricted sym_x stays an
// exact involution) and keeps the map-corresponding points of Y. Indices keep
// ascending order, so q = n reproduces the sample unchanged.
inline ShapePairSample subsample(const ShapePairSample& s, int q, std::uint64_t seed) {
    const int nx = s.x.size(), ny = s.y.size();
    if (q > std::min(nx, ny))
        throw DataError("subsample: q=" + std::to_string(q) + " exceeds min cloud size " +
                        std::to_string(std::min(nx, ny)));
    if (q < 4) throw DataError("subsample: q must be at least 4");
    if (q % 2 != 0) throw DataError("subsample: q must be even (points are sampled in symmetric pairs)");

    // draw symmetric pairs of X indices
    std::vector<int> order(static_cast<std::size_t>(nx));
    std::iota(order.begin(), order.end(), 0);
    Rng rng = make_rng(mix_seed(seed, 0x73756273ULL));
    std::shuffle(order.begin(), order.end(), rng);
    std::vector<char> taken(static_cast<std::size_t>(nx), 0);
    std::vector<int> sel;
    sel.reserve(static_cast<std::size_t>(q));
    for (int i : order) {
        if (static_cast<int>(sel.size()) >= q) break;
        int j = s.sym_x(i);
        if (taken[static_cast<std::size_t>(i)] || taken[static_cast<std::size_t>(j)]) continue;
        if (i == j) continue;  // on-plane fixed points only join if pairs run out
        taken[static_cast<std::size_t>(i)] = taken[static_cast<std::size_t>(j)] = 1;
        sel.push_back(i);
        sel.push_back(j);
    }
    if (static_cast<int>(sel.size()) < q) {
        for (int i : order) {  // fall back to fixed points of the involution
            if (static_cast<int>(sel.size()) >= q) break;
            if (!taken[static_cast<std::size_t>(i)]) {
                taken[static_cast<std::size_t>(i)] = 1;
                sel.push_back(i);
            }
        }
    }
    std::sort(sel.begin(), sel.end());

    std::vector<int> new_x(static_cast<std::size_t>(nx), -1);
    for (std::size_t i = 0; i < sel.size(); ++i) new_x[static_cast<std::size_t>(sel[i])] = static_cast<int>(i);

    ShapePairSample out;
    out.x = detail_geom::gather_cloud(s.x, sel);
    out.sym_x = detail_geom::restrict_symmetry(s.sym_x, sel, new_x, s.x.coords);

    if (map_direction(s) == MapDirection::XtoY) {
        // Y keeps the map-corresponding points, in ascending original order.
        std::vector<int> kept_y;
        for (int i : sel) kept_y.push_back(s.map_xy(i));
        std::sort(kept_y.begin(), kept_y.end());
        kept_y.erase(std::unique(kept_y.begin(), kept_y.end()), kept_y.end());
        std::vector<int> new_y(static_cast<std::size_t>(ny), -1);
        for (std::size_t i = 0; i < kept_y.size(); ++i)
            new_y[static_cast<std::size_t>(kept_y[i])] = static_cast<int>(i);
        out.y = detail_geom::gather_cloud(s.y, kept_y);
        out.sym_y = detail_geom::restrict_symmetry(s.sym_y, kept_y, new_y, s.y.coords);
        std::vector<int> t;
        t.reserve(sel.size());
        for (int i : sel) t.push_back(new_y[static_cast<std::size_t>(s.map_xy(i))]);
        out.map_xy = IndexMap(static_cast<int>(sel.size()), static_cast<int>(kept_y.size()), std::move(t));
    } else {
        // Partial pair: the map goes from Y into the full X. Keep the Y points
        // whose X partner was sampled.
        std::vector<int> kept_y;
        for (int j = 0; j < ny; ++j)
            if (new_x[static_cast<std::size_t>(s.map_xy(j))] >= 0) kept_y.push_back(j);
        if (static_cast<int>(kept_y.size()) < 4)
            throw DataError("subsample: fewer than 4 partial points survive the X sampling");
        std::vector<int> new_y(static_cast<std::size_t>(ny), -1);
        for (std::size_t i = 0; i < kept_y.size(); ++i)
            new_y[static_cast<std::size_t>(kept_y[i])] = static_cast<int>(i);
        out.y = detail_geom::gather_cloud(s.y, kept_y);
        out.sym_y = detail_geom::restrict_symmetry(s.sym_y, kept_y, new_y, s.y.coords);
        std::vector<int> t;
        t.reserve(kept_y.size());
        for (int j : kept_y) t.push_back(new_x[static_cast<std::size_t>(s.map_xy(j))]);
        out.map_xy = IndexMap(static_cast<int>(kept_y.size()), static_cast<int>(sel.size()), std::move(t));
    }
    return out;
}

}  // namespace canmatch
