#pragma once

// Central finite-difference verification of tape gradients. The checker is
// independent of any backward rule: it only replays forward evaluations at
// perturbed leaf values.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "canmatch/autodiff.hpp"
#include "canmatch/rng.hpp"
#include "canmatch/types.hpp"

namespace canmatch {

// Builds a scalar expression from freshly lifted leaves on the given tape.
using GraphBuilder = std::function<ad::Var(ad::Tape&, const std::vector<ad::Var>&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    bool pass = false;
    std::string detail;
};

namespace detail_gradcheck {

inline double eval_at(const GraphBuilder& build, const std::vector<Mat>& leaves) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    vars.reserve(leaves.size());
    for (const Mat& m : leaves) vars.push_back(tape.lift(m));
    ad::Var root = build(tape, vars);
    return root.value()(0, 0);
}

}  // namespace detail_gradcheck

// Compares the tape gradient of `build` against central finite differences at
// step h. When `max_coords_per_leaf` > 0 only that many randomly chosen
// coordinates of each leaf are probed (the analytic gradient is still the full
// backward pass); 0 probes every coordinate. The relative error is
// ||ad - fd|| / max(||fd||, tiny) over the probed coordinates of each leaf.
inline GradCheckReport check_gradients(const GraphBuilder& build, const std::vector<Mat>& leaves,
                                       double h = 1e-5, double tol = 1e-4,
                                       int max_coords_per_leaf = 0, std::uint64_t probe_seed = 0) {
    ad::Tape tape;
    std::vector<ad::Var> vars;
    vars.reserve(leaves.size());
    for (const Mat& m : leaves) vars.push_back(tape.lift(m));
    ad::Var root = build(tape, vars);
    ad::GradMap grads = tape.backward(root);

    Rng probe_rng = make_rng(mix_seed(probe_seed, 0x9d4c5a3bULL));
    GradCheckReport rep;
    rep.pass = true;
    for (std::size_t li = 0; li < leaves.size(); ++li) {
        Mat analytic = grads.get_or_zero(vars[li]);
        const Eigen::Index total = leaves[li].size();
        std::vector<Eigen::Index> coords;
        if (max_coords_per_leaf > 0 && total > max_coords_per_leaf) {
            for (int c = 0; c < max_coords_per_leaf; ++c)
                coords.push_back(static_cast<Eigen::Index>(
                    uniform_int(probe_rng, 0, static_cast<int>(total) - 1)));
        } else {
            coords.resize(static_cast<std::size_t>(total));
            for (Eigen::Index c = 0; c < total; ++c) coords[static_cast<std::size_t>(c)] = c;
        }

        double ad_sq = 0.0, fd_sq = 0.0, diff_sq = 0.0;
        for (Eigen::Index c : coords) {
            std::vector<Mat> probe = leaves;
            double* entry = probe[li].data() + c;
            double orig = *entry;
            *entry = orig + h;
            double fp = detail_gradcheck::eval_at(build, probe);
            *entry = orig - h;
            double fm = detail_gradcheck::eval_at(build, probe);
            double fd = (fp - fm) / (2.0 * h);
            double adv = analytic.data()[c];
            ad_sq += adv * adv;
            fd_sq += fd * fd;
            diff_sq += (adv - fd) * (adv - fd);
        }
        double denom = std::max(std::sqrt(fd_sq), 1e-10);
        double rel = std::sqrt(diff_sq) / denom;
        if (fd_sq < 1e-16 && ad_sq < 1e-16) rel = 0.0;  // both gradients vanish
        if (rel > rep.max_rel_err) {
            rep.max_rel_err = rel;
            rep.detail = "leaf " + std::to_string(li);
        }
        if (rel > tol) rep.pass = false;
    }
    return rep;
}

// Random matrix with entries uniform in [-1, 1].
inline Mat random_mat(Rng& rng, Eigen::Index rows, Eigen::Index cols) {
    Mat m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i)
        for (Eigen::Index j = 0; j < cols; ++j) m(i, j) = uniform(rng, -1.0, 1.0);
    return m;
}

// Same, but entries are pushed away from zero by `margin` so kinked ops
// (relu, max) are probed away from their non-differentiable points.
inline Mat random_mat_away_from_zero(Rng& rng, Eigen::Index rows, Eigen::Index cols,
                                     double margin = 0.05) {
    Mat m = random_mat(rng, rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) {
        double& v = m.data()[i];
        if (v >= 0.0 && v < margin) v += margin;
        if (v < 0.0 && v > -margin) v -= margin;
    }
    return m;
}

}  // namespace canmatch
