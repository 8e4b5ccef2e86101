#pragma once

// The full finite-difference verification suite: every differentiable tape op
// at 1e-4 and the composite pair loss at 1e-3, repeated over seeded random
// instances.

#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "canmatch/generator.hpp"
#include "canmatch/gradcheck.hpp"
#include "canmatch/loss.hpp"
#include "canmatch/net.hpp"

namespace canmatch {

struct GradSuiteResult {
    int checks = 0;
    int failures = 0;
    bool pass() const { return failures == 0; }
};

inline GradSuiteResult run_gradcheck_suite(int reps, std::ostream& out) {
    using ad::Tape;
    using ad::Var;
    GradSuiteResult result;

    struct OpCheck {
        const char* name;
        GraphBuilder build;
        std::vector<Mat> (*make_leaves)(Rng&);
        double tol;
    };

    const std::vector<OpCheck> ops = {
        {"matmul", [](Tape&, const std::vector<Var>& v) { return sum_squares(matmul(v[0], v[1])); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 4, 3), random_mat(r, 3, 2)}; }, 1e-4},
        {"add", [](Tape&, const std::vector<Var>& v) { return sum_squares(add(v[0], v[1])); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 3, 4), random_mat(r, 3, 4)}; }, 1e-4},
        {"sub", [](Tape&, const std::vector<Var>& v) { return sum_squares(sub(v[0], v[1])); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 3, 4), random_mat(r, 3, 4)}; }, 1e-4},
        {"scale", [](Tape&, const std::vector<Var>& v) { return sum_squares(scale(v[0], -1.7)); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 3, 4)}; }, 1e-4},
        {"transpose", [](Tape&, const std::vector<Var>& v) { return sum_squares(transpose(v[0])); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 3, 4)}; }, 1e-4},
        {"gather_rows",
         [](Tape&, const std::vector<Var>& v) { return sum_squares(gather_rows(v[0], {3, 0, 3, 1})); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 5, 3)}; }, 1e-4},
        {"sum_all", [](Tape&, const std::vector<Var>& v) { return sum_all(v[0]); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 3, 5)}; }, 1e-4},
        {"frobenius_norm", [](Tape&, const std::vector<Var>& v) { return frobenius_norm(v[0]); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 4, 4)}; }, 1e-4},
        {"sum_squares", [](Tape&, const std::vector<Var>& v) { return sum_squares(v[0]); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 4, 4)}; }, 1e-4},
        {"add_rowvec", [](Tape&, const std::vector<Var>& v) { return sum_squares(add_rowvec(v[0], v[1])); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 4, 3), random_mat(r, 1, 3)}; }, 1e-4},
        {"relu", [](Tape&, const std::vector<Var>& v) { return sum_squares(relu(v[0])); },
         [](Rng& r) { return std::vector<Mat>{random_mat_away_from_zero(r, 4, 4)}; }, 1e-4},
        {"colwise_max", [](Tape&, const std::vector<Var>& v) { return sum_squares(colwise_max(v[0])); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 6, 3)}; }, 1e-4},
        {"repeat_rows", [](Tape&, const std::vector<Var>& v) { return sum_squares(repeat_rows(v[0], 5)); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 1, 4)}; }, 1e-4},
        {"hcat", [](Tape&, const std::vector<Var>& v) { return sum_squares(hcat(v[0], v[1])); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 3, 2), random_mat(r, 3, 3)}; }, 1e-4},
        {"pairwise_distance",
         [](Tape&, const std::vector<Var>& v) { return sum_squares(pairwise_distance(v[0], v[1])); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 5, 3), random_mat(r, 4, 3)}; }, 1e-4},
        {"row_softmax_neg",
         [](Tape&, const std::vector<Var>& v) { return sum_squares(row_softmax_neg(v[0])); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 4, 6)}; }, 1e-4},
        {"ridge_solve",
         [](Tape&, const std::vector<Var>& v) { return sum_squares(ridge_solve(v[0], v[1], 1e-6)); },
         [](Rng& r) { return std::vector<Mat>{random_mat(r, 9, 3), random_mat(r, 9, 2)}; }, 1e-4},
    };

    char line[160];
    for (const auto& op : ops) {
        double worst = 0.0;
        bool ok = true;
        for (int rep = 0; rep < reps; ++rep) {
            Rng rng = make_rng(mix_seed(0xc0ffee, static_cast<std::uint64_t>(rep), 7));
            auto r = check_gradients(op.build, op.make_leaves(rng), 1e-5, op.tol);
            worst = std::max(worst, r.max_rel_err);
            ok = ok && r.pass;
        }
        ++result.checks;
        if (!ok) ++result.failures;
        std::snprintf(line, sizeof(line), "[%s] %-18s max rel err %.3e over %d reps (tol %.0e)",
                      ok ? "pass" : "FAIL", op.name, worst, reps, op.tol);
        out << line << '\n';
    }

    // Composite loss on a 16-point pair: full backward against finite
    // differences on a random subset of parameter coordinates per repetition.
    {
        double worst = 0.0;
        bool ok = true;
        for (int rep = 0; rep < reps; ++rep) {
            PairGenResult pg =
                gen_pair(mix_seed(0xabc, static_cast<std::uint64_t>(rep)), static_cast<std::uint64_t>(rep) * 2 + 1,
                         static_cast<std::uint64_t>(rep) * 2 + 2, 16, Partiality::None, 3);
            PreparedPair pair = prepare_pair(pg.sample);
            EncoderParams params = init_encoder(4, mix_seed(0xdef, static_cast<std::uint64_t>(rep)));
            auto build = [&](ad::Tape& t, const std::vector<ad::Var>& v) {
                EncoderVars ev;
                ev.k = 4;
                ev.vars = v;
                return pair_loss(t, ev, pair, LossWeights::full_matching(), 1e-6).loss.total;
            };
            auto r = check_gradients(build, flatten_params(params), 1e-5, 1e-3, 24,
                                     mix_seed(0xfeed, static_cast<std::uint64_t>(rep)));
            worst = std::max(worst, r.max_rel_err);
            ok = ok && r.pass;
        }
        ++result.checks;
        if (!ok) ++result.failures;
        std::snprintf(line, sizeof(line),
                      "[%s] %-18s max rel err %.3e over %d reps (tol %.0e)", ok ? "pass" : "FAIL",
                      "composite_loss", worst, reps, 1e-3);
        out << line << '\n';
    }

    return result;
}

}  // namespace canmatch
