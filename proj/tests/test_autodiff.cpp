#include <cmath>

#include <doctest.h>

#include "canmatch/autodiff.hpp"
#include "canmatch/gradcheck.hpp"
#include "oracles.hpp"

using namespace canmatch;
using ad::Tape;
using ad::Var;

TEST_CASE("matmul identity and shape errors") {
    Tape t;
    Mat m(3, 2);
    m << 1, 2, 3, 4, 5, 6;
    Var vm = t.lift(m);
    Var id = t.lift(Mat::Identity(3, 3));
    Var r = matmul(id, vm);
    CHECK((r.value() - m).norm() == doctest::Approx(0.0));

    Var bad = t.lift(Mat::Zero(4, 4));
    CHECK_THROWS_AS(matmul(bad, vm), DimensionError);
    CHECK_THROWS_AS(add(bad, vm), DimensionError);
}

TEST_CASE("frobenius_norm of a 3-4-5 row") {
    Tape t;
    Mat m(1, 2);
    m << 3, 4;
    CHECK(frobenius_norm(t.lift(m)).value()(0, 0) == doctest::Approx(5.0));
}

TEST_CASE("gather_rows selects and rejects out-of-range") {
    Tape t;
    Mat m(3, 2);
    m << 1, 2, 3, 4, 5, 6;
    Var v = t.lift(m);
    Var g = gather_rows(v, {2, 0});
    CHECK(g.value()(0, 0) == 5);
    CHECK(g.value()(1, 1) == 2);
    CHECK_THROWS_AS(gather_rows(v, {3}), IndexError);
    CHECK_THROWS_AS(gather_rows(v, {-1}), IndexError);
}

TEST_CASE("backward of sum_all is all ones; untouched leaves are absent") {
    Tape t;
    Var a = t.lift(Mat::Random(4, 3));
    Var unused = t.lift(Mat::Random(2, 2));
    ad::GradMap g = t.backward(sum_all(a));
    CHECK((g.at(a) - Mat::Ones(4, 3)).norm() == doctest::Approx(0.0));
    CHECK_FALSE(g.contains(unused));
    CHECK(g.get_or_zero(unused).norm() == 0.0);
}

TEST_CASE("backward requires a scalar root") {
    Tape t;
    Var a = t.lift(Mat::Random(2, 2));
    CHECK_THROWS_AS(t.backward(a), DimensionError);
}

TEST_CASE("non-finite results are rejected") {
    Tape t;
    Mat bad(1, 1);
    bad << std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(t.lift(bad), NumericalError);
}

TEST_CASE("pairwise_distance basics") {
    Tape t;
    Mat a(1, 2), b(1, 2);
    a << 0, 0;
    b << 3, 4;
    CHECK(pairwise_distance(t.lift(a), t.lift(b)).value()(0, 0) == doctest::Approx(5.0));

    Rng rng = make_rng(7);
    Mat m = random_mat(rng, 6, 3);
    Var v = t.lift(m);
    Mat d = pairwise_distance(v, v).value();
    for (int i = 0; i < 6; ++i) CHECK(d(i, i) <= ad::kDistanceFloor);

    Mat c(2, 3);
    CHECK_THROWS_AS(pairwise_distance(v, t.lift(Mat::Zero(2, 2))), DimensionError);
}

TEST_CASE("row_softmax_neg values") {
    Tape t;
    Mat d(1, 3);
    d << 5, 5, 5;
    Mat s = row_softmax_neg(t.lift(d)).value();
    for (int j = 0; j < 3; ++j) CHECK(s(0, j) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));

    // direct evaluation of the softmax expression for d = [0, 10]
    Mat d2(1, 2);
    d2 << 0, 10;
    Mat s2 = row_softmax_neg(t.lift(d2)).value();
    double e = std::exp(-10.0);
    CHECK(s2(0, 0) == doctest::Approx(1.0 / (1.0 + e)).epsilon(1e-12));
    CHECK(s2(0, 1) == doctest::Approx(e / (1.0 + e)).epsilon(1e-12));
    CHECK(s2(0, 0) == doctest::Approx(0.9999546).epsilon(1e-6));
    CHECK(s2(0, 1) == doctest::Approx(4.5398e-5).epsilon(1e-4));
}

TEST_CASE("row_softmax_neg rows sum to one with entries in (0,1)") {
    Rng rng = make_rng(11);
    Tape t;
    Mat d = 50.0 * random_mat(rng, 8, 13);
    Mat s = row_softmax_neg(t.lift(d)).value();
    for (int i = 0; i < s.rows(); ++i) {
        CHECK(std::abs(s.row(i).sum() - 1.0) <= 1e-12);
        for (int j = 0; j < s.cols(); ++j) {
            CHECK(s(i, j) > 0.0);
            CHECK(s(i, j) < 1.0);
        }
    }
}

TEST_CASE("ridge_solve exact cases") {
    Tape t;
    SUBCASE("identity basis returns b") {
        Mat b = Mat::Random(4, 3);
        Var r = ridge_solve(t.lift(Mat::Identity(4, 4)), t.lift(b), 0.0);
        CHECK((r.value() - b).norm() <= 1e-12);
    }
    SUBCASE("diagonal invertible solve") {
        Mat a(2, 2), b(2, 1);
        a << 1, 0, 0, 2;
        b << 1, 2;
        Var r = ridge_solve(t.lift(a), t.lift(b), 0.0);
        CHECK(r.value()(0, 0) == doctest::Approx(1.0));
        CHECK(r.value()(1, 0) == doctest::Approx(1.0));
    }
    SUBCASE("singular system is reported") {
        Var z = t.lift(Mat::Zero(3, 2));
        CHECK_THROWS_AS(ridge_solve(z, t.lift(Mat::Ones(3, 1)), 0.0), NumericalError);
    }
    SUBCASE("underdetermined shape is rejected") {
        Var a = t.lift(Mat::Random(2, 5));
        CHECK_THROWS_AS(ridge_solve(a, t.lift(Mat::Random(2, 1)), 0.0), DimensionError);
    }
}

TEST_CASE("ridge_solve matches the augmented-QR oracle") {
    Rng rng = make_rng(23);
    for (int rep = 0; rep < 10; ++rep) {
        Mat a = random_mat(rng, 30, 10);
        Mat b = random_mat(rng, 30, 4);
        double eps = (rep % 2 == 0) ? 0.0 : 1e-6;
        Tape t;
        Mat x = ridge_solve(t.lift(a), t.lift(b), eps).value();
        Mat ref = oracles::ridge_least_squares(a, b, eps);
        CHECK((x - ref).norm() <= 1e-8);
    }
}

TEST_CASE("ridge_solve with eps=0 reproduces the exact inverse solve") {
    Rng rng = make_rng(29);
    for (int rep = 0; rep < 5; ++rep) {
        Mat a = random_mat(rng, 6, 6) + 4.0 * Mat::Identity(6, 6);
        Mat b = random_mat(rng, 6, 2);
        Tape t;
        Mat x = ridge_solve(t.lift(a), t.lift(b), 0.0).value();
        Mat exact = a.fullPivLu().solve(b);
        CHECK((x - exact).norm() <= 1e-10);
    }
}

TEST_CASE("tape replay is bitwise deterministic") {
    Rng rng = make_rng(41);
    Mat a = random_mat(rng, 5, 4), b = random_mat(rng, 4, 3);
    auto run = [&]() {
        Tape t;
        Var va = t.lift(a), vb = t.lift(b);
        Var root = sum_squares(matmul(va, vb));
        ad::GradMap g = t.backward(root);
        return std::make_pair(root.value()(0, 0), Mat(g.at(va)));
    };
    auto [v1, g1] = run();
    auto [v2, g2] = run();
    CHECK(v1 == v2);
    CHECK((g1 - g2).cwiseAbs().maxCoeff() == 0.0);
}

// Finite-difference sweeps over every differentiable op. The acceptance suite
// repeats these 20 times; here a couple of seeds per op keep the unit run fast.
TEST_CASE("finite-difference checks per op") {
    for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
        Rng rng = make_rng(seed);

        auto check = [&](const GraphBuilder& b, std::vector<Mat> leaves, double tol = 1e-4) {
            auto rep = check_gradients(b, leaves, 1e-5, tol);
            CAPTURE(seed);
            CAPTURE(rep.detail);
            CHECK(rep.max_rel_err <= tol);
        };

        check([](ad::Tape& t, const std::vector<Var>& v) { return sum_squares(matmul(v[0], v[1])); },
              {random_mat(rng, 4, 3), random_mat(rng, 3, 2)});
        check([](ad::Tape& t, const std::vector<Var>& v) { return frobenius_norm(matmul(v[0], v[1])); },
              {random_mat(rng, 4, 3), random_mat(rng, 3, 2)});
        check([](ad::Tape& t, const std::vector<Var>& v) { return sum_all(add(v[0], v[1])); },
              {random_mat(rng, 3, 3), random_mat(rng, 3, 3)});
        check([](ad::Tape& t, const std::vector<Var>& v) { return sum_squares(sub(v[0], v[1])); },
              {random_mat(rng, 3, 3), random_mat(rng, 3, 3)});
        check([](ad::Tape& t, const std::vector<Var>& v) { return sum_squares(scale(v[0], 2.5)); },
              {random_mat(rng, 3, 4)});
        check([](ad::Tape& t, const std::vector<Var>& v) { return sum_squares(transpose(v[0])); },
              {random_mat(rng, 3, 4)});
        check([](ad::Tape& t, const std::vector<Var>& v) {
                  return sum_squares(gather_rows(v[0], {2, 0, 2}));
              },
              {random_mat(rng, 4, 3)});
        check([](ad::Tape& t, const std::vector<Var>& v) { return sum_squares(add_rowvec(v[0], v[1])); },
              {random_mat(rng, 4, 3), random_mat(rng, 1, 3)});
        check([](ad::Tape& t, const std::vector<Var>& v) { return sum_squares(relu(v[0])); },
              {random_mat_away_from_zero(rng, 4, 3)});
        check([](ad::Tape& t, const std::vector<Var>& v) { return sum_squares(colwise_max(v[0])); },
              {random_mat(rng, 5, 3)});
        check([](ad::Tape& t, const std::vector<Var>& v) {
                  return sum_squares(repeat_rows(v[0], 4));
              },
              {random_mat(rng, 1, 3)});
        check([](ad::Tape& t, const std::vector<Var>& v) { return sum_squares(hcat(v[0], v[1])); },
              {random_mat(rng, 3, 2), random_mat(rng, 3, 4)});
        check([](ad::Tape& t, const std::vector<Var>& v) {
                  return sum_squares(pairwise_distance(v[0], v[1]));
              },
              {random_mat(rng, 5, 3), random_mat(rng, 4, 3)});
        check([](ad::Tape& t, const std::vector<Var>& v) {
                  return sum_squares(row_softmax_neg(v[0]));
              },
              {random_mat(rng, 4, 5)});
        check([](ad::Tape& t, const std::vector<Var>& v) {
                  return sum_squares(ridge_solve(v[0], v[1], 1e-6));
              },
              {random_mat(rng, 8, 3), random_mat(rng, 8, 2)});
        check([](ad::Tape& t, const std::vector<Var>& v) {
                  return frobenius_norm(row_softmax_neg(pairwise_distance(v[0], v[1])));
              },
              {random_mat(rng, 5, 3), random_mat(rng, 5, 3)});
    }
}

TEST_CASE("gradient flows through both matmul operands against the oracle check") {
    // d||AB||_F/dA compared against finite differences (spec's named example)
    Rng rng = make_rng(55);
    auto rep = check_gradients(
        [](ad::Tape& t, const std::vector<Var>& v) { return frobenius_norm(matmul(v[0], v[1])); },
        {random_mat(rng, 4, 3), random_mat(rng, 3, 2)}, 1e-5, 1e-4);
    CHECK(rep.pass);
}

TEST_CASE("scale by zero detaches its subgraph") {
    Tape t;
    Var a = t.lift(Mat::Random(3, 3));
    Var b = t.lift(Mat::Random(3, 3));
    Var root = add(sum_squares(a), scale(sum_squares(b), 0.0));
    ad::GradMap g = t.backward(root);
    CHECK(g.contains(a));
    CHECK_FALSE(g.contains(b));
}
