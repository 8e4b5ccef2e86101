#include <doctest.h>

#include "canmatch/fmap.hpp"
#include "canmatch/gradcheck.hpp"
#include "oracles.hpp"

using namespace canmatch;
using ad::Tape;
using ad::Var;

TEST_CASE("self_symmetry_fmap trivial cases") {
    SUBCASE("identity embeddings with identity symmetry give C = I") {
        Tape t;
        Embedding phi{"x", t.lift(Mat::Identity(5, 5))};
        Embedding phif{"xf", t.lift(Mat::Identity(5, 5))};
        FMap c = self_symmetry_fmap(phi, phif, identity_map(5), 0.0);
        CHECK((c.values.value() - Mat::Identity(5, 5)).norm() <= 1e-12);
    }
    SUBCASE("swap symmetry on the 2x2 identity gives the swap matrix") {
        Tape t;
        Embedding phi{"x", t.lift(Mat::Identity(2, 2))};
        Embedding phif{"xf", t.lift(Mat::Identity(2, 2))};
        FMap c = self_symmetry_fmap(phi, phif, IndexMap(2, 2, {1, 0}), 0.0);
        Mat expect(2, 2);
        expect << 0, 1, 1, 0;
        CHECK((c.values.value() - expect).norm() <= 1e-12);
    }
    SUBCASE("size mismatches are rejected") {
        Tape t;
        Embedding phi{"x", t.lift(Mat::Random(6, 3))};
        Embedding phif{"xf", t.lift(Mat::Random(6, 3))};
        CHECK_THROWS_AS(self_symmetry_fmap(phi, phif, identity_map(5), 0.0), DimensionError);
    }
}

TEST_CASE("self_symmetry_fmap residual matches the least-squares oracle") {
    Rng rng = make_rng(101);
    for (int rep = 0; rep < 10; ++rep) {
        Mat phi = random_mat(rng, 40, 8);
        Mat phif = random_mat(rng, 40, 8);
        std::vector<int> perm(40);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        IndexMap sym(40, 40, perm);

        Tape t;
        FMap c = self_symmetry_fmap(Embedding{"x", t.lift(phi)}, Embedding{"xf", t.lift(phif)}, sym, 0.0);
        Mat permuted = index_map_matrix(sym) * phif;
        double residual = (phi * c.values.value().transpose() - permuted).norm();

        Mat oracle_x = oracles::ridge_least_squares(phi, permuted, 0.0);
        double oracle_res = (phi * oracle_x - permuted).norm();
        CHECK(std::abs(residual - oracle_res) <= 1e-8);
    }
}

TEST_CASE("self_symmetry_fmap residual is first-order optimal") {
    Rng rng = make_rng(103);
    for (int rep = 0; rep < 20; ++rep) {
        Mat phi = random_mat(rng, 30, 6);
        Mat phif = random_mat(rng, 30, 6);
        std::vector<int> perm(30);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        IndexMap sym(30, 30, perm);

        Tape t;
        FMap c = self_symmetry_fmap(Embedding{"x", t.lift(phi)}, Embedding{"xf", t.lift(phif)}, sym, 0.0);
        Mat cv = c.values.value();
        Mat permuted = index_map_matrix(sym) * phif;
        double base = (phi * cv.transpose() - permuted).norm();
        for (int d = 0; d < 5; ++d) {
            Mat delta = random_mat(rng, 6, 6);
            delta *= 1e-3 / delta.norm();
            double perturbed = (phi * (cv + delta).transpose() - permuted).norm();
            CHECK(perturbed >= base - 1e-12);
        }
    }
}

TEST_CASE("transform_embedding") {
    Tape t;
    Mat phi = Mat::Random(6, 3);
    Embedding e{"x", t.lift(phi)};
    SUBCASE("identity map is a no-op") {
        Embedding r = transform_embedding(e, FMap{t.lift(Mat::Identity(3, 3))});
        CHECK((r.values.value() - phi).norm() <= 1e-14);
    }
    SUBCASE("permutation transpose on the identity gives the permutation") {
        Tape t2;
        Embedding id{"x", t2.lift(Mat::Identity(3, 3))};
        IndexMap perm(3, 3, {2, 0, 1});
        Mat pi = index_map_matrix(perm);
        Embedding r = transform_embedding(id, FMap{t2.lift(Mat(pi.transpose()))});
        CHECK((r.values.value() - pi).norm() <= 1e-14);
    }
    SUBCASE("gradient flows to both the embedding and the map") {
        Rng rng = make_rng(5);
        auto rep = check_gradients(
            [](Tape& tp, const std::vector<Var>& v) {
                Embedding phi{"x", v[0]};
                FMap c{v[1]};
                return sum_squares(transform_embedding(phi, c).values);
            },
            {random_mat(rng, 5, 3), random_mat(rng, 3, 3)});
        CHECK(rep.pass);
    }
}

TEST_CASE("soft_correspondence") {
    SUBCASE("far-separated one-hot rows give a near-exact permutation") {
        Tape t;
        Mat base = 20.0 * Mat::Identity(5, 5);
        Embedding a{"a", t.lift(base)}, b{"b", t.lift(base)};
        Mat s = soft_correspondence(a, b).values.value();
        for (int i = 0; i < 5; ++i)
            for (int j = 0; j < 5; ++j)
                if (i != j) CHECK(s(i, j) < 1e-3);
        for (int i = 0; i < 5; ++i) CHECK(s(i, i) > 1.0 - 1e-3);
    }
    SUBCASE("all-equal rows give the uniform map") {
        Tape t;
        Embedding a{"a", t.lift(Mat::Ones(4, 3))}, b{"b", t.lift(Mat::Ones(6, 3))};
        Mat s = soft_correspondence(a, b).values.value();
        for (int i = 0; i < 4; ++i)
            for (int j = 0; j < 6; ++j) CHECK(s(i, j) == doctest::Approx(1.0 / 6.0).epsilon(1e-12));
    }
    SUBCASE("rows sum to one") {
        Rng rng = make_rng(6);
        Tape t;
        Embedding a{"a", t.lift(random_mat(rng, 7, 4))}, b{"b", t.lift(random_mat(rng, 9, 4))};
        Mat s = soft_correspondence(a, b).values.value();
        for (int i = 0; i < 7; ++i) CHECK(std::abs(s.row(i).sum() - 1.0) <= 1e-12);
    }
}

TEST_CASE("generic_fmap_solve") {
    Rng rng = make_rng(7);
    SUBCASE("alpha = 0 with an invertible square basis") {
        Mat a = random_mat(rng, 4, 4) + 3.0 * Mat::Identity(4, 4);
        Mat b = random_mat(rng, 4, 4);
        Mat c = generic_fmap_solve(a, b, 0.0);
        CHECK((c - b * a.inverse()).norm() <= 1e-8);
    }
    SUBCASE("huge ridge shrinks the map to zero") {
        Mat a = random_mat(rng, 5, 7), b = random_mat(rng, 5, 7);
        Mat c = generic_fmap_solve(a, b, 1e9);
        CHECK(c.norm() < 1e-6);
    }
    SUBCASE("random instances match the per-row oracle") {
        for (int rep = 0; rep < 10; ++rep) {
            Mat a = random_mat(rng, 6, 11), b = random_mat(rng, 6, 11);
            double alpha = 0.1;
            Mat c = generic_fmap_solve(a, b, alpha);
            // oracle: row-wise augmented least squares on [A^T; sqrt(alpha) I]
            for (int i = 0; i < 6; ++i) {
                Mat rhs = b.row(i).transpose();
                Mat x = oracles::ridge_least_squares(Mat(a.transpose()), rhs, alpha);
                CHECK((c.row(i).transpose() - x).norm() <= 1e-8);
            }
        }
    }
    SUBCASE("masked regularizer weights rows independently") {
        Mat a = random_mat(rng, 4, 9), b = random_mat(rng, 4, 9);
        Mat reg = Mat::Zero(4, 4);
        reg.row(0).setConstant(1e6);  // row 0 heavily shrunk, others free
        Mat c = generic_fmap_solve(a, b, 1.0, &reg);
        CHECK(c.row(0).norm() < 1e-4);
        CHECK(c.row(1).norm() > 1e-3);
    }
}

TEST_CASE("fmap_to_pointmap and nn_correspondence") {
    Rng rng = make_rng(8);
    SUBCASE("identical embeddings give the identity") {
        Mat phi = random_mat(rng, 10, 4);
        IndexMap m = nn_correspondence(phi, phi);
        CHECK(m.targets == identity_map(10).targets);
    }
    SUBCASE("shuffled rows recover the permutation") {
        Mat phi = random_mat(rng, 12, 5);
        std::vector<int> perm(12);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        // phi_y row perm[i] equals phi row i, so the nearest neighbor of row i is perm[i]
        Mat phi_y(12, 5);
        for (int i = 0; i < 12; ++i) phi_y.row(perm[static_cast<std::size_t>(i)]) = phi.row(i);
        IndexMap m = nn_correspondence(phi, phi_y);
        CHECK(m.targets == perm);
    }
    SUBCASE("C = I reduces fmap_to_pointmap to nn_correspondence") {
        Mat phi_x = random_mat(rng, 9, 4), phi_y = random_mat(rng, 11, 4);
        IndexMap a = fmap_to_pointmap(phi_x, phi_y, Mat::Identity(4, 4));
        IndexMap b = nn_correspondence(phi_x, phi_y);
        CHECK(a.targets == b.targets);
    }
    SUBCASE("matches the brute-force nearest neighbor exactly") {
        Mat phi_x = random_mat(rng, 500, 50), phi_y = random_mat(rng, 500, 50);
        IndexMap m = nn_correspondence(phi_x, phi_y);
        for (int i = 0; i < 500; i += 7) {
            int best = 0;
            double best_d = (phi_x.row(i) - phi_y.row(0)).squaredNorm();
            for (int j = 1; j < 500; ++j) {
                double d = (phi_x.row(i) - phi_y.row(j)).squaredNorm();
                if (d < best_d) {
                    best_d = d;
                    best = j;
                }
            }
            CHECK(m(i) == best);
        }
    }
    SUBCASE("agrees with the argmax over soft correspondence rows") {
        Mat phi_x = random_mat(rng, 20, 6), phi_y = random_mat(rng, 25, 6);
        IndexMap m = nn_correspondence(phi_x, phi_y);
        Tape t;
        Mat s = soft_correspondence(Embedding{"x", t.lift(phi_x)}, Embedding{"y", t.lift(phi_y)})
                    .values.value();
        for (int i = 0; i < 20; ++i) {
            int arg = 0;
            for (int j = 1; j < 25; ++j)
                if (s(i, j) > s(i, arg)) arg = j;
            CHECK(m(i) == arg);
        }
    }
    SUBCASE("permutation equivariance of the output") {
        Mat phi_x = random_mat(rng, 8, 3), phi_y = random_mat(rng, 8, 3);
        IndexMap base = nn_correspondence(phi_x, phi_y);
        std::vector<int> perm(8);
        std::iota(perm.begin(), perm.end(), 0);
        std::shuffle(perm.begin(), perm.end(), rng);
        Mat phi_y2(8, 3);
        for (int j = 0; j < 8; ++j) phi_y2.row(perm[static_cast<std::size_t>(j)]) = phi_y.row(j);
        IndexMap shuffled = nn_correspondence(phi_x, phi_y2);
        for (int i = 0; i < 8; ++i) CHECK(shuffled(i) == perm[static_cast<std::size_t>(base(i))]);
    }
}

TEST_CASE("self_symmetry_fmap gradients reach both embeddings") {
    Rng rng = make_rng(9);
    IndexMap sym(6, 6, {3, 4, 5, 0, 1, 2});
    auto rep = check_gradients(
        [&](Tape& tp, const std::vector<Var>& v) {
            Embedding phi{"x", v[0]}, phif{"xf", v[1]};
            FMap c = self_symmetry_fmap(phi, phif, sym, 1e-6);
            Embedding tr = transform_embedding(phi, c);
            return sum_squares(soft_correspondence(tr, phif).values);
        },
        {random_mat(rng, 6, 3), random_mat(rng, 6, 3)}, 1e-5, 1e-4);
    CHECK(rep.pass);
}
