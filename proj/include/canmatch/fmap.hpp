#pragma once

// Functional-map solves and soft correspondence over tape nodes.

#include <string>
#include <utility>
#include <vector>

#include "canmatch/autodiff.hpp"
#include "canmatch/errors.hpp"
#include "canmatch/geom.hpp"
#include "canmatch/types.hpp"

namespace canmatch {

// n x k per-point embedding living on a tape; rows are canonical point
// embeddings.
struct Embedding {
    std::string shape_id;
    ad::Var values;
};

// k x k functional map.
struct FMap {
    ad::Var values;
};

// Row-stochastic n_src x n_dst soft correspondence.
struct SoftMap {
    ad::Var values;
};

// Optimal self-symmetry map C = (Phi+ Pi Phi_f)^T realized as a regularized
// least-squares solve followed by a transpose; differentiable with respect to
// both embeddings.
inline FMap self_symmetry_fmap(const Embedding& phi, const Embedding& phi_f, const IndexMap& sym,
                               double eps = 1e-6) {
    if (phi.values.rows() != phi_f.values.rows() || phi.values.cols() != phi_f.values.cols())
        throw DimensionError("self_symmetry_fmap: embeddings must share a shape");
    if (sym.src_size != static_cast<int>(phi.values.rows()))
        throw DimensionError("self_symmetry_fmap: symmetry map covers " + std::to_string(sym.src_size) +
                             " points, embedding has " + std::to_string(phi.values.rows()));
    ad::Var permuted = ad::gather_rows(phi_f.values, sym.targets);
    return FMap{ad::transpose(ad::ridge_solve(phi.values, permuted, eps))};
}

// Phi_hat = Phi C^T.
inline Embedding transform_embedding(const Embedding& phi, const FMap& c) {
    if (phi.values.cols() != c.values.rows())
        throw DimensionError("transform_embedding: embedding width " + std::to_string(phi.values.cols()) +
                             " does not match map size " + std::to_string(c.values.rows()));
    return Embedding{phi.shape_id, ad::matmul(phi.values, ad::transpose(c.values))};
}

// S = row_softmax_neg(pairwise_distance(a, b)).
inline SoftMap soft_correspondence(const Embedding& a, const Embedding& b) {
    if (a.values.cols() != b.values.cols())
        throw DimensionError("soft_correspondence: embedding widths disagree");
    return SoftMap{ad::row_softmax_neg(ad::pairwise_distance(a.values, b.values))};
}

// Descriptor-preserving functional map: minimizes ||C D_a - D_b||^2 +
// alpha ||C o R||^2 row by row in closed form (R all-ones when absent, i.e.
// plain ridge). Plain-matrix utility for baseline experiments, not
// differentiable.
inline Mat generic_fmap_solve(const Mat& desc_a, const Mat& desc_b, double alpha,
                              const Mat* reg = nullptr) {
    if (desc_a.rows() != desc_b.rows() || desc_a.cols() != desc_b.cols())
        throw DimensionError("generic_fmap_solve: descriptor shapes disagree");
    if (alpha < 0.0) throw ConfigError("generic_fmap_solve: alpha must be non-negative");
    const Eigen::Index k = desc_a.rows();
    if (reg && (reg->rows() != k || reg->cols() != k))
        throw DimensionError("generic_fmap_solve: regularizer must be k x k");

    Mat gram = desc_a * desc_a.transpose();  // shared across rows
    Mat rhs = desc_a * desc_b.transpose();   // column i is D_a D_b(i,:)^T
    Mat c(k, k);
    for (Eigen::Index i = 0; i < k; ++i) {
        Mat m = gram;
        if (reg)
            m.diagonal() += alpha * reg->row(i).cwiseProduct(reg->row(i)).transpose();
        else
            m.diagonal().array() += alpha;
        Eigen::LLT<Mat> llt(m);
        if (llt.info() != Eigen::Success)
            throw NumericalError("generic_fmap_solve: singular system in row " + std::to_string(i));
        c.row(i) = llt.solve(rhs.col(i)).transpose();
    }
    return c;
}

// Nearest destination row for each transformed source row; ties resolve to the
// lowest index, so the result is deterministic.
inline IndexMap nearest_rows(const Mat& src, const Mat& dst) {
    if (src.cols() != dst.cols()) throw DimensionError("nearest_rows: widths disagree");
    Vec sn = src.rowwise().squaredNorm();
    Vec dn = dst.rowwise().squaredNorm();
    Mat sq = Mat(-2.0 * src * dst.transpose());
    sq.colwise() += sn;
    sq.rowwise() += dn.transpose();
    std::vector<int> targets(static_cast<std::size_t>(src.rows()));
    for (Eigen::Index i = 0; i < src.rows(); ++i) {
        Eigen::Index best = 0;
        for (Eigen::Index j = 1; j < dst.rows(); ++j)
            if (sq(i, j) < sq(i, best)) best = j;
        targets[static_cast<std::size_t>(i)] = static_cast<int>(best);
    }
    return IndexMap(static_cast<int>(src.rows()), static_cast<int>(dst.rows()), std::move(targets));
}

// Converts a functional map to a pointwise map: nearest row of Phi_Y for each
// row of Phi_X C^T.
inline IndexMap fmap_to_pointmap(const Mat& phi_x, const Mat& phi_y, const Mat& c) {
    if (phi_x.cols() != c.cols())
        throw DimensionError("fmap_to_pointmap: embedding width does not match the map");
    return nearest_rows(phi_x * c.transpose(), phi_y);
}

// Test-phase matching: exact nearest-neighbor search between embeddings
// (fmap_to_pointmap with C = I).
inline IndexMap nn_correspondence(const Mat& phi_x, const Mat& phi_y) {
    return nearest_rows(phi_x, phi_y);
}

}  // namespace canmatch
