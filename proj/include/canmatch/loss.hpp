#pragma once

// Training losses: the linearly invariant self-symmetry loss, the Euclidean
// coordinate-transfer loss, and the symmetry commutativity loss, combined as
// l_total = l_euc + lambda * l_lin + gamma * l_comm.

#include <cmath>
#include <utility>

#include "canmatch/autodiff.hpp"
#include "canmatch/errors.hpp"
#include "canmatch/fmap.hpp"
#include "canmatch/geom.hpp"
#include "canmatch/net.hpp"
#include "canmatch/types.hpp"

namespace canmatch {

struct LossWeights {
    double lambda = 5.0;
    double gamma = 5.0;

    void validate() const {
        if (lambda < 0.0 || gamma < 0.0) throw ConfigError("LossWeights: weights must be non-negative");
    }

    // lambda = gamma = 5 for full shape matching
    static LossWeights full_matching() { return LossWeights{5.0, 5.0}; }
    // lambda = 1, gamma = 0.1 for partial shape matching
    static LossWeights partial_matching() { return LossWeights{1.0, 0.1}; }
};

struct LossBreakdown {
    double l_euc = 0.0;
    double l_lin = 0.0;
    double l_comm = 0.0;
    double l_total = 0.0;

    bool consistent(const LossWeights& w, double tol = 1e-12) const {
        return std::abs(l_total - (l_euc + w.lambda * l_lin + w.gamma * l_comm)) <= tol;
    }
};

struct LinLossTerm {
    ad::Var loss;  // 1x1
    SoftMap soft;  // the C-transformed self-symmetry soft map
    FMap fmap;
};

// Eq-style linearly invariant term for one shape: solve the self-symmetry map,
// transform the embedding, compare the soft transfer of the flipped
// coordinates against the ground-truth transfer. Mean over points of squared
// row norms.
inline LinLossTerm loss_lin(const Embedding& phi, const Embedding& phi_f, const IndexMap& sym,
                            ad::Var p_f, double eps) {
    if (p_f.rows() != phi_f.values.rows())
        throw DimensionError("loss_lin: coordinate rows disagree with the flipped embedding");
    FMap c = self_symmetry_fmap(phi, phi_f, sym, eps);
    Embedding transformed = transform_embedding(phi, c);
    SoftMap s = soft_correspondence(transformed, phi_f);
    ad::Var transferred = ad::matmul(s.values, p_f);
    ad::Var target = ad::gather_rows(p_f, sym.targets);
    ad::Var mean_sq = ad::scale(ad::sum_squares(ad::sub(transferred, target)),
                                1.0 / static_cast<double>(phi.values.rows()));
    return LinLossTerm{mean_sq, std::move(s), std::move(c)};
}

struct EucLossTerm {
    ad::Var loss;  // 1x1
    SoftMap soft;  // S between the two shapes, straight from the embeddings
};

// Euclidean coordinate-transfer loss between the pair, computed directly on
// the raw embeddings without any linear transformation.
inline EucLossTerm loss_euc(const Embedding& phi_src, const Embedding& phi_dst, const IndexMap& map,
                            ad::Var p_dst) {
    if (map.src_size != static_cast<int>(phi_src.values.rows()))
        throw DimensionError("loss_euc: map covers " + std::to_string(map.src_size) +
                             " points, source embedding has " + std::to_string(phi_src.values.rows()));
    if (p_dst.rows() != phi_dst.values.rows())
        throw DimensionError("loss_euc: coordinate rows disagree with the destination embedding");
    SoftMap s = soft_correspondence(phi_src, phi_dst);
    ad::Var transferred = ad::matmul(s.values, p_dst);
    ad::Var target = ad::gather_rows(p_dst, map.targets);
    ad::Var mean_sq = ad::scale(ad::sum_squares(ad::sub(transferred, target)),
                                1.0 / static_cast<double>(phi_src.values.rows()));
    return EucLossTerm{mean_sq, std::move(s)};
}

// || S_xy S_yyf - S_xxf S_xy ||_F normalized by sqrt(n_x n_y): the difference
// between mapping then symmetrizing and symmetrizing then mapping.
inline ad::Var loss_comm(const SoftMap& s_xy, const SoftMap& s_xxf, const SoftMap& s_yyf) {
    const Eigen::Index nx = s_xy.values.rows(), ny = s_xy.values.cols();
    if (s_xxf.values.rows() != nx || s_xxf.values.cols() != nx)
        throw DimensionError("loss_comm: source symmetry map must be n_x x n_x");
    if (s_yyf.values.rows() != ny || s_yyf.values.cols() != ny)
        throw DimensionError("loss_comm: destination symmetry map must be n_y x n_y");
    ad::Var mapped_then_sym = ad::matmul(s_xy.values, s_yyf.values);
    ad::Var sym_then_mapped = ad::matmul(s_xxf.values, s_xy.values);
    ad::Var diff = ad::sub(mapped_then_sym, sym_then_mapped);
    return ad::scale(ad::frobenius_norm(diff), 1.0 / std::sqrt(static_cast<double>(nx * ny)));
}

struct TotalLoss {
    ad::Var total;
    ad::Var euc, lin, comm;
    LossWeights weights;

    LossBreakdown breakdown() const {
        return LossBreakdown{euc.value()(0, 0), lin.value()(0, 0), comm.value()(0, 0),
                             total.value()(0, 0)};
    }
};

inline TotalLoss loss_total(ad::Var l_euc, ad::Var l_lin, ad::Var l_comm, const LossWeights& w) {
    w.validate();
    ad::Var total = ad::add(l_euc, ad::add(ad::scale(l_lin, w.lambda), ad::scale(l_comm, w.gamma)));
    return TotalLoss{total, l_euc, l_lin, l_comm, w};
}

// One training sample arranged for the loss: the map runs src -> dst, each
// cloud carries its flipped copy, and the symmetry maps match the clouds.
struct PreparedPair {
    PointCloud src, src_f;
    PointCloud dst, dst_f;
    IndexMap map;  // src -> dst
    IndexMap sym_src, sym_dst;
};

// Orients a sample along its map direction and attaches flipped copies.
inline PreparedPair prepare_pair(const ShapePairSample& s, Axis flip_axis = Axis::X) {
    PreparedPair p;
    if (map_direction(s) == MapDirection::XtoY) {
        p.src = s.x;
        p.dst = s.y;
        p.sym_src = s.sym_x;
        p.sym_dst = s.sym_y;
    } else {
        p.src = s.y;
        p.dst = s.x;
        p.sym_src = s.sym_y;
        p.sym_dst = s.sym_x;
    }
    p.map = s.map_xy;
    p.src_f = flip(p.src, flip_axis);
    p.dst_f = flip(p.dst, flip_axis);
    return p;
}

struct SampleLoss {
    TotalLoss loss;
    Embedding phi_src, phi_dst;
};

// Builds the full Eq-(7)-style loss for one prepared pair on the given tape:
// both shapes contribute a linearly invariant term, the Euclidean term follows
// the map direction, and the commutativity term reuses the self-symmetry soft
// maps of the two lin terms.
inline SampleLoss pair_loss(ad::Tape& tape, const EncoderVars& params, const PreparedPair& pair,
                            const LossWeights& w, double eps) {
    ad::Var p_src = tape.lift(pair.src.coords);
    ad::Var p_src_f = tape.lift(pair.src_f.coords);
    ad::Var p_dst = tape.lift(pair.dst.coords);
    ad::Var p_dst_f = tape.lift(pair.dst_f.coords);

    Embedding phi_src{pair.src.label, encode(params, p_src)};
    Embedding phi_src_f{pair.src_f.label, encode(params, p_src_f)};
    Embedding phi_dst{pair.dst.label, encode(params, p_dst)};
    Embedding phi_dst_f{pair.dst_f.label, encode(params, p_dst_f)};

    LinLossTerm lin_src = loss_lin(phi_src, phi_src_f, pair.sym_src, p_src_f, eps);
    LinLossTerm lin_dst = loss_lin(phi_dst, phi_dst_f, pair.sym_dst, p_dst_f, eps);
    ad::Var l_lin = ad::add(lin_src.loss, lin_dst.loss);

    EucLossTerm euc = loss_euc(phi_src, phi_dst, pair.map, p_dst);
    ad::Var l_comm = loss_comm(euc.soft, lin_src.soft, lin_dst.soft);

    return SampleLoss{loss_total(euc.loss, l_lin, l_comm, w), std::move(phi_src), std::move(phi_dst)};
}

}  // namespace canmatch
