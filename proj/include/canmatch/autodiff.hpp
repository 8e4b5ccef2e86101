#pragma once

// Reverse-mode automatic differentiation over dense matrices.
//
// A TapeT records every operation eagerly: each node owns its forward value and
// a pull closure that scatters the node's adjoint into its inputs. backward()
// walks the tape once in reverse creation order, so replaying an identical tape
// is bitwise deterministic. A tape is single-owner; independent tapes may run
// concurrently.

#include <cmath>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <Eigen/Cholesky>

#include "canmatch/errors.hpp"
#include "canmatch/types.hpp"

namespace canmatch::ad {

template <class Scalar>
class TapeT;

template <class Scalar>
struct VarT {
    TapeT<Scalar>* tape = nullptr;
    int id = -1;

    const MatT<Scalar>& value() const { return tape->value(id); }
    Eigen::Index rows() const { return value().rows(); }
    Eigen::Index cols() const { return value().cols(); }
    bool valid() const { return tape != nullptr && id >= 0; }
};

// Gradients of a scalar root with respect to leaf nodes. A leaf the root does
// not depend on is absent and means a zero gradient.
template <class Scalar>
class GradMapT {
public:
    using Mat = MatT<Scalar>;

    bool contains(VarT<Scalar> v) const { return grads_.count(v.id) > 0; }

    const Mat& at(VarT<Scalar> v) const {
        auto it = grads_.find(v.id);
        if (it == grads_.end()) throw IndexError("GradMap: no gradient recorded for node " + std::to_string(v.id));
        return it->second;
    }

    Mat get_or_zero(VarT<Scalar> v) const {
        auto it = grads_.find(v.id);
        if (it != grads_.end()) return it->second;
        return Mat::Zero(v.rows(), v.cols());
    }

    std::size_t size() const { return grads_.size(); }

    void insert(int id, Mat g) { grads_.emplace(id, std::move(g)); }

private:
    std::unordered_map<int, Mat> grads_;
};

template <class Scalar>
class TapeT {
public:
    using Mat = MatT<Scalar>;
    using Var = VarT<Scalar>;
    // A pull closure receives the tape, the node's accumulated adjoint, and the
    // node's own id (to read its cached forward value).
    using Pull = std::function<void(TapeT&, const Mat&, int)>;

    TapeT() = default;
    TapeT(const TapeT&) = delete;
    TapeT& operator=(const TapeT&) = delete;

    // Registers a leaf. Leaves are the only nodes that appear in a GradMap.
    Var lift(Mat value) { return push(std::move(value), nullptr, "leaf"); }

    Var push(Mat value, Pull pull, const char* op) {
        if (!value.allFinite()) throw NumericalError(std::string(op) + ": non-finite result");
        nodes_.push_back(Node{std::move(value), std::move(pull)});
        return Var{this, static_cast<int>(nodes_.size()) - 1};
    }

    const Mat& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
    int size() const { return static_cast<int>(nodes_.size()); }

    // Accumulates an adjoint contribution into node `id` during backward.
    template <class Expr>
    void accumulate(int id, const Expr& g) {
        auto& slot = grads_[static_cast<std::size_t>(id)];
        if (slot)
            *slot += g;
        else
            slot = g;
    }

    GradMapT<Scalar> backward(Var root) {
        if (root.tape != this) throw Error("backward: root belongs to a different tape");
        const Mat& rv = value(root.id);
        if (rv.rows() != 1 || rv.cols() != 1)
            throw DimensionError("backward: root must be 1x1, got " + shape_str(rv));
        grads_.assign(nodes_.size(), std::nullopt);
        grads_[static_cast<std::size_t>(root.id)] = Mat::Ones(1, 1);
        for (int i = root.id; i >= 0; --i) {
            auto& slot = grads_[static_cast<std::size_t>(i)];
            if (slot && nodes_[static_cast<std::size_t>(i)].pull)
                nodes_[static_cast<std::size_t>(i)].pull(*this, *slot, i);
        }
        GradMapT<Scalar> out;
        for (std::size_t i = 0; i < nodes_.size(); ++i) {
            if (!nodes_[i].pull && grads_[i]) out.insert(static_cast<int>(i), std::move(*grads_[i]));
        }
        grads_.clear();
        return out;
    }

    static std::string shape_str(const Mat& m) {
        return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
    }

private:
    struct Node {
        Mat value;
        Pull pull;  // null for leaves
    };

    std::vector<Node> nodes_;
    std::vector<std::optional<Mat>> grads_;
};

namespace detail {

template <class Scalar>
void check_same_tape(VarT<Scalar> a, VarT<Scalar> b, const char* op) {
    if (a.tape != b.tape) throw Error(std::string(op) + ": operands live on different tapes");
}

template <class Scalar>
void check_same_shape(VarT<Scalar> a, VarT<Scalar> b, const char* op) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw DimensionError(std::string(op) + ": shape mismatch " + TapeT<Scalar>::shape_str(a.value()) +
                             " vs " + TapeT<Scalar>::shape_str(b.value()));
}

}  // namespace detail

template <class Scalar>
VarT<Scalar> add(VarT<Scalar> a, VarT<Scalar> b) {
    detail::check_same_tape(a, b, "add");
    detail::check_same_shape(a, b, "add");
    using Mat = MatT<Scalar>;
    return a.tape->push(a.value() + b.value(),
                        [ai = a.id, bi = b.id](TapeT<Scalar>& t, const Mat& g, int) {
                            t.accumulate(ai, g);
                            t.accumulate(bi, g);
                        },
                        "add");
}

template <class Scalar>
VarT<Scalar> sub(VarT<Scalar> a, VarT<Scalar> b) {
    detail::check_same_tape(a, b, "sub");
    detail::check_same_shape(a, b, "sub");
    using Mat = MatT<Scalar>;
    return a.tape->push(a.value() - b.value(),
                        [ai = a.id, bi = b.id](TapeT<Scalar>& t, const Mat& g, int) {
                            t.accumulate(ai, g);
                            t.accumulate(bi, -g);
                        },
                        "sub");
}

template <class Scalar>
VarT<Scalar> scale(VarT<Scalar> a, Scalar c) {
    using Mat = MatT<Scalar>;
    return a.tape->push(Mat(c * a.value()),
                        [ai = a.id, c](TapeT<Scalar>& t, const Mat& g, int) {
                            // a zero factor detaches the whole subgraph
                            if (c != Scalar(0)) t.accumulate(ai, Mat(c * g));
                        },
                        "scale");
}

template <class Scalar>
VarT<Scalar> matmul(VarT<Scalar> a, VarT<Scalar> b) {
    detail::check_same_tape(a, b, "matmul");
    if (a.cols() != b.rows())
        throw DimensionError("matmul: inner dimensions disagree, " + TapeT<Scalar>::shape_str(a.value()) +
                             " * " + TapeT<Scalar>::shape_str(b.value()));
    using Mat = MatT<Scalar>;
    return a.tape->push(Mat(a.value() * b.value()),
                        [ai = a.id, bi = b.id](TapeT<Scalar>& t, const Mat& g, int) {
                            t.accumulate(ai, Mat(g * t.value(bi).transpose()));
                            t.accumulate(bi, Mat(t.value(ai).transpose() * g));
                        },
                        "matmul");
}

template <class Scalar>
VarT<Scalar> transpose(VarT<Scalar> a) {
    using Mat = MatT<Scalar>;
    return a.tape->push(Mat(a.value().transpose()),
                        [ai = a.id](TapeT<Scalar>& t, const Mat& g, int) {
                            t.accumulate(ai, Mat(g.transpose()));
                        },
                        "transpose");
}

// Rows of `a` selected by `idx`; the gradient scatters back to the gathered
// rows and is zero elsewhere. Repeated indices accumulate.
template <class Scalar>
VarT<Scalar> gather_rows(VarT<Scalar> a, std::vector<int> idx) {
    using Mat = MatT<Scalar>;
    const Mat& av = a.value();
    Mat out(static_cast<Eigen::Index>(idx.size()), av.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) {
        if (idx[i] < 0 || idx[i] >= av.rows())
            throw IndexError("gather_rows: index " + std::to_string(idx[i]) + " out of range [0," +
                             std::to_string(av.rows()) + ")");
        out.row(static_cast<Eigen::Index>(i)) = av.row(idx[i]);
    }
    return a.tape->push(std::move(out),
                        [ai = a.id, idx = std::move(idx)](TapeT<Scalar>& t, const Mat& g, int) {
                            Mat z = Mat::Zero(t.value(ai).rows(), t.value(ai).cols());
                            for (std::size_t i = 0; i < idx.size(); ++i)
                                z.row(idx[i]) += g.row(static_cast<Eigen::Index>(i));
                            t.accumulate(ai, z);
                        },
                        "gather_rows");
}

template <class Scalar>
VarT<Scalar> sum_all(VarT<Scalar> a) {
    using Mat = MatT<Scalar>;
    Mat out(1, 1);
    out(0, 0) = a.value().sum();
    return a.tape->push(std::move(out),
                        [ai = a.id](TapeT<Scalar>& t, const Mat& g, int) {
                            t.accumulate(ai, Mat::Constant(t.value(ai).rows(), t.value(ai).cols(), g(0, 0)));
                        },
                        "sum_all");
}

template <class Scalar>
VarT<Scalar> frobenius_norm(VarT<Scalar> a) {
    using Mat = MatT<Scalar>;
    Scalar nrm = a.value().norm();
    Mat out(1, 1);
    out(0, 0) = nrm;
    return a.tape->push(std::move(out),
                        [ai = a.id, nrm](TapeT<Scalar>& t, const Mat& g, int) {
                            // subgradient 0 at the origin
                            if (nrm > Scalar(0)) t.accumulate(ai, Mat((g(0, 0) / nrm) * t.value(ai)));
                        },
                        "frobenius_norm");
}

// Squared Frobenius norm; smooth everywhere, composes the squared-norm losses.
template <class Scalar>
VarT<Scalar> sum_squares(VarT<Scalar> a) {
    using Mat = MatT<Scalar>;
    Mat out(1, 1);
    out(0, 0) = a.value().squaredNorm();
    return a.tape->push(std::move(out),
                        [ai = a.id](TapeT<Scalar>& t, const Mat& g, int) {
                            t.accumulate(ai, Mat((Scalar(2) * g(0, 0)) * t.value(ai)));
                        },
                        "sum_squares");
}

// a (n x m) + broadcast row b (1 x m).
template <class Scalar>
VarT<Scalar> add_rowvec(VarT<Scalar> a, VarT<Scalar> b) {
    detail::check_same_tape(a, b, "add_rowvec");
    if (b.rows() != 1 || a.cols() != b.cols())
        throw DimensionError("add_rowvec: expected 1x" + std::to_string(a.cols()) + " row, got " +
                             TapeT<Scalar>::shape_str(b.value()));
    using Mat = MatT<Scalar>;
    return a.tape->push(Mat(a.value().rowwise() + b.value().row(0)),
                        [ai = a.id, bi = b.id](TapeT<Scalar>& t, const Mat& g, int) {
                            t.accumulate(ai, g);
                            t.accumulate(bi, Mat(g.colwise().sum()));
                        },
                        "add_rowvec");
}

template <class Scalar>
VarT<Scalar> relu(VarT<Scalar> a) {
    using Mat = MatT<Scalar>;
    return a.tape->push(Mat(a.value().cwiseMax(Scalar(0))),
                        [ai = a.id](TapeT<Scalar>& t, const Mat& g, int) {
                            const Mat& x = t.value(ai);
                            t.accumulate(ai, Mat(g.cwiseProduct(
                                                 (x.array() > Scalar(0)).template cast<Scalar>().matrix())));
                        },
                        "relu");
}

// Column-wise max over rows (n x m -> 1 x m). Ties route the gradient to the
// lowest row index.
template <class Scalar>
VarT<Scalar> colwise_max(VarT<Scalar> a) {
    using Mat = MatT<Scalar>;
    const Mat& av = a.value();
    if (av.rows() < 1) throw DimensionError("colwise_max: empty input");
    std::vector<Eigen::Index> argmax(static_cast<std::size_t>(av.cols()), 0);
    Mat out(1, av.cols());
    for (Eigen::Index j = 0; j < av.cols(); ++j) {
        Eigen::Index best = 0;
        for (Eigen::Index i = 1; i < av.rows(); ++i)
            if (av(i, j) > av(best, j)) best = i;
        argmax[static_cast<std::size_t>(j)] = best;
        out(0, j) = av(best, j);
    }
    return a.tape->push(std::move(out),
                        [ai = a.id, argmax = std::move(argmax)](TapeT<Scalar>& t, const Mat& g, int) {
                            Mat z = Mat::Zero(t.value(ai).rows(), t.value(ai).cols());
                            for (Eigen::Index j = 0; j < g.cols(); ++j)
                                z(argmax[static_cast<std::size_t>(j)], j) = g(0, j);
                            t.accumulate(ai, z);
                        },
                        "colwise_max");
}

// Replicates a 1 x m row n times.
template <class Scalar>
VarT<Scalar> repeat_rows(VarT<Scalar> a, Eigen::Index n) {
    if (a.rows() != 1) throw DimensionError("repeat_rows: expected a single row");
    using Mat = MatT<Scalar>;
    return a.tape->push(Mat(a.value().replicate(n, 1)),
                        [ai = a.id](TapeT<Scalar>& t, const Mat& g, int) {
                            t.accumulate(ai, Mat(g.colwise().sum()));
                        },
                        "repeat_rows");
}

template <class Scalar>
VarT<Scalar> hcat(VarT<Scalar> a, VarT<Scalar> b) {
    detail::check_same_tape(a, b, "hcat");
    if (a.rows() != b.rows()) throw DimensionError("hcat: row counts disagree");
    using Mat = MatT<Scalar>;
    Mat out(a.rows(), a.cols() + b.cols());
    out.leftCols(a.cols()) = a.value();
    out.rightCols(b.cols()) = b.value();
    Eigen::Index ac = a.cols();
    return a.tape->push(std::move(out),
                        [ai = a.id, bi = b.id, ac](TapeT<Scalar>& t, const Mat& g, int) {
                            t.accumulate(ai, Mat(g.leftCols(ac)));
                            t.accumulate(bi, Mat(g.rightCols(g.cols() - ac)));
                        },
                        "hcat");
}

inline constexpr double kDistanceFloor = 1e-9;

// Entry (i,j) is the Euclidean (non-squared) distance between row i of a and
// row j of b, floored at kDistanceFloor so coincident rows stay differentiable.
template <class Scalar>
VarT<Scalar> pairwise_distance(VarT<Scalar> a, VarT<Scalar> b) {
    detail::check_same_tape(a, b, "pairwise_distance");
    if (a.cols() != b.cols())
        throw DimensionError("pairwise_distance: column counts disagree, " +
                             TapeT<Scalar>::shape_str(a.value()) + " vs " +
                             TapeT<Scalar>::shape_str(b.value()));
    using Mat = MatT<Scalar>;
    const Mat& av = a.value();
    const Mat& bv = b.value();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> an = av.rowwise().squaredNorm();
    Eigen::Matrix<Scalar, Eigen::Dynamic, 1> bn = bv.rowwise().squaredNorm();
    Mat sq = Mat(-2 * av * bv.transpose());
    sq.colwise() += an;
    sq.rowwise() += bn.transpose();
    Mat d = sq.cwiseMax(Scalar(0)).cwiseSqrt().cwiseMax(Scalar(kDistanceFloor));
    return a.tape->push(std::move(d),
                        [ai = a.id, bi = b.id](TapeT<Scalar>& t, const Mat& g, int self) {
                            // dD_ij/dA_i = (a_i - b_j)/D_ij, with the floored D
                            const Mat& d = t.value(self);
                            const Mat& av = t.value(ai);
                            const Mat& bv = t.value(bi);
                            Mat w = g.cwiseQuotient(d);
                            Eigen::Matrix<Scalar, Eigen::Dynamic, 1> wr = w.rowwise().sum();
                            Eigen::Matrix<Scalar, Eigen::Dynamic, 1> wc = w.colwise().sum();
                            t.accumulate(ai, Mat(wr.asDiagonal() * av - w * bv));
                            t.accumulate(bi, Mat(wc.asDiagonal() * bv - w.transpose() * av));
                        },
                        "pairwise_distance");
}

// Row-stochastic softmax of the negated input: S_ij = exp(-d_ij)/sum_k exp(-d_ik),
// stabilized by subtracting each row's minimum before exponentiation.
template <class Scalar>
VarT<Scalar> row_softmax_neg(VarT<Scalar> d) {
    using Mat = MatT<Scalar>;
    const Mat& dv = d.value();
    if (dv.cols() < 1) throw DimensionError("row_softmax_neg: empty rows");
    Mat s(dv.rows(), dv.cols());
    for (Eigen::Index i = 0; i < dv.rows(); ++i) {
        Scalar m = dv.row(i).minCoeff();
        s.row(i) = (-(dv.row(i).array() - m)).exp();
        s.row(i) /= s.row(i).sum();
    }
    return d.tape->push(std::move(s),
                        [di = d.id](TapeT<Scalar>& t, const Mat& g, int self) {
                            const Mat& s = t.value(self);
                            // softmax vjp on z = -d: dz_ij = s_ij (g_ij - sum_k g_ik s_ik)
                            Eigen::Matrix<Scalar, Eigen::Dynamic, 1> r =
                                g.cwiseProduct(s).rowwise().sum();
                            Mat dd = s.cwiseProduct((-g).colwise() + r);
                            t.accumulate(di, dd);
                        },
                        "row_softmax_neg");
}

// Regularized least squares: (A^T A + eps I)^{-1} A^T B, the Tikhonov
// pseudo-inverse application A+ B. The backward rule composes the matrix
// inverse derivative d(M^-1) = -M^-1 dM M^-1 with the product rule; the
// Cholesky factor from the forward pass is reused.
template <class Scalar>
VarT<Scalar> ridge_solve(VarT<Scalar> a, VarT<Scalar> b, Scalar eps) {
    detail::check_same_tape(a, b, "ridge_solve");
    if (a.rows() != b.rows())
        throw DimensionError("ridge_solve: row counts disagree, " + TapeT<Scalar>::shape_str(a.value()) +
                             " vs " + TapeT<Scalar>::shape_str(b.value()));
    if (a.rows() < a.cols())
        throw DimensionError("ridge_solve: system is underdetermined (" +
                             TapeT<Scalar>::shape_str(a.value()) + ")");
    if (eps < Scalar(0)) throw ConfigError("ridge_solve: eps must be non-negative");
    using Mat = MatT<Scalar>;
    const Mat& av = a.value();
    const Mat& bv = b.value();
    Mat m = av.transpose() * av;
    m.diagonal().array() += eps;
    auto llt = std::make_shared<Eigen::LLT<Mat>>(m);
    if (llt->info() != Eigen::Success)
        throw NumericalError("ridge_solve: singular normal matrix A^T A + eps I (A is " +
                             TapeT<Scalar>::shape_str(av) + ", eps=" + std::to_string(eps) + ")");
    Mat x = llt->solve(av.transpose() * bv);
    return a.tape->push(std::move(x),
                        [ai = a.id, bi = b.id, llt](TapeT<Scalar>& t, const Mat& g, int self) {
                            const Mat& av = t.value(ai);
                            const Mat& bv = t.value(bi);
                            const Mat& x = t.value(self);
                            Mat gn = llt->solve(g);  // M^{-1} G, M symmetric
                            t.accumulate(bi, Mat(av * gn));
                            t.accumulate(ai, Mat(bv * gn.transpose() -
                                                 av * (x * gn.transpose() + gn * x.transpose())));
                        },
                        "ridge_solve");
}

// Operator sugar so compositions read like Eigen expressions.
template <class Scalar>
VarT<Scalar> operator+(VarT<Scalar> a, VarT<Scalar> b) { return add(a, b); }
template <class Scalar>
VarT<Scalar> operator-(VarT<Scalar> a, VarT<Scalar> b) { return sub(a, b); }
template <class Scalar>
VarT<Scalar> operator*(VarT<Scalar> a, VarT<Scalar> b) { return matmul(a, b); }
template <class Scalar>
VarT<Scalar> operator*(Scalar c, VarT<Scalar> a) { return scale(a, c); }

using Tape = TapeT<double>;
using Var = VarT<double>;
using GradMap = GradMapT<double>;

}  // namespace canmatch::ad
