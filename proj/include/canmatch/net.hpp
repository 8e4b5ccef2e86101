#pragma once

// Siamese point-cloud encoder: per-point dense layers, a global max-pool whose
// pooled feature is concatenated back onto every point, and per-point output
// layers down to the embedding width k. The same parameters encode a shape and
// its flipped copy, so weight sharing is structural.

#include <cstdint>
#include <string>
#include <vector>

#include "canmatch/autodiff.hpp"
#include "canmatch/errors.hpp"
#include "canmatch/fmap.hpp"
#include "canmatch/geom.hpp"
#include "canmatch/rng.hpp"
#include "canmatch/types.hpp"

namespace canmatch {

inline constexpr int kPointFeatureWidth = 64;

struct DenseLayer {
    Mat weight;  // out x in
    Mat bias;    // 1 x out
};

// Widths: per-point 3 -> 64 -> 64 (ReLU), max-pool the 64-d features, concat
// the pooled feature to each point (128), then 128 -> 64 (ReLU) -> k (linear).
struct EncoderParams {
    int k = 0;
    std::vector<DenseLayer> layers;  // [l1, l2, l3, l4]

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& l : layers) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
        return n;
    }

    std::vector<int> layer_widths() const {
        std::vector<int> w;
        for (const auto& l : layers) w.push_back(static_cast<int>(l.weight.rows()));
        return w;
    }

    void validate() const {
        if (k < 2) throw ConfigError("EncoderParams: k must be at least 2");
        if (layers.size() != 4) throw DataError("EncoderParams: expected 4 dense layers");
        const int widths_in[4] = {3, kPointFeatureWidth, 2 * kPointFeatureWidth, kPointFeatureWidth};
        const int widths_out[4] = {kPointFeatureWidth, kPointFeatureWidth, kPointFeatureWidth, k};
        for (int i = 0; i < 4; ++i) {
            const auto& l = layers[static_cast<std::size_t>(i)];
            if (l.weight.rows() != widths_out[i] || l.weight.cols() != widths_in[i])
                throw DataError("EncoderParams: layer " + std::to_string(i) + " weight is " +
                                std::to_string(l.weight.rows()) + "x" + std::to_string(l.weight.cols()) +
                                ", expected " + std::to_string(widths_out[i]) + "x" +
                                std::to_string(widths_in[i]));
            if (l.bias.rows() != 1 || l.bias.cols() != widths_out[i])
                throw DataError("EncoderParams: layer " + std::to_string(i) + " bias has wrong shape");
            if (!l.weight.allFinite() || !l.bias.allFinite())
                throw NumericalError("EncoderParams: non-finite parameters");
        }
    }
};

// Glorot-uniform weights, zero biases.
inline EncoderParams init_encoder(int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("init_encoder: k must be at least 2");
    Rng rng = make_rng(mix_seed(seed, 0x696e6974ULL));
    auto dense = [&](int out, int in) {
        double bound = std::sqrt(6.0 / (in + out));
        DenseLayer l;
        l.weight = Mat(out, in);
        for (int i = 0; i < out; ++i)
            for (int j = 0; j < in; ++j) l.weight(i, j) = uniform(rng, -bound, bound);
        l.bias = Mat::Zero(1, out);
        return l;
    };
    EncoderParams p;
    p.k = k;
    p.layers.push_back(dense(kPointFeatureWidth, 3));
    p.layers.push_back(dense(kPointFeatureWidth, kPointFeatureWidth));
    p.layers.push_back(dense(kPointFeatureWidth, 2 * kPointFeatureWidth));
    p.layers.push_back(dense(k, kPointFeatureWidth));
    p.validate();
    return p;
}

// Parameters lifted onto a tape in the canonical order [w1,b1,...,w4,b4].
struct EncoderVars {
    int k = 0;
    std::vector<ad::Var> vars;

    ad::Var weight(int layer) const { return vars[static_cast<std::size_t>(2 * layer)]; }
    ad::Var bias(int layer) const { return vars[static_cast<std::size_t>(2 * layer + 1)]; }
};

inline EncoderVars lift_params(ad::Tape& tape, const EncoderParams& p) {
    p.validate();
    EncoderVars v;
    v.k = p.k;
    for (const auto& l : p.layers) {
        v.vars.push_back(tape.lift(l.weight));
        v.vars.push_back(tape.lift(l.bias));
    }
    return v;
}

// Canonical flattening order for gradients and Adam state.
inline std::vector<Mat> flatten_params(const EncoderParams& p) {
    std::vector<Mat> out;
    for (const auto& l : p.layers) {
        out.push_back(l.weight);
        out.push_back(l.bias);
    }
    return out;
}

inline EncoderParams unflatten_params(int k, const std::vector<Mat>& flat) {
    if (flat.size() != 8) throw DataError("unflatten_params: expected 8 arrays");
    EncoderParams p;
    p.k = k;
    for (int i = 0; i < 4; ++i)
        p.layers.push_back(DenseLayer{flat[static_cast<std::size_t>(2 * i)], flat[static_cast<std::size_t>(2 * i + 1)]});
    p.validate();
    return p;
}

// Encodes points (a lifted n x 3 node) into an n x k embedding node,
// differentiable with respect to the parameters and the input coordinates.
inline ad::Var encode(const EncoderVars& params, ad::Var points) {
    if (points.cols() != 3) throw DimensionError("encode: points must be n x 3");
    if (points.rows() < 1) throw DimensionError("encode: empty point cloud");
    using namespace ad;
    Var z1 = relu(add_rowvec(matmul(points, transpose(params.weight(0))), params.bias(0)));
    Var z2 = relu(add_rowvec(matmul(z1, transpose(params.weight(1))), params.bias(1)));
    Var pooled = colwise_max(z2);
    Var global = repeat_rows(pooled, z2.rows());
    Var h = hcat(z2, global);
    Var z3 = relu(add_rowvec(matmul(h, transpose(params.weight(2))), params.bias(2)));
    return add_rowvec(matmul(z3, transpose(params.weight(3))), params.bias(3));
}

inline Embedding encode(const EncoderVars& params, ad::Tape& tape, const PointCloud& cloud) {
    return Embedding{cloud.label, encode(params, tape.lift(cloud.coords))};
}

// Plain-value convenience for test-phase encoding: builds a throwaway tape.
inline Mat encode_values(const EncoderParams& params, const Mat& coords) {
    ad::Tape tape;
    EncoderVars v = lift_params(tape, params);
    return encode(v, tape.lift(coords)).value();
}

}  // namespace canmatch
