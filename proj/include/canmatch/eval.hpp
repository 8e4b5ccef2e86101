#pragma once

// Test-phase matching and geodesic-error reporting. Errors are shortest-path
// distances on the target shape between predicted and ground-truth matches,
// normalized by the target's geodesic diameter; the headline score is the mean
// multiplied by 100. Suite scores average per-pair means over pairs (the
// convention is recorded in the report metadata).

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "canmatch/checkpoint.hpp"
#include "canmatch/errors.hpp"
#include "canmatch/fmap.hpp"
#include "canmatch/generator.hpp"
#include "canmatch/geodesic.hpp"
#include "canmatch/geom.hpp"
#include "canmatch/net.hpp"

namespace canmatch {

inline constexpr int kCdfSamples = 100;
inline constexpr const char* kNormalizationMode = "geodesic_diameter";
inline constexpr const char* kAveragingConvention = "per-pair mean, then mean over pairs";

struct ErrorReport {
    std::vector<double> errors;  // per-point, diameter-normalized
    double mean_x100 = 0.0;
    std::vector<double> cdf_thresholds;  // kCdfSamples values from 0
    std::vector<double> cdf_values;      // fraction of errors <= threshold
    std::string checkpoint_id, dataset_id;
    std::string normalization = kNormalizationMode;
};

namespace detail_eval {

inline void fill_cdf(const std::vector<double>& errors, std::vector<double>& thresholds,
                     std::vector<double>& values) {
    double max_err = 0.0;
    for (double e : errors) max_err = std::max(max_err, e);
    double top = std::max(1.0, max_err);  // the last threshold always reaches cdf 1
    std::vector<double> sorted = errors;
    std::sort(sorted.begin(), sorted.end());
    thresholds.resize(kCdfSamples);
    values.resize(kCdfSamples);
    for (int j = 0; j < kCdfSamples; ++j) {
        double t = top * static_cast<double>(j) / (kCdfSamples - 1);
        thresholds[static_cast<std::size_t>(j)] = t;
        auto it = std::upper_bound(sorted.begin(), sorted.end(), t);
        values[static_cast<std::size_t>(j)] =
            static_cast<double>(it - sorted.begin()) / static_cast<double>(sorted.size());
    }
}

}  // namespace detail_eval

// Per-point geodesic error of a predicted map against the ground truth,
// measured on the target shape.
inline ErrorReport evaluate_pair(const IndexMap& pred, const IndexMap& gt, const GeodesicField& geo) {
    if (pred.src_size != gt.src_size)
        throw DimensionError("evaluate_pair: predicted and ground-truth maps cover different sources");
    if (pred.dst_size != geo.size() || gt.dst_size != geo.size())
        throw DimensionError("evaluate_pair: geodesic field does not match the target shape");
    double diam = geo.diameter();
    if (diam <= 0.0) throw NumericalError("evaluate_pair: degenerate zero diameter");

    ErrorReport rep;
    rep.errors.reserve(static_cast<std::size_t>(pred.src_size));
    double sum = 0.0;
    for (int i = 0; i < pred.src_size; ++i) {
        double e = geo.row(gt(i))[static_cast<std::size_t>(pred(i))] / diam;
        rep.errors.push_back(e);
        sum += e;
    }
    rep.mean_x100 = 100.0 * sum / static_cast<double>(pred.src_size);
    detail_eval::fill_cdf(rep.errors, rep.cdf_thresholds, rep.cdf_values);
    return rep;
}

// Embeds clouds either through a trained encoder or as raw 3-d coordinates
// (the nearest-neighbor baseline path).
class Embedder {
public:
    static Embedder raw_coords() {
        Embedder e;
        e.id_ = "raw-coords";
        return e;
    }

    static Embedder from_params(EncoderParams params, std::string id) {
        params.validate();
        Embedder e;
        e.params_ = std::move(params);
        e.id_ = std::move(id);
        return e;
    }

    static Embedder from_checkpoint(const Checkpoint& ckpt, std::string id = {}) {
        return from_params(ckpt.params, id.empty() ? "checkpoint:" + ckpt.rng_digest : std::move(id));
    }

    Mat embed(const PointCloud& cloud) const {
        return params_ ? encode_values(*params_, cloud.coords) : cloud.coords;
    }

    int k() const { return params_ ? params_->k : 3; }
    const std::string& id() const { return id_; }

private:
    std::optional<EncoderParams> params_;
    std::string id_;
};

struct PairEvaluation {
    ErrorReport report;
    IndexMap predicted;
};

// Encodes both clouds at full available resolution, matches source to target
// by exact nearest-neighbor search, and scores against the ground truth. An
// external geodesic field for the target may be supplied to share Dijkstra
// caches across evaluations.
inline PairEvaluation match_and_evaluate(const Embedder& embedder, const ShapePairSample& pair,
                                         const GeodesicField* geo = nullptr) {
    const bool forward = map_direction(pair) == MapDirection::XtoY;
    const PointCloud& src = forward ? pair.x : pair.y;
    const PointCloud& dst = forward ? pair.y : pair.x;

    Mat phi_src = embedder.embed(src);
    Mat phi_dst = embedder.embed(dst);
    IndexMap pred = nn_correspondence(phi_src, phi_dst);

    std::unique_ptr<GeodesicField> own;
    if (!geo) {
        own = std::make_unique<GeodesicField>(dst);
        geo = own.get();
    }
    PairEvaluation out{evaluate_pair(pred, pair.map_xy, *geo), std::move(pred)};
    out.report.checkpoint_id = embedder.id();
    return out;
}

struct SuiteReport {
    std::vector<double> pair_means_x100;
    double mean_x100 = 0.0;                       // mean over pairs of per-pair means
    std::vector<double> cdf_thresholds, cdf_values;  // pooled over all points
    std::string checkpoint_id, dataset_id;
    std::string normalization = kNormalizationMode;
    std::string averaging = kAveragingConvention;
};

inline SuiteReport evaluate_suite(const Embedder& embedder, const std::vector<ShapePairSample>& pairs,
                                  const std::string& dataset_id = {},
                                  std::vector<IndexMap>* predicted_out = nullptr) {
    if (pairs.empty()) throw DataError("evaluate_suite: no pairs to evaluate");
    SuiteReport rep;
    rep.checkpoint_id = embedder.id();
    rep.dataset_id = dataset_id;
    std::vector<double> pooled;
    for (const auto& pair : pairs) {
        PairEvaluation pe = match_and_evaluate(embedder, pair);
        rep.pair_means_x100.push_back(pe.report.mean_x100);
        pooled.insert(pooled.end(), pe.report.errors.begin(), pe.report.errors.end());
        if (predicted_out) predicted_out->push_back(std::move(pe.predicted));
    }
    double sum = 0.0;
    for (double m : rep.pair_means_x100) sum += m;
    rep.mean_x100 = sum / static_cast<double>(rep.pair_means_x100.size());
    detail_eval::fill_cdf(pooled, rep.cdf_thresholds, rep.cdf_values);
    return rep;
}

inline void save_report_json(const std::string& path, const SuiteReport& rep) {
    nlohmann::json j{{"mean_x100", rep.mean_x100},
                     {"pair_means_x100", rep.pair_means_x100},
                     {"cdf", {{"thresholds", rep.cdf_thresholds}, {"values", rep.cdf_values}}},
                     {"metadata",
                      {{"checkpoint", rep.checkpoint_id},
                       {"dataset", rep.dataset_id},
                       {"normalization", rep.normalization},
                       {"averaging", rep.averaging}}}};
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << j.dump(2) << '\n';
}

// CSV: threshold,cdf rows plus one summary row.
inline void save_report_csv(const std::string& path, const SuiteReport& rep) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "threshold,cdf\n";
    char buf[96];
    for (std::size_t i = 0; i < rep.cdf_thresholds.size(); ++i) {
        std::snprintf(buf, sizeof(buf), "%.17g,%.17g", rep.cdf_thresholds[i], rep.cdf_values[i]);
        out << buf << '\n';
    }
    std::snprintf(buf, sizeof(buf), "mean_x100,%.17g", rep.mean_x100);
    out << buf << '\n';
}

// ---------------------------------------------------------------------------
// Sensitivity sweeps
// ---------------------------------------------------------------------------

enum class SweepAxis { EmbeddingSize, TrainSize };

inline SweepAxis sweep_axis_from_string(const std::string& s) {
    if (s == "embedding_size") return SweepAxis::EmbeddingSize;
    if (s == "train_size") return SweepAxis::TrainSize;
    throw ConfigError("unknown sweep axis '" + s + "' (expected embedding_size|train_size)");
}

inline const char* to_string(SweepAxis a) {
    return a == SweepAxis::EmbeddingSize ? "embedding_size" : "train_size";
}

struct SweepRow {
    int value = 0;
    double mean_x100 = 0.0;
};

// Trains one model per axis value on a freshly generated dataset (clouds of
// `gen_points` points) and scores it on the fixed held-out suite.
inline std::vector<SweepRow> sweep(SweepAxis axis, const std::vector<int>& values,
                                   const TrainConfig& base_config, int gen_points,
                                   const std::vector<ShapePairSample>& held_out,
                                   const LogSink& sink = {}) {
    if (values.empty()) throw ConfigError("sweep: no values given");
    std::vector<SweepRow> rows;
    for (int v : values) {
        TrainConfig cfg = base_config;
        if (axis == SweepAxis::EmbeddingSize)
            cfg.k = v;
        else
            cfg.dataset_size = v;
        auto train_data =
            samples_of(generate_dataset(cfg.dataset_size, gen_points, cfg.partial_mode, cfg.seed));
        Checkpoint ckpt = fit(cfg, train_data, sink);
        SuiteReport rep = evaluate_suite(Embedder::from_checkpoint(ckpt), held_out);
        rows.push_back(SweepRow{v, rep.mean_x100});
    }
    return rows;
}

inline void save_sweep_csv(const std::string& path, SweepAxis axis, const std::vector<SweepRow>& rows) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot open '" + path + "' for writing");
    out << "axis,value,mean_x100\n";
    char buf[96];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%s,%d,%.17g", to_string(axis), r.value, r.mean_x100);
        out << buf << '\n';
    }
}

}  // namespace canmatch
