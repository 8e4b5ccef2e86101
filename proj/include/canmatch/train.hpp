#pragma once

// End-to-end training: symmetric-pair subsampling, per-shape rotation
// augmentation, flipping, shared-weight encoding, the combined loss, and Adam
// updates. Per-sample tapes in a batch run on worker threads; the gradient
// reduction always walks the batch in order, so results match a sequential
// run bitwise.

#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <functional>
#include <future>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "canmatch/errors.hpp"
#include "canmatch/generator.hpp"
#include "canmatch/geom.hpp"
#include "canmatch/loss.hpp"
#include "canmatch/net.hpp"
#include "canmatch/rng.hpp"

namespace canmatch {

struct TrainConfig {
    int k = 24;
    int points_per_shape = 256;
    int batch_size = 8;
    double learning_rate = 1e-3;
    int epochs = 30;
    double lambda = 5.0;
    double gamma = 5.0;
    double eps = 1e-6;
    std::uint64_t seed = 1;
    Partiality partial_mode = Partiality::None;
    int dataset_size = 200;

    // CI-scale defaults, small enough for a desk run.
    static TrainConfig desk_defaults() { return TrainConfig{}; }

    // Full-scale settings: k=50 embedding, 3000-point sampling, batch 20,
    // learning rate 1e-4.
    static TrainConfig paper_defaults() {
        TrainConfig c;
        c.k = 50;
        c.points_per_shape = 3000;
        c.batch_size = 20;
        c.learning_rate = 1e-4;
        c.dataset_size = 5000;
        return c;
    }

    LossWeights weights() const { return LossWeights{lambda, gamma}; }

    void validate() const {
        if (k < 2) throw ConfigError("TrainConfig: k must be at least 2");
        if (points_per_shape < 4) throw ConfigError("TrainConfig: points_per_shape must be at least 4");
        if (batch_size < 1) throw ConfigError("TrainConfig: batch_size must be positive");
        if (epochs < 0) throw ConfigError("TrainConfig: epochs must be non-negative");
        if (learning_rate <= 0.0) throw ConfigError("TrainConfig: learning_rate must be positive");
        if (eps < 0.0) throw ConfigError("TrainConfig: eps must be non-negative");
        if (dataset_size < 1) throw ConfigError("TrainConfig: dataset_size must be positive");
        weights().validate();
    }
};

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"k", c.k},
                       {"points", c.points_per_shape},
                       {"batch", c.batch_size},
                       {"lr", c.learning_rate},
                       {"epochs", c.epochs},
                       {"lambda", c.lambda},
                       {"gamma", c.gamma},
                       {"eps", c.eps},
                       {"seed", c.seed},
                       {"partial", to_string(c.partial_mode)},
                       {"pairs", c.dataset_size}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    c = TrainConfig{};
    if (j.contains("k")) j.at("k").get_to(c.k);
    if (j.contains("points")) j.at("points").get_to(c.points_per_shape);
    if (j.contains("batch")) j.at("batch").get_to(c.batch_size);
    if (j.contains("lr")) j.at("lr").get_to(c.learning_rate);
    if (j.contains("epochs")) j.at("epochs").get_to(c.epochs);
    if (j.contains("lambda")) j.at("lambda").get_to(c.lambda);
    if (j.contains("gamma")) j.at("gamma").get_to(c.gamma);
    if (j.contains("eps")) j.at("eps").get_to(c.eps);
    if (j.contains("seed")) c.seed = j.at("seed").get<std::uint64_t>();
    if (j.contains("partial")) c.partial_mode = partiality_from_string(j.at("partial").get<std::string>());
    if (j.contains("pairs")) j.at("pairs").get_to(c.dataset_size);
}

// ---------------------------------------------------------------------------
// Adam
// ---------------------------------------------------------------------------

struct AdamState {
    std::vector<Mat> m, v;
    long t = 0;

    static AdamState init(const std::vector<Mat>& params) {
        AdamState s;
        for (const Mat& p : params) {
            s.m.push_back(Mat::Zero(p.rows(), p.cols()));
            s.v.push_back(Mat::Zero(p.rows(), p.cols()));
        }
        return s;
    }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

// Standard bias-corrected Adam update.
inline void adam_step(std::vector<Mat>& params, const std::vector<Mat>& grads, AdamState& state,
                      double lr) {
    if (params.size() != grads.size() || params.size() != state.m.size())
        throw DimensionError("adam_step: parameter/gradient/state sizes disagree");
    state.t += 1;
    double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
    double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].rows() != grads[i].rows() || params[i].cols() != grads[i].cols())
            throw DimensionError("adam_step: gradient " + std::to_string(i) + " has the wrong shape");
        Mat& m = state.m[i];
        Mat& v = state.v[i];
        m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grads[i];
        v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grads[i].cwiseProduct(grads[i]);
        params[i].array() -= lr * (m.array() / bc1) / ((v.array() / bc2).sqrt() + kAdamEps);
    }
}

// ---------------------------------------------------------------------------
// Training loop
// ---------------------------------------------------------------------------

struct TrainLogRow {
    long iter = 0;
    double l_euc = 0.0, l_lin = 0.0, l_comm = 0.0, l_total = 0.0;
    double wall_ms = 0.0;
};

using LogSink = std::function<void(const TrainLogRow&)>;

inline constexpr const char* kTrainLogHeader = "iter,l_euc,l_lin,l_comm,l_total,wall_ms";

inline void append_log_row(std::ostream& out, const TrainLogRow& r) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%ld,%.17g,%.17g,%.17g,%.17g,%.17g", r.iter, r.l_euc, r.l_lin,
                  r.l_comm, r.l_total, r.wall_ms);
    out << buf << '\n';
}

struct Checkpoint {
    EncoderParams params;
    TrainConfig config;
    long iteration = 0;
    std::string rng_digest;
};

inline std::uint64_t fnv1a(const void* data, std::size_t n, std::uint64_t h = 1469598103934665603ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

inline std::string digest_params(const EncoderParams& params, std::uint64_t seed, long iteration) {
    std::uint64_t h = fnv1a(&seed, sizeof(seed));
    h = fnv1a(&iteration, sizeof(iteration), h);
    for (const Mat& m : flatten_params(params))
        h = fnv1a(m.data(), static_cast<std::size_t>(m.size()) * sizeof(double), h);
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

namespace detail_train {

struct SampleOutcome {
    std::vector<Mat> grads;
    LossBreakdown breakdown;
    std::exception_ptr error;
};

inline SampleOutcome process_sample(const ShapePairSample& sample, const EncoderParams& params,
                                    const TrainConfig& cfg, std::uint64_t sample_seed,
                                    std::size_t sample_index) {
    SampleOutcome out;
    try {
        int q = cfg.points_per_shape;
        ShapePairSample sub = (q < std::min(sample.x.size(), sample.y.size()))
                                  ? subsample(sample, q, mix_seed(sample_seed, 1))
                                  : sample;
        // one shared rotation per shape, applied before the flip
        Mat3 rx = random_rotation(mix_seed(sample_seed, 2));
        Mat3 ry = random_rotation(mix_seed(sample_seed, 3));
        sub.x = rotated(sub.x, rx);
        sub.y = rotated(sub.y, ry);

        PreparedPair pair = prepare_pair(sub);
        ad::Tape tape;
        EncoderVars pv = lift_params(tape, params);
        SampleLoss sl = pair_loss(tape, pv, pair, cfg.weights(), cfg.eps);
        out.breakdown = sl.loss.breakdown();

        const struct {
            const char* name;
            double v;
        } terms[] = {{"l_euc", out.breakdown.l_euc},
                     {"l_lin", out.breakdown.l_lin},
                     {"l_comm", out.breakdown.l_comm},
                     {"l_total", out.breakdown.l_total}};
        for (const auto& t : terms)
            if (!std::isfinite(t.v))
                throw NumericalError("sample " + std::to_string(sample_index) + ": " + t.name +
                                     " is non-finite");

        ad::GradMap grads = tape.backward(sl.loss.total);
        out.grads.reserve(pv.vars.size());
        for (ad::Var v : pv.vars) out.grads.push_back(grads.get_or_zero(v));
    } catch (const NumericalError& e) {
        std::string msg = e.what();
        if (msg.rfind("sample ", 0) != 0) msg = "sample " + std::to_string(sample_index) + ": " + msg;
        out.error = std::make_exception_ptr(NumericalError(msg));
    } catch (const Error& e) {
        out.error = std::make_exception_ptr(
            DataError("sample " + std::to_string(sample_index) + ": " + e.what()));
    }
    return out;
}

}  // namespace detail_train

// Trains an encoder over the dataset. The checkpoint is a deterministic
// function of (config, dataset); batch members may be processed concurrently
// but are reduced in batch order.
inline Checkpoint fit(const TrainConfig& cfg, const std::vector<ShapePairSample>& dataset,
                      const LogSink& sink = {}, bool measure_time = false) {
    cfg.validate();
    if (dataset.empty()) throw DataError("fit: dataset is empty");

    EncoderParams params = init_encoder(cfg.k, cfg.seed);
    std::vector<Mat> flat = flatten_params(params);
    AdamState adam = AdamState::init(flat);
    long iter = 0;

    const unsigned hw = std::max(1u, std::thread::hardware_concurrency());

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::vector<std::size_t> order(dataset.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        Rng shuffle_rng = make_rng(mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch), 0x6f726472ULL));
        std::shuffle(order.begin(), order.end(), shuffle_rng);

        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(cfg.batch_size)) {
            auto t0 = std::chrono::steady_clock::now();
            std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(cfg.batch_size));
            std::size_t bsz = end - start;

            std::vector<detail_train::SampleOutcome> outcomes(bsz);
            {
                std::atomic<std::size_t> next{0};
                auto worker = [&]() {
                    while (true) {
                        std::size_t i = next.fetch_add(1);
                        if (i >= bsz) break;
                        std::size_t di = order[start + i];
                        std::uint64_t sseed = mix_seed(cfg.seed, static_cast<std::uint64_t>(epoch),
                                                       static_cast<std::uint64_t>(start + i));
                        outcomes[i] = detail_train::process_sample(dataset[di], params, cfg, sseed, di);
                    }
                };
                unsigned nthreads = std::min<unsigned>(hw, static_cast<unsigned>(bsz));
                std::vector<std::thread> pool;
                for (unsigned t = 1; t < nthreads; ++t) pool.emplace_back(worker);
                worker();
                for (auto& th : pool) th.join();
            }

            // fixed-order reduction
            std::vector<Mat> grad_sum;
            TrainLogRow row;
            row.iter = iter + 1;
            for (std::size_t i = 0; i < bsz; ++i) {
                if (outcomes[i].error) std::rethrow_exception(outcomes[i].error);
                if (grad_sum.empty()) {
                    grad_sum = outcomes[i].grads;
                } else {
                    for (std::size_t p = 0; p < grad_sum.size(); ++p) grad_sum[p] += outcomes[i].grads[p];
                }
                row.l_euc += outcomes[i].breakdown.l_euc;
                row.l_lin += outcomes[i].breakdown.l_lin;
                row.l_comm += outcomes[i].breakdown.l_comm;
                row.l_total += outcomes[i].breakdown.l_total;
            }
            double inv = 1.0 / static_cast<double>(bsz);
            for (Mat& g : grad_sum) g *= inv;
            row.l_euc *= inv;
            row.l_lin *= inv;
            row.l_comm *= inv;
            row.l_total *= inv;

            adam_step(flat, grad_sum, adam, cfg.learning_rate);
            params = unflatten_params(cfg.k, flat);
            ++iter;
            if (measure_time)
                row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0)
                                  .count();
            if (sink) sink(row);
        }
    }

    Checkpoint ckpt;
    ckpt.params = unflatten_params(cfg.k, flat);
    ckpt.config = cfg;
    ckpt.iteration = iter;
    ckpt.rng_digest = digest_params(ckpt.params, cfg.seed, iter);
    return ckpt;
}

}  // namespace canmatch
