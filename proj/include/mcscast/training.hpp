#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "mcscast/csv.hpp"
#include "mcscast/error.hpp"
#include "mcscast/labels.hpp"
#include "mcscast/model.hpp"

namespace mcscast {

enum class LossKind { asl, mse };

inline const char* to_string(LossKind k) { return k == LossKind::asl ? "asl" : "mse"; }

struct TrainConfig {
    LossKind loss = LossKind::asl;
    double lambda = 1.4;  // overshoot penalty; 1.0 reduces to plain MSE
    int batch_size = 512;
    int epochs = 10;
    double peak_lr = 1e-3;
    double warmup_fraction = 0.30;
    double weight_decay = 1e-2;
    std::uint64_t seed = 1;
    double div_start = 25.0;  // initial lr = peak / div_start
    double div_final = 1e4;   // final lr = peak / div_final
    int n_threads = 2;

    void validate() const {
        if (lambda < 1.0) throw std::invalid_argument("train: lambda must be >= 1");
        if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0)) {
            throw std::invalid_argument("train: warmup_fraction must be in (0,1)");
        }
        if (batch_size < 1 || epochs < 1 || n_threads < 1) {
            throw std::invalid_argument("train: batch_size, epochs, n_threads must be >= 1");
        }
        if (!(peak_lr > 0.0) || !(div_start >= 1.0) || !(div_final >= 1.0)) {
            throw std::invalid_argument("train: bad learning-rate parameters");
        }
    }
};

struct LossResult {
    double value = 0.0;
    bool skipped = false;  // no valid label entries; sample contributes nothing
    std::array<double, kMcsCount> grad{};
};

/// Squared error over valid label entries with multiplicative penalty on
/// overshoot (predicting above the observed success probability). With
/// lambda = 1 this is exactly the masked MSE, bit for bit.
inline LossResult loss_asl(std::span<const double> pred, const LabelVector& label, double lambda) {
    if (pred.size() != static_cast<std::size_t>(kMcsCount)) {
        throw std::invalid_argument("loss_asl: prediction must have 28 entries");
    }
    LossResult res;
    int n_valid = 0;
    for (int k = 0; k < kMcsCount; ++k) {
        if (label.valid(k)) ++n_valid;
    }
    if (n_valid == 0) {
        res.skipped = true;
        return res;
    }
    const double inv_n = 1.0 / n_valid;
    for (int k = 0; k < kMcsCount; ++k) {
        if (!label.valid(k)) continue;  // masked entries contribute exactly zero
        const double r = pred[static_cast<std::size_t>(k)] - label.prob(k);
        const double w = r > 0.0 ? lambda : 1.0;
        res.value += w * r * r * inv_n;
        res.grad[static_cast<std::size_t>(k)] = 2.0 * w * r * inv_n;
    }
    return res;
}

/// One-cycle schedule: cosine ramp from peak/div_start up to the peak over the
/// warmup fraction of steps, then cosine annealing down to peak/div_final.
inline double lr_schedule(std::int64_t step, std::int64_t total_steps, const TrainConfig& cfg) {
    cfg.validate();
    if (step < 0 || step >= total_steps) {
        throw std::invalid_argument("lr_schedule: step out of [0, total_steps)");
    }
    const double boundary = cfg.warmup_fraction * static_cast<double>(total_steps);
    const double lr_start = cfg.peak_lr / cfg.div_start;
    const double lr_final = cfg.peak_lr / cfg.div_final;
    const double s = static_cast<double>(step);
    if (s <= boundary) {
        const double t = boundary > 0.0 ? s / boundary : 1.0;
        return lr_start + (cfg.peak_lr - lr_start) * 0.5 * (1.0 - std::cos(M_PI * t));
    }
    const double denom = static_cast<double>(total_steps - 1) - boundary;
    const double t = denom > 0.0 ? std::min(1.0, (s - boundary) / denom) : 1.0;
    return lr_final + (cfg.peak_lr - lr_final) * 0.5 * (1.0 + std::cos(M_PI * t));
}

struct AdamWState {
    std::vector<double> m;
    std::vector<double> v;
    std::int64_t t = 0;

    static AdamWState init(std::size_t n) {
        AdamWState s;
        s.m.assign(n, 0.0);
        s.v.assign(n, 0.0);
        return s;
    }
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Decoupled weight decay followed by the bias-corrected Adam update. Entries
/// outside the decay mask (biases, norm parameters, positional embeddings)
/// are never decayed.
inline void adamw_step(ModelParams& params, std::span<const double> grad, AdamWState& state,
                       double lr, double weight_decay, const std::vector<std::uint8_t>& decay_mask) {
    if (grad.size() != params.flat.size() || state.m.size() != params.flat.size()) {
        throw std::invalid_argument("adamw_step: size mismatch");
    }
    for (std::size_t i = 0; i < grad.size(); ++i) {
        if (!std::isfinite(grad[i])) {
            throw NumericFailureError("adamw_step: non-finite gradient at parameter " +
                                      std::to_string(i));
        }
    }
    state.t += 1;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
    for (std::size_t i = 0; i < grad.size(); ++i) {
        double& p = params.flat[i];
        if (weight_decay != 0.0 && decay_mask[i]) p -= lr * weight_decay * p;
        double& m = state.m[i];
        double& v = state.v[i];
        m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * grad[i];
        v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * grad[i] * grad[i];
        p -= lr * (m / bc1) / (std::sqrt(v / bc2) + kAdamEps);
    }
    params.version += 1;
}

struct TrainLogRow {
    std::int64_t step = 0;
    int epoch = 0;
    double lr = 0.0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    bool is_epoch_summary = false;
};

struct TrainResult {
    ModelParams best_params;
    double best_val_loss = 0.0;
    int best_epoch = -1;
    std::int64_t total_steps = 0;
    std::vector<TrainLogRow> log;
};

inline void write_training_log_csv(const std::vector<TrainLogRow>& log, const std::string& path,
                                   const std::string& header_comment = "") {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot write training log: " + path);
    if (!header_comment.empty()) out << "# " << header_comment << "\n";
    out << "kind,step,epoch,lr,train_loss,val_loss\n";
    for (const auto& r : log) {
        out << (r.is_epoch_summary ? "epoch" : "step") << ',' << r.step << ',' << r.epoch << ','
            << csv::format_double(r.lr) << ',' << csv::format_double(r.train_loss) << ',';
        if (r.is_epoch_summary) out << csv::format_double(r.val_loss);
        out << '\n';
    }
}

namespace detail {

/// Normalizes a stored raw window into model input.
inline FeatureWindow sample_input(const Sample& s, const Normalizer& norm) {
    FeatureWindow w = s.raw_feature_window();
    for (int r = 0; r < w.rows; ++r) {
        for (int c = 0; c < kFeatureCount; ++c) w.at(r, c) = norm.apply_one(c, w.at(r, c));
    }
    return w;
}

struct ShardResult {
    std::vector<double> grad;
    double loss_sum = 0.0;
    int n_used = 0;
};

/// Forward/backward over a contiguous index range. Shards are merged in shard
/// order afterwards, so the reduction is deterministic for a fixed thread
/// count regardless of scheduling.
inline void run_shard(const ModelParams& params, const Dataset& ds, const Normalizer& norm,
                      std::span<const std::size_t> indices, double lambda, bool with_grad,
                      ShardResult& out) {
    ForwardCache cache;
    out.grad.assign(with_grad ? params.flat.size() : 0, 0.0);
    out.loss_sum = 0.0;
    out.n_used = 0;
    for (std::size_t idx : indices) {
        const Sample& s = ds.samples[idx];
        const FeatureWindow w = sample_input(s, norm);
        const auto probs = forward(params, w, cache);
        const LossResult lr = loss_asl(probs, s.label(), lambda);
        if (lr.skipped) continue;
        out.loss_sum += lr.value;
        out.n_used += 1;
        if (with_grad) backward_accumulate(params, cache, lr.grad, out.grad);
    }
}

inline std::pair<double, int> sharded_pass(const ModelParams& params, const Dataset& ds,
                                           const Normalizer& norm,
                                           std::span<const std::size_t> indices, double lambda,
                                           int n_threads, std::vector<double>* grad_out) {
    const int shards = std::max(1, std::min<int>(n_threads, static_cast<int>(indices.size())));
    std::vector<ShardResult> results(static_cast<std::size_t>(shards));
    std::vector<std::thread> workers;
    const std::size_t per = (indices.size() + shards - 1) / shards;
    for (int t = 0; t < shards; ++t) {
        const std::size_t lo = std::min(indices.size(), static_cast<std::size_t>(t) * per);
        const std::size_t hi = std::min(indices.size(), lo + per);
        workers.emplace_back(run_shard, std::cref(params), std::cref(ds), std::cref(norm),
                             indices.subspan(lo, hi - lo), lambda, grad_out != nullptr,
                             std::ref(results[static_cast<std::size_t>(t)]));
    }
    for (auto& w : workers) w.join();

    double loss_sum = 0.0;
    int n_used = 0;
    for (const auto& r : results) {
        loss_sum += r.loss_sum;
        n_used += r.n_used;
    }
    if (grad_out) {
        grad_out->assign(params.flat.size(), 0.0);
        for (const auto& r : results) {
            for (std::size_t i = 0; i < grad_out->size(); ++i) (*grad_out)[i] += r.grad[i];
        }
        if (n_used > 0) {
            const double inv = 1.0 / n_used;
            for (double& g : *grad_out) g *= inv;
        }
    }
    return {n_used > 0 ? loss_sum / n_used : 0.0, n_used};
}

inline void fisher_yates(std::vector<std::size_t>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(0, static_cast<int>(i - 1)));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace detail

/// Mini-batch AdamW with the one-cycle schedule; returns the checkpoint with
/// the lowest validation loss. Deterministic for a fixed config and seed.
inline TrainResult train(const Dataset& train_ds, const Dataset& val_ds, const Normalizer& norm,
                         const ModelConfig& model_cfg, const TrainConfig& cfg) {
    cfg.validate();
    model_cfg.validate();
    if (train_ds.samples.empty() || val_ds.samples.empty()) {
        throw std::invalid_argument("train: empty train or validation split");
    }
    const double lambda = cfg.loss == LossKind::mse ? 1.0 : cfg.lambda;

    ModelParams params = init_params(model_cfg, cfg.seed);
    AdamWState opt = AdamWState::init(params.flat.size());
    const std::vector<std::uint8_t> decay_mask = params.decay_mask();

    const std::int64_t batches_per_epoch =
        (static_cast<std::int64_t>(train_ds.samples.size()) + cfg.batch_size - 1) / cfg.batch_size;
    const std::int64_t total_steps = batches_per_epoch * cfg.epochs;

    std::vector<std::size_t> order(train_ds.samples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> val_order(val_ds.samples.size());
    std::iota(val_order.begin(), val_order.end(), 0);

    Rng shuffle_rng(mix_seed(cfg.seed, 0x5AFF1EULL));

    TrainResult result;
    result.total_steps = total_steps;
    result.best_val_loss = std::numeric_limits<double>::infinity();

    std::vector<double> grad;
    std::int64_t step = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        detail::fisher_yates(order, shuffle_rng);
        double epoch_loss_sum = 0.0;
        std::int64_t epoch_batches = 0;
        for (std::int64_t b = 0; b < batches_per_epoch; ++b, ++step) {
            const std::size_t lo = static_cast<std::size_t>(b) * cfg.batch_size;
            const std::size_t hi =
                std::min(order.size(), lo + static_cast<std::size_t>(cfg.batch_size));
            const double lr = lr_schedule(step, total_steps, cfg);
            const auto [batch_loss, n_used] = detail::sharded_pass(
                params, train_ds, norm, std::span<const std::size_t>(order).subspan(lo, hi - lo),
                lambda, cfg.n_threads, &grad);
            if (!std::isfinite(batch_loss)) {
                throw NumericFailureError("train: non-finite loss at step " + std::to_string(step));
            }
            if (n_used > 0) adamw_step(params, grad, opt, lr, cfg.weight_decay, decay_mask);
            epoch_loss_sum += batch_loss;
            epoch_batches += 1;
            result.log.push_back({step, epoch, lr, batch_loss, 0.0, false});
        }
        const auto [val_loss, val_used] =
            detail::sharded_pass(params, val_ds, norm, val_order, lambda, cfg.n_threads, nullptr);
        if (!std::isfinite(val_loss) || val_used == 0) {
            throw NumericFailureError("train: validation loss diverged at epoch " +
                                      std::to_string(epoch));
        }
        result.log.push_back(
            {step - 1, epoch, result.log.back().lr, epoch_loss_sum / epoch_batches, val_loss, true});
        if (val_loss < result.best_val_loss) {
            result.best_val_loss = val_loss;
            result.best_epoch = epoch;
            result.best_params = params;
        }
    }
    return result;
}

}  // namespace mcscast
