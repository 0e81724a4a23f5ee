#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "mcscast/binio.hpp"
#include "mcscast/error.hpp"
#include "mcscast/features.hpp"
#include "mcscast/rng.hpp"

namespace mcscast {

/// Encoder-only architecture: linear embedding with learnable positional
/// embeddings, pre-LN encoder layers with multi-head self-attention, mean
/// pooling over the sequence, and a GELU MLP decoder with logistic outputs.
struct ModelConfig {
    int seq_len = 40;
    int in_features = 12;
    int d_model = 8;
    int n_layers = 2;
    int n_heads = 2;
    int d_ff = 32;
    int out_dim = 28;
    int decoder_hidden = 32;

    void validate() const {
        if (seq_len < 1 || in_features < 1 || d_model < 1 || n_layers < 1 || n_heads < 1 ||
            d_ff < 1 || out_dim < 1 || decoder_hidden < 1) {
            throw std::invalid_argument("ModelConfig: all dimensions must be positive");
        }
        if (d_model % n_heads != 0) {
            throw std::invalid_argument("ModelConfig: d_model must be divisible by n_heads");
        }
    }

    bool operator==(const ModelConfig&) const = default;
};

inline std::int64_t param_count(const ModelConfig& c) {
    c.validate();
    const std::int64_t d = c.d_model;
    const std::int64_t embed = static_cast<std::int64_t>(c.in_features) * d + d;
    const std::int64_t pos = static_cast<std::int64_t>(c.seq_len) * d;
    const std::int64_t attn = 4 * (d * d + d);
    const std::int64_t norms = 2 * (2 * d);
    const std::int64_t ff = d * c.d_ff + c.d_ff + static_cast<std::int64_t>(c.d_ff) * d + d;
    const std::int64_t per_layer = attn + norms + ff;
    const std::int64_t final_norm = 2 * d;
    const std::int64_t decoder = d * c.decoder_hidden + c.decoder_hidden +
                                 static_cast<std::int64_t>(c.decoder_hidden) * c.out_dim + c.out_dim;
    return embed + pos + c.n_layers * per_layer + final_norm + decoder;
}

namespace detail {

struct TensorInfo {
    std::size_t offset = 0;
    int rows = 0;  // fan-in for weight matrices; 1 for vectors
    int cols = 0;
    bool is_weight = false;  // drawn from the fan-in uniform and weight-decayed
    bool is_gain = false;    // initialized to one
};

struct LayerOffsets {
    TensorInfo ln1_g, ln1_b, wq, bq, wk, bk, wv, bv, wo, bo;
    TensorInfo ln2_g, ln2_b, w1, b1, w2, b2;
};

struct ParamLayout {
    std::size_t total = 0;
    TensorInfo w_in, b_in, pos;
    std::vector<LayerOffsets> layers;
    TensorInfo fin_g, fin_b, dec_w1, dec_b1, dec_w2, dec_b2;

    /// Tensors in flat-vector order. Built on demand; the pointers alias this
    /// object, so the layout must outlive the returned list.
    std::vector<const TensorInfo*> ordered_tensors() const {
        std::vector<const TensorInfo*> out = {&w_in, &b_in, &pos};
        for (const auto& lay : layers) {
            for (const TensorInfo* t : {&lay.ln1_g, &lay.ln1_b, &lay.wq, &lay.bq, &lay.wk, &lay.bk,
                                        &lay.wv, &lay.bv, &lay.wo, &lay.bo, &lay.ln2_g, &lay.ln2_b,
                                        &lay.w1, &lay.b1, &lay.w2, &lay.b2}) {
                out.push_back(t);
            }
        }
        for (const TensorInfo* t : {&fin_g, &fin_b, &dec_w1, &dec_b1, &dec_w2, &dec_b2}) {
            out.push_back(t);
        }
        return out;
    }

    static ParamLayout make(const ModelConfig& c) {
        ParamLayout l;
        auto add = [&l](TensorInfo& t, int rows, int cols, bool weight, bool gain = false) {
            t.offset = l.total;
            t.rows = rows;
            t.cols = cols;
            t.is_weight = weight;
            t.is_gain = gain;
            l.total += static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols);
        };
        add(l.w_in, c.in_features, c.d_model, true);
        add(l.b_in, 1, c.d_model, false);
        add(l.pos, c.seq_len, c.d_model, false);
        l.layers.resize(static_cast<std::size_t>(c.n_layers));
        for (auto& lay : l.layers) {
            add(lay.ln1_g, 1, c.d_model, false, true);
            add(lay.ln1_b, 1, c.d_model, false);
            add(lay.wq, c.d_model, c.d_model, true);
            add(lay.bq, 1, c.d_model, false);
            add(lay.wk, c.d_model, c.d_model, true);
            add(lay.bk, 1, c.d_model, false);
            add(lay.wv, c.d_model, c.d_model, true);
            add(lay.bv, 1, c.d_model, false);
            add(lay.wo, c.d_model, c.d_model, true);
            add(lay.bo, 1, c.d_model, false);
            add(lay.ln2_g, 1, c.d_model, false, true);
            add(lay.ln2_b, 1, c.d_model, false);
            add(lay.w1, c.d_model, c.d_ff, true);
            add(lay.b1, 1, c.d_ff, false);
            add(lay.w2, c.d_ff, c.d_model, true);
            add(lay.b2, 1, c.d_model, false);
        }
        add(l.fin_g, 1, c.d_model, false, true);
        add(l.fin_b, 1, c.d_model, false);
        add(l.dec_w1, c.d_model, c.decoder_hidden, true);
        add(l.dec_b1, 1, c.decoder_hidden, false);
        add(l.dec_w2, c.decoder_hidden, c.out_dim, true);
        add(l.dec_b2, 1, c.out_dim, false);
        return l;
    }
};

}  // namespace detail

struct ModelParams {
    ModelConfig config;
    detail::ParamLayout layout;
    std::vector<double> flat;
    std::uint64_t version = 0;  // bumped by optimizer updates; guards cache staleness

    const double* tensor(const detail::TensorInfo& t) const { return flat.data() + t.offset; }
    double* tensor(const detail::TensorInfo& t) { return flat.data() + t.offset; }

    /// True for entries that receive weight decay (weight matrices only).
    std::vector<std::uint8_t> decay_mask() const {
        std::vector<std::uint8_t> mask(flat.size(), 0);
        for (const auto* t : layout.ordered_tensors()) {
            if (!t->is_weight) continue;
            for (std::size_t i = 0; i < static_cast<std::size_t>(t->rows) * t->cols; ++i) {
                mask[t->offset + i] = 1;
            }
        }
        return mask;
    }
};

/// Deterministic initialization: fan-in uniform for weight matrices, ones for
/// norm gains, zeros for biases and positional embeddings.
inline ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    ModelParams p;
    p.config = config;
    p.layout = detail::ParamLayout::make(config);
    p.flat.assign(p.layout.total, 0.0);
    Rng rng(seed);
    for (const auto* t : p.layout.ordered_tensors()) {
        double* data = p.flat.data() + t->offset;
        const std::size_t n = static_cast<std::size_t>(t->rows) * t->cols;
        if (t->is_weight) {
            const double bound = 1.0 / std::sqrt(static_cast<double>(t->rows));
            for (std::size_t i = 0; i < n; ++i) data[i] = rng.uniform(-bound, bound);
        } else if (t->is_gain) {
            for (std::size_t i = 0; i < n; ++i) data[i] = 1.0;
        }
    }
    return p;
}

/// All-zero parameters (logistic outputs become exactly 0.5); test fixture.
inline ModelParams zero_params(const ModelConfig& config) {
    config.validate();
    ModelParams p;
    p.config = config;
    p.layout = detail::ParamLayout::make(config);
    p.flat.assign(p.layout.total, 0.0);
    return p;
}

namespace detail {

inline constexpr double kLayerNormEps = 1e-5;

inline double gelu(double x) { return 0.5 * x * (1.0 + std::erf(x * M_SQRT1_2)); }

inline double gelu_grad(double x) {
    return 0.5 * (1.0 + std::erf(x * M_SQRT1_2)) +
           x * std::exp(-0.5 * x * x) / std::sqrt(2.0 * M_PI);
}

/// y[r x n] = x[r x m] * w[m x n] + b[n]
inline void linear_forward(const double* x, int r, int m, const double* w, const double* b, int n,
                           double* y) {
    for (int i = 0; i < r; ++i) {
        double* yi = y + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) yi[j] = b ? b[j] : 0.0;
        const double* xi = x + static_cast<std::size_t>(i) * m;
        for (int k = 0; k < m; ++k) {
            const double xv = xi[k];
            const double* wk = w + static_cast<std::size_t>(k) * n;
            for (int j = 0; j < n; ++j) yi[j] += xv * wk[j];
        }
    }
}

/// dw += x^T dy, db += colsum(dy), dx = dy w^T (dx may be null).
inline void linear_backward(const double* x, int r, int m, const double* w, int n,
                            const double* dy, double* dw, double* db, double* dx) {
    for (int i = 0; i < r; ++i) {
        const double* xi = x + static_cast<std::size_t>(i) * m;
        const double* dyi = dy + static_cast<std::size_t>(i) * n;
        for (int k = 0; k < m; ++k) {
            double* dwk = dw + static_cast<std::size_t>(k) * n;
            const double xv = xi[k];
            for (int j = 0; j < n; ++j) dwk[j] += xv * dyi[j];
        }
        if (db) {
            for (int j = 0; j < n; ++j) db[j] += dyi[j];
        }
        if (dx) {
            double* dxi = dx + static_cast<std::size_t>(i) * m;
            for (int k = 0; k < m; ++k) {
                const double* wk = w + static_cast<std::size_t>(k) * n;
                double acc = 0.0;
                for (int j = 0; j < n; ++j) acc += dyi[j] * wk[j];
                dxi[k] = acc;
            }
        }
    }
}

inline void layer_norm_forward(const double* x, int rows, int d, const double* gain,
                               const double* bias, double* hat, double* inv_sigma, double* y) {
    for (int i = 0; i < rows; ++i) {
        const double* xi = x + static_cast<std::size_t>(i) * d;
        double mean = 0.0;
        for (int j = 0; j < d; ++j) mean += xi[j];
        mean /= d;
        double var = 0.0;
        for (int j = 0; j < d; ++j) {
            const double c = xi[j] - mean;
            var += c * c;
        }
        var /= d;
        const double is = 1.0 / std::sqrt(var + kLayerNormEps);
        inv_sigma[i] = is;
        double* hi = hat + static_cast<std::size_t>(i) * d;
        double* yi = y + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) {
            hi[j] = (xi[j] - mean) * is;
            yi[j] = gain[j] * hi[j] + bias[j];
        }
    }
}

/// dx is ACCUMULATED (+=) so residual gradients can flow through directly.
inline void layer_norm_backward(const double* hat, const double* inv_sigma, int rows, int d,
                                const double* gain, const double* dy, double* dgain, double* dbias,
                                double* dx) {
    for (int i = 0; i < rows; ++i) {
        const double* hi = hat + static_cast<std::size_t>(i) * d;
        const double* dyi = dy + static_cast<std::size_t>(i) * d;
        double* dxi = dx + static_cast<std::size_t>(i) * d;
        double mean_dhat = 0.0;
        double mean_dhat_hat = 0.0;
        for (int j = 0; j < d; ++j) {
            const double dh = dyi[j] * gain[j];
            mean_dhat += dh;
            mean_dhat_hat += dh * hi[j];
            dgain[j] += dyi[j] * hi[j];
            dbias[j] += dyi[j];
        }
        mean_dhat /= d;
        mean_dhat_hat /= d;
        const double is = inv_sigma[i];
        for (int j = 0; j < d; ++j) {
            const double dh = dyi[j] * gain[j];
            dxi[j] += is * (dh - mean_dhat - hi[j] * mean_dhat_hat);
        }
    }
}

struct LayerCache {
    std::vector<double> attn_in, ln1_hat, ln1_inv_sigma, ln1_out;
    std::vector<double> q, k, v, attn_w, ctx;
    std::vector<double> ff_in, ln2_hat, ln2_inv_sigma, ln2_out, ff_pre, ff_act;
};

}  // namespace detail

/// Activations retained by forward() for the matching backward() call.
struct ForwardCache {
    std::uint64_t params_version = ~0ULL;
    bool filled = false;
    std::vector<double> input;
    std::vector<detail::LayerCache> layers;
    std::vector<double> final_in, fin_hat, fin_inv_sigma, fin_out;
    std::vector<double> pooled, dec_pre, dec_act, logits, probs;
};

/// Success probabilities for all 28 MCS indices, each strictly inside (0,1).
inline std::vector<double> forward(const ModelParams& params, const FeatureWindow& window,
                                   ForwardCache& cache) {
    const ModelConfig& c = params.config;
    if (window.rows != c.seq_len ||
        window.data.size() != static_cast<std::size_t>(c.seq_len) * c.in_features) {
        throw std::invalid_argument("forward: window shape mismatch");
    }
    const auto& L = params.layout;
    const int seq = c.seq_len, d = c.d_model, heads = c.n_heads, dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::size_t sd = static_cast<std::size_t>(seq) * d;

    cache.params_version = params.version;
    cache.filled = true;
    cache.input = window.data;
    cache.layers.resize(static_cast<std::size_t>(c.n_layers));

    // Embedding plus positional offsets.
    std::vector<double> x(sd);
    detail::linear_forward(cache.input.data(), seq, c.in_features, params.tensor(L.w_in),
                           params.tensor(L.b_in), d, x.data());
    const double* pos = params.tensor(L.pos);
    for (std::size_t i = 0; i < sd; ++i) x[i] += pos[i];

    for (int l = 0; l < c.n_layers; ++l) {
        auto& lc = cache.layers[static_cast<std::size_t>(l)];
        const auto& lo = L.layers[static_cast<std::size_t>(l)];

        lc.attn_in = x;
        lc.ln1_hat.resize(sd);
        lc.ln1_inv_sigma.resize(static_cast<std::size_t>(seq));
        lc.ln1_out.resize(sd);
        detail::layer_norm_forward(lc.attn_in.data(), seq, d, params.tensor(lo.ln1_g),
                                   params.tensor(lo.ln1_b), lc.ln1_hat.data(),
                                   lc.ln1_inv_sigma.data(), lc.ln1_out.data());

        lc.q.resize(sd);
        lc.k.resize(sd);
        lc.v.resize(sd);
        detail::linear_forward(lc.ln1_out.data(), seq, d, params.tensor(lo.wq),
                               params.tensor(lo.bq), d, lc.q.data());
        detail::linear_forward(lc.ln1_out.data(), seq, d, params.tensor(lo.wk),
                               params.tensor(lo.bk), d, lc.k.data());
        detail::linear_forward(lc.ln1_out.data(), seq, d, params.tensor(lo.wv),
                               params.tensor(lo.bv), d, lc.v.data());

        lc.attn_w.assign(static_cast<std::size_t>(heads) * seq * seq, 0.0);
        lc.ctx.assign(sd, 0.0);
        for (int h = 0; h < heads; ++h) {
            double* aw = lc.attn_w.data() + static_cast<std::size_t>(h) * seq * seq;
            const int off = h * dh;
            for (int i = 0; i < seq; ++i) {
                double* row = aw + static_cast<std::size_t>(i) * seq;
                const double* qi = lc.q.data() + static_cast<std::size_t>(i) * d + off;
                double row_max = -1e300;
                for (int j = 0; j < seq; ++j) {
                    const double* kj = lc.k.data() + static_cast<std::size_t>(j) * d + off;
                    double s = 0.0;
                    for (int cdim = 0; cdim < dh; ++cdim) s += qi[cdim] * kj[cdim];
                    row[j] = s * scale;
                    row_max = std::max(row_max, row[j]);
                }
                double sum = 0.0;
                for (int j = 0; j < seq; ++j) {
                    row[j] = std::exp(row[j] - row_max);
                    sum += row[j];
                }
                for (int j = 0; j < seq; ++j) row[j] /= sum;
                double* ci = lc.ctx.data() + static_cast<std::size_t>(i) * d + off;
                for (int j = 0; j < seq; ++j) {
                    const double a = row[j];
                    const double* vj = lc.v.data() + static_cast<std::size_t>(j) * d + off;
                    for (int cdim = 0; cdim < dh; ++cdim) ci[cdim] += a * vj[cdim];
                }
            }
        }

        std::vector<double> attn_out(sd);
        detail::linear_forward(lc.ctx.data(), seq, d, params.tensor(lo.wo), params.tensor(lo.bo),
                               d, attn_out.data());
        for (std::size_t i = 0; i < sd; ++i) x[i] = lc.attn_in[i] + attn_out[i];

        lc.ff_in = x;
        lc.ln2_hat.resize(sd);
        lc.ln2_inv_sigma.resize(static_cast<std::size_t>(seq));
        lc.ln2_out.resize(sd);
        detail::layer_norm_forward(lc.ff_in.data(), seq, d, params.tensor(lo.ln2_g),
                                   params.tensor(lo.ln2_b), lc.ln2_hat.data(),
                                   lc.ln2_inv_sigma.data(), lc.ln2_out.data());

        lc.ff_pre.resize(static_cast<std::size_t>(seq) * c.d_ff);
        detail::linear_forward(lc.ln2_out.data(), seq, d, params.tensor(lo.w1),
                               params.tensor(lo.b1), c.d_ff, lc.ff_pre.data());
        lc.ff_act.resize(lc.ff_pre.size());
        for (std::size_t i = 0; i < lc.ff_pre.size(); ++i) lc.ff_act[i] = detail::gelu(lc.ff_pre[i]);

        std::vector<double> ff_out(sd);
        detail::linear_forward(lc.ff_act.data(), seq, c.d_ff, params.tensor(lo.w2),
                               params.tensor(lo.b2), d, ff_out.data());
        for (std::size_t i = 0; i < sd; ++i) x[i] = lc.ff_in[i] + ff_out[i];
    }

    cache.final_in = x;
    cache.fin_hat.resize(sd);
    cache.fin_inv_sigma.resize(static_cast<std::size_t>(seq));
    cache.fin_out.resize(sd);
    detail::layer_norm_forward(cache.final_in.data(), seq, d, params.tensor(L.fin_g),
                               params.tensor(L.fin_b), cache.fin_hat.data(),
                               cache.fin_inv_sigma.data(), cache.fin_out.data());

    cache.pooled.assign(static_cast<std::size_t>(d), 0.0);
    for (int i = 0; i < seq; ++i) {
        const double* row = cache.fin_out.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < d; ++j) cache.pooled[static_cast<std::size_t>(j)] += row[j];
    }
    for (int j = 0; j < d; ++j) cache.pooled[static_cast<std::size_t>(j)] /= seq;

    cache.dec_pre.resize(static_cast<std::size_t>(c.decoder_hidden));
    detail::linear_forward(cache.pooled.data(), 1, d, params.tensor(L.dec_w1),
                           params.tensor(L.dec_b1), c.decoder_hidden, cache.dec_pre.data());
    cache.dec_act.resize(cache.dec_pre.size());
    for (std::size_t i = 0; i < cache.dec_pre.size(); ++i) {
        cache.dec_act[i] = detail::gelu(cache.dec_pre[i]);
    }

    cache.logits.resize(static_cast<std::size_t>(c.out_dim));
    detail::linear_forward(cache.dec_act.data(), 1, c.decoder_hidden, params.tensor(L.dec_w2),
                           params.tensor(L.dec_b2), c.out_dim, cache.logits.data());
    cache.probs.resize(cache.logits.size());
    for (std::size_t i = 0; i < cache.logits.size(); ++i) {
        cache.probs[i] = 1.0 / (1.0 + std::exp(-cache.logits[i]));
    }
    return cache.probs;
}

inline std::vector<double> forward(const ModelParams& params, const FeatureWindow& window) {
    thread_local ForwardCache scratch;
    return forward(params, window, scratch);
}

/// Exact reverse-mode gradient of the outputs composed with d(loss)/d(probs),
/// accumulated into `grad` (sized like params.flat).
inline void backward_accumulate(const ModelParams& params, const ForwardCache& cache,
                                std::span<const double> dprobs, std::vector<double>& grad) {
    const ModelConfig& c = params.config;
    if (!cache.filled || cache.params_version != params.version) {
        throw StaleCacheError("backward: cache does not match current params");
    }
    if (dprobs.size() != static_cast<std::size_t>(c.out_dim)) {
        throw std::invalid_argument("backward: output gradient size mismatch");
    }
    if (grad.size() != params.flat.size()) grad.assign(params.flat.size(), 0.0);

    const auto& L = params.layout;
    const int seq = c.seq_len, d = c.d_model, heads = c.n_heads, dh = d / heads;
    const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
    const std::size_t sd = static_cast<std::size_t>(seq) * d;

    // Decoder head.
    std::vector<double> dlogits(static_cast<std::size_t>(c.out_dim));
    for (int i = 0; i < c.out_dim; ++i) {
        const double p = cache.probs[static_cast<std::size_t>(i)];
        dlogits[static_cast<std::size_t>(i)] = dprobs[static_cast<std::size_t>(i)] * p * (1.0 - p);
    }
    std::vector<double> ddec_act(static_cast<std::size_t>(c.decoder_hidden));
    detail::linear_backward(cache.dec_act.data(), 1, c.decoder_hidden, params.tensor(L.dec_w2),
                            c.out_dim, dlogits.data(), grad.data() + L.dec_w2.offset,
                            grad.data() + L.dec_b2.offset, ddec_act.data());
    std::vector<double> ddec_pre(ddec_act.size());
    for (std::size_t i = 0; i < ddec_act.size(); ++i) {
        ddec_pre[i] = ddec_act[i] * detail::gelu_grad(cache.dec_pre[i]);
    }
    std::vector<double> dpool(static_cast<std::size_t>(d));
    detail::linear_backward(cache.pooled.data(), 1, d, params.tensor(L.dec_w1), c.decoder_hidden,
                            ddec_pre.data(), grad.data() + L.dec_w1.offset,
                            grad.data() + L.dec_b1.offset, dpool.data());

    // Mean pooling spreads the gradient uniformly over the sequence.
    std::vector<double> dfin_out(sd);
    for (int i = 0; i < seq; ++i) {
        for (int j = 0; j < d; ++j) {
            dfin_out[static_cast<std::size_t>(i) * d + j] = dpool[static_cast<std::size_t>(j)] / seq;
        }
    }
    std::vector<double> dx(sd, 0.0);
    detail::layer_norm_backward(cache.fin_hat.data(), cache.fin_inv_sigma.data(), seq, d,
                                params.tensor(L.fin_g), dfin_out.data(),
                                grad.data() + L.fin_g.offset, grad.data() + L.fin_b.offset,
                                dx.data());

    std::vector<double> dln_out(sd), dff_act(static_cast<std::size_t>(seq) * c.d_ff),
        dff_pre(static_cast<std::size_t>(seq) * c.d_ff), dctx(sd), dq(sd), dk(sd), dv(sd),
        dblock(sd);
    for (int l = c.n_layers - 1; l >= 0; --l) {
        const auto& lc = cache.layers[static_cast<std::size_t>(l)];
        const auto& lo = L.layers[static_cast<std::size_t>(l)];

        // Feed-forward block: x_out = ff_in + W2(gelu(W1 ln2(ff_in)+b1))+b2.
        detail::linear_backward(lc.ff_act.data(), seq, c.d_ff, params.tensor(lo.w2), d, dx.data(),
                                grad.data() + lo.w2.offset, grad.data() + lo.b2.offset,
                                dff_act.data());
        for (std::size_t i = 0; i < dff_act.size(); ++i) {
            dff_pre[i] = dff_act[i] * detail::gelu_grad(lc.ff_pre[i]);
        }
        detail::linear_backward(lc.ln2_out.data(), seq, d, params.tensor(lo.w1), c.d_ff,
                                dff_pre.data(), grad.data() + lo.w1.offset,
                                grad.data() + lo.b1.offset, dln_out.data());
        // Residual: dx already carries d(x_out)/d(ff_in); LN path adds to it.
        detail::layer_norm_backward(lc.ln2_hat.data(), lc.ln2_inv_sigma.data(), seq, d,
                                    params.tensor(lo.ln2_g), dln_out.data(),
                                    grad.data() + lo.ln2_g.offset, grad.data() + lo.ln2_b.offset,
                                    dx.data());

        // Attention block: x_mid = attn_in + Wo(ctx)+bo.
        detail::linear_backward(lc.ctx.data(), seq, d, params.tensor(lo.wo), d, dx.data(),
                                grad.data() + lo.wo.offset, grad.data() + lo.bo.offset,
                                dctx.data());
        std::fill(dq.begin(), dq.end(), 0.0);
        std::fill(dk.begin(), dk.end(), 0.0);
        std::fill(dv.begin(), dv.end(), 0.0);
        for (int h = 0; h < heads; ++h) {
            const double* aw = lc.attn_w.data() + static_cast<std::size_t>(h) * seq * seq;
            const int off = h * dh;
            for (int i = 0; i < seq; ++i) {
                const double* arow = aw + static_cast<std::size_t>(i) * seq;
                const double* dci = dctx.data() + static_cast<std::size_t>(i) * d + off;
                // dA and softmax Jacobian, row by row.
                double dot = 0.0;
                thread_local std::vector<double> da_row;
                da_row.resize(static_cast<std::size_t>(seq));
                for (int j = 0; j < seq; ++j) {
                    const double* vj = lc.v.data() + static_cast<std::size_t>(j) * d + off;
                    double da = 0.0;
                    for (int cdim = 0; cdim < dh; ++cdim) da += dci[cdim] * vj[cdim];
                    da_row[static_cast<std::size_t>(j)] = da;
                    dot += da * arow[j];
                    double* dvj = dv.data() + static_cast<std::size_t>(j) * d + off;
                    const double a = arow[j];
                    for (int cdim = 0; cdim < dh; ++cdim) dvj[cdim] += a * dci[cdim];
                }
                const double* qi = lc.q.data() + static_cast<std::size_t>(i) * d + off;
                double* dqi = dq.data() + static_cast<std::size_t>(i) * d + off;
                for (int j = 0; j < seq; ++j) {
                    const double ds = arow[j] * (da_row[static_cast<std::size_t>(j)] - dot) * scale;
                    const double* kj = lc.k.data() + static_cast<std::size_t>(j) * d + off;
                    double* dkj = dk.data() + static_cast<std::size_t>(j) * d + off;
                    for (int cdim = 0; cdim < dh; ++cdim) {
                        dqi[cdim] += ds * kj[cdim];
                        dkj[cdim] += ds * qi[cdim];
                    }
                }
            }
        }
        // Back through the three projections into the shared LN output.
        detail::linear_backward(lc.ln1_out.data(), seq, d, params.tensor(lo.wq), d, dq.data(),
                                grad.data() + lo.wq.offset, grad.data() + lo.bq.offset,
                                dln_out.data());
        detail::linear_backward(lc.ln1_out.data(), seq, d, params.tensor(lo.wk), d, dk.data(),
                                grad.data() + lo.wk.offset, grad.data() + lo.bk.offset,
                                dblock.data());
        for (std::size_t i = 0; i < sd; ++i) dln_out[i] += dblock[i];
        detail::linear_backward(lc.ln1_out.data(), seq, d, params.tensor(lo.wv), d, dv.data(),
                                grad.data() + lo.wv.offset, grad.data() + lo.bv.offset,
                                dblock.data());
        for (std::size_t i = 0; i < sd; ++i) dln_out[i] += dblock[i];
        detail::layer_norm_backward(lc.ln1_hat.data(), lc.ln1_inv_sigma.data(), seq, d,
                                    params.tensor(lo.ln1_g), dln_out.data(),
                                    grad.data() + lo.ln1_g.offset, grad.data() + lo.ln1_b.offset,
                                    dx.data());
    }

    // Embedding: x0 = input W_in + b_in + pos.
    double* dpos = grad.data() + L.pos.offset;
    for (std::size_t i = 0; i < sd; ++i) dpos[i] += dx[i];
    detail::linear_backward(cache.input.data(), seq, c.in_features, params.tensor(L.w_in), d,
                            dx.data(), grad.data() + L.w_in.offset, grad.data() + L.b_in.offset,
                            nullptr);
}

inline std::vector<double> backward(const ModelParams& params, const ForwardCache& cache,
                                    std::span<const double> dprobs) {
    std::vector<double> grad(params.flat.size(), 0.0);
    backward_accumulate(params, cache, dprobs, grad);
    return grad;
}

// Checkpoint file: magic "MCKP", u32 version, u64 config fingerprint, eight
// i32 architecture fields, u64 parameter count, then the flat vector as
// little-endian doubles. The Normalizer sidecar lives next to it.
namespace detail {
inline constexpr char kCheckpointMagic[4] = {'M', 'C', 'K', 'P'};
inline constexpr std::uint32_t kCheckpointVersion = 1;
}  // namespace detail

inline void save_checkpoint(const ModelParams& params, const std::string& path,
                            std::uint64_t config_fingerprint = 0) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw MissingArtifactError("cannot write checkpoint: " + path);
    out.write(detail::kCheckpointMagic, 4);
    detail::write_pod(out, detail::kCheckpointVersion);
    detail::write_pod(out, config_fingerprint);
    const ModelConfig& c = params.config;
    for (int v : {c.seq_len, c.in_features, c.d_model, c.n_layers, c.n_heads, c.d_ff, c.out_dim,
                  c.decoder_hidden}) {
        detail::write_pod(out, static_cast<std::int32_t>(v));
    }
    detail::write_pod(out, static_cast<std::uint64_t>(params.flat.size()));
    out.write(reinterpret_cast<const char*>(params.flat.data()),
              static_cast<std::streamsize>(params.flat.size() * sizeof(double)));
    if (!out) throw MissingArtifactError("checkpoint write failed: " + path);
}

inline ModelParams load_checkpoint(const std::string& path,
                                   std::uint64_t* config_fingerprint = nullptr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw MissingArtifactError("cannot open checkpoint: " + path);
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, detail::kCheckpointMagic, 4) != 0) {
        throw std::invalid_argument("not a checkpoint file: " + path);
    }
    std::uint32_t version = 0;
    std::uint64_t fingerprint = 0;
    detail::read_pod(in, version);
    detail::read_pod(in, fingerprint);
    if (version != detail::kCheckpointVersion) {
        throw std::invalid_argument("unsupported checkpoint version in " + path);
    }
    ModelConfig c;
    for (int* v : {&c.seq_len, &c.in_features, &c.d_model, &c.n_layers, &c.n_heads, &c.d_ff,
                   &c.out_dim, &c.decoder_hidden}) {
        std::int32_t raw = 0;
        detail::read_pod(in, raw);
        *v = raw;
    }
    std::uint64_t n = 0;
    detail::read_pod(in, n);
    ModelParams p = zero_params(c);
    if (n != p.flat.size()) throw std::invalid_argument("checkpoint size mismatch: " + path);
    in.read(reinterpret_cast<char*>(p.flat.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (!in) throw std::invalid_argument("checkpoint truncated: " + path);
    if (config_fingerprint) *config_fingerprint = fingerprint;
    return p;
}

}  // namespace mcscast
