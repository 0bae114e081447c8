// Toy encoder-decoder translation model with exact reverse-mode gradients.
//
// Pre-norm transformer, single attention head, RMS normalization, ReLU
// feed-forward, learned positional embeddings, no biases except the output
// projection. All parameters live in one flat double vector so the optimizer,
// checkpointing, and finite-difference checks can treat them uniformly.
//
// Teacher-forced forward: for a target sequence y_0..y_{n-1} the decoder is
// fed <bos>, y_0, .., y_{n-2} and emits one logit vector per position, so
// position i depends only on the source and on target tokens before i.
#pragma once

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "nrmt/corpus.hpp"
#include "nrmt/prob.hpp"
#include "nrmt/rng.hpp"

namespace nrmt {

struct ModelConfig {
    int src_vocab = 0;
    int tgt_vocab = 0;
    int dim = 64;
    int ff_dim = 128;
    int enc_layers = 2;
    int dec_layers = 2;
    int max_len = 64;

    void validate() const {
        if (src_vocab < Vocab::num_reserved || tgt_vocab < Vocab::num_reserved)
            throw std::invalid_argument("model: vocab sizes must include reserved ids");
        if (dim < 1 || ff_dim < 1 || enc_layers < 1 || dec_layers < 1 || max_len < 2)
            throw std::invalid_argument("model: bad shape");
    }

    bool operator==(const ModelConfig&) const = default;
};

namespace detail {

constexpr double rms_eps = 1e-6;

struct AttnOffsets {
    std::size_t wq = 0, wk = 0, wv = 0, wo = 0;
};

struct EncLayerOffsets {
    AttnOffsets attn;
    std::size_t norm1 = 0, w1 = 0, w2 = 0, norm2 = 0;
};

struct DecLayerOffsets {
    AttnOffsets self_attn;
    std::size_t norm1 = 0;
    AttnOffsets cross_attn;
    std::size_t norm2 = 0, w1 = 0, w2 = 0, norm3 = 0;
};

struct ParamLayout {
    std::size_t src_embed = 0, tgt_embed = 0, src_pos = 0, tgt_pos = 0;
    std::vector<EncLayerOffsets> enc;
    std::vector<DecLayerOffsets> dec;
    std::size_t enc_final_norm = 0, dec_final_norm = 0, out_w = 0, out_b = 0;
    std::size_t total = 0;
};

inline ParamLayout make_layout(const ModelConfig& cfg) {
    ParamLayout lay;
    std::size_t off = 0;
    auto take = [&](std::size_t n) {
        std::size_t at = off;
        off += n;
        return at;
    };
    const std::size_t d = static_cast<std::size_t>(cfg.dim);
    const std::size_t ff = static_cast<std::size_t>(cfg.ff_dim);
    lay.src_embed = take(static_cast<std::size_t>(cfg.src_vocab) * d);
    lay.tgt_embed = take(static_cast<std::size_t>(cfg.tgt_vocab) * d);
    lay.src_pos = take(static_cast<std::size_t>(cfg.max_len) * d);
    lay.tgt_pos = take(static_cast<std::size_t>(cfg.max_len) * d);
    auto take_attn = [&] {
        AttnOffsets a;
        a.wq = take(d * d);
        a.wk = take(d * d);
        a.wv = take(d * d);
        a.wo = take(d * d);
        return a;
    };
    for (int l = 0; l < cfg.enc_layers; ++l) {
        EncLayerOffsets e;
        e.norm1 = take(d);
        e.attn = take_attn();
        e.norm2 = take(d);
        e.w1 = take(ff * d);
        e.w2 = take(d * ff);
        lay.enc.push_back(e);
    }
    lay.enc_final_norm = take(d);
    for (int l = 0; l < cfg.dec_layers; ++l) {
        DecLayerOffsets dl;
        dl.norm1 = take(d);
        dl.self_attn = take_attn();
        dl.norm2 = take(d);
        dl.cross_attn = take_attn();
        dl.norm3 = take(d);
        dl.w1 = take(ff * d);
        dl.w2 = take(d * ff);
        lay.dec.push_back(dl);
    }
    lay.dec_final_norm = take(d);
    lay.out_w = take(static_cast<std::size_t>(cfg.tgt_vocab) * d);
    lay.out_b = take(static_cast<std::size_t>(cfg.tgt_vocab));
    lay.total = off;
    return lay;
}

inline void matvec(const double* w, const double* x, double* y, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double* wr = w + static_cast<std::size_t>(r) * cols;
        double s = 0.0;
        for (int c = 0; c < cols; ++c) s += wr[c] * x[c];
        y[r] = s;
    }
}

// dx += W^T dy
inline void matvec_t_acc(const double* w, const double* dy, double* dx, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double g = dy[r];
        const double* wr = w + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) dx[c] += g * wr[c];
    }
}

// dW += dy x^T
inline void outer_acc(double* dw, const double* dy, const double* x, int rows, int cols) {
    for (int r = 0; r < rows; ++r) {
        const double g = dy[r];
        double* wr = dw + static_cast<std::size_t>(r) * cols;
        for (int c = 0; c < cols; ++c) wr[c] += g * x[c];
    }
}

}  // namespace detail

struct ModelParams {
    ModelConfig cfg;
    detail::ParamLayout layout;
    std::vector<double> w;
    std::uint64_t src_vocab_hash = 0;
    std::uint64_t tgt_vocab_hash = 0;

    double* at(std::size_t off) { return w.data() + off; }
    const double* at(std::size_t off) const { return w.data() + off; }
};

inline ModelParams init_model(const ModelConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    ModelParams p;
    p.cfg = cfg;
    p.layout = detail::make_layout(cfg);
    p.w.resize(p.layout.total);
    auto eng = make_engine(derive_seed(seed, "model.init"));
    std::uniform_real_distribution<double> dist(-0.08, 0.08);
    for (double& x : p.w) x = dist(eng);
    auto ones = [&](std::size_t off) {
        for (int i = 0; i < cfg.dim; ++i) p.w[off + static_cast<std::size_t>(i)] = 1.0;
    };
    for (const auto& e : p.layout.enc) {
        ones(e.norm1);
        ones(e.norm2);
    }
    for (const auto& d : p.layout.dec) {
        ones(d.norm1);
        ones(d.norm2);
        ones(d.norm3);
    }
    ones(p.layout.enc_final_norm);
    ones(p.layout.dec_final_norm);
    for (int v = 0; v < cfg.tgt_vocab; ++v) p.w[p.layout.out_b + static_cast<std::size_t>(v)] = 0.0;
    return p;
}

// ---------------------------------------------------------------------------
// Forward / backward

namespace detail {

struct SubCache {
    std::vector<double> x_in;  // stream entering the sublayer, [n][d]
    std::vector<double> n;     // normalized, [n][d]
    std::vector<double> rms;   // [n]
};

struct AttnCache {
    std::vector<double> q, k, v;  // [n][d] (k, v sized to the attended side)
    std::vector<double> att;      // [n][m]
    std::vector<double> ctx;      // [n][d]
};

struct EncLayerCache {
    SubCache a, f;
    AttnCache attn;
    std::vector<double> h;  // [n][ff], post-ReLU
};

struct DecLayerCache {
    SubCache sa, ca, f;
    AttnCache self_attn, cross_attn;
    std::vector<double> h;
};

inline void rmsnorm_forward(const double* x, const double* g, double* y, double* rms_out, int n,
                            int d) {
    for (int i = 0; i < n; ++i) {
        const double* xi = x + static_cast<std::size_t>(i) * d;
        double ss = 0.0;
        for (int c = 0; c < d; ++c) ss += xi[c] * xi[c];
        double r = std::sqrt(ss / d + rms_eps);
        rms_out[i] = r;
        double* yi = y + static_cast<std::size_t>(i) * d;
        for (int c = 0; c < d; ++c) yi[c] = g[c] * xi[c] / r;
    }
}

inline void rmsnorm_backward(const double* x, const double* g, const double* rms, const double* dy,
                             double* dx_acc, double* dg_acc, int n, int d) {
    for (int i = 0; i < n; ++i) {
        const double* xi = x + static_cast<std::size_t>(i) * d;
        const double* dyi = dy + static_cast<std::size_t>(i) * d;
        double* dxi = dx_acc + static_cast<std::size_t>(i) * d;
        const double r = rms[i];
        double dot = 0.0;
        for (int c = 0; c < d; ++c) dot += dyi[c] * g[c] * xi[c];
        const double scale = dot / (d * r * r * r);
        for (int c = 0; c < d; ++c) {
            dg_acc[c] += dyi[c] * xi[c] / r;
            dxi[c] += g[c] * dyi[c] / r - xi[c] * scale;
        }
    }
}

// Attention over cached q/k/v. n query positions, m key positions;
// causal limits position i to keys j <= i (requires n == m).
inline void attention_forward(AttnCache& c, int n, int m, int d, bool causal) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    c.att.assign(static_cast<std::size_t>(n) * m, 0.0);
    c.ctx.assign(static_cast<std::size_t>(n) * d, 0.0);
    std::vector<double> row(static_cast<std::size_t>(m));
    for (int i = 0; i < n; ++i) {
        const int lim = causal ? i + 1 : m;
        const double* qi = c.q.data() + static_cast<std::size_t>(i) * d;
        double mx = -1e300;
        for (int j = 0; j < lim; ++j) {
            const double* kj = c.k.data() + static_cast<std::size_t>(j) * d;
            double s = 0.0;
            for (int t = 0; t < d; ++t) s += qi[t] * kj[t];
            row[static_cast<std::size_t>(j)] = s * scale;
            if (row[static_cast<std::size_t>(j)] > mx) mx = row[static_cast<std::size_t>(j)];
        }
        double sum = 0.0;
        for (int j = 0; j < lim; ++j) {
            row[static_cast<std::size_t>(j)] = std::exp(row[static_cast<std::size_t>(j)] - mx);
            sum += row[static_cast<std::size_t>(j)];
        }
        double* ai = c.att.data() + static_cast<std::size_t>(i) * m;
        double* cxi = c.ctx.data() + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < lim; ++j) {
            const double a = row[static_cast<std::size_t>(j)] / sum;
            ai[j] = a;
            const double* vj = c.v.data() + static_cast<std::size_t>(j) * d;
            for (int t = 0; t < d; ++t) cxi[t] += a * vj[t];
        }
    }
}

// Backward through attention scores given dctx; accumulates dq, dk, dv.
inline void attention_backward(const AttnCache& c, const double* dctx, double* dq, double* dk,
                               double* dv, int n, int m, int d, bool causal) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(d));
    std::vector<double> datt(static_cast<std::size_t>(m));
    for (int i = 0; i < n; ++i) {
        const int lim = causal ? i + 1 : m;
        const double* dci = dctx + static_cast<std::size_t>(i) * d;
        const double* ai = c.att.data() + static_cast<std::size_t>(i) * m;
        double dot = 0.0;
        for (int j = 0; j < lim; ++j) {
            const double* vj = c.v.data() + static_cast<std::size_t>(j) * d;
            double s = 0.0;
            for (int t = 0; t < d; ++t) s += dci[t] * vj[t];
            datt[static_cast<std::size_t>(j)] = s;
            dot += ai[j] * s;
            double* dvj = dv + static_cast<std::size_t>(j) * d;
            for (int t = 0; t < d; ++t) dvj[t] += ai[j] * dci[t];
        }
        const double* qi = c.q.data() + static_cast<std::size_t>(i) * d;
        double* dqi = dq + static_cast<std::size_t>(i) * d;
        for (int j = 0; j < lim; ++j) {
            const double ds = ai[j] * (datt[static_cast<std::size_t>(j)] - dot) * scale;
            const double* kj = c.k.data() + static_cast<std::size_t>(j) * d;
            double* dkj = dk + static_cast<std::size_t>(j) * d;
            for (int t = 0; t < d; ++t) {
                dqi[t] += ds * kj[t];
                dkj[t] += ds * qi[t];
            }
        }
    }
}

}  // namespace detail

struct Workspace {
    std::vector<int> src, dec_in;
    int src_len = 0, tgt_len = 0;
    std::vector<double> enc_in;   // embeddings + positions, [S][d]
    std::vector<double> dec_in_x; // [T][d]
    std::vector<detail::EncLayerCache> enc;
    detail::SubCache enc_final;   // x_in = stream after last encoder layer
    std::vector<detail::DecLayerCache> dec;
    detail::SubCache dec_final;
    std::vector<double> logits;   // [T][Vt]
};

namespace detail {

inline void check_ids(std::span<const int> ids, int vocab, int max_len, const char* side) {
    if (ids.empty()) throw std::invalid_argument(std::string(side) + " sequence is empty");
    if (static_cast<int>(ids.size()) > max_len)
        throw std::invalid_argument(std::string(side) + " sequence exceeds max_len");
    for (int id : ids)
        if (id < 0 || id >= vocab)
            throw std::out_of_range(std::string(side) + " token id out of range: " + std::to_string(id));
}

}  // namespace detail

// Teacher-forced forward pass. tgt holds the reference sequence to predict
// (typically tokens + <eos>); the decoder consumes <bos> + tgt[:-1]. Returns
// one logit vector per target position in ws.logits.
inline void forward(const ModelParams& p, std::span<const int> src, std::span<const int> tgt,
                    Workspace& ws) {
    const ModelConfig& cfg = p.cfg;
    detail::check_ids(src, cfg.src_vocab, cfg.max_len, "source");
    detail::check_ids(tgt, cfg.tgt_vocab, cfg.max_len, "target");
    const int S = static_cast<int>(src.size());
    const int T = static_cast<int>(tgt.size());
    const int d = cfg.dim;
    const int ff = cfg.ff_dim;

    ws.src.assign(src.begin(), src.end());
    ws.dec_in.resize(static_cast<std::size_t>(T));
    ws.dec_in[0] = Vocab::bos_id;
    for (int i = 1; i < T; ++i) ws.dec_in[static_cast<std::size_t>(i)] = tgt[static_cast<std::size_t>(i - 1)];
    ws.src_len = S;
    ws.tgt_len = T;

    auto embed = [&](std::span<const int> ids, std::size_t table, std::size_t pos_table,
                     std::vector<double>& out) {
        const int n = static_cast<int>(ids.size());
        out.assign(static_cast<std::size_t>(n) * d, 0.0);
        for (int i = 0; i < n; ++i) {
            const double* e = p.at(table + static_cast<std::size_t>(ids[static_cast<std::size_t>(i)]) * d);
            const double* q = p.at(pos_table + static_cast<std::size_t>(i) * d);
            double* o = out.data() + static_cast<std::size_t>(i) * d;
            for (int c = 0; c < d; ++c) o[c] = e[c] + q[c];
        }
    };
    embed(src, p.layout.src_embed, p.layout.src_pos, ws.enc_in);
    embed(ws.dec_in, p.layout.tgt_embed, p.layout.tgt_pos, ws.dec_in_x);

    auto run_norm = [&](detail::SubCache& c, std::vector<double>& stream, std::size_t g_off, int n) {
        c.x_in = stream;
        c.n.resize(static_cast<std::size_t>(n) * d);
        c.rms.resize(static_cast<std::size_t>(n));
        detail::rmsnorm_forward(c.x_in.data(), p.at(g_off), c.n.data(), c.rms.data(), n, d);
    };
    auto project = [&](const std::vector<double>& in, std::size_t w_off, std::vector<double>& out,
                       int n, int rows, int cols) {
        out.resize(static_cast<std::size_t>(n) * rows);
        for (int i = 0; i < n; ++i)
            detail::matvec(p.at(w_off), in.data() + static_cast<std::size_t>(i) * cols,
                           out.data() + static_cast<std::size_t>(i) * rows, rows, cols);
    };
    auto add_attn_out = [&](std::vector<double>& stream, const detail::AttnCache& c, std::size_t wo,
                            int n) {
        std::vector<double> o(static_cast<std::size_t>(d));
        for (int i = 0; i < n; ++i) {
            detail::matvec(p.at(wo), c.ctx.data() + static_cast<std::size_t>(i) * d, o.data(), d, d);
            double* xi = stream.data() + static_cast<std::size_t>(i) * d;
            for (int cidx = 0; cidx < d; ++cidx) xi[cidx] += o[cidx];
        }
    };
    auto run_ff = [&](detail::SubCache& c, std::vector<double>& h, std::vector<double>& stream,
                      std::size_t norm, std::size_t w1, std::size_t w2, int n) {
        run_norm(c, stream, norm, n);
        h.resize(static_cast<std::size_t>(n) * ff);
        std::vector<double> o(static_cast<std::size_t>(d));
        for (int i = 0; i < n; ++i) {
            double* hi = h.data() + static_cast<std::size_t>(i) * ff;
            detail::matvec(p.at(w1), c.n.data() + static_cast<std::size_t>(i) * d, hi, ff, d);
            for (int k = 0; k < ff; ++k)
                if (hi[k] < 0.0) hi[k] = 0.0;
            detail::matvec(p.at(w2), hi, o.data(), d, ff);
            double* xi = stream.data() + static_cast<std::size_t>(i) * d;
            for (int c2 = 0; c2 < d; ++c2) xi[c2] += o[c2];
        }
    };

    // Encoder
    ws.enc.assign(static_cast<std::size_t>(cfg.enc_layers), {});
    std::vector<double> stream = ws.enc_in;
    for (int l = 0; l < cfg.enc_layers; ++l) {
        auto& cache = ws.enc[static_cast<std::size_t>(l)];
        const auto& off = p.layout.enc[static_cast<std::size_t>(l)];
        run_norm(cache.a, stream, off.norm1, S);
        project(cache.a.n, off.attn.wq, cache.attn.q, S, d, d);
        project(cache.a.n, off.attn.wk, cache.attn.k, S, d, d);
        project(cache.a.n, off.attn.wv, cache.attn.v, S, d, d);
        detail::attention_forward(cache.attn, S, S, d, false);
        add_attn_out(stream, cache.attn, off.attn.wo, S);
        run_ff(cache.f, cache.h, stream, off.norm2, off.w1, off.w2, S);
    }
    run_norm(ws.enc_final, stream, p.layout.enc_final_norm, S);
    const std::vector<double>& enc_out = ws.enc_final.n;

    // Decoder
    ws.dec.assign(static_cast<std::size_t>(cfg.dec_layers), {});
    std::vector<double> dstream = ws.dec_in_x;
    for (int l = 0; l < cfg.dec_layers; ++l) {
        auto& cache = ws.dec[static_cast<std::size_t>(l)];
        const auto& off = p.layout.dec[static_cast<std::size_t>(l)];
        run_norm(cache.sa, dstream, off.norm1, T);
        project(cache.sa.n, off.self_attn.wq, cache.self_attn.q, T, d, d);
        project(cache.sa.n, off.self_attn.wk, cache.self_attn.k, T, d, d);
        project(cache.sa.n, off.self_attn.wv, cache.self_attn.v, T, d, d);
        detail::attention_forward(cache.self_attn, T, T, d, true);
        add_attn_out(dstream, cache.self_attn, off.self_attn.wo, T);

        run_norm(cache.ca, dstream, off.norm2, T);
        project(cache.ca.n, off.cross_attn.wq, cache.cross_attn.q, T, d, d);
        project(enc_out, off.cross_attn.wk, cache.cross_attn.k, S, d, d);
        project(enc_out, off.cross_attn.wv, cache.cross_attn.v, S, d, d);
        detail::attention_forward(cache.cross_attn, T, S, d, false);
        add_attn_out(dstream, cache.cross_attn, off.cross_attn.wo, T);

        run_ff(cache.f, cache.h, dstream, off.norm3, off.w1, off.w2, T);
    }
    run_norm(ws.dec_final, dstream, p.layout.dec_final_norm, T);

    ws.logits.resize(static_cast<std::size_t>(T) * cfg.tgt_vocab);
    for (int i = 0; i < T; ++i) {
        double* li = ws.logits.data() + static_cast<std::size_t>(i) * cfg.tgt_vocab;
        detail::matvec(p.at(p.layout.out_w), ws.dec_final.n.data() + static_cast<std::size_t>(i) * d,
                       li, cfg.tgt_vocab, d);
        const double* b = p.at(p.layout.out_b);
        for (int v = 0; v < cfg.tgt_vocab; ++v) li[v] += b[v];
    }
}

// Accumulates d(loss)/d(params) into grad given d(loss)/d(logits).
inline void backward(const ModelParams& p, const Workspace& ws, std::span<const double> dlogits,
                     std::vector<double>& grad) {
    const ModelConfig& cfg = p.cfg;
    const int S = ws.src_len;
    const int T = ws.tgt_len;
    const int d = cfg.dim;
    const int ff = cfg.ff_dim;
    if (grad.size() != p.w.size()) throw std::invalid_argument("backward: gradient buffer shape mismatch");
    if (dlogits.size() != static_cast<std::size_t>(T) * cfg.tgt_vocab)
        throw std::invalid_argument("backward: dlogits shape mismatch");

    auto norm_back = [&](const detail::SubCache& c, std::size_t g_off, const std::vector<double>& dn,
                         std::vector<double>& dstream, int n) {
        detail::rmsnorm_backward(c.x_in.data(), p.at(g_off), c.rms.data(), dn.data(), dstream.data(),
                                 grad.data() + g_off, n, d);
    };

    // Output projection
    std::vector<double> d_dec_final_n(static_cast<std::size_t>(T) * d, 0.0);
    for (int i = 0; i < T; ++i) {
        const double* dli = dlogits.data() + static_cast<std::size_t>(i) * cfg.tgt_vocab;
        detail::outer_acc(grad.data() + p.layout.out_w, dli,
                          ws.dec_final.n.data() + static_cast<std::size_t>(i) * d, cfg.tgt_vocab, d);
        double* db = grad.data() + p.layout.out_b;
        for (int v = 0; v < cfg.tgt_vocab; ++v) db[v] += dli[v];
        detail::matvec_t_acc(p.at(p.layout.out_w), dli,
                             d_dec_final_n.data() + static_cast<std::size_t>(i) * d, cfg.tgt_vocab, d);
    }

    std::vector<double> d_dstream(static_cast<std::size_t>(T) * d, 0.0);
    norm_back(ws.dec_final, p.layout.dec_final_norm, d_dec_final_n, d_dstream, T);

    std::vector<double> d_enc_out(static_cast<std::size_t>(S) * d, 0.0);

    auto attn_block_back = [&](const detail::SubCache& nc, const detail::AttnCache& ac,
                               const detail::AttnOffsets& off, std::size_t norm_off,
                               std::vector<double>& dstream, std::vector<double>* d_kv_input,
                               int n, int m, bool causal) {
        // dstream currently holds d(residual out); the residual pass-through
        // keeps it, the sublayer contribution flows through Wo.
        std::vector<double> dctx(static_cast<std::size_t>(n) * d, 0.0);
        for (int i = 0; i < n; ++i) {
            const double* dyi = dstream.data() + static_cast<std::size_t>(i) * d;
            detail::outer_acc(grad.data() + off.wo, dyi, ac.ctx.data() + static_cast<std::size_t>(i) * d,
                              d, d);
            detail::matvec_t_acc(p.at(off.wo), dyi, dctx.data() + static_cast<std::size_t>(i) * d, d, d);
        }
        std::vector<double> dq(static_cast<std::size_t>(n) * d, 0.0);
        std::vector<double> dk(static_cast<std::size_t>(m) * d, 0.0);
        std::vector<double> dv(static_cast<std::size_t>(m) * d, 0.0);
        detail::attention_backward(ac, dctx.data(), dq.data(), dk.data(), dv.data(), n, m, d, causal);

        std::vector<double> dn(static_cast<std::size_t>(n) * d, 0.0);
        for (int i = 0; i < n; ++i) {
            const double* ni = nc.n.data() + static_cast<std::size_t>(i) * d;
            detail::outer_acc(grad.data() + off.wq, dq.data() + static_cast<std::size_t>(i) * d, ni, d, d);
            detail::matvec_t_acc(p.at(off.wq), dq.data() + static_cast<std::size_t>(i) * d,
                                 dn.data() + static_cast<std::size_t>(i) * d, d, d);
        }
        const double* kv_in = d_kv_input ? ws.enc_final.n.data() : nc.n.data();
        for (int j = 0; j < m; ++j) {
            const double* nj = kv_in + static_cast<std::size_t>(j) * d;
            detail::outer_acc(grad.data() + off.wk, dk.data() + static_cast<std::size_t>(j) * d, nj, d, d);
            detail::outer_acc(grad.data() + off.wv, dv.data() + static_cast<std::size_t>(j) * d, nj, d, d);
            double* sink = d_kv_input ? d_kv_input->data() + static_cast<std::size_t>(j) * d
                                      : dn.data() + static_cast<std::size_t>(j) * d;
            detail::matvec_t_acc(p.at(off.wk), dk.data() + static_cast<std::size_t>(j) * d, sink, d, d);
            detail::matvec_t_acc(p.at(off.wv), dv.data() + static_cast<std::size_t>(j) * d, sink, d, d);
        }
        norm_back(nc, norm_off, dn, dstream, n);
    };

    auto ff_back = [&](const detail::SubCache& nc, const std::vector<double>& h, std::size_t norm_off,
                       std::size_t w1, std::size_t w2, std::vector<double>& dstream, int n) {
        std::vector<double> dn(static_cast<std::size_t>(n) * d, 0.0);
        std::vector<double> dh(static_cast<std::size_t>(ff));
        for (int i = 0; i < n; ++i) {
            const double* dyi = dstream.data() + static_cast<std::size_t>(i) * d;
            const double* hi = h.data() + static_cast<std::size_t>(i) * ff;
            detail::outer_acc(grad.data() + w2, dyi, hi, d, ff);
            std::fill(dh.begin(), dh.end(), 0.0);
            detail::matvec_t_acc(p.at(w2), dyi, dh.data(), d, ff);
            for (int k = 0; k < ff; ++k)
                if (hi[k] <= 0.0) dh[static_cast<std::size_t>(k)] = 0.0;
            detail::outer_acc(grad.data() + w1, dh.data(), nc.n.data() + static_cast<std::size_t>(i) * d,
                              ff, d);
            detail::matvec_t_acc(p.at(w1), dh.data(), dn.data() + static_cast<std::size_t>(i) * d, ff, d);
        }
        norm_back(nc, norm_off, dn, dstream, n);
    };

    // Decoder layers in reverse
    for (int l = cfg.dec_layers - 1; l >= 0; --l) {
        const auto& cache = ws.dec[static_cast<std::size_t>(l)];
        const auto& off = p.layout.dec[static_cast<std::size_t>(l)];
        ff_back(cache.f, cache.h, off.norm3, off.w1, off.w2, d_dstream, T);
        attn_block_back(cache.ca, cache.cross_attn, off.cross_attn, off.norm2, d_dstream, &d_enc_out,
                        T, S, false);
        attn_block_back(cache.sa, cache.self_attn, off.self_attn, off.norm1, d_dstream, nullptr, T, T,
                        true);
    }
    // Decoder embeddings
    for (int i = 0; i < T; ++i) {
        const double* g = d_dstream.data() + static_cast<std::size_t>(i) * d;
        double* de = grad.data() + p.layout.tgt_embed +
                     static_cast<std::size_t>(ws.dec_in[static_cast<std::size_t>(i)]) * d;
        double* dp = grad.data() + p.layout.tgt_pos + static_cast<std::size_t>(i) * d;
        for (int c = 0; c < d; ++c) {
            de[c] += g[c];
            dp[c] += g[c];
        }
    }

    // Encoder final norm then layers in reverse
    std::vector<double> d_estream(static_cast<std::size_t>(S) * d, 0.0);
    norm_back(ws.enc_final, p.layout.enc_final_norm, d_enc_out, d_estream, S);
    for (int l = cfg.enc_layers - 1; l >= 0; --l) {
        const auto& cache = ws.enc[static_cast<std::size_t>(l)];
        const auto& off = p.layout.enc[static_cast<std::size_t>(l)];
        ff_back(cache.f, cache.h, off.norm2, off.w1, off.w2, d_estream, S);
        attn_block_back(cache.a, cache.attn, off.attn, off.norm1, d_estream, nullptr, S, S, false);
    }
    for (int i = 0; i < S; ++i) {
        const double* g = d_estream.data() + static_cast<std::size_t>(i) * d;
        double* de = grad.data() + p.layout.src_embed +
                     static_cast<std::size_t>(ws.src[static_cast<std::size_t>(i)]) * d;
        double* dp = grad.data() + p.layout.src_pos + static_cast<std::size_t>(i) * d;
        for (int c = 0; c < d; ++c) {
            de[c] += g[c];
            dp[c] += g[c];
        }
    }
}

// ---------------------------------------------------------------------------
// Optimizer: Adam with bias correction, inverse-square-root schedule.

struct OptimState {
    std::vector<double> m, v;
    long step = 0;
    double lr = 5e-4;
    double beta1 = 0.9;
    double beta2 = 0.98;
    double eps = 1e-9;
    long warmup = 100;
};

inline OptimState init_optimizer(const ModelParams& params, double lr = 5e-4, long warmup = 100) {
    OptimState s;
    s.m.assign(params.w.size(), 0.0);
    s.v.assign(params.w.size(), 0.0);
    s.lr = lr;
    s.warmup = warmup;
    return s;
}

// Linear warmup to the base rate, then decay with 1/sqrt(t).
inline double lr_at(const OptimState& s, long step) {
    if (step < 1) step = 1;
    if (s.warmup > 0 && step <= s.warmup)
        return s.lr * static_cast<double>(step) / static_cast<double>(s.warmup);
    if (s.warmup > 0)
        return s.lr * std::sqrt(static_cast<double>(s.warmup) / static_cast<double>(step));
    return s.lr / std::sqrt(static_cast<double>(step));
}

inline void optimizer_step(ModelParams& params, const std::vector<double>& grads, OptimState& s) {
    if (grads.size() != params.w.size() || s.m.size() != params.w.size())
        throw std::invalid_argument("optimizer_step: shape mismatch");
    s.step += 1;
    const double lr = lr_at(s, s.step);
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
    for (std::size_t i = 0; i < params.w.size(); ++i) {
        const double g = grads[i];
        s.m[i] = s.beta1 * s.m[i] + (1.0 - s.beta1) * g;
        s.v[i] = s.beta2 * s.v[i] + (1.0 - s.beta2) * g * g;
        const double mhat = s.m[i] / bc1;
        const double vhat = s.v[i] / bc2;
        params.w[i] -= lr * mhat / (std::sqrt(vhat) + s.eps);
        if (!std::isfinite(params.w[i]))
            throw std::runtime_error("optimizer_step: parameter became non-finite");
    }
}

// ---------------------------------------------------------------------------
// Greedy decoding

inline std::vector<int> decode_greedy(const ModelParams& p, std::span<const int> src, int max_len) {
    if (max_len < 1) return {};
    std::vector<int> out;
    Workspace ws;
    std::vector<int> probe(1, Vocab::eos_id);
    while (static_cast<int>(out.size()) < std::min(max_len, p.cfg.max_len - 1)) {
        // The forward target slot is a placeholder: logits at the last
        // position depend only on tokens before it.
        probe.assign(out.begin(), out.end());
        probe.push_back(Vocab::eos_id);
        forward(p, src, probe, ws);
        const std::size_t last = probe.size() - 1;
        const double* logits = ws.logits.data() + last * p.cfg.tgt_vocab;
        int best = 0;
        for (int v = 1; v < p.cfg.tgt_vocab; ++v)
            if (logits[v] > logits[best]) best = v;
        if (best == Vocab::eos_id) break;
        out.push_back(best);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Checkpoints: versioned little-endian binary container.

namespace detail {

constexpr char ckpt_magic[8] = {'N', 'R', 'M', 'T', 'C', 'K', 'P', '1'};

template <typename T>
void put(std::ofstream& out, const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
void get(std::ifstream& in, T& v) {
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
}

}  // namespace detail

struct Checkpoint {
    ModelParams params;
    OptimState optim;
    long iteration = 0;
    bool has_optim = false;
};

inline void save_checkpoint(const std::string& path, const ModelParams& params,
                            const OptimState* optim, long iteration) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write checkpoint: " + path);
    out.write(detail::ckpt_magic, sizeof(detail::ckpt_magic));
    const std::int32_t shape[7] = {params.cfg.src_vocab, params.cfg.tgt_vocab, params.cfg.dim,
                                   params.cfg.ff_dim,    params.cfg.enc_layers, params.cfg.dec_layers,
                                   params.cfg.max_len};
    out.write(reinterpret_cast<const char*>(shape), sizeof(shape));
    detail::put(out, params.src_vocab_hash);
    detail::put(out, params.tgt_vocab_hash);
    detail::put(out, static_cast<std::int64_t>(iteration));
    const std::uint8_t has_optim = optim ? 1 : 0;
    detail::put(out, has_optim);
    const std::uint64_t n = params.w.size();
    detail::put(out, n);
    out.write(reinterpret_cast<const char*>(params.w.data()),
              static_cast<std::streamsize>(n * sizeof(double)));
    if (optim) {
        detail::put(out, static_cast<std::int64_t>(optim->step));
        detail::put(out, optim->lr);
        detail::put(out, optim->beta1);
        detail::put(out, optim->beta2);
        detail::put(out, optim->eps);
        detail::put(out, static_cast<std::int64_t>(optim->warmup));
        out.write(reinterpret_cast<const char*>(optim->m.data()),
                  static_cast<std::streamsize>(n * sizeof(double)));
        out.write(reinterpret_cast<const char*>(optim->v.data()),
                  static_cast<std::streamsize>(n * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, detail::ckpt_magic, sizeof(magic)) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    std::int32_t shape[7];
    in.read(reinterpret_cast<char*>(shape), sizeof(shape));
    Checkpoint ck;
    ck.params.cfg = {shape[0], shape[1], shape[2], shape[3], shape[4], shape[5], shape[6]};
    ck.params.cfg.validate();
    ck.params.layout = detail::make_layout(ck.params.cfg);
    detail::get(in, ck.params.src_vocab_hash);
    detail::get(in, ck.params.tgt_vocab_hash);
    std::int64_t iter = 0;
    detail::get(in, iter);
    ck.iteration = iter;
    std::uint8_t has_optim = 0;
    detail::get(in, has_optim);
    std::uint64_t n = 0;
    detail::get(in, n);
    if (n != ck.params.layout.total) throw std::runtime_error("checkpoint size does not match shape");
    ck.params.w.resize(n);
    in.read(reinterpret_cast<char*>(ck.params.w.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
    if (has_optim) {
        ck.has_optim = true;
        std::int64_t step = 0, warmup = 0;
        detail::get(in, step);
        detail::get(in, ck.optim.lr);
        detail::get(in, ck.optim.beta1);
        detail::get(in, ck.optim.beta2);
        detail::get(in, ck.optim.eps);
        detail::get(in, warmup);
        ck.optim.step = step;
        ck.optim.warmup = warmup;
        ck.optim.m.resize(n);
        ck.optim.v.resize(n);
        in.read(reinterpret_cast<char*>(ck.optim.m.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
        in.read(reinterpret_cast<char*>(ck.optim.v.data()),
                static_cast<std::streamsize>(n * sizeof(double)));
    }
    if (!in) throw std::runtime_error("checkpoint truncated: " + path);
    return ck;
}

}  // namespace nrmt
