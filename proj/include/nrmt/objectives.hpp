// Training objectives: baseline cross-entropy, loss/el2n truncation, and
// self-correction with a sigmoid trust schedule and temperature sharpening.
//
// Every objective returns the batch loss, the exact gradient of that loss
// with respect to the per-position logits, and per-token diagnostics (plain
// cross-entropy and el2n against the one-hot reference).
//
// The self-correction target q_bar is a constant for differentiation: the
// gradient is taken with q_bar frozen at its current value, so dL/dz is
// simply (softmax(z) - q_bar) per token. Truncation likewise freezes the
// token mask before differentiating.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "nrmt/corpus.hpp"
#include "nrmt/prob.hpp"

namespace nrmt {

// ---------------------------------------------------------------------------
// Equation-level operations

// ||p - OH(y)||_2, in [0, sqrt(2)].
inline double el2n(const ProbDist& p, int y) {
    validate_prob_dist(p);
    if (y < 0 || static_cast<std::size_t>(y) >= p.size())
        throw std::out_of_range("el2n: token id out of range");
    double s = 0.0;
    for (std::size_t v = 0; v < p.size(); ++v) {
        double d = p[v] - (static_cast<std::size_t>(y) == v ? 1.0 : 0.0);
        s += d * d;
    }
    return std::sqrt(s);
}

// H(p) / ln|V|, with 0*ln0 = 0. In [0,1]; 1 for uniform, 0 for one-hot.
inline double normalized_entropy(const ProbDist& p) {
    validate_prob_dist(p);
    if (p.size() < 2) return 0.0;
    double h = 0.0;
    for (double x : p)
        if (x > 0.0) h -= x * std::log(x);
    return h / std::log(static_cast<double>(p.size()));
}

// Trust schedule 1 / (1 + exp(beta * (t/T + alpha))); strictly increasing in
// t for beta < 0, in (0,1).
inline double time_schedule(double t, double total, double alpha, double beta) {
    return 1.0 / (1.0 + std::exp(beta * (t / total + alpha)));
}

// Linear interpolation tau_hi -> tau_lo driven by the trust schedule, so the
// correction target sharpens as training progresses.
inline double dynamic_tau(double t, double total, double tau_hi, double tau_lo,
                          double alpha = -0.6, double beta = -6.0) {
    if (!(tau_lo > 0.0) || tau_hi < tau_lo)
        throw std::invalid_argument("dynamic_tau: need tau_hi >= tau_lo > 0");
    return tau_hi - (tau_hi - tau_lo) * time_schedule(t, total, alpha, beta);
}

enum class TauPolicy { fixed, dynamic };

struct ScheduleParams {
    double alpha = -0.6;
    double beta = -6.0;
    long total_iters = 1;
    long start_iter = 0;  // truncation warmup; no masking before this iteration
    TauPolicy tau_policy = TauPolicy::fixed;
    double tau = 0.5;
    double tau_hi = 1.0;
    double tau_lo = 0.5;
    double lambda_scale = 1.0;  // 0 forces lambda == 0, reducing to baseline CE

    void validate() const {
        if (total_iters < 1) throw std::invalid_argument("schedule: total_iters must be >= 1");
        if (tau_policy == TauPolicy::fixed && !(tau > 0.0))
            throw std::invalid_argument("schedule: fixed tau must be > 0");
        if (tau_policy == TauPolicy::dynamic && (!(tau_lo > 0.0) || tau_hi < tau_lo))
            throw std::invalid_argument("schedule: need tau_hi >= tau_lo > 0");
        if (lambda_scale < 0.0 || lambda_scale > 1.0)
            throw std::invalid_argument("schedule: lambda_scale must be in [0,1]");
    }

    double time_at(long t) const {
        return time_schedule(static_cast<double>(t), static_cast<double>(total_iters), alpha, beta);
    }

    double tau_at(long t) const {
        if (tau_policy == TauPolicy::fixed) return tau;
        return tau_hi - (tau_hi - tau_lo) * time_at(t);
    }
};

// The paper's default warmup of 1500 iterations presumes 100K-500K step
// runs; scale it down proportionally for toy horizons.
inline long default_truncation_start(long total_iters) {
    return std::lround(1500.0 / 500000.0 * static_cast<double>(total_iters));
}

// lambda = (1 - H_norm(p)) * Time(t), clamped to [0,1]. Uses the unsharpened
// distribution: entropy should reflect genuine model confidence.
inline double lambda_weight(const ProbDist& p, long t, const ScheduleParams& sched) {
    double lam = (1.0 - normalized_entropy(p)) * sched.time_at(t) * sched.lambda_scale;
    return std::clamp(lam, 0.0, 1.0);
}

// q_bar = (1 - lambda) q + lambda p_sharp; a valid distribution by convexity.
inline ProbDist corrected_target(const ProbDist& q, const ProbDist& p_sharp, double lambda) {
    if (lambda < 0.0 || lambda > 1.0) throw std::invalid_argument("corrected_target: lambda not in [0,1]");
    if (q.size() != p_sharp.size()) throw std::invalid_argument("corrected_target: size mismatch");
    ProbDist out(q.size());
    for (std::size_t v = 0; v < q.size(); ++v) out[v] = lambda * p_sharp[v];
    for (std::size_t v = 0; v < q.size(); ++v) out[v] += (1.0 - lambda) * q[v];
    return out;
}

// ---------------------------------------------------------------------------
// Batch-level objectives

enum class ObjectiveKind { baseline, loss_trunc, el2n_trunc, self_correct };

inline const char* to_string(ObjectiveKind k) {
    switch (k) {
        case ObjectiveKind::baseline: return "baseline";
        case ObjectiveKind::loss_trunc: return "loss-trunc";
        case ObjectiveKind::el2n_trunc: return "el2n-trunc";
        case ObjectiveKind::self_correct: return "self-correct";
    }
    return "baseline";
}

struct ObjectiveConfig {
    ObjectiveKind kind = ObjectiveKind::baseline;
    double fraction = 0.1;  // truncation fraction c
    ScheduleParams sched;

    void validate() const {
        if ((kind == ObjectiveKind::loss_trunc || kind == ObjectiveKind::el2n_trunc) &&
            (fraction <= 0.0 || fraction >= 1.0))
            throw std::invalid_argument("truncation fraction must be in (0,1)");
        sched.validate();
    }

    std::string name() const {
        std::string n = to_string(kind);
        if (kind == ObjectiveKind::loss_trunc || kind == ObjectiveKind::el2n_trunc)
            n += "-c" + std::to_string(fraction).substr(0, 4);
        if (kind == ObjectiveKind::self_correct)
            n += sched.tau_policy == TauPolicy::fixed ? "-fixed" : "-dynamic";
        return n;
    }
};

struct TokenRecord {
    std::size_t pair_index = 0;
    int position = 0;
    double loss = 0.0;  // cross-entropy against the one-hot reference
    double el2n = 0.0;
    long epoch = 0;
    Provenance prov = Provenance::clean;
};

// One target position in a batch: the logits the model produced for it, the
// reference token, and bookkeeping for diagnostics.
struct BatchPosition {
    std::vector<double> logits;
    int target = 0;
    std::size_t pair_index = 0;
    int position = 0;
    Provenance prov = Provenance::clean;
};

struct ObjectiveOutput {
    double loss = 0.0;
    std::vector<std::vector<double>> dlogits;  // d(batch loss)/d(logits), per position
    std::vector<TokenRecord> records;
};

namespace detail {

inline TokenRecord diag_record(const BatchPosition& pos, const ProbDist& p, double ce, long epoch) {
    TokenRecord r;
    r.pair_index = pos.pair_index;
    r.position = pos.position;
    r.loss = ce;
    r.el2n = el2n(p, pos.target);
    r.epoch = epoch;
    r.prov = pos.prov;
    return r;
}

inline void check_target(const BatchPosition& pos) {
    if (pos.target < 0 || static_cast<std::size_t>(pos.target) >= pos.logits.size())
        throw std::out_of_range("objective: target id out of range at position " +
                                std::to_string(pos.position));
}

}  // namespace detail

// Masked mean of -log p(y_i) over the batch.
inline ObjectiveOutput baseline_ce_loss(const std::vector<BatchPosition>& batch, long epoch = 0) {
    if (batch.empty()) throw std::invalid_argument("baseline_ce_loss: empty batch");
    ObjectiveOutput out;
    out.dlogits.reserve(batch.size());
    out.records.reserve(batch.size());
    const double w = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (const auto& pos : batch) {
        detail::check_target(pos);
        double lse = log_sum_exp(pos.logits);
        double ce = lse - pos.logits[static_cast<std::size_t>(pos.target)];
        ProbDist p = softmax(pos.logits);
        std::vector<double> g(p.begin(), p.end());
        g[static_cast<std::size_t>(pos.target)] -= 1.0;
        for (double& x : g) x *= w;
        total += ce;
        out.dlogits.push_back(std::move(g));
        out.records.push_back(detail::diag_record(pos, p, ce, epoch));
    }
    out.loss = total * w;
    if (!std::isfinite(out.loss)) throw std::runtime_error("baseline_ce_loss: non-finite loss");
    return out;
}

// Phase one of self-correction: the revised targets q_bar per position,
// frozen before differentiation.
inline std::vector<ProbDist> build_correction_targets(const std::vector<BatchPosition>& batch,
                                                      long t, const ScheduleParams& sched) {
    sched.validate();
    std::vector<ProbDist> targets;
    targets.reserve(batch.size());
    double tau = sched.tau_at(t);
    for (const auto& pos : batch) {
        detail::check_target(pos);
        ProbDist p = softmax(pos.logits);
        double lam = lambda_weight(p, t, sched);
        ProbDist q_bar = softmax_with_temperature(pos.logits, tau);
        for (double& x : q_bar) x *= lam;
        q_bar[static_cast<std::size_t>(pos.target)] += 1.0 - lam;
        targets.push_back(std::move(q_bar));
    }
    return targets;
}

// Phase two: masked mean of -sum_v q_bar[v] log p[v] with q_bar constant.
// Gradient per position is w * (p - q_bar).
inline ObjectiveOutput soft_target_loss(const std::vector<BatchPosition>& batch,
                                        const std::vector<ProbDist>& targets, long epoch = 0) {
    if (batch.empty()) throw std::invalid_argument("soft_target_loss: empty batch");
    if (targets.size() != batch.size())
        throw std::invalid_argument("soft_target_loss: targets/batch length mismatch");
    ObjectiveOutput out;
    out.dlogits.reserve(batch.size());
    out.records.reserve(batch.size());
    const double w = 1.0 / static_cast<double>(batch.size());
    double total = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& pos = batch[i];
        const ProbDist& q_bar = targets[i];
        if (q_bar.size() != pos.logits.size())
            throw std::invalid_argument("soft_target_loss: target size mismatch");
        double lse = log_sum_exp(pos.logits);
        double acc = 0.0;
        for (std::size_t v = 0; v < q_bar.size(); ++v)
            if (q_bar[v] > 0.0) acc += q_bar[v] * (pos.logits[v] - lse);
        double token_loss = -acc;
        if (!std::isfinite(token_loss))
            throw std::runtime_error("soft_target_loss: non-finite loss at position " +
                                     std::to_string(pos.position));
        ProbDist p = softmax(pos.logits);
        std::vector<double> g(p.size());
        for (std::size_t v = 0; v < p.size(); ++v) g[v] = w * (p[v] - q_bar[v]);
        double ce = lse - pos.logits[static_cast<std::size_t>(pos.target)];
        total += token_loss;
        out.dlogits.push_back(std::move(g));
        out.records.push_back(detail::diag_record(pos, p, ce, epoch));
    }
    out.loss = total * w;
    return out;
}

inline ObjectiveOutput self_correction_loss(const std::vector<BatchPosition>& batch, long t,
                                            const ScheduleParams& sched, long epoch = 0) {
    return soft_target_loss(batch, build_correction_targets(batch, t, sched), epoch);
}

// Indices of the top ceil(c*n) tokens by statistic, ties broken by position
// order (lower index kept longer, i.e. masked first on equal values).
inline std::vector<bool> truncation_mask(const std::vector<double>& stat, double fraction) {
    if (stat.empty()) throw std::invalid_argument("truncation_mask: empty batch");
    if (fraction <= 0.0 || fraction >= 1.0)
        throw std::invalid_argument("truncation fraction must be in (0,1)");
    const std::size_t n = stat.size();
    const std::size_t k =
        static_cast<std::size_t>(std::ceil(fraction * static_cast<double>(n)));
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (stat[a] != stat[b]) return stat[a] > stat[b];
        return a < b;
    });
    std::vector<bool> masked(n, false);
    for (std::size_t i = 0; i < k && i < n; ++i) masked[order[i]] = true;
    return masked;
}

// The spec-shaped scalar form: rank by the configured statistic, zero the top
// ceil(c*n) token losses after start_iter, mean over survivors.
inline double truncated_loss(const std::vector<double>& losses, const std::vector<double>& el2ns,
                             const ObjectiveConfig& cfg, long t) {
    cfg.validate();
    if (losses.empty()) throw std::invalid_argument("truncated_loss: empty batch");
    if (losses.size() != el2ns.size())
        throw std::invalid_argument("truncated_loss: losses/el2n length mismatch");
    if (cfg.kind != ObjectiveKind::loss_trunc && cfg.kind != ObjectiveKind::el2n_trunc)
        throw std::invalid_argument("truncated_loss: config is not a truncation objective");
    if (t < cfg.sched.start_iter)
        return std::accumulate(losses.begin(), losses.end(), 0.0) /
               static_cast<double>(losses.size());
    const std::vector<double>& stat = cfg.kind == ObjectiveKind::loss_trunc ? losses : el2ns;
    auto masked = truncation_mask(stat, cfg.fraction);
    double total = 0.0;
    std::size_t survivors = 0;
    for (std::size_t i = 0; i < losses.size(); ++i)
        if (!masked[i]) {
            total += losses[i];
            ++survivors;
        }
    return survivors == 0 ? 0.0 : total / static_cast<double>(survivors);
}

// Training form: cross-entropy with the truncation mask applied, gradients
// only through surviving tokens.
inline ObjectiveOutput truncated_ce_loss(const std::vector<BatchPosition>& batch,
                                         const ObjectiveConfig& cfg, long t, long epoch = 0) {
    cfg.validate();
    if (batch.empty()) throw std::invalid_argument("truncated_ce_loss: empty batch");
    const std::size_t n = batch.size();
    std::vector<double> losses(n), el2ns(n);
    std::vector<ProbDist> probs(n);
    ObjectiveOutput out;
    out.records.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        detail::check_target(batch[i]);
        double lse = log_sum_exp(batch[i].logits);
        losses[i] = lse - batch[i].logits[static_cast<std::size_t>(batch[i].target)];
        probs[i] = softmax(batch[i].logits);
        el2ns[i] = el2n(probs[i], batch[i].target);
        out.records.push_back(detail::diag_record(batch[i], probs[i], losses[i], epoch));
    }
    std::vector<bool> masked(n, false);
    if (t >= cfg.sched.start_iter) {
        const std::vector<double>& stat = cfg.kind == ObjectiveKind::loss_trunc ? losses : el2ns;
        masked = truncation_mask(stat, cfg.fraction);
    }
    std::size_t survivors = 0;
    for (std::size_t i = 0; i < n; ++i)
        if (!masked[i]) ++survivors;
    const double w = survivors == 0 ? 0.0 : 1.0 / static_cast<double>(survivors);
    double total = 0.0;
    out.dlogits.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> g(probs[i].size(), 0.0);
        if (!masked[i]) {
            for (std::size_t v = 0; v < g.size(); ++v) g[v] = w * probs[i][v];
            g[static_cast<std::size_t>(batch[i].target)] -= w;
            total += losses[i];
        }
        out.dlogits.push_back(std::move(g));
    }
    out.loss = total * w;
    return out;
}

// Dispatch used by the training loop.
inline ObjectiveOutput compute_objective(const std::vector<BatchPosition>& batch,
                                         const ObjectiveConfig& cfg, long t, long epoch) {
    switch (cfg.kind) {
        case ObjectiveKind::baseline: return baseline_ce_loss(batch, epoch);
        case ObjectiveKind::loss_trunc:
        case ObjectiveKind::el2n_trunc: return truncated_ce_loss(batch, cfg, t, epoch);
        case ObjectiveKind::self_correct: return self_correction_loss(batch, t, cfg.sched, epoch);
    }
    throw std::logic_error("unreachable objective kind");
}

inline void write_token_stats_csv(const std::vector<TokenRecord>& records, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write token stats csv: " + path);
    out << "epoch,pair_idx,position,provenance,loss,el2n\n";
    out.precision(10);
    for (const auto& r : records)
        out << r.epoch << ',' << r.pair_index << ',' << r.position << ',' << to_string(r.prov)
            << ',' << r.loss << ',' << r.el2n << '\n';
}

}  // namespace nrmt
