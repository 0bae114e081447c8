// Translation-quality metrics: corpus BLEU (4-gram, brevity penalty, add-1
// smoothing for n >= 2), position-wise token accuracy, paired bootstrap
// resampling, provenance-subset reports, and histogram extraction.
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "nrmt/corpus.hpp"
#include "nrmt/rng.hpp"
#include "nrmt/simnoise.hpp"

namespace nrmt {

using TokenSeq = std::vector<std::string>;

// Sufficient statistics per sentence; corpus BLEU over any index multiset is
// computable from their sums, which keeps bootstrap resampling cheap.
struct BleuStats {
    std::array<long, 4> match{0, 0, 0, 0};
    std::array<long, 4> total{0, 0, 0, 0};
    long hyp_len = 0;
    long ref_len = 0;

    BleuStats& operator+=(const BleuStats& o) {
        for (int n = 0; n < 4; ++n) {
            match[static_cast<std::size_t>(n)] += o.match[static_cast<std::size_t>(n)];
            total[static_cast<std::size_t>(n)] += o.total[static_cast<std::size_t>(n)];
        }
        hyp_len += o.hyp_len;
        ref_len += o.ref_len;
        return *this;
    }
};

namespace detail {

inline std::unordered_map<std::string, long> ngram_counts(const TokenSeq& tokens, int n) {
    std::unordered_map<std::string, long> counts;
    if (static_cast<int>(tokens.size()) < n) return counts;
    for (std::size_t i = 0; i + static_cast<std::size_t>(n) <= tokens.size(); ++i) {
        std::string key = tokens[i];
        for (int k = 1; k < n; ++k) {
            key += '\x1f';
            key += tokens[i + static_cast<std::size_t>(k)];
        }
        ++counts[key];
    }
    return counts;
}

}  // namespace detail

inline BleuStats bleu_sentence_stats(const TokenSeq& hyp, const TokenSeq& ref) {
    BleuStats s;
    s.hyp_len = static_cast<long>(hyp.size());
    s.ref_len = static_cast<long>(ref.size());
    for (int n = 1; n <= 4; ++n) {
        auto hc = detail::ngram_counts(hyp, n);
        auto rc = detail::ngram_counts(ref, n);
        long total = 0, match = 0;
        for (const auto& [gram, count] : hc) {
            total += count;
            auto it = rc.find(gram);
            if (it != rc.end()) match += std::min(count, it->second);
        }
        s.total[static_cast<std::size_t>(n - 1)] = total;
        s.match[static_cast<std::size_t>(n - 1)] = match;
    }
    return s;
}

inline double bleu_from_stats(const BleuStats& s) {
    if (s.hyp_len == 0 || s.match[0] == 0) return 0.0;
    double log_prec = 0.0;
    for (int n = 0; n < 4; ++n) {
        double m = static_cast<double>(s.match[static_cast<std::size_t>(n)]);
        double t = static_cast<double>(s.total[static_cast<std::size_t>(n)]);
        if (n > 0) {  // add-1 smoothing for higher orders
            m += 1.0;
            t += 1.0;
        }
        if (m == 0.0 || t == 0.0) return 0.0;
        log_prec += std::log(m / t);
    }
    double bp = s.hyp_len < s.ref_len
                    ? std::exp(1.0 - static_cast<double>(s.ref_len) / static_cast<double>(s.hyp_len))
                    : 1.0;
    return 100.0 * bp * std::exp(log_prec / 4.0);
}

inline double corpus_bleu(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
    if (hyps.size() != refs.size()) throw std::invalid_argument("corpus_bleu: length mismatch");
    if (refs.empty()) throw std::invalid_argument("corpus_bleu: empty reference list");
    BleuStats acc;
    for (std::size_t i = 0; i < hyps.size(); ++i) acc += bleu_sentence_stats(hyps[i], refs[i]);
    return bleu_from_stats(acc);
}

// Position-wise matches (up to the shorter length) over the longer length,
// averaged over sentences, so dangling tokens count as misses.
inline double token_accuracy(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs) {
    if (hyps.size() != refs.size()) throw std::invalid_argument("token_accuracy: length mismatch");
    if (refs.empty()) throw std::invalid_argument("token_accuracy: empty reference list");
    double sum = 0.0;
    for (std::size_t i = 0; i < hyps.size(); ++i) {
        const std::size_t lo = std::min(hyps[i].size(), refs[i].size());
        const std::size_t hi = std::max(hyps[i].size(), refs[i].size());
        if (hi == 0) {
            sum += 1.0;
            continue;
        }
        std::size_t matches = 0;
        for (std::size_t k = 0; k < lo; ++k)
            if (hyps[i][k] == refs[i][k]) ++matches;
        sum += static_cast<double>(matches) / static_cast<double>(hi);
    }
    return sum / static_cast<double>(hyps.size());
}

// One-sided p-value: fraction of resamples where BLEU(A) <= BLEU(B), ties
// counting 0.5, so identical systems give p = 0.5. Each resample draws its
// own seed from (seed, resample index).
inline double paired_bootstrap(const std::vector<TokenSeq>& sys_a, const std::vector<TokenSeq>& sys_b,
                               const std::vector<TokenSeq>& refs, int n_resamples,
                               std::uint64_t seed) {
    if (sys_a.size() != refs.size() || sys_b.size() != refs.size())
        throw std::invalid_argument("paired_bootstrap: list length mismatch");
    if (refs.empty()) throw std::invalid_argument("paired_bootstrap: empty inputs");
    if (n_resamples < 100) throw std::invalid_argument("paired_bootstrap: need >= 100 resamples");

    std::vector<BleuStats> stats_a(refs.size()), stats_b(refs.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        stats_a[i] = bleu_sentence_stats(sys_a[i], refs[i]);
        stats_b[i] = bleu_sentence_stats(sys_b[i], refs[i]);
    }
    double hits = 0.0;
    for (int r = 0; r < n_resamples; ++r) {
        auto eng = make_engine(derive_seed(seed, "bootstrap", static_cast<std::uint64_t>(r)));
        std::uniform_int_distribution<std::size_t> pick(0, refs.size() - 1);
        BleuStats acc_a, acc_b;
        for (std::size_t i = 0; i < refs.size(); ++i) {
            std::size_t j = pick(eng);
            acc_a += stats_a[j];
            acc_b += stats_b[j];
        }
        double a = bleu_from_stats(acc_a);
        double b = bleu_from_stats(acc_b);
        if (a < b) hits += 1.0;
        else if (a == b) hits += 0.5;
    }
    return hits / static_cast<double>(n_resamples);
}

struct SubsetMetrics {
    long n = 0;
    double bleu = 0.0;
    double token_acc = 0.0;
};

struct EvalReport {
    long n = 0;
    double bleu = 0.0;
    double token_acc = 0.0;
    std::map<std::string, SubsetMetrics> subsets;  // keyed by provenance label
};

// Per-provenance metrics. References must be the original true parallel
// targets for every pair, including noisy-labeled ones.
inline EvalReport subset_eval(const std::vector<TokenSeq>& hyps, const std::vector<TokenSeq>& refs,
                              const NoiseMask& mask) {
    if (hyps.size() != refs.size() || mask.size() != refs.size())
        throw std::invalid_argument("subset_eval: hyps/refs/mask length mismatch");
    for (std::size_t i = 0; i < refs.size(); ++i)
        if (mask.labels[i] != Provenance::clean && refs[i].empty())
            throw std::runtime_error("subset_eval: missing true reference for noisy pair " +
                                     std::to_string(i));
    EvalReport report;
    report.n = static_cast<long>(refs.size());
    report.bleu = corpus_bleu(hyps, refs);
    report.token_acc = token_accuracy(hyps, refs);
    std::map<std::string, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < refs.size(); ++i)
        groups[to_string(mask.labels[i])].push_back(i);
    for (const auto& [label, idx] : groups) {
        std::vector<TokenSeq> h, r;
        h.reserve(idx.size());
        r.reserve(idx.size());
        for (std::size_t i : idx) {
            h.push_back(hyps[i]);
            r.push_back(refs[i]);
        }
        SubsetMetrics m;
        m.n = static_cast<long>(idx.size());
        m.bleu = corpus_bleu(h, r);
        m.token_acc = token_accuracy(h, r);
        report.subsets[label] = m;
    }
    return report;
}

// Uniform-bin counts over [lo, hi); out-of-range values clamp to the edge
// bins, so the counts always sum to the number of values.
inline std::vector<long> histogram(const std::vector<double>& values, int n_bins, double lo,
                                   double hi) {
    if (n_bins < 1) throw std::invalid_argument("histogram: need at least one bin");
    if (!(hi > lo)) throw std::invalid_argument("histogram: need hi > lo");
    std::vector<long> counts(static_cast<std::size_t>(n_bins), 0);
    const double width = (hi - lo) / n_bins;
    for (double v : values) {
        if (!std::isfinite(v)) throw std::invalid_argument("histogram: non-finite value");
        int bin = static_cast<int>(std::floor((v - lo) / width));
        bin = std::clamp(bin, 0, n_bins - 1);
        ++counts[static_cast<std::size_t>(bin)];
    }
    return counts;
}

}  // namespace nrmt
