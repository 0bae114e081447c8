// Pre-filtering baseline and filter detection-accuracy harness.
#pragma once

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "nrmt/corpus.hpp"
#include "nrmt/scorer.hpp"
#include "nrmt/simnoise.hpp"

namespace nrmt {

struct ScoredCorpus {
    const ParallelCorpus* corpus = nullptr;
    std::vector<double> scores;
    std::string scorer_name;
};

inline ScoredCorpus score_corpus(const ParallelCorpus& corpus, const Scorer& scorer) {
    ScoredCorpus out;
    out.corpus = &corpus;
    out.scorer_name = to_string(scorer.kind());
    out.scores.reserve(corpus.size());
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        double s;
        try {
            s = scorer.score(corpus.pairs[i].src, corpus.pairs[i].tgt);
        } catch (const std::exception& e) {
            throw std::runtime_error("scoring pair " + std::to_string(i) + ": " + e.what());
        }
        if (!std::isfinite(s))
            throw std::runtime_error("scoring pair " + std::to_string(i) + ": non-finite score");
        out.scores.push_back(s);
    }
    return out;
}

// True-ratio thresholding: the floor(r*N) lowest-scoring pairs are predicted
// noisy, where r is the noisy fraction from the mask. Ties break by original
// index (ascending), so the rule is deterministic. Returns the fraction of
// pairs whose prediction matches the mask.
inline double detection_accuracy(const ScoredCorpus& scored, const NoiseMask& mask) {
    const std::size_t n = scored.scores.size();
    if (mask.size() != n) throw std::invalid_argument("detection_accuracy: mask/corpus length mismatch");
    if (n == 0) throw std::invalid_argument("detection_accuracy: empty corpus");
    std::size_t noisy = mask.noisy_count();
    if (noisy == 0 || noisy == n)
        throw std::runtime_error("detection_accuracy: mask must contain both classes");

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scored.scores[a] != scored.scores[b]) return scored.scores[a] < scored.scores[b];
        return a < b;
    });
    double r = static_cast<double>(noisy) / static_cast<double>(n);
    std::size_t predicted_noisy = static_cast<std::size_t>(std::floor(r * static_cast<double>(n)));

    std::size_t correct = 0;
    for (std::size_t rank = 0; rank < n; ++rank) {
        bool predict_noisy = rank < predicted_noisy;
        bool is_noisy = mask.labels[order[rank]] != Provenance::clean;
        if (predict_noisy == is_noisy) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

// Drops exactly round(f*N) lowest-scoring pairs (ties by original index) and
// keeps survivors in their original order.
inline ParallelCorpus prefilter_corpus(const ScoredCorpus& scored, double remove_fraction) {
    if (remove_fraction < 0.0 || remove_fraction >= 1.0)
        throw std::invalid_argument("prefilter: remove_fraction must be in [0,1)");
    const ParallelCorpus& corpus = *scored.corpus;
    const std::size_t n = corpus.size();
    std::size_t remove = static_cast<std::size_t>(std::lround(remove_fraction * static_cast<double>(n)));

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (scored.scores[a] != scored.scores[b]) return scored.scores[a] < scored.scores[b];
        return a < b;
    });
    std::vector<bool> removed(n, false);
    for (std::size_t k = 0; k < remove; ++k) removed[order[k]] = true;

    ParallelCorpus out;
    for (std::size_t i = 0; i < n; ++i) {
        if (removed[i]) continue;
        out.pairs.push_back(corpus.pairs[i]);
        if (corpus.has_provenance()) out.provenance.push_back(corpus.provenance[i]);
    }
    return out;
}

struct FilterEvalRow {
    std::string scorer;
    std::string noise_type;
    double ratio = 0.0;
    double accuracy = 0.0;
};

inline void write_filter_eval_csv(const std::vector<FilterEvalRow>& rows, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write filter eval csv: " + path);
    out << "scorer,noise_type,ratio,accuracy\n";
    out.precision(10);
    for (const auto& r : rows)
        out << r.scorer << ',' << r.noise_type << ',' << r.ratio << ',' << r.accuracy << '\n';
}

}  // namespace nrmt
