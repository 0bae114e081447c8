// Similarity-controlled misalignment, random-shuffle misalignment, and noise
// injection with ground-truth provenance masks.
//
// The scored generator runs in two steps per source: a surface pass over the
// target pool (length window against the source, word-overlap floor against
// the true target, first-k admitted in pool order), then selection of the
// candidate the scorer rates most similar to the source. Chosen targets are
// removed from the pool so none is reused.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "nrmt/corpus.hpp"
#include "nrmt/rng.hpp"
#include "nrmt/scorer.hpp"

namespace nrmt {

struct NoiseGenSpec {
    int candidate_k = 50;     // surface pass stops once this many candidates are admitted
    int length_tol = 3;       // admit iff |len(tgt) - len(src)| < length_tol
    double overlap_min = 0.4; // admit iff overlap(tgt, true_tgt) > overlap_min
    std::uint64_t seed = 0;

    void validate() const {
        if (candidate_k < 1) throw std::invalid_argument("noise spec: candidate_k must be >= 1");
        if (length_tol < 0) throw std::invalid_argument("noise spec: length tolerance must be >= 0");
        if (overlap_min < 0.0 || overlap_min > 1.0)
            throw std::invalid_argument("noise spec: overlap threshold must be in [0,1]");
    }
};

struct NoiseMask {
    std::vector<Provenance> labels;

    std::size_t size() const { return labels.size(); }

    std::size_t noisy_count() const {
        std::size_t n = 0;
        for (auto p : labels)
            if (p != Provenance::clean) ++n;
        return n;
    }
};

inline void write_mask(const NoiseMask& mask, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write mask file: " + path);
    for (auto p : mask.labels) out << to_string(p) << '\n';
}

inline NoiseMask read_mask(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open mask file: " + path);
    NoiseMask mask;
    std::string line;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        mask.labels.push_back(provenance_from_string(line));
    }
    return mask;
}

// Jaccard coefficient over token-type sets. Symmetric, 1 iff equal sets,
// defined as 0 when both sentences are empty.
inline double word_overlap_ratio(const Sentence& a, const Sentence& b) {
    std::unordered_set<std::string> sa(a.tokens.begin(), a.tokens.end());
    std::unordered_set<std::string> sb(b.tokens.begin(), b.tokens.end());
    if (sa.empty() && sb.empty()) return 0.0;
    std::size_t inter = 0;
    for (const auto& t : sa)
        if (sb.count(t)) ++inter;
    std::size_t uni = sa.size() + sb.size() - inter;
    return static_cast<double>(inter) / static_cast<double>(uni);
}

inline bool passes_surface_filters(const Sentence& candidate, const Sentence& src,
                                   const Sentence& true_tgt, const NoiseGenSpec& spec) {
    if (std::abs(candidate.length() - src.length()) >= spec.length_tol) return false;
    return word_overlap_ratio(candidate, true_tgt) > spec.overlap_min;
}

struct MisalignedPick {
    Sentence target;
    std::size_t pool_index;
};

// Two-step selection over an explicit pool (already excluding the true
// target). Returns nullopt when the surface pass admits nothing. Ties on
// score break toward the lowest pool index.
inline std::optional<MisalignedPick> select_misaligned_target(
    const Sentence& src, const Sentence& true_tgt, const std::vector<Sentence>& pool,
    const NoiseGenSpec& spec, const Scorer& scorer) {
    spec.validate();
    std::vector<std::size_t> candidates;
    for (std::size_t j = 0; j < pool.size(); ++j) {
        if (static_cast<int>(candidates.size()) >= spec.candidate_k) break;
        if (passes_surface_filters(pool[j], src, true_tgt, spec)) candidates.push_back(j);
    }
    if (candidates.empty()) return std::nullopt;
    std::size_t best = candidates[0];
    double best_score = scorer.score(src, pool[best]);
    for (std::size_t c = 1; c < candidates.size(); ++c) {
        double s = scorer.score(src, pool[candidates[c]]);
        if (s > best_score) {
            best_score = s;
            best = candidates[c];
        }
    }
    return MisalignedPick{pool[best], best};
}

struct MisalignResult {
    ParallelCorpus corpus;   // provenance: mis-scored, or mis-random for fallbacks
    int fallback_count = 0;  // sources whose candidate list came up empty
};

// One misaligned pair per input source; no target used twice; no pair keeps
// its own true target. Sources with an empty candidate list receive targets
// from the unused remainder of the pool by a seeded derangement.
inline MisalignResult generate_misaligned_corpus(const ParallelCorpus& corpus,
                                                 const NoiseGenSpec& spec, const Scorer& scorer) {
    spec.validate();
    corpus.validate();
    const std::size_t n = corpus.size();
    if (n < 2) throw std::runtime_error("misalignment needs at least 2 pairs");

    std::vector<bool> available(n, true);
    std::vector<int> chosen(n, -1);  // target pool index per source, -1 = fallback
    std::vector<std::size_t> fallbacks;

    for (std::size_t i = 0; i < n; ++i) {
        const Sentence& src = corpus.pairs[i].src;
        const Sentence& true_tgt = corpus.pairs[i].tgt;
        std::vector<std::size_t> candidates;
        for (std::size_t j = 0; j < n; ++j) {
            if (static_cast<int>(candidates.size()) >= spec.candidate_k) break;
            if (j == i || !available[j]) continue;
            if (passes_surface_filters(corpus.pairs[j].tgt, src, true_tgt, spec))
                candidates.push_back(j);
        }
        if (candidates.empty()) {
            fallbacks.push_back(i);
            continue;
        }
        std::size_t best = candidates[0];
        double best_score = scorer.score(src, corpus.pairs[best].tgt);
        for (std::size_t c = 1; c < candidates.size(); ++c) {
            double s = scorer.score(src, corpus.pairs[candidates[c]].tgt);
            if (s > best_score) {
                best_score = s;
                best = candidates[c];
            }
        }
        chosen[i] = static_cast<int>(best);
        available[best] = false;
    }

    MisalignResult result;
    result.fallback_count = static_cast<int>(fallbacks.size());
    result.corpus.pairs.resize(n);
    result.corpus.provenance.assign(n, Provenance::mis_scored);

    // Fallbacks draw from whatever the scored pass left unused.
    std::vector<std::size_t> remaining;
    for (std::size_t j = 0; j < n; ++j)
        if (available[j]) remaining.push_back(j);
    if (remaining.size() != fallbacks.size())
        throw std::logic_error("misalign: pool accounting broke");

    if (!fallbacks.empty()) {
        auto eng = make_engine(derive_seed(spec.seed, "misalign.fallback"));
        bool ok = false;
        for (int attempt = 0; attempt < 100 && !ok; ++attempt) {
            std::shuffle(remaining.begin(), remaining.end(), eng);
            ok = true;
            for (std::size_t m = 0; m < fallbacks.size(); ++m)
                if (remaining[m] == fallbacks[m]) {
                    ok = false;
                    break;
                }
            if (!ok && fallbacks.size() >= 2) {
                // Pairwise swap repair instead of rerolling forever.
                for (std::size_t m = 0; m < fallbacks.size(); ++m) {
                    if (remaining[m] != fallbacks[m]) continue;
                    for (std::size_t m2 = 0; m2 < fallbacks.size(); ++m2) {
                        if (m2 == m) continue;
                        if (remaining[m2] != fallbacks[m] && remaining[m] != fallbacks[m2]) {
                            std::swap(remaining[m], remaining[m2]);
                            break;
                        }
                    }
                }
                ok = true;
                for (std::size_t m = 0; m < fallbacks.size(); ++m)
                    if (remaining[m] == fallbacks[m]) ok = false;
            }
        }
        for (std::size_t m = 0; m < fallbacks.size(); ++m)
            chosen[fallbacks[m]] = static_cast<int>(remaining[m]);
        if (!ok) {
            // Only reachable as the singleton corner: one fallback left holding
            // its own target. Trade targets with a scored pair and relabel it.
            if (fallbacks.size() != 1) throw std::logic_error("misalign: derangement repair failed");
            std::size_t f = fallbacks[0];
            std::size_t donor = n;
            for (std::size_t i = 0; i < n; ++i)
                if (chosen[i] >= 0 && i != f && static_cast<std::size_t>(chosen[i]) != f &&
                    result.corpus.provenance[i] == Provenance::mis_scored) {
                    donor = i;
                    break;
                }
            if (donor == n) throw std::runtime_error("misalign: cannot derange fallback pairs");
            chosen[f] = chosen[donor];
            chosen[donor] = static_cast<int>(f);
            result.corpus.provenance[donor] = Provenance::mis_random;
        }
        for (std::size_t f : fallbacks) result.corpus.provenance[f] = Provenance::mis_random;
    }

    for (std::size_t i = 0; i < n; ++i) {
        if (chosen[i] < 0 || static_cast<std::size_t>(chosen[i]) == i)
            throw std::logic_error("misalign: pair kept its own target");
        result.corpus.pairs[i] = {corpus.pairs[i].src,
                                  corpus.pairs[static_cast<std::size_t>(chosen[i])].tgt};
        result.corpus.pairs[i].tgt.id = corpus.pairs[i].src.id;
    }
    return result;
}

// Seeded derangement of targets (Sattolo cycle: no index keeps its target).
inline ParallelCorpus shuffle_misalign(const ParallelCorpus& corpus, std::uint64_t seed) {
    corpus.validate();
    const std::size_t n = corpus.size();
    if (n < 2) throw std::runtime_error("shuffle_misalign needs at least 2 pairs");
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    auto eng = make_engine(derive_seed(seed, "misalign.shuffle"));
    for (std::size_t i = n - 1; i > 0; --i) {
        std::uniform_int_distribution<std::size_t> dist(0, i - 1);
        std::swap(perm[i], perm[dist(eng)]);
    }
    ParallelCorpus out;
    out.pairs.resize(n);
    out.provenance.assign(n, Provenance::mis_random);
    for (std::size_t i = 0; i < n; ++i) {
        out.pairs[i] = {corpus.pairs[i].src, corpus.pairs[perm[i]].tgt};
        out.pairs[i].tgt.id = corpus.pairs[i].src.id;
    }
    return out;
}

struct InjectResult {
    ParallelCorpus corpus;
    NoiseMask mask;
};

// Replaces exactly round(rate * N) uniformly chosen clean pairs with noise
// pairs. When the noise corpus was generated from the same clean corpus
// (sources align one-to-one) replacement is matched by index, otherwise
// noise pairs are drawn sequentially.
inline InjectResult inject_noise(const ParallelCorpus& clean, const ParallelCorpus& noise,
                                 double rate, std::uint64_t seed) {
    clean.validate();
    noise.validate();
    if (rate < 0.0 || rate > 1.0) throw std::invalid_argument("inject_noise: rate must be in [0,1]");
    const std::size_t n = clean.size();
    const std::size_t count = static_cast<std::size_t>(std::lround(rate * static_cast<double>(n)));

    bool matched = noise.size() == n;
    if (matched)
        for (std::size_t i = 0; i < n && matched; ++i)
            matched = noise.pairs[i].src.raw == clean.pairs[i].src.raw;
    if (!matched && noise.size() < count)
        throw std::runtime_error("inject_noise: need " + std::to_string(count) + " noise pairs, have " +
                                 std::to_string(noise.size()));

    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    auto eng = make_engine(derive_seed(seed, "inject.indices"));
    std::shuffle(order.begin(), order.end(), eng);
    std::vector<std::size_t> picked(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(count));
    std::sort(picked.begin(), picked.end());

    InjectResult result;
    result.corpus = clean;
    result.corpus.provenance.assign(n, Provenance::clean);
    result.mask.labels.assign(n, Provenance::clean);
    std::size_t next = 0;
    for (std::size_t idx : picked) {
        std::size_t src_pos = matched ? idx : next++;
        Provenance label =
            noise.has_provenance() ? noise.provenance[src_pos] : Provenance::pool;
        result.corpus.pairs[idx] = noise.pairs[src_pos];
        result.corpus.pairs[idx].src.id = static_cast<int>(idx);
        result.corpus.pairs[idx].tgt.id = static_cast<int>(idx);
        result.corpus.provenance[idx] = label;
        result.mask.labels[idx] = label;
    }
    return result;
}

}  // namespace nrmt
