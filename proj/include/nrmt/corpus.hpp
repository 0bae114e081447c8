// Parallel corpora: tokenization, vocabulary, synthetic task generation, TSV io.
//
// A synthetic task maps a source sentence to its target through a seeded
// token substitution cipher (optionally followed by sequence reversal), so
// ground-truth alignment is known exactly for every generated pair.
#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "nrmt/rng.hpp"

namespace nrmt {

enum class Provenance { clean, mis_scored, mis_random, pool };

inline const char* to_string(Provenance p) {
    switch (p) {
        case Provenance::clean: return "clean";
        case Provenance::mis_scored: return "mis-scored";
        case Provenance::mis_random: return "mis-random";
        case Provenance::pool: return "pool";
    }
    return "clean";
}

inline Provenance provenance_from_string(std::string_view s) {
    if (s == "clean") return Provenance::clean;
    if (s == "mis-scored") return Provenance::mis_scored;
    if (s == "mis-random") return Provenance::mis_random;
    if (s == "pool") return Provenance::pool;
    throw std::runtime_error("unknown provenance label: " + std::string(s));
}

struct Sentence {
    std::vector<std::string> tokens;
    std::string raw;
    // Corpus line number when known; score-table scorers key pairs by it.
    int id = -1;

    bool empty() const { return tokens.empty(); }
    int length() const { return static_cast<int>(tokens.size()); }
};

struct SentencePair {
    Sentence src;
    Sentence tgt;
};

struct ParallelCorpus {
    std::vector<SentencePair> pairs;
    std::vector<Provenance> provenance;  // empty or same length as pairs

    std::size_t size() const { return pairs.size(); }
    bool has_provenance() const { return !provenance.empty(); }

    void validate() const {
        if (!provenance.empty() && provenance.size() != pairs.size())
            throw std::runtime_error("corpus provenance length mismatch");
        for (std::size_t i = 0; i < pairs.size(); ++i)
            if (pairs[i].src.empty() || pairs[i].tgt.empty())
                throw std::runtime_error("corpus pair " + std::to_string(i) + " has an empty side");
    }
};

// ---------------------------------------------------------------------------
// Tokenization

enum class TokenScheme { whitespace, character };

namespace detail {

inline void check_utf8(std::string_view text) {
    std::size_t i = 0;
    while (i < text.size()) {
        unsigned char c = static_cast<unsigned char>(text[i]);
        int extra = 0;
        if (c < 0x80) extra = 0;
        else if ((c >> 5) == 0x6) extra = 1;
        else if ((c >> 4) == 0xe) extra = 2;
        else if ((c >> 3) == 0x1e) extra = 3;
        else throw std::runtime_error("invalid UTF-8 at byte " + std::to_string(i));
        if (i + extra >= text.size())
            throw std::runtime_error("truncated UTF-8 sequence at byte " + std::to_string(i));
        for (int k = 1; k <= extra; ++k)
            if ((static_cast<unsigned char>(text[i + k]) >> 6) != 0x2)
                throw std::runtime_error("invalid UTF-8 continuation at byte " + std::to_string(i + k));
        i += 1 + extra;
    }
}

}  // namespace detail

inline std::vector<std::string> tokenize(std::string_view text, TokenScheme scheme) {
    detail::check_utf8(text);
    std::vector<std::string> out;
    if (scheme == TokenScheme::whitespace) {
        std::size_t i = 0;
        while (i < text.size()) {
            while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
            std::size_t j = i;
            while (j < text.size() && !std::isspace(static_cast<unsigned char>(text[j]))) ++j;
            if (j > i) out.emplace_back(text.substr(i, j - i));
            i = j;
        }
    } else {
        std::size_t i = 0;
        while (i < text.size()) {
            unsigned char c = static_cast<unsigned char>(text[i]);
            std::size_t n = c < 0x80 ? 1 : (c >> 5) == 0x6 ? 2 : (c >> 4) == 0xe ? 3 : 4;
            out.emplace_back(text.substr(i, n));
            i += n;
        }
    }
    return out;
}

inline Sentence make_sentence(std::string_view text, TokenScheme scheme, int id = -1) {
    Sentence s;
    s.tokens = tokenize(text, scheme);
    s.raw = std::string(text);
    s.id = id;
    return s;
}

// ---------------------------------------------------------------------------
// Vocabulary

struct Vocab {
    static constexpr int pad_id = 0;
    static constexpr int bos_id = 1;
    static constexpr int eos_id = 2;
    static constexpr int unk_id = 3;
    static constexpr int num_reserved = 4;

    std::vector<std::string> id_to_token;  // includes reserved entries
    std::unordered_map<std::string, int> token_to_id;

    Vocab() {
        id_to_token = {"<pad>", "<bos>", "<eos>", "<unk>"};
        for (int i = 0; i < num_reserved; ++i) token_to_id[id_to_token[i]] = i;
    }

    int size() const { return static_cast<int>(id_to_token.size()); }

    int add(const std::string& token) {
        auto it = token_to_id.find(token);
        if (it != token_to_id.end()) return it->second;
        int id = size();
        id_to_token.push_back(token);
        token_to_id.emplace(token, id);
        return id;
    }

    int lookup(const std::string& token) const {
        auto it = token_to_id.find(token);
        return it == token_to_id.end() ? unk_id : it->second;
    }

    const std::string& token(int id) const {
        if (id < 0 || id >= size()) throw std::out_of_range("token id out of range");
        return id_to_token[static_cast<std::size_t>(id)];
    }

    // Stable content hash, used to pair checkpoints with their vocabularies.
    std::uint64_t hash() const {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (const auto& t : id_to_token) {
            h = splitmix64(h ^ fnv1a64(t));
        }
        return h;
    }
};

struct VocabPair {
    Vocab src;
    Vocab tgt;
};

// Ids ordered by frequency desc, ties broken lexicographically; tokens rarer
// than min_freq fall through to <unk>.
inline Vocab build_side_vocab(const std::vector<const Sentence*>& side, long min_freq) {
    std::map<std::string, long> freq;
    for (const Sentence* s : side)
        for (const auto& tok : s->tokens) ++freq[tok];
    std::vector<std::pair<std::string, long>> items(freq.begin(), freq.end());
    std::stable_sort(items.begin(), items.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    Vocab v;
    for (const auto& [tok, n] : items)
        if (n >= min_freq) v.add(tok);
    return v;
}

inline VocabPair build_vocab(const ParallelCorpus& corpus, long min_freq, bool shared = false) {
    if (corpus.pairs.empty()) throw std::runtime_error("build_vocab: empty corpus");
    std::vector<const Sentence*> src_side, tgt_side;
    for (const auto& p : corpus.pairs) {
        src_side.push_back(&p.src);
        tgt_side.push_back(&p.tgt);
    }
    if (shared) {
        std::vector<const Sentence*> all = src_side;
        all.insert(all.end(), tgt_side.begin(), tgt_side.end());
        Vocab v = build_side_vocab(all, min_freq);
        return {v, v};
    }
    return {build_side_vocab(src_side, min_freq), build_side_vocab(tgt_side, min_freq)};
}

inline std::vector<int> encode(const Vocab& vocab, const Sentence& s) {
    std::vector<int> ids;
    ids.reserve(s.tokens.size());
    for (const auto& tok : s.tokens) ids.push_back(vocab.lookup(tok));
    return ids;
}

// ---------------------------------------------------------------------------
// Synthetic tasks

enum class SynthTransform { cipher, cipher_reverse };

struct SynthTaskSpec {
    int vocab_size = 12;
    int len_min = 4;
    int len_max = 10;
    int corpus_size = 1000;
    SynthTransform transform = SynthTransform::cipher;
    std::uint64_t seed = 0;

    void validate() const {
        if (len_min < 1 || len_max < len_min)
            throw std::invalid_argument("synth spec: need 1 <= len_min <= len_max");
        if (vocab_size < 10) throw std::invalid_argument("synth spec: vocabulary size must be >= 10");
        if (corpus_size < 1) throw std::invalid_argument("synth spec: corpus size must be >= 1");
    }
};

namespace detail {

inline std::string synth_token(char prefix, int index, int vocab_size) {
    int width = 1;
    for (int v = vocab_size - 1; v >= 10; v /= 10) ++width;
    std::string digits = std::to_string(index);
    std::string out(1, prefix);
    out.append(static_cast<std::size_t>(width) - digits.size(), '0');
    out += digits;
    return out;
}

// Number of distinct sources under the spec, saturating at a large cap.
inline double synth_source_space(const SynthTaskSpec& spec) {
    double total = 0.0;
    for (int len = spec.len_min; len <= spec.len_max; ++len) {
        double p = 1.0;
        for (int i = 0; i < len; ++i) {
            p *= spec.vocab_size;
            if (p > 1e18) return 1e18;
        }
        total += p;
        if (total > 1e18) return 1e18;
    }
    return total;
}

}  // namespace detail

// The seeded cipher as a source->target token dictionary, e.g. for the
// bag-of-words scorer or for oracle checks.
inline std::vector<std::pair<std::string, std::string>> synth_cipher_dict(const SynthTaskSpec& spec) {
    std::vector<int> perm(static_cast<std::size_t>(spec.vocab_size));
    for (int i = 0; i < spec.vocab_size; ++i) perm[static_cast<std::size_t>(i)] = i;
    auto eng = make_engine(derive_seed(spec.seed, "synth.cipher"));
    std::shuffle(perm.begin(), perm.end(), eng);
    std::vector<std::pair<std::string, std::string>> dict;
    dict.reserve(static_cast<std::size_t>(spec.vocab_size));
    for (int i = 0; i < spec.vocab_size; ++i)
        dict.emplace_back(detail::synth_token('s', i, spec.vocab_size),
                          detail::synth_token('t', perm[static_cast<std::size_t>(i)], spec.vocab_size));
    return dict;
}

// Applies the spec's transformation to a source sentence. Target of every
// generated pair equals exactly this.
inline Sentence synth_transform(const SynthTaskSpec& spec, const Sentence& src) {
    auto dict = synth_cipher_dict(spec);
    std::unordered_map<std::string, std::string> map(dict.begin(), dict.end());
    Sentence tgt;
    tgt.tokens.reserve(src.tokens.size());
    for (const auto& tok : src.tokens) {
        auto it = map.find(tok);
        if (it == map.end()) throw std::runtime_error("synth_transform: token outside cipher: " + tok);
        tgt.tokens.push_back(it->second);
    }
    if (spec.transform == SynthTransform::cipher_reverse)
        std::reverse(tgt.tokens.begin(), tgt.tokens.end());
    for (std::size_t i = 0; i < tgt.tokens.size(); ++i) {
        if (i) tgt.raw += ' ';
        tgt.raw += tgt.tokens[i];
    }
    tgt.id = src.id;
    return tgt;
}

// All sources distinct; pure function of (spec, seed).
inline ParallelCorpus generate_synthetic_corpus(const SynthTaskSpec& spec) {
    spec.validate();
    double space = detail::synth_source_space(spec);
    if (static_cast<double>(spec.corpus_size) > space)
        throw std::runtime_error("synth: requested " + std::to_string(spec.corpus_size) +
                                 " pairs but only " + std::to_string(static_cast<long long>(space)) +
                                 " distinct sources exist");

    auto eng = make_engine(derive_seed(spec.seed, "synth.sources"));
    std::uniform_int_distribution<int> len_dist(spec.len_min, spec.len_max);
    std::uniform_int_distribution<int> tok_dist(0, spec.vocab_size - 1);

    ParallelCorpus corpus;
    corpus.pairs.reserve(static_cast<std::size_t>(spec.corpus_size));
    std::unordered_set<std::string> seen;
    long attempts = 0;
    const long max_attempts = 200L * spec.corpus_size + 10000L;
    while (static_cast<int>(corpus.pairs.size()) < spec.corpus_size) {
        if (++attempts > max_attempts)
            throw std::runtime_error("synth: could not sample enough distinct sources; shrink corpus or grow the space");
        int len = len_dist(eng);
        Sentence src;
        src.tokens.reserve(static_cast<std::size_t>(len));
        for (int i = 0; i < len; ++i)
            src.tokens.push_back(detail::synth_token('s', tok_dist(eng), spec.vocab_size));
        for (int i = 0; i < len; ++i) {
            if (i) src.raw += ' ';
            src.raw += src.tokens[static_cast<std::size_t>(i)];
        }
        if (!seen.insert(src.raw).second) continue;
        src.id = static_cast<int>(corpus.pairs.size());
        corpus.pairs.push_back({src, synth_transform(spec, src)});
    }
    corpus.provenance.assign(corpus.pairs.size(), Provenance::clean);
    return corpus;
}

// ---------------------------------------------------------------------------
// TSV io: source<TAB>target[<TAB>provenance], UTF-8, one pair per line.

inline ParallelCorpus parse_parallel_tsv(const std::string& path,
                                         TokenScheme scheme = TokenScheme::whitespace) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open corpus file: " + path);
    ParallelCorpus corpus;
    bool any_prov = false;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t tab1 = line.find('\t');
        if (tab1 == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected source<TAB>target");
        std::size_t tab2 = line.find('\t', tab1 + 1);
        std::string src_text = line.substr(0, tab1);
        std::string tgt_text = tab2 == std::string::npos ? line.substr(tab1 + 1)
                                                         : line.substr(tab1 + 1, tab2 - tab1 - 1);
        if (src_text.empty() || tgt_text.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": empty source or target field");
        int idx = static_cast<int>(corpus.pairs.size());
        corpus.pairs.push_back({make_sentence(src_text, scheme, idx), make_sentence(tgt_text, scheme, idx)});
        if (tab2 != std::string::npos) {
            corpus.provenance.resize(corpus.pairs.size() - 1, Provenance::clean);
            corpus.provenance.push_back(provenance_from_string(line.substr(tab2 + 1)));
            any_prov = true;
        } else if (any_prov) {
            corpus.provenance.push_back(Provenance::clean);
        }
    }
    corpus.validate();
    return corpus;
}

inline void write_parallel_tsv(const ParallelCorpus& corpus, const std::string& path) {
    corpus.validate();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write corpus file: " + path);
    for (std::size_t i = 0; i < corpus.pairs.size(); ++i) {
        const auto& p = corpus.pairs[i];
        if (p.src.raw.find_first_of("\t\n") != std::string::npos ||
            p.tgt.raw.find_first_of("\t\n") != std::string::npos)
            throw std::runtime_error("pair " + std::to_string(i) + " contains tab or newline");
        out << p.src.raw << '\t' << p.tgt.raw;
        if (corpus.has_provenance()) out << '\t' << to_string(corpus.provenance[i]);
        out << '\n';
    }
    if (!out) throw std::runtime_error("write failed: " + path);
}

}  // namespace nrmt
