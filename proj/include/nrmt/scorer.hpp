// Sentence-pair similarity scorers.
//
// Stand-ins for neural quality-estimation filters, backed by precomputed
// data: an embedding table (token- or sentence-keyed), a translation-aware
// bag-of-words model, or an external score table keyed by line numbers.
// Higher score means more semantically similar.
#pragma once

#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "nrmt/corpus.hpp"
#include "nrmt/rng.hpp"

namespace nrmt {

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.size() != b.size()) throw std::invalid_argument("cosine: dimension mismatch");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot / (std::sqrt(na) * std::sqrt(nb));
}

// ---------------------------------------------------------------------------
// Backing tables

struct EmbeddingTable {
    int dim = 0;
    std::unordered_map<std::string, std::vector<double>> entries;

    bool contains(const std::string& key) const { return entries.count(key) > 0; }

    const std::vector<double>& at(const std::string& key) const {
        auto it = entries.find(key);
        if (it == entries.end()) throw std::runtime_error("embedding table: no entry for key: " + key);
        return it->second;
    }

    void insert(const std::string& key, std::vector<double> v) {
        if (dim == 0) dim = static_cast<int>(v.size());
        if (static_cast<int>(v.size()) != dim)
            throw std::runtime_error("embedding table: inconsistent dimension for key: " + key);
        entries[key] = std::move(v);
    }
};

// File format: key<TAB>v1 v2 ... vd, one entry per line.
inline EmbeddingTable read_embedding_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open embedding table: " + path);
    EmbeddingTable table;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected key<TAB>values");
        std::istringstream vals(line.substr(tab + 1));
        std::vector<double> v;
        double x;
        while (vals >> x) v.push_back(x);
        if (v.empty())
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": no vector values");
        table.insert(line.substr(0, tab), std::move(v));
    }
    return table;
}

inline void write_embedding_table(const EmbeddingTable& table, const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write embedding table: " + path);
    out.precision(17);
    for (const auto& [key, v] : table.entries) {
        out << key << '\t';
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out << ' ';
            out << v[i];
        }
        out << '\n';
    }
}

using TokenDict = std::unordered_map<std::string, std::string>;

// File format: src_token<TAB>tgt_token.
inline TokenDict read_token_dict(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open token dictionary: " + path);
    TokenDict dict;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::size_t tab = line.find('\t');
        if (tab == std::string::npos)
            throw std::runtime_error(path + ":" + std::to_string(line_no) + ": expected src<TAB>tgt");
        dict[line.substr(0, tab)] = line.substr(tab + 1);
    }
    return dict;
}

inline void write_token_dict(const std::vector<std::pair<std::string, std::string>>& dict,
                             const std::string& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write token dictionary: " + path);
    for (const auto& [s, t] : dict) out << s << '\t' << t << '\n';
}

struct ScoreTable {
    std::unordered_map<std::uint64_t, double> entries;

    static std::uint64_t key(int src_id, int tgt_id) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(src_id)) << 32) |
               static_cast<std::uint32_t>(tgt_id);
    }
};

// File format: src_line_no<TAB>tgt_line_no<TAB>score.
inline ScoreTable read_score_table(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open score table: " + path);
    ScoreTable table;
    std::string line;
    long line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        int a, b;
        double s;
        if (!(ss >> a >> b >> s))
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected src_line<TAB>tgt_line<TAB>score");
        table.entries[ScoreTable::key(a, b)] = s;
    }
    return table;
}

// ---------------------------------------------------------------------------
// Scorer

enum class ScorerKind { embedding_cosine, bagofwords_cosine, score_table };

inline const char* to_string(ScorerKind k) {
    switch (k) {
        case ScorerKind::embedding_cosine: return "embedding-cosine";
        case ScorerKind::bagofwords_cosine: return "bagofwords-cosine";
        case ScorerKind::score_table: return "score-table";
    }
    return "embedding-cosine";
}

class Scorer {
public:
    static Scorer embedding_cosine(EmbeddingTable table) {
        Scorer s;
        s.kind_ = ScorerKind::embedding_cosine;
        s.embeddings_ = std::move(table);
        return s;
    }

    static Scorer bagofwords_cosine(TokenDict dict = {}) {
        Scorer s;
        s.kind_ = ScorerKind::bagofwords_cosine;
        s.dict_ = std::move(dict);
        return s;
    }

    static Scorer score_table(ScoreTable table) {
        Scorer s;
        s.kind_ = ScorerKind::score_table;
        s.table_ = std::move(table);
        return s;
    }

    ScorerKind kind() const { return kind_; }

    double score(const Sentence& src, const Sentence& tgt) const {
        switch (kind_) {
            case ScorerKind::embedding_cosine:
                return cosine(sentence_vector(src), sentence_vector(tgt));
            case ScorerKind::bagofwords_cosine:
                return bag_cosine(src, tgt);
            case ScorerKind::score_table: {
                if (src.id < 0 || tgt.id < 0)
                    throw std::runtime_error("score table: sentence without a line id: " +
                                             (src.id < 0 ? src.raw : tgt.raw));
                auto it = table_.entries.find(ScoreTable::key(src.id, tgt.id));
                if (it == table_.entries.end())
                    throw std::runtime_error("score table: no score for pair (" + std::to_string(src.id) +
                                             ", " + std::to_string(tgt.id) + ")");
                return it->second;
            }
        }
        throw std::logic_error("unreachable scorer kind");
    }

    // A stored whole-sentence vector (keyed by raw text) takes precedence;
    // otherwise the mean of the token vectors.
    std::vector<double> sentence_vector(const Sentence& s) const {
        if (embeddings_.contains(s.raw)) return embeddings_.at(s.raw);
        if (s.tokens.empty()) throw std::runtime_error("embedding scorer: empty sentence");
        std::vector<double> mean(static_cast<std::size_t>(embeddings_.dim), 0.0);
        for (const auto& tok : s.tokens) {
            auto it = embeddings_.entries.find(tok);
            if (it == embeddings_.entries.end())
                throw std::runtime_error("embedding scorer: no vector for token '" + tok +
                                         "' in sentence: " + s.raw);
            for (std::size_t i = 0; i < mean.size(); ++i) mean[i] += it->second[i];
        }
        for (double& x : mean) x /= static_cast<double>(s.tokens.size());
        return mean;
    }

private:
    double bag_cosine(const Sentence& src, const Sentence& tgt) const {
        std::unordered_map<std::string, int> sbag, tbag;
        for (const auto& tok : src.tokens) {
            auto it = dict_.find(tok);
            ++sbag[it == dict_.end() ? tok : it->second];
        }
        for (const auto& tok : tgt.tokens) ++tbag[tok];
        double dot = 0, ns = 0, nt = 0;
        for (const auto& [tok, c] : sbag) {
            ns += static_cast<double>(c) * c;
            auto it = tbag.find(tok);
            if (it != tbag.end()) dot += static_cast<double>(c) * it->second;
        }
        for (const auto& [tok, c] : tbag) nt += static_cast<double>(c) * c;
        if (ns == 0.0 || nt == 0.0) return 0.0;
        return dot / (std::sqrt(ns) * std::sqrt(nt));
    }

    ScorerKind kind_ = ScorerKind::embedding_cosine;
    EmbeddingTable embeddings_;
    TokenDict dict_;
    ScoreTable table_;
};

inline double score_sentence_pair(const Scorer& scorer, const Sentence& src, const Sentence& tgt) {
    return scorer.score(src, tgt);
}

// ---------------------------------------------------------------------------
// Synthetic embeddings for cipher tasks.
//
// Source tokens get random unit vectors; each cipher-linked target token is a
// unit vector with expected cosine `relatedness` to its source counterpart.
// relatedness 1 makes clean pairs score exactly 1, lower values smear the
// clean score distribution into the range misaligned picks can reach.
inline EmbeddingTable make_synthetic_embeddings(
    const std::vector<std::pair<std::string, std::string>>& cipher_dict, int dim,
    double relatedness, std::uint64_t seed) {
    if (dim < 2) throw std::invalid_argument("synthetic embeddings: dim must be >= 2");
    if (relatedness < 0.0 || relatedness > 1.0)
        throw std::invalid_argument("synthetic embeddings: relatedness must be in [0,1]");
    auto eng = make_engine(derive_seed(seed, "synth.embeddings"));
    std::normal_distribution<double> gauss(0.0, 1.0);
    auto random_unit = [&] {
        std::vector<double> v(static_cast<std::size_t>(dim));
        double norm = 0;
        do {
            norm = 0;
            for (double& x : v) {
                x = gauss(eng);
                norm += x * x;
            }
        } while (norm == 0.0);
        norm = std::sqrt(norm);
        for (double& x : v) x /= norm;
        return v;
    };
    EmbeddingTable table;
    for (const auto& [src_tok, tgt_tok] : cipher_dict) {
        auto e = random_unit();
        auto g = random_unit();
        std::vector<double> t(static_cast<std::size_t>(dim));
        double mix = std::sqrt(std::max(0.0, 1.0 - relatedness * relatedness));
        double norm = 0;
        for (int i = 0; i < dim; ++i) {
            t[static_cast<std::size_t>(i)] =
                relatedness * e[static_cast<std::size_t>(i)] + mix * g[static_cast<std::size_t>(i)];
            norm += t[static_cast<std::size_t>(i)] * t[static_cast<std::size_t>(i)];
        }
        norm = std::sqrt(norm);
        for (double& x : t) x /= norm;
        table.insert(src_tok, std::move(e));
        table.insert(tgt_tok, std::move(t));
    }
    return table;
}

}  // namespace nrmt
