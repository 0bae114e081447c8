#include <catch2/catch_amalgamated.hpp>

#include <unordered_set>

#include "nrmt/simnoise.hpp"

using namespace nrmt;
using Catch::Matchers::WithinAbs;

namespace {

Sentence sent(const std::string& text, int id = -1) {
    return make_sentence(text, TokenScheme::whitespace, id);
}

// Independent re-simulation of the scored misalignment pass: same surface
// predicates, first-k admission in pool order, argmax score with lowest-index
// ties, chosen target removed. Used to cross-check the implementation.
struct ResimResult {
    std::vector<int> chosen;  // pool index per source, -1 when no candidate
};

ResimResult resimulate(const ParallelCorpus& corpus, const NoiseGenSpec& spec,
                       const Scorer& scorer) {
    const std::size_t n = corpus.size();
    std::vector<bool> avail(n, true);
    ResimResult r;
    r.chosen.assign(n, -1);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> cands;
        for (std::size_t j = 0; j < n && static_cast<int>(cands.size()) < spec.candidate_k; ++j) {
            if (j == i || !avail[j]) continue;
            const Sentence& t = corpus.pairs[j].tgt;
            if (std::abs(t.length() - corpus.pairs[i].src.length()) >= spec.length_tol) continue;
            if (!(word_overlap_ratio(t, corpus.pairs[i].tgt) > spec.overlap_min)) continue;
            cands.push_back(j);
        }
        if (cands.empty()) continue;
        std::size_t best = cands[0];
        double best_score = scorer.score(corpus.pairs[i].src, corpus.pairs[best].tgt);
        for (std::size_t c = 1; c < cands.size(); ++c) {
            double s = scorer.score(corpus.pairs[i].src, corpus.pairs[cands[c]].tgt);
            if (s > best_score) {
                best_score = s;
                best = cands[c];
            }
        }
        r.chosen[i] = static_cast<int>(best);
        avail[best] = false;
    }
    return r;
}

ParallelCorpus small_synth(int size, std::uint64_t seed, int vocab = 10, int len_min = 5,
                           int len_max = 9) {
    SynthTaskSpec spec;
    spec.vocab_size = vocab;
    spec.len_min = len_min;
    spec.len_max = len_max;
    spec.corpus_size = size;
    spec.seed = seed;
    return generate_synthetic_corpus(spec);
}

Scorer cipher_bow_scorer(std::uint64_t seed, int vocab = 10) {
    SynthTaskSpec spec;
    spec.vocab_size = vocab;
    spec.seed = seed;
    auto dict_pairs = synth_cipher_dict(spec);
    return Scorer::bagofwords_cosine(TokenDict(dict_pairs.begin(), dict_pairs.end()));
}

}  // namespace

TEST_CASE("word overlap ratio is Jaccard over token types", "[simnoise]") {
    CHECK_THAT(word_overlap_ratio(sent("a b c"), sent("b c d")), WithinAbs(0.5, 1e-12));
    CHECK_THAT(word_overlap_ratio(sent("a b"), sent("b a a")), WithinAbs(1.0, 1e-12));
    CHECK_THAT(word_overlap_ratio(sent("a b"), sent("c d")), WithinAbs(0.0, 1e-12));
    CHECK(word_overlap_ratio(Sentence{}, Sentence{}) == 0.0);
    // symmetry
    CHECK(word_overlap_ratio(sent("a x"), sent("x y z")) ==
          word_overlap_ratio(sent("x y z"), sent("a x")));
}

TEST_CASE("select_misaligned_target follows the two-step contract", "[simnoise]") {
    NoiseGenSpec spec;
    spec.length_tol = 2;
    spec.overlap_min = 0.4;
    spec.seed = 0;

    Sentence src = sent("s1 s2 s3", 0);
    Sentence true_tgt = sent("x y z", 0);

    SECTION("singleton candidate wins regardless of score") {
        std::vector<Sentence> pool{sent("x y q", 10), sent("far far far far far far", 11)};
        ScoreTable st;
        st.entries[ScoreTable::key(0, 10)] = -5.0;
        auto pick = select_misaligned_target(src, true_tgt, pool, spec, Scorer::score_table(st));
        REQUIRE(pick.has_value());
        CHECK(pick->pool_index == 0);
        CHECK(pick->target.raw == "x y q");
    }

    SECTION("highest score among passing candidates wins") {
        std::vector<Sentence> pool{sent("x y q", 10), sent("x z r", 11)};
        ScoreTable st;
        st.entries[ScoreTable::key(0, 10)] = 0.7;
        st.entries[ScoreTable::key(0, 11)] = 0.9;
        auto pick = select_misaligned_target(src, true_tgt, pool, spec, Scorer::score_table(st));
        REQUIRE(pick.has_value());
        CHECK(pick->pool_index == 1);
    }

    SECTION("score ties break to the lowest pool index") {
        std::vector<Sentence> pool{sent("x y q", 10), sent("x z r", 11)};
        ScoreTable st;
        st.entries[ScoreTable::key(0, 10)] = 0.9;
        st.entries[ScoreTable::key(0, 11)] = 0.9;
        auto pick = select_misaligned_target(src, true_tgt, pool, spec, Scorer::score_table(st));
        REQUIRE(pick.has_value());
        CHECK(pick->pool_index == 0);
    }

    SECTION("empty candidate list yields none") {
        std::vector<Sentence> pool{sent("x y q r s t u v", 10)};  // fails the length window
        ScoreTable st;
        auto pick = select_misaligned_target(src, true_tgt, pool, spec, Scorer::score_table(st));
        CHECK_FALSE(pick.has_value());
    }

    SECTION("scorer failures carry the offending pair") {
        std::vector<Sentence> pool{sent("x y q", 10)};
        ScoreTable st;  // empty: every lookup fails
        CHECK_THROWS(select_misaligned_target(src, true_tgt, pool, spec, Scorer::score_table(st)));
    }
}

TEST_CASE("forced matching: one admissible foreign target each", "[simnoise]") {
    // Length tolerance 1 requires equal token counts, so each source admits
    // exactly one foreign target.
    ParallelCorpus corpus;
    corpus.pairs.push_back({sent("a b c", 0), sent("x y z w", 0)});
    corpus.pairs.push_back({sent("a b c d", 1), sent("x y z w v", 1)});
    corpus.pairs.push_back({sent("a b c d e", 2), sent("x y z", 2)});

    NoiseGenSpec spec;
    spec.length_tol = 1;
    spec.overlap_min = 0.4;
    auto result = generate_misaligned_corpus(corpus, spec, Scorer::bagofwords_cosine());

    REQUIRE(result.corpus.size() == 3);
    CHECK(result.fallback_count == 0);
    CHECK(result.corpus.pairs[0].tgt.raw == "x y z");      // the only length-3 target
    CHECK(result.corpus.pairs[1].tgt.raw == "x y z w");    // the only length-4 target
    CHECK(result.corpus.pairs[2].tgt.raw == "x y z w v");  // the only length-5 target
    for (auto prov : result.corpus.provenance) CHECK(prov == Provenance::mis_scored);
}

TEST_CASE("misaligned output never carries the clean label", "[simnoise]") {
    auto corpus = small_synth(60, 3);
    NoiseGenSpec spec;
    spec.seed = 3;
    auto result = generate_misaligned_corpus(corpus, spec, cipher_bow_scorer(3));
    for (auto prov : result.corpus.provenance) CHECK(prov != Provenance::clean);
}

TEST_CASE("misaligned targets are distinct, foreign, and drawn from the pool", "[simnoise]") {
    auto corpus = small_synth(120, 9);
    NoiseGenSpec spec;
    spec.seed = 9;
    auto result = generate_misaligned_corpus(corpus, spec, cipher_bow_scorer(9));

    std::unordered_set<std::string> pool;
    for (const auto& p : corpus.pairs) pool.insert(p.tgt.raw);
    std::unordered_set<std::string> used;
    for (std::size_t i = 0; i < result.corpus.size(); ++i) {
        const auto& out = result.corpus.pairs[i];
        CHECK(out.src.raw == corpus.pairs[i].src.raw);
        CHECK(out.tgt.raw != corpus.pairs[i].tgt.raw);  // never keeps its own target
        CHECK(pool.count(out.tgt.raw) == 1);
        CHECK(used.insert(out.tgt.raw).second);  // no reuse
    }
}

TEST_CASE("mis-scored pairs satisfy the surface predicates post hoc", "[simnoise]") {
    auto corpus = small_synth(100, 21);
    NoiseGenSpec spec;
    spec.seed = 21;
    auto result = generate_misaligned_corpus(corpus, spec, cipher_bow_scorer(21));
    int scored = 0;
    for (std::size_t i = 0; i < result.corpus.size(); ++i) {
        if (result.corpus.provenance[i] != Provenance::mis_scored) continue;
        ++scored;
        const Sentence& chosen = result.corpus.pairs[i].tgt;
        CHECK(std::abs(chosen.length() - corpus.pairs[i].src.length()) < spec.length_tol);
        CHECK(word_overlap_ratio(chosen, corpus.pairs[i].tgt) > spec.overlap_min);
    }
    CHECK(scored > 0);
}

TEST_CASE("brute-force re-simulation matches the implementation", "[simnoise]") {
    for (std::uint64_t seed : {1ULL, 7ULL, 33ULL}) {
        auto corpus = small_synth(80, seed);
        NoiseGenSpec spec;
        spec.seed = seed;
        spec.candidate_k = 10;
        auto scorer = cipher_bow_scorer(seed);
        auto result = generate_misaligned_corpus(corpus, spec, scorer);
        auto oracle = resimulate(corpus, spec, scorer);
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            if (oracle.chosen[i] < 0) {
                CHECK(result.corpus.provenance[i] == Provenance::mis_random);
            } else {
                CHECK(result.corpus.provenance[i] == Provenance::mis_scored);
                CHECK(result.corpus.pairs[i].tgt.raw ==
                      corpus.pairs[static_cast<std::size_t>(oracle.chosen[i])].tgt.raw);
            }
        }
    }
}

TEST_CASE("scored selection beats random selection on average", "[simnoise]") {
    auto corpus = small_synth(200, 77);
    NoiseGenSpec spec;
    spec.seed = 77;
    auto scorer = cipher_bow_scorer(77);
    auto result = generate_misaligned_corpus(corpus, spec, scorer);

    double chosen_sum = 0.0;
    long chosen_n = 0;
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        if (result.corpus.provenance[i] != Provenance::mis_scored) continue;
        chosen_sum += scorer.score(corpus.pairs[i].src, result.corpus.pairs[i].tgt);
        ++chosen_n;
    }
    REQUIRE(chosen_n > 100);

    // Monte-Carlo oracle: random foreign targets for the same sources.
    auto eng = make_engine(123);
    std::uniform_int_distribution<std::size_t> pick(0, corpus.size() - 1);
    double random_sum = 0.0;
    long random_n = 0;
    for (int rep = 0; rep < 5; ++rep) {
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            std::size_t j = pick(eng);
            while (j == i) j = pick(eng);
            random_sum += scorer.score(corpus.pairs[i].src, corpus.pairs[j].tgt);
            ++random_n;
        }
    }
    CHECK(chosen_sum / chosen_n > random_sum / random_n);
}

TEST_CASE("shuffle_misalign produces a seeded derangement", "[simnoise]") {
    SECTION("two pairs means swap") {
        ParallelCorpus corpus;
        corpus.pairs.push_back({sent("a"), sent("x")});
        corpus.pairs.push_back({sent("b"), sent("y")});
        auto out = shuffle_misalign(corpus, 0);
        CHECK(out.pairs[0].tgt.raw == "y");
        CHECK(out.pairs[1].tgt.raw == "x");
        CHECK(out.provenance[0] == Provenance::mis_random);
    }
    SECTION("no fixed point, deterministic per seed") {
        auto corpus = small_synth(50, 5);
        auto a = shuffle_misalign(corpus, 11);
        auto b = shuffle_misalign(corpus, 11);
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            CHECK(a.pairs[i].tgt.raw != corpus.pairs[i].tgt.raw);
            CHECK(a.pairs[i].tgt.raw == b.pairs[i].tgt.raw);
            CHECK(a.pairs[i].src.raw == corpus.pairs[i].src.raw);
        }
    }
    SECTION("too small corpora are rejected") {
        ParallelCorpus corpus;
        corpus.pairs.push_back({sent("a"), sent("x")});
        CHECK_THROWS(shuffle_misalign(corpus, 0));
    }
}

TEST_CASE("inject_noise replaces exactly round(rate*N) pairs", "[simnoise]") {
    auto clean = small_synth(1000, 4, 12, 4, 9);
    auto noise = shuffle_misalign(clean, 99);

    SECTION("rate zero is the identity") {
        auto [corpus, mask] = inject_noise(clean, noise, 0.0, 1);
        CHECK(mask.noisy_count() == 0);
        for (std::size_t i = 0; i < clean.size(); ++i)
            CHECK(corpus.pairs[i].tgt.raw == clean.pairs[i].tgt.raw);
    }
    SECTION("rate one replaces everything") {
        auto [corpus, mask] = inject_noise(clean, noise, 1.0, 1);
        CHECK(mask.noisy_count() == clean.size());
        for (std::size_t i = 0; i < clean.size(); ++i)
            CHECK(corpus.pairs[i].tgt.raw == noise.pairs[i].tgt.raw);
    }
    SECTION("rate 0.3 on 1000 pairs marks 300 noisy, matched by index") {
        auto [corpus, mask] = inject_noise(clean, noise, 0.3, 1);
        CHECK(mask.noisy_count() == 300);
        CHECK(corpus.size() == 1000);
        for (std::size_t i = 0; i < clean.size(); ++i) {
            CHECK(corpus.pairs[i].src.raw == clean.pairs[i].src.raw);  // matched mode keeps sources
            if (mask.labels[i] != Provenance::clean) {
                CHECK(corpus.pairs[i].tgt.raw == noise.pairs[i].tgt.raw);
                CHECK(mask.labels[i] == Provenance::mis_random);
            } else {
                CHECK(corpus.pairs[i].tgt.raw == clean.pairs[i].tgt.raw);
            }
        }
    }
    SECTION("unmatched noise pools draw sequentially and can run dry") {
        ParallelCorpus pool;
        pool.pairs.push_back({sent("p1"), sent("q1")});
        pool.pairs.push_back({sent("p2"), sent("q2")});
        auto small = small_synth(10, 6);
        auto [corpus, mask] = inject_noise(small, pool, 0.2, 3);
        CHECK(mask.noisy_count() == 2);
        long pool_hits = 0;
        for (std::size_t i = 0; i < corpus.size(); ++i)
            if (mask.labels[i] == Provenance::pool) {
                ++pool_hits;
                CHECK((corpus.pairs[i].src.raw == "p1" || corpus.pairs[i].src.raw == "p2"));
            }
        CHECK(pool_hits == 2);
        CHECK_THROWS(inject_noise(small, pool, 0.5, 3));
    }
    SECTION("invalid rates are rejected") {
        CHECK_THROWS(inject_noise(clean, noise, -0.1, 1));
        CHECK_THROWS(inject_noise(clean, noise, 1.1, 1));
    }
}

TEST_CASE("mask io round trips", "[simnoise]") {
    NoiseMask mask;
    mask.labels = {Provenance::clean, Provenance::mis_scored, Provenance::pool,
                   Provenance::mis_random};
    auto path = (std::filesystem::temp_directory_path() / "nrmt_mask.tsv").string();
    write_mask(mask, path);
    auto back = read_mask(path);
    CHECK(back.labels == mask.labels);
    std::remove(path.c_str());
}
