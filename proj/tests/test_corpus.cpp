#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "nrmt/corpus.hpp"

using namespace nrmt;

namespace {

std::string temp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / name).string();
}

}  // namespace

TEST_CASE("tokenize splits by scheme", "[corpus]") {
    CHECK(tokenize("a b a", TokenScheme::whitespace) == std::vector<std::string>{"a", "b", "a"});
    CHECK(tokenize("", TokenScheme::whitespace).empty());
    CHECK(tokenize("ab", TokenScheme::character) == std::vector<std::string>{"a", "b"});
    CHECK(tokenize("  a\t b ", TokenScheme::whitespace) == std::vector<std::string>{"a", "b"});
}

TEST_CASE("tokenize handles multibyte utf-8 and rejects invalid bytes", "[corpus]") {
    auto toks = tokenize("h\xc3\xa9", TokenScheme::character);
    REQUIRE(toks.size() == 2);
    CHECK(toks[1] == "\xc3\xa9");
    CHECK_THROWS(tokenize("\xff", TokenScheme::whitespace));
    CHECK_THROWS(tokenize("\xc3", TokenScheme::character));  // truncated sequence
}

TEST_CASE("build_vocab assigns ids beyond reserved ones", "[corpus]") {
    ParallelCorpus corpus;
    corpus.pairs.push_back({make_sentence("a b", TokenScheme::whitespace),
                            make_sentence("x", TokenScheme::whitespace)});

    auto shared = build_vocab(corpus, 1, /*shared=*/true);
    CHECK(shared.src.size() == Vocab::num_reserved + 3);
    CHECK(shared.src.lookup("a") >= Vocab::num_reserved);
    CHECK(shared.src.lookup("b") >= Vocab::num_reserved);
    CHECK(shared.src.lookup("x") >= Vocab::num_reserved);

    auto strict = build_vocab(corpus, 2, /*shared=*/true);
    CHECK(strict.src.size() == Vocab::num_reserved);
    CHECK(strict.src.lookup("a") == Vocab::unk_id);
    CHECK(strict.src.lookup("b") == Vocab::unk_id);
    CHECK(strict.src.lookup("x") == Vocab::unk_id);
}

TEST_CASE("build_vocab order is frequency desc then lexicographic, deterministic", "[corpus]") {
    ParallelCorpus corpus;
    corpus.pairs.push_back({make_sentence("b b a c", TokenScheme::whitespace),
                            make_sentence("z", TokenScheme::whitespace)});
    auto v1 = build_vocab(corpus, 1);
    auto v2 = build_vocab(corpus, 1);
    CHECK(v1.src.id_to_token == v2.src.id_to_token);
    CHECK(v1.tgt.id_to_token == v2.tgt.id_to_token);
    CHECK(v1.src.lookup("b") == Vocab::num_reserved);      // most frequent first
    CHECK(v1.src.lookup("a") == Vocab::num_reserved + 1);  // tie broken lexicographically
    CHECK(v1.src.lookup("c") == Vocab::num_reserved + 2);
    CHECK_THROWS(build_vocab(ParallelCorpus{}, 1));
}

TEST_CASE("reserved ids are fixed", "[corpus]") {
    Vocab v;
    CHECK(v.lookup("<pad>") == 0);
    CHECK(v.lookup("<bos>") == 1);
    CHECK(v.lookup("<eos>") == 2);
    CHECK(v.lookup("<unk>") == 3);
    CHECK(v.lookup("never-seen") == Vocab::unk_id);
}

TEST_CASE("synthetic corpus applies the cipher exactly", "[corpus]") {
    SynthTaskSpec spec;
    spec.vocab_size = 10;
    spec.len_min = 3;
    spec.len_max = 8;
    spec.corpus_size = 50;
    spec.seed = 42;

    auto corpus = generate_synthetic_corpus(spec);
    REQUIRE(corpus.size() == 50);
    auto dict = synth_cipher_dict(spec);
    std::unordered_map<std::string, std::string> map(dict.begin(), dict.end());
    for (const auto& p : corpus.pairs) {
        REQUIRE(p.src.tokens.size() == p.tgt.tokens.size());
        for (std::size_t i = 0; i < p.src.tokens.size(); ++i)
            CHECK(p.tgt.tokens[i] == map.at(p.src.tokens[i]));
    }
    for (auto prov : corpus.provenance) CHECK(prov == Provenance::clean);
}

TEST_CASE("synthetic corpus reversal transform", "[corpus]") {
    SynthTaskSpec spec;
    spec.vocab_size = 10;
    spec.len_min = 2;
    spec.len_max = 6;
    spec.corpus_size = 20;
    spec.transform = SynthTransform::cipher_reverse;
    spec.seed = 7;

    auto corpus = generate_synthetic_corpus(spec);
    auto dict = synth_cipher_dict(spec);
    std::unordered_map<std::string, std::string> map(dict.begin(), dict.end());
    for (const auto& p : corpus.pairs) {
        const std::size_t n = p.src.tokens.size();
        REQUIRE(p.tgt.tokens.size() == n);
        for (std::size_t i = 0; i < n; ++i)
            CHECK(p.tgt.tokens[n - 1 - i] == map.at(p.src.tokens[i]));
    }
}

TEST_CASE("synthetic generation is deterministic and sources are distinct", "[corpus]") {
    SynthTaskSpec spec;
    spec.vocab_size = 11;
    spec.len_min = 2;
    spec.len_max = 5;
    spec.corpus_size = 200;
    spec.seed = 1234;

    auto a = generate_synthetic_corpus(spec);
    auto b = generate_synthetic_corpus(spec);
    REQUIRE(a.size() == b.size());
    std::unordered_set<std::string> sources;
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a.pairs[i].src.raw == b.pairs[i].src.raw);
        CHECK(a.pairs[i].tgt.raw == b.pairs[i].tgt.raw);
        CHECK(sources.insert(a.pairs[i].src.raw).second);
    }
}

TEST_CASE("synthetic generation rejects oversized requests", "[corpus]") {
    SynthTaskSpec spec;
    spec.vocab_size = 10;
    spec.len_min = 1;
    spec.len_max = 1;
    spec.corpus_size = 11;  // only 10 distinct single-token sources exist
    CHECK_THROWS(generate_synthetic_corpus(spec));
}

TEST_CASE("tsv parse handles pairs and rejects missing fields", "[corpus]") {
    auto path = temp_path("nrmt_corpus_basic.tsv");
    {
        std::ofstream out(path, std::ios::binary);
        out << "hallo\thello\n";
    }
    auto corpus = parse_parallel_tsv(path);
    REQUIRE(corpus.size() == 1);
    CHECK(corpus.pairs[0].src.raw == "hallo");
    CHECK(corpus.pairs[0].tgt.raw == "hello");

    {
        std::ofstream out(path, std::ios::binary);
        out << "onlysource\n";
    }
    CHECK_THROWS_WITH(parse_parallel_tsv(path), Catch::Matchers::ContainsSubstring(":1"));
    std::remove(path.c_str());
    CHECK_THROWS(parse_parallel_tsv(path));
}

TEST_CASE("tsv round-trip is identity on random corpora", "[corpus]") {
    auto path = temp_path("nrmt_corpus_roundtrip.tsv");
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SynthTaskSpec spec;
        spec.vocab_size = 10 + static_cast<int>(seed % 5);
        spec.len_min = 1;
        spec.len_max = 9;
        spec.corpus_size = 100;
        spec.seed = seed;
        auto corpus = generate_synthetic_corpus(spec);
        if (seed % 2) {  // exercise the provenance column too
            for (std::size_t i = 0; i < corpus.size(); i += 3)
                corpus.provenance[i] = Provenance::mis_random;
        }
        write_parallel_tsv(corpus, path);
        auto back = parse_parallel_tsv(path);
        REQUIRE(back.size() == corpus.size());
        for (std::size_t i = 0; i < corpus.size(); ++i) {
            CHECK(back.pairs[i].src.raw == corpus.pairs[i].src.raw);
            CHECK(back.pairs[i].tgt.raw == corpus.pairs[i].tgt.raw);
            CHECK(back.pairs[i].src.tokens == corpus.pairs[i].src.tokens);
        }
        if (corpus.has_provenance())
            for (std::size_t i = 0; i < corpus.size(); ++i)
                CHECK(back.provenance[i] == corpus.provenance[i]);
    }
    std::remove(path.c_str());
}

TEST_CASE("tsv write rejects embedded tabs", "[corpus]") {
    ParallelCorpus corpus;
    Sentence bad = make_sentence("a", TokenScheme::whitespace);
    bad.raw = "a\tb";
    corpus.pairs.push_back({bad, make_sentence("x", TokenScheme::whitespace)});
    CHECK_THROWS(write_parallel_tsv(corpus, temp_path("nrmt_corpus_bad.tsv")));
}
