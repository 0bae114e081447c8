#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>

#include "nrmt/scorer.hpp"

using namespace nrmt;
using Catch::Matchers::WithinAbs;

namespace {

Sentence sent(const std::string& text) { return make_sentence(text, TokenScheme::whitespace); }

}  // namespace

TEST_CASE("cosine basics", "[scorer]") {
    CHECK_THAT(cosine({1, 2, 3}, {1, 2, 3}), WithinAbs(1.0, 1e-12));
    CHECK_THAT(cosine({1, 0}, {0, 1}), WithinAbs(0.0, 1e-12));
    CHECK_THAT(cosine({1, 2, 3}, {2, 4, 6}), WithinAbs(1.0, 1e-12));
    CHECK(cosine({0, 0}, {1, 1}) == 0.0);
    CHECK_THROWS(cosine({1, 2}, {1, 2, 3}));
}

TEST_CASE("embedding-cosine averages token vectors", "[scorer]") {
    EmbeddingTable table;
    table.insert("a", {1, 0});
    table.insert("b", {0, 1});
    table.insert("x", {1, 0});
    auto scorer = Scorer::embedding_cosine(table);

    CHECK_THAT(scorer.score(sent("a"), sent("x")), WithinAbs(1.0, 1e-12));
    CHECK_THAT(scorer.score(sent("a"), sent("b")), WithinAbs(0.0, 1e-12));
    // mean of a,b = (0.5,0.5): cos with (1,0) = 1/sqrt(2)
    CHECK_THAT(scorer.score(sent("a b"), sent("x")), WithinAbs(1.0 / std::sqrt(2.0), 1e-12));
    CHECK_THROWS_WITH(scorer.score(sent("a"), sent("missing")),
                      Catch::Matchers::ContainsSubstring("missing"));
}

TEST_CASE("stored sentence vectors take precedence over token means", "[scorer]") {
    EmbeddingTable table;
    table.insert("a", {1, 0});
    table.insert("b", {1, 0});
    table.insert("a b", {0, 1});  // whole-sentence entry
    auto emb = Scorer::embedding_cosine(table);
    CHECK_THAT(emb.score(sent("a b"), sent("a")), WithinAbs(0.0, 1e-12));
}

TEST_CASE("bagofwords-cosine maps source tokens through the dictionary", "[scorer]") {
    TokenDict dict{{"a", "x"}, {"b", "y"}};
    auto scorer = Scorer::bagofwords_cosine(dict);
    CHECK_THAT(scorer.score(sent("a b a"), sent("x y x")), WithinAbs(1.0, 1e-12));
    CHECK_THAT(scorer.score(sent("a b a"), sent("x x y")), WithinAbs(1.0, 1e-12));  // bags ignore order
    CHECK_THAT(scorer.score(sent("a"), sent("y")), WithinAbs(0.0, 1e-12));
    // without a dictionary the mapping is identity
    auto plain = Scorer::bagofwords_cosine();
    CHECK_THAT(plain.score(sent("u v"), sent("u v")), WithinAbs(1.0, 1e-12));
    CHECK_THAT(plain.score(sent("u"), sent("w")), WithinAbs(0.0, 1e-12));
}

TEST_CASE("score-table scorer keys by line ids and reports missing pairs", "[scorer]") {
    ScoreTable table;
    table.entries[ScoreTable::key(0, 1)] = 0.75;
    auto scorer = Scorer::score_table(table);
    Sentence a = make_sentence("hallo", TokenScheme::whitespace, 0);
    Sentence b = make_sentence("hello", TokenScheme::whitespace, 1);
    CHECK_THAT(scorer.score(a, b), WithinAbs(0.75, 1e-12));
    CHECK_THROWS(scorer.score(b, a));
    Sentence no_id = sent("x");
    CHECK_THROWS(scorer.score(no_id, b));
}

TEST_CASE("embedding table io round trips", "[scorer]") {
    auto path = (std::filesystem::temp_directory_path() / "nrmt_emb.tsv").string();
    EmbeddingTable table;
    table.insert("tok", {0.25, -1.5, 3.0});
    table.insert("s00", {1.0, 2.0, 4.0});
    write_embedding_table(table, path);
    auto back = read_embedding_table(path);
    REQUIRE(back.dim == 3);
    CHECK(back.at("tok") == std::vector<double>{0.25, -1.5, 3.0});
    CHECK(back.at("s00") == std::vector<double>{1.0, 2.0, 4.0});
    std::remove(path.c_str());
    CHECK_THROWS(read_embedding_table(path));
}

TEST_CASE("score table and token dict parsers", "[scorer]") {
    auto dir = std::filesystem::temp_directory_path();
    auto sp = (dir / "nrmt_scores.tsv").string();
    {
        std::ofstream out(sp, std::ios::binary);
        out << "0\t1\t0.9\n2\t3\t-0.5\n";
    }
    auto st = read_score_table(sp);
    CHECK_THAT(st.entries.at(ScoreTable::key(0, 1)), WithinAbs(0.9, 1e-12));
    CHECK_THAT(st.entries.at(ScoreTable::key(2, 3)), WithinAbs(-0.5, 1e-12));
    std::remove(sp.c_str());

    auto dp = (dir / "nrmt_dict.tsv").string();
    write_token_dict({{"a", "x"}, {"b", "y"}}, dp);
    auto dict = read_token_dict(dp);
    CHECK(dict.at("a") == "x");
    CHECK(dict.at("b") == "y");
    std::remove(dp.c_str());
}

TEST_CASE("synthetic embeddings hit the requested relatedness on average", "[scorer]") {
    SynthTaskSpec spec;
    spec.vocab_size = 40;
    spec.seed = 5;
    auto dict = synth_cipher_dict(spec);

    auto exact = make_synthetic_embeddings(dict, 8, 1.0, 11);
    for (const auto& [s, t] : dict)
        CHECK_THAT(cosine(exact.at(s), exact.at(t)), WithinAbs(1.0, 1e-9));

    auto fuzzy = make_synthetic_embeddings(dict, 16, 0.6, 11);
    double mean = 0.0;
    for (const auto& [s, t] : dict) mean += cosine(fuzzy.at(s), fuzzy.at(t));
    mean /= static_cast<double>(dict.size());
    CHECK_THAT(mean, WithinAbs(0.6, 0.1));
    CHECK_THROWS(make_synthetic_embeddings(dict, 1, 0.5, 0));
    CHECK_THROWS(make_synthetic_embeddings(dict, 8, 1.5, 0));
}
