#include <doctest.h>

#include <cmath>
#include <map>
#include <random>
#include <set>

#include "r2p/retrieval.hpp"
#include "r2p/util.hpp"
#include "test_support.hpp"

using namespace r2p;

namespace {

ProfileEntry entry_from_text(const std::string& id, const std::string& text) {
    ProfileEntry e;
    e.entry_id = id;
    e.fields = {{"title", text}};
    e.flat_text = text;
    return e;
}

// Brute-force scorer evaluated directly from the formula: recounts document
// statistics from scratch on every call.
double brute_force_score(const std::vector<std::string>& docs,
                         std::size_t target,
                         const std::string& query,
                         double k1 = 1.5,
                         double b = 0.75) {
    std::vector<std::vector<std::string>> tokens;
    for (const auto& d : docs) tokens.push_back(tokenize(d));
    double n = static_cast<double>(docs.size());
    double total_len = 0;
    for (const auto& t : tokens) total_len += static_cast<double>(t.size());
    double avg = total_len / n;

    std::set<std::string> qset;
    for (const auto& t : tokenize(query)) qset.insert(t);

    double score = 0.0;
    for (const auto& term : qset) {
        double tf = 0.0;
        for (const auto& tok : tokens[target]) {
            if (tok == term) tf += 1.0;
        }
        if (tf == 0.0) continue;
        double df = 0.0;
        for (const auto& doc : tokens) {
            for (const auto& tok : doc) {
                if (tok == term) {
                    df += 1.0;
                    break;
                }
            }
        }
        double idf = std::log((n - df + 0.5) / (df + 0.5) + 1.0);
        double dl = static_cast<double>(tokens[target].size());
        score += idf * (tf * (k1 + 1.0)) / (tf + k1 * (1.0 - b + b * dl / avg));
    }
    return score;
}

std::vector<std::string> random_docs(std::mt19937& rng, std::size_t max_docs, std::size_t max_tokens) {
    static const std::vector<std::string> vocab = {"alpha", "beta", "gamma", "delta", "epsilon",
                                                   "zeta", "eta", "theta", "iota", "kappa"};
    std::uniform_int_distribution<std::size_t> n_docs(1, max_docs);
    std::uniform_int_distribution<std::size_t> n_tokens(1, max_tokens);
    std::uniform_int_distribution<std::size_t> word(0, vocab.size() - 1);
    std::vector<std::string> docs(n_docs(rng));
    for (auto& d : docs) {
        std::size_t len = n_tokens(rng);
        for (std::size_t i = 0; i < len; ++i) {
            if (i) d += ' ';
            d += vocab[word(rng)];
        }
    }
    return docs;
}

}  // namespace

TEST_CASE("tokenize lowercases and splits on non-alphanumeric runs") {
    CHECK(tokenize("") == std::vector<std::string>{});
    CHECK(tokenize("The cat, the CAT.") == std::vector<std::string>{"the", "cat", "the", "cat"});
    CHECK(tokenize("BM25-ranking v2") == std::vector<std::string>{"bm25", "ranking", "v2"});
    CHECK(tokenize("  ,,  ") == std::vector<std::string>{});
}

TEST_CASE("index statistics on tiny corpora") {
    SUBCASE("single doc") {
        Bm25Index idx({entry_from_text("d1", "a b a")});
        CHECK(idx.n_docs() == 1);
        CHECK(idx.doc_len("d1") == 3);
        CHECK(idx.avg_len() == doctest::Approx(3.0));
        CHECK(idx.df("a") == 1);
        CHECK(idx.df("b") == 1);
    }
    SUBCASE("two docs") {
        Bm25Index idx({entry_from_text("d1", "x"), entry_from_text("d2", "x y")});
        CHECK(idx.avg_len() == doctest::Approx(1.5));
        CHECK(idx.df("x") == 2);
        CHECK(idx.df("y") == 1);
    }
    SUBCASE("empty entry list rejected") {
        CHECK_THROWS_AS(Bm25Index({}), ValidationError);
    }
}

TEST_CASE("index statistics equal a brute-force recount on random docs") {
    std::mt19937 rng(2024);
    auto docs = random_docs(rng, 50, 8);
    std::vector<ProfileEntry> entries;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        entries.push_back(entry_from_text("d" + std::to_string(i), docs[i]));
    }
    Bm25Index idx(entries);

    std::map<std::string, std::size_t> df;
    std::size_t total = 0;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto toks = tokenize(docs[i]);
        CHECK(idx.doc_len(entries[i].entry_id) == toks.size());
        total += toks.size();
        for (const auto& t : std::set<std::string>(toks.begin(), toks.end())) ++df[t];
    }
    CHECK(idx.avg_len() == doctest::Approx(static_cast<double>(total) / docs.size()));
    for (const auto& [term, count] : df) CHECK(idx.df(term) == count);
}

TEST_CASE("score: worked example and zero overlap") {
    Bm25Index idx({entry_from_text("d1", "a"), entry_from_text("d2", "b")});
    // tf=1, dl=1, avg=1, IDF = ln((2-1+0.5)/(1+0.5)+1) = ln 2, denominator
    // 1 + 1.5*(1-0.75+0.75) = 2.5, score = ln 2 * 2.5/2.5.
    CHECK(idx.score(tokenize("a"), "d1") == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(idx.score(tokenize("zzz"), "d1") == 0.0);
    CHECK_THROWS_AS(idx.score(tokenize("a"), "nope"), ValidationError);
}

TEST_CASE("score equals the brute-force oracle on random corpora") {
    std::mt19937 rng(7);
    for (int round = 0; round < 40; ++round) {
        auto docs = random_docs(rng, 30, 12);
        std::vector<ProfileEntry> entries;
        for (std::size_t i = 0; i < docs.size(); ++i) {
            entries.push_back(entry_from_text("d" + std::to_string(i), docs[i]));
        }
        Bm25Index idx(entries);
        auto query_docs = random_docs(rng, 1, 6);
        auto query = tokenize(query_docs[0]);
        for (std::size_t i = 0; i < docs.size(); ++i) {
            double expect = brute_force_score(docs, i, query_docs[0]);
            CHECK(std::abs(idx.score(query, entries[i].entry_id) - expect) < 1e-9);
        }
    }
}

TEST_CASE("scores are non-negative and monotone in tf") {
    // Same length, higher target-term count.
    Bm25Index low({entry_from_text("t", "red blue green"), entry_from_text("o", "gray gray")});
    Bm25Index high({entry_from_text("t", "red red green"), entry_from_text("o", "gray gray")});
    auto query = tokenize("red");
    CHECK(low.score(query, "t") >= 0.0);
    CHECK(high.score(query, "t") >= low.score(query, "t"));
}

TEST_CASE("select_context none strategy") {
    std::vector<ProfileEntry> profile = {entry_from_text("p1", "anything")};
    ContextSelection sel = select_context(profile, "query", ContextStrategy::None, 0);
    CHECK(sel.chosen.empty());
    CHECK_THROWS_AS(select_context(profile, "q", ContextStrategy::None, 1), ValidationError);
    CHECK_THROWS_AS(select_context({}, "q", ContextStrategy::Bm25, 1), ValidationError);
    CHECK_THROWS_AS(select_context(profile, "q", ContextStrategy::Bm25, 0), ValidationError);
}

TEST_CASE("select_context bm25 matches brute-force full-sort selection") {
    std::mt19937 rng(99);
    auto docs = random_docs(rng, 10, 10);
    while (docs.size() < 10) docs.push_back(docs.back() + " kappa");
    std::vector<ProfileEntry> profile;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        profile.push_back(entry_from_text("p" + std::to_string(i), docs[i]));
    }
    const std::string query = "alpha beta gamma";

    ContextSelection sel = select_context(profile, query, ContextStrategy::Bm25, 4);
    REQUIRE(sel.chosen.size() == 4);

    // Full sort on brute-force scores with the same tie-break.
    std::vector<std::pair<std::string, double>> scored;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        scored.emplace_back(profile[i].entry_id, brute_force_score(docs, i, query));
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.second != b.second) return a.second > b.second;
        return a.first < b.first;
    });
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(sel.chosen[i].first == scored[i].first);
        CHECK(std::abs(*sel.chosen[i].second - scored[i].second) < 1e-9);
    }

    SUBCASE("k past the profile size returns everything, score-sorted") {
        ContextSelection all = select_context(profile, query, ContextStrategy::Bm25, 64);
        REQUIRE(all.chosen.size() == profile.size());
        for (std::size_t i = 1; i < all.chosen.size(); ++i) {
            CHECK(*all.chosen[i - 1].second >= *all.chosen[i].second);
        }
    }
}

TEST_CASE("select_context bm25 is invariant to profile order and breaks ties by id") {
    std::vector<ProfileEntry> profile = {
        entry_from_text("b", "same words here"),
        entry_from_text("a", "same words here"),  // duplicate content
        entry_from_text("c", "unrelated filler tokens"),
    };
    ContextSelection sel = select_context(profile, "same words", ContextStrategy::Bm25, 2);
    REQUIRE(sel.chosen.size() == 2);
    CHECK(sel.chosen[0].first == "a");  // equal scores, ascending id
    CHECK(sel.chosen[1].first == "b");
    CHECK(*sel.chosen[0].second == *sel.chosen[1].second);

    std::vector<ProfileEntry> shuffled = {profile[2], profile[0], profile[1]};
    ContextSelection again = select_context(shuffled, "same words", ContextStrategy::Bm25, 2);
    REQUIRE(again.chosen.size() == 2);
    CHECK(again.chosen[0].first == sel.chosen[0].first);
    CHECK(again.chosen[1].first == sel.chosen[1].first);
}

TEST_CASE("select_context random is seeded and deterministic") {
    std::vector<ProfileEntry> profile;
    for (int i = 0; i < 8; ++i) {
        profile.push_back(entry_from_text("p" + std::to_string(i), "text " + std::to_string(i)));
    }
    CHECK_THROWS_AS(select_context(profile, "q", ContextStrategy::Random, 1), ValidationError);

    ContextSelection a = select_context(profile, "q", ContextStrategy::Random, 3, 11);
    ContextSelection b = select_context(profile, "q", ContextStrategy::Random, 3, 11);
    REQUIRE(a.chosen.size() == 3);
    CHECK(a.chosen == b.chosen);
    for (const auto& [id, score] : a.chosen) CHECK(!score.has_value());

    std::set<std::string> ids;
    for (const auto& [id, _] : a.chosen) ids.insert(id);
    CHECK(ids.size() == 3);  // without replacement
}

TEST_CASE("bm25 parameter validation") {
    std::vector<ProfileEntry> profile = {entry_from_text("p1", "a")};
    CHECK_THROWS_AS(Bm25Index(profile, -1.0, 0.75), ValidationError);
    CHECK_THROWS_AS(Bm25Index(profile, 1.5, 1.5), ValidationError);
}
