#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dowser/tbr.hpp"

using namespace dowser;

namespace {

Post mk(PostId id, const std::string& text) {
    Post p;
    p.post_id = id;
    p.text = text;
    p.popularity = 0.5;
    return p;
}

std::set<PostId> ids_of(const std::vector<std::pair<PostId, double>>& hits) {
    std::set<PostId> out;
    for (const auto& [id, _] : hits) out.insert(id);
    return out;
}

// Straight-line filter: a post qualifies iff it contains every distinct query
// token.
std::set<PostId> naive_scan(const std::vector<Post>& posts, const TokenList& query) {
    std::set<PostId> out;
    for (const auto& p : posts) {
        TokenList toks = tokenize(p.text);
        std::set<std::string> have(toks.begin(), toks.end());
        bool all = true;
        for (const auto& t : query)
            if (!have.count(t)) {
                all = false;
                break;
            }
        if (all && !query.empty()) out.insert(p.post_id);
    }
    return out;
}

}  // namespace

TEST(IndexPost, PostingsContainPost) {
    InvertedIndex idx;
    idx.index_post(mk(5, "ask for raise"));
    EXPECT_EQ(*idx.posting_ids("ask"), std::vector<PostId>{5});
    EXPECT_EQ(*idx.posting_ids("for"), std::vector<PostId>{5});
    EXPECT_EQ(*idx.posting_ids("raise"), std::vector<PostId>{5});
    EXPECT_FALSE(idx.posting_ids("salary").has_value());
    EXPECT_EQ(idx.doc_len(5), 3u);
}

TEST(IndexPost, DuplicateIdRejected) {
    InvertedIndex idx;
    idx.index_post(mk(5, "once"));
    EXPECT_THROW(idx.index_post(mk(5, "twice")), std::invalid_argument);
    EXPECT_EQ(idx.doc_count(), 1u);
}

TEST(IndexPost, HundredPostsExhaustiveMembership) {
    InvertedIndex idx;
    std::mt19937_64 rng(11);
    std::vector<Post> posts;
    const char* vocab[] = {"alpha", "beta", "gamma", "delta", "epsilon",
                           "zeta",  "eta",  "theta", "iota",  "kappa"};
    for (PostId id = 1; id <= 100; ++id) {
        std::string text;
        std::size_t len = 3 + rng() % 6;
        for (std::size_t i = 0; i < len; ++i) {
            if (i) text += ' ';
            text += vocab[rng() % 10];
        }
        posts.push_back(mk(id, text));
        idx.index_post(posts.back());
    }
    for (const auto& p : posts) {
        for (const auto& t : tokenize(p.text)) {
            auto posting = idx.posting_ids(t);
            ASSERT_TRUE(posting.has_value()) << t;
            EXPECT_TRUE(std::binary_search(posting->begin(), posting->end(), p.post_id))
                << "post " << p.post_id << " missing from postings(" << t << ")";
        }
    }
}

TEST(IndexPost, PostingListsStayStrictlyAscending) {
    InvertedIndex idx;
    // Out-of-order ids.
    for (PostId id : {50, 3, 99, 12, 7}) idx.index_post(mk(id, "common token"));
    auto posting = *idx.posting_ids("common");
    for (std::size_t i = 1; i < posting.size(); ++i)
        EXPECT_LT(posting[i - 1], posting[i]);
}

TEST(Retrieve, IntersectionOfTwoTokens) {
    InvertedIndex idx;
    idx.index_post(mk(1, "a"));
    idx.index_post(mk(2, "a b"));
    idx.index_post(mk(3, "a b"));
    idx.index_post(mk(4, "b"));
    auto hits = idx.retrieve({"a", "b"}, 10);
    EXPECT_EQ(ids_of(hits), (std::set<PostId>{2, 3}));
}

TEST(Retrieve, AbsentTokenGivesEmptyResult) {
    InvertedIndex idx;
    idx.index_post(mk(1, "ask for raise"));
    EXPECT_TRUE(idx.retrieve({"ask", "promotion"}, 10).empty());
}

TEST(Retrieve, EmptyQueryTokensGiveEmptyResult) {
    InvertedIndex idx;
    idx.index_post(mk(1, "something"));
    EXPECT_TRUE(idx.retrieve({}, 10).empty());
}

TEST(Retrieve, LimitMustBePositive) {
    InvertedIndex idx;
    EXPECT_THROW(idx.retrieve({"a"}, 0), std::invalid_argument);
}

TEST(Retrieve, MatchesNaiveScanOnRandomCorpus) {
    std::mt19937_64 rng(42);
    std::vector<std::string> vocab;
    for (int i = 0; i < 60; ++i) vocab.push_back("w" + std::to_string(i));
    std::vector<Post> posts;
    InvertedIndex idx;
    for (PostId id = 1; id <= 1000; ++id) {
        std::string text;
        std::size_t len = 4 + rng() % 8;
        for (std::size_t i = 0; i < len; ++i) {
            if (i) text += ' ';
            text += vocab[rng() % vocab.size()];
        }
        posts.push_back(mk(id, text));
        idx.index_post(posts.back());
    }
    for (int q = 0; q < 50; ++q) {
        TokenList query;
        std::size_t n = 1 + rng() % 3;
        for (std::size_t i = 0; i < n; ++i) query.push_back(vocab[rng() % vocab.size()]);
        EXPECT_EQ(ids_of(idx.retrieve(query, 5000)), naive_scan(posts, query))
            << "query " << q;
    }
}

TEST(Retrieve, AddingTokenNeverGrowsCandidateSet) {
    std::mt19937_64 rng(7);
    InvertedIndex idx;
    const char* vocab[] = {"red", "green", "blue", "cyan", "teal"};
    for (PostId id = 1; id <= 200; ++id) {
        std::string text;
        for (int i = 0; i < 4; ++i) {
            if (i) text += ' ';
            text += vocab[rng() % 5];
        }
        idx.index_post(mk(id, text));
    }
    for (int trial = 0; trial < 20; ++trial) {
        TokenList query{vocab[rng() % 5]};
        auto base = ids_of(idx.retrieve(query, 1000));
        query.push_back(vocab[rng() % 5]);
        auto narrowed = ids_of(idx.retrieve(query, 1000));
        EXPECT_TRUE(std::includes(base.begin(), base.end(), narrowed.begin(),
                                  narrowed.end()));
    }
}

TEST(Retrieve, TruncatesByBm25ThenId) {
    InvertedIndex idx;
    idx.index_post(mk(1, "ask raise now"));
    idx.index_post(mk(2, "ask ask raise"));  // higher tf on "ask"
    idx.index_post(mk(3, "ask raise now"));  // ties with post 1
    auto hits = idx.retrieve({"ask", "raise"}, 2);
    ASSERT_EQ(hits.size(), 2u);
    EXPECT_EQ(hits[0].first, 2u);  // highest score first
    EXPECT_EQ(hits[1].first, 1u);  // tie broken by ascending id
    EXPECT_GT(hits[0].second, hits[1].second);
}

// Probe bound: the galloping intersection does O(sum of list lengths) work.
TEST(Intersect, GallopingProbeBound) {
    // Adversarial shapes: dense vs sparse, and interleaved misses.
    std::vector<PostId> dense, sparse, evens, thirds;
    for (PostId i = 0; i < 10000; ++i) dense.push_back(i);
    sparse = {5000};
    for (PostId i = 0; i < 3000; i += 2) evens.push_back(i);
    for (PostId i = 0; i < 3000; i += 3) thirds.push_back(i);

    IntersectStats stats;
    auto r1 = intersect_postings({&dense, &sparse}, &stats);
    EXPECT_EQ(r1, std::vector<PostId>{5000});
    EXPECT_LE(stats.steps, 4 * (dense.size() + sparse.size()) + 64);

    auto r2 = intersect_postings({&evens, &thirds}, &stats);
    std::vector<PostId> expected;
    for (PostId i = 0; i < 3000; i += 6) expected.push_back(i);
    EXPECT_EQ(r2, expected);
    EXPECT_LE(stats.steps, 4 * (evens.size() + thirds.size()) + 64);
}

TEST(Bm25, ZeroWhenNoOverlap) {
    InvertedIndex idx;
    idx.index_post(mk(1, "alpha beta"));
    EXPECT_EQ(idx.bm25({"gamma"}, 1), 0.0);
    CorpusStats stats = idx.stats();
    EXPECT_EQ(bm25({"gamma"}, 1, stats, idx), 0.0);
}

TEST(Bm25, MoreMatchedTermsScoreHigher) {
    InvertedIndex idx;
    idx.index_post(mk(1, "salary negotiation"));
    double full = idx.bm25({"salary", "negotiation"}, 1);
    double partial = idx.bm25({"salary", "unrelated"}, 1);
    EXPECT_GT(full, partial);
    EXPECT_GT(partial, 0.0);
}

// Fixture hand-evaluated from the Okapi formula with k1=1.2, b=0.75,
// idf = ln(1 + (N - df + 0.5)/(df + 0.5)):
//   docs d1="a b", d2="a c", d3="b c d"; query "a b"; N=3, avgdl=7/3.
TEST(Bm25, MatchesHandComputedFixture) {
    InvertedIndex idx;
    idx.index_post(mk(1, "a b"));
    idx.index_post(mk(2, "a c"));
    idx.index_post(mk(3, "b c d"));

    const double idf = std::log(1.0 + 1.5 / 2.5);  // df=2 for a and b
    const double k_d1 = 1.2 * (0.25 + 0.75 * (2.0 / (7.0 / 3.0)));
    const double k_d3 = 1.2 * (0.25 + 0.75 * (3.0 / (7.0 / 3.0)));
    const double term_d1 = idf * 2.2 / (1.0 + k_d1);
    const double expected_d1 = 2.0 * term_d1;      // matches a and b
    const double expected_d2 = term_d1;            // matches only a, same length
    const double expected_d3 = idf * 2.2 / (1.0 + k_d3);  // matches only b

    TokenList query{"a", "b"};
    EXPECT_NEAR(idx.bm25(query, 1), expected_d1, 1e-9);
    EXPECT_NEAR(idx.bm25(query, 2), expected_d2, 1e-9);
    EXPECT_NEAR(idx.bm25(query, 3), expected_d3, 1e-9);

    CorpusStats stats = idx.stats();
    EXPECT_NEAR(bm25(query, 1, stats, idx), expected_d1, 1e-9);
    EXPECT_NEAR(bm25(query, 2, stats, idx), expected_d2, 1e-9);
    EXPECT_NEAR(bm25(query, 3, stats, idx), expected_d3, 1e-9);
}

TEST(Bm25, DuplicateQueryTokensCountOnce) {
    InvertedIndex idx;
    idx.index_post(mk(1, "a b"));
    EXPECT_DOUBLE_EQ(idx.bm25({"a", "a"}, 1), idx.bm25({"a"}, 1));
}

TEST(Snapshot, RoundTripsThroughDisk) {
    InvertedIndex idx;
    idx.index_post(mk(1, "ask for raise"));
    idx.index_post(mk(2, "raise raise raise"));
    idx.index_post(mk(3, "quarterly earnings"));
    auto path = std::filesystem::temp_directory_path() / "dowser_tbr_test.bin";
    idx.save(path);
    InvertedIndex loaded = InvertedIndex::load(path);
    std::filesystem::remove(path);

    EXPECT_EQ(loaded.doc_count(), 3u);
    EXPECT_EQ(loaded.term_count(), idx.term_count());
    auto before = idx.retrieve({"raise"}, 10);
    auto after = loaded.retrieve({"raise"}, 10);
    ASSERT_EQ(before.size(), after.size());
    for (std::size_t i = 0; i < before.size(); ++i) {
        EXPECT_EQ(before[i].first, after[i].first);
        EXPECT_DOUBLE_EQ(before[i].second, after[i].second);
    }
}

TEST(Stats, ReflectIndexContents) {
    InvertedIndex idx;
    idx.index_post(mk(1, "a b"));
    idx.index_post(mk(2, "a c d"));
    CorpusStats stats = idx.stats();
    EXPECT_EQ(stats.doc_count, 2u);
    EXPECT_DOUBLE_EQ(stats.avg_len, 2.5);
    EXPECT_EQ(stats.df_of("a"), 2u);
    EXPECT_EQ(stats.df_of("b"), 1u);
    EXPECT_EQ(stats.df_of("zzz"), 0u);
}
