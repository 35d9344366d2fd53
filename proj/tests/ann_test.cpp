#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "dowser/ann.hpp"
#include "dowser/mlp.hpp"
#include "dowser/text.hpp"

using namespace dowser;

namespace {

// Topic-clustered corpus embeddings, the distribution the engine actually
// indexes (posts cluster around shared vocabulary).
std::vector<std::pair<PostId, std::vector<double>>> clustered_text_dataset(
    std::mt19937_64& rng, std::size_t n, std::size_t dim, std::size_t topics,
    std::vector<std::string>* topic_words_out = nullptr) {
    auto word = [&rng] {
        std::string w;
        std::size_t len = 4 + rng() % 5;
        for (std::size_t j = 0; j < len; ++j)
            w.push_back(static_cast<char>('a' + rng() % 26));
        return w;
    };
    std::vector<std::vector<std::string>> vocab(topics);
    for (auto& tv : vocab)
        for (int i = 0; i < 8; ++i) tv.push_back(word());
    std::vector<std::string> filler;
    for (int i = 0; i < 40; ++i) filler.push_back(word());
    if (topic_words_out)
        for (const auto& tv : vocab)
            topic_words_out->insert(topic_words_out->end(), tv.begin(), tv.end());

    HashedTrigramEmbedder embedder(dim);
    std::vector<std::pair<PostId, std::vector<double>>> data;
    data.reserve(n);
    for (PostId id = 1; id <= n; ++id) {
        std::size_t t = rng() % topics;
        std::string text;
        for (int j = 0; j < 4; ++j) {
            if (j) text += ' ';
            text += vocab[t][rng() % 8];
        }
        for (int j = 0; j < 3; ++j) {
            text += ' ';
            text += filler[rng() % filler.size()];
        }
        data.emplace_back(id, embedder.embed(text).values);
    }
    return data;
}

std::vector<double> random_unit(std::mt19937_64& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double n = 0.0;
    for (auto& x : v) {
        x = uniform_symmetric(rng, 1.0);
        n += x * x;
    }
    n = std::sqrt(n);
    for (auto& x : v) x /= n;
    return v;
}

std::vector<std::pair<PostId, std::vector<double>>> random_dataset(
    std::mt19937_64& rng, std::size_t n, std::size_t dim) {
    std::vector<std::pair<PostId, std::vector<double>>> out;
    out.reserve(n);
    for (PostId id = 1; id <= n; ++id) out.emplace_back(id, random_unit(rng, dim));
    return out;
}

double recall_at_k(const AnnIndex& index,
                   const std::vector<std::pair<PostId, std::vector<double>>>& data,
                   std::mt19937_64& rng, std::size_t n_queries, std::size_t k,
                   std::size_t scan_limit, std::size_t dim) {
    double total = 0.0;
    for (std::size_t q = 0; q < n_queries; ++q) {
        auto query = random_unit(rng, dim);
        auto exact = brute_force_top_k(data, query, k);
        auto approx = index.search(query, k, scan_limit);
        std::set<PostId> exact_ids, approx_ids;
        for (const auto& h : exact) exact_ids.insert(h.post_id);
        for (const auto& h : approx) approx_ids.insert(h.post_id);
        std::size_t overlap = 0;
        for (PostId id : approx_ids) overlap += exact_ids.count(id);
        total += static_cast<double>(overlap) / static_cast<double>(k);
    }
    return total / static_cast<double>(n_queries);
}

}  // namespace

TEST(AnnInsert, FirstNodeBecomesEntryPoint) {
    AnnIndex index(4);
    index.insert(42, std::vector<double>{1.0, 0.0, 0.0, 0.0});
    EXPECT_EQ(index.size(), 1u);
    auto hits = index.search(std::vector<double>{0.0, 1.0, 0.0, 0.0}, 1, 10);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].post_id, 42u);
}

TEST(AnnInsert, DuplicateIdRejected) {
    AnnIndex index(2);
    index.insert(1, std::vector<double>{1.0, 0.0});
    EXPECT_THROW(index.insert(1, std::vector<double>{0.0, 1.0}),
                 std::invalid_argument);
}

TEST(AnnInsert, RejectsNonUnitOrWrongDim) {
    AnnIndex index(3);
    EXPECT_THROW(index.insert(1, std::vector<double>{0.5, 0.0, 0.0}),
                 std::invalid_argument);
    EXPECT_THROW(index.insert(1, std::vector<double>{1.0, 0.0}),
                 std::invalid_argument);
}

TEST(AnnSearch, EmptyIndexGivesEmptyResult) {
    AnnIndex index(3);
    EXPECT_TRUE(index.search(std::vector<double>{1.0, 0.0, 0.0}, 5, 50).empty());
}

TEST(AnnSearch, ValidatesArguments) {
    AnnIndex index(2);
    index.insert(1, std::vector<double>{1.0, 0.0});
    std::vector<double> q{1.0, 0.0};
    EXPECT_THROW(index.search(q, 0, 10), std::invalid_argument);
    EXPECT_THROW(index.search(q, 5, 4), std::invalid_argument);
    EXPECT_THROW(index.search(std::vector<double>{1.0, 0.0, 0.0}, 1, 10),
                 std::invalid_argument);
}

TEST(AnnSearch, StoredVectorIsItsOwnNearestNeighbor) {
    std::mt19937_64 rng(3);
    const std::size_t dim = 16;
    auto data = random_dataset(rng, 100, dim);
    AnnIndex index(dim);
    for (const auto& [id, vec] : data) index.insert(id, vec);

    for (const auto& [id, vec] : data) {
        auto hits = index.search(vec, 1, 100);
        ASSERT_FALSE(hits.empty());
        EXPECT_EQ(hits[0].post_id, id);
        EXPECT_NEAR(hits[0].score, 1.0, 1e-9);
    }
}

TEST(AnnSearch, ExactMatchScoresCosineOne) {
    std::mt19937_64 rng(9);
    auto data = random_dataset(rng, 50, 8);
    AnnIndex index(8);
    for (const auto& [id, vec] : data) index.insert(id, vec);
    auto hits = index.search(data[17].second, 1, 200);
    ASSERT_EQ(hits.size(), 1u);
    EXPECT_EQ(hits[0].post_id, data[17].first);
    EXPECT_NEAR(hits[0].score, 1.0, 1e-12);
}

TEST(AnnStructure, NeighborListsNeverExceedM) {
    std::mt19937_64 rng(5);
    const std::size_t dim = 12;
    AnnParams params;
    params.max_neighbors = 8;
    params.ef_construction = 40;
    AnnIndex index(dim, params);
    for (PostId id = 1; id <= 1000; ++id) index.insert(id, random_unit(rng, dim));
    EXPECT_LE(index.max_degree(), 8u);
}

TEST(AnnStructure, GraphStaysConnected) {
    std::mt19937_64 rng(6);
    const std::size_t dim = 12;
    AnnIndex index(dim);
    for (PostId id = 1; id <= 1000; ++id) index.insert(id, random_unit(rng, dim));
    EXPECT_EQ(index.reachable_from_entry(), 1000u);
}

TEST(AnnSearch, EvaluationCountRespectsScanLimit) {
    std::mt19937_64 rng(7);
    const std::size_t dim = 16;
    auto data = random_dataset(rng, 2000, dim);
    AnnIndex index(dim);
    for (const auto& [id, vec] : data) index.insert(id, vec);

    for (std::size_t limit : {10u, 50u, 200u, 400u}) {
        auto query = random_unit(rng, dim);
        auto hits = index.search(query, 10, limit);
        EXPECT_LE(AnnIndex::last_search_evals(), limit);
        EXPECT_LE(hits.size(), 10u);
    }
}

TEST(AnnSearch, ResultsSortedAndTieBrokenByAscendingId) {
    AnnIndex index(2);
    std::vector<double> v{1.0, 0.0};
    index.insert(30, v);
    index.insert(10, v);
    index.insert(20, std::vector<double>{0.0, 1.0});
    auto hits = index.search(v, 3, 50);
    ASSERT_EQ(hits.size(), 3u);
    EXPECT_EQ(hits[0].post_id, 10u);  // tie at cosine 1.0 -> lower id first
    EXPECT_EQ(hits[1].post_id, 30u);
    EXPECT_EQ(hits[2].post_id, 20u);
    EXPECT_GE(hits[0].score, hits[1].score);
    EXPECT_GE(hits[1].score, hits[2].score);
}

TEST(AnnSearch, HighRecallOnRandomCorpus) {
    std::mt19937_64 rng(11);
    const std::size_t dim = 32;
    auto data = random_dataset(rng, 2000, dim);
    AnnIndex index(dim);
    for (const auto& [id, vec] : data) index.insert(id, vec);

    std::mt19937_64 qrng(21);
    double recall = recall_at_k(index, data, qrng, 50, 10, 400, dim);
    EXPECT_GE(recall, 0.95) << "recall@10 with scan_limit=400";
}

TEST(AnnSearch, RecallNonDecreasingInScanLimit) {
    std::mt19937_64 rng(13);
    const std::size_t dim = 32;
    auto data = random_dataset(rng, 2000, dim);
    AnnIndex index(dim);
    for (const auto& [id, vec] : data) index.insert(id, vec);

    std::vector<double> recalls;
    for (std::size_t limit : {50u, 100u, 200u, 400u}) {
        std::mt19937_64 qrng(31);  // same queries per limit
        recalls.push_back(recall_at_k(index, data, qrng, 50, 10, limit, dim));
    }
    for (std::size_t i = 1; i < recalls.size(); ++i)
        EXPECT_GE(recalls[i], recalls[i - 1] - 0.01)
            << "limit step " << i << ": " << recalls[i - 1] << " -> " << recalls[i];
}

TEST(AnnSearch, DeterministicForSameBuildAndQuery) {
    std::mt19937_64 rng_a(17), rng_b(17);
    const std::size_t dim = 8;
    AnnIndex a(dim), b(dim);
    for (PostId id = 1; id <= 300; ++id) {
        a.insert(id, random_unit(rng_a, dim));
        b.insert(id, random_unit(rng_b, dim));
    }
    std::mt19937_64 qrng(1);
    auto query = random_unit(qrng, dim);
    auto ha = a.search(query, 10, 200);
    auto hb = b.search(query, 10, 200);
    ASSERT_EQ(ha.size(), hb.size());
    for (std::size_t i = 0; i < ha.size(); ++i) {
        EXPECT_EQ(ha[i].post_id, hb[i].post_id);
        EXPECT_EQ(ha[i].score, hb[i].score);
    }
}
