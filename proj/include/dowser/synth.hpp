#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "dowser/eval.hpp"
#include "dowser/types.hpp"

namespace dowser {

// Generated corpus with topic clusters for the semantic-matching
// demonstration. Each topic has two token-disjoint vocabularies: a canonical
// family that both the canonical posts and the judged queries use, and a
// synonym family used by the other half of the posts. Cross-vocabulary judged
// queries additionally carry scaffold words that appear in no post, so their
// conjunctive token match is empty and only the trained embedding retriever
// can serve them. The interaction log pairs every query phrasing with posts
// from both vocabulary halves at label 1, which is the trainable signal that
// pulls the synonym half toward the canonical queries.
struct SynthParams {
    std::size_t topics = 10;
    std::size_t posts_per_topic = 200;
    std::size_t judged_queries = 40;
    double quality_fraction = 0.8;
    std::size_t positive_pairs_per_phrase = 10;
    std::size_t negative_pairs_per_phrase = 10;
    std::uint64_t seed = 7;
};

struct SynthOutput {
    std::vector<Post> posts;
    std::vector<InteractionRecord> interactions;
    EvalFixtures fixtures;
    // Judged-query indexes by kind, for baseline comparisons.
    std::vector<std::size_t> canonical_query_indexes;
    std::vector<std::size_t> cross_vocab_query_indexes;
};

namespace detail {

// Pseudo-words assembled from consonant-vowel syllables; globally unique.
class WordGen {
public:
    explicit WordGen(std::uint64_t seed) : rng_(seed) {}

    std::string next() {
        static const char* consonants = "bcdfghjklmnprstvz";
        static const char* vowels = "aeiou";
        for (;;) {
            std::size_t syllables = 2 + rng_() % 3;
            std::string w;
            for (std::size_t s = 0; s < syllables; ++s) {
                w.push_back(consonants[rng_() % 17]);
                w.push_back(vowels[rng_() % 5]);
            }
            if (used_.insert(w).second) return w;
        }
    }

    std::vector<std::string> batch(std::size_t n) {
        std::vector<std::string> out;
        out.reserve(n);
        for (std::size_t i = 0; i < n; ++i) out.push_back(next());
        return out;
    }

private:
    std::mt19937_64 rng_;
    std::set<std::string> used_;
};

inline std::string join_words(const std::vector<std::string>& words) {
    std::string out;
    for (std::size_t i = 0; i < words.size(); ++i) {
        if (i) out.push_back(' ');
        out += words[i];
    }
    return out;
}

}  // namespace detail

inline SynthOutput generate_synonym_corpus(const SynthParams& params,
                                           const DwellThresholds& thresholds = {}) {
    std::mt19937_64 rng(params.seed);
    detail::WordGen words(params.seed ^ 0x5caff01dULL);

    SynthOutput out;
    const std::size_t n_topics = params.topics;
    std::vector<std::vector<std::string>> canonical(n_topics), synonym(n_topics);
    for (std::size_t t = 0; t < n_topics; ++t) {
        canonical[t] = words.batch(6);
        synonym[t] = words.batch(6);
    }
    // Scaffold words appear only in cross-vocabulary queries, never in posts.
    std::vector<std::string> scaffold = words.batch(4);
    std::vector<std::string> filler = words.batch(30);

    auto uniform = [&rng](double lo, double hi) {
        double u = static_cast<double>(rng() >> 11) * 0x1.0p-53;
        return lo + u * (hi - lo);
    };

    const std::int64_t base_time = 1700000000;
    PostId next_id = 1;
    std::vector<std::vector<PostId>> topic_posts(n_topics);
    std::vector<std::vector<PostId>> topic_synonym_posts(n_topics);

    for (std::size_t t = 0; t < n_topics; ++t) {
        for (std::size_t k = 0; k < params.posts_per_topic; ++k) {
            bool synonym_half = k >= params.posts_per_topic / 2;
            const auto& vocab = synonym_half ? synonym[t] : canonical[t];
            std::vector<std::string> text_words;
            // Core words first so canonical queries always match conjunctively.
            text_words.push_back(vocab[0]);
            text_words.push_back(vocab[1]);
            text_words.push_back(vocab[2]);
            text_words.push_back(vocab[3 + rng() % 3]);
            for (int f = 0; f < 3; ++f)
                text_words.push_back(filler[rng() % filler.size()]);
            for (std::size_t i = text_words.size(); i > 1; --i)
                std::swap(text_words[i - 1], text_words[rng() % i]);

            Post p;
            p.post_id = next_id++;
            p.text = detail::join_words(text_words);
            p.post_type = static_cast<PostType>(p.post_id % 3);
            p.author_id = t * 5 + (k % 5) + 1;
            p.created_at = base_time + static_cast<std::int64_t>(p.post_id) * 600;
            p.popularity = uniform(0.05, 0.95);
            out.posts.push_back(p);
            topic_posts[t].push_back(p.post_id);
            if (synonym_half) topic_synonym_posts[t].push_back(p.post_id);

            PostAnnotation a;
            a.post_id = p.post_id;
            a.topic = "topic" + std::to_string(t);
            a.quality = uniform(0.0, 1.0) < params.quality_fraction;
            double n_type = thresholds.threshold_for(p.post_type);
            a.dwell_mu_matched = std::log(2.5 * n_type);
            a.dwell_mu_unmatched = std::log(0.3 * n_type);
            a.dwell_sigma = 0.4;
            out.fixtures.posts[p.post_id] = std::move(a);
        }
    }

    // Query phrasings per topic. Canonical: the three core canonical words
    // (every canonical post of the topic contains them). Cross-vocabulary:
    // canonical words plus scaffold words, so no post matches all tokens.
    std::vector<std::vector<std::string>> phrasings(n_topics);
    for (std::size_t t = 0; t < n_topics; ++t) {
        const auto& c = canonical[t];
        phrasings[t] = {
            c[0] + " " + c[1] + " " + c[2],
            scaffold[0] + " " + c[0] + " " + c[1] + " " + scaffold[1],
            scaffold[2] + " " + c[1] + " " + c[2],
            c[0] + " " + c[2] + " " + scaffold[3],
        };
    }

    // Judged queries alternate canonical and cross-vocabulary kinds across
    // topics.
    for (std::size_t i = 0; i < params.judged_queries; ++i) {
        std::size_t t = i % n_topics;
        bool cross = (i / n_topics) % 2 == 1;
        JudgedQuery jq;
        jq.topic = "topic" + std::to_string(t);
        std::string text = cross ? phrasings[t][1 + (i / (2 * n_topics)) % 3]
                                 : phrasings[t][0];
        jq.query = make_query(text);
        for (PostId id : topic_posts[t]) jq.expected.insert(id);
        if (cross)
            out.cross_vocab_query_indexes.push_back(out.fixtures.queries.size());
        else
            out.canonical_query_indexes.push_back(out.fixtures.queries.size());
        out.fixtures.queries.push_back(std::move(jq));
    }

    // Interaction log: every phrasing paired with same-topic posts (label 1,
    // long dwell) and off-topic posts (label 0, short dwell). Cross phrasings
    // are paired preferentially with posts from the synonym half.
    auto pick = [&rng](const std::vector<PostId>& ids) {
        return ids[rng() % ids.size()];
    };
    for (std::size_t t = 0; t < n_topics; ++t) {
        for (std::size_t ph = 0; ph < phrasings[t].size(); ++ph) {
            bool cross = ph > 0;
            for (std::size_t k = 0; k < params.positive_pairs_per_phrase; ++k) {
                InteractionRecord rec;
                rec.query = make_query(phrasings[t][ph]);
                const auto& pool = (cross && k % 2 == 0) ? topic_synonym_posts[t]
                                                         : topic_posts[t];
                rec.post_id = pick(pool);
                auto type = static_cast<PostType>(rec.post_id % 3);
                rec.dwell_seconds = thresholds.threshold_for(type) * 2.0 + uniform(0.0, 5.0);
                rec.on_topic = 1;
                out.interactions.push_back(std::move(rec));
            }
            for (std::size_t k = 0; k < params.negative_pairs_per_phrase; ++k) {
                InteractionRecord rec;
                rec.query = make_query(phrasings[t][ph]);
                std::size_t other = (t + 1 + rng() % (n_topics - 1)) % n_topics;
                rec.post_id = pick(topic_posts[other]);
                rec.dwell_seconds = uniform(0.0, 2.0);
                rec.on_topic = 0;
                out.interactions.push_back(std::move(rec));
            }
        }
    }
    return out;
}

}  // namespace dowser
