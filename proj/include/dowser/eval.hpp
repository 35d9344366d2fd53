#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <istream>
#include <optional>
#include <ostream>
#include <random>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dowser/engine.hpp"
#include "dowser/text.hpp"
#include "dowser/types.hpp"

namespace dowser {

// A query with fixture-provided ground truth.
struct JudgedQuery {
    Query query;
    std::string topic;
    std::set<PostId> expected;  // relevant post ids
};

// Fixture annotation for one post: the judge's ground truth plus the dwell
// distribution parameters the simulator draws from. Matched-and-quality
// impressions draw lognormal(mu_matched, sigma); everything else draws
// lognormal(mu_unmatched, sigma).
struct PostAnnotation {
    PostId post_id = 0;
    std::string topic;
    bool quality = false;
    double dwell_mu_matched = 0.0;
    double dwell_mu_unmatched = 0.0;
    double dwell_sigma = 0.5;
};

struct EvalFixtures {
    std::vector<JudgedQuery> queries;
    std::unordered_map<PostId, PostAnnotation> posts;

    void save(std::ostream& out) const {
        using nlohmann::json;
        for (const auto& q : queries) {
            json j;
            j["kind"] = "query";
            j["query_text"] = q.query.text;
            j["searcher_id"] = q.query.searcher_id;
            j["topic"] = q.topic;
            j["expected_post_ids"] = q.expected;
            out << j.dump() << '\n';
        }
        std::vector<PostId> ids;
        ids.reserve(posts.size());
        for (const auto& [id, _] : posts) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        for (PostId id : ids) {
            const PostAnnotation& a = posts.at(id);
            json j;
            j["kind"] = "post";
            j["post_id"] = a.post_id;
            j["topic"] = a.topic;
            j["quality"] = a.quality ? 1 : 0;
            j["dwell_mu_matched"] = a.dwell_mu_matched;
            j["dwell_mu_unmatched"] = a.dwell_mu_unmatched;
            j["dwell_sigma"] = a.dwell_sigma;
            out << j.dump() << '\n';
        }
    }

    static EvalFixtures load(std::istream& in) {
        using nlohmann::json;
        EvalFixtures f;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim_copy(line).empty()) continue;
            json j;
            try {
                j = json::parse(line);
                std::string kind = j.at("kind").get<std::string>();
                if (kind == "query") {
                    JudgedQuery q;
                    q.query = make_query(j.at("query_text").get<std::string>(),
                                         j.value("searcher_id", SearcherId{0}));
                    q.topic = j.at("topic").get<std::string>();
                    for (auto id : j.at("expected_post_ids"))
                        q.expected.insert(id.get<PostId>());
                    f.queries.push_back(std::move(q));
                } else if (kind == "post") {
                    PostAnnotation a;
                    a.post_id = j.at("post_id").get<PostId>();
                    a.topic = j.at("topic").get<std::string>();
                    a.quality = j.at("quality").get<int>() != 0;
                    a.dwell_mu_matched = j.at("dwell_mu_matched").get<double>();
                    a.dwell_mu_unmatched = j.at("dwell_mu_unmatched").get<double>();
                    a.dwell_sigma = j.at("dwell_sigma").get<double>();
                    f.posts[a.post_id] = std::move(a);
                } else {
                    throw std::runtime_error("unknown kind: " + kind);
                }
            } catch (const std::exception& e) {
                throw std::runtime_error("fixture line " + std::to_string(line_no) +
                                         ": " + e.what());
            }
        }
        return f;
    }
};

// Rule-based stand-in for the human-quality judge: a post is labeled 1 iff
// its fixture topic tag equals the query's topic tag and its quality flag is
// set. Posts missing from the fixtures count 0 and bump a warning counter.
class SyntheticJudge {
public:
    explicit SyntheticJudge(const EvalFixtures& fixtures) : fixtures_(fixtures) {}

    int judge(const JudgedQuery& query, PostId post_id) const {
        auto it = fixtures_.posts.find(post_id);
        if (it == fixtures_.posts.end()) {
            ++missing_;
            return 0;
        }
        const PostAnnotation& a = it->second;
        return (a.topic == query.topic && a.quality) ? 1 : 0;
    }

    std::size_t missing_annotations() const { return missing_.load(); }

private:
    const EvalFixtures& fixtures_;
    mutable std::atomic<std::size_t> missing_{0};
};

// Percentage of judged-1 posts among the top-min(10, n) results, averaged
// over queries; a query with zero results contributes 0.
inline double on_topic_rate(
    std::span<const std::pair<const JudgedQuery*, const SearchResponse*>> responses,
    const SyntheticJudge& judge) {
    if (responses.empty()) throw std::invalid_argument("no responses to evaluate");
    double total = 0.0;
    for (const auto& [query, response] : responses) {
        std::size_t n = std::min<std::size_t>(10, response->results.size());
        if (n == 0) continue;  // contributes 0
        std::size_t ones = 0;
        for (std::size_t i = 0; i < n; ++i)
            ones += static_cast<std::size_t>(
                judge.judge(*query, response->results[i].post_id));
        total += static_cast<double>(ones) / static_cast<double>(n);
    }
    return total / static_cast<double>(responses.size());
}

struct SessionEntry {
    PostId post_id = 0;
    PostType post_type = PostType::text;
    double dwell_seconds = 0.0;
};

// Count of entries whose dwell strictly exceeds the per-type threshold.
inline std::size_t long_dwells(std::span<const SessionEntry> session,
                               const DwellThresholds& thresholds) {
    std::size_t count = 0;
    for (const auto& e : session)
        if (is_long_dwell(e.dwell_seconds, e.post_type, thresholds)) ++count;
    return count;
}

namespace detail {

// Box-Muller, spelled out so draws are identical across standard libraries.
inline double standard_normal(std::mt19937_64& rng) {
    double u1 = (static_cast<double>(rng() >> 11) + 1.0) * 0x1.0p-53;  // (0,1]
    double u2 = static_cast<double>(rng() >> 11) * 0x1.0p-53;          // [0,1)
    return std::sqrt(-2.0 * std::log(u1)) *
           std::cos(2.0 * 3.141592653589793238462643383279502884 * u2);
}

}  // namespace detail

// Draws one dwell per returned post from the fixture-defined lognormal for
// the post's (topic-match, quality) bucket. Deterministic per (seed, query
// text, post id), independent of iteration order.
inline std::vector<SessionEntry> simulate_dwell(const JudgedQuery& query,
                                                const SearchResponse& response,
                                                const EvalFixtures& fixtures,
                                                const CorpusStore& corpus,
                                                std::uint64_t seed) {
    std::vector<SessionEntry> session;
    session.reserve(response.results.size());
    std::uint64_t query_hash = dowser::detail::fnv1a64(query.query.text, seed);
    for (const auto& result : response.results) {
        auto post = corpus.get_post(result.post_id);
        if (!post) continue;
        double mu = 0.0, sigma = 0.5;
        auto it = fixtures.posts.find(result.post_id);
        if (it != fixtures.posts.end()) {
            const PostAnnotation& a = it->second;
            bool engaging = (a.topic == query.topic) && a.quality;
            mu = engaging ? a.dwell_mu_matched : a.dwell_mu_unmatched;
            sigma = a.dwell_sigma;
        }
        std::mt19937_64 rng(query_hash ^ (result.post_id * 0x9e3779b97f4a7c15ULL));
        double dwell = std::exp(mu + sigma * detail::standard_normal(rng));
        session.push_back(SessionEntry{result.post_id, post->post_type, dwell});
    }
    return session;
}

struct PerQueryEval {
    std::string query_text;
    std::string topic;
    std::size_t result_count = 0;
    std::size_t on_topic_in_top10 = 0;
    std::size_t long_dwells = 0;
};

struct EvalReport {
    double alpha = 0.5;
    double on_topic_rate = 0.0;
    std::size_t long_dwells = 0;
    std::size_t query_count = 0;
    std::vector<PerQueryEval> per_query;
};

// Runs every judged query through the engine at one alpha and aggregates both
// metrics over the simulated sessions.
inline EvalReport evaluate(const SearchEngine& engine, const EvalFixtures& fixtures,
                           double alpha, std::uint64_t seed,
                           RetrievalMode mode = RetrievalMode::hybrid) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::domain_error("alpha must be in [0,1]");
    SyntheticJudge judge(fixtures);
    EvalReport report;
    report.alpha = alpha;
    report.query_count = fixtures.queries.size();

    std::vector<SearchResponse> responses;
    responses.reserve(fixtures.queries.size());
    for (const auto& jq : fixtures.queries)
        responses.push_back(engine.search(jq.query, alpha, mode));

    std::vector<std::pair<const JudgedQuery*, const SearchResponse*>> pairs;
    pairs.reserve(responses.size());
    for (std::size_t i = 0; i < responses.size(); ++i)
        pairs.emplace_back(&fixtures.queries[i], &responses[i]);
    report.on_topic_rate = on_topic_rate(pairs, judge);

    for (std::size_t i = 0; i < responses.size(); ++i) {
        const JudgedQuery& jq = fixtures.queries[i];
        auto session = simulate_dwell(jq, responses[i], fixtures, engine.corpus(), seed);
        PerQueryEval pq;
        pq.query_text = jq.query.text;
        pq.topic = jq.topic;
        pq.result_count = responses[i].results.size();
        std::size_t n = std::min<std::size_t>(10, responses[i].results.size());
        for (std::size_t r = 0; r < n; ++r)
            pq.on_topic_in_top10 += static_cast<std::size_t>(
                judge.judge(jq, responses[i].results[r].post_id));
        pq.long_dwells = long_dwells(session, engine.config().dwell);
        report.long_dwells += pq.long_dwells;
        report.per_query.push_back(std::move(pq));
    }
    return report;
}

struct SweepRow {
    double alpha = 0.0;
    double on_topic_rate = 0.0;
    std::size_t long_dwells = 0;
};

// One full evaluation per alpha with everything else held fixed; rows come
// back sorted by alpha.
inline std::vector<SweepRow> alpha_sweep(const SearchEngine& engine,
                                         const EvalFixtures& fixtures,
                                         std::vector<double> alphas,
                                         std::uint64_t seed) {
    std::sort(alphas.begin(), alphas.end());
    std::vector<SweepRow> rows;
    rows.reserve(alphas.size());
    for (double alpha : alphas) {
        EvalReport r = evaluate(engine, fixtures, alpha, seed);
        rows.push_back(SweepRow{alpha, r.on_topic_rate, r.long_dwells});
    }
    return rows;
}

inline std::string render_sweep_table(std::span<const SweepRow> rows) {
    std::string out = "alpha  on_topic_rate  long_dwells\n";
    char buf[80];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%.3f  %.6f       %zu\n", r.alpha,
                      r.on_topic_rate, r.long_dwells);
        out += buf;
    }
    return out;
}

inline std::string report_to_jsonl(const EvalReport& report) {
    using nlohmann::json;
    std::string out;
    json summary = {{"kind", "summary"},
                    {"alpha", report.alpha},
                    {"on_topic_rate", report.on_topic_rate},
                    {"long_dwells", report.long_dwells},
                    {"query_count", report.query_count}};
    out += summary.dump() + "\n";
    for (const auto& pq : report.per_query) {
        json j = {{"kind", "query"},
                  {"query_text", pq.query_text},
                  {"topic", pq.topic},
                  {"result_count", pq.result_count},
                  {"on_topic_in_top10", pq.on_topic_in_top10},
                  {"long_dwells", pq.long_dwells}};
        out += j.dump() + "\n";
    }
    return out;
}

}  // namespace dowser
