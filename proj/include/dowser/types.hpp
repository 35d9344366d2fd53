#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>
#include <string_view>

namespace dowser {

using PostId = std::uint64_t;
using AuthorId = std::uint64_t;
using SearcherId = std::uint64_t;

enum class PostType { text, article, video };

inline std::string to_string(PostType t) {
    switch (t) {
        case PostType::text: return "text";
        case PostType::article: return "article";
        case PostType::video: return "video";
    }
    throw std::invalid_argument("unknown post_type");
}

inline std::optional<PostType> parse_post_type(std::string_view s) {
    if (s == "text") return PostType::text;
    if (s == "article") return PostType::article;
    if (s == "video") return PostType::video;
    return std::nullopt;
}

struct Post {
    PostId post_id = 0;
    std::string text;
    PostType post_type = PostType::text;
    AuthorId author_id = 0;
    std::int64_t created_at = 0;   // epoch seconds
    double popularity = 0.0;       // normalized to [0,1] at ingest time
};

// Returns an error message when the post violates a field invariant.
inline std::optional<std::string> validate_post(const Post& p) {
    if (p.text.empty()) return "text must be non-empty";
    if (!(p.popularity >= 0.0 && p.popularity <= 1.0))
        return "popularity must be in [0,1]";
    return std::nullopt;
}

struct Query {
    std::string text;
    SearcherId searcher_id = 0;
    bool contains_job_title = false;
    std::int64_t issued_at = 0;
};

struct Searcher {
    SearcherId searcher_id = 0;
    bool job_seeking_intent = false;
    std::set<AuthorId> connections;  // never contains searcher_id itself

    bool connected_to(AuthorId a) const { return connections.count(a) > 0; }
};

inline std::optional<std::string> validate_searcher(const Searcher& s) {
    if (s.connections.count(s.searcher_id) > 0)
        return "searcher cannot be connected to itself";
    return std::nullopt;
}

struct Author {
    AuthorId author_id = 0;
    double popularity = 0.5;  // in [0,1]
};

struct InteractionRecord {
    Query query;
    PostId post_id = 0;
    double dwell_seconds = 0.0;
    int on_topic = 0;  // {0,1}
};

// Per-type dwell thresholds N: a dwell strictly greater than N counts as a
// long dwell.
struct DwellThresholds {
    double text = 10.0;
    double article = 20.0;
    double video = 30.0;

    double threshold_for(PostType t) const {
        switch (t) {
            case PostType::text: return text;
            case PostType::article: return article;
            case PostType::video: return video;
        }
        throw std::invalid_argument("unknown post_type");
    }
};

inline bool is_long_dwell(double dwell_seconds, PostType t, const DwellThresholds& n) {
    return dwell_seconds > n.threshold_for(t);
}

}  // namespace dowser
