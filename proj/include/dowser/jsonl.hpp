#pragma once

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <string_view>

#include "dowser/text.hpp"
#include "dowser/types.hpp"

// Line-delimited JSON codecs for the two external file formats:
//   corpus file:      {post_id, text, post_type, author_id, created_at, popularity}
//   interaction file: {query_text, searcher_id, post_id, dwell_seconds, on_topic}
namespace dowser::jsonl {

using nlohmann::json;

struct ParseError {
    std::string message;
};

inline std::optional<ParseError> parse_post(std::string_view line, Post& out) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        return ParseError{std::string("invalid json: ") + e.what()};
    }
    try {
        out.post_id = j.at("post_id").get<PostId>();
        out.text = j.at("text").get<std::string>();
        auto type = parse_post_type(j.at("post_type").get<std::string>());
        if (!type) return ParseError{"unknown post_type"};
        out.post_type = *type;
        out.author_id = j.at("author_id").get<AuthorId>();
        out.created_at = j.at("created_at").get<std::int64_t>();
        out.popularity = j.at("popularity").get<double>();
    } catch (const json::exception& e) {
        return ParseError{std::string("bad field: ") + e.what()};
    }
    if (auto err = validate_post(out)) return ParseError{*err};
    return std::nullopt;
}

inline std::string serialize_post(const Post& p) {
    json j;
    j["post_id"] = p.post_id;
    j["text"] = p.text;
    j["post_type"] = to_string(p.post_type);
    j["author_id"] = p.author_id;
    j["created_at"] = p.created_at;
    j["popularity"] = p.popularity;
    return j.dump();
}

inline std::optional<ParseError> parse_interaction(std::string_view line,
                                                   InteractionRecord& out) {
    json j;
    try {
        j = json::parse(line);
    } catch (const json::exception& e) {
        return ParseError{std::string("invalid json: ") + e.what()};
    }
    try {
        out.query.text = j.at("query_text").get<std::string>();
        out.query.searcher_id = j.at("searcher_id").get<SearcherId>();
        out.query.issued_at = j.value("issued_at", std::int64_t{0});
        out.post_id = j.at("post_id").get<PostId>();
        out.dwell_seconds = j.at("dwell_seconds").get<double>();
        out.on_topic = j.at("on_topic").get<int>();
    } catch (const json::exception& e) {
        return ParseError{std::string("bad field: ") + e.what()};
    }
    if (trim_copy(out.query.text).empty())
        return ParseError{"query_text empty after trimming"};
    if (out.dwell_seconds < 0) return ParseError{"dwell_seconds must be >= 0"};
    if (out.on_topic != 0 && out.on_topic != 1)
        return ParseError{"on_topic must be 0 or 1"};
    out.query.contains_job_title = contains_job_title(tokenize(out.query.text));
    return std::nullopt;
}

inline std::string serialize_interaction(const InteractionRecord& r) {
    json j;
    j["query_text"] = r.query.text;
    j["searcher_id"] = r.query.searcher_id;
    j["post_id"] = r.post_id;
    j["dwell_seconds"] = r.dwell_seconds;
    j["on_topic"] = r.on_topic;
    return j.dump();
}

}  // namespace dowser::jsonl
