#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <istream>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "dowser/jsonl.hpp"
#include "dowser/types.hpp"

namespace dowser {

struct LineError {
    std::size_t line_number = 0;  // 1-based
    std::string message;
};

struct IngestReport {
    std::size_t stored = 0;
    std::vector<LineError> errors;
};

struct InteractionLoadReport {
    std::vector<InteractionRecord> records;  // file order
    std::vector<LineError> errors;
};

// Durable post storage: a single-file append log plus an in-memory id index
// rebuilt on startup. Posts are never deleted or edited. Many readers, one
// serialized writer; a reader never sees a partially written post because
// publication into the in-memory map happens after the log append.
class CorpusStore {
public:
    // In-memory only (tests, scratch pipelines).
    CorpusStore() = default;

    // Opens or creates the append log at `log_path` and replays it.
    explicit CorpusStore(std::filesystem::path log_path)
        : log_path_(std::move(log_path)) {
        replay_log();
        log_out_.open(log_path_, std::ios::app);
        if (!log_out_)
            throw std::runtime_error("cannot open corpus log: " + log_path_.string());
    }

    // Adds one post. Returns an error message on rejection (invalid fields or
    // duplicate id); the store is unchanged in that case.
    std::optional<std::string> add_post(const Post& post) {
        if (auto err = validate_post(post)) return err;
        std::unique_lock lock(mu_);
        if (posts_.count(post.post_id) > 0)
            return "duplicate post_id " + std::to_string(post.post_id);
        if (log_out_.is_open()) {
            log_out_ << jsonl::serialize_post(post) << '\n';
            log_out_.flush();
        }
        publish(post);
        return std::nullopt;
    }

    // Reads line-delimited posts from `in`. Malformed lines and duplicate ids
    // are reported per line without aborting the stream.
    IngestReport ingest_posts(std::istream& in) {
        IngestReport report;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim_copy(line).empty()) continue;
            Post post;
            if (auto err = jsonl::parse_post(line, post)) {
                report.errors.push_back({line_no, err->message});
                continue;
            }
            if (auto err = add_post(post)) {
                report.errors.push_back({line_no, *err});
                continue;
            }
            ++report.stored;
        }
        return report;
    }

    // Loads interaction records in file order. Records referencing unknown
    // post_ids or violating field invariants produce per-line errors.
    InteractionLoadReport load_interactions(std::istream& in) const {
        InteractionLoadReport report;
        std::string line;
        std::size_t line_no = 0;
        std::shared_lock lock(mu_);
        while (std::getline(in, line)) {
            ++line_no;
            if (trim_copy(line).empty()) continue;
            InteractionRecord rec;
            if (auto err = jsonl::parse_interaction(line, rec)) {
                report.errors.push_back({line_no, err->message});
                continue;
            }
            if (posts_.count(rec.post_id) == 0) {
                report.errors.push_back(
                    {line_no, "unknown post_id " + std::to_string(rec.post_id)});
                continue;
            }
            report.records.push_back(std::move(rec));
        }
        return report;
    }

    std::optional<Post> get_post(PostId id) const {
        std::shared_lock lock(mu_);
        auto it = posts_.find(id);
        if (it == posts_.end()) return std::nullopt;
        return it->second;
    }

    bool contains(PostId id) const {
        std::shared_lock lock(mu_);
        return posts_.count(id) > 0;
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return posts_.size();
    }

    std::vector<PostId> all_ids_sorted() const {
        std::shared_lock lock(mu_);
        std::vector<PostId> ids;
        ids.reserve(posts_.size());
        for (const auto& [id, _] : posts_) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    // Author popularity is the mean popularity of the author's posts; authors
    // with no posts default to 0.5.
    Author author(AuthorId id) const {
        std::shared_lock lock(mu_);
        auto it = authors_.find(id);
        if (it == authors_.end()) return Author{id, 0.5};
        return Author{id, it->second.sum / static_cast<double>(it->second.count)};
    }

    // Largest created_at over the corpus; the default freshness reference.
    std::int64_t max_created_at() const {
        std::shared_lock lock(mu_);
        return max_created_at_;
    }

    std::size_t corrupt_log_lines() const { return corrupt_lines_; }

private:
    struct AuthorAccum {
        double sum = 0.0;
        std::size_t count = 0;
    };

    void publish(const Post& post) {
        posts_.emplace(post.post_id, post);
        auto& acc = authors_[post.author_id];
        acc.sum += post.popularity;
        acc.count += 1;
        max_created_at_ = std::max(max_created_at_, post.created_at);
    }

    void replay_log() {
        std::ifstream in(log_path_);
        if (!in) return;  // fresh store
        std::string line;
        while (std::getline(in, line)) {
            if (trim_copy(line).empty()) continue;
            Post post;
            if (jsonl::parse_post(line, post) || posts_.count(post.post_id)) {
                ++corrupt_lines_;  // torn tail write or manual edit
                continue;
            }
            publish(post);
        }
    }

    std::filesystem::path log_path_;
    std::ofstream log_out_;
    mutable std::shared_mutex mu_;
    std::unordered_map<PostId, Post> posts_;
    std::unordered_map<AuthorId, AuthorAccum> authors_;
    std::int64_t max_created_at_ = 0;
    std::size_t corrupt_lines_ = 0;
};

}  // namespace dowser
