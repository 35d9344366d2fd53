#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include "dowser/checkpoint.hpp"
#include "dowser/text.hpp"
#include "dowser/types.hpp"

namespace dowser {

// Sorted posting list for one token. term_freqs runs parallel to post_ids.
struct PostingList {
    std::string token;
    std::vector<PostId> post_ids;       // strictly ascending
    std::vector<std::uint32_t> term_freqs;
};

// Statistics BM25 needs, derived from the index.
struct CorpusStats {
    std::size_t doc_count = 0;
    double avg_len = 0.0;
    std::unordered_map<std::string, std::size_t> df;

    std::size_t df_of(const std::string& token) const {
        auto it = df.find(token);
        return it == df.end() ? 0 : it->second;
    }
};

struct IntersectStats {
    std::size_t steps = 0;  // gallop/binary-search probes across all lists
};

namespace detail {

// Galloping membership scan: advances `pos` to the first index with
// list[pos] >= target, doubling the stride from the current position and then
// binary-searching the bracketed range. Cost O(log gap) per call.
inline bool gallop_contains(const std::vector<PostId>& list, PostId target,
                            std::size_t& pos, std::size_t& steps) {
    std::size_t n = list.size();
    if (pos >= n) return false;
    std::size_t step = 1, lo = pos, hi = pos;
    while (hi < n && list[hi] < target) {
        ++steps;
        lo = hi;
        hi += step;
        step <<= 1;
    }
    if (hi > n) hi = n;
    // list[lo] < target <= list[hi] (when hi < n)
    while (lo < hi) {
        ++steps;
        std::size_t mid = lo + (hi - lo) / 2;
        if (list[mid] < target)
            lo = mid + 1;
        else
            hi = mid;
    }
    pos = lo;
    return pos < n && list[pos] == target;
}

}  // namespace detail

// Intersects k ascending id lists, iterating the smallest and galloping in the
// rest. Total probes are O(sum of list lengths).
inline std::vector<PostId> intersect_postings(
    std::vector<const std::vector<PostId>*> lists, IntersectStats* stats = nullptr) {
    if (lists.empty()) return {};
    std::sort(lists.begin(), lists.end(),
              [](const auto* a, const auto* b) { return a->size() < b->size(); });
    std::size_t steps = 0;
    std::vector<PostId> result;
    const auto& smallest = *lists.front();
    std::vector<std::size_t> cursors(lists.size(), 0);
    for (PostId candidate : smallest) {
        bool in_all = true;
        for (std::size_t i = 1; i < lists.size(); ++i) {
            if (!detail::gallop_contains(*lists[i], candidate, cursors[i], steps)) {
                in_all = false;
                break;
            }
        }
        ++steps;
        if (in_all) result.push_back(candidate);
    }
    if (stats) stats->steps = steps;
    return result;
}

// Inverted index over post text: token -> posting list, plus the per-post
// token-length table BM25 needs. Concurrent readers, single serialized
// writer; a post is visible fully indexed or not at all.
class InvertedIndex {
public:
    InvertedIndex() = default;

    // Moves are for construction-time handoff only (snapshot load); they must
    // not race concurrent readers.
    InvertedIndex(InvertedIndex&& other) noexcept
        : postings_(std::move(other.postings_)),
          doc_len_(std::move(other.doc_len_)),
          total_len_(other.total_len_),
          doc_count_(other.doc_count_) {}

    InvertedIndex& operator=(InvertedIndex&& other) noexcept {
        if (this != &other) {
            postings_ = std::move(other.postings_);
            doc_len_ = std::move(other.doc_len_);
            total_len_ = other.total_len_;
            doc_count_ = other.doc_count_;
        }
        return *this;
    }

    // Throws std::invalid_argument when post_id is already indexed.
    void index_post(const Post& post) {
        TokenList tokens = tokenize(post.text);
        std::unique_lock lock(mu_);
        if (doc_len_.count(post.post_id) > 0)
            throw std::invalid_argument("post already indexed: " +
                                        std::to_string(post.post_id));
        std::unordered_map<std::string, std::uint32_t> tf;
        for (const auto& t : tokens) ++tf[t];
        for (const auto& [token, freq] : tf) {
            PostingList& pl = postings_[token];
            if (pl.token.empty()) pl.token = token;
            auto it = std::lower_bound(pl.post_ids.begin(), pl.post_ids.end(),
                                       post.post_id);
            std::size_t idx = static_cast<std::size_t>(it - pl.post_ids.begin());
            pl.post_ids.insert(it, post.post_id);
            pl.term_freqs.insert(pl.term_freqs.begin() + static_cast<std::ptrdiff_t>(idx), freq);
        }
        doc_len_[post.post_id] = tokens.size();
        total_len_ += tokens.size();
        ++doc_count_;
    }

    bool contains(PostId id) const {
        std::shared_lock lock(mu_);
        return doc_len_.count(id) > 0;
    }

    std::size_t doc_count() const {
        std::shared_lock lock(mu_);
        return doc_count_;
    }

    std::size_t term_count() const {
        std::shared_lock lock(mu_);
        return postings_.size();
    }

    std::optional<std::vector<PostId>> posting_ids(const std::string& token) const {
        std::shared_lock lock(mu_);
        auto it = postings_.find(token);
        if (it == postings_.end()) return std::nullopt;
        return it->second.post_ids;
    }

    std::uint32_t term_freq(const std::string& token, PostId id) const {
        std::shared_lock lock(mu_);
        return term_freq_locked(token, id);
    }

    std::size_t doc_len(PostId id) const {
        std::shared_lock lock(mu_);
        auto it = doc_len_.find(id);
        return it == doc_len_.end() ? 0 : it->second;
    }

    CorpusStats stats() const {
        std::shared_lock lock(mu_);
        CorpusStats s;
        s.doc_count = doc_count_;
        s.avg_len = doc_count_ ? static_cast<double>(total_len_) /
                                     static_cast<double>(doc_count_)
                               : 0.0;
        s.df.reserve(postings_.size());
        for (const auto& [token, pl] : postings_) s.df[token] = pl.post_ids.size();
        return s;
    }

    // Conjunctive retrieval: exactly the posts containing every distinct query
    // token, truncated to `limit` by descending BM25 then ascending post_id.
    std::vector<std::pair<PostId, double>> retrieve(
        const TokenList& query_tokens, std::size_t limit,
        IntersectStats* probe = nullptr) const {
        if (limit == 0) throw std::invalid_argument("limit must be > 0");
        std::shared_lock lock(mu_);
        std::vector<std::string> distinct = distinct_tokens(query_tokens);
        if (distinct.empty()) return {};

        std::vector<const std::vector<PostId>*> lists;
        lists.reserve(distinct.size());
        for (const auto& t : distinct) {
            auto it = postings_.find(t);
            if (it == postings_.end()) return {};  // empty intersection
            lists.push_back(&it->second.post_ids);
        }
        std::vector<PostId> ids = intersect_postings(std::move(lists), probe);

        std::vector<std::pair<PostId, double>> scored;
        scored.reserve(ids.size());
        for (PostId id : ids) scored.emplace_back(id, bm25_locked(distinct, id));
        std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
            if (a.second != b.second) return a.second > b.second;
            return a.first < b.first;
        });
        if (scored.size() > limit) scored.resize(limit);
        return scored;
    }

    // Okapi BM25 with k1=1.2, b=0.75 over distinct query tokens.
    double bm25(const TokenList& query_tokens, PostId id) const {
        std::shared_lock lock(mu_);
        return bm25_locked(distinct_tokens(query_tokens), id);
    }

    static constexpr std::uint32_t kSnapshotVersion = 1;

    void save(const std::filesystem::path& path) const {
        std::shared_lock lock(mu_);
        checkpoint::Writer w(path);
        w.magic("DWIX", kSnapshotVersion);
        w.u64(doc_count_);
        w.u64(total_len_);
        w.u64(doc_len_.size());
        std::vector<PostId> ids;
        ids.reserve(doc_len_.size());
        for (const auto& [id, _] : doc_len_) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        for (PostId id : ids) {
            w.u64(id);
            w.u64(doc_len_.at(id));
        }
        std::vector<std::string> tokens;
        tokens.reserve(postings_.size());
        for (const auto& [t, _] : postings_) tokens.push_back(t);
        std::sort(tokens.begin(), tokens.end());
        w.u64(tokens.size());
        for (const auto& t : tokens) {
            const PostingList& pl = postings_.at(t);
            w.str(t);
            w.u64(pl.post_ids.size());
            for (std::size_t i = 0; i < pl.post_ids.size(); ++i) {
                w.u64(pl.post_ids[i]);
                w.u32(pl.term_freqs[i]);
            }
        }
        w.close();
    }

    static InvertedIndex load(const std::filesystem::path& path) {
        checkpoint::Reader r(path);
        std::uint32_t version = r.magic("DWIX");
        if (version != kSnapshotVersion)
            throw std::runtime_error("unsupported index snapshot version");
        InvertedIndex idx;
        idx.doc_count_ = r.u64();
        idx.total_len_ = r.u64();
        std::uint64_t n_docs = r.u64();
        for (std::uint64_t i = 0; i < n_docs; ++i) {
            PostId id = r.u64();
            idx.doc_len_[id] = r.u64();
        }
        std::uint64_t n_tokens = r.u64();
        for (std::uint64_t i = 0; i < n_tokens; ++i) {
            std::string token = r.str();
            PostingList& pl = idx.postings_[token];
            pl.token = token;
            std::uint64_t n = r.u64();
            pl.post_ids.resize(n);
            pl.term_freqs.resize(n);
            for (std::uint64_t k = 0; k < n; ++k) {
                pl.post_ids[k] = r.u64();
                pl.term_freqs[k] = r.u32();
            }
        }
        return idx;
    }

private:
    static std::vector<std::string> distinct_tokens(const TokenList& tokens) {
        std::vector<std::string> distinct(tokens.begin(), tokens.end());
        std::sort(distinct.begin(), distinct.end());
        distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
        return distinct;
    }

    std::uint32_t term_freq_locked(const std::string& token, PostId id) const {
        auto it = postings_.find(token);
        if (it == postings_.end()) return 0;
        const auto& ids = it->second.post_ids;
        auto pos = std::lower_bound(ids.begin(), ids.end(), id);
        if (pos == ids.end() || *pos != id) return 0;
        return it->second.term_freqs[static_cast<std::size_t>(pos - ids.begin())];
    }

    double bm25_locked(const std::vector<std::string>& distinct, PostId id) const {
        constexpr double k1 = 1.2, b = 0.75;
        auto len_it = doc_len_.find(id);
        if (len_it == doc_len_.end()) return 0.0;
        double len = static_cast<double>(len_it->second);
        double avg = doc_count_ ? static_cast<double>(total_len_) /
                                      static_cast<double>(doc_count_)
                                : 0.0;
        double n_docs = static_cast<double>(doc_count_);
        double score = 0.0;
        for (const auto& t : distinct) {
            auto it = postings_.find(t);
            if (it == postings_.end()) continue;
            double tf = term_freq_locked(t, id);
            if (tf == 0.0) continue;
            double df = static_cast<double>(it->second.post_ids.size());
            double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
            score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / avg));
        }
        return score;
    }

    mutable std::shared_mutex mu_;
    std::unordered_map<std::string, PostingList> postings_;
    std::unordered_map<PostId, std::size_t> doc_len_;
    std::uint64_t total_len_ = 0;
    std::size_t doc_count_ = 0;
};

// Spec-shaped free function: BM25 from precomputed stats plus the index tf.
inline double bm25(const TokenList& query_tokens, PostId post_id,
                   const CorpusStats& stats, const InvertedIndex& index) {
    constexpr double k1 = 1.2, b = 0.75;
    std::vector<std::string> distinct(query_tokens.begin(), query_tokens.end());
    std::sort(distinct.begin(), distinct.end());
    distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
    double len = static_cast<double>(index.doc_len(post_id));
    if (len == 0.0 || stats.doc_count == 0) return 0.0;
    double n_docs = static_cast<double>(stats.doc_count);
    double score = 0.0;
    for (const auto& t : distinct) {
        double tf = index.term_freq(t, post_id);
        if (tf == 0.0) continue;
        double df = static_cast<double>(stats.df_of(t));
        double idf = std::log(1.0 + (n_docs - df + 0.5) / (df + 0.5));
        score += idf * tf * (k1 + 1.0) / (tf + k1 * (1.0 - b + b * len / stats.avg_len));
    }
    return score;
}

}  // namespace dowser
