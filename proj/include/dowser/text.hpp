#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "dowser/types.hpp"

namespace dowser {

using TokenList = std::vector<std::string>;

namespace detail {

// Bytes >= 0x80 (UTF-8 multi-byte sequences) are treated as word characters;
// ASCII letters are lowercased. Full Unicode case folding is out of scope.
inline bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
           (c >= '0' && c <= '9') || c >= 0x80;
}

inline char lower_ascii(unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a')
                                  : static_cast<char>(c);
}

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t seed) {
    std::uint64_t h = 0xcbf29ce484222325ULL ^ (seed * 0x9e3779b97f4a7c15ULL);
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

// Lowercases and splits on runs of non-alphanumeric bytes. Empty tokens are
// never produced.
inline TokenList tokenize(std::string_view text) {
    TokenList tokens;
    std::string current;
    for (unsigned char c : text) {
        if (detail::is_word_byte(c)) {
            current.push_back(detail::lower_ascii(c));
        } else if (!current.empty()) {
            tokens.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) tokens.push_back(std::move(current));
    return tokens;
}

inline std::string trim_copy(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

// Fixed-dimension real vector; producers guarantee unit L2 norm.
struct Embedding {
    std::vector<double> values;

    std::size_t dim() const { return values.size(); }
    double norm() const {
        double s = 0.0;
        for (double v : values) s += v * v;
        return std::sqrt(s);
    }
};

inline double dot(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size())
        throw std::invalid_argument("dot: dimension mismatch");
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double cosine(const Embedding& a, const Embedding& b) {
    return dot(a.values, b.values);
}

// Deterministic text -> unit-norm vector stage. Implementations must return
// bitwise-identical output for identical input.
class TextEmbedder {
public:
    virtual ~TextEmbedder() = default;
    virtual std::string id() const = 0;
    virtual std::size_t dim() const = 0;
    virtual Embedding embed(std::string_view text) const = 0;
};

// Default embedder: hashed character trigrams over the tokenized text,
// bucketed into a D-dimensional term-frequency vector, L2-normalized.
// Shares the tokenizer with retrieval so term boundaries agree.
class HashedTrigramEmbedder final : public TextEmbedder {
public:
    static constexpr std::uint64_t kDefaultSeed = 0x1f3d5b79a2c4e608ULL;

    explicit HashedTrigramEmbedder(std::size_t dim = 64,
                                   std::uint64_t seed = kDefaultSeed)
        : dim_(dim), seed_(seed) {
        if (dim_ == 0) throw std::invalid_argument("embedder dim must be > 0");
    }

    std::string id() const override { return "hashed-trigram"; }
    std::size_t dim() const override { return dim_; }

    Embedding embed(std::string_view text) const override {
        Embedding e;
        e.values.assign(dim_, 0.0);
        const std::string canon = canonical(text);
        if (canon.empty()) {
            // Reserved unit vector for empty text.
            e.values[bucket_of("<empty>")] = 1.0;
            return e;
        }
        if (canon.size() < 3) {
            e.values[bucket_of(canon)] = 1.0;
            return e;
        }
        for (std::size_t i = 0; i + 3 <= canon.size(); ++i)
            e.values[bucket_of(std::string_view(canon).substr(i, 3))] += 1.0;
        double n = e.norm();
        for (double& v : e.values) v /= n;
        return e;
    }

    // Exposed so tests can construct bucket-disjoint string pairs.
    std::size_t bucket_of(std::string_view gram) const {
        return detail::fnv1a64(gram, seed_) % dim_;
    }

    std::string canonical(std::string_view text) const {
        TokenList toks = tokenize(text);
        std::string out;
        for (std::size_t i = 0; i < toks.size(); ++i) {
            if (i) out.push_back(' ');
            out += toks[i];
        }
        return out;
    }

private:
    std::size_t dim_;
    std::uint64_t seed_;
};

// Embedders are selected by name in the engine config; external
// implementations may be registered programmatically.
class EmbedderRegistry {
public:
    using Factory = std::function<std::unique_ptr<TextEmbedder>(std::size_t dim, std::uint64_t seed)>;

    static EmbedderRegistry& instance() {
        static EmbedderRegistry reg;
        return reg;
    }

    void register_embedder(const std::string& name, Factory f) {
        factories_[name] = std::move(f);
    }

    std::unique_ptr<TextEmbedder> create(const std::string& name,
                                         std::size_t dim,
                                         std::uint64_t seed) const {
        auto it = factories_.find(name);
        if (it == factories_.end())
            throw std::invalid_argument("unknown embedder: " + name);
        return it->second(dim, seed);
    }

    bool has(const std::string& name) const { return factories_.count(name) > 0; }

private:
    EmbedderRegistry() {
        factories_["hashed-trigram"] = [](std::size_t dim, std::uint64_t seed) {
            return std::make_unique<HashedTrigramEmbedder>(dim, seed);
        };
    }
    std::map<std::string, Factory> factories_;
};

// Small fixed lexicon backing the contains_job_title query flag.
inline bool contains_job_title(const TokenList& tokens);

// Builds a Query from raw text, deriving the job-title flag.
inline Query make_query(std::string text, SearcherId searcher_id = 0,
                        std::int64_t issued_at = 0) {
    Query q;
    q.contains_job_title = contains_job_title(tokenize(text));
    q.text = std::move(text);
    q.searcher_id = searcher_id;
    q.issued_at = issued_at;
    return q;
}

inline bool contains_job_title(const TokenList& tokens) {
    static const std::set<std::string> kTitles = {
        "engineer",  "manager",   "director", "analyst",   "designer",
        "developer", "scientist", "recruiter", "consultant", "architect",
        "accountant", "nurse",    "teacher",  "attorney",  "lawyer",
        "physician", "intern",    "founder",  "ceo",       "cto",
        "cfo",       "vp",        "president"};
    for (const auto& t : tokens)
        if (kTitles.count(t)) return true;
    return false;
}

}  // namespace dowser
