#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <mutex>
#include <shared_mutex>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "dowser/checkpoint.hpp"
#include "dowser/types.hpp"

namespace dowser {

// Durable map post_id -> (tower post embedding, raw text embedding), the
// precomputed vectors the query path reads instead of touching post text.
class EmbeddingStore {
public:
    struct Entry {
        std::vector<double> tower;  // E-dim, unit norm
        std::vector<double> text;   // D-dim, unit norm
    };

    EmbeddingStore(std::size_t tower_dim, std::size_t text_dim)
        : tower_dim_(tower_dim), text_dim_(text_dim) {}

    // Moves are for construction-time handoff only (snapshot load); they must
    // not race concurrent readers.
    EmbeddingStore(EmbeddingStore&& other) noexcept
        : tower_dim_(other.tower_dim_),
          text_dim_(other.text_dim_),
          entries_(std::move(other.entries_)),
          version_(other.version_) {}

    EmbeddingStore& operator=(EmbeddingStore&& other) noexcept {
        if (this != &other) {
            tower_dim_ = other.tower_dim_;
            text_dim_ = other.text_dim_;
            entries_ = std::move(other.entries_);
            version_ = other.version_;
        }
        return *this;
    }

    void put(PostId id, std::vector<double> tower, std::vector<double> text) {
        check_unit("tower", tower, tower_dim_);
        check_unit("text", text, text_dim_);
        std::unique_lock lock(mu_);
        entries_[id] = Entry{std::move(tower), std::move(text)};
        ++version_;
    }

    std::optional<Entry> get(PostId id) const {
        std::shared_lock lock(mu_);
        auto it = entries_.find(id);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    bool contains(PostId id) const {
        std::shared_lock lock(mu_);
        return entries_.count(id) > 0;
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return entries_.size();
    }

    std::uint64_t version() const {
        std::shared_lock lock(mu_);
        return version_;
    }

    std::size_t tower_dim() const { return tower_dim_; }
    std::size_t text_dim() const { return text_dim_; }

    std::vector<PostId> ids_sorted() const {
        std::shared_lock lock(mu_);
        std::vector<PostId> ids;
        ids.reserve(entries_.size());
        for (const auto& [id, _] : entries_) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        return ids;
    }

    static constexpr std::uint32_t kSnapshotVersion = 1;

    void save(const std::filesystem::path& path) const {
        std::shared_lock lock(mu_);
        checkpoint::Writer w(path);
        w.magic("DWES", kSnapshotVersion);
        w.u64(tower_dim_);
        w.u64(text_dim_);
        w.u64(version_);
        std::vector<PostId> ids;
        ids.reserve(entries_.size());
        for (const auto& [id, _] : entries_) ids.push_back(id);
        std::sort(ids.begin(), ids.end());
        w.u64(ids.size());
        for (PostId id : ids) {
            const Entry& e = entries_.at(id);
            w.u64(id);
            for (double v : e.tower) w.f64(v);
            for (double v : e.text) w.f64(v);
        }
        w.close();
    }

    static EmbeddingStore load(const std::filesystem::path& path) {
        checkpoint::Reader r(path);
        std::uint32_t version = r.magic("DWES");
        if (version != kSnapshotVersion)
            throw std::runtime_error("unsupported store snapshot version");
        std::size_t tower_dim = r.u64();
        std::size_t text_dim = r.u64();
        EmbeddingStore store(tower_dim, text_dim);
        store.version_ = r.u64();
        std::uint64_t n = r.u64();
        for (std::uint64_t i = 0; i < n; ++i) {
            PostId id = r.u64();
            Entry e;
            e.tower.resize(tower_dim);
            for (auto& v : e.tower) v = r.f64();
            e.text.resize(text_dim);
            for (auto& v : e.text) v = r.f64();
            store.entries_.emplace(id, std::move(e));
        }
        return store;
    }

private:
    static void check_unit(const char* what, const std::vector<double>& v,
                           std::size_t want_dim) {
        if (v.size() != want_dim)
            throw std::invalid_argument(std::string(what) + " embedding dimension mismatch");
        double s = 0.0;
        for (double x : v) s += x * x;
        if (std::abs(std::sqrt(s) - 1.0) > 1e-6)
            throw std::invalid_argument(std::string(what) + " embedding is not unit norm");
    }

    std::size_t tower_dim_, text_dim_;
    mutable std::shared_mutex mu_;
    std::unordered_map<PostId, Entry> entries_;
    std::uint64_t version_ = 0;
};

}  // namespace dowser
