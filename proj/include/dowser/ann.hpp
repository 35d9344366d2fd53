#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <queue>
#include <random>
#include <mutex>
#include <shared_mutex>
#include <span>
#include <stdexcept>
#include <unordered_map>
#include <vector>

#include "dowser/text.hpp"
#include "dowser/types.hpp"

namespace dowser {

struct AnnParams {
    std::size_t max_neighbors = 16;     // per-layer degree cap (M)
    std::size_t ef_construction = 100;  // build-time beam width
    std::uint64_t seed = 0x9d2c5680u;
};

// Navigable small-world graph over unit-norm post embeddings, searched under a
// hard budget on the number of similarity evaluations (the scan limit).
// Concurrent readers, single serialized writer; a search observes the graph
// either before or after any in-flight insert.
class AnnIndex {
public:
    using Params = AnnParams;

    struct Hit {
        PostId post_id;
        double score;  // cosine
    };

    explicit AnnIndex(std::size_t dim, Params params = Params())
        : dim_(dim), params_(params), level_rng_(params.seed),
          level_mult_(1.0 / std::log(static_cast<double>(params.max_neighbors))) {
        if (params_.max_neighbors < 2)
            throw std::invalid_argument("max_neighbors must be >= 2");
    }

    std::size_t size() const {
        std::shared_lock lock(mu_);
        return nodes_.size();
    }

    std::size_t dim() const { return dim_; }

    // Number of similarity evaluations performed by the last search on this
    // thread; exposed for budget accounting in tests.
    static std::size_t last_search_evals() { return last_evals_; }

    // Inserts one post embedding. Throws on duplicate id, wrong dimension, or
    // non-unit norm.
    void insert(PostId post_id, std::span<const double> embedding) {
        if (embedding.size() != dim_)
            throw std::invalid_argument("ann: embedding dimension mismatch");
        double norm = 0.0;
        for (double v : embedding) norm += v * v;
        if (std::abs(std::sqrt(norm) - 1.0) > 1e-6)
            throw std::invalid_argument("ann: embedding must be unit norm");

        std::unique_lock lock(mu_);
        if (id_of_.count(post_id) > 0)
            throw std::invalid_argument("ann: duplicate post_id " +
                                        std::to_string(post_id));

        int level = sample_level();
        std::uint32_t node = static_cast<std::uint32_t>(nodes_.size());
        nodes_.push_back(Node{post_id,
                              {embedding.begin(), embedding.end()},
                              std::vector<std::vector<std::uint32_t>>(
                                  static_cast<std::size_t>(level) + 1)});
        id_of_.emplace(post_id, node);

        if (node == 0) {
            entry_point_ = 0;
            max_level_ = level;
            return;
        }

        std::uint32_t curr = entry_point_;
        double curr_sim = sim(node, curr);
        for (int layer = max_level_; layer > level; --layer)
            greedy_step(nodes_[node].vec, layer, curr, curr_sim);

        for (int layer = std::min(level, max_level_); layer >= 0; --layer) {
            auto beam = search_layer(nodes_[node].vec, curr, curr_sim,
                                     params_.ef_construction, layer);
            auto selected = select_neighbors(nodes_[node].vec, beam);
            auto& links = nodes_[node].links[static_cast<std::size_t>(layer)];
            for (auto& [s, other] : selected) {
                links.push_back(other);
                auto& back = nodes_[other].links[static_cast<std::size_t>(layer)];
                back.push_back(node);
                if (back.size() > params_.max_neighbors) prune(other, layer);
            }
            if (!beam.empty()) {
                curr = beam.front().second;
                curr_sim = beam.front().first;
            }
        }

        if (level > max_level_) {
            max_level_ = level;
            entry_point_ = node;
        }
    }

    bool contains(PostId post_id) const {
        std::shared_lock lock(mu_);
        return id_of_.count(post_id) > 0;
    }

    // Top-k by descending cosine (ties by ascending post_id). At most
    // `scan_limit` similarity evaluations are performed across all layers.
    std::vector<Hit> search(std::span<const double> query, std::size_t k,
                            std::size_t scan_limit) const {
        if (k < 1) throw std::invalid_argument("ann: k must be >= 1");
        if (scan_limit < k) throw std::invalid_argument("ann: scan_limit must be >= k");
        if (query.size() != dim_)
            throw std::invalid_argument("ann: query dimension mismatch");

        std::shared_lock lock(mu_);
        last_evals_ = 0;
        if (nodes_.empty()) return {};

        // The budget counts distinct posts scored; a cache makes re-visits
        // across layers free.
        EvalCache cache(nodes_.size());
        Budget budget{scan_limit, 0};
        std::uint32_t curr = entry_point_;
        double curr_sim = cache.eval(*this, query, curr, budget);
        for (int layer = max_level_; layer > 0 && !budget.exhausted(); --layer)
            greedy_step_budgeted(query, layer, curr, curr_sim, budget, cache);

        auto beam = search_layer_budgeted(query, curr, curr_sim, 0, budget, cache);
        last_evals_ = budget.used;

        std::sort(beam.begin(), beam.end(), [this](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return nodes_[a.second].post_id < nodes_[b.second].post_id;
        });
        if (beam.size() > k) beam.resize(k);
        std::vector<Hit> hits;
        hits.reserve(beam.size());
        for (auto& [s, n] : beam) hits.push_back(Hit{nodes_[n].post_id, s});
        return hits;
    }

    std::size_t max_degree() const {
        std::shared_lock lock(mu_);
        std::size_t d = 0;
        for (const auto& node : nodes_)
            for (const auto& layer : node.links) d = std::max(d, layer.size());
        return d;
    }

    // Count of nodes reachable from the entry point on the base layer.
    std::size_t reachable_from_entry() const {
        std::shared_lock lock(mu_);
        if (nodes_.empty()) return 0;
        std::vector<char> seen(nodes_.size(), 0);
        std::vector<std::uint32_t> stack{entry_point_};
        seen[entry_point_] = 1;
        std::size_t count = 0;
        while (!stack.empty()) {
            std::uint32_t n = stack.back();
            stack.pop_back();
            ++count;
            for (std::uint32_t nb : nodes_[n].links[0])
                if (!seen[nb]) {
                    seen[nb] = 1;
                    stack.push_back(nb);
                }
        }
        return count;
    }

private:
    struct Node {
        PostId post_id;
        std::vector<double> vec;
        std::vector<std::vector<std::uint32_t>> links;  // one list per layer
    };

    struct Budget {
        std::size_t limit;
        std::size_t used;
        bool exhausted() const { return used >= limit; }
    };

    // (similarity, node), ordered best-first with id tie-break.
    using ScoredNode = std::pair<double, std::uint32_t>;

    // Memoized similarity evaluation: only the first scoring of a node spends
    // budget.
    struct EvalCache {
        explicit EvalCache(std::size_t n) : sim(n, 0.0), known(n, 0) {}
        std::vector<double> sim;
        std::vector<char> known;

        bool has(std::uint32_t node) const { return known[node] != 0; }

        double eval(const AnnIndex& index, std::span<const double> query,
                    std::uint32_t node, Budget& budget) {
            if (!known[node]) {
                ++budget.used;
                sim[node] = dot(query, index.nodes_[node].vec);
                known[node] = 1;
            }
            return sim[node];
        }
    };

    int sample_level() {
        double u = static_cast<double>(level_rng_() >> 11) * 0x1.0p-53;
        if (u <= 0.0) u = 0x1.0p-53;
        return static_cast<int>(-std::log(u) * level_mult_);
    }

    double sim(std::uint32_t a, std::uint32_t b) const {
        return dot(nodes_[a].vec, nodes_[b].vec);
    }

    void greedy_step(std::span<const double> query, int layer, std::uint32_t& curr,
                     double& curr_sim) const {
        bool improved = true;
        while (improved) {
            improved = false;
            for (std::uint32_t nb : nodes_[curr].links[static_cast<std::size_t>(layer)]) {
                double s = dot(query, nodes_[nb].vec);
                if (s > curr_sim) {
                    curr_sim = s;
                    curr = nb;
                    improved = true;
                }
            }
        }
    }

    void greedy_step_budgeted(std::span<const double> query, int layer,
                              std::uint32_t& curr, double& curr_sim, Budget& budget,
                              EvalCache& cache) const {
        bool improved = true;
        while (improved) {
            improved = false;
            for (std::uint32_t nb : nodes_[curr].links[static_cast<std::size_t>(layer)]) {
                if (!cache.has(nb) && budget.exhausted()) return;
                double s = cache.eval(*this, query, nb, budget);
                if (s > curr_sim) {
                    curr_sim = s;
                    curr = nb;
                    improved = true;
                }
            }
        }
    }

    // Budgeted best-first beam on the base layer: expansion continues until
    // the evaluation allowance is spent or the frontier is exhausted.
    std::vector<ScoredNode> search_layer_budgeted(std::span<const double> query,
                                                  std::uint32_t entry, double entry_sim,
                                                  int layer, Budget& budget,
                                                  EvalCache& cache) const {
        auto worse = [this](const ScoredNode& a, const ScoredNode& b) {
            if (a.first != b.first) return a.first < b.first;
            return nodes_[a.second].post_id > nodes_[b.second].post_id;
        };
        std::priority_queue<ScoredNode, std::vector<ScoredNode>, decltype(worse)>
            candidates(worse);
        std::vector<char> queued(nodes_.size(), 0);
        std::vector<ScoredNode> results;
        queued[entry] = 1;
        candidates.emplace(entry_sim, entry);

        bool spent = false;
        while (!candidates.empty() && !spent) {
            auto [cand_sim, cand] = candidates.top();
            candidates.pop();
            results.emplace_back(cand_sim, cand);
            for (std::uint32_t nb : nodes_[cand].links[static_cast<std::size_t>(layer)]) {
                if (queued[nb]) continue;
                if (!cache.has(nb) && budget.exhausted()) {
                    spent = true;
                    break;
                }
                double s = cache.eval(*this, query, nb, budget);
                queued[nb] = 1;
                candidates.emplace(s, nb);
            }
        }
        // Everything still in the frontier has been paid for; keep it.
        while (!candidates.empty()) {
            results.push_back(candidates.top());
            candidates.pop();
        }
        return results;
    }

    // Construction-time beam search on one layer, seeded with an
    // already-evaluated entry node. Stops when the frontier cannot improve
    // the ef-bounded beam.
    std::vector<ScoredNode> search_layer(std::span<const double> query,
                                         std::uint32_t entry, double entry_sim,
                                         std::size_t ef, int layer) const {
        auto worse = [this](const ScoredNode& a, const ScoredNode& b) {
            if (a.first != b.first) return a.first < b.first;
            return nodes_[a.second].post_id > nodes_[b.second].post_id;
        };
        // candidates: best first; results: worst first (for eviction)
        std::priority_queue<ScoredNode, std::vector<ScoredNode>, decltype(worse)>
            candidates(worse);
        auto better = [this](const ScoredNode& a, const ScoredNode& b) {
            if (a.first != b.first) return a.first > b.first;
            return nodes_[a.second].post_id < nodes_[b.second].post_id;
        };
        std::priority_queue<ScoredNode, std::vector<ScoredNode>, decltype(better)>
            results(better);

        std::vector<char> visited(nodes_.size(), 0);
        visited[entry] = 1;
        candidates.emplace(entry_sim, entry);
        results.emplace(entry_sim, entry);

        while (!candidates.empty()) {
            auto [cand_sim, cand] = candidates.top();
            candidates.pop();
            if (results.size() >= ef && cand_sim < results.top().first) break;
            for (std::uint32_t nb : nodes_[cand].links[static_cast<std::size_t>(layer)]) {
                if (visited[nb]) continue;
                visited[nb] = 1;
                double s = dot(query, nodes_[nb].vec);
                if (results.size() < ef || s > results.top().first) {
                    candidates.emplace(s, nb);
                    results.emplace(s, nb);
                    if (results.size() > ef) results.pop();
                }
            }
        }
        std::vector<ScoredNode> out;
        out.reserve(results.size());
        while (!results.empty()) {
            out.push_back(results.top());
            results.pop();
        }
        std::reverse(out.begin(), out.end());  // best first
        return out;
    }

    // Diversified neighbor selection: keep a candidate only when it is closer
    // to the base vector than to every already-selected neighbor. Candidates
    // clustered behind an already-selected node are dropped, which keeps the
    // degree budget pointed at distinct regions.
    std::vector<ScoredNode> select_neighbors(std::span<const double> base,
                                             const std::vector<ScoredNode>& beam) const {
        std::vector<ScoredNode> selected;
        for (const auto& [s, cand] : beam) {
            if (selected.size() >= params_.max_neighbors) break;
            bool diverse = true;
            for (const auto& [rs, r] : selected) {
                if (sim(cand, r) > s) {
                    diverse = false;
                    break;
                }
            }
            if (diverse) selected.emplace_back(s, cand);
        }
        return selected;
    }

    // Re-selects the best M links for an over-full node.
    void prune(std::uint32_t node, int layer) {
        auto& links = nodes_[node].links[static_cast<std::size_t>(layer)];
        std::vector<ScoredNode> scored;
        scored.reserve(links.size());
        for (std::uint32_t nb : links) scored.emplace_back(sim(node, nb), nb);
        std::sort(scored.begin(), scored.end(), [this](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first > b.first;
            return nodes_[a.second].post_id < nodes_[b.second].post_id;
        });
        auto selected = select_neighbors(nodes_[node].vec, scored);
        links.clear();
        for (auto& [s, nb] : selected) links.push_back(nb);
    }

    std::size_t dim_;
    Params params_;
    std::mt19937_64 level_rng_;
    double level_mult_;
    mutable std::shared_mutex mu_;
    std::vector<Node> nodes_;
    std::unordered_map<PostId, std::uint32_t> id_of_;
    std::uint32_t entry_point_ = 0;
    int max_level_ = 0;
    inline static thread_local std::size_t last_evals_ = 0;
};

// Exact top-k by cosine over explicit vectors; the oracle ANN search is
// checked against.
inline std::vector<AnnIndex::Hit> brute_force_top_k(
    std::span<const std::pair<PostId, std::vector<double>>> vectors,
    std::span<const double> query, std::size_t k) {
    std::vector<AnnIndex::Hit> hits;
    hits.reserve(vectors.size());
    for (const auto& [id, vec] : vectors)
        hits.push_back(AnnIndex::Hit{id, dot(query, vec)});
    std::sort(hits.begin(), hits.end(), [](const auto& a, const auto& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.post_id < b.post_id;
    });
    if (hits.size() > k) hits.resize(k);
    return hits;
}

}  // namespace dowser
