#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dowser/corpus.hpp"
#include "dowser/mlp.hpp"
#include "dowser/store.hpp"
#include "dowser/text.hpp"
#include "dowser/types.hpp"

namespace dowser {

// Training target: equal-weight mean of the on-topic label and the long-dwell
// label by default, so labels land in {0, 0.5, 1}. The weight is a knob.
inline double aggregate_label(int on_topic, double dwell_seconds, PostType post_type,
                              const DwellThresholds& thresholds,
                              double on_topic_weight = 0.5) {
    if (on_topic != 0 && on_topic != 1)
        throw std::invalid_argument("on_topic label must be 0 or 1");
    if (dwell_seconds < 0.0)
        throw std::invalid_argument("dwell_seconds must be >= 0");
    double long_dwell = is_long_dwell(dwell_seconds, post_type, thresholds) ? 1.0 : 0.0;
    return on_topic_weight * static_cast<double>(on_topic) +
           (1.0 - on_topic_weight) * long_dwell;
}

struct QuerySideFeatures {
    Embedding text;               // D-dim
    double contains_job_title = 0.0;
    double job_seeking_intent = 0.0;

    std::vector<double> to_vector() const {
        std::vector<double> v = text.values;
        v.push_back(contains_job_title);
        v.push_back(job_seeking_intent);
        return v;
    }
};

struct PostSideFeatures {
    Embedding text;               // D-dim
    double popularity = 0.0;      // [0,1]
    double author_popularity = 0.0;
    double freshness = 1.0;       // exp(-age_days/30), (0,1]

    std::vector<double> to_vector() const {
        std::vector<double> v = text.values;
        v.push_back(popularity);
        v.push_back(author_popularity);
        v.push_back(freshness);
        return v;
    }
};

inline double freshness_from_age(std::int64_t created_at, std::int64_t reference_time) {
    double age_days =
        std::max<double>(0.0, static_cast<double>(reference_time - created_at) / 86400.0);
    return std::exp(-age_days / 30.0);
}

inline QuerySideFeatures make_query_features(const Query& query,
                                             const Searcher* searcher,
                                             Embedding text_embedding) {
    QuerySideFeatures f;
    f.text = std::move(text_embedding);
    f.contains_job_title = query.contains_job_title ? 1.0 : 0.0;
    // Anonymous searchers contribute zero searcher features.
    f.job_seeking_intent = (searcher && searcher->job_seeking_intent) ? 1.0 : 0.0;
    return f;
}

inline PostSideFeatures make_post_features(const Post& post, const Author& author,
                                           Embedding text_embedding,
                                           std::int64_t reference_time) {
    PostSideFeatures f;
    f.text = std::move(text_embedding);
    f.popularity = post.popularity;
    f.author_popularity = author.popularity;
    f.freshness = freshness_from_age(post.created_at, reference_time);
    return f;
}

struct TrainingExample {
    QuerySideFeatures query;
    PostSideFeatures post;
    double label = 0.0;  // [0,1]
};

// Two trainable towers producing comparable E-dim embeddings; the pair score
// is the cosine of the normalized tower outputs. tau and c scale the cosine
// into a logit during training and are learned alongside the towers.
struct TwoTowerModel {
    MlpParams query_tower;  // input D+2
    MlpParams post_tower;   // input D+3
    double tau = 2.0;
    double c = 0.0;

    std::size_t output_dim() const { return query_tower.output_dim(); }

    static TwoTowerModel init(std::size_t text_dim, std::size_t out_dim,
                              std::size_t hidden, std::uint64_t seed) {
        std::mt19937_64 rng(seed);
        TwoTowerModel m;
        m.query_tower = MlpParams::init({text_dim + 2, hidden, out_dim}, rng);
        m.post_tower = MlpParams::init({text_dim + 3, hidden, out_dim}, rng);
        return m;
    }

    static constexpr std::uint32_t kCheckpointVersion = 1;

    void save(const std::filesystem::path& path) const {
        checkpoint::Writer w(path);
        w.magic("DWTT", kCheckpointVersion);
        query_tower.save_into(w);
        post_tower.save_into(w);
        w.f64(tau);
        w.f64(c);
        w.close();
    }

    static TwoTowerModel load(const std::filesystem::path& path) {
        checkpoint::Reader r(path);
        if (r.magic("DWTT") != kCheckpointVersion)
            throw std::runtime_error("unsupported two-tower checkpoint version");
        TwoTowerModel m;
        m.query_tower = MlpParams::load_from(r);
        m.post_tower = MlpParams::load_from(r);
        m.tau = r.f64();
        m.c = r.f64();
        return m;
    }
};

namespace detail {

inline std::vector<double> l2_normalize(std::vector<double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    double n = std::sqrt(s);
    if (!(n > 0.0) || !std::isfinite(n))
        throw std::runtime_error("cannot normalize zero or non-finite vector");
    for (double& x : v) x /= n;
    return v;
}

}  // namespace detail

// Runs one tower and L2-normalizes the output.
inline Embedding tower_forward(const MlpParams& tower, std::span<const double> input) {
    return Embedding{detail::l2_normalize(mlp_forward(tower, input))};
}

inline Embedding query_embedding(const TwoTowerModel& m, const QuerySideFeatures& q) {
    return tower_forward(m.query_tower, q.to_vector());
}

inline Embedding post_embedding(const TwoTowerModel& m, const PostSideFeatures& p) {
    return tower_forward(m.post_tower, p.to_vector());
}

// Cosine similarity of the two tower outputs; equals their dot product since
// both are unit norm.
inline double score_pair(const TwoTowerModel& m, const QuerySideFeatures& q,
                         const PostSideFeatures& p) {
    return dot(query_embedding(m, q).values, post_embedding(m, p).values);
}

struct TwoTowerGrads {
    MlpGrads query;
    MlpGrads post;
    double tau = 0.0;
    double c = 0.0;

    static TwoTowerGrads zeros_like(const TwoTowerModel& m) {
        TwoTowerGrads g;
        g.query = MlpGrads::zeros_like(m.query_tower);
        g.post = MlpGrads::zeros_like(m.post_tower);
        return g;
    }
};

// Mean BCE between sigmoid(tau*cosine + c) and the label over `examples`.
inline double two_tower_loss(const TwoTowerModel& m,
                             std::span<const TrainingExample> examples) {
    if (examples.empty()) throw std::invalid_argument("no training examples");
    double total = 0.0;
    for (const auto& ex : examples) {
        double cos = score_pair(m, ex.query, ex.post);
        total += bce_with_logit(m.tau * cos + m.c, ex.label);
    }
    return total / static_cast<double>(examples.size());
}

// Analytic gradients of two_tower_loss, averaged over the batch. The chain
// runs through the cosine of L2-normalized tower outputs:
//   d cos / d u = (v_hat - cos * u_hat) / ||u||   (and symmetrically for v).
inline TwoTowerGrads two_tower_grads(const TwoTowerModel& m,
                                     std::span<const TrainingExample> examples,
                                     double* loss_out = nullptr) {
    if (examples.empty()) throw std::invalid_argument("no training examples");
    TwoTowerGrads grads = TwoTowerGrads::zeros_like(m);
    double total_loss = 0.0;
    const double inv_n = 1.0 / static_cast<double>(examples.size());

    for (const auto& ex : examples) {
        MlpCache qcache, pcache;
        std::vector<double> u = mlp_forward(m.query_tower, ex.query.to_vector(), &qcache);
        std::vector<double> v = mlp_forward(m.post_tower, ex.post.to_vector(), &pcache);
        double nu = std::sqrt(dot(u, u));
        double nv = std::sqrt(dot(v, v));
        if (!(nu > 0.0) || !(nv > 0.0))
            throw std::runtime_error("zero-norm tower output during training");
        std::size_t E = u.size();
        std::vector<double> uh(E), vh(E);
        for (std::size_t i = 0; i < E; ++i) uh[i] = u[i] / nu;
        for (std::size_t i = 0; i < E; ++i) vh[i] = v[i] / nv;
        double cos = dot(uh, vh);
        double logit = m.tau * cos + m.c;
        total_loss += bce_with_logit(logit, ex.label);

        double g = bce_logit_grad(logit, ex.label) * inv_n;  // dL/dz
        grads.tau += g * cos;
        grads.c += g;
        double gcos = g * m.tau;
        std::vector<double> du(E), dv(E);
        for (std::size_t i = 0; i < E; ++i) du[i] = gcos * (vh[i] - cos * uh[i]) / nu;
        for (std::size_t i = 0; i < E; ++i) dv[i] = gcos * (uh[i] - cos * vh[i]) / nv;
        mlp_backward(m.query_tower, qcache, du, grads.query);
        mlp_backward(m.post_tower, pcache, dv, grads.post);
    }
    if (loss_out) *loss_out = total_loss * inv_n;
    return grads;
}

struct TwoTowerTrainConfig {
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    std::size_t hidden = 64;
    std::size_t output_dim = 32;
};

struct TwoTowerTrainResult {
    TwoTowerModel model;
    double final_loss = 0.0;
    std::vector<double> epoch_losses;  // mean pre-update loss per epoch
};

// Mini-batch gradient descent on the BCE objective. Deterministic for a
// fixed seed: init, shuffling, and batch order are all driven by `seed`.
inline TwoTowerTrainResult train_two_tower(std::span<const TrainingExample> examples,
                                           const TwoTowerTrainConfig& config,
                                           std::uint64_t seed) {
    if (examples.empty()) throw std::invalid_argument("no training examples");
    for (const auto& ex : examples)
        if (ex.label < 0.0 || ex.label > 1.0)
            throw std::invalid_argument("training label outside [0,1]");
    std::size_t text_dim = examples[0].query.text.dim();

    TwoTowerTrainResult result;
    result.model = TwoTowerModel::init(text_dim, config.output_dim, config.hidden, seed);
    TwoTowerModel& model = result.model;

    std::mt19937_64 shuffle_rng(seed ^ 0x7b5d4e3caf19ULL);
    std::vector<std::size_t> order(examples.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<TrainingExample> batch;

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        // Fisher-Yates with explicit index draws for cross-platform stability.
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(shuffle_rng() % i);
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t end = std::min(order.size(), start + config.batch_size);
            batch.clear();
            for (std::size_t i = start; i < end; ++i) batch.push_back(examples[order[i]]);
            double batch_loss = 0.0;
            TwoTowerGrads grads = two_tower_grads(model, batch, &batch_loss);
            if (!std::isfinite(batch_loss))
                throw std::runtime_error(
                    "non-finite training loss at epoch " + std::to_string(epoch) +
                    ", batch " + std::to_string(n_batches) +
                    " (lr=" + std::to_string(config.learning_rate) + ")");
            epoch_loss += batch_loss;
            ++n_batches;
            sgd_step(model.query_tower, grads.query, config.learning_rate);
            sgd_step(model.post_tower, grads.post, config.learning_rate);
            model.tau -= config.learning_rate * grads.tau;
            model.c -= config.learning_rate * grads.c;
        }
        result.epoch_losses.push_back(epoch_loss / static_cast<double>(n_batches));
    }
    result.final_loss = two_tower_loss(model, examples);
    return result;
}

// Joins interaction records with the corpus into featurized training examples.
// `searcher_lookup` may return nullptr for anonymous searchers.
inline std::vector<TrainingExample> build_training_examples(
    const CorpusStore& corpus, std::span<const InteractionRecord> interactions,
    const TextEmbedder& embedder, const DwellThresholds& thresholds,
    std::int64_t reference_time,
    const std::function<const Searcher*(SearcherId)>& searcher_lookup = {},
    double on_topic_weight = 0.5) {
    std::vector<TrainingExample> examples;
    examples.reserve(interactions.size());
    for (const auto& rec : interactions) {
        auto post = corpus.get_post(rec.post_id);
        if (!post) continue;  // load_interactions already rejects dangling ids
        const Searcher* searcher =
            searcher_lookup ? searcher_lookup(rec.query.searcher_id) : nullptr;
        TrainingExample ex;
        ex.query = make_query_features(rec.query, searcher, embedder.embed(rec.query.text));
        ex.post = make_post_features(*post, corpus.author(post->author_id),
                                     embedder.embed(post->text), reference_time);
        ex.label = aggregate_label(rec.on_topic, rec.dwell_seconds, post->post_type,
                                   thresholds, on_topic_weight);
        examples.push_back(std::move(ex));
    }
    return examples;
}

// Offline batch job: computes and stores both the tower post embedding and the
// raw text embedding for every post in the corpus.
inline std::size_t batch_compute_embeddings(const TwoTowerModel& model,
                                            const CorpusStore& corpus,
                                            const TextEmbedder& embedder,
                                            EmbeddingStore& store,
                                            std::int64_t reference_time) {
    std::size_t n = 0;
    for (PostId id : corpus.all_ids_sorted()) {
        auto post = corpus.get_post(id);
        if (!post) continue;
        Embedding text_emb = embedder.embed(post->text);
        PostSideFeatures f = make_post_features(*post, corpus.author(post->author_id),
                                                text_emb, reference_time);
        Embedding tower = post_embedding(model, f);
        store.put(id, std::move(tower.values), std::move(text_emb.values));
        ++n;
    }
    return n;
}

}  // namespace dowser
