#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dowser/corpus.hpp"
#include "dowser/mlp.hpp"
#include "dowser/tbr.hpp"
#include "dowser/text.hpp"
#include "dowser/types.hpp"

namespace dowser {

// Fixed-order ranking features. The full vector feeds the long-dwell head;
// the reduced vector (text embeddings + BM25) feeds the L1 stage.
struct RankFeatureVector {
    Embedding query_text;   // D
    Embedding post_text;    // D
    double bm25 = 0.0;
    double contains_job_title = 0.0;
    double post_popularity = 0.0;
    double post_freshness = 1.0;
    double job_seeking_intent = 0.0;
    double author_popularity = 0.0;
    double searcher_author_connected = 0.0;

    static constexpr std::size_t kScalarCount = 7;

    std::vector<double> full_vector() const {
        std::vector<double> v;
        v.reserve(query_text.dim() + post_text.dim() + kScalarCount);
        v.insert(v.end(), query_text.values.begin(), query_text.values.end());
        v.insert(v.end(), post_text.values.begin(), post_text.values.end());
        v.push_back(bm25);
        v.push_back(contains_job_title);
        v.push_back(post_popularity);
        v.push_back(post_freshness);
        v.push_back(job_seeking_intent);
        v.push_back(author_popularity);
        v.push_back(searcher_author_connected);
        return v;
    }

    std::vector<double> reduced_vector() const {
        std::vector<double> v;
        v.reserve(query_text.dim() + post_text.dim() + 1);
        v.insert(v.end(), query_text.values.begin(), query_text.values.end());
        v.insert(v.end(), post_text.values.begin(), post_text.values.end());
        v.push_back(bm25);
        return v;
    }
};

inline double freshness_for_ranking(std::int64_t created_at, std::int64_t reference_time) {
    double age_days =
        std::max<double>(0.0, static_cast<double>(reference_time - created_at) / 86400.0);
    return std::exp(-age_days / 30.0);
}

// Assembles the feature vector for one (query, post, searcher, author) tuple.
// `post_text_embedding` normally comes from the embedding store so the query
// path never touches post text.
inline RankFeatureVector extract_features(const Query& query, const Post& post,
                                          const Searcher* searcher, const Author& author,
                                          const CorpusStats& stats,
                                          const InvertedIndex& index,
                                          Embedding query_text_embedding,
                                          Embedding post_text_embedding,
                                          std::int64_t reference_time) {
    RankFeatureVector f;
    f.query_text = std::move(query_text_embedding);
    f.post_text = std::move(post_text_embedding);
    f.bm25 = bm25(tokenize(query.text), post.post_id, stats, index);
    f.contains_job_title = query.contains_job_title ? 1.0 : 0.0;
    f.post_popularity = post.popularity;
    f.post_freshness = freshness_for_ranking(post.created_at, reference_time);
    f.job_seeking_intent = (searcher && searcher->job_seeking_intent) ? 1.0 : 0.0;
    f.author_popularity = author.popularity;
    f.searcher_author_connected =
        (searcher && searcher->connected_to(post.author_id)) ? 1.0 : 0.0;
    return f;
}

enum class RankStage { L1, L2 };

inline std::string to_string(RankStage s) { return s == RankStage::L1 ? "L1" : "L2"; }

// Stage model: the L2 model carries both prediction heads and fuses them with
// alpha; the L1 model carries only the long-dwell head over the reduced
// feature set and ranks by that single score.
struct RankingModel {
    RankStage stage = RankStage::L2;
    double alpha = 0.5;
    std::optional<MlpParams> on_topic_head;  // input 2D (L2 only)
    MlpParams long_dwell_head;               // input 2D+7 (L2) or 2D+1 (L1)

    static RankingModel init_l1(std::size_t text_dim, std::uint64_t seed,
                                std::size_t hidden = 16) {
        std::mt19937_64 rng(seed);
        RankingModel m;
        m.stage = RankStage::L1;
        m.long_dwell_head = MlpParams::init({2 * text_dim + 1, hidden, 1}, rng);
        return m;
    }

    static RankingModel init_l2(std::size_t text_dim, double alpha, std::uint64_t seed,
                                std::vector<std::size_t> hidden = {64, 32}) {
        std::mt19937_64 rng(seed);
        RankingModel m;
        m.stage = RankStage::L2;
        m.alpha = alpha;
        std::vector<std::size_t> on_dims{2 * text_dim};
        on_dims.insert(on_dims.end(), hidden.begin(), hidden.end());
        on_dims.push_back(1);
        m.on_topic_head = MlpParams::init(on_dims, rng);
        std::vector<std::size_t> dw_dims{2 * text_dim + RankFeatureVector::kScalarCount};
        dw_dims.insert(dw_dims.end(), hidden.begin(), hidden.end());
        dw_dims.push_back(1);
        m.long_dwell_head = MlpParams::init(dw_dims, rng);
        return m;
    }

    static constexpr std::uint32_t kCheckpointVersion = 1;

    void save(const std::filesystem::path& path) const {
        checkpoint::Writer w(path);
        w.magic("DWRK", kCheckpointVersion);
        w.u32(stage == RankStage::L1 ? 1 : 2);
        w.f64(alpha);
        w.u32(on_topic_head ? 1 : 0);
        if (on_topic_head) on_topic_head->save_into(w);
        long_dwell_head.save_into(w);
        w.close();
    }

    static RankingModel load(const std::filesystem::path& path) {
        checkpoint::Reader r(path);
        if (r.magic("DWRK") != kCheckpointVersion)
            throw std::runtime_error("unsupported ranking checkpoint version");
        RankingModel m;
        m.stage = r.u32() == 1 ? RankStage::L1 : RankStage::L2;
        m.alpha = r.f64();
        if (r.u32()) m.on_topic_head = MlpParams::load_from(r);
        m.long_dwell_head = MlpParams::load_from(r);
        return m;
    }
};

// sigmoid(MLP(q_emb concat p_emb)) in (0,1).
inline double on_topicness_score(const RankingModel& model, const Embedding& q_emb,
                                 const Embedding& p_emb) {
    if (!model.on_topic_head)
        throw std::invalid_argument("model has no on-topicness head");
    std::vector<double> in;
    in.reserve(q_emb.dim() + p_emb.dim());
    in.insert(in.end(), q_emb.values.begin(), q_emb.values.end());
    in.insert(in.end(), p_emb.values.begin(), p_emb.values.end());
    return sigmoid(mlp_forward(*model.on_topic_head, in)[0]);
}

// sigmoid(MLP(features)) in (0,1); the feature layout depends on the stage.
inline double long_dwell_score(const RankingModel& model,
                               const RankFeatureVector& features) {
    std::vector<double> in = model.stage == RankStage::L1 ? features.reduced_vector()
                                                          : features.full_vector();
    return sigmoid(mlp_forward(model.long_dwell_head, in)[0]);
}

// score = alpha * on_topicness + (1 - alpha) * long_dwell
inline double fuse(double on_topicness, double long_dwell, double alpha) {
    if (!(alpha >= 0.0 && alpha <= 1.0))
        throw std::domain_error("alpha must be in [0,1]");
    return alpha * on_topicness + (1.0 - alpha) * long_dwell;
}

enum class CandidateSource { TBR, EBR, both };

inline std::string to_string(CandidateSource s) {
    switch (s) {
        case CandidateSource::TBR: return "TBR";
        case CandidateSource::EBR: return "EBR";
        case CandidateSource::both: return "both";
    }
    throw std::invalid_argument("unknown candidate source");
}

struct ScoredCandidate {
    PostId post_id = 0;
    CandidateSource source = CandidateSource::TBR;
    double on_topicness = 0.0;
    double long_dwell = 0.0;
    double fused = 0.0;
};

struct CandidateFeatures {
    PostId post_id = 0;
    CandidateSource source = CandidateSource::TBR;
    RankFeatureVector features;
};

// Scores all candidates with the stage model and keeps the top `keep` under
// the total order (fused desc, post_id asc). For L1 both score fields carry
// the single stage score, which keeps fused == alpha*s + (1-alpha)*d exact.
inline std::vector<ScoredCandidate> rank_stage(const RankingModel& model,
                                               std::span<const CandidateFeatures> candidates,
                                               std::size_t keep,
                                               std::optional<double> alpha_override = {}) {
    if (keep < 1) throw std::invalid_argument("keep must be >= 1");
    double alpha = alpha_override.value_or(model.alpha);
    std::vector<ScoredCandidate> scored;
    scored.reserve(candidates.size());
    for (const auto& c : candidates) {
        ScoredCandidate sc;
        sc.post_id = c.post_id;
        sc.source = c.source;
        if (model.stage == RankStage::L1) {
            double s = long_dwell_score(model, c.features);
            sc.on_topicness = s;
            sc.long_dwell = s;
            sc.fused = fuse(s, s, alpha);
        } else {
            sc.on_topicness =
                on_topicness_score(model, c.features.query_text, c.features.post_text);
            sc.long_dwell = long_dwell_score(model, c.features);
            sc.fused = fuse(sc.on_topicness, sc.long_dwell, alpha);
        }
        scored.push_back(sc);
    }
    std::sort(scored.begin(), scored.end(), [](const auto& a, const auto& b) {
        if (a.fused != b.fused) return a.fused > b.fused;
        return a.post_id < b.post_id;
    });
    if (scored.size() > keep) scored.resize(keep);
    return scored;
}

// One training row for the ranking heads.
struct RankSample {
    RankFeatureVector features;
    double on_topic_label = 0.0;
    double long_dwell_label = 0.0;
};

struct RankTrainConfig {
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
};

// Mean BCE of one sigmoid head over inputs/labels; pure, shared with the
// finite-difference checks.
inline double head_loss(const MlpParams& head, std::span<const std::vector<double>> inputs,
                        std::span<const double> labels) {
    if (inputs.empty()) throw std::invalid_argument("no samples");
    double total = 0.0;
    for (std::size_t i = 0; i < inputs.size(); ++i)
        total += bce_with_logit(mlp_forward(head, inputs[i])[0], labels[i]);
    return total / static_cast<double>(inputs.size());
}

inline MlpGrads head_grads(const MlpParams& head,
                           std::span<const std::vector<double>> inputs,
                           std::span<const double> labels, double* loss_out = nullptr) {
    MlpGrads grads = MlpGrads::zeros_like(head);
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(inputs.size());
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        MlpCache cache;
        double logit = mlp_forward(head, inputs[i], &cache)[0];
        total += bce_with_logit(logit, labels[i]);
        double d = bce_logit_grad(logit, labels[i]) * inv_n;
        mlp_backward(head, cache, std::vector<double>{d}, grads);
    }
    if (loss_out) *loss_out = total * inv_n;
    return grads;
}

namespace detail {

// Shared mini-batch SGD loop for a single head.
inline std::vector<double> train_head(MlpParams& head,
                                      std::span<const std::vector<double>> inputs,
                                      std::span<const double> labels,
                                      const RankTrainConfig& config,
                                      std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::size_t> order(inputs.size());
    std::iota(order.begin(), order.end(), 0);
    std::vector<double> epoch_losses;
    std::vector<std::vector<double>> batch_in;
    std::vector<double> batch_lab;
    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(rng() % i);
            std::swap(order[i - 1], order[j]);
        }
        double epoch_loss = 0.0;
        std::size_t n_batches = 0;
        for (std::size_t start = 0; start < order.size(); start += config.batch_size) {
            std::size_t end = std::min(order.size(), start + config.batch_size);
            batch_in.clear();
            batch_lab.clear();
            for (std::size_t i = start; i < end; ++i) {
                batch_in.push_back(inputs[order[i]]);
                batch_lab.push_back(labels[order[i]]);
            }
            double loss = 0.0;
            MlpGrads grads = head_grads(head, batch_in, batch_lab, &loss);
            if (!std::isfinite(loss))
                throw std::runtime_error("non-finite ranking loss at epoch " +
                                         std::to_string(epoch));
            sgd_step(head, grads, config.learning_rate);
            epoch_loss += loss;
            ++n_batches;
        }
        epoch_losses.push_back(epoch_loss / static_cast<double>(n_batches));
    }
    return epoch_losses;
}

}  // namespace detail

struct RankTrainResult {
    RankingModel model;
    std::vector<double> on_topic_epoch_losses;
    std::vector<double> long_dwell_epoch_losses;
};

// Trains the stage heads with BCE: the on-topicness head against on_topic
// labels (L2 only) and the long-dwell head against the threshold-rule labels.
inline RankTrainResult train_ranking_heads(std::span<const RankSample> samples,
                                           RankStage stage, double alpha,
                                           const RankTrainConfig& config,
                                           std::uint64_t seed) {
    if (samples.empty()) throw std::invalid_argument("no ranking samples");
    std::size_t text_dim = samples[0].features.query_text.dim();

    RankTrainResult result;
    std::vector<double> on_labels, dwell_labels;
    on_labels.reserve(samples.size());
    dwell_labels.reserve(samples.size());
    for (const auto& s : samples) {
        on_labels.push_back(s.on_topic_label);
        dwell_labels.push_back(s.long_dwell_label);
    }

    if (stage == RankStage::L1) {
        result.model = RankingModel::init_l1(text_dim, seed);
        result.model.alpha = alpha;
        std::vector<std::vector<double>> inputs;
        inputs.reserve(samples.size());
        for (const auto& s : samples) inputs.push_back(s.features.reduced_vector());
        result.long_dwell_epoch_losses = detail::train_head(
            result.model.long_dwell_head, inputs, dwell_labels, config, seed ^ 0xd1ULL);
    } else {
        result.model = RankingModel::init_l2(text_dim, alpha, seed);
        std::vector<std::vector<double>> on_inputs, dw_inputs;
        on_inputs.reserve(samples.size());
        dw_inputs.reserve(samples.size());
        for (const auto& s : samples) {
            std::vector<double> in;
            in.reserve(2 * text_dim);
            in.insert(in.end(), s.features.query_text.values.begin(),
                      s.features.query_text.values.end());
            in.insert(in.end(), s.features.post_text.values.begin(),
                      s.features.post_text.values.end());
            on_inputs.push_back(std::move(in));
            dw_inputs.push_back(s.features.full_vector());
        }
        result.on_topic_epoch_losses = detail::train_head(
            *result.model.on_topic_head, on_inputs, on_labels, config, seed ^ 0xa7ULL);
        result.long_dwell_epoch_losses = detail::train_head(
            result.model.long_dwell_head, dw_inputs, dwell_labels, config, seed ^ 0xd1ULL);
    }
    return result;
}

// Joins interactions with the corpus into ranking samples. Long-dwell labels
// apply the strict per-type threshold rule.
inline std::vector<RankSample> build_rank_samples(
    const CorpusStore& corpus, std::span<const InteractionRecord> interactions,
    const TextEmbedder& embedder, const CorpusStats& stats, const InvertedIndex& index,
    const DwellThresholds& thresholds, std::int64_t reference_time,
    const std::function<const Searcher*(SearcherId)>& searcher_lookup = {}) {
    std::vector<RankSample> samples;
    samples.reserve(interactions.size());
    for (const auto& rec : interactions) {
        auto post = corpus.get_post(rec.post_id);
        if (!post) continue;
        const Searcher* searcher =
            searcher_lookup ? searcher_lookup(rec.query.searcher_id) : nullptr;
        RankSample s;
        s.features = extract_features(rec.query, *post, searcher,
                                      corpus.author(post->author_id), stats, index,
                                      embedder.embed(rec.query.text),
                                      embedder.embed(post->text), reference_time);
        s.on_topic_label = static_cast<double>(rec.on_topic);
        s.long_dwell_label =
            is_long_dwell(rec.dwell_seconds, post->post_type, thresholds) ? 1.0 : 0.0;
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace dowser
