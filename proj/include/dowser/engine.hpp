#pragma once

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "dowser/ann.hpp"
#include "dowser/corpus.hpp"
#include "dowser/ebr.hpp"
#include "dowser/nearline.hpp"
#include "dowser/ranking.hpp"
#include "dowser/store.hpp"
#include "dowser/tbr.hpp"
#include "dowser/text.hpp"
#include "dowser/types.hpp"

namespace dowser {

// Engine-wide knobs, loadable from a plain `key = value` config file.
struct EngineConfig {
    std::size_t text_dim = 64;    // D
    std::size_t tower_dim = 32;   // E
    std::size_t k_tbr = 1000;
    std::size_t k_ebr = 1000;
    std::size_t keep_l1 = 200;
    std::size_t page_size = 10;
    std::size_t scan_limit = 400;
    double alpha = 0.5;
    DwellThresholds dwell;
    std::string embedder = "hashed-trigram";
    std::uint64_t embedder_seed = HashedTrigramEmbedder::kDefaultSeed;
    std::size_t latency_budget_ms = 100;
    double learning_rate = 0.05;
    std::size_t batch_size = 32;
    std::size_t epochs = 20;
    std::size_t tower_hidden = 64;
    double label_on_topic_weight = 0.5;
    std::size_t ann_max_neighbors = 16;
    std::size_t ann_ef_construction = 100;
    std::uint64_t seed = 42;
    std::int64_t reference_time = 0;  // 0: use the corpus max created_at
    std::string two_tower_path = "two_tower.bin";
    std::string l1_model_path = "rank_l1.bin";
    std::string l2_model_path = "rank_l2.bin";

    // scan_limit >= k_ebr is not required here; the engine clamps the result
    // count to the evaluation budget at search time.
    void validate() const {
        if (page_size < 1) throw std::invalid_argument("page_size must be >= 1");
        if (k_tbr < page_size || k_ebr < page_size)
            throw std::invalid_argument("k_tbr and k_ebr must be >= page_size");
        if (keep_l1 < 1) throw std::invalid_argument("keep_l1 must be >= 1");
        if (!(alpha >= 0.0 && alpha <= 1.0))
            throw std::invalid_argument("alpha must be in [0,1]");
        if (scan_limit < 1) throw std::invalid_argument("scan_limit must be >= 1");
        if (text_dim == 0 || tower_dim == 0)
            throw std::invalid_argument("dimensions must be > 0");
    }

    static EngineConfig parse(std::istream& in) {
        EngineConfig cfg;
        std::string line;
        std::size_t line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            auto hash = line.find('#');
            if (hash != std::string::npos) line.resize(hash);
            std::string trimmed = trim_copy(line);
            if (trimmed.empty()) continue;
            auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument("config line " + std::to_string(line_no) +
                                            ": expected key = value");
            std::string key = trim_copy(trimmed.substr(0, eq));
            std::string value = trim_copy(trimmed.substr(eq + 1));
            cfg.set(key, value, line_no);
        }
        cfg.validate();
        return cfg;
    }

    static EngineConfig load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open config: " + path.string());
        return parse(in);
    }

    std::string to_file_text() const {
        std::ostringstream out;
        out << "text_dim = " << text_dim << "\n";
        out << "tower_dim = " << tower_dim << "\n";
        out << "k_tbr = " << k_tbr << "\n";
        out << "k_ebr = " << k_ebr << "\n";
        out << "keep_l1 = " << keep_l1 << "\n";
        out << "page_size = " << page_size << "\n";
        out << "scan_limit = " << scan_limit << "\n";
        out << "alpha = " << alpha << "\n";
        out << "dwell_threshold_text = " << dwell.text << "\n";
        out << "dwell_threshold_article = " << dwell.article << "\n";
        out << "dwell_threshold_video = " << dwell.video << "\n";
        out << "embedder = " << embedder << "\n";
        out << "embedder_seed = " << embedder_seed << "\n";
        out << "latency_budget_ms = " << latency_budget_ms << "\n";
        out << "learning_rate = " << learning_rate << "\n";
        out << "batch_size = " << batch_size << "\n";
        out << "epochs = " << epochs << "\n";
        out << "tower_hidden = " << tower_hidden << "\n";
        out << "label_on_topic_weight = " << label_on_topic_weight << "\n";
        out << "ann_max_neighbors = " << ann_max_neighbors << "\n";
        out << "ann_ef_construction = " << ann_ef_construction << "\n";
        out << "seed = " << seed << "\n";
        out << "reference_time = " << reference_time << "\n";
        out << "two_tower_path = " << two_tower_path << "\n";
        out << "l1_model_path = " << l1_model_path << "\n";
        out << "l2_model_path = " << l2_model_path << "\n";
        return out.str();
    }

private:
    void set(const std::string& key, const std::string& value, std::size_t line_no) {
        try {
            if (key == "text_dim") text_dim = std::stoul(value);
            else if (key == "tower_dim") tower_dim = std::stoul(value);
            else if (key == "k_tbr") k_tbr = std::stoul(value);
            else if (key == "k_ebr") k_ebr = std::stoul(value);
            else if (key == "keep_l1") keep_l1 = std::stoul(value);
            else if (key == "page_size") page_size = std::stoul(value);
            else if (key == "scan_limit") scan_limit = std::stoul(value);
            else if (key == "alpha") alpha = std::stod(value);
            else if (key == "dwell_threshold_text") dwell.text = std::stod(value);
            else if (key == "dwell_threshold_article") dwell.article = std::stod(value);
            else if (key == "dwell_threshold_video") dwell.video = std::stod(value);
            else if (key == "embedder") embedder = value;
            else if (key == "embedder_seed") embedder_seed = std::stoull(value);
            else if (key == "latency_budget_ms") latency_budget_ms = std::stoul(value);
            else if (key == "learning_rate") learning_rate = std::stod(value);
            else if (key == "batch_size") batch_size = std::stoul(value);
            else if (key == "epochs") epochs = std::stoul(value);
            else if (key == "tower_hidden") tower_hidden = std::stoul(value);
            else if (key == "label_on_topic_weight") label_on_topic_weight = std::stod(value);
            else if (key == "ann_max_neighbors") ann_max_neighbors = std::stoul(value);
            else if (key == "ann_ef_construction") ann_ef_construction = std::stoul(value);
            else if (key == "seed") seed = std::stoull(value);
            else if (key == "reference_time") reference_time = std::stoll(value);
            else if (key == "two_tower_path") two_tower_path = value;
            else if (key == "l1_model_path") l1_model_path = value;
            else if (key == "l2_model_path") l2_model_path = value;
            else
                throw std::invalid_argument("unknown config key: " + key);
        } catch (const std::invalid_argument&) {
            throw;
        } catch (const std::exception&) {
            throw std::invalid_argument("config line " + std::to_string(line_no) +
                                        ": bad value for " + key);
        }
    }
};

struct SearchResponse {
    std::vector<ScoredCandidate> results;  // length <= page_size
    std::uint64_t retrieval_us = 0;
    std::uint64_t l1_us = 0;
    std::uint64_t l2_us = 0;
    std::uint64_t total_us = 0;
};

// Deterministic part of a response (no timings); used for determinism checks
// and as the machine-readable CLI/service payload.
inline nlohmann::json results_to_json(const SearchResponse& r) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& c : r.results) {
        arr.push_back({{"post_id", c.post_id},
                       {"score", c.fused},
                       {"on_topicness", c.on_topicness},
                       {"long_dwell", c.long_dwell},
                       {"source", to_string(c.source)}});
    }
    return arr;
}

inline nlohmann::json response_to_json(const SearchResponse& r) {
    return {{"results", results_to_json(r)},
            {"timings_us",
             {{"retrieval", r.retrieval_us},
              {"l1", r.l1_us},
              {"l2", r.l2_us},
              {"total", r.total_us}}}};
}

enum class RetrievalMode { hybrid, tbr_only, ebr_only };

struct EngineStats {
    std::size_t posts = 0;
    std::size_t tbr_terms = 0;
    std::size_t ann_nodes = 0;
    std::size_t store_entries = 0;
    std::uint64_t store_version = 0;
    std::size_t dead_letters = 0;
    std::size_t nearline_queue_depth = 0;
};

struct TrainedModels {
    TwoTowerModel two_tower;
    RankingModel l1;
    RankingModel l2;
    double two_tower_final_loss = 0.0;
};

// Builds featurized datasets from the corpus + interaction log and trains the
// two-tower model and both ranking stages. Deterministic for a fixed config.
inline TrainedModels train_models(const CorpusStore& corpus,
                                  std::span<const InteractionRecord> interactions,
                                  const TextEmbedder& embedder,
                                  const EngineConfig& config,
                                  const std::function<const Searcher*(SearcherId)>&
                                      searcher_lookup = {}) {
    std::int64_t ref_time =
        config.reference_time ? config.reference_time : corpus.max_created_at();

    auto examples = build_training_examples(corpus, interactions, embedder,
                                            config.dwell, ref_time, searcher_lookup,
                                            config.label_on_topic_weight);
    TwoTowerTrainConfig tt_cfg;
    tt_cfg.learning_rate = config.learning_rate;
    tt_cfg.batch_size = config.batch_size;
    tt_cfg.epochs = config.epochs;
    tt_cfg.hidden = config.tower_hidden;
    tt_cfg.output_dim = config.tower_dim;
    auto tt = train_two_tower(examples, tt_cfg, config.seed);

    InvertedIndex index;
    for (PostId id : corpus.all_ids_sorted()) index.index_post(*corpus.get_post(id));
    CorpusStats stats = index.stats();
    auto samples = build_rank_samples(corpus, interactions, embedder, stats, index,
                                      config.dwell, ref_time, searcher_lookup);
    RankTrainConfig r_cfg;
    r_cfg.learning_rate = config.learning_rate;
    r_cfg.batch_size = config.batch_size;
    r_cfg.epochs = config.epochs;
    auto l1 = train_ranking_heads(samples, RankStage::L1, config.alpha, r_cfg,
                                  config.seed ^ 0x11ULL);
    auto l2 = train_ranking_heads(samples, RankStage::L2, config.alpha, r_cfg,
                                  config.seed ^ 0x22ULL);

    return TrainedModels{std::move(tt.model), std::move(l1.model), std::move(l2.model),
                         tt.final_loss};
}

// End-to-end orchestration: retrieval fan-out to TBR and EBR, candidate
// union, L1 -> L2 cascade. Searches run concurrently under a shared lock;
// nearline ingestion serializes through a single consumer holding the write
// lock per post, so a search sees each post either fully indexed or not at
// all.
class SearchEngine {
public:
    explicit SearchEngine(EngineConfig config,
                          std::unique_ptr<CorpusStore> corpus = nullptr)
        : config_(std::move(config)),
          corpus_(corpus ? std::move(corpus) : std::make_unique<CorpusStore>()),
          embedder_(EmbedderRegistry::instance().create(config_.embedder,
                                                        config_.text_dim,
                                                        config_.embedder_seed)),
          store_(config_.tower_dim, config_.text_dim),
          ann_(config_.tower_dim,
               AnnIndex::Params{config_.ann_max_neighbors, config_.ann_ef_construction,
                                config_.seed}) {
        config_.validate();
    }

    ~SearchEngine() { stop_nearline(); }

    const EngineConfig& config() const { return config_; }
    CorpusStore& corpus() { return *corpus_; }
    const CorpusStore& corpus() const { return *corpus_; }
    const TextEmbedder& embedder() const { return *embedder_; }
    EmbeddingStore& embedding_store() { return store_; }
    AnnIndex& ann() { return ann_; }
    InvertedIndex& inverted_index() { return tbr_; }
    const TwoTowerModel& two_tower() const { return models_->two_tower; }

    void set_models(TrainedModels models) {
        std::unique_lock lock(mu_);
        models_ = std::move(models);
    }

    void load_models(const std::filesystem::path& dir) {
        TrainedModels m;
        m.two_tower = TwoTowerModel::load(dir / config_.two_tower_path);
        m.l1 = RankingModel::load(dir / config_.l1_model_path);
        m.l2 = RankingModel::load(dir / config_.l2_model_path);
        set_models(std::move(m));
    }

    void register_searcher(Searcher searcher) {
        if (auto err = validate_searcher(searcher)) throw std::invalid_argument(*err);
        std::unique_lock lock(mu_);
        searchers_[searcher.searcher_id] = std::move(searcher);
    }

    // Indexes every corpus post into the inverted index, embedding store, and
    // ANN index. Requires models.
    void build_indexes() {
        std::unique_lock lock(mu_);
        require_models();
        reference_time_ = config_.reference_time ? config_.reference_time
                                                 : corpus_->max_created_at();
        for (PostId id : corpus_->all_ids_sorted()) {
            Post post = *corpus_->get_post(id);
            index_one(post);
        }
        stats_ = tbr_.stats();
        ready_ = true;
    }

    // Restores the precomputed snapshots instead of recomputing embeddings;
    // the ANN graph is rebuilt from the stored tower vectors in id order.
    void load_indexes(const std::filesystem::path& store_path,
                      const std::filesystem::path& tbr_path) {
        std::unique_lock lock(mu_);
        require_models();
        reference_time_ = config_.reference_time ? config_.reference_time
                                                 : corpus_->max_created_at();
        EmbeddingStore loaded = EmbeddingStore::load(store_path);
        if (loaded.tower_dim() != config_.tower_dim ||
            loaded.text_dim() != config_.text_dim)
            throw std::runtime_error("store snapshot dimensions do not match config");
        store_ = std::move(loaded);
        tbr_ = InvertedIndex::load(tbr_path);
        for (PostId id : store_.ids_sorted())
            ann_.insert(id, store_.get(id)->tower);
        stats_ = tbr_.stats();
        ready_ = true;
    }

    void save_indexes(const std::filesystem::path& store_path,
                      const std::filesystem::path& tbr_path) const {
        std::shared_lock lock(mu_);
        store_.save(store_path);
        tbr_.save(tbr_path);
    }

    void start_nearline() {
        if (nearline_) return;
        nearline_ = std::make_unique<NearlineWorker>([this](const Post& p) {
            return process_nearline(p);
        });
    }

    void stop_nearline() {
        if (nearline_) {
            nearline_->stop();
            nearline_.reset();
        }
    }

    // Adds the post to the durable corpus, then hands it to the nearline
    // consumer. The returned future resolves when the post is searchable.
    std::future<NearlineAck> ingest_post(Post post) {
        if (!nearline_) start_nearline();
        if (auto err = corpus_->add_post(post)) {
            std::promise<NearlineAck> p;
            p.set_value(NearlineAck{false, *err});
            return p.get_future();
        }
        return nearline_->enqueue(std::move(post));
    }

    SearchResponse search(const Query& query,
                          std::optional<double> alpha_override = {},
                          RetrievalMode mode = RetrievalMode::hybrid) const {
        const auto t_start = std::chrono::steady_clock::now();
        std::shared_lock lock(mu_);
        if (!ready_) throw std::runtime_error("engine not initialized");
        if (trim_copy(query.text).empty())
            throw std::invalid_argument("empty query");

        const Searcher* searcher = nullptr;
        auto it = searchers_.find(query.searcher_id);
        if (it != searchers_.end()) searcher = &it->second;

        // Retrieval fan-out.
        TokenList tokens = tokenize(query.text);
        std::vector<std::pair<PostId, double>> tbr_hits;
        if (mode != RetrievalMode::ebr_only)
            tbr_hits = tbr_.retrieve(tokens, config_.k_tbr);

        Embedding q_text = embedder_->embed(query.text);
        QuerySideFeatures qsf = make_query_features(query, searcher, q_text);
        std::vector<AnnIndex::Hit> ebr_hits;
        if (mode != RetrievalMode::tbr_only && ann_.size() > 0) {
            Embedding q_tower = query_embedding(models_->two_tower, qsf);
            std::size_t k = std::min(config_.k_ebr, config_.scan_limit);
            ebr_hits = ann_.search(q_tower.values, k, config_.scan_limit);
        }
        const auto t_retrieval = std::chrono::steady_clock::now();

        // Dedup union, tagged with the producing retriever.
        std::unordered_map<PostId, CandidateSource> sources;
        for (const auto& [id, score] : tbr_hits) sources[id] = CandidateSource::TBR;
        for (const auto& hit : ebr_hits) {
            auto [pos, inserted] = sources.emplace(hit.post_id, CandidateSource::EBR);
            if (!inserted) pos->second = CandidateSource::both;
        }
        std::vector<PostId> candidate_ids;
        candidate_ids.reserve(sources.size());
        for (const auto& [id, _] : sources) candidate_ids.push_back(id);
        std::sort(candidate_ids.begin(), candidate_ids.end());

        std::vector<CandidateFeatures> candidates;
        candidates.reserve(candidate_ids.size());
        for (PostId id : candidate_ids) {
            auto post = corpus_->get_post(id);
            auto entry = store_.get(id);
            if (!post || !entry) continue;  // retrieval raced a partial pipeline
            CandidateFeatures cf;
            cf.post_id = id;
            cf.source = sources[id];
            cf.features = extract_features(query, *post, searcher,
                                           corpus_->author(post->author_id), stats_,
                                           tbr_, q_text,
                                           Embedding{std::move(entry->text)},
                                           reference_time_);
            candidates.push_back(std::move(cf));
        }

        auto l1_out = rank_stage(models_->l1, candidates, config_.keep_l1);
        const auto t_l1 = std::chrono::steady_clock::now();

        std::unordered_map<PostId, const CandidateFeatures*> by_id;
        for (const auto& c : candidates) by_id[c.post_id] = &c;
        std::vector<CandidateFeatures> survivors;
        survivors.reserve(l1_out.size());
        for (const auto& sc : l1_out) survivors.push_back(*by_id[sc.post_id]);

        SearchResponse resp;
        resp.results = rank_stage(models_->l2, survivors, config_.page_size,
                                  alpha_override);
        const auto t_end = std::chrono::steady_clock::now();

        auto us = [](auto a, auto b) {
            return static_cast<std::uint64_t>(
                std::chrono::duration_cast<std::chrono::microseconds>(b - a).count());
        };
        resp.retrieval_us = us(t_start, t_retrieval);
        resp.l1_us = us(t_retrieval, t_l1);
        resp.l2_us = us(t_l1, t_end);
        resp.total_us = us(t_start, t_end);
        return resp;
    }

    // Raw retrieval surfaces, used by evaluation baselines.
    std::vector<std::pair<PostId, double>> tbr_candidates(const Query& query,
                                                          std::size_t k) const {
        std::shared_lock lock(mu_);
        return tbr_.retrieve(tokenize(query.text), k);
    }

    std::vector<AnnIndex::Hit> ebr_candidates(const Query& query, std::size_t k) const {
        std::shared_lock lock(mu_);
        if (!ready_) throw std::runtime_error("engine not initialized");
        const Searcher* searcher = nullptr;
        auto it = searchers_.find(query.searcher_id);
        if (it != searchers_.end()) searcher = &it->second;
        QuerySideFeatures qsf =
            make_query_features(query, searcher, embedder_->embed(query.text));
        Embedding q_tower = query_embedding(models_->two_tower, qsf);
        if (ann_.size() == 0) return {};
        return ann_.search(q_tower.values, k, std::max(config_.scan_limit, k));
    }

    EngineStats stats() const {
        std::shared_lock lock(mu_);
        EngineStats s;
        s.posts = corpus_->size();
        s.tbr_terms = tbr_.term_count();
        s.ann_nodes = ann_.size();
        s.store_entries = store_.size();
        s.store_version = store_.version();
        if (nearline_) {
            s.dead_letters = nearline_->dead_letters().size();
            s.nearline_queue_depth = nearline_->queue_depth();
        }
        return s;
    }

    std::int64_t reference_time() const { return reference_time_; }
    bool ready() const { return ready_; }

private:
    void require_models() const {
        if (!models_) throw std::runtime_error("engine has no models loaded");
    }

    // Index one post into store + ANN + inverted index. Caller holds the
    // engine write lock.
    void index_one(const Post& post) {
        Embedding text_emb = embedder_->embed(post.text);
        PostSideFeatures f = make_post_features(post, corpus_->author(post.author_id),
                                                text_emb, reference_time_);
        Embedding tower = post_embedding(models_->two_tower, f);
        store_.put(post.post_id, tower.values, text_emb.values);
        ann_.insert(post.post_id, tower.values);
        tbr_.index_post(post);
    }

    NearlineAck process_nearline(const Post& post) {
        std::unique_lock lock(mu_);
        if (!ready_) return NearlineAck{false, "engine not initialized"};
        try {
            index_one(post);
            stats_ = tbr_.stats();
            return NearlineAck{true, ""};
        } catch (const std::exception& e) {
            return NearlineAck{false, e.what()};
        }
    }

    EngineConfig config_;
    std::unique_ptr<CorpusStore> corpus_;
    std::unique_ptr<TextEmbedder> embedder_;
    InvertedIndex tbr_;
    EmbeddingStore store_;
    AnnIndex ann_;
    std::optional<TrainedModels> models_;
    std::unique_ptr<NearlineWorker> nearline_;
    std::unordered_map<SearcherId, Searcher> searchers_;
    CorpusStats stats_;
    std::int64_t reference_time_ = 0;
    bool ready_ = false;
    mutable std::shared_mutex mu_;
};

}  // namespace dowser
