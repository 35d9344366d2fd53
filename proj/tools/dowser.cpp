// dowser command line: gen | train | index | search | eval | serve
//
// Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.

#include <CLI11.hpp>

#include <atomic>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "dowser/engine.hpp"
#include "dowser/eval.hpp"
#include "dowser/server.hpp"
#include "dowser/synth.hpp"

namespace fs = std::filesystem;
using namespace dowser;

namespace {

struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

EngineConfig load_config(const std::string& config_path, const fs::path& data_dir) {
    if (!config_path.empty()) {
        if (!fs::exists(config_path))
            throw DataError("config file not found: " + config_path);
        return EngineConfig::load(config_path);
    }
    fs::path default_path = data_dir / "dowser.conf";
    if (fs::exists(default_path)) return EngineConfig::load(default_path);
    return EngineConfig{};
}

void require_file(const fs::path& path, const std::string& what) {
    if (!fs::exists(path))
        throw DataError(what + " not found: " + path.string());
}

std::unique_ptr<SearchEngine> open_engine(const EngineConfig& config,
                                          const fs::path& data_dir) {
    require_file(data_dir / "corpus.log", "corpus log (run `dowser index` first)");
    require_file(data_dir / config.two_tower_path, "two-tower checkpoint");
    require_file(data_dir / config.l1_model_path, "L1 checkpoint");
    require_file(data_dir / config.l2_model_path, "L2 checkpoint");
    require_file(data_dir / "store.bin", "embedding store snapshot");
    require_file(data_dir / "tbr.bin", "inverted index snapshot");

    auto corpus = std::make_unique<CorpusStore>(data_dir / "corpus.log");
    auto engine = std::make_unique<SearchEngine>(config, std::move(corpus));
    engine->load_models(data_dir);
    engine->load_indexes(data_dir / "store.bin", data_dir / "tbr.bin");
    return engine;
}

std::vector<InteractionRecord> load_interaction_file(const CorpusStore& corpus,
                                                     const fs::path& path) {
    require_file(path, "interaction file");
    std::ifstream in(path);
    auto report = corpus.load_interactions(in);
    for (const auto& err : report.errors)
        std::cerr << "interactions:" << err.line_number << ": " << err.message << "\n";
    if (report.records.empty())
        throw DataError("no valid interaction records in " + path.string());
    return std::move(report.records);
}

int cmd_gen(const fs::path& out_dir, const SynthParams& params) {
    fs::create_directories(out_dir);
    EngineConfig config;
    SynthOutput synth = generate_synonym_corpus(params, config.dwell);

    {
        std::ofstream out(out_dir / "corpus.jsonl");
        for (const auto& p : synth.posts) out << jsonl::serialize_post(p) << '\n';
    }
    {
        std::ofstream out(out_dir / "interactions.jsonl");
        for (const auto& r : synth.interactions)
            out << jsonl::serialize_interaction(r) << '\n';
    }
    {
        std::ofstream out(out_dir / "fixtures.jsonl");
        synth.fixtures.save(out);
    }
    {
        std::ofstream out(out_dir / "dowser.conf");
        out << config.to_file_text();
    }
    std::cout << "wrote " << synth.posts.size() << " posts, "
              << synth.interactions.size() << " interactions, "
              << synth.fixtures.queries.size() << " judged queries to "
              << out_dir.string() << "\n";
    return 0;
}

int cmd_train(const fs::path& corpus_path, const fs::path& interactions_path,
              const fs::path& data_dir, const EngineConfig& config) {
    require_file(corpus_path, "corpus file");
    fs::create_directories(data_dir);

    CorpusStore corpus;
    std::ifstream in(corpus_path);
    auto report = corpus.ingest_posts(in);
    for (const auto& err : report.errors)
        std::cerr << "corpus:" << err.line_number << ": " << err.message << "\n";
    if (corpus.size() == 0) throw DataError("corpus is empty");

    auto interactions = load_interaction_file(corpus, interactions_path);
    auto embedder = EmbedderRegistry::instance().create(
        config.embedder, config.text_dim, config.embedder_seed);

    std::cout << "training on " << interactions.size() << " interactions over "
              << corpus.size() << " posts...\n";
    TrainedModels models = train_models(corpus, interactions, *embedder, config);
    models.two_tower.save(data_dir / config.two_tower_path);
    models.l1.save(data_dir / config.l1_model_path);
    models.l2.save(data_dir / config.l2_model_path);
    std::cout << "two-tower final loss " << models.two_tower_final_loss << "\n";
    std::cout << "wrote checkpoints to " << data_dir.string() << "\n";
    return 0;
}

int cmd_index(const fs::path& corpus_path, const fs::path& data_dir,
              const EngineConfig& config) {
    require_file(corpus_path, "corpus file");
    fs::create_directories(data_dir);

    auto corpus = std::make_unique<CorpusStore>(data_dir / "corpus.log");
    std::ifstream in(corpus_path);
    auto report = corpus->ingest_posts(in);
    for (const auto& err : report.errors)
        std::cerr << "corpus:" << err.line_number << ": " << err.message << "\n";
    std::size_t stored = report.stored;
    if (corpus->size() == 0) throw DataError("corpus is empty");

    SearchEngine engine(config, std::move(corpus));
    TrainedModels models;
    if (fs::exists(data_dir / config.two_tower_path)) {
        engine.load_models(data_dir);
    } else {
        std::cerr << "no checkpoints in " << data_dir.string()
                  << "; indexing with freshly initialized models (run `dowser "
                     "train` for semantic retrieval)\n";
        models.two_tower = TwoTowerModel::init(config.text_dim, config.tower_dim,
                                               config.tower_hidden, config.seed);
        models.l1 = RankingModel::init_l1(config.text_dim, config.seed ^ 0x11ULL);
        models.l2 = RankingModel::init_l2(config.text_dim, config.alpha,
                                          config.seed ^ 0x22ULL);
        models.two_tower.save(data_dir / config.two_tower_path);
        models.l1.save(data_dir / config.l1_model_path);
        models.l2.save(data_dir / config.l2_model_path);
        engine.load_models(data_dir);
    }
    engine.build_indexes();
    engine.save_indexes(data_dir / "store.bin", data_dir / "tbr.bin");

    EngineStats s = engine.stats();
    std::cout << "ingested " << stored << " posts (" << report.errors.size()
              << " rejected lines)\n";
    std::cout << "indexed " << s.posts << " posts, " << s.tbr_terms
              << " distinct terms, " << s.ann_nodes << " ann nodes\n";
    return 0;
}

int cmd_search(const std::string& query_text, SearcherId searcher_id, bool as_json,
               const fs::path& data_dir, const EngineConfig& config) {
    auto engine = open_engine(config, data_dir);
    SearchResponse response = engine->search(make_query(query_text, searcher_id));
    if (as_json) {
        std::cout << response_to_json(response).dump(2) << "\n";
        return 0;
    }
    std::cout << "results for \"" << query_text << "\":\n";
    if (response.results.empty()) std::cout << "  (no results)\n";
    int rank = 1;
    for (const auto& r : response.results) {
        auto post = engine->corpus().get_post(r.post_id);
        std::string snippet = post ? post->text.substr(0, 60) : "";
        char line[256];
        std::snprintf(line, sizeof line,
                      "%3d. post %-8llu score %.4f (on-topic %.4f, long-dwell %.4f, %s)",
                      rank++, static_cast<unsigned long long>(r.post_id), r.fused,
                      r.on_topicness, r.long_dwell, to_string(r.source).c_str());
        std::cout << line << "\n      " << snippet << "\n";
    }
    std::cout << "retrieval " << response.retrieval_us << "us, l1 " << response.l1_us
              << "us, l2 " << response.l2_us << "us, total " << response.total_us
              << "us\n";
    return 0;
}

int cmd_eval(const fs::path& fixtures_path, bool sweep, const std::string& alphas_csv,
             const std::string& report_path, std::uint64_t seed,
             const fs::path& data_dir, const EngineConfig& config) {
    require_file(fixtures_path, "fixture file");
    auto engine = open_engine(config, data_dir);

    std::ifstream in(fixtures_path);
    EvalFixtures fixtures = EvalFixtures::load(in);
    if (fixtures.queries.empty()) throw DataError("fixture file has no judged queries");

    std::vector<double> alphas;
    if (sweep) {
        std::stringstream ss(alphas_csv);
        std::string item;
        while (std::getline(ss, item, ',')) alphas.push_back(std::stod(item));
    } else {
        alphas.push_back(config.alpha);
    }

    std::string machine_report;
    std::vector<SweepRow> rows;
    for (double alpha : alphas) {
        EvalReport report = evaluate(*engine, fixtures, alpha, seed);
        rows.push_back(SweepRow{alpha, report.on_topic_rate, report.long_dwells});
        machine_report += report_to_jsonl(report);
    }
    std::cout << render_sweep_table(rows);
    if (!report_path.empty()) {
        std::ofstream out(report_path);
        out << machine_report;
        std::cout << "wrote report to " << report_path << "\n";
    }
    return 0;
}

std::atomic<bool> g_shutdown{false};

int cmd_serve(const std::string& host, int port, const fs::path& data_dir,
              const EngineConfig& config) {
    auto engine = open_engine(config, data_dir);
    engine->start_nearline();
    SearchService service(*engine);
    service.start(host, port);
    std::cout << "serving on " << host << ":" << service.port() << "\n";

    std::signal(SIGINT, [](int) { g_shutdown.store(true); });
    std::signal(SIGTERM, [](int) { g_shutdown.store(true); });
    while (!g_shutdown.load())
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    std::cout << "shutting down\n";
    service.stop();
    engine->stop_nearline();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dowser: hybrid semantic search over a post corpus"};
    app.require_subcommand(1);

    std::string config_path;
    std::string data_dir = ".";
    app.add_option("--config", config_path, "engine config file (key = value lines)");
    app.add_option("--data", data_dir, "artifact directory");

    auto* gen = app.add_subcommand("gen", "generate a synthetic topic-cluster corpus");
    std::string gen_out = "data";
    SynthParams synth_params;
    gen->add_option("--out", gen_out, "output directory");
    gen->add_option("--topics", synth_params.topics, "number of topic clusters");
    gen->add_option("--posts-per-topic", synth_params.posts_per_topic, "posts per topic");
    gen->add_option("--queries", synth_params.judged_queries, "judged query count");
    gen->add_option("--seed", synth_params.seed, "generator seed");

    auto* train = app.add_subcommand("train", "train the two-tower and ranking models");
    std::string train_corpus, train_interactions;
    train->add_option("--corpus", train_corpus, "corpus jsonl file")->required();
    train->add_option("--interactions", train_interactions, "interaction jsonl file")
        ->required();

    auto* index = app.add_subcommand("index", "build retrieval indexes from a corpus");
    std::string index_corpus;
    index->add_option("--corpus", index_corpus, "corpus jsonl file")->required();

    auto* search = app.add_subcommand("search", "run one query");
    std::string search_q;
    SearcherId search_searcher = 0;
    bool search_json = false;
    search->add_option("--q", search_q, "query text")->required();
    search->add_option("--searcher", search_searcher, "searcher id");
    search->add_flag("--json", search_json, "machine-readable output");

    auto* eval_cmd = app.add_subcommand("eval", "run the metric harness");
    std::string eval_fixtures, eval_report;
    std::string eval_alphas = "0,0.25,0.5,0.75,1";
    bool eval_sweep = false;
    std::uint64_t eval_seed = 1234;
    eval_cmd->add_option("--fixtures", eval_fixtures, "fixture jsonl file")->required();
    eval_cmd->add_flag("--alpha-sweep", eval_sweep, "sweep over --alphas");
    eval_cmd->add_option("--alphas", eval_alphas, "comma-separated alphas");
    eval_cmd->add_option("--report", eval_report, "write machine-readable report here");
    eval_cmd->add_option("--seed", eval_seed, "dwell simulation seed");

    auto* serve = app.add_subcommand("serve", "run the HTTP service");
    std::string serve_host = "127.0.0.1";
    int serve_port = 8080;
    serve->add_option("--host", serve_host, "bind host");
    serve->add_option("--port", serve_port, "bind port");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed()) return cmd_gen(gen_out, synth_params);
        EngineConfig config = load_config(config_path, data_dir);
        if (train->parsed())
            return cmd_train(train_corpus, train_interactions, data_dir, config);
        if (index->parsed()) return cmd_index(index_corpus, data_dir, config);
        if (search->parsed())
            return cmd_search(search_q, search_searcher, search_json, data_dir, config);
        if (eval_cmd->parsed())
            return cmd_eval(eval_fixtures, eval_sweep, eval_alphas, eval_report,
                            eval_seed, data_dir, config);
        if (serve->parsed()) return cmd_serve(serve_host, serve_port, data_dir, config);
    } catch (const DataError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::runtime_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "internal error: " << e.what() << "\n";
        return 3;
    }
    return 0;
}
