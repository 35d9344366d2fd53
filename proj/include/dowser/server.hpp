#pragma once

#include <httplib.h>
#include <nlohmann/json.hpp>

#include <atomic>
#include <chrono>
#include <memory>
#include <stdexcept>
#include <string>
#include <thread>

#include "dowser/engine.hpp"
#include "dowser/jsonl.hpp"

namespace dowser {

// HTTP front end over a running engine:
//   POST /v1/posts    ingest one post; replies after nearline visibility
//   GET  /v1/search   q, searcher, page_size query parameters
//   GET  /v1/health   status + index cardinalities
//   GET  /v1/stats    fuller counters
class SearchService {
public:
    explicit SearchService(SearchEngine& engine) : engine_(engine) {
        setup_routes();
    }

    ~SearchService() { stop(); }

    // Binds and serves on a background thread. Port 0 picks an ephemeral
    // port. Throws when the port is unavailable.
    void start(const std::string& host, int port) {
        engine_.start_nearline();
        if (port == 0) {
            port_ = server_.bind_to_any_port(host);
            if (port_ < 0) throw std::runtime_error("cannot bind to any port");
        } else {
            if (!server_.bind_to_port(host, port))
                throw std::runtime_error("cannot bind to port " + std::to_string(port));
            port_ = port;
        }
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    void stop() {
        if (thread_.joinable()) {
            server_.stop();
            thread_.join();
        }
    }

    int port() const { return port_; }

private:
    void setup_routes() {
        server_.Post("/v1/posts", [this](const httplib::Request& req,
                                         httplib::Response& res) {
            Post post;
            if (auto err = jsonl::parse_post(req.body, post)) {
                reply(res, 400, {{"error", err->message}});
                return;
            }
            auto fut = engine_.ingest_post(std::move(post));
            if (fut.wait_for(std::chrono::seconds(30)) != std::future_status::ready) {
                reply(res, 503, {{"error", "nearline timeout"}});
                return;
            }
            NearlineAck ack = fut.get();
            if (!ack.ok) {
                int code = ack.error.find("duplicate") != std::string::npos ? 409 : 422;
                reply(res, code, {{"error", ack.error}});
                return;
            }
            reply(res, 200, {{"post_id", post.post_id}, {"visible", true}});
        });

        server_.Get("/v1/search", [this](const httplib::Request& req,
                                         httplib::Response& res) {
            std::string q = req.get_param_value("q");
            if (trim_copy(q).empty()) {
                reply(res, 400, {{"error", "missing or empty q parameter"}});
                return;
            }
            SearcherId searcher = 0;
            if (req.has_param("searcher"))
                searcher = std::stoull(req.get_param_value("searcher"));
            try {
                SearchResponse r = engine_.search(make_query(q, searcher));
                nlohmann::json body = response_to_json(r);
                if (req.has_param("page_size")) {
                    std::size_t ps = std::stoul(req.get_param_value("page_size"));
                    auto& arr = body["results"];
                    if (arr.size() > ps) {
                        nlohmann::json cut = nlohmann::json::array();
                        for (std::size_t i = 0; i < ps; ++i) cut.push_back(arr[i]);
                        body["results"] = std::move(cut);
                    }
                }
                reply(res, 200, body);
            } catch (const std::exception& e) {
                reply(res, 500, {{"error", e.what()}});
            }
        });

        server_.Get("/v1/health", [this](const httplib::Request&, httplib::Response& res) {
            EngineStats s = engine_.stats();
            reply(res, 200,
                  {{"status", "ok"},
                   {"posts", s.posts},
                   {"tbr_terms", s.tbr_terms},
                   {"ann_nodes", s.ann_nodes},
                   {"store_entries", s.store_entries}});
        });

        server_.Get("/v1/stats", [this](const httplib::Request&, httplib::Response& res) {
            EngineStats s = engine_.stats();
            reply(res, 200,
                  {{"posts", s.posts},
                   {"tbr_terms", s.tbr_terms},
                   {"ann_nodes", s.ann_nodes},
                   {"store_entries", s.store_entries},
                   {"store_version", s.store_version},
                   {"dead_letters", s.dead_letters},
                   {"nearline_queue_depth", s.nearline_queue_depth}});
        });
    }

    static void reply(httplib::Response& res, int code, nlohmann::json body) {
        res.status = code;
        res.set_content(body.dump(), "application/json");
    }

    SearchEngine& engine_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = -1;
};

}  // namespace dowser
