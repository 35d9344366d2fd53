#pragma once

#include <condition_variable>
#include <deque>
#include <functional>
#include <future>
#include <mutex>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "dowser/types.hpp"

namespace dowser {

// Outcome of one nearline item: ok means the post is visible in the embedding
// store, ANN index, and inverted index.
struct NearlineAck {
    bool ok = false;
    std::string error;
};

// FIFO ingestion queue drained by a single consumer thread. The processing
// pipeline is injected as a callback; items whose processing fails are parked
// in a dead-letter list and the queue keeps going.
class NearlineWorker {
public:
    using Processor = std::function<NearlineAck(const Post&)>;

    explicit NearlineWorker(Processor process) : process_(std::move(process)) {
        consumer_ = std::thread([this] { run(); });
    }

    ~NearlineWorker() { stop(); }

    NearlineWorker(const NearlineWorker&) = delete;
    NearlineWorker& operator=(const NearlineWorker&) = delete;

    // Enqueues a post already durable in the corpus. The future resolves once
    // the post is visible (or parked).
    std::future<NearlineAck> enqueue(Post post) {
        Item item;
        item.post = std::move(post);
        std::future<NearlineAck> fut = item.ack.get_future();
        {
            std::lock_guard lock(mu_);
            if (stopping_) {
                item.ack.set_value(NearlineAck{false, "worker stopped"});
                return fut;
            }
            queue_.push_back(std::move(item));
        }
        cv_.notify_one();
        return fut;
    }

    std::vector<std::pair<Post, std::string>> dead_letters() const {
        std::lock_guard lock(mu_);
        return dead_letters_;
    }

    std::size_t queue_depth() const {
        std::lock_guard lock(mu_);
        return queue_.size();
    }

    // Drains remaining items, then joins the consumer.
    void stop() {
        {
            std::lock_guard lock(mu_);
            if (stopping_) return;
            stopping_ = true;
        }
        cv_.notify_all();
        if (consumer_.joinable()) consumer_.join();
    }

private:
    struct Item {
        Post post;
        std::promise<NearlineAck> ack;
    };

    void run() {
        for (;;) {
            Item item;
            {
                std::unique_lock lock(mu_);
                cv_.wait(lock, [this] { return stopping_ || !queue_.empty(); });
                if (queue_.empty()) return;  // stopping and drained
                item = std::move(queue_.front());
                queue_.pop_front();
            }
            NearlineAck ack;
            try {
                ack = process_(item.post);
            } catch (const std::exception& e) {
                ack = NearlineAck{false, e.what()};
            }
            if (!ack.ok) {
                std::lock_guard lock(mu_);
                dead_letters_.emplace_back(item.post, ack.error);
            }
            item.ack.set_value(std::move(ack));
        }
    }

    Processor process_;
    mutable std::mutex mu_;
    std::condition_variable cv_;
    std::deque<Item> queue_;
    std::vector<std::pair<Post, std::string>> dead_letters_;
    bool stopping_ = false;
    std::thread consumer_;
};

}  // namespace dowser
