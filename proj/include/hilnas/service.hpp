#pragma once

#include <atomic>
#include <condition_variable>
#include <deque>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "hilnas/error.hpp"
#include "hilnas/session.hpp"

namespace hilnas {

// Owns one session and the worker thread that mutates it. Commands are
// queued and run between search iterations or training epochs; reads take
// a snapshot under the lock.
class SessionHost {
public:
    explicit SessionHost(Session session);
    ~SessionHost();
    SessionHost(const SessionHost&) = delete;
    SessionHost& operator=(const SessionHost&) = delete;

    // Runs `fn` on the worker and returns its result (or rethrows its error).
    nlohmann::json call(std::function<nlohmann::json(Session&)> fn);

    template <class F>
    auto read(F&& f) const {
        std::lock_guard lock(mu_);
        return f(session_);
    }

    // Long jobs return once accepted; progress flows through events.
    nlohmann::json start_search(std::uint64_t iterations);
    nlohmann::json start_training(int epochs);
    // Stops the running job at its next boundary and waits for it.
    nlohmann::json stop();

    bool busy() const noexcept { return busy_; }

    // Events with seq >= from, waiting up to wait_ms for at least one.
    std::vector<Event> events_since(std::uint64_t from, int wait_ms) const;

private:
    struct Task {
        std::function<nlohmann::json(Session&)> fn;
        std::promise<nlohmann::json> done;
    };

    void worker_loop();
    void run_task(Task& task);
    void drain();  // runs queued tasks; called between iterations by long jobs
    void enqueue_job(std::function<void()> job);
    void notify();

    mutable std::mutex mu_;  // guards session_
    Session session_;
    mutable std::condition_variable events_cv_;

    std::mutex queue_mu_;
    std::condition_variable queue_cv_;
    std::deque<std::shared_ptr<Task>> tasks_;
    std::optional<std::function<void()>> job_;
    std::atomic<bool> shutdown_{false};

    std::atomic<bool> busy_{false};
    std::atomic<bool> stop_{false};
    std::mutex job_mu_;
    std::condition_variable job_cv_;

    std::thread worker_;
};

struct HttpRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::string body;
};

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

int http_status(ErrorKind kind) noexcept;

// Versioned JSON API over a set of sessions. `handle` is transport-free;
// `listen` serves it over HTTP.
class Service {
public:
    explicit Service(std::filesystem::path data_dir);
    ~Service();

    HttpResponse handle(const HttpRequest& request);

    // Blocks until stop() is called.
    bool listen(const std::string& host, int port);
    // Binds to a free port and serves on a background thread; returns the port.
    int listen_in_background(const std::string& host = "127.0.0.1");
    void stop();

    static constexpr const char* kPrefix = "/api/v1";

private:
    std::shared_ptr<SessionHost> host(const std::string& id);
    HttpResponse route(const HttpRequest& request);

    std::filesystem::path data_dir_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<SessionHost>> sessions_;
    std::uint64_t next_session_ = 1;

    struct Server;
    std::unique_ptr<Server> server_;
    std::thread server_thread_;
};

} // namespace hilnas
