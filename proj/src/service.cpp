#include "hilnas/service.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>

#include <httplib.h>

#include "hilnas/error.hpp"
#include "hilnas/persistence.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace hilnas {

// ---------------------------------------------------------------------------
// SessionHost

SessionHost::SessionHost(Session session) : session_(std::move(session)) {
    worker_ = std::thread([this] { worker_loop(); });
}

SessionHost::~SessionHost() {
    {
        std::lock_guard q(queue_mu_);
        shutdown_ = true;
        stop_ = true;
    }
    queue_cv_.notify_all();
    notify();
    if (worker_.joinable()) worker_.join();
}

void SessionHost::notify() {
    // Taking the lock orders the wakeup after any waiter's predicate check.
    { std::lock_guard lock(mu_); }
    events_cv_.notify_all();
}

void SessionHost::run_task(Task& task) {
    json result;
    try {
        std::lock_guard lock(mu_);
        result = task.fn(session_);
    } catch (...) {
        task.done.set_exception(std::current_exception());
        notify();
        return;
    }
    task.done.set_value(std::move(result));
    notify();
}

void SessionHost::worker_loop() {
    for (;;) {
        std::unique_lock q(queue_mu_);
        queue_cv_.wait(q, [&] { return shutdown_ || !tasks_.empty() || job_; });
        if (shutdown_) {
            for (auto& t : tasks_)
                t->done.set_exception(std::make_exception_ptr(Error(ErrorKind::Conflict, "session is closing", "session")));
            tasks_.clear();
            return;
        }
        if (job_) {
            auto job = std::move(*job_);
            job_.reset();
            q.unlock();
            job();
            {
                std::lock_guard j(job_mu_);
                busy_ = false;
            }
            job_cv_.notify_all();
            notify();
            continue;
        }
        auto task = tasks_.front();
        tasks_.pop_front();
        q.unlock();
        run_task(*task);
    }
}

void SessionHost::drain() {
    for (;;) {
        std::shared_ptr<Task> task;
        {
            std::lock_guard q(queue_mu_);
            if (tasks_.empty()) return;
            task = tasks_.front();
            tasks_.pop_front();
        }
        run_task(*task);
    }
}

json SessionHost::call(std::function<json(Session&)> fn) {
    auto task = std::make_shared<Task>();
    task->fn = std::move(fn);
    auto result = task->done.get_future();
    {
        std::lock_guard q(queue_mu_);
        if (shutdown_) throw Error(ErrorKind::Conflict, "session is closing", "session");
        tasks_.push_back(task);
    }
    queue_cv_.notify_all();
    return result.get();
}

// Only called from a task on the worker, so checking busy_ and setting the
// job cannot interleave with another job start.
void SessionHost::enqueue_job(std::function<void()> job) {
    std::lock_guard q(queue_mu_);
    if (busy_) throw Error(ErrorKind::Conflict, "a search or training run is already in progress", "phase");
    busy_ = true;
    stop_ = false;
    job_ = std::move(job);
    queue_cv_.notify_all();
}

json SessionHost::start_search(std::uint64_t iterations) {
    return call([this, iterations](Session& s) {
        if (busy_) throw Error(ErrorKind::Conflict, "a search or training run is already in progress", "phase");
        s.begin_search();
        enqueue_job([this, iterations] {
            // Population initialisation is not a generation and is not counted.
            for (std::uint64_t done = 0; iterations == 0 || done < iterations;) {
                drain();
                std::lock_guard lock(mu_);
                if (stop_ || shutdown_) {
                    if (session_.phase() == Phase::Searching) session_.pause();
                    break;
                }
                if (!session_.can_step()) break;
                try {
                    if (session_.step().kind == "iteration") ++done;
                } catch (const std::exception& e) {
                    session_.emit_error("search.step", e);
                    if (session_.phase() == Phase::Searching) session_.pause();
                    break;
                }
                events_cv_.notify_all();
            }
        });
        return json{{"schema_version", kSchemaVersion}, {"accepted", true}, {"phase", phase_name(s.phase())},
                    {"iterations", iterations == 0 ? json() : json(iterations)}};
    });
}

json SessionHost::start_training(int epochs) {
    return call([this, epochs](Session& s) {
        if (busy_) throw Error(ErrorKind::Conflict, "a search or training run is already in progress", "phase");
        if (s.phase() != Phase::Configuring && s.phase() != Phase::Paused)
            throw Error(ErrorKind::Conflict, std::string("template training is not allowed in phase ") + phase_name(s.phase()),
                        "phase");
        if (epochs < 1) fail_validation("epochs must be at least 1", "epochs");
        enqueue_job([this, epochs] {
            std::unique_lock lock(mu_);
            try {
                session_.train(epochs, [&] {
                    lock.unlock();
                    events_cv_.notify_all();
                    drain();
                    lock.lock();
                    return stop_ || shutdown_;
                });
            } catch (const std::exception& e) {
                session_.emit_error("training.start", e);
            }
        });
        return json{{"schema_version", kSchemaVersion}, {"accepted", true}, {"epochs", epochs}};
    });
}

json SessionHost::stop() {
    stop_ = true;
    std::unique_lock j(job_mu_);
    job_cv_.wait(j, [&] { return !busy_; });
    j.unlock();
    return read([](const Session& s) {
        return json{{"schema_version", kSchemaVersion}, {"phase", phase_name(s.phase())},
                    {"read_model_digest", s.read_model_digest()}};
    });
}

std::vector<Event> SessionHost::events_since(std::uint64_t from, int wait_ms) const {
    std::unique_lock lock(mu_);
    if (wait_ms > 0)
        events_cv_.wait_for(lock, std::chrono::milliseconds(wait_ms),
                            [&] { return session_.next_seq() > from || shutdown_; });
    std::vector<Event> out;
    for (const Event& e : session_.events())
        if (e.seq >= from) out.push_back(e);
    return out;
}

// ---------------------------------------------------------------------------
// HTTP mapping

int http_status(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::Validation: return 400;
        case ErrorKind::NotFound: return 404;
        case ErrorKind::Conflict: return 409;
        case ErrorKind::StaleState: return 412;
        case ErrorKind::Corrupt: return 422;
        case ErrorKind::Evaluation: return 500;
    }
    return 500;
}

namespace {

HttpResponse reply(json body, int status = 200) {
    if (body.is_object() && !body.contains("schema_version")) body["schema_version"] = kSchemaVersion;
    return {status, "application/json", body.dump()};
}

HttpResponse error_reply(ErrorKind kind, const std::string& message, const std::string& field) {
    return reply({{"schema_version", kSchemaVersion},
                  {"error",
                   {{"kind", error_kind_name(kind)},
                    {"message", message},
                    {"field", field.empty() ? json() : json(field)}}}},
                 http_status(kind));
}

json parse_body(const std::string& body) {
    if (body.empty()) return json::object();
    try {
        json doc = json::parse(body);
        if (!doc.is_object()) fail_validation("request body must be a JSON object", "body");
        return doc;
    } catch (const json::parse_error& e) {
        fail_validation(std::string("request body is not valid JSON: ") + e.what(), "body");
    }
}

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos < path.size()) {
        std::size_t end = path.find('/', pos);
        if (end == std::string::npos) end = path.size();
        if (end > pos) out.push_back(path.substr(pos, end - pos));
        pos = end + 1;
    }
    return out;
}

std::uint64_t parse_uint(const std::string& text, const std::string& field) {
    std::uint64_t v = 0;
    const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || ptr != text.data() + text.size() || text.empty())
        fail_validation(field + " must be a non-negative integer", field);
    return v;
}

std::optional<std::uint64_t> query_uint(const HttpRequest& r, const std::string& key) {
    const auto it = r.query.find(key);
    if (it == r.query.end()) return std::nullopt;
    return parse_uint(it->second, key);
}

template <class T>
T field(const json& body, const char* key) {
    if (!body.contains(key)) fail_validation(std::string("missing field '") + key + "'", key);
    try {
        return body[key].get<T>();
    } catch (const json::exception&) {
        fail_validation(std::string("field '") + key + "' has the wrong type", key);
    }
}

template <class T>
std::optional<T> optional_field(const json& body, const char* key) {
    if (!body.contains(key) || body[key].is_null()) return std::nullopt;
    return field<T>(body, key);
}

void check_template_version(const Session& s, const json& body) {
    const auto expected = optional_field<std::uint64_t>(body, "template_version");
    if (expected && *expected != s.state().template_version)
        throw Error(ErrorKind::StaleState,
                    "template_version " + std::to_string(*expected) + " is not current (current is " +
                        std::to_string(s.state().template_version) + ")",
                    "template_version");
}

std::optional<RegionShape> optional_shape(const json& body) {
    if (!body.contains("shape") || body["shape"].is_null()) return std::nullopt;
    return shape_from_json(body["shape"]);
}

json summary(const Session& s) {
    return {{"schema_version", kSchemaVersion},
            {"session_id", s.id()},
            {"phase", phase_name(s.phase())},
            {"template_version", s.state().template_version},
            {"read_model_digest", s.read_model_digest()}};
}

bool valid_id(const std::string& id) {
    return !id.empty() && id.size() <= 64 && std::all_of(id.begin(), id.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_';
    });
}

} // namespace

struct Service::Server {
    httplib::Server http;
};

Service::Service(fs::path data_dir) : data_dir_(std::move(data_dir)) {}

Service::~Service() {
    stop();
    std::lock_guard lock(mu_);
    sessions_.clear();
}

std::shared_ptr<SessionHost> Service::host(const std::string& id) {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorKind::NotFound, "no session '" + id + "'", "session_id");
    return it->second;
}

HttpResponse Service::handle(const HttpRequest& request) {
    try {
        return route(request);
    } catch (const Error& e) {
        return error_reply(e.kind(), e.what(), e.field());
    } catch (const json::exception& e) {
        return error_reply(ErrorKind::Validation, std::string("malformed request: ") + e.what(), "body");
    } catch (const std::exception& e) {
        return reply({{"error", {{"kind", "internal"}, {"message", e.what()}, {"field", nullptr}}}}, 500);
    }
}

HttpResponse Service::route(const HttpRequest& r) {
    const std::string prefix = kPrefix;
    if (r.path.rfind(prefix, 0) != 0) throw Error(ErrorKind::NotFound, "unknown route " + r.path, "path");
    const auto seg = split_path(r.path.substr(prefix.size()));
    const std::string& m = r.method;
    auto is = [&](std::initializer_list<const char*> parts) {
        if (seg.size() != parts.size()) return false;
        std::size_t i = 0;
        for (const char* p : parts) {
            if (*p != '*' && seg[i] != p) return false;
            ++i;
        }
        return true;
    };
    auto resolve = [&](const std::string& p) {
        const fs::path path(p);
        return path.is_absolute() ? path : data_dir_ / path;
    };

    if (is({"sessions"}) && m == "GET") {
        json ids = json::array();
        std::lock_guard lock(mu_);
        for (const auto& [id, h] : sessions_) ids.push_back(id);
        return reply({{"sessions", ids}});
    }
    if (is({"sessions"}) && m == "POST") {
        const json body = parse_body(r.body);
        const SessionConfig config = session_config_from_json(body.value("config", json::object()));
        std::string id;
        {
            std::lock_guard lock(mu_);
            id = body.contains("session_id") ? field<std::string>(body, "session_id")
                                              : "s" + std::to_string(next_session_++);
            if (!valid_id(id)) fail_validation("session_id may only hold letters, digits, '-' and '_'", "session_id");
            if (sessions_.count(id)) throw Error(ErrorKind::Conflict, "session '" + id + "' already exists", "session_id");
        }
        auto h = std::make_shared<SessionHost>(Session(id, config));
        {
            std::lock_guard lock(mu_);
            if (sessions_.count(id)) throw Error(ErrorKind::Conflict, "session '" + id + "' already exists", "session_id");
            sessions_[id] = h;
        }
        return reply(h->read([](const Session& s) { return summary(s); }), 201);
    }
    if (is({"sessions", "load"}) && m == "POST") {
        const json body = parse_body(r.body);
        const fs::path dir = resolve(field<std::string>(body, "path"));
        std::string id = optional_field<std::string>(body, "session_id").value_or(dir.filename().string());
        if (!valid_id(id)) fail_validation("session_id may only hold letters, digits, '-' and '_'", "session_id");
        {
            std::lock_guard lock(mu_);
            if (sessions_.count(id)) throw Error(ErrorKind::Conflict, "session '" + id + "' already exists", "session_id");
        }
        auto h = std::make_shared<SessionHost>(load_session(dir, id));
        {
            std::lock_guard lock(mu_);
            if (sessions_.count(id)) throw Error(ErrorKind::Conflict, "session '" + id + "' already exists", "session_id");
            sessions_[id] = h;
        }
        return reply(h->read([](const Session& s) { return summary(s); }), 201);
    }

    if (seg.size() < 2 || seg[0] != "sessions") throw Error(ErrorKind::NotFound, "unknown route " + r.path, "path");
    const std::string& id = seg[1];

    if (is({"sessions", "*"}) && m == "DELETE") {
        std::shared_ptr<SessionHost> h;
        {
            std::lock_guard lock(mu_);
            const auto it = sessions_.find(id);
            if (it == sessions_.end()) throw Error(ErrorKind::NotFound, "no session '" + id + "'", "session_id");
            h = std::move(it->second);
            sessions_.erase(it);
        }
        return reply({{"deleted", id}});
    }

    const auto h = host(id);
    if (is({"sessions", "*"}) && m == "GET")
        return reply(h->read([&](const Session& s) {
            json out = summary(s);
            out["busy"] = h->busy();
            out["config"] = session_config_to_json(s.config());
            out["read_model"] = s.read_model();
            return out;
        }));

    // Template
    if (is({"sessions", "*", "template"}) && m == "GET")
        return reply(h->read([](const Session& s) {
            return json{{"template_version", s.state().template_version}, {"template", template_to_json(s.network())}};
        }));
    if (is({"sessions", "*", "template"}) && m == "PUT") {
        const json body = parse_body(r.body);
        const json doc = field<json>(body, "template");
        return reply(h->call([&](Session& s) {
            // Runs between iterations; the edit pauses the session, which
            // ends a running search job.
            check_template_version(s, body);
            const TemplateNetwork next = template_from_json(doc);
            s.replace_template(next);
            return json{{"template_version", s.state().template_version}, {"phase", phase_name(s.phase())},
                        {"read_model_digest", s.read_model_digest()}};
        }));
    }
    if (is({"sessions", "*", "template", "edits"}) && m == "POST") {
        const json body = parse_body(r.body);
        const json doc = field<json>(body, "edit");
        return reply(h->call([&](Session& s) {
            check_template_version(s, body);
            const TemplateEdit edit = edit_from_json(doc);
            s.edit_template(edit);
            return json{{"template_version", s.state().template_version}, {"phase", phase_name(s.phase())},
                        {"template", template_to_json(s.network())}, {"read_model_digest", s.read_model_digest()}};
        }));
    }

    // Training and search
    if (is({"sessions", "*", "training", "start"}) && m == "POST") {
        const json body = parse_body(r.body);
        return reply(h->start_training(optional_field<int>(body, "epochs").value_or(10)), 202);
    }
    if (is({"sessions", "*", "training", "stop"}) && m == "POST") return reply(h->stop());
    if (is({"sessions", "*", "search", "start"}) && m == "POST") {
        const json body = parse_body(r.body);
        return reply(h->start_search(optional_field<std::uint64_t>(body, "iterations").value_or(0)), 202);
    }
    if (is({"sessions", "*", "search", "pause"}) && m == "POST") {
        h->stop();
        return reply(h->call([](Session& s) {
            if (s.phase() == Phase::Searching) s.pause();
            return summary(s);
        }));
    }
    if (is({"sessions", "*", "search", "step"}) && m == "POST")
        return reply(h->call([&](Session& s) {
            if (h->busy()) throw Error(ErrorKind::Conflict, "a search or training run is already in progress", "phase");
            json out = report_to_json(s.step());
            out["read_model_digest"] = s.read_model_digest();
            return out;
        }));
    if (is({"sessions", "*", "search", "state"}) && m == "GET")
        return reply(h->read([](const Session& s) {
            json out = s.read_model();
            out["read_model_digest"] = s.read_model_digest();
            out["next_seq"] = s.next_seq();
            return out;
        }));
    if (is({"sessions", "*", "fitness"}) && m == "GET")
        return reply(h->read([](const Session& s) {
            return json{{"template_version", s.state().template_version}, {"fitness", fitness_to_json(s.state().fitness)}};
        }));
    if (is({"sessions", "*", "candidates", "*"}) && m == "GET") {
        const CandidateId cid = parse_uint(seg[3], "id");
        return reply(h->read([&](const Session& s) { return s.candidate(cid); }));
    }

    // Projection and steering
    if (is({"sessions", "*", "embedding"}) && m == "POST") {
        const json body = parse_body(r.body);
        const auto count = optional_field<std::size_t>(body, "count");
        const auto seed = optional_field<std::uint64_t>(body, "seed");
        return reply(h->call([&](Session& s) {
            s.compute_embedding(count, seed);
            return embedding_to_json(recolor(*s.embedding(), s.state()));
        }));
    }
    if (is({"sessions", "*", "embedding"}) && m == "GET")
        return reply(h->read([](const Session& s) {
            if (!s.embedding()) throw Error(ErrorKind::NotFound, "no embedding has been computed", "embedding");
            return embedding_to_json(recolor(*s.embedding(), s.state()));
        }));
    if (is({"sessions", "*", "region"}) && m == "PUT") {
        const json body = parse_body(r.body);
        const RegionShape shape = shape_from_json(field<json>(body, "shape"));
        const auto digest = optional_field<std::string>(body, "embedding_digest");
        return reply(h->call([&](Session& s) {
            s.set_region(shape, digest);
            return json{{"region", region_to_json(*s.state().region)}, {"read_model_digest", s.read_model_digest()}};
        }));
    }
    if (is({"sessions", "*", "region"}) && m == "DELETE")
        return reply(h->call([](Session& s) {
            s.clear_region();
            return json{{"region", nullptr}, {"read_model_digest", s.read_model_digest()}};
        }));
    if (is({"sessions", "*", "set-operation"}) && m == "POST") {
        const json body = parse_body(r.body);
        const SetOp op = set_op_from_name(field<std::string>(body, "op"));
        const auto shape = optional_shape(body);
        const auto digest = optional_field<std::string>(body, "embedding_digest");
        return reply(h->call([&](Session& s) { return set_op_result_to_json(s.set_operation(op, shape, digest)); }));
    }
    if ((is({"sessions", "*", "prune"}) || is({"sessions", "*", "fix"})) && m == "POST") {
        const json body = parse_body(r.body);
        const auto paths = field<std::vector<PathIndex>>(body, "path_ids");
        const bool prune = seg[2] == "prune";
        return reply(h->call([&](Session& s) {
            if (prune) s.prune(paths);
            else s.fix(paths);
            return json{{"pruned", s.state().constraints.pruned},
                        {"fixed", s.state().constraints.fixed},
                        {"read_model_digest", s.read_model_digest()}};
        }));
    }

    // Finishing and persistence
    if (is({"sessions", "*", "finalize"}) && m == "POST") {
        const json body = parse_body(r.body);
        const int budget = optional_field<int>(body, "budget_epochs").value_or(10);
        if (budget < 1) fail_validation("budget_epochs must be at least 1", "budget_epochs");
        return reply(h->call([&](Session& s) {
            if (h->busy()) throw Error(ErrorKind::Conflict, "pause the running job before finalizing", "phase");
            return s.finalize(budget);
        }));
    }
    if (is({"sessions", "*", "export"}) && m == "GET") {
        const auto budget = query_uint(r, "budget_epochs");
        if (!budget) return reply(h->read([](const Session& s) { return s.export_best(); }));
        if (*budget < 1) fail_validation("budget_epochs must be at least 1", "budget_epochs");
        return reply(h->call([&](Session& s) { return s.export_best(static_cast<int>(*budget)); }));
    }
    if (is({"sessions", "*", "save"}) && m == "POST") {
        const json body = parse_body(r.body);
        const fs::path dir = resolve(optional_field<std::string>(body, "path").value_or(id));
        return reply(h->call([&](Session& s) {
            if (h->busy()) throw Error(ErrorKind::Conflict, "pause the running job before saving", "phase");
            fs::create_directories(dir.parent_path());
            save_session(s, dir);
            return json{{"path", dir.string()}, {"read_model_digest", s.read_model_digest()}};
        }));
    }
    if (is({"sessions", "*", "runlog"}) && m == "GET")
        return {200, "application/x-ndjson", h->read([](const Session& s) { return format_runlog(s.runlog()); })};
    if (is({"sessions", "*", "events"}) && m == "GET") {
        const std::uint64_t from = query_uint(r, "from").value_or(0);
        const std::uint64_t wait = std::min<std::uint64_t>(query_uint(r, "wait_ms").value_or(0), 60000);
        std::string out;
        for (const Event& e : h->events_since(from, static_cast<int>(wait))) {
            json line = event_to_json(e);
            if (!line.contains("schema_version")) line["schema_version"] = kSchemaVersion;
            out += line.dump();
            out += '\n';
        }
        return {200, "application/x-ndjson", out};
    }

    throw Error(ErrorKind::NotFound, "unknown route " + m + " " + r.path, "path");
}

// ---------------------------------------------------------------------------
// Transport

namespace {

void install(httplib::Server& http, Service& service) {
    auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
        HttpRequest r;
        r.method = req.method;
        r.path = req.path;
        for (const auto& [k, v] : req.params) r.query.emplace(k, v);
        r.body = req.body;
        const HttpResponse out = service.handle(r);
        res.status = out.status;
        res.set_content(out.body, out.content_type);
    };
    const std::string pattern = std::string(Service::kPrefix) + "/.*";
    http.Get(pattern, handler);
    http.Post(pattern, handler);
    http.Put(pattern, handler);
    http.Delete(pattern, handler);
}

} // namespace

bool Service::listen(const std::string& host, int port) {
    server_ = std::make_unique<Server>();
    install(server_->http, *this);
    return server_->http.listen(host, port);
}

int Service::listen_in_background(const std::string& host) {
    server_ = std::make_unique<Server>();
    install(server_->http, *this);
    const int port = server_->http.bind_to_any_port(host);
    if (port <= 0) throw Error(ErrorKind::Validation, "could not bind to " + host, "host");
    server_thread_ = std::thread([this] { server_->http.listen_after_bind(); });
    server_->http.wait_until_ready();
    return port;
}

void Service::stop() {
    if (server_) server_->http.stop();
    if (server_thread_.joinable()) server_thread_.join();
}

} // namespace hilnas
