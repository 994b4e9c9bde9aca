#include "openresp/service.hpp"

#include <httplib.h>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>

#include "openresp/errors.hpp"
#include "openresp/io.hpp"

namespace openresp {

namespace {

using nlohmann::json;

HttpResponse json_response(int status, const json& body) {
    return {status, "application/json", body.dump(-1, ' ', false, json::error_handler_t::replace)};
}

HttpResponse error_response(int status, std::string_view message) {
    return json_response(status, json{{"error", message}});
}

std::vector<std::string_view> split_path(std::string_view path) {
    std::vector<std::string_view> parts;
    std::size_t start = 0;
    while (start <= path.size()) {
        const auto slash = path.find('/', start);
        const auto end = slash == std::string_view::npos ? path.size() : slash;
        if (end > start) parts.push_back(path.substr(start, end - start));
        if (slash == std::string_view::npos) break;
        start = slash + 1;
    }
    return parts;
}

bool safe_segment(std::string_view s) {
    return !s.empty() && s != "." && s != ".." && std::all_of(s.begin(), s.end(), [](char c) {
        return std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
    });
}

std::string content_type_for(const std::filesystem::path& p) {
    const auto ext = p.extension().string();
    if (ext == ".html") return "text/html; charset=utf-8";
    if (ext == ".js" || ext == ".mjs") return "text/javascript";
    if (ext == ".css") return "text/css";
    if (ext == ".json") return "application/json";
    if (ext == ".svg") return "image/svg+xml";
    if (ext == ".png") return "image/png";
    if (ext == ".ico") return "image/x-icon";
    return "application/octet-stream";
}

json progress_json(Progress p) { return {{"done", p.done}, {"total", p.total}}; }

} // namespace

FeedbackService::FeedbackService(Options options) : options_(std::move(options)) {}

FeedbackService::~FeedbackService() { stop(); }

void FeedbackService::add_session(RatingSession session, std::filesystem::path persist_path) {
    auto entry = std::make_unique<Entry>();
    const std::string id = session.id();
    entry->session = std::make_unique<RatingSession>(session);
    entry->persist_path = std::move(persist_path);
    std::lock_guard lock(sessions_mutex_);
    if (sessions_.contains(id)) throw DataError("session " + id + " is already registered");
    sessions_.emplace(id, std::move(entry));
}

std::size_t FeedbackService::load_sessions(const std::filesystem::path& dir) {
    if (!std::filesystem::is_directory(dir)) throw ConfigError("session directory not found: " + dir.string());
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        if (e.is_regular_file() && e.path().extension() == ".json") files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        try {
            add_session(RatingSession::from_json(io::read_file(f)), f);
        } catch (const DataError& e) {
            throw DataError(f.string() + ": " + e.what());
        }
    }
    return files.size();
}

const RatingSession* FeedbackService::session(std::string_view id) const {
    std::lock_guard lock(sessions_mutex_);
    auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second->session.get();
}

bool FeedbackService::authorized(const HttpRequest& request, const std::string& expected) const {
    if (expected.empty()) return true;
    if (auto it = request.headers.find("x-session-token"); it != request.headers.end() && it->second == expected) {
        return true;
    }
    auto it = request.query.find("token");
    return it != request.query.end() && it->second == expected;
}

HttpResponse FeedbackService::handle(const HttpRequest& request) {
    try {
        const auto parts = split_path(request.path);
        if (parts.size() == 1 && parts[0] == "health") {
            if (request.method != "GET") return error_response(405, "method not allowed");
            std::size_t n = 0;
            {
                std::lock_guard lock(sessions_mutex_);
                n = sessions_.size();
            }
            return json_response(200, json{{"status", "ok"}, {"version", options_.version}, {"sessions", n}});
        }
        if (!parts.empty() && parts[0] == "session") {
            if (parts.size() != 3) return error_response(404, "not found");
            Entry* entry = nullptr;
            {
                std::lock_guard lock(sessions_mutex_);
                auto it = sessions_.find(parts[1]);
                if (it != sessions_.end()) entry = it->second.get();
            }
            if (!entry) return error_response(404, "unknown session " + std::string(parts[1]));
            return session_route(request, *entry, parts[2]);
        }
        if (!parts.empty() && parts[0] == "reports") {
            if (parts.size() != 2) return error_response(404, "not found");
            if (request.method != "GET") return error_response(405, "method not allowed");
            if (!authorized(request, options_.admin_token)) return error_response(401, "admin token required");
            return report_route(parts[1]);
        }
        if (request.method == "GET" && !options_.ui_dir.empty()) return static_route(request.path);
        return error_response(404, "not found");
    } catch (const std::exception& e) {
        spdlog::error("request {} {} failed: {}", request.method, request.path, e.what());
        return error_response(500, "internal error");
    }
}

HttpResponse FeedbackService::session_route(const HttpRequest& request, Entry& entry, std::string_view action) {
    auto& session = *entry.session;
    const bool is_get = request.method == "GET";
    const bool is_post = request.method == "POST";

    if (action == "export") {
        if (!is_post) return error_response(405, "method not allowed");
        if (!authorized(request, options_.admin_token)) return error_response(401, "admin token required");
        return {200, "application/json", session.to_json()};
    }

    if (action != "next" && action != "judgment" && action != "progress") return error_response(404, "not found");
    if (!authorized(request, options_.rater_token)) return error_response(401, "session token required");

    try {
        if (action == "next") {
            if (!is_get) return error_response(405, "method not allowed");
            auto rater = request.query.find("rater");
            if (rater == request.query.end() || rater->second.empty()) return error_response(400, "rater parameter required");
            auto item = session.next_item(rater->second);
            if (!item) return {204, "application/json", {}};
            return {200, "application/json", rater_view_json(*item, session.progress(rater->second))};
        }

        if (action == "judgment") {
            if (!is_post) return error_response(405, "method not allowed");
            const auto judgment = parse_judgment(request.body);
            const auto outcome = session.record(judgment);
            if (outcome == RecordOutcome::stored && !entry.persist_path.empty()) {
                std::lock_guard lock(entry.write_mutex);
                io::write_file_atomic(entry.persist_path, session.to_json());
            }
            const bool stored = outcome == RecordOutcome::stored;
            return json_response(stored ? 201 : 200,
                                 json{{"status", stored ? "stored" : "duplicate"},
                                      {"progress", progress_json(session.progress(judgment.rater_id))}});
        }

        if (!is_get) return error_response(405, "method not allowed");
        if (auto rater = request.query.find("rater"); rater != request.query.end()) {
            return json_response(200, json{{"rater", rater->second}, {"progress", progress_json(session.progress(rater->second))},
                                           {"complete", session.complete()}});
        }
        json raters = json::object();
        for (const auto& r : session.snapshot().rater_ids) raters[r] = progress_json(session.progress(r));
        return json_response(200, json{{"raters", std::move(raters)}, {"complete", session.complete()}});
    } catch (const ValidationError& e) {
        return error_response(422, e.what());
    } catch (const ConflictError& e) {
        return error_response(409, e.what());
    }
}

HttpResponse FeedbackService::report_route(std::string_view run_id) const {
    if (!safe_segment(run_id) || options_.runs_dir.empty()) return error_response(404, "unknown run");
    const auto dir = options_.runs_dir / std::string(run_id);
    const auto manifest_path = dir / "manifest.json";
    if (!std::filesystem::is_regular_file(manifest_path)) return error_response(404, "unknown run " + std::string(run_id));

    json out;
    out["run_id"] = run_id;
    out["manifest"] = json::parse(io::read_file(manifest_path));
    json reports = json::object();
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(dir)) {
        const auto name = e.path().filename().string();
        if (e.is_regular_file() && name.starts_with("report-") && name.ends_with(".json")) files.push_back(e.path());
    }
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
        auto report = json::parse(io::read_file(f));
        const auto model = report.value("model_id", f.stem().string());
        reports[model] = std::move(report);
    }
    out["reports"] = std::move(reports);
    return json_response(200, out);
}

HttpResponse FeedbackService::static_route(const std::string& path) const {
    std::filesystem::path rel;
    for (auto part : split_path(path)) {
        if (!safe_segment(part)) return error_response(404, "not found");
        rel /= std::string(part);
    }
    if (rel.empty()) rel = "index.html";
    auto file = options_.ui_dir / rel;
    if (std::filesystem::is_directory(file)) file /= "index.html";
    if (!std::filesystem::is_regular_file(file)) return error_response(404, "not found");
    return {200, content_type_for(file), io::read_file(file)};
}

int FeedbackService::bind(const std::string& host, int port) {
    std::lock_guard lock(server_mutex_);
    if (server_) throw ConfigError("service is already bound");
    auto server = std::make_unique<httplib::Server>();
    auto adapter = [this](const httplib::Request& req, httplib::Response& res) {
        HttpRequest request;
        request.method = req.method;
        request.path = req.path;
        for (const auto& [k, v] : req.params) request.query.emplace(k, v);
        for (const auto& [k, v] : req.headers) {
            std::string name = k;
            std::transform(name.begin(), name.end(), name.begin(), [](unsigned char c) { return std::tolower(c); });
            request.headers.emplace(std::move(name), v);
        }
        request.body = req.body;
        const auto response = handle(request);
        res.status = response.status;
        if (response.status != 204) res.set_content(response.body, response.content_type);
    };
    server->Get(".*", adapter);
    server->Post(".*", adapter);
    server->Put(".*", adapter);
    server->Delete(".*", adapter);

    int bound = port;
    if (port == 0) {
        bound = server->bind_to_any_port(host);
        if (bound < 0) throw ConfigError("cannot bind " + host + " on any port");
    } else if (!server->bind_to_port(host, port)) {
        throw ConfigError("cannot bind " + host + ":" + std::to_string(port));
    }
    server_ = std::move(server);
    spdlog::info("listening on {}:{}", host, bound);
    return bound;
}

void FeedbackService::run() {
    httplib::Server* server = nullptr;
    {
        std::lock_guard lock(server_mutex_);
        if (!server_) throw ConfigError("service is not bound");
        server = server_.get();
    }
    server->listen_after_bind();
}

void FeedbackService::listen(const std::string& host, int port) {
    bind(host, port);
    run();
}

void FeedbackService::stop() {
    std::lock_guard lock(server_mutex_);
    if (server_) server_->stop();
}

} // namespace openresp
