#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>

#include "openresp/feedback_eval.hpp"

namespace httplib {
class Server;
}

namespace openresp {

struct HttpRequest {
    std::string method;
    std::string path;
    std::map<std::string, std::string> query;
    std::map<std::string, std::string> headers; // lower-case names
    std::string body;
};

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
};

/// HTTP surface of the rating workflow. Routing lives in handle() so the
/// whole API is testable without sockets; listen() binds it to cpp-httplib.
///
///   GET  /health
///   GET  /session/{id}/next?rater=R        rater token
///   POST /session/{id}/judgment            rater token
///   GET  /session/{id}/progress[?rater=R]  rater token
///   POST /session/{id}/export              admin token
///   GET  /reports/{run_id}                 admin token
///   GET  /*                                static files from ui_dir
///
/// Tokens travel in the X-Session-Token header or the `token` query
/// parameter; an empty configured token disables the check.
class FeedbackService {
public:
    struct Options {
        std::string version = "0.3.0";
        std::string rater_token;
        std::string admin_token;
        std::filesystem::path runs_dir;
        std::filesystem::path ui_dir;
    };

    explicit FeedbackService(Options options);
    ~FeedbackService();

    /// Registers a session. When `persist_path` is non-empty every stored
    /// judgment rewrites that file.
    void add_session(RatingSession session, std::filesystem::path persist_path = {});

    /// Loads every *.json session file in `dir`.
    std::size_t load_sessions(const std::filesystem::path& dir);

    HttpResponse handle(const HttpRequest& request);

    /// Binds host:port (0 picks a free port) and returns the bound port.
    /// Throws ConfigError when the port cannot be bound.
    int bind(const std::string& host, int port);

    /// Serves on the bound socket until stop().
    void run();

    /// bind() then run().
    void listen(const std::string& host, int port);
    void stop();

    const RatingSession* session(std::string_view id) const;

private:
    struct Entry {
        std::unique_ptr<RatingSession> session;
        std::filesystem::path persist_path;
        std::mutex write_mutex;
    };

    HttpResponse session_route(const HttpRequest& request, Entry& entry, std::string_view action);
    HttpResponse report_route(std::string_view run_id) const;
    HttpResponse static_route(const std::string& path) const;
    bool authorized(const HttpRequest& request, const std::string& expected) const;

    Options options_;
    mutable std::mutex sessions_mutex_;
    std::map<std::string, std::unique_ptr<Entry>, std::less<>> sessions_;
    std::mutex server_mutex_;
    std::unique_ptr<httplib::Server> server_;
};

} // namespace openresp
