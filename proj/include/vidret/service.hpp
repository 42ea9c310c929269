#pragma once

// HTTP front end over Engine:
//   POST /api/search            stage query
//   POST /api/temporal-search   {stages, window, top_k}
//   GET  /api/keyframes/{video}/{idx}/neighbors?n=10
//   GET  /api/keyframes/{video}/{idx}
//   GET  /api/videos, /api/config
//   GET  /media/{video}/{idx}.jpg
// Optional static UI directory mounted at /.

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <json.hpp>
#include <memory>
#include <optional>
#include <string>

#include "vidret/binary_io.hpp"
#include "vidret/engine.hpp"

namespace vidret::service {

using json = nlohmann::json;

struct ServiceOptions {
    std::string host = "127.0.0.1";
    std::optional<std::string> ui_dir;
    std::size_t worker_threads = 8;
};

class Service {
public:
    Service(std::shared_ptr<const engine::Engine> engine, ServiceOptions opts = {})
        : engine_(std::move(engine)), opts_(std::move(opts)) {
        if (!engine_) fail(ErrorCode::InvalidArgument, "service needs an engine");
        routes();
    }

    /// Binds the port (0 picks a free one) and returns it; -1 on failure.
    int bind(int port) {
        port_ = port == 0 ? server_.bind_to_any_port(opts_.host) : (server_.bind_to_port(opts_.host, port) ? port : -1);
        return port_;
    }

    /// Serves until stop(); requires bind().
    bool run() { return server_.listen_after_bind(); }

    void stop() { server_.stop(); }
    void wait_until_ready() const { server_.wait_until_ready(); }
    int port() const { return port_; }

private:
    static void send_json(httplib::Response& res, int status, const json& body) {
        res.status = status;
        res.set_content(engine::serialize(body), "application/json");
    }

    template <class Fn>
    static void guarded(httplib::Response& res, Fn&& fn) {
        try {
            send_json(res, 200, fn());
        } catch (const Error& e) {
            send_json(res, engine::http_status(e.code()), engine::error_json(e.code(), e.what()));
        } catch (const json::exception& e) {
            send_json(res, 400, engine::error_json(ErrorCode::InvalidQuery, std::string("invalid JSON: ") + e.what()));
        } catch (const std::exception& e) {
            spdlog::error("request failed: {}", e.what());
            send_json(res, 500, json{{"error", {{"code", "internal"}, {"message", e.what()}}}});
        }
    }

    static json parse_body(const httplib::Request& req) {
        try {
            return json::parse(req.body);
        } catch (const json::exception&) {
            fail(ErrorCode::InvalidQuery, "request body is not valid JSON");
        }
    }

    static long long parse_index(const std::string& s) {
        if (s.empty() || s.size() > 10 || s.find_first_not_of("0123456789") != std::string::npos) {
            fail(ErrorCode::NotFound, "keyframe index '" + s + "' is not a number");
        }
        return std::stoll(s);
    }

    void routes() {
        server_.new_task_queue = [n = opts_.worker_threads] { return new httplib::ThreadPool(n); };
        server_.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                     {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"},
                                     {"Access-Control-Allow-Headers", "Content-Type"}});
        server_.Options(R"(.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

        const auto& eng = *engine_;
        server_.Post("/api/search", [&eng](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return eng.search(parse_body(req)); });
        });
        server_.Post("/api/temporal-search", [&eng](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return eng.temporal_search(parse_body(req)); });
        });
        server_.Get(R"(/api/keyframes/([^/]+)/([^/]+)/neighbors)", [&eng](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                long long n = engine::kDefaultNeighbors;
                if (req.has_param("n")) {
                    const auto s = req.get_param_value("n");
                    if (s.empty() || s.size() > 6 || s.find_first_not_of("0123456789") != std::string::npos) {
                        fail(ErrorCode::InvalidQuery, "'n' must be a positive integer");
                    }
                    n = std::stoll(s);
                }
                return eng.neighbors(req.matches[1], parse_index(req.matches[2]), n);
            });
        });
        server_.Get(R"(/api/keyframes/([^/]+)/([^/]+))", [&eng](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return eng.keyframe(req.matches[1], parse_index(req.matches[2])); });
        });
        server_.Get("/api/videos", [&eng](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] { return eng.videos(); });
        });
        server_.Get("/api/config", [&eng](const httplib::Request&, httplib::Response& res) {
            guarded(res, [&] { return eng.config(); });
        });
        server_.Get(R"(/media/([^/]+)/([0-9]+)\.jpg)", [&eng](const httplib::Request& req, httplib::Response& res) {
            const auto path = eng.media_file(req.matches[1], std::stoll(req.matches[2].str().substr(0, 10)));
            if (!path) {
                send_json(res, 404, engine::error_json(ErrorCode::NotFound, "no image for this keyframe"));
                return;
            }
            try {
                res.set_content(io::read_file(path->string()), "image/jpeg");
            } catch (const Error& e) {
                send_json(res, 500, engine::error_json(e.code(), e.what()));
            }
        });
        if (opts_.ui_dir) {
            if (!server_.set_mount_point("/", *opts_.ui_dir)) {
                fail(ErrorCode::IoError, "UI directory '" + *opts_.ui_dir + "' does not exist");
            }
        }
        server_.set_error_handler([](const httplib::Request& req, httplib::Response& res) {
            if (res.status == 404 && res.body.empty()) {
                send_json(res, 404, engine::error_json(ErrorCode::NotFound, "no route for " + req.path));
            }
        });
    }

    std::shared_ptr<const engine::Engine> engine_;
    ServiceOptions opts_;
    httplib::Server server_;
    int port_ = -1;
};

} // namespace vidret::service
