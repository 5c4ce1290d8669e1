#pragma once

// HTTP front end for SessionManager. JSON bodies carry a mandatory
// "schema_version"; errors come back as {"error": {"kind", "message"}}.
//
//   POST   /sessions                    create            -> 201 descriptor
//   GET    /sessions/{id}               describe          -> descriptor
//   DELETE /sessions/{id}               discard           -> 204
//   PATCH  /sessions/{id}/topology      {"edit": {...}}   -> {session, measurements}
//   POST   /sessions/{id}/control       {"action", "count"} -> descriptor
//   GET    /sessions/{id}/metrics       NDJSON frames (?follow=1&max_frames=N)
//   POST   /sessions/{id}/dataset       CSV body          -> summary
//   GET    /sessions/{id}/export        experiment record
//   POST   /import                      experiment record -> 201 descriptor

#include <chrono>
#include <memory>
#include <string>

#include <httplib.h>

#include "capmeter/error.hpp"
#include "capmeter/json_io.hpp"
#include "capmeter/session.hpp"

namespace capmeter {

inline int http_status_for(const Error& e) {
    const std::string& k = e.kind();
    if (k == "not_found") return 404;
    if (k == "conflict") return 409;
    if (k == "capacity_exceeded") return 503;
    return 422;
}

namespace detail {

inline void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

inline void send_error(httplib::Response& res, int status, const std::string& kind, const std::string& message) {
    send_json(res, status, {{"error", {{"kind", kind}, {"message", message}}}});
}

template <typename Fn>
httplib::Server::Handler guarded(Fn fn) {
    return [fn](const httplib::Request& req, httplib::Response& res) {
        try {
            fn(req, res);
        } catch (const Error& e) {
            send_error(res, http_status_for(e), e.kind(), e.what());
        } catch (const json::exception& e) {
            send_error(res, 400, "bad_request", std::string("malformed JSON: ") + e.what());
        } catch (const std::exception& e) {
            send_error(res, 500, "internal", e.what());
        }
    };
}

inline json parse_body(const httplib::Request& req) {
    json body = json::parse(req.body);
    jsonio::check_schema_version(body);
    return body;
}

}  // namespace detail

/// Streaming options of GET /sessions/{id}/metrics.
struct StreamOptions {
    /// Keep the stream open while the session is idle or paused.
    bool follow = false;
    /// Stop after this many frames (0: unlimited).
    std::size_t max_frames = 0;
};

class Service {
public:
    explicit Service(ServiceConfig config = {}) : sessions_(config) {}

    SessionManager& sessions() { return sessions_; }

    void mount(httplib::Server& server) {
        using detail::guarded;
        using detail::send_json;

        server.Post("/sessions", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 201, sessions_.create(detail::parse_body(req))->describe());
        }));
        server.Get("/sessions/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, sessions_.get(req.path_params.at("id"))->describe());
        }));
        server.Delete("/sessions/:id", guarded([this](const httplib::Request& req, httplib::Response& res) {
            sessions_.remove(req.path_params.at("id"));
            res.status = 204;
        }));
        server.Patch("/sessions/:id/topology", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto s = sessions_.get(req.path_params.at("id"));
            const json body = detail::parse_body(req);
            const TopologyEdit change = jsonio::edit_from_json(jsonio::require(body, "edit", "body"), "edit");
            send_json(res, 200, s->patch_topology(change));
        }));
        server.Post("/sessions/:id/control", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto s = sessions_.get(req.path_params.at("id"));
            const json body = detail::parse_body(req);
            const ControlAction action = control_action_from_name(
                jsonio::get_as<std::string>(jsonio::require(body, "action", "body"), "body.action"));
            const auto count = jsonio::get_or<std::uint64_t>(body, "count", 1, "body");
            send_json(res, 200, s->control(action, count));
        }));
        server.Get("/sessions/:id/metrics", guarded([this](const httplib::Request& req, httplib::Response& res) {
            auto s = sessions_.get(req.path_params.at("id"));
            StreamOptions opt;
            opt.follow = req.has_param("follow") && req.get_param_value("follow") != "0";
            if (req.has_param("max_frames")) opt.max_frames = std::stoul(req.get_param_value("max_frames"));
            stream_metrics(s, opt, res);
        }));
        server.Post("/sessions/:id/dataset", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, sessions_.get(req.path_params.at("id"))->upload_dataset(req.body));
        }));
        server.Get("/sessions/:id/export", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 200, sessions_.get(req.path_params.at("id"))->export_record());
        }));
        server.Post("/import", guarded([this](const httplib::Request& req, httplib::Response& res) {
            send_json(res, 201, sessions_.import_record(json::parse(req.body))->describe());
        }));
        server.Get("/health", [](const httplib::Request&, httplib::Response& res) {
            res.set_content("{\"status\":\"ok\"}", "application/json");
        });
    }

private:
    /// Newline-delimited frames: the current snapshot first, then every frame
    /// broadcast afterwards, steps strictly increasing. Without `follow` the
    /// stream ends once the session is not running and nothing is pending.
    /// A reset or an upload (new frame generation) ends the stream.
    static void stream_metrics(std::shared_ptr<Session> session, StreamOptions opt, httplib::Response& res) {
        struct StreamState {
            std::shared_ptr<Session> session;
            StreamOptions opt;
            FrameLog::Cursor cursor;
            bool started = false;
            bool counted = false;
            std::uint64_t last_step = 0;
            std::size_t sent = 0;
        };
        auto st = std::make_shared<StreamState>(StreamState{std::move(session), opt, {}, false, false, 0, 0});

        res.set_chunked_content_provider(
            "application/x-ndjson",
            [st](std::size_t, httplib::DataSink& sink) {
                auto write = [&](const MetricsFrame& f) {
                    const std::string line = jsonio::frame_to_json(f).dump() + "\n";
                    st->last_step = f.step;
                    ++st->sent;
                    return sink.write(line.data(), line.size());
                };
                auto finished = [&] { return st->opt.max_frames && st->sent >= st->opt.max_frames; };

                if (!st->started) {
                    st->started = true;
                    st->cursor = st->session->frames().tail();
                    if (!write(st->session->snapshot())) return false;
                    // Counted once the snapshot is out, so a client that sees the
                    // count knows every later frame will reach this stream.
                    st->session->add_subscriber();
                    st->counted = true;
                    if (finished()) {
                        sink.done();
                        return true;
                    }
                }
                if (!sink.is_writable() || st->session->closed()) {
                    sink.done();
                    return true;
                }
                const bool running = st->session->state() == SessionState::running;
                auto batch = st->session->frames().poll(st->cursor, std::chrono::milliseconds(100));
                if (!batch) {
                    sink.done();
                    return true;
                }
                for (const MetricsFrame& f : *batch) {
                    if (f.step <= st->last_step) continue;
                    if (!write(f)) return false;
                    if (finished()) {
                        sink.done();
                        return true;
                    }
                }
                if (!running && !st->opt.follow && batch->empty()) sink.done();
                return true;
            },
            [st](bool) {
                if (st->counted) st->session->remove_subscriber();
            });
    }

    SessionManager sessions_;
};

}  // namespace capmeter
