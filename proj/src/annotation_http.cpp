#include "privmine/annotation_http.hpp"

#include <httplib.h>
#include <spdlog/spdlog.h>

#include <mutex>

namespace privmine {

AnnotationSession& SessionRegistry::add(std::unique_ptr<AnnotationSession> session) {
    std::unique_lock lock(m_mutex);
    const std::string id = session->id();
    auto [it, inserted] = m_sessions.emplace(id, std::move(session));
    if (!inserted) throw AnnotationError("invalid_request", "session " + id + " already exists");
    return *it->second;
}

AnnotationSession& SessionRegistry::get(const std::string& session_id) const {
    std::shared_lock lock(m_mutex);
    auto it = m_sessions.find(session_id);
    if (it == m_sessions.end())
        throw AnnotationError("unknown_session", "unknown session " + session_id);
    return *it->second;
}

std::vector<std::string> SessionRegistry::ids() const {
    std::shared_lock lock(m_mutex);
    std::vector<std::string> out;
    for (const auto& [id, _] : m_sessions) out.push_back(id);
    return out;
}

int http_status_for(const std::string& code) {
    if (code == "invalid_request") return 400;
    if (code == "unassigned") return 403;
    if (code == "unknown_review" || code == "unknown_session") return 404;
    if (code == "session_closed" || code == "unresolved" || code == "no_overlap") return 409;
    return 500;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, const std::string& code, const std::string& message) {
    send_json(res, http_status_for(code), json{{"code", code}, {"message", message}});
}

using Handler = std::function<void(AnnotationSession&, const httplib::Request&, httplib::Response&)>;

httplib::Server::Handler session_route(SessionRegistry& registry, Handler handler) {
    return [&registry, handler](const httplib::Request& req, httplib::Response& res) {
        try {
            handler(registry.get(req.path_params.at("id")), req, res);
        } catch (const AnnotationError& e) {
            send_error(res, e.code(), e.what());
        } catch (const json::exception& e) {
            send_error(res, "invalid_request", std::string("malformed request body: ") + e.what());
        } catch (const std::exception& e) {
            spdlog::error("annotation request {} {} failed: {}", req.method, req.path, e.what());
            send_error(res, "internal", e.what());
        }
    };
}

std::string required_string(const json& body, const char* key) {
    if (!body.contains(key) || !body.at(key).is_string() || body.at(key).get<std::string>().empty())
        throw AnnotationError("invalid_request", std::string("missing field ") + key);
    return body.at(key).get<std::string>();
}

} // namespace

void install_annotation_routes(httplib::Server& server, SessionRegistry& registry) {
    server.set_default_headers({{"Access-Control-Allow-Origin", "*"},
                                {"Access-Control-Allow-Headers", "Content-Type"},
                                {"Access-Control-Allow-Methods", "GET, POST, OPTIONS"}});
    server.Options(R"(/.*)", [](const httplib::Request&, httplib::Response& res) { res.status = 204; });

    server.Get("/sessions", [&registry](const httplib::Request&, httplib::Response& res) {
        send_json(res, 200, json{{"sessions", registry.ids()}});
    });

    server.Get("/sessions/:id/tasks/next",
               session_route(registry, [](AnnotationSession& s, const httplib::Request& req,
                                          httplib::Response& res) {
                   const auto annotator = req.get_param_value("annotator");
                   if (annotator.empty())
                       throw AnnotationError("invalid_request", "missing query parameter annotator");
                   const auto task = s.next_task(annotator);
                   send_json(res, 200,
                             json{{"task", task ? to_json(*task) : json(nullptr)},
                                  {"open_tasks", s.open_tasks(annotator)},
                                  {"closed", s.closed()}});
               }));

    server.Post("/sessions/:id/labels",
                session_route(registry, [](AnnotationSession& s, const httplib::Request& req,
                                           httplib::Response& res) {
                    const json body = json::parse(req.body);
                    const auto annotator = required_string(body, "annotator_id");
                    const auto review = required_string(body, "review_id");
                    const auto label = parse_label(required_string(body, "label"));
                    if (!label)
                        throw AnnotationError("invalid_request",
                                              "label must be privacy or not-privacy");
                    const auto ack = s.submit_label(annotator, review, *label);
                    send_json(res, 200,
                              json{{"stored", true},
                                   {"replaced", ack.replaced},
                                   {"open_tasks", ack.open_tasks},
                                   {"adjudication",
                                    ack.adjudication ? to_json(*ack.adjudication) : json(nullptr)}});
                }));

    server.Get("/sessions/:id/conflicts",
               session_route(registry, [](AnnotationSession& s, const httplib::Request&,
                                          httplib::Response& res) {
                   json list = json::array();
                   for (const auto& adj : s.detect_conflicts()) list.push_back(to_json(adj));
                   send_json(res, 200, json{{"count", list.size()}, {"conflicts", list}});
               }));

    server.Get("/sessions/:id/agreement",
               session_route(registry, [](AnnotationSession& s, const httplib::Request&,
                                          httplib::Response& res) {
                   send_json(res, 200, to_json(s.agreement()));
               }));

    server.Get("/sessions/:id/export",
               session_route(registry, [](AnnotationSession& s, const httplib::Request& req,
                                          httplib::Response& res) {
                   if (req.get_param_value("format") == "jsonl") {
                       res.status = 200;
                       res.set_content(s.export_gold_jsonl(), "application/x-ndjson");
                       return;
                   }
                   json records = json::array();
                   for (const auto& entry : s.export_gold()) records.push_back(to_json(entry));
                   send_json(res, 200, json{{"count", records.size()}, {"records", records}});
               }));

    server.Get("/sessions/:id/guidelines",
               session_route(registry, [](AnnotationSession& s, const httplib::Request&,
                                          httplib::Response& res) {
                   send_json(res, 200, s.guidelines());
               }));

    server.Get("/sessions/:id/progress",
               session_route(registry, [](AnnotationSession& s, const httplib::Request&,
                                          httplib::Response& res) {
                   json annotators = json::array();
                   for (const auto& p : s.progress())
                       annotators.push_back({{"annotator_id", p.annotator_id},
                                             {"completed", p.completed},
                                             {"total", p.total}});
                   send_json(res, 200,
                             json{{"annotators", annotators},
                                  {"conflicts", s.detect_conflicts().size()},
                                  {"closed", s.closed()}});
               }));

    server.Post("/sessions/:id/close",
                session_route(registry, [](AnnotationSession& s, const httplib::Request&,
                                           httplib::Response& res) {
                    s.close();
                    send_json(res, 200, json{{"closed", true}});
                }));
}

AnnotationServer::AnnotationServer(SessionRegistry& registry)
    : m_server(std::make_unique<httplib::Server>()) {
    install_annotation_routes(*m_server, registry);
}

AnnotationServer::~AnnotationServer() { stop(); }

int AnnotationServer::start(const std::string& host, int port) {
    int bound = port;
    if (port == 0) {
        bound = m_server->bind_to_any_port(host);
    } else if (!m_server->bind_to_port(host, port)) {
        bound = -1;
    }
    if (bound < 0) throw Error("cannot bind annotation server to " + host + ":" + std::to_string(port));
    m_thread = std::thread([this] { m_server->listen_after_bind(); });
    m_server->wait_until_ready();
    return bound;
}

void AnnotationServer::run(const std::string& host, int port) {
    if (!m_server->listen(host, port))
        throw Error("cannot serve annotation API on " + host + ":" + std::to_string(port));
}

void AnnotationServer::stop() {
    if (m_server) m_server->stop();
    if (m_thread.joinable()) m_thread.join();
}

} // namespace privmine
