#pragma once

#include "privmine/annotation_service.hpp"

#include <map>
#include <memory>
#include <shared_mutex>
#include <string>
#include <thread>
#include <vector>

namespace httplib {
class Server;
}

namespace privmine {

class SessionRegistry {
public:
    // Throws AnnotationError(invalid_request) when the id is taken.
    AnnotationSession& add(std::unique_ptr<AnnotationSession> session);
    // Throws AnnotationError(unknown_session).
    AnnotationSession& get(const std::string& session_id) const;
    std::vector<std::string> ids() const;

private:
    mutable std::shared_mutex m_mutex;
    std::map<std::string, std::unique_ptr<AnnotationSession>> m_sessions;
};

// HTTP status for an AnnotationError code.
int http_status_for(const std::string& code);

// Routes under /sessions/:id/ ; see README for the request and response bodies.
void install_annotation_routes(httplib::Server& server, SessionRegistry& registry);

// Owns an httplib server running on a background thread.
class AnnotationServer {
public:
    explicit AnnotationServer(SessionRegistry& registry);
    ~AnnotationServer();
    AnnotationServer(const AnnotationServer&) = delete;
    AnnotationServer& operator=(const AnnotationServer&) = delete;

    // Binds and starts serving; port 0 picks a free port. Returns the bound port.
    int start(const std::string& host, int port);
    // Serves on the calling thread until stop() is called from elsewhere.
    void run(const std::string& host, int port);
    void stop();

private:
    std::unique_ptr<httplib::Server> m_server;
    std::thread m_thread;
};

} // namespace privmine
