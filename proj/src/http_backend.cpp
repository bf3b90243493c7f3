#include "privmine/nli_engine.hpp"

#include "http_util.hpp"

#include <httplib.h>

namespace privmine {

HttpNliBackend::HttpNliBackend(HttpBackendOptions options) : m_options(std::move(options)) {
    std::tie(m_scheme_host, m_path) = detail::split_url(m_options.endpoint);
    if (m_options.model_id.empty()) throw ValidationError("http NLI backend needs a model_id");
    if (m_options.max_retries < 0) throw ValidationError("max_retries must be >= 0");
    if (m_options.hypotheses_per_request == 0) m_options.hypotheses_per_request = 1;
}

HttpNliBackend::~HttpNliBackend() = default;

std::vector<ProbabilityTriple> HttpNliBackend::score(std::string_view premise,
                                                     std::span<const std::string> hypotheses) {
    std::vector<ProbabilityTriple> out;
    out.reserve(hypotheses.size());
    for (std::size_t start = 0; start < hypotheses.size(); start += m_options.hypotheses_per_request) {
        const std::size_t n = std::min(m_options.hypotheses_per_request, hypotheses.size() - start);
        auto chunk = request_chunk(premise, hypotheses.subspan(start, n));
        out.insert(out.end(), chunk.begin(), chunk.end());
    }
    return out;
}

std::vector<ProbabilityTriple> HttpNliBackend::request_chunk(std::string_view premise,
                                                             std::span<const std::string> hypotheses) {
    const json body{{"premise", premise},
                    {"hypotheses", std::vector<std::string>(hypotheses.begin(), hypotheses.end())}};
    const std::string payload = body.dump();
    ++m_requests;

    httplib::Client client(m_scheme_host);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(m_options.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(m_options.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    client.set_write_timeout(seconds.count(), micros.count());

    std::string last_failure;
    for (int attempt = 0; attempt <= m_options.max_retries; ++attempt) {
        if (attempt > 0) detail::backoff_sleep(m_options.backoff_base, attempt - 1);
        ++m_attempts;
        auto res = client.Post(m_path, payload, "application/json");
        if (!res) {
            last_failure = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (detail::is_transient_status(res->status)) {
            last_failure = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw BackendError("NLI endpoint returned HTTP " + std::to_string(res->status) + ": " +
                               res->body.substr(0, 200));

        json reply;
        try {
            reply = json::parse(res->body);
        } catch (const json::parse_error& e) {
            throw MalformedResponseError(std::string("malformed NLI response: ") + e.what());
        }
        if (!reply.is_object() || !reply.contains("scores") || !reply.at("scores").is_array())
            throw MalformedResponseError("malformed NLI response: missing scores[]");
        if (reply.contains("model_id") && reply.at("model_id") != m_options.model_id)
            throw MalformedResponseError("NLI server reports model_id " + reply.at("model_id").dump() +
                                         ", configured " + m_options.model_id);
        const auto& scores = reply.at("scores");
        if (scores.size() != hypotheses.size())
            throw MalformedResponseError("NLI response has " + std::to_string(scores.size()) +
                                         " scores for " + std::to_string(hypotheses.size()) +
                                         " hypotheses");
        std::vector<ProbabilityTriple> out;
        out.reserve(scores.size());
        for (const auto& s : scores) {
            if (!s.is_object() || !s.contains("entail") || !s.contains("neutral") ||
                !s.contains("contradict") || !s.at("entail").is_number() ||
                !s.at("neutral").is_number() || !s.at("contradict").is_number())
                throw MalformedResponseError("malformed score entry " + s.dump());
            try {
                out.push_back(checked_probabilities({s.at("entail").get<double>(),
                                                     s.at("neutral").get<double>(),
                                                     s.at("contradict").get<double>()}));
            } catch (const ValidationError& e) {
                throw MalformedResponseError(std::string("non-probability payload: ") + e.what());
            }
        }
        return out;
    }
    throw BackendError("NLI endpoint failed after " + std::to_string(m_options.max_retries + 1) +
                       " attempts: " + last_failure);
}

std::unique_ptr<HttpNliBackend> http_backend(const std::string& endpoint,
                                             std::chrono::milliseconds timeout, int max_retries,
                                             std::string model_id) {
    HttpBackendOptions options;
    options.endpoint = endpoint;
    options.timeout = timeout;
    options.max_retries = max_retries;
    options.model_id = std::move(model_id);
    return std::make_unique<HttpNliBackend>(std::move(options));
}

} // namespace privmine
