#include "privmine/llm_classifier.hpp"

#include "http_util.hpp"

#include <httplib.h>

#include <thread>

namespace privmine {

RateLimiter::RateLimiter(double requests_per_minute) {
    if (requests_per_minute < 0) throw ValidationError("requests_per_minute must be >= 0");
    if (requests_per_minute > 0)
        m_interval = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(60.0 / requests_per_minute));
}

void RateLimiter::acquire() {
    if (m_interval == std::chrono::steady_clock::duration::zero()) return;
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(m_mutex);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, m_next);
        m_next = slot + m_interval;
    }
    std::this_thread::sleep_until(slot);
}

OpenAiChatClient::OpenAiChatClient(OpenAiChatOptions options)
    : m_options(std::move(options)), m_limiter(m_options.requests_per_minute) {
    std::tie(m_scheme_host, m_path) = detail::split_url(m_options.endpoint);
    if (m_options.model.empty()) throw ValidationError("chat client needs a model name");
    if (m_options.max_retries < 0) throw ValidationError("max_retries must be >= 0");
}

json OpenAiChatClient::request_body(std::span<const ChatMessage> messages) const {
    json wire = json::array();
    for (const auto& m : messages) wire.push_back({{"role", m.role}, {"content", m.content}});
    return json{{"model", m_options.model},
                {"messages", wire},
                {"temperature", m_options.temperature},
                {"max_tokens", m_options.max_tokens}};
}

std::string OpenAiChatClient::complete(std::span<const ChatMessage> messages) {
    const std::string payload = request_body(messages).dump();

    httplib::Client client(m_scheme_host);
    const auto seconds = std::chrono::duration_cast<std::chrono::seconds>(m_options.timeout);
    const auto micros = std::chrono::duration_cast<std::chrono::microseconds>(m_options.timeout - seconds);
    client.set_connection_timeout(seconds.count(), micros.count());
    client.set_read_timeout(seconds.count(), micros.count());
    httplib::Headers headers;
    if (!m_options.api_key.empty()) headers.emplace("Authorization", "Bearer " + m_options.api_key);

    std::string last_failure;
    for (int attempt = 0; attempt <= m_options.max_retries; ++attempt) {
        if (attempt > 0) detail::backoff_sleep(m_options.backoff_base, attempt - 1);
        m_limiter.acquire();
        ++m_attempts;
        auto res = client.Post(m_path, headers, payload, "application/json");
        if (!res) {
            last_failure = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (detail::is_transient_status(res->status)) {
            last_failure = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200)
            throw ChatTransportError("chat endpoint returned HTTP " + std::to_string(res->status) +
                                     ": " + res->body.substr(0, 300));
        try {
            const json reply = json::parse(res->body);
            const auto& content = reply.at("choices").at(0).at("message").at("content");
            return content.is_null() ? std::string{} : content.get<std::string>();
        } catch (const json::exception& e) {
            throw ChatTransportError(std::string("malformed chat response: ") + e.what());
        }
    }
    throw ChatTransportError("chat endpoint failed after " +
                             std::to_string(m_options.max_retries + 1) + " attempts: " + last_failure);
}

MockChatClient::MockChatClient(std::uint64_t seed, double yes_rate)
    : m_seed(seed), m_yes_rate(yes_rate) {}

std::string MockChatClient::complete(std::span<const ChatMessage> messages) {
    ++m_calls;
    std::uint64_t h = fnv1a64(std::to_string(m_seed));
    for (const auto& m : messages)
        if (m.role == "user") h = fnv1a64(m.content, h);
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
    return u < m_yes_rate ? "Yes" : "No";
}

} // namespace privmine
