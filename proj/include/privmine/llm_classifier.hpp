#pragma once

#include "privmine/corpus.hpp"
#include "privmine/labels.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace privmine {

struct ChatMessage {
    std::string role;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

// Two-role zero-shot prompt. The user template must contain the review frame
// App Review: """{review}""" and the system text must ask for bare yes/no
// labels.
struct PromptTemplate {
    std::string system_text;
    std::string user_template;

    static constexpr std::string_view kPlaceholder = "{review}";
    static constexpr std::string_view kFrame = "App Review: \"\"\"{review}\"\"\"";
    static constexpr std::string_view kOutputInstruction = "return just the yes/no labels";

    static PromptTemplate defaults();

    // Throws ValidationError when the frame or output instruction is missing.
    void validate() const;

    std::string render_user(std::string_view review_text) const;
    // Inverse of render_user, by position: whatever sits between the
    // template's prefix and suffix, even if it contains triple quotes.
    std::optional<std::string> extract_review(std::string_view user_message) const;
};

// Throws ValidationError for an empty review text.
std::vector<ChatMessage> build_prompt(const Review& review, const PromptTemplate& prompt);

enum class VoteParse { yes, no, invalid };

std::string_view to_string(VoteParse parsed);

// Trims whitespace and trailing punctuation, lowercases, then requires an
// exact "yes" or "no".
VoteParse parse_response(std::string_view raw);

// Request could not be completed (after the client's own retries).
class ChatTransportError : public Error {
public:
    using Error::Error;
};

// Chat-completion endpoint. Implementations must be safe to call from
// several threads.
class ChatClient {
public:
    virtual ~ChatClient() = default;

    virtual double temperature() const = 0;
    virtual std::string complete(std::span<const ChatMessage> messages) = 0;
};

// Spaces requests evenly to stay within a per-minute budget.
class RateLimiter {
public:
    explicit RateLimiter(double requests_per_minute = 0);  // 0 disables

    void acquire();

private:
    std::chrono::steady_clock::duration m_interval{};
    std::chrono::steady_clock::time_point m_next{};
    std::mutex m_mutex;
};

struct OpenAiChatOptions {
    std::string endpoint = "https://api.openai.com/v1/chat/completions";
    std::string model = "gpt-4o-mini-2024-07-18";
    std::string api_key;
    double temperature = 0.0;
    int max_tokens = 4;
    std::chrono::milliseconds timeout{60000};
    int max_retries = 5;  // retries after the first attempt
    std::chrono::milliseconds backoff_base{1000};
    double requests_per_minute = 0;
};

// OpenAI-compatible chat-completions client.
class OpenAiChatClient final : public ChatClient {
public:
    explicit OpenAiChatClient(OpenAiChatOptions options);

    double temperature() const override { return m_options.temperature; }
    std::string complete(std::span<const ChatMessage> messages) override;

    // Request body as sent on the wire.
    json request_body(std::span<const ChatMessage> messages) const;

    std::size_t attempts() const { return m_attempts.load(); }

private:
    OpenAiChatOptions m_options;
    std::string m_scheme_host;
    std::string m_path;
    RateLimiter m_limiter;
    std::atomic<std::size_t> m_attempts{0};
};

// Deterministic offline stand-in: answers "Yes" or "No" from a hash of the
// user message and seed, so repeated prompts get the same answer.
class MockChatClient final : public ChatClient {
public:
    explicit MockChatClient(std::uint64_t seed, double yes_rate = 0.5);

    double temperature() const override { return 0.0; }
    std::string complete(std::span<const ChatMessage> messages) override;

    std::size_t calls() const { return m_calls.load(); }

private:
    std::uint64_t m_seed;
    double m_yes_rate;
    std::atomic<std::size_t> m_calls{0};
};

struct Vote {
    int run_index = 0;
    std::string raw_response;
    VoteParse parsed = VoteParse::invalid;
    std::chrono::milliseconds latency{0};
};

enum class DecisionLabel { privacy, not_privacy, error };

std::string_view to_string(DecisionLabel label);

struct MajorityDecision {
    std::string review_id;
    DecisionLabel label = DecisionLabel::error;
    std::vector<Vote> votes;
    int valid_vote_count = 0;
    int yes_count = 0;
    std::string error;  // reason when label is error
};

// include_latency=false gives a run-independent form for stage outputs.
json to_json(const MajorityDecision& decision, bool include_latency = true);
MajorityDecision decision_from_json(const json& value);

struct ClassifyOptions {
    int votes = 5;
    int max_attempts = 10;
};

// Collects `votes` valid answers, re-asking after invalid ones, up to
// max_attempts calls. privacy iff yes_count > votes / 2. Too few valid
// answers or a transport failure gives an error decision with the votes
// kept. Throws ValidationError if the client's temperature is not 0.
MajorityDecision classify_review(const Review& review, ChatClient& client,
                                 const PromptTemplate& prompt, const ClassifyOptions& options = {});

struct BatchOptions {
    ClassifyOptions classify;
    unsigned in_flight = 1;
};

// One decision per review in input order. Each decision is appended to the
// checkpoint journal as soon as it is made; reviews with a non-error
// decision already in the journal are not sent again.
std::vector<MajorityDecision> classify_batch(std::span<const Review> reviews, ChatClient& client,
                                             const PromptTemplate& prompt,
                                             const std::optional<std::filesystem::path>& checkpoint,
                                             const BatchOptions& options = {});

} // namespace privmine
