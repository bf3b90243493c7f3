#include "privmine/llm_classifier.hpp"

#include <algorithm>
#include <cctype>
#include <exception>
#include <thread>
#include <unordered_map>

namespace privmine {

PromptTemplate PromptTemplate::defaults() {
    PromptTemplate t;
    t.system_text =
        "You are an expert in software requirements engineering and user privacy.\n"
        "\n"
        "Input format: each user message contains one mobile app review, given as\n"
        "App Review: \"\"\"content of the app review\"\"\"\n"
        "\n"
        "Task: decide whether the app review is related to privacy, i.e. whether the user "
        "raises a concern about how their personal or mental health data is collected, used, "
        "stored, shared or protected by the app.\n"
        "\n"
        "Output format: return just the yes/no labels. Answer yes if the app review is related "
        "to privacy and no otherwise, without any explanation.";
    t.user_template = std::string(kFrame);
    return t;
}

void PromptTemplate::validate() const {
    if (user_template.find(kFrame) == std::string::npos)
        throw ValidationError("user template must contain the frame " + std::string(kFrame));
    const auto first = user_template.find(kPlaceholder);
    if (user_template.find(kPlaceholder, first + 1) != std::string::npos)
        throw ValidationError("user template must contain the review placeholder exactly once");
    if (system_text.find(kOutputInstruction) == std::string::npos)
        throw ValidationError("system text must instruct the model to \"" +
                              std::string(kOutputInstruction) + "\"");
}

std::string PromptTemplate::render_user(std::string_view review_text) const {
    const auto pos = user_template.find(kPlaceholder);
    std::string out = user_template.substr(0, pos);
    out += review_text;
    out += user_template.substr(pos + kPlaceholder.size());
    return out;
}

std::optional<std::string> PromptTemplate::extract_review(std::string_view user_message) const {
    const auto pos = user_template.find(kPlaceholder);
    const std::string_view prefix(user_template.data(), pos);
    const std::string_view suffix(user_template.data() + pos + kPlaceholder.size(),
                                  user_template.size() - pos - kPlaceholder.size());
    if (user_message.size() < prefix.size() + suffix.size() || !user_message.starts_with(prefix) ||
        !user_message.ends_with(suffix))
        return std::nullopt;
    return std::string(user_message.substr(prefix.size(),
                                           user_message.size() - prefix.size() - suffix.size()));
}

std::vector<ChatMessage> build_prompt(const Review& review, const PromptTemplate& prompt) {
    const std::string& text = review.text();
    if (text.find_first_not_of(" \t\r\n") == std::string::npos)
        throw ValidationError("review " + review.review_id + " has empty text");
    prompt.validate();
    return {{"system", prompt.system_text}, {"user", prompt.render_user(text)}};
}

std::string_view to_string(VoteParse parsed) {
    switch (parsed) {
    case VoteParse::yes: return "yes";
    case VoteParse::no: return "no";
    case VoteParse::invalid: break;
    }
    return "invalid";
}

VoteParse parse_response(std::string_view raw) {
    const auto is_space = [](unsigned char c) { return std::isspace(c) != 0; };
    const auto is_punct = [](unsigned char c) { return std::ispunct(c) != 0; };
    while (!raw.empty() && is_space(static_cast<unsigned char>(raw.front()))) raw.remove_prefix(1);
    while (!raw.empty() && (is_space(static_cast<unsigned char>(raw.back())) ||
                            is_punct(static_cast<unsigned char>(raw.back()))))
        raw.remove_suffix(1);
    std::string lower;
    lower.reserve(raw.size());
    for (char c : raw) lower += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if (lower == "yes") return VoteParse::yes;
    if (lower == "no") return VoteParse::no;
    return VoteParse::invalid;
}

std::string_view to_string(DecisionLabel label) {
    switch (label) {
    case DecisionLabel::privacy: return "privacy";
    case DecisionLabel::not_privacy: return "not-privacy";
    case DecisionLabel::error: break;
    }
    return "error";
}

namespace {

DecisionLabel parse_decision_label(std::string_view text) {
    if (text == "privacy") return DecisionLabel::privacy;
    if (text == "not-privacy") return DecisionLabel::not_privacy;
    if (text == "error") return DecisionLabel::error;
    throw ValidationError("unknown decision label '" + std::string(text) + "'");
}

VoteParse parse_vote_field(std::string_view text) {
    if (text == "yes") return VoteParse::yes;
    if (text == "no") return VoteParse::no;
    return VoteParse::invalid;
}

} // namespace

json to_json(const MajorityDecision& decision, bool include_latency) {
    json votes = json::array();
    for (const auto& v : decision.votes) {
        json vote{{"run_index", v.run_index},
                  {"raw_response", v.raw_response},
                  {"parsed", to_string(v.parsed)}};
        if (include_latency) vote["latency_ms"] = v.latency.count();
        votes.push_back(std::move(vote));
    }
    json out{{"review_id", decision.review_id},
             {"label", to_string(decision.label)},
             {"yes_count", decision.yes_count},
             {"valid_vote_count", decision.valid_vote_count},
             {"votes", votes}};
    if (!decision.error.empty()) out["error"] = decision.error;
    return out;
}

MajorityDecision decision_from_json(const json& value) {
    MajorityDecision d;
    d.review_id = value.at("review_id").get<std::string>();
    d.label = parse_decision_label(value.at("label").get<std::string>());
    d.yes_count = value.value("yes_count", 0);
    d.valid_vote_count = value.value("valid_vote_count", 0);
    d.error = value.value("error", std::string{});
    for (const auto& v : value.value("votes", json::array())) {
        Vote vote;
        vote.run_index = v.at("run_index").get<int>();
        vote.raw_response = v.at("raw_response").get<std::string>();
        vote.parsed = parse_vote_field(v.at("parsed").get<std::string>());
        vote.latency = std::chrono::milliseconds(v.value("latency_ms", 0LL));
        d.votes.push_back(std::move(vote));
    }
    return d;
}

MajorityDecision classify_review(const Review& review, ChatClient& client,
                                 const PromptTemplate& prompt, const ClassifyOptions& options) {
    if (client.temperature() != 0.0)
        throw ValidationError("chat client must be configured with temperature 0");
    if (options.votes < 1 || options.votes % 2 == 0)
        throw ValidationError("vote count must be odd and positive");
    if (options.max_attempts < options.votes)
        throw ValidationError("max_attempts must be at least the vote count");

    const auto messages = build_prompt(review, prompt);
    MajorityDecision decision;
    decision.review_id = review.review_id;

    for (int attempt = 1; attempt <= options.max_attempts && decision.valid_vote_count < options.votes;
         ++attempt) {
        Vote vote;
        vote.run_index = attempt;
        const auto start = std::chrono::steady_clock::now();
        try {
            vote.raw_response = client.complete(messages);
        } catch (const ChatTransportError& e) {
            decision.label = DecisionLabel::error;
            decision.error = std::string("transport failure: ") + e.what();
            return decision;
        }
        vote.latency = std::chrono::duration_cast<std::chrono::milliseconds>(
            std::chrono::steady_clock::now() - start);
        vote.parsed = parse_response(vote.raw_response);
        if (vote.parsed != VoteParse::invalid) {
            ++decision.valid_vote_count;
            if (vote.parsed == VoteParse::yes) ++decision.yes_count;
        }
        decision.votes.push_back(std::move(vote));
    }

    if (decision.valid_vote_count < options.votes) {
        decision.label = DecisionLabel::error;
        decision.error = "only " + std::to_string(decision.valid_vote_count) + " valid votes in " +
                         std::to_string(decision.votes.size()) + " attempts";
        return decision;
    }
    decision.label = decision.yes_count > options.votes / 2 ? DecisionLabel::privacy
                                                            : DecisionLabel::not_privacy;
    return decision;
}

std::vector<MajorityDecision> classify_batch(std::span<const Review> reviews, ChatClient& client,
                                             const PromptTemplate& prompt,
                                             const std::optional<std::filesystem::path>& checkpoint,
                                             const BatchOptions& options) {
    std::vector<MajorityDecision> decisions(reviews.size());
    if (reviews.empty()) return decisions;
    prompt.validate();
    if (client.temperature() != 0.0)
        throw ValidationError("chat client must be configured with temperature 0");

    std::unordered_map<std::string, MajorityDecision> done;
    std::unique_ptr<AppendLog> journal;
    if (checkpoint) {
        if (std::filesystem::exists(*checkpoint)) {
            const auto stats = read_jsonl(
                *checkpoint,
                [&](const json& value, std::size_t) {
                    auto d = decision_from_json(value);
                    if (d.label != DecisionLabel::error) done[d.review_id] = std::move(d);
                },
                /*tolerate_torn_tail=*/true);
            drop_torn_tail(*checkpoint, stats);
        }
        journal = std::make_unique<AppendLog>(*checkpoint);
    }

    std::vector<std::size_t> pending;
    for (std::size_t i = 0; i < reviews.size(); ++i) {
        auto it = done.find(reviews[i].review_id);
        if (it != done.end()) {
            decisions[i] = it->second;
        } else {
            pending.push_back(i);
        }
    }

    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto worker = [&] {
        while (true) {
            const std::size_t k = next.fetch_add(1);
            if (k >= pending.size()) return;
            const std::size_t i = pending[k];
            try {
                decisions[i] = classify_review(reviews[i], client, prompt, options.classify);
            } catch (const ValidationError& e) {
                // e.g. an empty review: recorded, the batch carries on
                decisions[i].review_id = reviews[i].review_id;
                decisions[i].label = DecisionLabel::error;
                decisions[i].error = e.what();
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                return;
            }
            if (journal) journal->append(to_json(decisions[i]));
        }
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(options.in_flight,
                                                             static_cast<unsigned>(pending.size())));
    if (workers <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned w = 0; w < workers; ++w) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    if (failure) std::rethrow_exception(failure);
    return decisions;
}

} // namespace privmine
