#pragma once

#include "privmine/corpus.hpp"
#include "privmine/hypotheses.hpp"

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <shared_mutex>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace privmine {

struct ProbabilityTriple {
    double entail = 0;
    double neutral = 0;
    double contradict = 0;

    double sum() const { return entail + neutral + contradict; }
    bool operator==(const ProbabilityTriple&) const = default;
};

// Throws ValidationError unless every component is a finite value in [0, 1].
// Returns the triple unchanged when its sum is within 1e-3 of 1, renormalized
// (and logged) otherwise.
ProbabilityTriple checked_probabilities(ProbabilityTriple triple);

struct EntailmentRecord {
    std::string review_id;
    int hypothesis_id = 0;
    ProbabilityTriple probabilities;
    std::string model_id;

    // p_entail, the entailment score the heuristics count.
    double entailment_score() const { return probabilities.entail; }
    bool operator==(const EntailmentRecord&) const = default;
};

json to_json(const EntailmentRecord& record);
EntailmentRecord entailment_record_from_json(const json& value);

// Dense review x hypothesis grid of records, row-major.
class ScoreMatrix {
public:
    ScoreMatrix() = default;
    // Throws ValidationError unless records are exactly the cross product,
    // in row-major order, with no duplicates.
    ScoreMatrix(std::vector<std::string> review_ids, std::vector<int> hypothesis_ids,
                std::vector<EntailmentRecord> records);

    // Rebuilds a matrix from records in any order; row and column order
    // follow first appearance.
    static ScoreMatrix from_records(std::vector<EntailmentRecord> records);

    std::span<const std::string> review_ids() const { return m_review_ids; }
    std::span<const int> hypothesis_ids() const { return m_hypothesis_ids; }
    std::span<const EntailmentRecord> records() const { return m_records; }
    std::size_t rows() const { return m_review_ids.size(); }
    std::size_t cols() const { return m_hypothesis_ids.size(); }

    const EntailmentRecord& at(std::size_t row, std::size_t col) const {
        return m_records[row * cols() + col];
    }
    std::vector<double> entailment_row(std::size_t row) const;

    void save(const std::filesystem::path& path,
              const std::optional<ArtifactHeader>& header = std::nullopt) const;
    static ScoreMatrix load(const std::filesystem::path& path,
                            std::optional<ArtifactHeader>* header = nullptr);

    bool operator==(const ScoreMatrix&) const = default;

private:
    std::vector<std::string> m_review_ids;
    std::vector<int> m_hypothesis_ids;
    std::vector<EntailmentRecord> m_records;
};

// Transport, protocol or payload failure of a model backend.
class BackendError : public Error {
public:
    using Error::Error;
};

// The backend answered, but with a payload that breaks the wire contract.
class MalformedResponseError : public BackendError {
public:
    using BackendError::BackendError;
};

// Scores (premise, hypothesis) pairs. Implementations must be deterministic
// for a fixed (premise, hypothesis, model_id) and safe to call concurrently.
class NliBackend {
public:
    virtual ~NliBackend() = default;

    virtual const std::string& model_id() const = 0;

    // Premises are cut to this many whitespace tokens before scoring; 0 means
    // no limit. Hypotheses are never cut.
    virtual std::size_t max_premise_tokens() const { return 0; }

    // One triple per hypothesis, same order.
    virtual std::vector<ProbabilityTriple> score(std::string_view premise,
                                                 std::span<const std::string> hypotheses) = 0;

    ProbabilityTriple score(std::string_view premise, const std::string& hypothesis);
};

// Deterministic test double: hashes (premise, hypothesis, seed) into three
// values in (0, 1] and normalizes them.
class MockNliBackend final : public NliBackend {
public:
    explicit MockNliBackend(std::uint64_t seed, std::size_t max_premise_tokens = 0);

    const std::string& model_id() const override { return m_model_id; }
    std::size_t max_premise_tokens() const override { return m_max_premise_tokens; }
    std::vector<ProbabilityTriple> score(std::string_view premise,
                                         std::span<const std::string> hypotheses) override;
    using NliBackend::score;

    // Number of (premise, hypothesis) pairs scored so far.
    std::size_t pair_calls() const { return m_pair_calls.load(); }

private:
    std::uint64_t m_seed;
    std::size_t m_max_premise_tokens;
    std::string m_model_id;
    std::atomic<std::size_t> m_pair_calls{0};
};

std::unique_ptr<MockNliBackend> mock_backend(std::uint64_t seed);

struct HttpBackendOptions {
    std::string endpoint;  // e.g. http://127.0.0.1:8000/nli
    std::string model_id;  // must match what the server reports
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;   // retries after the first attempt
    std::chrono::milliseconds backoff_base{250};
    std::size_t max_premise_tokens = 0;
    std::size_t hypotheses_per_request = 32;
};

// POST {premise, hypotheses[]} -> {model_id, scores[{entail, neutral, contradict}]}.
// Connection failures, 429 and 5xx are retried with exponential backoff.
class HttpNliBackend final : public NliBackend {
public:
    explicit HttpNliBackend(HttpBackendOptions options);
    ~HttpNliBackend() override;

    const std::string& model_id() const override { return m_options.model_id; }
    std::size_t max_premise_tokens() const override { return m_options.max_premise_tokens; }
    std::vector<ProbabilityTriple> score(std::string_view premise,
                                         std::span<const std::string> hypotheses) override;
    using NliBackend::score;

    std::size_t attempts() const { return m_attempts.load(); }
    std::size_t requests() const { return m_requests.load(); }

private:
    std::vector<ProbabilityTriple> request_chunk(std::string_view premise,
                                                 std::span<const std::string> hypotheses);

    HttpBackendOptions m_options;
    std::string m_scheme_host;
    std::string m_path;
    std::atomic<std::size_t> m_attempts{0};
    std::atomic<std::size_t> m_requests{0};
};

std::unique_ptr<HttpNliBackend> http_backend(const std::string& endpoint,
                                             std::chrono::milliseconds timeout, int max_retries,
                                             std::string model_id = "remote-nli");

// Persistent (review_id, hypothesis_id, model_id) -> triple store. Backed by
// an append-only JSONL journal plus an in-memory index; readers run
// concurrently, writes are serialized. Entries also carry a digest of
// premise and hypothesis text so edited inputs are re-scored rather than
// served stale.
class ScoreCache {
public:
    // In-memory only.
    ScoreCache();
    // Loads the journal (if present) and appends new entries to it.
    explicit ScoreCache(const std::filesystem::path& journal);
    ~ScoreCache();

    ScoreCache(const ScoreCache&) = delete;
    ScoreCache& operator=(const ScoreCache&) = delete;

    std::optional<ProbabilityTriple> lookup(std::string_view review_id, int hypothesis_id,
                                            std::string_view model_id,
                                            std::uint64_t input_digest) const;
    void insert(const EntailmentRecord& record, std::uint64_t input_digest);

    std::size_t size() const;
    // Lines dropped while loading: a torn final append.
    bool recovered_torn_tail() const { return m_torn_tail; }

private:
    struct Entry {
        ProbabilityTriple probabilities;
        std::uint64_t digest;
    };
    static std::string key(std::string_view review_id, int hypothesis_id, std::string_view model_id);

    mutable std::shared_mutex m_mutex;
    std::unordered_map<std::string, Entry> m_entries;
    std::unique_ptr<AppendLog> m_journal;
    bool m_torn_tail = false;
};

std::uint64_t input_digest(std::string_view premise, std::string_view hypothesis);

// Keeps the first max_tokens whitespace-separated tokens; 0 keeps everything.
std::string truncate_premise(std::string_view premise, std::size_t max_tokens);

// Backend failure part-way through a corpus. Every record completed before
// the failure is already in the cache, so rerunning resumes.
class ScoringError : public Error {
public:
    ScoringError(const std::string& message, std::size_t completed_pairs, std::size_t total_pairs)
        : Error(message), m_completed(completed_pairs), m_total(total_pairs) {}

    std::size_t completed() const { return m_completed; }
    std::size_t total() const { return m_total; }

private:
    std::size_t m_completed;
    std::size_t m_total;
};

struct ScoreOptions {
    unsigned workers = 1;
};

struct ScoreStats {
    std::size_t cache_hits = 0;
    std::size_t backend_pairs = 0;
};

// Scores every (review, hypothesis) pair, serving cached pairs without
// calling the backend and writing new results through to the cache.
// Premise is the review's clean_text when present, else raw_text.
ScoreMatrix score_corpus(const ReviewCollection& collection, const HypothesisSet& set,
                         NliBackend& backend, ScoreCache& cache, const ScoreOptions& options = {},
                         ScoreStats* stats = nullptr);

} // namespace privmine
