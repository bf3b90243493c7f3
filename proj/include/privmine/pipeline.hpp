#pragma once

#include "privmine/config.hpp"
#include "privmine/evaluation.hpp"
#include "privmine/heuristic_filter.hpp"
#include "privmine/llm_classifier.hpp"
#include "privmine/nli_engine.hpp"

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace privmine {

// A stage stopped part-way; its completed work is checkpointed and
// rerunning the stage resumes from there.
class StageFailure : public Error {
public:
    StageFailure(const std::string& message, std::filesystem::path checkpoint)
        : Error(message), m_checkpoint(std::move(checkpoint)) {}
    const std::filesystem::path& checkpoint() const { return m_checkpoint; }

private:
    std::filesystem::path m_checkpoint;
};

enum ExitCode : int { exit_ok = 0, exit_validation = 2, exit_resumable = 3 };

// Maps the exception in flight to an exit code and logs it. Call from a
// catch block.
int exit_code_for_current_exception();

struct PipelinePaths {
    std::filesystem::path workdir;
    std::filesystem::path lock;
    std::filesystem::path ingest_summary;  // ingest.json
    std::filesystem::path reviews;         // reviews.jsonl
    std::filesystem::path scores;          // scores.jsonl
    std::filesystem::path verdicts;        // verdicts.jsonl
    std::filesystem::path decisions;       // decisions.jsonl
    std::filesystem::path candidates;      // candidates.jsonl, the llm-privacy reviews
    std::filesystem::path funnel_json;
    std::filesystem::path funnel_text;
    std::filesystem::path sweep_json;
    std::filesystem::path sweep_text;
    std::filesystem::path timings;         // timings.json, the only run-dependent output
    std::filesystem::path nli_cache;
    std::filesystem::path classify_checkpoint;

    PipelinePaths(const std::filesystem::path& workdir, const std::filesystem::path& cache_dir,
                  const std::string& fingerprint);
};

struct FunnelCounts {
    std::size_t ingested = 0;
    std::size_t skipped = 0;
    std::size_t rating_filtered = 0;
    std::size_t scored = 0;
    std::size_t maybe_privacy = 0;
    std::size_t llm_privacy = 0;
    std::size_t llm_undecided = 0;
    std::size_t exported = 0;
};

struct FunnelReport {
    std::string fingerprint;
    FunnelCounts counts;
    std::vector<std::pair<std::string, double>> durations;  // stage, seconds
    std::optional<json> evaluation;                          // present when gold labels are configured
};

// Durations are left out of the file form so reruns are byte-identical.
json to_json(const FunnelReport& report, bool include_durations);
std::string format_funnel(const FunnelReport& report);

class WorkdirLock {
public:
    // Throws ValidationError when another process holds the lock.
    explicit WorkdirLock(const std::filesystem::path& lock_file);
    ~WorkdirLock();
    WorkdirLock(const WorkdirLock&) = delete;
    WorkdirLock& operator=(const WorkdirLock&) = delete;

private:
    int m_fd = -1;
};

ReviewCollection load_review_artifact(const std::filesystem::path& path,
                                      std::optional<ArtifactHeader>* header = nullptr);

// Stages communicate through JSONL files in the work directory. Each
// artifact starts with a header naming its kind and the config
// fingerprint; reading an artifact written under another fingerprint fails.
class Pipeline {
public:
    // Takes the work directory lock for the lifetime of the object.
    explicit Pipeline(PipelineConfig config);
    ~Pipeline();

    // Backends default to what the config describes; tests inject their own.
    void set_nli_backend(std::shared_ptr<NliBackend> backend) { m_nli = std::move(backend); }
    void set_chat_client(std::shared_ptr<ChatClient> client) { m_chat = std::move(client); }

    const PipelineConfig& config() const { return m_config; }
    const std::string& fingerprint() const { return m_fingerprint; }
    const PipelinePaths& paths() const { return m_paths; }

    std::size_t ingest();    // reviews kept
    std::size_t score();     // records written
    std::size_t filter();    // maybe-privacy count
    std::size_t classify();  // llm-privacy count
    FunnelReport report();
    std::vector<SweepRow> sweep(const std::optional<std::filesystem::path>& gold = std::nullopt);

    // ingest through report.
    FunnelReport run();

    const ScoreStats& last_score_stats() const { return m_score_stats; }

private:
    void expect_fingerprint(const std::optional<ArtifactHeader>& header, const std::string& kind,
                            const std::filesystem::path& path) const;
    void require(const std::filesystem::path& artifact, const char* producing_stage) const;
    ArtifactHeader header(const std::string& kind) const { return {kind, m_fingerprint}; }
    void record_timing(const std::string& stage, double seconds);
    NliBackend& nli();
    ChatClient& chat();
    ReviewCollection reviews() const;
    ScoreMatrix scores() const;
    std::vector<Verdict> verdicts() const;
    std::vector<MajorityDecision> decisions() const;

    PipelineConfig m_config;
    std::string m_fingerprint;
    PipelinePaths m_paths;
    std::unique_ptr<WorkdirLock> m_lock;
    std::shared_ptr<NliBackend> m_nli;
    std::shared_ptr<ChatClient> m_chat;
    ScoreStats m_score_stats;
};

} // namespace privmine
