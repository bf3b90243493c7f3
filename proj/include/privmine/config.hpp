#pragma once

#include "privmine/corpus.hpp"
#include "privmine/heuristic_filter.hpp"
#include "privmine/hypotheses.hpp"
#include "privmine/jsonl.hpp"
#include "privmine/llm_classifier.hpp"

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace privmine {

struct NliBackendConfig {
    std::string kind = "mock";  // mock | http
    std::uint64_t seed = 0;
    std::string endpoint;
    std::string model_id;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::size_t max_premise_tokens = 0;
    std::size_t hypotheses_per_request = 32;
};

struct LlmBackendConfig {
    std::string kind = "mock";  // mock | openai
    std::uint64_t seed = 0;
    double mock_yes_rate = 0.5;
    OpenAiChatOptions openai;  // api_key is filled from api_key_env at client creation
    std::string api_key_env = "OPENAI_API_KEY";
};

struct AnnotationConfig {
    std::string session_id = "session-1";
    std::string host = "127.0.0.1";
    int port = 8787;
    std::vector<std::string> annotators;
    std::string lead;
    int redundancy = 2;
    std::string guideline_text;
};

struct PipelineConfig {
    std::filesystem::path config_path;  // empty when built in code
    std::filesystem::path dataset;
    InputFormat format = InputFormat::csv;
    ColumnMap columns;
    bool preprocess = true;
    std::optional<int> max_rating;
    HypothesisSet hypotheses = builtin_mh_set();
    HeuristicSet heuristic_set = builtin_heuristic_set("set2");
    std::vector<HeuristicSet> sweep_sets = builtin_heuristic_sets();
    NliBackendConfig nli;
    LlmBackendConfig llm;
    PromptTemplate prompt = PromptTemplate::defaults();
    ClassifyOptions classify;
    unsigned workers = 1;
    unsigned llm_in_flight = 1;
    std::filesystem::path workdir = "work";
    std::filesystem::path cache_dir;  // defaults to workdir/cache
    std::optional<std::filesystem::path> gold;
    AnnotationConfig annotation;

    std::filesystem::path effective_cache_dir() const {
        return cache_dir.empty() ? workdir / "cache" : cache_dir;
    }
};

// Relative paths inside the document resolve against base_dir. Throws
// ValidationError on unknown keys, bad values or missing referenced files.
PipelineConfig config_from_json(const json& document, const std::filesystem::path& base_dir);
PipelineConfig load_config(const std::filesystem::path& path);

void validate(const PipelineConfig& config);

// Everything that determines artifact contents, in a canonical form: the
// dataset bytes' digest, ingest and backend settings, hypothesis texts,
// heuristic sets and prompt. Directories, worker counts and annotation
// settings are left out.
json normalized_config(const PipelineConfig& config);
std::string config_fingerprint(const PipelineConfig& config);

} // namespace privmine
