#include "privmine/config.hpp"

#include <initializer_list>
#include <set>

namespace privmine {

namespace fs = std::filesystem;

namespace {

void reject_unknown_keys(const json& object, std::initializer_list<const char*> allowed,
                         const std::string& where) {
    if (!object.is_object()) throw ValidationError(where + " must be an object");
    const std::set<std::string> known(allowed.begin(), allowed.end());
    for (const auto& [key, _] : object.items())
        if (!known.contains(key)) throw ValidationError("unknown key " + where + "." + key);
}

template <class T>
T get_or(const json& object, const char* key, T fallback, const std::string& where) {
    if (!object.contains(key) || object.at(key).is_null()) return fallback;
    try {
        return object.at(key).get<T>();
    } catch (const json::exception&) {
        throw ValidationError("bad value for " + where + "." + key + ": " + object.at(key).dump());
    }
}

fs::path resolve(const fs::path& base_dir, const std::string& value) {
    fs::path p(value);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
}

HeuristicSet heuristic_from(const json& value) {
    if (value.is_string()) return builtin_heuristic_set(value.get<std::string>());
    return heuristic_set_from_json(value);
}

NliBackendConfig nli_from(const json& v) {
    reject_unknown_keys(v, {"backend", "seed", "endpoint", "model_id", "timeout_ms", "max_retries",
                            "max_premise_tokens", "hypotheses_per_request"},
                        "nli");
    NliBackendConfig c;
    c.kind = get_or<std::string>(v, "backend", "mock", "nli");
    c.seed = get_or<std::uint64_t>(v, "seed", 0, "nli");
    c.endpoint = get_or<std::string>(v, "endpoint", "", "nli");
    c.model_id = get_or<std::string>(v, "model_id", "", "nli");
    c.timeout = std::chrono::milliseconds(get_or<long long>(v, "timeout_ms", 30000, "nli"));
    c.max_retries = get_or<int>(v, "max_retries", 3, "nli");
    c.max_premise_tokens = get_or<std::size_t>(v, "max_premise_tokens", 0, "nli");
    c.hypotheses_per_request = get_or<std::size_t>(v, "hypotheses_per_request", 32, "nli");
    return c;
}

LlmBackendConfig llm_from(const json& v) {
    reject_unknown_keys(v, {"backend", "seed", "yes_rate", "endpoint", "model", "api_key_env",
                            "max_tokens", "timeout_ms", "max_retries", "requests_per_minute"},
                        "llm");
    LlmBackendConfig c;
    c.kind = get_or<std::string>(v, "backend", "mock", "llm");
    c.seed = get_or<std::uint64_t>(v, "seed", 0, "llm");
    c.mock_yes_rate = get_or<double>(v, "yes_rate", 0.5, "llm");
    c.api_key_env = get_or<std::string>(v, "api_key_env", "OPENAI_API_KEY", "llm");
    auto& o = c.openai;
    o.endpoint = get_or<std::string>(v, "endpoint", o.endpoint, "llm");
    o.model = get_or<std::string>(v, "model", o.model, "llm");
    o.max_tokens = get_or<int>(v, "max_tokens", o.max_tokens, "llm");
    o.timeout = std::chrono::milliseconds(get_or<long long>(v, "timeout_ms", o.timeout.count(), "llm"));
    o.max_retries = get_or<int>(v, "max_retries", o.max_retries, "llm");
    o.requests_per_minute = get_or<double>(v, "requests_per_minute", 0, "llm");
    return c;
}

AnnotationConfig annotation_from(const json& v) {
    reject_unknown_keys(v, {"session_id", "host", "port", "annotators", "lead", "redundancy",
                            "guideline_text"},
                        "annotation");
    AnnotationConfig c;
    c.session_id = get_or<std::string>(v, "session_id", c.session_id, "annotation");
    c.host = get_or<std::string>(v, "host", c.host, "annotation");
    c.port = get_or<int>(v, "port", c.port, "annotation");
    c.annotators = get_or<std::vector<std::string>>(v, "annotators", {}, "annotation");
    c.lead = get_or<std::string>(v, "lead", c.annotators.empty() ? "" : c.annotators.front(),
                                 "annotation");
    c.redundancy = get_or<int>(v, "redundancy", 2, "annotation");
    c.guideline_text = get_or<std::string>(v, "guideline_text", "", "annotation");
    return c;
}

} // namespace

PipelineConfig config_from_json(const json& doc, const fs::path& base_dir) {
    reject_unknown_keys(doc, {"dataset", "preprocess", "max_rating", "hypotheses", "heuristic_set",
                              "sweep_sets", "nli", "llm", "prompt", "votes", "max_attempts",
                              "workers", "llm_in_flight", "workdir", "cache_dir", "gold",
                              "annotation"},
                        "config");
    PipelineConfig c;
    if (!doc.contains("dataset")) throw ValidationError("config.dataset is required");
    const json& ds = doc.at("dataset");
    if (ds.is_string()) {
        c.dataset = resolve(base_dir, ds.get<std::string>());
    } else {
        reject_unknown_keys(ds, {"path", "format", "columns"}, "dataset");
        c.dataset = resolve(base_dir, get_or<std::string>(ds, "path", "", "dataset"));
        if (ds.contains("format")) c.format = parse_input_format(ds.at("format").get<std::string>());
        if (ds.contains("columns")) {
            const json& cols = ds.at("columns");
            reject_unknown_keys(cols, {"review_id", "text", "app", "rating", "date", "platform"},
                                "dataset.columns");
            c.columns.review_id = get_or<std::string>(cols, "review_id", c.columns.review_id, "columns");
            c.columns.text = get_or<std::string>(cols, "text", c.columns.text, "columns");
            c.columns.app = get_or<std::string>(cols, "app", c.columns.app, "columns");
            c.columns.rating = get_or<std::string>(cols, "rating", c.columns.rating, "columns");
            c.columns.date = get_or<std::string>(cols, "date", c.columns.date, "columns");
            c.columns.platform = get_or<std::string>(cols, "platform", c.columns.platform, "columns");
        }
    }
    if (!ds.is_object() || !ds.contains("format")) {
        const auto ext = c.dataset.extension().string();
        if (ext == ".jsonl" || ext == ".ndjson") c.format = InputFormat::jsonl;
    }
    c.preprocess = get_or<bool>(doc, "preprocess", true, "config");
    if (doc.contains("max_rating") && !doc.at("max_rating").is_null())
        c.max_rating = get_or<int>(doc, "max_rating", 0, "config");

    if (doc.contains("hypotheses")) {
        const auto h = doc.at("hypotheses").get<std::string>();
        c.hypotheses = h == builtin_mh_set().set_id() ? builtin_mh_set()
                                                      : load_hypothesis_set(resolve(base_dir, h));
    }
    if (doc.contains("heuristic_set")) c.heuristic_set = heuristic_from(doc.at("heuristic_set"));
    if (doc.contains("sweep_sets")) {
        c.sweep_sets.clear();
        for (const auto& s : doc.at("sweep_sets")) c.sweep_sets.push_back(heuristic_from(s));
    }
    if (doc.contains("nli")) c.nli = nli_from(doc.at("nli"));
    if (doc.contains("llm")) c.llm = llm_from(doc.at("llm"));
    if (doc.contains("prompt")) {
        const json& p = doc.at("prompt");
        reject_unknown_keys(p, {"system_text", "user_template"}, "prompt");
        c.prompt.system_text = get_or<std::string>(p, "system_text", c.prompt.system_text, "prompt");
        c.prompt.user_template = get_or<std::string>(p, "user_template", c.prompt.user_template, "prompt");
    }
    c.classify.votes = get_or<int>(doc, "votes", 5, "config");
    c.classify.max_attempts = get_or<int>(doc, "max_attempts", 10, "config");
    c.workers = get_or<unsigned>(doc, "workers", 1, "config");
    c.llm_in_flight = get_or<unsigned>(doc, "llm_in_flight", 1, "config");
    c.workdir = resolve(base_dir, get_or<std::string>(doc, "workdir", "work", "config"));
    if (doc.contains("cache_dir"))
        c.cache_dir = resolve(base_dir, doc.at("cache_dir").get<std::string>());
    if (doc.contains("gold") && !doc.at("gold").is_null())
        c.gold = resolve(base_dir, doc.at("gold").get<std::string>());
    if (doc.contains("annotation")) c.annotation = annotation_from(doc.at("annotation"));
    validate(c);
    return c;
}

PipelineConfig load_config(const fs::path& path) {
    json doc;
    try {
        doc = json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
    }
    auto base = path.parent_path();
    auto config = config_from_json(doc, base.empty() ? fs::path(".") : base);
    config.config_path = path;
    return config;
}

void validate(const PipelineConfig& c) {
    if (c.dataset.empty()) throw ValidationError("dataset path is required");
    if (!fs::is_regular_file(c.dataset))
        throw ValidationError("dataset " + c.dataset.string() + " does not exist");
    if (c.max_rating && (*c.max_rating < 1 || *c.max_rating > 5))
        throw ValidationError("max_rating must be in 1..5");
    if (c.gold && !fs::is_regular_file(*c.gold))
        throw ValidationError("gold file " + c.gold->string() + " does not exist");
    if (c.nli.kind == "http") {
        if (c.nli.endpoint.empty()) throw ValidationError("nli.endpoint is required for the http backend");
        if (c.nli.model_id.empty()) throw ValidationError("nli.model_id is required for the http backend");
        if (c.nli.max_retries < 0) throw ValidationError("nli.max_retries must be >= 0");
    } else if (c.nli.kind != "mock") {
        throw ValidationError("nli.backend must be mock or http, got " + c.nli.kind);
    }
    if (c.llm.kind != "mock" && c.llm.kind != "openai")
        throw ValidationError("llm.backend must be mock or openai, got " + c.llm.kind);
    if (c.llm.mock_yes_rate < 0 || c.llm.mock_yes_rate > 1)
        throw ValidationError("llm.yes_rate must be in [0, 1]");
    if (c.classify.votes < 1 || c.classify.votes % 2 == 0)
        throw ValidationError("votes must be a positive odd number");
    if (c.classify.max_attempts < c.classify.votes)
        throw ValidationError("max_attempts must be at least votes");
    if (c.workers < 1 || c.llm_in_flight < 1)
        throw ValidationError("workers and llm_in_flight must be at least 1");
    if (c.sweep_sets.empty()) throw ValidationError("sweep_sets must not be empty");
    for (const auto& h : c.hypotheses.hypotheses())
        if (h.text.find("{{") != std::string::npos)
            throw ValidationError("hypothesis " + std::to_string(h.hypothesis_id) + " in set " +
                                  c.hypotheses.set_id() + " is still a template placeholder");
    c.prompt.validate();
}

json normalized_config(const PipelineConfig& c) {
    json hypotheses = json::array();
    for (const auto& h : c.hypotheses.hypotheses())
        hypotheses.push_back({h.hypothesis_id, h.concept_id, h.text});
    json sweep = json::array();
    for (const auto& s : c.sweep_sets) sweep.push_back(to_json(s));
    json nli{{"backend", c.nli.kind}};
    if (c.nli.kind == "mock") {
        nli["seed"] = c.nli.seed;
    } else {
        nli["endpoint"] = c.nli.endpoint;
        nli["model_id"] = c.nli.model_id;
    }
    nli["max_premise_tokens"] = c.nli.max_premise_tokens;
    json llm{{"backend", c.llm.kind}};
    if (c.llm.kind == "mock") {
        llm["seed"] = c.llm.seed;
        llm["yes_rate"] = c.llm.mock_yes_rate;
    } else {
        llm["endpoint"] = c.llm.openai.endpoint;
        llm["model"] = c.llm.openai.model;
        llm["max_tokens"] = c.llm.openai.max_tokens;
    }
    return json{
        {"dataset",
         {{"sha256", sha256_hex(read_text(c.dataset))},
          {"format", c.format == InputFormat::csv ? "csv" : "jsonl"},
          {"columns",
           {c.columns.review_id, c.columns.text, c.columns.app, c.columns.rating, c.columns.date,
            c.columns.platform}}}},
        {"preprocess", c.preprocess},
        {"max_rating", c.max_rating ? json(*c.max_rating) : json(nullptr)},
        {"hypotheses", {{"set_id", c.hypotheses.set_id()}, {"entries", hypotheses}}},
        {"heuristic_set", to_json(c.heuristic_set)},
        {"sweep_sets", sweep},
        {"nli", nli},
        {"llm", llm},
        {"prompt", {{"system", c.prompt.system_text}, {"user", c.prompt.user_template}}},
        {"votes", c.classify.votes},
        {"max_attempts", c.classify.max_attempts},
    };
}

std::string config_fingerprint(const PipelineConfig& config) {
    return sha256_hex(normalized_config(config).dump());
}

} // namespace privmine
