#include "privmine/pipeline.hpp"

#include <spdlog/spdlog.h>

#include <chrono>
#include <cstdio>
#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>
#include <unordered_map>
#include <unordered_set>

namespace privmine {

namespace fs = std::filesystem;

int exit_code_for_current_exception() {
    try {
        throw;
    } catch (const StageFailure& e) {
        spdlog::error("{} (checkpoint: {}); rerun the same command to resume", e.what(),
                      e.checkpoint().string());
        return exit_resumable;
    } catch (const ScoringError& e) {
        spdlog::error("{}", e.what());
        return exit_resumable;
    } catch (const ValidationError& e) {
        spdlog::error("{}", e.what());
        return exit_validation;
    } catch (const json::exception& e) {
        spdlog::error("malformed JSON: {}", e.what());
        return exit_validation;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
}

PipelinePaths::PipelinePaths(const fs::path& dir, const fs::path& cache_dir,
                             const std::string& fingerprint)
    : workdir(dir),
      lock(dir / ".lock"),
      ingest_summary(dir / "ingest.json"),
      reviews(dir / "reviews.jsonl"),
      scores(dir / "scores.jsonl"),
      verdicts(dir / "verdicts.jsonl"),
      decisions(dir / "decisions.jsonl"),
      candidates(dir / "candidates.jsonl"),
      funnel_json(dir / "funnel.json"),
      funnel_text(dir / "funnel.txt"),
      sweep_json(dir / "sweep.json"),
      sweep_text(dir / "sweep.txt"),
      timings(dir / "timings.json"),
      nli_cache(cache_dir / "nli-scores.jsonl"),
      classify_checkpoint(dir / "checkpoints" / ("classify-" + fingerprint.substr(0, 16) + ".jsonl")) {}

json to_json(const FunnelReport& report, bool include_durations) {
    const auto& c = report.counts;
    json out{{"fingerprint", report.fingerprint},
             {"counts",
              {{"ingested", c.ingested},
               {"skipped", c.skipped},
               {"rating_filtered", c.rating_filtered},
               {"scored", c.scored},
               {"maybe_privacy", c.maybe_privacy},
               {"llm_privacy", c.llm_privacy},
               {"llm_undecided", c.llm_undecided},
               {"exported", c.exported}}}};
    if (include_durations) {
        json d = json::object();
        for (const auto& [stage, seconds] : report.durations) d[stage] = seconds;
        out["durations_s"] = d;
    }
    if (report.evaluation) out["evaluation"] = *report.evaluation;
    return out;
}

std::string format_funnel(const FunnelReport& report) {
    const auto& c = report.counts;
    const std::pair<const char*, std::size_t> rows[] = {
        {"ingested", c.ingested},         {"rating-filtered", c.rating_filtered},
        {"scored", c.scored},             {"maybe-privacy", c.maybe_privacy},
        {"llm-privacy", c.llm_privacy},   {"exported", c.exported},
    };
    std::string out;
    char line[128];
    for (const auto& [name, count] : rows) {
        std::snprintf(line, sizeof line, "%-16s %10zu\n", name, count);
        out += line;
    }
    if (c.skipped > 0) {
        std::snprintf(line, sizeof line, "(%zu records skipped at ingest)\n", c.skipped);
        out += line;
    }
    if (c.llm_undecided > 0) {
        std::snprintf(line, sizeof line, "(%zu maybe-privacy reviews without a majority)\n",
                      c.llm_undecided);
        out += line;
    }
    out += "fingerprint " + report.fingerprint + "\n";
    return out;
}

WorkdirLock::WorkdirLock(const fs::path& lock_file) {
    m_fd = ::open(lock_file.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644);
    if (m_fd < 0) throw ValidationError("cannot open lock file " + lock_file.string());
    if (::flock(m_fd, LOCK_EX | LOCK_NB) != 0) {
        ::close(m_fd);
        m_fd = -1;
        throw ValidationError("work directory " + lock_file.parent_path().string() +
                              " is in use by another privmine process");
    }
}

WorkdirLock::~WorkdirLock() {
    if (m_fd >= 0) {
        ::flock(m_fd, LOCK_UN);
        ::close(m_fd);
    }
}

ReviewCollection load_review_artifact(const fs::path& path, std::optional<ArtifactHeader>* header) {
    std::vector<Review> reviews;
    const auto stats = read_jsonl(path, [&](const json& value, std::size_t) {
        reviews.push_back(review_from_json(value));
    });
    if (header) *header = stats.header;
    return ReviewCollection(std::move(reviews), path.string());
}

namespace {

class StageTimer {
public:
    StageTimer() : m_start(std::chrono::steady_clock::now()) {}
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - m_start).count();
    }

private:
    std::chrono::steady_clock::time_point m_start;
};

bool is_transport_failure(const MajorityDecision& d) {
    return d.label == DecisionLabel::error && d.error.starts_with("transport failure");
}

} // namespace

Pipeline::Pipeline(PipelineConfig config)
    : m_config(std::move(config)),
      m_fingerprint(config_fingerprint(m_config)),
      m_paths(m_config.workdir, m_config.effective_cache_dir(), m_fingerprint) {
    fs::create_directories(m_paths.workdir);
    m_lock = std::make_unique<WorkdirLock>(m_paths.lock);
}

Pipeline::~Pipeline() = default;

void Pipeline::expect_fingerprint(const std::optional<ArtifactHeader>& h, const std::string& kind,
                                  const fs::path& path) const {
    if (!h) throw ValidationError(path.string() + " has no artifact header");
    if (h->kind != kind)
        throw ValidationError(path.string() + " is a " + h->kind + " artifact, expected " + kind);
    if (h->fingerprint != m_fingerprint)
        throw ValidationError(path.string() + " was produced under config fingerprint " +
                              h->fingerprint.substr(0, 12) + ", current is " +
                              m_fingerprint.substr(0, 12) + "; rerun the upstream stages");
}

void Pipeline::require(const fs::path& artifact, const char* producing_stage) const {
    if (!fs::exists(artifact))
        throw ValidationError("missing upstream artifact " + artifact.string() + "; run `privmine " +
                              producing_stage + "` first");
}

void Pipeline::record_timing(const std::string& stage, double seconds) {
    json timings = json::object();
    if (fs::exists(m_paths.timings)) {
        try {
            timings = json::parse(read_text(m_paths.timings));
        } catch (const json::exception&) {
            timings = json::object();
        }
    }
    timings[stage] = seconds;
    write_text_atomic(m_paths.timings, timings.dump(2) + "\n");
    spdlog::info("{} finished in {:.3f} s", stage, seconds);
}

NliBackend& Pipeline::nli() {
    if (!m_nli) {
        const auto& c = m_config.nli;
        if (c.kind == "mock") {
            m_nli = std::make_shared<MockNliBackend>(c.seed, c.max_premise_tokens);
        } else {
            HttpBackendOptions options;
            options.endpoint = c.endpoint;
            options.model_id = c.model_id;
            options.timeout = c.timeout;
            options.max_retries = c.max_retries;
            options.max_premise_tokens = c.max_premise_tokens;
            options.hypotheses_per_request = c.hypotheses_per_request;
            m_nli = std::make_shared<HttpNliBackend>(options);
        }
    }
    return *m_nli;
}

ChatClient& Pipeline::chat() {
    if (!m_chat) {
        const auto& c = m_config.llm;
        if (c.kind == "mock") {
            m_chat = std::make_shared<MockChatClient>(c.seed, c.mock_yes_rate);
        } else {
            auto options = c.openai;
            const char* key = std::getenv(c.api_key_env.c_str());
            if (!key || !*key)
                throw ValidationError("environment variable " + c.api_key_env +
                                      " must hold the chat API key");
            options.api_key = key;
            m_chat = std::make_shared<OpenAiChatClient>(options);
        }
    }
    return *m_chat;
}

ReviewCollection Pipeline::reviews() const {
    require(m_paths.reviews, "ingest");
    std::optional<ArtifactHeader> h;
    auto collection = load_review_artifact(m_paths.reviews, &h);
    expect_fingerprint(h, "reviews", m_paths.reviews);
    return collection;
}

ScoreMatrix Pipeline::scores() const {
    require(m_paths.scores, "score");
    std::optional<ArtifactHeader> h;
    auto matrix = ScoreMatrix::load(m_paths.scores, &h);
    expect_fingerprint(h, "scores", m_paths.scores);
    return matrix;
}

std::vector<Verdict> Pipeline::verdicts() const {
    require(m_paths.verdicts, "filter");
    std::vector<Verdict> out;
    const auto stats = read_jsonl(m_paths.verdicts, [&](const json& v, std::size_t) {
        out.push_back(verdict_from_json(v));
    });
    expect_fingerprint(stats.header, "verdicts", m_paths.verdicts);
    return out;
}

std::vector<MajorityDecision> Pipeline::decisions() const {
    require(m_paths.decisions, "classify");
    std::vector<MajorityDecision> out;
    const auto stats = read_jsonl(m_paths.decisions, [&](const json& v, std::size_t) {
        out.push_back(decision_from_json(v));
    });
    expect_fingerprint(stats.header, "decisions", m_paths.decisions);
    return out;
}

std::size_t Pipeline::ingest() {
    StageTimer timer;
    std::size_t parsed = 0;
    std::size_t skipped = 0;
    ReviewCollection kept({}, m_config.dataset.string());
    try {
        auto loaded = load_reviews(m_config.dataset, m_config.format, m_config.columns);
        parsed = loaded.collection.size();
        skipped = loaded.skipped;
        kept = std::move(loaded.collection);
    } catch (const EmptyCorpusError& e) {
        spdlog::warn("{}: {}; continuing with an empty corpus", m_config.dataset.string(), e.what());
    }
    if (m_config.max_rating) kept = filter_by_rating(kept, *m_config.max_rating);
    if (m_config.preprocess) kept = preprocess_all(kept);
    save_reviews(kept, m_paths.reviews, header("reviews"));
    write_text_atomic(m_paths.ingest_summary,
                      json{{"fingerprint", m_fingerprint},
                           {"ingested", parsed},
                           {"skipped", skipped},
                           {"rating_filtered", kept.size()}}
                              .dump(2) + "\n");
    record_timing("ingest", timer.seconds());
    return kept.size();
}

std::size_t Pipeline::score() {
    StageTimer timer;
    const auto collection = reviews();
    m_score_stats = {};
    ScoreMatrix matrix;
    if (!collection.empty()) {
        fs::create_directories(m_paths.nli_cache.parent_path());
        ScoreCache cache(m_paths.nli_cache);
        try {
            matrix = score_corpus(collection, m_config.hypotheses, nli(), cache,
                                  ScoreOptions{m_config.workers}, &m_score_stats);
        } catch (const ScoringError& e) {
            throw StageFailure("scoring stopped after " + std::to_string(e.completed()) + " of " +
                                   std::to_string(e.total()) + " pairs: " + e.what(),
                               m_paths.nli_cache);
        }
        spdlog::info("score: {} pairs from cache, {} from {}", m_score_stats.cache_hits,
                     m_score_stats.backend_pairs, nli().model_id());
    }
    matrix.save(m_paths.scores, header("scores"));
    record_timing("score", timer.seconds());
    return matrix.records().size();
}

std::size_t Pipeline::filter() {
    StageTimer timer;
    const auto matrix = scores();
    std::vector<Verdict> out;
    if (matrix.rows() > 0) out = apply_heuristics(matrix, m_config.heuristic_set, m_config.hypotheses);
    std::vector<json> lines;
    std::size_t maybe = 0;
    for (const auto& v : out) {
        if (v.label == VerdictLabel::maybe_privacy) ++maybe;
        lines.push_back(to_json(v));
    }
    write_jsonl_atomic(m_paths.verdicts, header("verdicts"), lines);
    record_timing("filter", timer.seconds());
    return maybe;
}

std::size_t Pipeline::classify() {
    StageTimer timer;
    const auto collection = reviews();
    std::unordered_set<std::string> maybe;
    for (const auto& v : verdicts())
        if (v.label == VerdictLabel::maybe_privacy) maybe.insert(v.review_id);

    std::vector<Review> selected;
    for (const auto& r : collection)
        if (maybe.contains(r.review_id)) selected.push_back(r);

    std::vector<MajorityDecision> out;
    if (!selected.empty()) {
        fs::create_directories(m_paths.classify_checkpoint.parent_path());
        out = classify_batch(selected, chat(), m_config.prompt, m_paths.classify_checkpoint,
                             BatchOptions{m_config.classify, m_config.llm_in_flight});
    }
    const auto failed = std::count_if(out.begin(), out.end(), is_transport_failure);
    if (failed > 0)
        throw StageFailure(std::to_string(failed) + " of " + std::to_string(out.size()) +
                               " reviews hit chat transport failures",
                           m_paths.classify_checkpoint);

    std::vector<json> decision_lines;
    std::vector<Review> privacy;
    for (std::size_t i = 0; i < out.size(); ++i) {
        decision_lines.push_back(to_json(out[i], /*include_latency=*/false));
        if (out[i].label == DecisionLabel::privacy) privacy.push_back(selected[i]);
    }
    write_jsonl_atomic(m_paths.decisions, header("decisions"), decision_lines);
    save_reviews(ReviewCollection(privacy, m_paths.reviews.string()), m_paths.candidates,
                 header("candidates"));
    record_timing("classify", timer.seconds());
    return privacy.size();
}

std::vector<SweepRow> Pipeline::sweep(const std::optional<fs::path>& gold_path) {
    StageTimer timer;
    const auto path = gold_path ? gold_path : m_config.gold;
    if (!path) throw ValidationError("sweep needs gold labels: pass --gold or set gold in the config");
    std::unordered_map<std::string, Label> gold;
    for (const auto& g : read_label_file(*path)) gold.emplace(g.review_id, g.label);

    const auto matrix = scores();
    std::vector<EntailmentRecord> labeled;
    std::size_t unlabeled_rows = 0;
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        if (!gold.contains(matrix.review_ids()[r])) {
            ++unlabeled_rows;
            continue;
        }
        for (std::size_t h = 0; h < matrix.cols(); ++h) labeled.push_back(matrix.at(r, h));
    }
    if (labeled.empty()) throw ValidationError("no scored review has a gold label in " + path->string());
    if (unlabeled_rows > 0) spdlog::warn("sweep: {} scored reviews have no gold label and are left out", unlabeled_rows);

    const auto rows = privmine::sweep(ScoreMatrix::from_records(std::move(labeled)), gold,
                                      m_config.sweep_sets);
    write_text_atomic(m_paths.sweep_json, to_json(rows).dump(2) + "\n");
    write_text_atomic(m_paths.sweep_text, format_sweep_table(rows));
    record_timing("sweep", timer.seconds());
    return rows;
}

FunnelReport Pipeline::report() {
    StageTimer timer;
    FunnelReport report;
    report.fingerprint = m_fingerprint;
    require(m_paths.ingest_summary, "ingest");
    const json summary = json::parse(read_text(m_paths.ingest_summary));
    if (summary.value("fingerprint", std::string{}) != m_fingerprint)
        throw ValidationError(m_paths.ingest_summary.string() +
                              " belongs to another config fingerprint; rerun ingest");
    auto& c = report.counts;
    c.ingested = summary.at("ingested").get<std::size_t>();
    c.skipped = summary.at("skipped").get<std::size_t>();
    c.rating_filtered = reviews().size();
    c.scored = scores().rows();

    const auto verdict_list = verdicts();
    for (const auto& v : verdict_list)
        if (v.label == VerdictLabel::maybe_privacy) ++c.maybe_privacy;
    const auto decision_list = decisions();
    std::unordered_set<std::string> llm_privacy;
    for (const auto& d : decision_list) {
        if (d.label == DecisionLabel::privacy) llm_privacy.insert(d.review_id);
        if (d.label == DecisionLabel::error) ++c.llm_undecided;
    }
    c.llm_privacy = llm_privacy.size();
    require(m_paths.candidates, "classify");
    {
        std::optional<ArtifactHeader> h;
        const auto candidates = load_review_artifact(m_paths.candidates, &h);
        expect_fingerprint(h, "candidates", m_paths.candidates);
        c.exported = candidates.size();
    }

    if (m_config.gold) {
        std::vector<LabeledId> gold;
        std::vector<LabeledId> heuristic_preds;
        std::vector<LabeledId> final_preds;
        std::unordered_map<std::string, Label> gold_by_id;
        for (const auto& g : read_label_file(*m_config.gold)) gold_by_id.emplace(g.review_id, g.label);
        for (const auto& v : verdict_list) {
            auto it = gold_by_id.find(v.review_id);
            if (it == gold_by_id.end()) continue;
            gold.push_back({v.review_id, it->second});
            heuristic_preds.push_back({v.review_id, v.label == VerdictLabel::maybe_privacy
                                                        ? Label::privacy
                                                        : Label::not_privacy});
            final_preds.push_back({v.review_id, llm_privacy.contains(v.review_id) ? Label::privacy
                                                                                   : Label::not_privacy});
        }
        if (gold.empty()) {
            spdlog::warn("gold labels in {} match no scored review", m_config.gold->string());
        } else {
            const auto stage = evaluate_predictions(gold, heuristic_preds);
            const auto end_to_end = evaluate_predictions(gold, final_preds);
            report.evaluation = json{
                {"gold_matched", gold.size()},
                {"heuristic_stage", {{"set", m_config.heuristic_set.set_id()},
                                     {"precision", stage.metrics.privacy.precision},
                                     {"recall", stage.metrics.privacy.recall},
                                     {"f1", stage.metrics.privacy.f1}}},
                {"end_to_end", to_json(end_to_end)}};
        }
    }

    write_text_atomic(m_paths.funnel_json, to_json(report, false).dump(2) + "\n");
    write_text_atomic(m_paths.funnel_text, format_funnel(report));
    record_timing("report", timer.seconds());

    const json timings = json::parse(read_text(m_paths.timings));
    for (const char* stage : {"ingest", "score", "filter", "classify", "report"})
        if (timings.contains(stage)) report.durations.emplace_back(stage, timings.at(stage).get<double>());
    return report;
}

FunnelReport Pipeline::run() {
    ingest();
    score();
    filter();
    classify();
    return report();
}

} // namespace privmine
