// privmine: command-line driver for the review-mining pipeline.
#include "privmine/annotation_http.hpp"
#include "privmine/config.hpp"
#include "privmine/evaluation.hpp"
#include "privmine/pipeline.hpp"

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <iostream>

namespace fs = std::filesystem;
using namespace privmine;

namespace {

void print_stage(const std::string& what) { std::cout << what << "\n"; }

SessionSpec session_spec_from(const ReviewCollection& reviews, const AnnotationConfig& a,
                              const HypothesisSet& hypotheses) {
    SessionSpec spec;
    spec.session_id = a.session_id;
    for (const auto& r : reviews) spec.reviews.push_back({r.review_id, r.raw_text, r.app, r.rating});
    spec.annotators = a.annotators;
    spec.lead = a.lead.empty() && !a.annotators.empty() ? a.annotators.front() : a.lead;
    spec.redundancy = a.redundancy;
    spec.guideline_text = a.guideline_text;
    spec.guidelines = to_json(hypotheses);
    return spec;
}

int serve(const std::optional<PipelineConfig>& config, std::optional<fs::path> reviews_path,
          std::optional<fs::path> state_dir, std::vector<std::string> annotators,
          std::string lead, std::optional<int> port, std::optional<std::string> host,
          std::optional<std::string> session_id) {
    AnnotationConfig a = config ? config->annotation : AnnotationConfig{};
    if (!annotators.empty()) a.annotators = annotators;
    if (!lead.empty()) a.lead = lead;
    if (port) a.port = *port;
    if (host) a.host = *host;
    if (session_id) a.session_id = *session_id;
    if (!reviews_path) {
        if (!config) throw ValidationError("annotate-serve needs --config or --reviews");
        reviews_path = config->workdir / "candidates.jsonl";
    }
    if (!state_dir) state_dir = (config ? config->workdir : fs::path(".")) / "annotation";
    fs::create_directories(*state_dir);

    const fs::path event_log = *state_dir / (a.session_id + ".events.jsonl");
    WorkdirLock lock(*state_dir / (a.session_id + ".lock"));
    std::unique_ptr<AnnotationSession> session;
    if (fs::exists(event_log) && fs::file_size(event_log) > 0) {
        session = AnnotationSession::replay(event_log);
        spdlog::info("resumed session {} from {}", session->id(), event_log.string());
    } else {
        if (!fs::exists(*reviews_path))
            throw ValidationError("missing reviews file " + reviews_path->string() +
                                  "; run `privmine classify` first or pass --reviews");
        const auto reviews = load_review_artifact(*reviews_path);
        const auto hypotheses = config ? config->hypotheses : builtin_mh_set();
        session = AnnotationSession::create(session_spec_from(reviews, a, hypotheses), event_log);
        spdlog::info("created session {} with {} reviews; events in {}", session->id(),
                     session->spec().reviews.size(), event_log.string());
    }
    SessionRegistry registry;
    registry.add(std::move(session));
    AnnotationServer server(registry);
    spdlog::info("annotation API listening on http://{}:{}/sessions/{}/", a.host, a.port, a.session_id);
    server.run(a.host, a.port);
    return exit_ok;
}

} // namespace

int main(int argc, char** argv) {
    spdlog::set_default_logger(spdlog::stderr_color_mt("privmine"));
    spdlog::set_pattern("%^[%l]%$ %v");

    CLI::App app{"Mine privacy-relevant app reviews with NLI filtering and a chat-model vote"};
    app.require_subcommand(1);
    app.fallthrough();
    std::string config_path;
    bool verbose = false;
    bool quiet = false;
    app.add_option("-c,--config", config_path, "Pipeline config (JSON)");
    app.add_flag("-v,--verbose", verbose, "Debug logging");
    app.add_flag("-q,--quiet", quiet, "Only warnings and errors");

    auto* ingest = app.add_subcommand("ingest", "Load, filter by rating and preprocess the dataset");
    auto* score = app.add_subcommand("score", "Score every review against every hypothesis");
    auto* filter = app.add_subcommand("filter", "Apply the configured heuristic set");
    auto* classify = app.add_subcommand("classify", "Majority-vote chat classification of maybe-privacy reviews");
    auto* report = app.add_subcommand("report", "Write the funnel report");
    auto* run = app.add_subcommand("run", "ingest, score, filter, classify and report");

    auto* sweep = app.add_subcommand("sweep", "Compare heuristic sets on scored, gold-labeled reviews");
    std::optional<std::string> sweep_gold;
    sweep->add_option("--gold", sweep_gold, "Gold labels JSONL {review_id, label}");

    auto* evaluate = app.add_subcommand("evaluate", "Score prediction files against gold labels");
    std::string gold_path;
    std::vector<std::string> pred_paths;
    std::vector<std::string> names;
    std::string eval_json;
    evaluate->add_option("gold", gold_path, "Gold labels JSONL")->required()->check(CLI::ExistingFile);
    evaluate->add_option("predictions", pred_paths, "Prediction JSONL files")->required()->check(CLI::ExistingFile);
    evaluate->add_option("--name", names, "Row names, one per prediction file");
    evaluate->add_option("--json", eval_json, "Also write the results as JSON here");

    auto* serve_cmd = app.add_subcommand("annotate-serve", "Serve the annotation API");
    std::optional<std::string> reviews_path;
    std::optional<std::string> state_dir;
    std::vector<std::string> annotators;
    std::string lead;
    std::optional<int> port;
    std::optional<std::string> host;
    std::optional<std::string> session_id;
    serve_cmd->add_option("--reviews", reviews_path, "Reviews JSONL (default: <workdir>/candidates.jsonl)");
    serve_cmd->add_option("--state-dir", state_dir, "Where the session event log lives");
    serve_cmd->add_option("--annotators", annotators, "Annotator ids")->delimiter(',');
    serve_cmd->add_option("--lead", lead, "Lead annotator (default: first annotator)");
    serve_cmd->add_option("--port", port);
    serve_cmd->add_option("--host", host);
    serve_cmd->add_option("--session", session_id);

    auto* dump = app.add_subcommand("dump-hypotheses", "Print a hypothesis set as JSON");
    std::string dump_set = "builtin-mh-17";
    dump->add_option("set", dump_set, "builtin-mh-17 or a set file");

    try {
        app.parse(argc, argv);
    } catch (const CLI::Success& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return exit_validation;
    }
    spdlog::set_level(verbose ? spdlog::level::debug : quiet ? spdlog::level::warn : spdlog::level::info);

    try {
        if (*dump) {
            std::cout << to_json(resolve_hypothesis_set(dump_set)).dump(2) << "\n";
            return exit_ok;
        }
        if (*evaluate) {
            const auto gold = read_label_file(gold_path);
            std::vector<std::pair<std::string, EvaluationResult>> rows;
            json out = json::array();
            for (std::size_t i = 0; i < pred_paths.size(); ++i) {
                const std::string name = i < names.size() ? names[i] : fs::path(pred_paths[i]).stem().string();
                const auto preds = read_label_file(pred_paths[i]);
                rows.emplace_back(name, evaluate_predictions(gold, preds));
                json row = to_json(rows.back().second);
                row["model"] = name;
                out.push_back(row);
            }
            std::cout << format_metrics_table(rows);
            if (!eval_json.empty()) write_text_atomic(eval_json, out.dump(2) + "\n");
            return exit_ok;
        }

        std::optional<PipelineConfig> config;
        if (!config_path.empty()) config = load_config(config_path);
        if (*serve_cmd) {
            std::optional<fs::path> rp, sd;
            if (reviews_path) rp = *reviews_path;
            if (state_dir) sd = *state_dir;
            return serve(config, rp, sd, annotators, lead, port, host, session_id);
        }
        if (!config) throw ValidationError("--config is required for this subcommand");

        Pipeline pipeline(*config);
        if (*ingest) {
            print_stage("reviews kept: " + std::to_string(pipeline.ingest()));
        } else if (*score) {
            const auto n = pipeline.score();
            const auto& s = pipeline.last_score_stats();
            print_stage("records: " + std::to_string(n) + " (cache hits " + std::to_string(s.cache_hits) +
                        ", backend pairs " + std::to_string(s.backend_pairs) + ")");
        } else if (*filter) {
            print_stage("maybe-privacy: " + std::to_string(pipeline.filter()));
        } else if (*classify) {
            print_stage("llm-privacy: " + std::to_string(pipeline.classify()));
        } else if (*sweep) {
            std::optional<fs::path> g;
            if (sweep_gold) g = *sweep_gold;
            std::cout << format_sweep_table(pipeline.sweep(g));
        } else if (*report || *run) {
            const auto r = *run ? pipeline.run() : pipeline.report();
            std::cout << format_funnel(r);
            for (const auto& [stage, seconds] : r.durations)
                std::cout << "  " << stage << ": " << seconds << " s\n";
            if (r.evaluation) std::cout << r.evaluation->dump(2) << "\n";
        }
        return exit_ok;
    } catch (...) {
        return exit_code_for_current_exception();
    }
}
