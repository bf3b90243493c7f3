// One line per acceptance criterion: PASS, FAIL or SKIP, then a short
// measurement. Exit status is non-zero when any criterion fails.

#include "privmine/corpus.hpp"
#include "privmine/evaluation.hpp"
#include "privmine/heuristic_filter.hpp"
#include "privmine/llm_classifier.hpp"
#include "privmine/nli_engine.hpp"
#include "privmine/pipeline.hpp"
#include "synthetic_corpus.hpp"
#include "test_support.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <sstream>

using namespace privmine;
using namespace testsupport;

namespace {

struct Outcome {
    enum { pass, fail, skip } status = pass;
    std::string detail;
};

Outcome failed(const std::string& why) { return {Outcome::fail, why}; }
Outcome skipped(const std::string& why) { return {Outcome::skip, why}; }

class Clock {
public:
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - m_start).count();
    }

private:
    std::chrono::steady_clock::time_point m_start = std::chrono::steady_clock::now();
};

std::string fmt(double v, int digits = 3) {
    std::ostringstream out;
    out.precision(digits);
    out << std::fixed << v;
    return out.str();
}

bool near(double a, double b, double tol) { return std::fabs(a - b) <= tol; }

// ---- metrics ---------------------------------------------------------------

struct OracleMetrics {
    double tp = 0, fp = 0, fn = 0, tn = 0;
    double p[2]{}, r[2]{}, f[2]{};
    double macro_p = 0, macro_r = 0, macro_f1 = 0;
    double kappa = 0;
};

double safe_div(double a, double b) { return b == 0 ? 0 : a / b; }

OracleMetrics oracle_metrics(const std::vector<Label>& gold, const std::vector<Label>& pred) {
    OracleMetrics m;
    const std::size_t n = gold.size();
    for (std::size_t i = 0; i < n; ++i) {
        const bool g = gold[i] == Label::privacy;
        const bool q = pred[i] == Label::privacy;
        m.tp += g && q;
        m.fp += !g && q;
        m.fn += g && !q;
        m.tn += !g && !q;
    }
    // class 0 = privacy, class 1 = not-privacy (roles of fp/fn swap)
    const double tps[2] = {m.tp, m.tn}, fps[2] = {m.fp, m.fn}, fns[2] = {m.fn, m.fp};
    for (int c = 0; c < 2; ++c) {
        m.p[c] = safe_div(tps[c], tps[c] + fps[c]);
        m.r[c] = safe_div(tps[c], tps[c] + fns[c]);
        m.f[c] = safe_div(2 * m.p[c] * m.r[c], m.p[c] + m.r[c]);
    }
    m.macro_p = (m.p[0] + m.p[1]) / 2;
    m.macro_r = (m.r[0] + m.r[1]) / 2;
    m.macro_f1 = (m.f[0] + m.f[1]) / 2;

    // Chance agreement as the share of all (i, j) cross pairs that agree.
    double agree = 0, cross = 0;
    for (std::size_t i = 0; i < n; ++i) {
        agree += gold[i] == pred[i];
        for (std::size_t j = 0; j < n; ++j) cross += gold[i] == pred[j];
    }
    const double p_o = agree / n;
    const double p_e = cross / (double(n) * n);
    m.kappa = p_e == 1 ? (p_o == 1 ? 1 : 0) : (p_o - p_e) / (1 - p_e);
    return m;
}

Outcome metrics_oracle() {
    Clock clock;
    std::mt19937_64 rng(20260101);
    constexpr double tol = 1e-9;
    for (int trial = 0; trial < 1000; ++trial) {
        const std::size_t n = 1 + rng() % 200;
        const double bias_g = (rng() % 101) / 100.0, bias_p = (rng() % 101) / 100.0;
        std::vector<Label> gold(n), pred(n);
        for (std::size_t i = 0; i < n; ++i) {
            gold[i] = (rng() % 1000) < bias_g * 1000 ? Label::privacy : Label::not_privacy;
            pred[i] = (rng() % 1000) < bias_p * 1000 ? Label::privacy : Label::not_privacy;
        }
        const auto o = oracle_metrics(gold, pred);
        const auto cm = confusion(gold, pred);
        if (cm.tp != o.tp || cm.fp != o.fp || cm.fn != o.fn || cm.tn != o.tn)
            return failed("confusion mismatch on trial " + std::to_string(trial));
        const auto m = macro_prf(cm);
        const ClassMetrics* classes[2] = {&m.privacy, &m.not_privacy};
        for (int c = 0; c < 2; ++c)
            if (!near(classes[c]->precision, o.p[c], tol) || !near(classes[c]->recall, o.r[c], tol) ||
                !near(classes[c]->f1, o.f[c], tol))
                return failed("per-class metrics mismatch on trial " + std::to_string(trial));
        if (!near(m.macro_p, o.macro_p, tol) || !near(m.macro_r, o.macro_r, tol) ||
            !near(m.macro_f1, o.macro_f1, tol))
            return failed("macro metrics mismatch on trial " + std::to_string(trial));
        const auto k = cohens_kappa(gold, pred).kappa;
        if (!near(k, o.kappa, tol))
            return failed("kappa " + std::to_string(k) + " vs oracle " + std::to_string(o.kappa) +
                          " on trial " + std::to_string(trial));
    }
    const double s = clock.seconds();
    if (s >= 10) return failed("took " + fmt(s) + " s");
    return {Outcome::pass, "1000 trials in " + fmt(s) + " s"};
}

Outcome kappa_fixed_points() {
    const std::vector<Label> a = {Label::privacy, Label::not_privacy, Label::privacy, Label::not_privacy};
    const std::vector<Label> flipped = {Label::not_privacy, Label::privacy, Label::not_privacy,
                                        Label::privacy};
    if (cohens_kappa(a, a).kappa != 1.0) return failed("identical vectors");
    if (!near(cohens_kappa(a, flipped).kappa, -1.0, 1e-12)) return failed("full disagreement");

    // [[40, 10], [5, 45]]: rows are rater A, columns rater B.
    std::vector<Label> ra, rb;
    auto add = [&](Label x, Label y, int count) {
        for (int i = 0; i < count; ++i) {
            ra.push_back(x);
            rb.push_back(y);
        }
    };
    add(Label::privacy, Label::privacy, 40);
    add(Label::privacy, Label::not_privacy, 10);
    add(Label::not_privacy, Label::privacy, 5);
    add(Label::not_privacy, Label::not_privacy, 45);
    // p_o = 0.85, p_e = 0.5*0.45 + 0.5*0.55 = 0.5
    const double k = cohens_kappa(ra, rb).kappa;
    if (!near(k, 0.70, 1e-12)) return failed("2x2 table gave " + std::to_string(k));
    if (interpret_kappa(0.71) != AgreementBand::substantial) return failed("0.71 is not substantial");
    return {Outcome::pass, "1.0, -1.0, 0.70, 0.71->substantial"};
}

// ---- heuristics ------------------------------------------------------------

const std::vector<std::vector<std::pair<double, int>>> kSets = {
    {{0.90, 1}, {0.80, 3}, {0.75, 5}},
    {{0.85, 1}, {0.75, 3}, {0.70, 5}},
    {{0.80, 1}, {0.70, 3}, {0.65, 5}},
    {{0.75, 1}, {0.65, 3}, {0.60, 5}},
};

bool nested_loop_selects(const std::vector<double>& row, const std::vector<std::pair<double, int>>& set) {
    for (const auto& [threshold, need] : set) {
        int hits = 0;
        for (double p : row)
            if (p > threshold) ++hits;
        if (hits >= need) return true;
    }
    return false;
}

ScoreMatrix matrix_of(const std::vector<std::vector<double>>& rows, std::size_t cols) {
    std::vector<std::string> ids;
    std::vector<int> hyp;
    std::vector<EntailmentRecord> records;
    for (std::size_t h = 0; h < cols; ++h) hyp.push_back(static_cast<int>(h + 1));
    for (std::size_t r = 0; r < rows.size(); ++r) {
        ids.push_back("r" + std::to_string(r));
        for (std::size_t h = 0; h < cols; ++h) {
            const double e = rows[r][h];
            records.push_back({ids.back(), hyp[h], {e, (1 - e) / 2, (1 - e) / 2}, "m"});
        }
    }
    return ScoreMatrix(ids, hyp, records);
}

Outcome heuristic_engine() {
    std::mt19937_64 rng(77);
    const auto sets = builtin_heuristic_sets();
    const double edges[] = {0.60, 0.65, 0.70, 0.75, 0.80, 0.85, 0.90};
    std::size_t verdicts = 0;
    for (int trial = 0; trial < 500; ++trial) {
        const std::size_t rows = 1 + rng() % 50;
        const std::size_t cols = 1 + rng() % 17;
        std::vector<std::vector<double>> data(rows, std::vector<double>(cols));
        std::uniform_real_distribution<double> u(0.0, 1.0);
        for (auto& row : data)
            for (auto& v : row) v = rng() % 5 == 0 ? edges[rng() % 7] : (rng() % 2 ? u(rng) : 0.55 + 0.4 * u(rng));
        const auto m = matrix_of(data, cols);
        std::vector<std::vector<bool>> selected(4);
        for (int s = 0; s < 4; ++s) {
            const auto out = apply_heuristics(m, sets[s]);
            for (std::size_t r = 0; r < rows; ++r) {
                const bool want = nested_loop_selects(data[r], kSets[s]);
                if ((out[r].label == VerdictLabel::maybe_privacy) != want)
                    return failed("set" + std::to_string(s + 1) + " row " + std::to_string(r) +
                                  " of trial " + std::to_string(trial));
                selected[s].push_back(want);
                ++verdicts;
            }
        }
        for (int s = 0; s + 1 < 4; ++s)
            for (std::size_t r = 0; r < rows; ++r)
                if (selected[s][r] && !selected[s + 1][r])
                    return failed("nesting broken between set" + std::to_string(s + 1) + " and set" +
                                  std::to_string(s + 2));
    }
    return {Outcome::pass, std::to_string(verdicts) + " verdicts, nesting holds"};
}

// ---- majority vote ---------------------------------------------------------

Review sample_review() {
    Review r;
    r.review_id = "x1";
    r.raw_text = "the app shared my therapy notes with advertisers";
    return r;
}

Outcome majority_vote() {
    const auto prompt = PromptTemplate::defaults();
    const auto review = sample_review();
    for (int mask = 0; mask < 32; ++mask) {
        std::deque<std::string> script;
        int yes = 0;
        for (int b = 0; b < 5; ++b) {
            const bool y = mask >> b & 1;
            yes += y;
            script.push_back(y ? "Yes" : "No");
        }
        ScriptedChatClient client(script);
        const auto d = classify_review(review, client, prompt);
        const auto want = yes >= 3 ? DecisionLabel::privacy : DecisionLabel::not_privacy;
        if (d.label != want || d.yes_count != yes || client.calls() != 5)
            return failed("pattern " + std::to_string(mask));
    }

    {
        ScriptedChatClient client({"Maybe?", "Yes", "I cannot say", "no.", "YES", "Yes!", "No"});
        const auto d = classify_review(review, client, prompt);
        if (d.label != DecisionLabel::privacy || client.calls() != 7 || d.valid_vote_count != 5)
            return failed("re-ask transcript");
    }
    {
        std::deque<std::string> junk(12, "perhaps");
        ScriptedChatClient client(junk);
        const auto d = classify_review(review, client, prompt);
        if (d.label != DecisionLabel::error || client.calls() != 10) return failed("give-up transcript");
    }
    {
        ScriptedChatClient client({"Yes", "!transport"});
        const auto d = classify_review(review, client, prompt);
        if (d.label != DecisionLabel::error || d.error.find("transport") == std::string::npos)
            return failed("transport transcript");
    }

    std::mt19937 rng(5);
    std::vector<std::string> base = {"Yes", "no", "Yes", "???", "No", "yes."};
    std::optional<std::pair<DecisionLabel, int>> reference;
    for (int i = 0; i < 100; ++i) {
        std::shuffle(base.begin(), base.end(), rng);
        ScriptedChatClient client(std::deque<std::string>(base.begin(), base.end()));
        const auto d = classify_review(review, client, prompt);
        const std::pair<DecisionLabel, int> got{d.label, d.yes_count};
        if (!reference) reference = got;
        if (got != *reference) return failed("shuffle " + std::to_string(i) + " changed the decision");
    }
    if (reference->first != DecisionLabel::privacy || reference->second != 3)
        return failed("shuffled transcript should be 3 yes of 5");
    return {Outcome::pass, "32 patterns, 3 transcripts, 100 shuffles"};
}

// ---- batch scoring ---------------------------------------------------------

ReviewCollection synthetic_reviews(std::size_t n) {
    std::vector<Review> reviews;
    for (std::size_t i = 0; i < n; ++i) {
        Review r;
        r.review_id = "s" + std::to_string(i);
        r.raw_text = "synthetic review number " + std::to_string(i) + " about app data";
        reviews.push_back(r);
    }
    return ReviewCollection(std::move(reviews), "synthetic");
}

Outcome batch_scoring() {
    const auto dir = fresh_dir("accept-batch");
    json set_doc = {{"set_id", "five"},
                    {"concepts", {{{"concept_id", "c"}, {"name", "c"}, {"description", ""}}}},
                    {"hypotheses", json::array()}};
    for (int h = 1; h <= 5; ++h)
        set_doc["hypotheses"].push_back({{"id", h}, {"concept", "c"}, {"text", "statement " + std::to_string(h)}});
    const auto five = hypothesis_set_from_json(set_doc);
    const auto small = synthetic_reviews(3);

    std::string cold_bytes, warm_bytes;
    {
        MockNliBackend backend(9);
        ScoreCache cache(dir / "cache.jsonl");
        score_corpus(small, five, backend, cache).save(dir / "cold.jsonl");
        if (backend.pair_calls() != 15) return failed("cold run made " + std::to_string(backend.pair_calls()) + " calls");
        cold_bytes = read_text(dir / "cold.jsonl");
    }
    {
        MockNliBackend backend(9);
        ScoreCache cache(dir / "cache.jsonl");
        score_corpus(small, five, backend, cache).save(dir / "warm.jsonl");
        if (backend.pair_calls() != 0) return failed("warm run made " + std::to_string(backend.pair_calls()) + " calls");
        warm_bytes = read_text(dir / "warm.jsonl");
    }
    if (cold_bytes != warm_bytes) return failed("warm matrix differs from cold");

    Clock clock;
    MockNliBackend backend(1);
    ScoreCache memory;
    const auto big = score_corpus(synthetic_reviews(1376), builtin_mh_set(), backend, memory);
    const double s = clock.seconds();
    if (big.records().size() != 23392)
        return failed(std::to_string(big.records().size()) + " records instead of 23392");
    if (s >= 60) return failed("1376x17 took " + fmt(s) + " s");
    return {Outcome::pass, "warm run 0 calls, 23392 records in " + fmt(s) + " s"};
}

// ---- end to end ------------------------------------------------------------

Outcome end_to_end() {
    const auto dir = fresh_dir("accept-e2e");
    const auto corpus = write_synthetic_corpus(dir, 200, 40, 2026);
    const auto config = synthetic_config(corpus, dir / "work");

    Clock clock;
    FunnelReport first;
    std::map<std::string, std::string> files;
    std::set<std::string> maybe, exported;
    {
        Pipeline p(config);
        p.set_nli_backend(std::make_shared<PlantedNliBackend>(42, kPlantMarker));
        p.set_chat_client(std::make_shared<MockChatClient>(42, 0.6));
        first = p.run();
        read_jsonl(p.paths().verdicts, [&](const json& v, std::size_t) {
            if (v.at("label") == "maybe-privacy") maybe.insert(v.at("review_id").get<std::string>());
        });
        read_jsonl(p.paths().candidates, [&](const json& r, std::size_t) {
            exported.insert(r.at("review_id").get<std::string>());
        });
        if (maybe != oracle_maybe_privacy(p.paths().scores)) return failed("maybe-privacy set differs from oracle");
        files = snapshot_outputs(config.workdir);
    }
    const double cold = clock.seconds();
    const auto& c = first.counts;
    const std::size_t chain[] = {c.ingested, c.rating_filtered, c.scored, c.maybe_privacy, c.llm_privacy, c.exported};
    for (std::size_t i = 0; i + 1 < std::size(chain); ++i)
        if (chain[i + 1] > chain[i]) return failed("funnel grows at step " + std::to_string(i + 1));
    if (c.ingested != 200) return failed("ingested " + std::to_string(c.ingested));
    for (const auto& id : corpus.planted)
        if (!maybe.contains(id)) return failed("planted review " + id + " not selected");
    if (!std::includes(maybe.begin(), maybe.end(), exported.begin(), exported.end()))
        return failed("llm-privacy is not a subset of maybe-privacy");

    {
        Pipeline p(config);
        auto nli = std::make_shared<PlantedNliBackend>(42, kPlantMarker);
        auto chat = std::make_shared<MockChatClient>(42, 0.6);
        p.set_nli_backend(nli);
        p.set_chat_client(chat);
        p.run();
        if (nli->pair_calls() != 0 || chat->calls() != 0) return failed("rerun called a backend");
    }
    if (snapshot_outputs(config.workdir) != files) return failed("rerun outputs differ");
    if (cold >= 10) return failed("cold run took " + fmt(cold) + " s");
    return {Outcome::pass, "200 -> " + std::to_string(c.maybe_privacy) + " -> " +
                               std::to_string(c.llm_privacy) + ", cold run " + fmt(cold) + " s"};
}

// ---- preprocessing ---------------------------------------------------------

void append_utf8(std::string& out, char32_t c) {
    if (c < 0x80) {
        out.push_back(static_cast<char>(c));
    } else if (c < 0x800) {
        out.push_back(static_cast<char>(0xC0 | (c >> 6)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else if (c < 0x10000) {
        out.push_back(static_cast<char>(0xE0 | (c >> 12)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    } else {
        out.push_back(static_cast<char>(0xF0 | (c >> 18)));
        out.push_back(static_cast<char>(0x80 | ((c >> 12) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | ((c >> 6) & 0x3F)));
        out.push_back(static_cast<char>(0x80 | (c & 0x3F)));
    }
}

Outcome preprocess_property() {
    std::mt19937_64 rng(10000);
    for (int i = 0; i < 10000; ++i) {
        std::string s;
        const int len = static_cast<int>(rng() % 40);
        for (int k = 0; k < len; ++k) {
            char32_t c;
            switch (rng() % 4) {
                case 0: c = static_cast<char32_t>(rng() % 0x80); break;
                case 1: c = static_cast<char32_t>(0x80 + rng() % 0x780); break;
                case 2: c = static_cast<char32_t>(rng() % 0x10000); break;
                default: c = static_cast<char32_t>(rng() % 0x110000); break;
            }
            if (c >= 0xD800 && c <= 0xDFFF) c = U'?';
            append_utf8(s, c);
        }
        const auto once = preprocess(s);
        for (char ch : once)
            if (!((ch >= 'a' && ch <= 'z') || (ch >= '0' && ch <= '9') || ch == '\'' || ch == ' '))
                return failed("output character outside [a-z0-9' ] for input #" + std::to_string(i));
        if (preprocess(once) != once) return failed("not idempotent for input #" + std::to_string(i));
    }
    return {Outcome::pass, "10000 strings"};
}

// ---- optional integration --------------------------------------------------

// A config over the labeled gold set with real backends; its funnel report
// carries the evaluation block.
Outcome integration_gold() {
    const char* path = std::getenv("PRIVMINE_INTEGRATION_GOLD_CONFIG");
    if (!path || !*path) return skipped("set PRIVMINE_INTEGRATION_GOLD_CONFIG");
    Pipeline p(load_config(path));
    const auto report = p.run();
    if (!report.evaluation) return failed("config has no gold labels");
    const auto& stage = report.evaluation->at("heuristic_stage");
    const auto& e2e = report.evaluation->at("end_to_end");
    const double sp = stage.at("precision"), sr = stage.at("recall"), sf = stage.at("f1");
    const double macro_f1 = e2e.at("metrics").at("macro_f1"), kappa = e2e.at("agreement").at("kappa");
    const std::string detail = "stage P " + fmt(sp, 2) + " R " + fmt(sr, 2) + " F1 " + fmt(sf, 2) +
                               ", macro F1 " + fmt(macro_f1, 2) + ", kappa " + fmt(kappa, 2);
    const bool ok = near(sp, 0.40, 0.03) && near(sr, 0.86, 0.03) && near(sf, 0.55, 0.03) &&
                    near(macro_f1, 0.85, 0.05) && near(kappa, 0.71, 0.05);
    return ok ? Outcome{Outcome::pass, detail} : failed(detail);
}

// A config over the full unlabeled corpus.
Outcome integration_funnel() {
    const char* path = std::getenv("PRIVMINE_INTEGRATION_FUNNEL_CONFIG");
    if (!path || !*path) return skipped("set PRIVMINE_INTEGRATION_FUNNEL_CONFIG");
    Pipeline p(load_config(path));
    const auto c = p.run().counts;
    const std::string detail = std::to_string(c.maybe_privacy) + " maybe-privacy, " +
                               std::to_string(c.llm_privacy) + " llm-privacy";
    const bool ok = near(double(c.maybe_privacy), 4591, 0.05 * 4591) && near(double(c.llm_privacy), 1155, 0.05 * 1155);
    return ok ? Outcome{Outcome::pass, detail} : failed(detail);
}

} // namespace

int main() {
    spdlog::set_level(spdlog::level::warn);
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"metrics-oracle-equivalence", metrics_oracle},
        {"kappa-fixed-points", kappa_fixed_points},
        {"heuristic-engine-oracle-and-nesting", heuristic_engine},
        {"majority-vote", majority_vote},
        {"batch-scoring-cache-and-scale", batch_scoring},
        {"end-to-end-mock-pipeline", end_to_end},
        {"preprocess-idempotence-and-alphabet", preprocess_property},
        {"integration-gold-set-metrics", integration_gold},
        {"integration-full-corpus-funnel", integration_funnel},
    };
    int failures = 0;
    for (const auto& [name, run] : criteria) {
        Outcome outcome;
        try {
            outcome = run();
        } catch (const std::exception& e) {
            outcome = failed(std::string("threw: ") + e.what());
        }
        const char* tag = outcome.status == Outcome::pass ? "PASS" : outcome.status == Outcome::fail ? "FAIL" : "SKIP";
        failures += outcome.status == Outcome::fail;
        std::printf("%s %s: %s\n", tag, name, outcome.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
