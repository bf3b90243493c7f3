#include "privmine/heuristic_filter.hpp"

#include "privmine/evaluation.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

namespace privmine {

HeuristicSet::HeuristicSet(std::string set_id, std::vector<HeuristicClause> clauses)
    : m_set_id(std::move(set_id)), m_clauses(std::move(clauses)) {
    if (m_clauses.empty()) throw ValidationError("heuristic set " + m_set_id + " has no clauses");
    for (const auto& c : m_clauses) {
        if (!(c.threshold >= 0.0 && c.threshold <= 1.0))
            throw ValidationError("heuristic set " + m_set_id + ": threshold " +
                                  std::to_string(c.threshold) + " outside [0, 1]");
        if (c.min_count < 1)
            throw ValidationError("heuristic set " + m_set_id + ": min_count " +
                                  std::to_string(c.min_count) + " below 1");
    }
}

std::vector<HeuristicSet> builtin_heuristic_sets() {
    return {
        HeuristicSet("set1", {{0.90, 1}, {0.80, 3}, {0.75, 5}}),
        HeuristicSet("set2", {{0.85, 1}, {0.75, 3}, {0.70, 5}}),
        HeuristicSet("set3", {{0.80, 1}, {0.70, 3}, {0.65, 5}}),
        HeuristicSet("set4", {{0.75, 1}, {0.65, 3}, {0.60, 5}}),
    };
}

HeuristicSet builtin_heuristic_set(std::string_view name) {
    std::string digits;
    for (char c : name)
        if (std::isdigit(static_cast<unsigned char>(c))) digits += c;
    std::string letters;
    for (char c : name)
        if (std::isalpha(static_cast<unsigned char>(c)))
            letters += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    if ((letters.empty() || letters == "set") && digits.size() == 1 && digits[0] >= '1' &&
        digits[0] <= '4')
        return builtin_heuristic_sets()[static_cast<std::size_t>(digits[0] - '1')];
    throw ValidationError("unknown heuristic set '" + std::string(name) + "' (expected set1..set4)");
}

HeuristicSet heuristic_set_from_json(const json& value) {
    if (value.is_string()) return builtin_heuristic_set(value.get<std::string>());
    if (!value.is_object() || !value.contains("clauses") || !value.at("clauses").is_array())
        throw ValidationError("heuristic set must be a name or {set_id, clauses[]}");
    std::vector<HeuristicClause> clauses;
    for (const auto& c : value.at("clauses")) {
        if (!c.contains("threshold") || !c.contains("min_count"))
            throw ValidationError("heuristic clause needs threshold and min_count: " + c.dump());
        clauses.push_back({c.at("threshold").get<double>(), c.at("min_count").get<int>()});
    }
    return HeuristicSet(value.value("set_id", std::string{"custom"}), std::move(clauses));
}

json to_json(const HeuristicSet& set) {
    json clauses = json::array();
    for (const auto& c : set.clauses())
        clauses.push_back({{"threshold", c.threshold}, {"min_count", c.min_count}});
    return json{{"set_id", set.set_id()}, {"clauses", clauses}};
}

int count_entailments(std::span<const double> row, double threshold) {
    return static_cast<int>(std::count_if(row.begin(), row.end(),
                                          [threshold](double s) { return s > threshold; }));
}

std::string_view to_string(VerdictLabel label) {
    return label == VerdictLabel::maybe_privacy ? "maybe-privacy" : "maybe-not-privacy";
}

VerdictLabel parse_verdict_label(std::string_view text) {
    if (text == "maybe-privacy") return VerdictLabel::maybe_privacy;
    if (text == "maybe-not-privacy") return VerdictLabel::maybe_not_privacy;
    throw ValidationError("unknown verdict label '" + std::string(text) + "'");
}

json to_json(const Verdict& verdict) {
    json satisfied = json::array();
    for (const auto& c : verdict.satisfied_clauses)
        satisfied.push_back({{"threshold", c.threshold}, {"min_count", c.min_count}});
    json counts = json::array();
    for (const auto& [t, n] : verdict.entail_counts) counts.push_back({{"threshold", t}, {"count", n}});
    return json{{"review_id", verdict.review_id},
                {"label", to_string(verdict.label)},
                {"satisfied_clauses", satisfied},
                {"entail_counts", counts}};
}

Verdict verdict_from_json(const json& value) {
    Verdict v;
    v.review_id = value.at("review_id").get<std::string>();
    v.label = parse_verdict_label(value.at("label").get<std::string>());
    for (const auto& c : value.value("satisfied_clauses", json::array()))
        v.satisfied_clauses.push_back({c.at("threshold").get<double>(), c.at("min_count").get<int>()});
    for (const auto& c : value.value("entail_counts", json::array()))
        v.entail_counts.emplace_back(c.at("threshold").get<double>(), c.at("count").get<int>());
    return v;
}

std::vector<Verdict> apply_heuristics(const ScoreMatrix& matrix, const HeuristicSet& set) {
    std::vector<double> thresholds;
    for (const auto& c : set.clauses())
        if (std::find(thresholds.begin(), thresholds.end(), c.threshold) == thresholds.end())
            thresholds.push_back(c.threshold);

    std::vector<Verdict> verdicts;
    verdicts.reserve(matrix.rows());
    for (std::size_t r = 0; r < matrix.rows(); ++r) {
        const auto row = matrix.entailment_row(r);
        Verdict v;
        v.review_id = matrix.review_ids()[r];
        for (double t : thresholds) v.entail_counts.emplace_back(t, count_entailments(row, t));
        for (const auto& clause : set.clauses()) {
            const auto it = std::find_if(v.entail_counts.begin(), v.entail_counts.end(),
                                         [&](const auto& p) { return p.first == clause.threshold; });
            if (it->second >= clause.min_count) v.satisfied_clauses.push_back(clause);
        }
        v.label = v.satisfied_clauses.empty() ? VerdictLabel::maybe_not_privacy
                                              : VerdictLabel::maybe_privacy;
        verdicts.push_back(std::move(v));
    }
    return verdicts;
}

std::vector<Verdict> apply_heuristics(const ScoreMatrix& matrix, const HeuristicSet& set,
                                      const HypothesisSet& hypotheses) {
    const auto expected = hypotheses.ids();
    const auto actual = matrix.hypothesis_ids();
    if (matrix.rows() > 0 && !std::equal(expected.begin(), expected.end(), actual.begin(), actual.end()))
        throw ValidationError("score matrix columns do not match hypothesis set " +
                              hypotheses.set_id() + " (" + std::to_string(actual.size()) +
                              " columns, " + std::to_string(expected.size()) + " hypotheses)");
    return apply_heuristics(matrix, set);
}

std::vector<SweepRow> sweep(const ScoreMatrix& matrix,
                            const std::unordered_map<std::string, Label>& gold,
                            std::span<const HeuristicSet> sets) {
    std::vector<Label> gold_labels;
    gold_labels.reserve(matrix.rows());
    for (const auto& id : matrix.review_ids()) {
        auto it = gold.find(id);
        if (it == gold.end()) throw ValidationError("missing gold label for review " + id);
        gold_labels.push_back(it->second);
    }

    std::vector<SweepRow> rows;
    rows.reserve(sets.size());
    for (const auto& set : sets) {
        const auto verdicts = apply_heuristics(matrix, set);
        std::vector<Label> predicted;
        predicted.reserve(verdicts.size());
        for (const auto& v : verdicts)
            predicted.push_back(v.label == VerdictLabel::maybe_privacy ? Label::privacy
                                                                       : Label::not_privacy);
        SweepRow row;
        row.set_id = set.set_id();
        row.n_selected = static_cast<std::size_t>(
            std::count(predicted.begin(), predicted.end(), Label::privacy));
        if (!predicted.empty()) {
            const auto m = confusion(gold_labels, predicted);
            const auto c = class_metrics(m.tp, m.fp, m.fn);
            row.precision = c.precision;
            row.recall = c.recall;
            row.f1 = c.f1;
        }
        rows.push_back(std::move(row));
    }
    return rows;
}

json to_json(std::span<const SweepRow> rows) {
    json out = json::array();
    for (const auto& r : rows)
        out.push_back({{"set", r.set_id},
                       {"P", r.precision},
                       {"R", r.recall},
                       {"F1", r.f1},
                       {"n_selected", r.n_selected}});
    return out;
}

std::string format_sweep_table(std::span<const SweepRow> rows) {
    std::size_t width = 3;
    for (const auto& r : rows) width = std::max(width, r.set_id.size());
    std::ostringstream out;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%-*s  %5s  %5s  %5s  %10s\n", static_cast<int>(width), "set", "P",
                  "R", "F1", "n_selected");
    out << buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %5.2f  %5.2f  %5.2f  %10zu\n", static_cast<int>(width),
                      r.set_id.c_str(), r.precision, r.recall, r.f1, r.n_selected);
        out << buf;
    }
    return out.str();
}

} // namespace privmine
