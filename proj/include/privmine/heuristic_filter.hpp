#pragma once

#include "privmine/hypotheses.hpp"
#include "privmine/nli_engine.hpp"

#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace privmine {

// Satisfied when at least min_count hypotheses score strictly above threshold.
struct HeuristicClause {
    double threshold = 0;
    int min_count = 1;

    bool operator==(const HeuristicClause&) const = default;
};

// OR-combination of clauses.
class HeuristicSet {
public:
    // Throws ValidationError for an empty clause list, a threshold outside
    // [0, 1] or a min_count below 1.
    HeuristicSet(std::string set_id, std::vector<HeuristicClause> clauses);

    const std::string& set_id() const { return m_set_id; }
    std::span<const HeuristicClause> clauses() const { return m_clauses; }

    bool operator==(const HeuristicSet&) const = default;

private:
    std::string m_set_id;
    std::vector<HeuristicClause> m_clauses;
};

// set1..set4, from the strictest thresholds to the loosest.
std::vector<HeuristicSet> builtin_heuristic_sets();

// "set1".."set4" (also "Set 2", "2"), or throws ValidationError.
HeuristicSet builtin_heuristic_set(std::string_view name);

// {"set_id", "clauses": [{threshold, min_count}]}
HeuristicSet heuristic_set_from_json(const json& value);
json to_json(const HeuristicSet& set);

// Number of scores strictly greater than threshold. This is the one place
// the boundary rule lives: a score equal to the threshold does not count.
int count_entailments(std::span<const double> row, double threshold);

enum class VerdictLabel { maybe_privacy, maybe_not_privacy };

std::string_view to_string(VerdictLabel label);
VerdictLabel parse_verdict_label(std::string_view text);

struct Verdict {
    std::string review_id;
    VerdictLabel label = VerdictLabel::maybe_not_privacy;
    std::vector<HeuristicClause> satisfied_clauses;
    // (threshold, entailment count) for every distinct clause threshold, in clause order.
    std::vector<std::pair<double, int>> entail_counts;

    bool operator==(const Verdict&) const = default;
};

json to_json(const Verdict& verdict);
Verdict verdict_from_json(const json& value);

// One verdict per matrix row; maybe-privacy iff some clause is satisfied.
std::vector<Verdict> apply_heuristics(const ScoreMatrix& matrix, const HeuristicSet& set);

// Same, after checking that the matrix columns are exactly the set's
// hypotheses (throws ValidationError otherwise).
std::vector<Verdict> apply_heuristics(const ScoreMatrix& matrix, const HeuristicSet& set,
                                      const HypothesisSet& hypotheses);

struct SweepRow {
    std::string set_id;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    std::size_t n_selected = 0;
};

// maybe-privacy is the positive prediction, scored against gold privacy.
// Throws ValidationError when a matrix review has no gold label.
std::vector<SweepRow> sweep(const ScoreMatrix& matrix,
                            const std::unordered_map<std::string, Label>& gold,
                            std::span<const HeuristicSet> sets);

json to_json(std::span<const SweepRow> rows);
std::string format_sweep_table(std::span<const SweepRow> rows);

} // namespace privmine
