#pragma once

#include "privmine/corpus.hpp"
#include "privmine/labels.hpp"

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace privmine {

// privacy is the positive class.
struct ConfusionMatrix {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    std::size_t tn = 0;

    std::size_t total() const { return tp + fp + fn + tn; }
    bool operator==(const ConfusionMatrix&) const = default;
};

// Throws ValidationError on a length mismatch or empty input.
ConfusionMatrix confusion(std::span<const Label> gold, std::span<const Label> pred);

struct ClassMetrics {
    double precision = 0;
    double recall = 0;
    double f1 = 0;
};

struct MetricsReport {
    ClassMetrics privacy;
    ClassMetrics not_privacy;
    double macro_p = 0;
    double macro_r = 0;
    double macro_f1 = 0;
};

// x / 0 is taken as 0 for precision, recall and F1.
ClassMetrics class_metrics(std::size_t true_pos, std::size_t false_pos, std::size_t false_neg);

// Per-class metrics for both classes; macro values are their unweighted means.
MetricsReport macro_prf(const ConfusionMatrix& m);

enum class AgreementBand { less_than_chance, slight, fair, moderate, substantial, almost_perfect };

std::string_view to_string(AgreementBand band);

struct AgreementReport {
    double kappa = 0;
    double p_o = 0;
    double p_e = 0;
    AgreementBand band = AgreementBand::less_than_chance;
};

// Cohen's kappa for two binary labelings. With fully degenerate chance
// agreement (p_e == 1) kappa is 1 when p_o == 1 and 0 otherwise.
AgreementReport cohens_kappa(std::span<const Label> labels_a, std::span<const Label> labels_b);

// k <= 0 less than chance; (0, .20] slight; (.20, .40] fair; (.40, .60]
// moderate; (.60, .80] substantial; (.80, 1] almost perfect.
AgreementBand interpret_kappa(double kappa);

using BigramCount = std::pair<std::string, std::size_t>;

// Adjacent whitespace-token pairs within each review, most frequent first,
// ties broken lexicographically. Uses clean_text when present.
std::vector<BigramCount> bigram_report(const ReviewCollection& reviews, std::size_t top_k);

// {review_id, label} JSONL, label in {privacy, not-privacy}. Order kept.
struct LabeledId {
    std::string review_id;
    Label label;
};
std::vector<LabeledId> read_label_file(const std::filesystem::path& path);
void write_label_file(const std::filesystem::path& path, std::span<const LabeledId> labels);

struct EvaluationResult {
    std::size_t scored = 0;
    std::size_t ignored_predictions = 0;
    ConfusionMatrix confusion;
    MetricsReport metrics;
    AgreementReport agreement;
};

// Joins predictions to gold on review_id. Every gold id needs a prediction;
// predictions for ids outside gold are counted and ignored.
EvaluationResult evaluate_predictions(std::span<const LabeledId> gold,
                                      std::span<const LabeledId> predictions);

json to_json(const MetricsReport& report);
json to_json(const AgreementReport& report);
json to_json(const EvaluationResult& result);

// Table with columns Model | P | R | F1 | kappa.
std::string format_metrics_table(const std::vector<std::pair<std::string, EvaluationResult>>& rows);

} // namespace privmine
