#include "privmine/evaluation.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

namespace privmine {

ConfusionMatrix confusion(std::span<const Label> gold, std::span<const Label> pred) {
    if (gold.size() != pred.size())
        throw ValidationError("label length mismatch: " + std::to_string(gold.size()) + " gold vs " +
                              std::to_string(pred.size()) + " predicted");
    if (gold.empty()) throw ValidationError("no labels to score");
    ConfusionMatrix m;
    for (std::size_t i = 0; i < gold.size(); ++i) {
        const bool g = gold[i] == Label::privacy;
        const bool p = pred[i] == Label::privacy;
        if (g && p) ++m.tp;
        else if (!g && p) ++m.fp;
        else if (g && !p) ++m.fn;
        else ++m.tn;
    }
    return m;
}

ClassMetrics class_metrics(std::size_t true_pos, std::size_t false_pos, std::size_t false_neg) {
    ClassMetrics c;
    const auto ratio = [](std::size_t num, std::size_t den) {
        return den == 0 ? 0.0 : static_cast<double>(num) / static_cast<double>(den);
    };
    c.precision = ratio(true_pos, true_pos + false_pos);
    c.recall = ratio(true_pos, true_pos + false_neg);
    const double denom = c.precision + c.recall;
    c.f1 = denom == 0.0 ? 0.0 : 2.0 * c.precision * c.recall / denom;
    return c;
}

MetricsReport macro_prf(const ConfusionMatrix& m) {
    MetricsReport r;
    r.privacy = class_metrics(m.tp, m.fp, m.fn);
    // for the negative class the roles of fp and fn swap
    r.not_privacy = class_metrics(m.tn, m.fn, m.fp);
    r.macro_p = (r.privacy.precision + r.not_privacy.precision) / 2.0;
    r.macro_r = (r.privacy.recall + r.not_privacy.recall) / 2.0;
    r.macro_f1 = (r.privacy.f1 + r.not_privacy.f1) / 2.0;
    return r;
}

std::string_view to_string(AgreementBand band) {
    switch (band) {
    case AgreementBand::less_than_chance: return "less-than-chance";
    case AgreementBand::slight: return "slight";
    case AgreementBand::fair: return "fair";
    case AgreementBand::moderate: return "moderate";
    case AgreementBand::substantial: return "substantial";
    case AgreementBand::almost_perfect: return "almost-perfect";
    }
    return "less-than-chance";
}

AgreementBand interpret_kappa(double kappa) {
    if (!(kappa >= -1.0 && kappa <= 1.0))
        throw ValidationError("kappa " + std::to_string(kappa) + " outside [-1, 1]");
    if (kappa <= 0.0) return AgreementBand::less_than_chance;
    if (kappa <= 0.20) return AgreementBand::slight;
    if (kappa <= 0.40) return AgreementBand::fair;
    if (kappa <= 0.60) return AgreementBand::moderate;
    if (kappa <= 0.80) return AgreementBand::substantial;
    return AgreementBand::almost_perfect;
}

AgreementReport cohens_kappa(std::span<const Label> labels_a, std::span<const Label> labels_b) {
    const ConfusionMatrix m = confusion(labels_a, labels_b);
    // Counts scaled by n^2 stay integral, so kappa is exactly 0 when the
    // observed and chance agreement coincide.
    const auto n = static_cast<long double>(m.total());
    const auto a_pos = static_cast<long double>(m.tp + m.fn), b_pos = static_cast<long double>(m.tp + m.fp);
    const long double agree = static_cast<long double>(m.tp + m.tn) * n;
    const long double chance = a_pos * b_pos + (n - a_pos) * (n - b_pos);
    AgreementReport r;
    r.p_o = static_cast<double>(agree / (n * n));
    r.p_e = static_cast<double>(chance / (n * n));
    if (chance == n * n) {
        r.kappa = agree == n * n ? 1.0 : 0.0;
    } else {
        r.kappa = std::clamp(static_cast<double>((agree - chance) / (n * n - chance)), -1.0, 1.0);
    }
    r.band = interpret_kappa(r.kappa);
    return r;
}

std::vector<BigramCount> bigram_report(const ReviewCollection& reviews, std::size_t top_k) {
    if (top_k < 1) throw ValidationError("top_k must be >= 1");
    std::unordered_map<std::string, std::size_t> counts;
    for (const Review& review : reviews) {
        std::istringstream tokens(review.text());
        std::string previous;
        std::string token;
        bool have_previous = false;
        while (tokens >> token) {
            if (have_previous) ++counts[previous + ' ' + token];
            previous = std::move(token);
            have_previous = true;
        }
    }
    std::vector<BigramCount> ranked(counts.begin(), counts.end());
    const auto by_rank = [](const BigramCount& a, const BigramCount& b) {
        return a.second != b.second ? a.second > b.second : a.first < b.first;
    };
    if (ranked.size() > top_k) {
        std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(top_k),
                          ranked.end(), by_rank);
        ranked.resize(top_k);
    } else {
        std::sort(ranked.begin(), ranked.end(), by_rank);
    }
    return ranked;
}

std::vector<LabeledId> read_label_file(const std::filesystem::path& path) {
    std::vector<LabeledId> out;
    std::unordered_set<std::string> seen;
    read_jsonl(path, [&](const json& value, std::size_t line_no) {
        const auto where = path.string() + ":" + std::to_string(line_no);
        if (!value.contains("review_id") || !value.contains("label"))
            throw ValidationError(where + ": expected {review_id, label}");
        const auto& id_field = value.at("review_id");
        std::string id = id_field.is_string() ? id_field.get<std::string>() : id_field.dump();
        const auto& label_field = value.at("label");
        const std::string text = label_field.is_string() ? label_field.get<std::string>()
                                                         : label_field.dump();
        const auto label = parse_label(text);
        if (!label) throw ValidationError(where + ": unknown label '" + text + "'");
        if (!seen.insert(id).second) throw ValidationError(where + ": duplicate review_id " + id);
        out.push_back({std::move(id), *label});
    });
    return out;
}

void write_label_file(const std::filesystem::path& path, std::span<const LabeledId> labels) {
    std::vector<json> lines;
    lines.reserve(labels.size());
    for (const auto& l : labels) lines.push_back({{"review_id", l.review_id}, {"label", to_string(l.label)}});
    write_jsonl_atomic(path, std::nullopt, lines);
}

EvaluationResult evaluate_predictions(std::span<const LabeledId> gold,
                                      std::span<const LabeledId> predictions) {
    std::unordered_map<std::string, Label> predicted;
    for (const auto& p : predictions) predicted.emplace(p.review_id, p.label);

    std::vector<Label> g;
    std::vector<Label> p;
    std::vector<std::string> missing;
    for (const auto& item : gold) {
        auto it = predicted.find(item.review_id);
        if (it == predicted.end()) {
            missing.push_back(item.review_id);
            continue;
        }
        g.push_back(item.label);
        p.push_back(it->second);
    }
    if (!missing.empty())
        throw ValidationError(std::to_string(missing.size()) +
                              " gold reviews have no prediction (first: " + missing.front() + ")");

    EvaluationResult result;
    result.scored = g.size();
    result.ignored_predictions = predictions.size() - g.size();
    result.confusion = confusion(g, p);
    result.metrics = macro_prf(result.confusion);
    result.agreement = cohens_kappa(g, p);
    return result;
}

namespace {
json class_json(const ClassMetrics& c) {
    return json{{"precision", c.precision}, {"recall", c.recall}, {"f1", c.f1}};
}
} // namespace

json to_json(const MetricsReport& report) {
    return json{{"privacy", class_json(report.privacy)},
                {"not_privacy", class_json(report.not_privacy)},
                {"macro_p", report.macro_p},
                {"macro_r", report.macro_r},
                {"macro_f1", report.macro_f1}};
}

json to_json(const AgreementReport& report) {
    return json{{"kappa", report.kappa},
                {"p_o", report.p_o},
                {"p_e", report.p_e},
                {"band", to_string(report.band)}};
}

json to_json(const EvaluationResult& result) {
    const auto& m = result.confusion;
    return json{{"scored", result.scored},
                {"ignored_predictions", result.ignored_predictions},
                {"confusion", {{"tp", m.tp}, {"fp", m.fp}, {"fn", m.fn}, {"tn", m.tn}}},
                {"metrics", to_json(result.metrics)},
                {"agreement", to_json(result.agreement)}};
}

std::string format_metrics_table(const std::vector<std::pair<std::string, EvaluationResult>>& rows) {
    std::size_t width = 5;
    for (const auto& [name, _] : rows) width = std::max(width, name.size());
    std::ostringstream out;
    char buf[128];
    std::snprintf(buf, sizeof buf, "%-*s  %5s  %5s  %5s  %6s\n", static_cast<int>(width), "Model",
                  "P", "R", "F1", "kappa");
    out << buf;
    for (const auto& [name, r] : rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %5.2f  %5.2f  %5.2f  %6.2f\n", static_cast<int>(width),
                      name.c_str(), r.metrics.macro_p, r.metrics.macro_r, r.metrics.macro_f1,
                      r.agreement.kappa);
        out << buf;
    }
    return out.str();
}

} // namespace privmine
