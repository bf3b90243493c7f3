#include "privmine/nli_engine.hpp"

#include <spdlog/spdlog.h>

#include <cmath>
#include <exception>
#include <mutex>
#include <thread>
#include <unordered_set>

namespace privmine {

ProbabilityTriple checked_probabilities(ProbabilityTriple triple) {
    for (double p : {triple.entail, triple.neutral, triple.contradict}) {
        if (!std::isfinite(p) || p < 0.0 || p > 1.0)
            throw ValidationError("probability " + std::to_string(p) + " outside [0, 1]");
    }
    const double total = triple.sum();
    if (std::abs(total - 1.0) <= 1e-3) return triple;
    if (total <= 0.0) throw ValidationError("probability triple sums to zero");
    spdlog::warn("renormalizing probability triple with sum {:.6f}", total);
    return {triple.entail / total, triple.neutral / total, triple.contradict / total};
}

json to_json(const EntailmentRecord& record) {
    return json{{"review_id", record.review_id},
                {"hypothesis_id", record.hypothesis_id},
                {"entail", record.probabilities.entail},
                {"neutral", record.probabilities.neutral},
                {"contradict", record.probabilities.contradict},
                {"model_id", record.model_id}};
}

EntailmentRecord entailment_record_from_json(const json& value) {
    EntailmentRecord record;
    record.review_id = value.at("review_id").get<std::string>();
    record.hypothesis_id = value.at("hypothesis_id").get<int>();
    record.probabilities = {value.at("entail").get<double>(), value.at("neutral").get<double>(),
                            value.at("contradict").get<double>()};
    record.model_id = value.value("model_id", std::string{});
    return record;
}

ScoreMatrix::ScoreMatrix(std::vector<std::string> review_ids, std::vector<int> hypothesis_ids,
                         std::vector<EntailmentRecord> records)
    : m_review_ids(std::move(review_ids)),
      m_hypothesis_ids(std::move(hypothesis_ids)),
      m_records(std::move(records)) {
    if (m_records.size() != m_review_ids.size() * m_hypothesis_ids.size())
        throw ValidationError("score matrix incomplete: " + std::to_string(m_records.size()) +
                              " records for " + std::to_string(m_review_ids.size()) + " x " +
                              std::to_string(m_hypothesis_ids.size()) + " pairs");
    std::unordered_set<std::string> seen_reviews(m_review_ids.begin(), m_review_ids.end());
    if (seen_reviews.size() != m_review_ids.size())
        throw ValidationError("score matrix has duplicate review ids");
    std::unordered_set<int> seen_hypotheses(m_hypothesis_ids.begin(), m_hypothesis_ids.end());
    if (seen_hypotheses.size() != m_hypothesis_ids.size())
        throw ValidationError("score matrix has duplicate hypothesis ids");
    for (std::size_t r = 0; r < rows(); ++r) {
        for (std::size_t h = 0; h < cols(); ++h) {
            const auto& rec = at(r, h);
            if (rec.review_id != m_review_ids[r] || rec.hypothesis_id != m_hypothesis_ids[h])
                throw ValidationError("score matrix record out of place at (" + m_review_ids[r] +
                                      ", " + std::to_string(m_hypothesis_ids[h]) + ")");
        }
    }
}

ScoreMatrix ScoreMatrix::from_records(std::vector<EntailmentRecord> records) {
    std::vector<std::string> review_ids;
    std::vector<int> hypothesis_ids;
    std::unordered_map<std::string, std::size_t> row_of;
    std::unordered_map<int, std::size_t> col_of;
    for (const auto& rec : records) {
        if (row_of.emplace(rec.review_id, review_ids.size()).second)
            review_ids.push_back(rec.review_id);
        if (col_of.emplace(rec.hypothesis_id, hypothesis_ids.size()).second)
            hypothesis_ids.push_back(rec.hypothesis_id);
    }
    const std::size_t cols = hypothesis_ids.size();
    std::vector<std::optional<EntailmentRecord>> grid(review_ids.size() * cols);
    for (auto& rec : records) {
        auto& slot = grid[row_of[rec.review_id] * cols + col_of[rec.hypothesis_id]];
        if (slot)
            throw ValidationError("duplicate record for (" + rec.review_id + ", " +
                                  std::to_string(rec.hypothesis_id) + ")");
        slot = std::move(rec);
    }
    std::vector<EntailmentRecord> ordered;
    ordered.reserve(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!grid[i])
            throw ValidationError("score matrix missing (" + review_ids[i / cols] + ", " +
                                  std::to_string(hypothesis_ids[i % cols]) + ")");
        ordered.push_back(std::move(*grid[i]));
    }
    return ScoreMatrix(std::move(review_ids), std::move(hypothesis_ids), std::move(ordered));
}

std::vector<double> ScoreMatrix::entailment_row(std::size_t row) const {
    std::vector<double> out(cols());
    for (std::size_t h = 0; h < cols(); ++h) out[h] = at(row, h).entailment_score();
    return out;
}

void ScoreMatrix::save(const std::filesystem::path& path,
                       const std::optional<ArtifactHeader>& header) const {
    std::vector<json> lines;
    lines.reserve(m_records.size());
    for (const auto& rec : m_records) lines.push_back(to_json(rec));
    write_jsonl_atomic(path, header, lines);
}

ScoreMatrix ScoreMatrix::load(const std::filesystem::path& path,
                              std::optional<ArtifactHeader>* header) {
    std::vector<EntailmentRecord> records;
    const auto stats = read_jsonl(path, [&](const json& value, std::size_t) {
        records.push_back(entailment_record_from_json(value));
    });
    if (header) *header = stats.header;
    if (records.empty()) return {};
    return from_records(std::move(records));
}

ProbabilityTriple NliBackend::score(std::string_view premise, const std::string& hypothesis) {
    return score(premise, std::span<const std::string>(&hypothesis, 1)).at(0);
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// (0, 1]
double unit_interval(std::uint64_t bits) {
    return (static_cast<double>(bits >> 11) + 1.0) * 0x1.0p-53;
}

} // namespace

MockNliBackend::MockNliBackend(std::uint64_t seed, std::size_t max_premise_tokens)
    : m_seed(seed),
      m_max_premise_tokens(max_premise_tokens),
      m_model_id("mock-nli-seed" + std::to_string(seed)) {}

std::vector<ProbabilityTriple> MockNliBackend::score(std::string_view premise,
                                                     std::span<const std::string> hypotheses) {
    std::vector<ProbabilityTriple> out;
    out.reserve(hypotheses.size());
    for (const auto& hypothesis : hypotheses) {
        std::uint64_t h = fnv1a64(premise);
        h = fnv1a64("\x1f", h);
        h = fnv1a64(hypothesis, h);
        h = splitmix64(h ^ splitmix64(m_seed));
        const double a = unit_interval(splitmix64(h + 1));
        const double b = unit_interval(splitmix64(h + 2));
        const double c = unit_interval(splitmix64(h + 3));
        const double total = a + b + c;
        out.push_back({a / total, b / total, c / total});
    }
    m_pair_calls += hypotheses.size();
    return out;
}

std::unique_ptr<MockNliBackend> mock_backend(std::uint64_t seed) {
    return std::make_unique<MockNliBackend>(seed);
}

std::uint64_t input_digest(std::string_view premise, std::string_view hypothesis) {
    return fnv1a64(hypothesis, fnv1a64("\x1f", fnv1a64(premise)));
}

std::string truncate_premise(std::string_view premise, std::size_t max_tokens) {
    if (max_tokens == 0) return std::string(premise);
    const auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    std::size_t tokens = 0;
    std::size_t i = 0;
    while (i < premise.size()) {
        while (i < premise.size() && is_space(premise[i])) ++i;
        if (i == premise.size()) break;
        while (i < premise.size() && !is_space(premise[i])) ++i;
        if (++tokens == max_tokens) return std::string(premise.substr(0, i));
    }
    return std::string(premise);
}

ScoreMatrix score_corpus(const ReviewCollection& collection, const HypothesisSet& set,
                         NliBackend& backend, ScoreCache& cache, const ScoreOptions& options,
                         ScoreStats* stats) {
    if (collection.empty()) throw ValidationError("empty collection");
    if (set.size() == 0) throw ValidationError("empty hypothesis set");

    const auto hypotheses = set.hypotheses();
    const std::size_t n_reviews = collection.size();
    const std::size_t n_hyp = hypotheses.size();
    const std::size_t total = n_reviews * n_hyp;
    const std::string& model_id = backend.model_id();

    std::vector<EntailmentRecord> records(total);
    std::atomic<std::size_t> next{0};
    std::atomic<std::size_t> completed{0};
    std::atomic<std::size_t> hits{0};
    std::atomic<std::size_t> scored{0};
    std::atomic<bool> failed{false};
    std::exception_ptr first_error;
    std::mutex error_mutex;

    auto worker = [&] {
        while (!failed.load()) {
            const std::size_t r = next.fetch_add(1);
            if (r >= n_reviews) return;
            const Review& review = collection[r];
            const std::string premise =
                truncate_premise(review.text(), backend.max_premise_tokens());

            std::vector<std::size_t> missing;
            std::vector<std::string> missing_text;
            std::vector<std::uint64_t> digests(n_hyp);
            for (std::size_t h = 0; h < n_hyp; ++h) {
                const auto& hyp = hypotheses[h];
                digests[h] = input_digest(premise, hyp.text);
                auto& rec = records[r * n_hyp + h];
                rec.review_id = review.review_id;
                rec.hypothesis_id = hyp.hypothesis_id;
                rec.model_id = model_id;
                if (auto cached = cache.lookup(review.review_id, hyp.hypothesis_id, model_id, digests[h])) {
                    rec.probabilities = *cached;
                    ++hits;
                    ++completed;
                } else {
                    missing.push_back(h);
                    missing_text.push_back(hyp.text);
                }
            }
            if (missing.empty()) continue;
            try {
                auto triples = backend.score(premise, missing_text);
                if (triples.size() != missing.size())
                    throw BackendError("backend returned " + std::to_string(triples.size()) +
                                       " scores for " + std::to_string(missing.size()) +
                                       " hypotheses");
                for (std::size_t k = 0; k < missing.size(); ++k) {
                    auto& rec = records[r * n_hyp + missing[k]];
                    rec.probabilities = checked_probabilities(triples[k]);
                    cache.insert(rec, digests[missing[k]]);
                    ++scored;
                    ++completed;
                }
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!first_error) first_error = std::current_exception();
                failed = true;
                return;
            }
        }
    };

    const unsigned workers = std::max(1u, std::min<unsigned>(options.workers,
                                                             static_cast<unsigned>(n_reviews)));
    if (workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(workers);
        for (unsigned i = 0; i < workers; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    if (stats) {
        stats->cache_hits = hits.load();
        stats->backend_pairs = scored.load();
    }
    if (first_error) {
        std::string reason = "unknown error";
        try {
            std::rethrow_exception(first_error);
        } catch (const std::exception& e) {
            reason = e.what();
        } catch (...) {
        }
        throw ScoringError("scoring stopped after " + std::to_string(completed.load()) + " of " +
                               std::to_string(total) + " pairs: " + reason,
                           completed.load(), total);
    }

    std::vector<std::string> review_ids;
    review_ids.reserve(n_reviews);
    for (const Review& review : collection) review_ids.push_back(review.review_id);
    return ScoreMatrix(std::move(review_ids), set.ids(), std::move(records));
}

} // namespace privmine
