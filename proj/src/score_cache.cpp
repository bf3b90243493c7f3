#include "privmine/nli_engine.hpp"

#include <spdlog/spdlog.h>

#include <mutex>

namespace privmine {

ScoreCache::ScoreCache() = default;

ScoreCache::ScoreCache(const std::filesystem::path& journal) {
    if (std::filesystem::exists(journal)) {
        const auto stats = read_jsonl(
            journal,
            [&](const json& value, std::size_t) {
                const auto rec = entailment_record_from_json(value);
                const auto digest = std::stoull(value.at("digest").get<std::string>(), nullptr, 16);
                // later lines supersede earlier ones
                m_entries[key(rec.review_id, rec.hypothesis_id, rec.model_id)] =
                    Entry{rec.probabilities, digest};
            },
            /*tolerate_torn_tail=*/true);
        m_torn_tail = stats.torn_tail;
        if (m_torn_tail) {
            spdlog::warn("score cache {}: dropped a torn final line", journal.string());
            drop_torn_tail(journal, stats);
        }
    }
    m_journal = std::make_unique<AppendLog>(journal);
}

ScoreCache::~ScoreCache() = default;

std::string ScoreCache::key(std::string_view review_id, int hypothesis_id,
                            std::string_view model_id) {
    std::string k;
    k.reserve(review_id.size() + model_id.size() + 16);
    k.append(review_id);
    k += '\x1f';
    k += std::to_string(hypothesis_id);
    k += '\x1f';
    k.append(model_id);
    return k;
}

std::optional<ProbabilityTriple> ScoreCache::lookup(std::string_view review_id, int hypothesis_id,
                                                    std::string_view model_id,
                                                    std::uint64_t digest) const {
    std::shared_lock lock(m_mutex);
    auto it = m_entries.find(key(review_id, hypothesis_id, model_id));
    if (it == m_entries.end() || it->second.digest != digest) return std::nullopt;
    return it->second.probabilities;
}

void ScoreCache::insert(const EntailmentRecord& record, std::uint64_t digest) {
    std::unique_lock lock(m_mutex);
    m_entries[key(record.review_id, record.hypothesis_id, record.model_id)] =
        Entry{record.probabilities, digest};
    if (m_journal) {
        json line = to_json(record);
        line["digest"] = hex64(digest);
        m_journal->append(line);
    }
}

std::size_t ScoreCache::size() const {
    std::shared_lock lock(m_mutex);
    return m_entries.size();
}

} // namespace privmine
