#pragma once

#include "privmine/jsonl.hpp"
#include "privmine/labels.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace privmine {

struct PrivacyConcept {
    std::string concept_id;
    std::string name;
    std::string description;

    bool operator==(const PrivacyConcept&) const = default;
};

struct Hypothesis {
    int hypothesis_id = 0;
    std::string concept_id;
    std::string text;

    bool operator==(const Hypothesis&) const = default;
};

enum class HypothesisProvenance { builtin_mh_17, user_supplied };

class HypothesisSetError : public ValidationError {
public:
    using ValidationError::ValidationError;
};

// Privacy-violation statements grouped by concept. Immutable once built.
class HypothesisSet {
public:
    // Throws HypothesisSetError on an empty set, duplicate ids, empty text or
    // a hypothesis whose concept is not declared.
    HypothesisSet(std::string set_id, std::vector<PrivacyConcept> concepts,
                  std::vector<Hypothesis> hypotheses, HypothesisProvenance provenance);

    const std::string& set_id() const { return m_set_id; }
    HypothesisProvenance provenance() const { return m_provenance; }
    std::span<const PrivacyConcept> concepts() const { return m_concepts; }
    std::span<const Hypothesis> hypotheses() const { return m_hypotheses; }
    std::size_t size() const { return m_hypotheses.size(); }

    std::vector<Hypothesis> for_concept(std::string_view concept_id) const;
    std::vector<int> ids() const;

    bool operator==(const HypothesisSet&) const = default;

private:
    std::string m_set_id;
    std::vector<PrivacyConcept> m_concepts;
    std::vector<Hypothesis> m_hypotheses;
    HypothesisProvenance m_provenance;
};

// The 17 mental-health privacy hypotheses over 7 concepts.
HypothesisSet builtin_mh_set();

inline constexpr std::string_view kBuiltinMhSetId = "builtin-mh-17";

// File format: {"set_id", "concepts": [{concept_id, name, description}],
// "hypotheses": [{id, concept, text}]}. Same shape as to_json output.
HypothesisSet load_hypothesis_set(const std::filesystem::path& config);
HypothesisSet hypothesis_set_from_json(const json& value,
                                       HypothesisProvenance provenance =
                                           HypothesisProvenance::user_supplied);
json to_json(const HypothesisSet& set);

// "builtin-mh-17" or a path to a set file.
HypothesisSet resolve_hypothesis_set(const std::string& id_or_path);

} // namespace privmine
