#include "privmine/hypotheses.hpp"

#include <fstream>
#include <unordered_set>

namespace privmine {

HypothesisSet::HypothesisSet(std::string set_id, std::vector<PrivacyConcept> concepts,
                             std::vector<Hypothesis> hypotheses,
                             HypothesisProvenance provenance)
    : m_set_id(std::move(set_id)),
      m_concepts(std::move(concepts)),
      m_hypotheses(std::move(hypotheses)),
      m_provenance(provenance) {
    if (m_hypotheses.empty()) throw HypothesisSetError("empty hypothesis set");

    std::unordered_set<std::string> concept_ids;
    for (const auto& c : m_concepts) {
        if (c.concept_id.empty()) throw HypothesisSetError("concept with empty concept_id");
        if (!concept_ids.insert(c.concept_id).second)
            throw HypothesisSetError("duplicate concept_id " + c.concept_id);
    }
    std::unordered_set<int> ids;
    for (const auto& h : m_hypotheses) {
        const std::string where = "hypothesis " + std::to_string(h.hypothesis_id);
        if (h.hypothesis_id < 1) throw HypothesisSetError(where + ": id must be >= 1");
        if (!ids.insert(h.hypothesis_id).second)
            throw HypothesisSetError("duplicate hypothesis id " + std::to_string(h.hypothesis_id));
        if (h.text.empty()) throw HypothesisSetError(where + ": empty text");
        if (!concept_ids.contains(h.concept_id))
            throw HypothesisSetError(where + ": unknown concept '" + h.concept_id + "'");
    }
}

std::vector<Hypothesis> HypothesisSet::for_concept(std::string_view concept_id) const {
    std::vector<Hypothesis> out;
    for (const auto& h : m_hypotheses)
        if (h.concept_id == concept_id) out.push_back(h);
    return out;
}

std::vector<int> HypothesisSet::ids() const {
    std::vector<int> out;
    out.reserve(m_hypotheses.size());
    for (const auto& h : m_hypotheses) out.push_back(h.hypothesis_id);
    return out;
}

HypothesisSet builtin_mh_set() {
    std::vector<PrivacyConcept> concepts{
        {"linkability", "Linkability",
         "Separate items of interest (records, sessions, app usage) can be tied to the same user."},
        {"identifiability", "Identifiability",
         "A user can be singled out or re-identified from the data the app holds."},
        {"non-repudiation", "Non-repudiation",
         "A user cannot deny actions or records, e.g. a permanent mental health history."},
        {"detectability", "Detectability",
         "Others can tell that a user uses, or has data in, a mental health service."},
        {"disclosure-of-information", "Disclosure of Information",
         "Personal mental health information is exposed to parties it was not meant for."},
        {"unawareness", "Unawareness",
         "Users are not informed about, or in control of, what happens to their data."},
        {"non-compliance", "Non-compliance",
         "Data handling departs from regulations, policies or the stated purpose."},
    };
    std::vector<Hypothesis> hypotheses{
        {1, "linkability", "Mental health data is linked across different services."},
        {2, "linkability", "Online activities across various mental health apps can be connected."},
        {3, "linkability",
         "Personal information about users' mental health is collected from external sources."},
        {4, "identifiability", "Anonymized mental health data is used to re-identify the user."},
        {5, "identifiability",
         "Unique patterns in a user’s psychological data lead to personal identification."},
        {6, "non-repudiation", "User cannot deny having performed certain actions within the app."},
        {7, "non-repudiation",
         "User is concerned about the permanent storage of their mental health history."},
        {8, "detectability",
         "User is concerned about others detecting their use of sensitive mental health services."},
        {9, "detectability",
         "Users’ participation in mental health apps is discovered from anonymized usage data."},
        {10, "disclosure-of-information",
         "Users’ device communication patterns reveal private information about their mental "
         "health conditions."},
        {11, "disclosure-of-information", "Mental health data intercepted during transmission."},
        {12, "disclosure-of-information",
         "Mental health app exposes a private aspect of the user’s life."},
        {13, "unawareness",
         "Private mental health information is accessed by unauthorized parties."},
        {14, "unawareness",
         "User is not aware of how and why their mental health data is being collected, "
         "processed, stored, and shared."},
        {15, "non-compliance",
         "User is concerned about the processing and storage of mental health data against "
         "privacy regulations or policies."},
        {16, "non-compliance", "Mental health data is being exploited for other purposes."},
        {17, "non-compliance", "Mental health data is shared with third parties."},
    };
    return HypothesisSet(std::string(kBuiltinMhSetId), std::move(concepts), std::move(hypotheses),
                         HypothesisProvenance::builtin_mh_17);
}

HypothesisSet hypothesis_set_from_json(const json& value, HypothesisProvenance provenance) {
    if (!value.is_object()) throw HypothesisSetError("hypothesis set must be a JSON object");
    const std::string set_id = value.value("set_id", std::string{"custom"});

    std::vector<PrivacyConcept> concepts;
    if (value.contains("concepts")) {
        for (const auto& c : value.at("concepts")) {
            if (!c.contains("concept_id"))
                throw HypothesisSetError("concept entry missing concept_id: " + c.dump());
            concepts.push_back({c.at("concept_id").get<std::string>(),
                                c.value("name", c.at("concept_id").get<std::string>()),
                                c.value("description", std::string{})});
        }
    }
    std::vector<Hypothesis> hypotheses;
    if (value.contains("hypotheses")) {
        for (const auto& h : value.at("hypotheses")) {
            if (!h.contains("id") || !h.contains("concept") || !h.contains("text"))
                throw HypothesisSetError("hypothesis entry needs id, concept and text: " + h.dump());
            if (!h.at("id").is_number_integer())
                throw HypothesisSetError("hypothesis id must be an integer: " + h.dump());
            hypotheses.push_back({h.at("id").get<int>(), h.at("concept").get<std::string>(),
                                  h.at("text").get<std::string>()});
        }
    }
    return HypothesisSet(set_id, std::move(concepts), std::move(hypotheses), provenance);
}

HypothesisSet load_hypothesis_set(const std::filesystem::path& config) {
    std::ifstream in(config);
    if (!in) throw HypothesisSetError("cannot open hypothesis set " + config.string());
    json value;
    try {
        value = json::parse(in);
    } catch (const json::parse_error& e) {
        throw HypothesisSetError(config.string() + ": " + e.what());
    }
    return hypothesis_set_from_json(value);
}

json to_json(const HypothesisSet& set) {
    json concepts = json::array();
    for (const auto& c : set.concepts())
        concepts.push_back({{"concept_id", c.concept_id}, {"name", c.name}, {"description", c.description}});
    json hypotheses = json::array();
    for (const auto& h : set.hypotheses())
        hypotheses.push_back({{"id", h.hypothesis_id}, {"concept", h.concept_id}, {"text", h.text}});
    return json{{"set_id", set.set_id()}, {"concepts", concepts}, {"hypotheses", hypotheses}};
}

HypothesisSet resolve_hypothesis_set(const std::string& id_or_path) {
    if (id_or_path.empty() || id_or_path == kBuiltinMhSetId) return builtin_mh_set();
    return load_hypothesis_set(id_or_path);
}

} // namespace privmine
