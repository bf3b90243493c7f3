#pragma once

#include "privmine/evaluation.hpp"
#include "privmine/jsonl.hpp"
#include "privmine/labels.hpp"

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace privmine {

// Failure of an annotation request. code() is stable and drives the HTTP
// status: invalid_request, unassigned, unknown_review, unknown_session,
// session_closed, unresolved, no_overlap.
class AnnotationError : public Error {
public:
    AnnotationError(std::string code, const std::string& message)
        : Error(message), m_code(std::move(code)) {}

    const std::string& code() const { return m_code; }

private:
    std::string m_code;
};

struct SessionReview {
    std::string review_id;
    std::string text;
    std::string app;
    std::optional<int> rating;
};

struct SessionSpec {
    std::string session_id;
    std::vector<SessionReview> reviews;
    std::vector<std::string> annotators;  // includes the lead
    std::string lead;
    int redundancy = 2;
    std::string guideline_text;
    json guidelines = json::object();  // concepts and hypotheses shown to annotators
};

struct AnnotatorLabel {
    std::string annotator_id;
    std::string review_id;
    Label label = Label::not_privacy;
    std::string submitted_at;
    int revision = 1;  // 1 for the first submission, +1 per resubmission
};

struct Adjudication {
    std::string review_id;
    std::vector<AnnotatorLabel> conflicting_labels;
    std::string tiebreaker_id;  // empty when no annotator is eligible
    std::optional<Label> resolution;
};

struct AnnotationTask {
    SessionReview review;
    bool is_adjudication = false;
    // Only filled for adjudication tasks; initial labeling is blind.
    std::vector<AnnotatorLabel> prior_labels;
};

struct SubmitAck {
    bool replaced = false;
    std::size_t open_tasks = 0;  // remaining for this annotator
    std::optional<Adjudication> adjudication;  // created by this submission
};

struct PairAgreement {
    std::string annotator_a;
    std::string annotator_b;
    std::size_t overlap = 0;
    AgreementReport report;
};

struct SessionAgreement {
    std::vector<PairAgreement> pairs;
    double mean_kappa = 0;
    AgreementBand band = AgreementBand::less_than_chance;
};

struct GoldEntry {
    std::string review_id;
    Label label = Label::not_privacy;
    std::vector<AnnotatorLabel> initial_labels;
    bool adjudicated = false;
    std::string tiebreaker_id;
};

struct AnnotatorProgress {
    std::string annotator_id;
    std::size_t completed = 0;
    std::size_t total = 0;
};

// Non-lead shares: review indices per non-lead annotator. Positions
// 0..n*(redundancy-1)-1 of the review list repeated are cut into
// near-equal contiguous chunks, larger chunks first.
std::vector<std::vector<std::size_t>> partition_assignments(std::size_t n_reviews,
                                                            std::size_t n_non_lead,
                                                            int redundancy);

// Multi-annotator labeling with adjudication. The lead labels every review;
// the other annotators split the reviews so each has `redundancy` initial
// labelers. When a review's initial labels disagree, an annotator outside
// that group is asked to break the tie. All state changes go to an
// append-only event log that replay() rebuilds the session from.
class AnnotationSession {
public:
    // Throws AnnotationError(invalid_request) for an empty review list,
    // duplicate ids, a lead missing from annotators or too few annotators.
    static std::unique_ptr<AnnotationSession> create(
        SessionSpec spec, const std::optional<std::filesystem::path>& event_log = std::nullopt);
    static std::unique_ptr<AnnotationSession> replay(const std::filesystem::path& event_log);

    const std::string& id() const { return m_spec.session_id; }
    const SessionSpec& spec() const { return m_spec; }
    bool closed() const;

    // Initial assignees of a review, lead first.
    std::vector<std::string> assignees(const std::string& review_id) const;
    std::vector<std::string> assigned_reviews(const std::string& annotator_id) const;

    SubmitAck submit_label(const std::string& annotator_id, const std::string& review_id,
                           Label label);

    // Reviews whose initial labels are complete and disagree; assigns a
    // tiebreaker to any that lack one. Idempotent.
    std::vector<Adjudication> detect_conflicts();

    // Mean pairwise kappa over initial labels of co-annotated reviews.
    SessionAgreement agreement() const;

    // Final label per review, agreed or adjudicated. Throws
    // AnnotationError(unresolved) while any review is open.
    std::vector<GoldEntry> export_gold() const;
    std::string export_gold_jsonl() const;

    // Next open task, adjudications first; nullopt when the queue is empty.
    std::optional<AnnotationTask> next_task(const std::string& annotator_id) const;

    std::vector<AnnotatorProgress> progress() const;
    std::size_t open_tasks(const std::string& annotator_id) const;

    void close();

    // Guideline text plus the concept/hypothesis reference.
    json guidelines() const;

    ~AnnotationSession();

private:
    AnnotationSession() = default;

    struct ReviewState {
        std::vector<std::string> assignees;
        std::map<std::string, AnnotatorLabel> live;  // initial assignees only
        std::optional<AnnotatorLabel> tiebreak_label;
        std::string tiebreaker;  // set once a conflict is first seen
    };

    void initialize(SessionSpec spec, bool write_events);
    void apply_event(const json& event);
    void log(const json& event);

    const ReviewState& state_of(const std::string& review_id) const;
    bool in_conflict(const ReviewState& state) const;
    bool resolved(const ReviewState& state) const;
    std::size_t open_tasks_locked(const std::string& annotator_id) const;
    std::string pick_tiebreaker_locked(const ReviewState& state) const;
    Adjudication adjudication_of(const std::string& review_id, const ReviewState& state) const;
    std::optional<Adjudication> ensure_adjudication_locked(const std::string& review_id);
    AnnotatorLabel record_label(const std::string& annotator_id, const std::string& review_id,
                                Label label, std::string submitted_at, bool* replaced);

    SessionSpec m_spec;
    std::map<std::string, std::size_t> m_review_index;
    std::vector<ReviewState> m_states;
    std::vector<AnnotatorLabel> m_history;  // every submission, in order
    bool m_closed = false;
    std::unique_ptr<AppendLog> m_log;
    mutable std::shared_mutex m_mutex;
};

json to_json(const AnnotatorLabel& label);
json to_json(const Adjudication& adjudication);
json to_json(const AnnotationTask& task);
json to_json(const SessionAgreement& agreement);
json to_json(const GoldEntry& entry);

} // namespace privmine
