#include "privmine/annotation_service.hpp"

#include <algorithm>
#include <limits>
#include <mutex>
#include <set>

namespace privmine {

namespace {

AnnotationError invalid(const std::string& message) {
    return AnnotationError("invalid_request", message);
}

json review_json(const SessionReview& r) {
    json out{{"review_id", r.review_id}, {"text", r.text}, {"app", r.app}, {"rating", nullptr}};
    if (r.rating) out["rating"] = *r.rating;
    return out;
}

SessionReview review_from(const json& v) {
    SessionReview r;
    r.review_id = v.at("review_id").get<std::string>();
    r.text = v.value("text", std::string{});
    r.app = v.value("app", std::string{});
    if (v.contains("rating") && !v.at("rating").is_null()) r.rating = v.at("rating").get<int>();
    return r;
}

} // namespace

std::vector<std::vector<std::size_t>> partition_assignments(std::size_t n_reviews,
                                                            std::size_t n_non_lead,
                                                            int redundancy) {
    std::vector<std::vector<std::size_t>> shares(n_non_lead);
    if (redundancy < 2 || n_non_lead == 0 || n_reviews == 0) return shares;
    const std::size_t copies = static_cast<std::size_t>(redundancy - 1);
    const std::size_t total = n_reviews * copies;
    const std::size_t base = total / n_non_lead;
    const std::size_t extra = total % n_non_lead;
    std::size_t position = 0;
    for (std::size_t j = 0; j < n_non_lead; ++j) {
        const std::size_t length = base + (j < extra ? 1 : 0);
        for (std::size_t k = 0; k < length; ++k) shares[j].push_back((position + k) % n_reviews);
        position += length;
    }
    return shares;
}

std::unique_ptr<AnnotationSession> AnnotationSession::create(
    SessionSpec spec, const std::optional<std::filesystem::path>& event_log) {
    std::unique_ptr<AnnotationSession> session(new AnnotationSession());
    if (event_log) {
        if (std::filesystem::exists(*event_log) && std::filesystem::file_size(*event_log) > 0)
            throw invalid("event log " + event_log->string() + " already exists; replay it instead");
        session->m_log = std::make_unique<AppendLog>(*event_log);
    }
    session->initialize(std::move(spec), true);
    return session;
}

std::unique_ptr<AnnotationSession> AnnotationSession::replay(const std::filesystem::path& event_log) {
    std::unique_ptr<AnnotationSession> session(new AnnotationSession());
    bool created = false;
    const auto stats = read_jsonl(
        event_log,
        [&](const json& event, std::size_t line_no) {
            const auto type = event.value("event", std::string{});
            if (!created) {
                if (type != "create")
                    throw invalid(event_log.string() + ":" + std::to_string(line_no) +
                                  ": event log must start with a create event");
                SessionSpec spec;
                spec.session_id = event.at("session_id").get<std::string>();
                for (const auto& r : event.at("reviews")) spec.reviews.push_back(review_from(r));
                spec.annotators = event.at("annotators").get<std::vector<std::string>>();
                spec.lead = event.at("lead").get<std::string>();
                spec.redundancy = event.at("redundancy").get<int>();
                spec.guideline_text = event.value("guideline_text", std::string{});
                spec.guidelines = event.value("guidelines", json::object());
                session->initialize(std::move(spec), false);
                created = true;
                return;
            }
            session->apply_event(event);
        },
        /*tolerate_torn_tail=*/true);
    if (!created) throw invalid("event log " + event_log.string() + " is empty");
    drop_torn_tail(event_log, stats);
    session->m_log = std::make_unique<AppendLog>(event_log);
    return session;
}

AnnotationSession::~AnnotationSession() = default;

void AnnotationSession::initialize(SessionSpec spec, bool write_events) {
    if (spec.session_id.empty()) throw invalid("session_id must not be empty");
    if (spec.reviews.empty()) throw invalid("empty review list");
    if (spec.redundancy < 2) throw invalid("redundancy must be at least 2");
    std::set<std::string> unique_annotators(spec.annotators.begin(), spec.annotators.end());
    if (unique_annotators.size() != spec.annotators.size()) throw invalid("duplicate annotator id");
    if (!unique_annotators.contains(spec.lead)) throw invalid("lead " + spec.lead + " is not an annotator");
    if (spec.annotators.size() < static_cast<std::size_t>(spec.redundancy))
        throw invalid("too few annotators: " + std::to_string(spec.annotators.size()) +
                      " for redundancy " + std::to_string(spec.redundancy));

    m_spec = std::move(spec);
    m_states.assign(m_spec.reviews.size(), {});
    for (std::size_t i = 0; i < m_spec.reviews.size(); ++i) {
        if (!m_review_index.emplace(m_spec.reviews[i].review_id, i).second)
            throw invalid("duplicate review id " + m_spec.reviews[i].review_id);
        m_states[i].assignees.push_back(m_spec.lead);
    }
    std::vector<std::string> others;
    for (const auto& a : m_spec.annotators)
        if (a != m_spec.lead) others.push_back(a);
    const auto shares = partition_assignments(m_spec.reviews.size(), others.size(), m_spec.redundancy);
    for (std::size_t j = 0; j < others.size(); ++j)
        for (std::size_t idx : shares[j]) m_states[idx].assignees.push_back(others[j]);

    if (!write_events) return;
    json reviews = json::array();
    for (const auto& r : m_spec.reviews) reviews.push_back(review_json(r));
    log({{"event", "create"},
         {"session_id", m_spec.session_id},
         {"annotators", m_spec.annotators},
         {"lead", m_spec.lead},
         {"redundancy", m_spec.redundancy},
         {"guideline_text", m_spec.guideline_text},
         {"guidelines", m_spec.guidelines},
         {"reviews", reviews}});
    for (const auto& a : m_spec.annotators) {
        json ids = json::array();
        for (std::size_t i = 0; i < m_states.size(); ++i) {
            const auto& as = m_states[i].assignees;
            if (std::find(as.begin(), as.end(), a) != as.end()) ids.push_back(m_spec.reviews[i].review_id);
        }
        log({{"event", "assign"}, {"annotator_id", a}, {"review_ids", ids}});
    }
}

void AnnotationSession::log(const json& event) {
    if (m_log) m_log->append(event);
}

void AnnotationSession::apply_event(const json& event) {
    const auto type = event.at("event").get<std::string>();
    if (type == "assign") {
        // assignment is a pure function of the create event; check it matches
        const auto annotator = event.at("annotator_id").get<std::string>();
        const auto ids = event.at("review_ids").get<std::vector<std::string>>();
        if (ids != assigned_reviews(annotator))
            throw invalid("event log assignment for " + annotator + " does not match the session");
    } else if (type == "label") {
        const auto label = parse_label(event.at("label").get<std::string>());
        if (!label) throw invalid("bad label in event log: " + event.dump());
        record_label(event.at("annotator_id").get<std::string>(),
                     event.at("review_id").get<std::string>(), *label,
                     event.at("submitted_at").get<std::string>(), nullptr);
    } else if (type == "adjudicate") {
        auto& state = m_states.at(m_review_index.at(event.at("review_id").get<std::string>()));
        state.tiebreaker = event.at("tiebreaker_id").get<std::string>();
    } else if (type == "close") {
        m_closed = true;
    } else {
        throw invalid("unknown event type " + type);
    }
}

bool AnnotationSession::closed() const {
    std::shared_lock lock(m_mutex);
    return m_closed;
}

const AnnotationSession::ReviewState& AnnotationSession::state_of(const std::string& review_id) const {
    auto it = m_review_index.find(review_id);
    if (it == m_review_index.end())
        throw AnnotationError("unknown_review", "unknown review " + review_id);
    return m_states[it->second];
}

std::vector<std::string> AnnotationSession::assignees(const std::string& review_id) const {
    std::shared_lock lock(m_mutex);
    return state_of(review_id).assignees;
}

std::vector<std::string> AnnotationSession::assigned_reviews(const std::string& annotator_id) const {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < m_states.size(); ++i) {
        const auto& as = m_states[i].assignees;
        if (std::find(as.begin(), as.end(), annotator_id) != as.end())
            out.push_back(m_spec.reviews[i].review_id);
    }
    return out;
}

bool AnnotationSession::in_conflict(const ReviewState& state) const {
    if (state.live.size() < state.assignees.size()) return false;
    const Label first = state.live.begin()->second.label;
    return std::any_of(state.live.begin(), state.live.end(),
                       [first](const auto& kv) { return kv.second.label != first; });
}

bool AnnotationSession::resolved(const ReviewState& state) const {
    if (state.live.size() < state.assignees.size()) return false;
    return !in_conflict(state) || state.tiebreak_label.has_value();
}

std::size_t AnnotationSession::open_tasks_locked(const std::string& annotator_id) const {
    std::size_t open = 0;
    for (const auto& state : m_states) {
        const auto& as = state.assignees;
        if (std::find(as.begin(), as.end(), annotator_id) != as.end() && !state.live.contains(annotator_id))
            ++open;
        if (state.tiebreaker == annotator_id && in_conflict(state) && !state.tiebreak_label) ++open;
    }
    return open;
}

std::string AnnotationSession::pick_tiebreaker_locked(const ReviewState& state) const {
    std::string best;
    std::size_t best_open = std::numeric_limits<std::size_t>::max();
    for (const auto& a : m_spec.annotators) {
        if (std::find(state.assignees.begin(), state.assignees.end(), a) != state.assignees.end())
            continue;
        const std::size_t open = open_tasks_locked(a);
        if (open < best_open) {
            best = a;
            best_open = open;
        }
    }
    return best;
}

Adjudication AnnotationSession::adjudication_of(const std::string& review_id,
                                                const ReviewState& state) const {
    Adjudication adj;
    adj.review_id = review_id;
    for (const auto& a : state.assignees) adj.conflicting_labels.push_back(state.live.at(a));
    adj.tiebreaker_id = state.tiebreaker;
    if (state.tiebreak_label) adj.resolution = state.tiebreak_label->label;
    return adj;
}

std::optional<Adjudication> AnnotationSession::ensure_adjudication_locked(const std::string& review_id) {
    auto& state = m_states[m_review_index.at(review_id)];
    if (!in_conflict(state) || !state.tiebreaker.empty()) return std::nullopt;
    state.tiebreaker = pick_tiebreaker_locked(state);
    if (state.tiebreaker.empty()) return adjudication_of(review_id, state);
    log({{"event", "adjudicate"}, {"review_id", review_id}, {"tiebreaker_id", state.tiebreaker}});
    return adjudication_of(review_id, state);
}

AnnotatorLabel AnnotationSession::record_label(const std::string& annotator_id,
                                               const std::string& review_id, Label label,
                                               std::string submitted_at, bool* replaced) {
    auto it = m_review_index.find(review_id);
    if (it == m_review_index.end())
        throw AnnotationError("unknown_review", "unknown review " + review_id);
    auto& state = m_states[it->second];

    AnnotatorLabel entry{annotator_id, review_id, label, std::move(submitted_at), 1};
    const bool initial = std::find(state.assignees.begin(), state.assignees.end(), annotator_id) !=
                         state.assignees.end();
    if (initial) {
        auto live = state.live.find(annotator_id);
        if (live != state.live.end()) entry.revision = live->second.revision + 1;
        if (replaced) *replaced = live != state.live.end();
        state.live[annotator_id] = entry;
    } else if (state.tiebreaker == annotator_id && in_conflict(state)) {
        if (state.tiebreak_label) entry.revision = state.tiebreak_label->revision + 1;
        if (replaced) *replaced = state.tiebreak_label.has_value();
        state.tiebreak_label = entry;
    } else {
        throw AnnotationError("unassigned",
                              "annotator " + annotator_id + " is not assigned to review " + review_id);
    }
    m_history.push_back(entry);
    return entry;
}

SubmitAck AnnotationSession::submit_label(const std::string& annotator_id,
                                          const std::string& review_id, Label label) {
    std::unique_lock lock(m_mutex);
    if (m_closed) throw AnnotationError("session_closed", "session " + m_spec.session_id + " is closed");
    SubmitAck ack;
    const auto entry = record_label(annotator_id, review_id, label, utc_timestamp(), &ack.replaced);
    log({{"event", "label"},
         {"annotator_id", entry.annotator_id},
         {"review_id", entry.review_id},
         {"label", to_string(entry.label)},
         {"submitted_at", entry.submitted_at}});
    ack.adjudication = ensure_adjudication_locked(review_id);
    ack.open_tasks = open_tasks_locked(annotator_id);
    return ack;
}

std::vector<Adjudication> AnnotationSession::detect_conflicts() {
    std::unique_lock lock(m_mutex);
    std::vector<Adjudication> out;
    for (std::size_t i = 0; i < m_states.size(); ++i) {
        const auto& id = m_spec.reviews[i].review_id;
        if (!in_conflict(m_states[i])) continue;
        if (m_states[i].tiebreaker.empty()) ensure_adjudication_locked(id);
        out.push_back(adjudication_of(id, m_states[i]));
    }
    return out;
}

SessionAgreement AnnotationSession::agreement() const {
    std::shared_lock lock(m_mutex);
    SessionAgreement result;
    const auto& annotators = m_spec.annotators;
    for (std::size_t a = 0; a < annotators.size(); ++a) {
        for (std::size_t b = a + 1; b < annotators.size(); ++b) {
            std::vector<Label> la;
            std::vector<Label> lb;
            for (const auto& state : m_states) {
                auto ia = state.live.find(annotators[a]);
                auto ib = state.live.find(annotators[b]);
                if (ia == state.live.end() || ib == state.live.end()) continue;
                la.push_back(ia->second.label);
                lb.push_back(ib->second.label);
            }
            if (la.empty()) continue;
            result.pairs.push_back({annotators[a], annotators[b], la.size(), cohens_kappa(la, lb)});
        }
    }
    if (result.pairs.empty())
        throw AnnotationError("no_overlap", "no co-annotated reviews yet");
    double total = 0;
    for (const auto& p : result.pairs) total += p.report.kappa;
    result.mean_kappa = total / static_cast<double>(result.pairs.size());
    result.band = interpret_kappa(result.mean_kappa);
    return result;
}

std::vector<GoldEntry> AnnotationSession::export_gold() const {
    std::shared_lock lock(m_mutex);
    std::size_t unresolved = 0;
    std::string first;
    for (std::size_t i = 0; i < m_states.size(); ++i) {
        if (!resolved(m_states[i])) {
            if (unresolved++ == 0) first = m_spec.reviews[i].review_id;
        }
    }
    if (unresolved > 0)
        throw AnnotationError("unresolved", std::to_string(unresolved) +
                                                " reviews are not resolved yet (first: " + first + ")");
    std::vector<GoldEntry> out;
    out.reserve(m_states.size());
    for (std::size_t i = 0; i < m_states.size(); ++i) {
        const auto& state = m_states[i];
        GoldEntry entry;
        entry.review_id = m_spec.reviews[i].review_id;
        for (const auto& a : state.assignees) entry.initial_labels.push_back(state.live.at(a));
        if (in_conflict(state)) {
            entry.adjudicated = true;
            entry.tiebreaker_id = state.tiebreaker;
            entry.label = state.tiebreak_label->label;
        } else {
            entry.label = entry.initial_labels.front().label;
        }
        out.push_back(std::move(entry));
    }
    return out;
}

std::string AnnotationSession::export_gold_jsonl() const {
    std::string out;
    for (const auto& entry : export_gold()) {
        out += to_json(entry).dump();
        out += '\n';
    }
    return out;
}

std::optional<AnnotationTask> AnnotationSession::next_task(const std::string& annotator_id) const {
    std::shared_lock lock(m_mutex);
    if (std::find(m_spec.annotators.begin(), m_spec.annotators.end(), annotator_id) ==
        m_spec.annotators.end())
        throw AnnotationError("unassigned", "annotator " + annotator_id + " is not in this session");
    if (m_closed) return std::nullopt;
    for (std::size_t i = 0; i < m_states.size(); ++i) {
        const auto& state = m_states[i];
        if (state.tiebreaker == annotator_id && in_conflict(state) && !state.tiebreak_label) {
            AnnotationTask task;
            task.review = m_spec.reviews[i];
            task.is_adjudication = true;
            for (const auto& a : state.assignees) task.prior_labels.push_back(state.live.at(a));
            return task;
        }
    }
    for (std::size_t i = 0; i < m_states.size(); ++i) {
        const auto& state = m_states[i];
        const auto& as = state.assignees;
        if (std::find(as.begin(), as.end(), annotator_id) != as.end() && !state.live.contains(annotator_id))
            return AnnotationTask{m_spec.reviews[i], false, {}};
    }
    return std::nullopt;
}

std::vector<AnnotatorProgress> AnnotationSession::progress() const {
    std::shared_lock lock(m_mutex);
    std::vector<AnnotatorProgress> out;
    for (const auto& a : m_spec.annotators) {
        AnnotatorProgress p{a, 0, 0};
        for (const auto& state : m_states) {
            const auto& as = state.assignees;
            if (std::find(as.begin(), as.end(), a) != as.end()) {
                ++p.total;
                if (state.live.contains(a)) ++p.completed;
            }
            if (state.tiebreaker == a && in_conflict(state)) {
                ++p.total;
                if (state.tiebreak_label) ++p.completed;
            }
        }
        out.push_back(p);
    }
    return out;
}

std::size_t AnnotationSession::open_tasks(const std::string& annotator_id) const {
    std::shared_lock lock(m_mutex);
    return open_tasks_locked(annotator_id);
}

void AnnotationSession::close() {
    std::unique_lock lock(m_mutex);
    if (m_closed) return;
    m_closed = true;
    log({{"event", "close"}});
}

json AnnotationSession::guidelines() const {
    return json{{"session_id", m_spec.session_id},
                {"guideline_text", m_spec.guideline_text},
                {"hypothesis_set", m_spec.guidelines}};
}

json to_json(const AnnotatorLabel& label) {
    return json{{"annotator_id", label.annotator_id},
                {"review_id", label.review_id},
                {"label", to_string(label.label)},
                {"submitted_at", label.submitted_at},
                {"revision", label.revision}};
}

json to_json(const Adjudication& adjudication) {
    json labels = json::array();
    for (const auto& l : adjudication.conflicting_labels) labels.push_back(to_json(l));
    json out{{"review_id", adjudication.review_id},
             {"conflicting_labels", labels},
             {"tiebreaker_id", adjudication.tiebreaker_id},
             {"resolution", "pending"}};
    if (adjudication.resolution) out["resolution"] = to_string(*adjudication.resolution);
    return out;
}

json to_json(const AnnotationTask& task) {
    json out{{"review_id", task.review.review_id},
             {"review_text", task.review.text},
             {"app", task.review.app},
             {"rating", nullptr},
             {"is_adjudication", task.is_adjudication},
             {"prior_labels_hidden", !task.is_adjudication}};
    if (task.review.rating) out["rating"] = *task.review.rating;
    if (task.is_adjudication) {
        json labels = json::array();
        for (const auto& l : task.prior_labels) labels.push_back(to_json(l));
        out["prior_labels"] = labels;
    }
    return out;
}

json to_json(const SessionAgreement& agreement) {
    json pairs = json::array();
    for (const auto& p : agreement.pairs)
        pairs.push_back({{"annotator_a", p.annotator_a},
                         {"annotator_b", p.annotator_b},
                         {"overlap", p.overlap},
                         {"kappa", p.report.kappa},
                         {"p_o", p.report.p_o},
                         {"p_e", p.report.p_e}});
    return json{{"pairs", pairs}, {"kappa", agreement.mean_kappa}, {"band", to_string(agreement.band)}};
}

json to_json(const GoldEntry& entry) {
    json labels = json::array();
    for (const auto& l : entry.initial_labels) labels.push_back(to_json(l));
    return json{{"review_id", entry.review_id},
                {"label", to_string(entry.label)},
                {"initial_labels", labels},
                {"adjudicated", entry.adjudicated},
                {"tiebreaker_id", entry.tiebreaker_id}};
}

} // namespace privmine
