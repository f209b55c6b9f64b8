#include "flipdeck/bank.hpp"

#include <algorithm>
#include <cmath>

#include "flipdeck/mcq_parser.hpp"
#include "flipdeck/similarity.hpp"
#include "flipdeck/text.hpp"

namespace flipdeck::bank {

namespace {

json opt(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> opt_string(const json& j, const char* key) {
    if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
    return std::nullopt;
}

json content_to_json(const Content& c) {
    if (const auto* q = std::get_if<McqQuestion>(&c)) return json{{"type", "mcq"}, {"mcq", *q}};
    if (const auto* r = std::get_if<RootQuestion>(&c)) return json{{"type", "root"}, {"root", *r}};
    return json{{"type", "open"}, {"text", std::get<OpenPrompt>(c).text}};
}

Content content_from_json(const json& j) {
    std::string type = j.at("type").get<std::string>();
    if (type == "mcq") return mcq_from_json(j.at("mcq"));
    if (type == "root") return root_from_json(j.at("root"));
    return OpenPrompt{j.at("text").get<std::string>()};
}

json provider_json(const fip::ProviderIdentity& p) { return json{{"provider", p.provider}, {"model", p.model}}; }

fip::ProviderIdentity provider_from_json(const json& j) {
    return {j.value("provider", std::string()), j.value("model", std::string())};
}

Timestamp order_time(const BankEntry& e) { return e.decided_at.value_or(e.submitted_at); }

} // namespace

std::string_view to_string(Status s) noexcept {
    switch (s) {
    case Status::Pending: return "Pending";
    case Status::Approved: return "Approved";
    case Status::Rejected: return "Rejected";
    }
    return "Pending";
}

Status status_from_string(std::string_view s) {
    if (s == "Pending") return Status::Pending;
    if (s == "Approved") return Status::Approved;
    if (s == "Rejected") return Status::Rejected;
    throw Error(ErrorCode::BadRequest, "unknown status '" + std::string(s) + "'");
}

Decision decision_from_string(std::string_view s) {
    if (s == "Approve" || s == "approve") return Decision::Approve;
    if (s == "Reject" || s == "reject") return Decision::Reject;
    throw Error(ErrorCode::BadRequest, "decision must be Approve or Reject");
}

std::string BankEntry::question_text() const {
    if (const auto* q = std::get_if<McqQuestion>(&question)) return mcq::render_mcq(*q);
    if (const auto* r = std::get_if<RootQuestion>(&question)) {
        std::string out = r->problem_statement();
        for (const auto& item : r->items()) out += "\n\n" + mcq::render_mcq(item);
        return out;
    }
    return std::get<OpenPrompt>(question).text;
}

std::string BankEntry::kind() const {
    if (const auto* q = std::get_if<McqQuestion>(&question)) return std::string(flipdeck::to_string(q->kind()));
    if (std::holds_alternative<RootQuestion>(question)) return "root";
    return "jitt_quiz";
}

ReproduceResult reproduce_check(std::string_view submitted_text, std::string_view regenerated_text) {
    ReproduceResult r;
    r.similarity = token_jaccard(submitted_text, regenerated_text);
    r.match = r.similarity >= kReproduceThreshold;
    return r;
}

double next_difficulty(double difficulty, double accuracy) {
    double observed = 1.0 + 9.0 * (1.0 - accuracy);
    double d = (1.0 - kDifficultyWeight) * difficulty + kDifficultyWeight * observed;
    return std::clamp(d, 1.0, 10.0);
}

BankEntry& Bank::entry_mut(const std::string& id) {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw Error(ErrorCode::NotFound, "no bank entry " + id);
    return it->second;
}

const BankEntry& Bank::entry(const std::string& id) const {
    auto it = entries_.find(id);
    if (it == entries_.end()) throw Error(ErrorCode::NotFound, "no bank entry " + id);
    return it->second;
}

const BankEntry& Bank::enqueue(const routine::StudentSubmission& submission, const fip::ProviderIdentity& provider,
                               const Commit& commit) {
    submission.validate();
    Content content = submission.question ? Content{*submission.question}
                                          : Content{OpenPrompt{text::trim(*submission.open_text)}};
    Provenance prov;
    prov.author = submission.author;
    prov.submission_ref = next_id();
    prov.provider = provider;
    prov.prompts = submission.prompts;
    prov.transcript_ref = submission.transcript_ref;
    prov.session_ref = submission.session_ref;
    prov.summary = submission.summary;
    const BankEntry& e = enqueue_content(submission.course, submission.topic, std::move(content), std::move(prov),
                                         submission.submitted_at, commit);
    entry_mut(e.id).attachment = submission.attachment;
    return e;
}

const BankEntry& Bank::enqueue_content(std::string course, std::optional<std::string> topic, Content content,
                                       Provenance provenance, Timestamp at, const Commit& commit) {
    commit();
    BankEntry e;
    e.id = next_id();
    e.ordinal = next_ordinal_++;
    e.course = std::move(course);
    e.topic = std::move(topic);
    e.question = std::move(content);
    e.provenance = std::move(provenance);
    e.provenance.submission_ref = e.id;
    e.submitted_at = at;
    std::string id = e.id;
    return entries_.emplace(id, std::move(e)).first->second;
}

const BankEntry& Bank::record_reproduce_check(const std::string& entry_id, const ActorRef& reviewer,
                                              const std::string& regenerated_text,
                                              const fip::ProviderIdentity& provider, Timestamp at,
                                              const Commit& commit) {
    if (!reviewer.can_review()) throw Error(ErrorCode::Unauthorized, "only instructors and assistants vet submissions");
    BankEntry& e = entry_mut(entry_id);
    ReproduceResult r = reproduce_check(e.question_text(), regenerated_text);
    commit();
    e.checks.push_back({reviewer.id(), regenerated_text, provider, r.similarity, r.match, at});
    return e;
}

const BankEntry& Bank::record_verdict(const std::string& entry_id, const ActorRef& reviewer, Decision decision,
                                      std::optional<double> initial_difficulty, Timestamp at, const Commit& commit) {
    if (!reviewer.can_review()) throw Error(ErrorCode::Unauthorized, "only instructors and assistants vet submissions");
    BankEntry& e = entry_mut(entry_id);
    if (e.status != Status::Pending) throw Error(ErrorCode::AlreadyDecided, "entry " + entry_id + " was already decided");
    if (decision == Decision::Approve) {
        if (!initial_difficulty || *initial_difficulty < 1.0 || *initial_difficulty > 10.0 ||
            *initial_difficulty != std::floor(*initial_difficulty))
            throw Error(ErrorCode::OutOfRange, "approval needs an integer difficulty in 1..10");
    }
    commit();
    e.status = decision == Decision::Approve ? Status::Approved : Status::Rejected;
    e.decided_at = at;
    e.reviewer = reviewer.id();
    if (decision == Decision::Approve) {
        e.initial_difficulty = initial_difficulty;
        e.difficulty = initial_difficulty;
    }
    return e;
}

double Bank::update_difficulty(const std::string& entry_id, const std::string& session_ref, double accuracy,
                               const Commit& commit) {
    BankEntry& e = entry_mut(entry_id);
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw Error(ErrorCode::OutOfRange, "accuracy must lie in [0, 1]");
    if (e.status != Status::Approved || !e.difficulty)
        throw Error(ErrorCode::PhaseViolation, "only approved entries carry a difficulty");
    commit();
    e.difficulty = next_difficulty(*e.difficulty, accuracy);
    e.performance.push_back({session_ref, accuracy});
    return *e.difficulty;
}

std::vector<const BankEntry*> Bank::query(const Query& q) const {
    std::vector<const BankEntry*> out;
    for (const auto& [id, e] : entries_) {
        if (q.status && e.status != *q.status) continue;
        if (q.course && e.course != *q.course) continue;
        if (q.topic && (!e.topic || text::to_lower_ascii(*e.topic) != text::to_lower_ascii(*q.topic))) continue;
        if (q.kind && e.kind() != *q.kind) continue;
        if (q.band && (!e.difficulty || !q.band->contains(*e.difficulty))) continue;
        out.push_back(&e);
    }
    std::sort(out.begin(), out.end(), [](const BankEntry* a, const BankEntry* b) {
        Timestamp ta = order_time(*a);
        Timestamp tb = order_time(*b);
        if (ta != tb) return ta > tb;
        return a->ordinal < b->ordinal;
    });
    return out;
}

std::vector<const BankEntry*> Bank::select(std::optional<std::string> course, pacing::Band band,
                                           std::size_t count) const {
    Query q;
    q.course = std::move(course);
    q.band = band;
    q.status = Status::Approved;
    auto all = query(q);
    if (all.size() > count) all.resize(count);
    return all;
}

void to_json(json& j, const BankEntry& e) {
    json checks = json::array();
    for (const auto& c : e.checks)
        checks.push_back({{"reviewer", c.reviewer},
                          {"regenerated_text", c.regenerated_text},
                          {"provider", provider_json(c.provider)},
                          {"similarity", c.similarity},
                          {"match", c.match},
                          {"at", c.at}});
    json perf = json::array();
    for (const auto& p : e.performance) perf.push_back({{"session_ref", p.session_ref}, {"accuracy", p.accuracy}});
    j = json{{"id", e.id},
             {"ordinal", e.ordinal},
             {"course", e.course},
             {"topic", opt(e.topic)},
             {"kind", e.kind()},
             {"question", content_to_json(e.question)},
             {"provenance",
              {{"author", e.provenance.author},
               {"submission_ref", e.provenance.submission_ref},
               {"provider", provider_json(e.provenance.provider)},
               {"prompts", e.provenance.prompts},
               {"transcript_ref", opt(e.provenance.transcript_ref)},
               {"session_ref", opt(e.provenance.session_ref)},
               {"summary", opt(e.provenance.summary)}}},
             {"difficulty", e.difficulty ? json(*e.difficulty) : json(nullptr)},
             {"initial_difficulty", e.initial_difficulty ? json(*e.initial_difficulty) : json(nullptr)},
             {"performance", perf},
             {"status", std::string(to_string(e.status))},
             {"attachment", e.attachment ? json(*e.attachment) : json(nullptr)},
             {"submitted_at", e.submitted_at},
             {"decided_at", e.decided_at ? json(*e.decided_at) : json(nullptr)},
             {"reviewer", opt(e.reviewer)},
             {"checks", checks}};
}

json public_view(const BankEntry& e) {
    json out = {{"id", e.id}, {"topic", opt(e.topic)}, {"kind", e.kind()}};
    if (const auto* q = e.mcq()) {
        json opts = json::array();
        for (const auto& o : q->options()) opts.push_back({{"label", std::string(1, o.label)}, {"text", o.text}});
        out["stem"] = q->stem();
        out["options"] = opts;
    } else {
        out["text"] = e.question_text();
    }
    out["difficulty"] = e.difficulty ? json(*e.difficulty) : json(nullptr);
    return out;
}

json Bank::to_json() const {
    json entries = json::object();
    for (const auto& [id, e] : entries_) entries[id] = e;
    return json{{"entries", entries}, {"next_ordinal", next_ordinal_}};
}

Bank Bank::from_json(const json& j) {
    Bank b;
    b.next_ordinal_ = j.at("next_ordinal").get<std::uint64_t>();
    for (const auto& [id, v] : j.at("entries").items()) {
        BankEntry e;
        e.id = v.at("id").get<std::string>();
        e.ordinal = v.at("ordinal").get<std::uint64_t>();
        e.course = v.at("course").get<std::string>();
        e.topic = opt_string(v, "topic");
        e.question = content_from_json(v.at("question"));
        const json& p = v.at("provenance");
        e.provenance.author = actor_from_json(p.at("author"));
        e.provenance.submission_ref = p.at("submission_ref").get<std::string>();
        e.provenance.provider = provider_from_json(p.at("provider"));
        e.provenance.prompts = p.at("prompts").get<std::vector<std::string>>();
        e.provenance.transcript_ref = opt_string(p, "transcript_ref");
        e.provenance.session_ref = opt_string(p, "session_ref");
        e.provenance.summary = opt_string(p, "summary");
        if (v.at("difficulty").is_number()) e.difficulty = v["difficulty"].get<double>();
        if (v.at("initial_difficulty").is_number()) e.initial_difficulty = v["initial_difficulty"].get<double>();
        for (const auto& r : v.at("performance"))
            e.performance.push_back({r.at("session_ref").get<std::string>(), r.at("accuracy").get<double>()});
        e.status = status_from_string(v.at("status").get<std::string>());
        if (v.at("attachment").is_object())
            e.attachment = routine::Attachment{v["attachment"].at("media_type").get<std::string>(),
                                               v["attachment"].at("data_base64").get<std::string>()};
        e.submitted_at = v.at("submitted_at").get<Timestamp>();
        if (v.at("decided_at").is_number_integer()) e.decided_at = v["decided_at"].get<Timestamp>();
        e.reviewer = opt_string(v, "reviewer");
        for (const auto& c : v.at("checks"))
            e.checks.push_back({c.at("reviewer").get<std::string>(), c.at("regenerated_text").get<std::string>(),
                                provider_from_json(c.at("provider")), c.at("similarity").get<double>(),
                                c.at("match").get<bool>(), c.at("at").get<Timestamp>()});
        b.entries_.emplace(id, std::move(e));
    }
    return b;
}

} // namespace flipdeck::bank
