#include "flipdeck/app.hpp"

#include <algorithm>
#include <cmath>
#include <mutex>

#include <sodium.h>

#include "flipdeck/mcq_parser.hpp"
#include "flipdeck/text.hpp"

namespace flipdeck {

namespace {

using routine::Phase;

const routine::Commit kNoCommit = [] {};

json opt(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> opt_string(const json& j, const char* key) {
    if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
    return std::nullopt;
}

std::string draft_key(const std::string& session, const std::string& actor) { return session + "/" + actor; }

const ActorRecord& caller(const AppState& st, const json& p) { return st.actor(p.at("actor").get<std::string>()); }

bool acts_as_instructor(const ActorRecord& r) {
    return r.actor.role() == Role::instructor || r.actor.role() == Role::system;
}

void require_instructor(const ActorRecord& r) {
    if (!acts_as_instructor(r)) throw Error(ErrorCode::Unauthorized, r.actor.id() + " is not an instructor");
}

fip::ProviderIdentity provider_from(const json& p) {
    if (!p.contains("provider") || !p["provider"].is_object()) return {};
    return {p["provider"].value("provider", std::string()), p["provider"].value("model", std::string())};
}

json provider_json(const fip::ProviderIdentity& p) { return json{{"provider", p.provider}, {"model", p.model}}; }

// Labels that are not single letters A..H map to '?' so the engine reports
// them after its own checks (NotFound, Unauthorized, DeadlineExpired,
// InvalidVote) instead of before.
LabelSet lenient_labels(const json& j) {
    if (!j.is_array()) throw Error(ErrorCode::BadRequest, "labels must be an array");
    LabelSet out;
    for (const auto& v : j) {
        std::string s = v.is_string() ? text::trim(v.get<std::string>()) : std::string();
        if (s.size() == 1 && std::toupper(static_cast<unsigned char>(s[0])) >= 'A' &&
            std::toupper(static_cast<unsigned char>(s[0])) <= 'H')
            out.insert(static_cast<char>(std::toupper(static_cast<unsigned char>(s[0]))));
        else
            out.insert('?');
    }
    return out;
}

McqQuestion resolve_question(const AppState& st, const json& p, const std::string& course) {
    if (auto entry_id = opt_string(p, "bank_entry")) {
        const bank::BankEntry& e = st.bank.entry(*entry_id);
        if (e.status != bank::Status::Approved)
            throw Error(ErrorCode::InvalidQuestion, "bank entry " + *entry_id + " is not approved");
        if (e.course != course) throw Error(ErrorCode::InvalidQuestion, "bank entry " + *entry_id + " belongs to another course");
        if (e.mcq() == nullptr) throw Error(ErrorCode::InvalidQuestion, "bank entry " + *entry_id + " is not multiple choice");
        return e.mcq()->id().empty() ? e.mcq()->with_id(e.id) : *e.mcq();
    }
    if (!p.contains("question")) throw Error(ErrorCode::BadRequest, "a question or bank_entry is required");
    return mcq_from_json(p["question"]);
}

bool submissions_open(const routine::RoutineSession& s) {
    if (s.kind == routine::RoutineKind::PollPromptQuiz) return s.phase == Phase::PromptPhase;
    return s.phase == Phase::JittOpen || s.phase == Phase::PromptPhase;
}

json point_json(const analytics::ComprehensionPoint& p) {
    return json{{"session_ref", p.session_ref}, {"accuracy", p.accuracy}, {"ewma", p.ewma}, {"pace", p.pace}};
}

// --- individual transitions -------------------------------------------------

json apply_actor_registered(AppState& st, const json& p, const routine::Commit& commit) {
    std::string id = text::trim(p.at("id").get<std::string>());
    if (id.empty() || id.find('/') != std::string::npos)
        throw Error(ErrorCode::BadRequest, "actor id must be non-empty and contain no '/'");
    if (st.actors.count(id) != 0U) throw Error(ErrorCode::BadRequest, "actor " + id + " is already registered");
    Role role = role_from_string(p.at("role").get<std::string>());
    std::string token = p.at("token").get<std::string>();
    if (token.empty() || st.tokens.count(token) != 0U) throw Error(ErrorCode::BadRequest, "token is empty or in use");
    auto course = opt_string(p, "course");
    commit();
    ActorRecord r{ActorRef(id, role), token, {}};
    if (course) r.courses.insert(*course);
    st.actors.emplace(id, std::move(r));
    st.tokens.emplace(token, id);
    return json{{"id", id}, {"token", token}};
}

json apply_actor_enrolled(AppState& st, const json& p, const routine::Commit& commit) {
    std::string id = p.at("id").get<std::string>();
    st.actor(id);
    std::string course = text::trim(p.at("course").get<std::string>());
    if (course.empty()) throw Error(ErrorCode::BadRequest, "course reference is empty");
    commit();
    st.actors.at(id).courses.insert(course);
    return json{{"id", id}, {"course", course}};
}

json apply_session_created(AppState& st, const json& p, Timestamp at, const routine::Commit& commit) {
    require_instructor(caller(st, p));
    auto kind = routine::routine_kind_from_string(p.at("kind").get<std::string>());
    std::string course = p.at("course").get<std::string>();
    routine::SessionConfig config;
    const json& c = p.at("config");
    config.quiz_time_limit_s = c.value("quiz_time_limit_s", config.quiz_time_limit_s);
    config.prompt_phase_enabled = c.value("prompt_phase_enabled", config.prompt_phase_enabled);
    auto key = opt_string(p, "idempotency_key");

    std::optional<pacing::State> fresh;
    if (st.courses.count(course) == 0U) {
        pacing::Params params;
        if (p.contains("pacing") && p["pacing"].is_object()) params = p["pacing"].get<pacing::Params>();
        fresh = pacing::init_pacing(params);
    }
    bool committed = false;
    std::string id = st.routines.create_session(kind, course, config, key, at, [&] {
        commit();
        committed = true;
    });
    if (committed && fresh) st.courses[course] = CoursePacing{*fresh, {}};
    return json{{"id", id}, {"created", committed}};
}

json apply_instance_opened(AppState& st, const json& p, bool quiz, Timestamp at, const routine::Commit& commit) {
    require_instructor(caller(st, p));
    std::string session = p.at("session").get<std::string>();
    const routine::RoutineSession& s = st.routines.session(session);
    McqQuestion q = resolve_question(st, p, s.course);
    auto entry = opt_string(p, "bank_entry");
    if (quiz) {
        routine::OpenedQuiz o = st.routines.open_quiz(session, q, entry, at, commit);
        return json{{"instance", o.instance}, {"deadline", o.deadline}};
    }
    return json{{"instance", st.routines.open_poll(session, q, entry, at, commit)}};
}

json apply_vote(AppState& st, const json& p, Timestamp at, const routine::Commit& commit) {
    const ActorRecord& who = caller(st, p);
    std::string instance = p.at("instance").get<std::string>();
    st.routines.instance(instance);
    st.routines.cast_vote(instance, who.actor, lenient_labels(p.at("labels")), at, commit);
    return json{{"instance", instance}, {"recorded", true}};
}

json apply_instance_closed(AppState& st, const json& p, Timestamp at, const routine::Commit& commit) {
    std::string instance = p.at("instance").get<std::string>();
    const routine::QuestionInstance& inst = st.routines.instance(instance);
    require_instructor(caller(st, p));
    routine::VoteTally tally = st.routines.close_instance(instance, at, commit);
    auto acc = inst.accuracy();
    return json{{"instance", instance},
                {"session", inst.session_id},
                {"kind", std::string(routine::to_string(inst.kind))},
                {"tally", tally},
                {"accuracy", acc ? json(*acc) : json(nullptr)},
                {"bank_entry", opt(inst.bank_entry)}};
}

json apply_phase_advanced(AppState& st, const json& p, Timestamp at, const routine::Commit& commit) {
    require_instructor(caller(st, p));
    std::string session = p.at("session").get<std::string>();
    Phase target = routine::phase_from_string(p.at("target").get<std::string>());
    const auto& s = st.routines.advance_phase(session, target, at, commit);
    return json{{"session", session}, {"phase", std::string(routine::to_string(s.phase))}};
}

json apply_jitt_opened(AppState& st, const json& p, Timestamp at, const routine::Commit& commit) {
    require_instructor(caller(st, p));
    std::string session = p.at("session").get<std::string>();
    st.routines.open_jitt(session, p.at("prompt").get<std::string>(), at, commit);
    return json{{"session", session}, {"phase", "JittOpen"}};
}

json apply_transcript(AppState& st, const json& p, const routine::Commit& commit) {
    caller(st, p);
    fip::FipTranscript t = fip::transcript_from_json(p.at("transcript"));
    std::string id = "T" + std::to_string(st.next_transcript);
    t.id = id;
    commit();
    st.transcripts.emplace(id, std::move(t));
    ++st.next_transcript;
    return json{{"id", id}};
}

routine::StudentSubmission build_submission(const AppState& st, const json& p, Timestamp at) {
    const ActorRecord& who = caller(st, p);
    json body = p.at("submission");
    std::string author_id = body.value("author_id", who.actor.id());
    const ActorRecord& author = st.actor(author_id);
    if (author_id != who.actor.id() && !acts_as_instructor(who))
        throw Error(ErrorCode::Unauthorized, "cannot submit on behalf of " + author_id);
    body["author"] = author.actor;
    routine::StudentSubmission sub = routine::submission_from_json(body);
    sub.author = author.actor;
    sub.submitted_at = at;
    sub.latency_s.reset();
    if (sub.transcript_ref && st.transcripts.count(*sub.transcript_ref) == 0U)
        throw Error(ErrorCode::NotFound, "no transcript " + *sub.transcript_ref);
    auto session = opt_string(p, "session");
    if (session) {
        st.routines.check_submission(*session, sub);
        sub = st.routines.prepare_submission(*session, sub);
    } else {
        sub.session_ref.reset();
        sub.course = text::trim(p.value("course", std::string()));
        if (sub.course.empty()) throw Error(ErrorCode::BadRequest, "a session or course is required");
        sub.validate();
    }
    return sub;
}

json apply_submission(AppState& st, const json& p, Timestamp at, const routine::Commit& commit) {
    routine::StudentSubmission sub = build_submission(st, p, at);
    const bank::BankEntry& e = st.bank.enqueue(sub, provider_from(p), commit);
    std::string id = e.id;
    if (sub.session_ref) {
        st.routines.attach_submission(*sub.session_ref, id);
        st.drafts.erase(draft_key(*sub.session_ref, sub.author.id()));
    }
    return json{{"id", id}, {"status", "Pending"}};
}

json apply_root_queued(AppState& st, const json& p, Timestamp at, const routine::Commit& commit) {
    const ActorRecord& who = caller(st, p);
    require_instructor(who);
    std::string course = text::trim(p.at("course").get<std::string>());
    if (course.empty()) throw Error(ErrorCode::BadRequest, "course reference is empty");
    RootQuestion rq = root_from_json(p.at("root"));
    bank::Provenance prov;
    prov.author = who.actor;
    prov.provider = provider_from(p);
    const bank::BankEntry& e =
        st.bank.enqueue_content(course, opt_string(p, "topic"), bank::Content{std::move(rq)}, prov, at, commit);
    return json{{"id", e.id}, {"status", "Pending"}};
}

json apply_difficulty_chosen(AppState& st, const json& p, const routine::Commit& commit) {
    const ActorRecord& who = caller(st, p);
    if (who.actor.role() != Role::student) throw Error(ErrorCode::Unauthorized, "only students choose a difficulty");
    std::string session = p.at("session").get<std::string>();
    auto choice = routine::difficulty_choice_from_string(p.at("choice").get<std::string>());
    st.routines.choose_difficulty(session, who.actor, choice, commit);
    return json{{"session", session}, {"choice", std::string(routine::to_string(choice))}};
}

json apply_consolidation(AppState& st, const json& p, Timestamp at, const routine::Commit& commit) {
    require_instructor(caller(st, p));
    std::string session = p.at("session").get<std::string>();
    auto points = p.at("talking_points").get<std::vector<std::string>>();
    if (points.size() > fip::kMaxTalkingPoints) throw Error(ErrorCode::BadRequest, "too many talking points");
    st.routines.record_consolidation(session, points, at, commit);
    return json{{"session", session}, {"talking_points", points}};
}

json apply_reproduce(AppState& st, const json& p, Timestamp at, const routine::Commit& commit) {
    const ActorRecord& who = caller(st, p);
    std::string entry = p.at("entry").get<std::string>();
    const bank::BankEntry& e = st.bank.record_reproduce_check(entry, who.actor, p.at("regenerated_text").get<std::string>(),
                                                              provider_from(p), at, commit);
    const auto& c = e.checks.back();
    return json{{"entry", entry}, {"similarity", c.similarity}, {"match", c.match}};
}

json apply_verdict(AppState& st, const json& p, Timestamp at, const routine::Commit& commit) {
    const ActorRecord& who = caller(st, p);
    std::string entry = p.at("entry").get<std::string>();
    auto decision = bank::decision_from_string(p.at("decision").get<std::string>());
    std::optional<double> difficulty;
    if (p.contains("difficulty") && !p["difficulty"].is_null()) {
        if (!p["difficulty"].is_number()) throw Error(ErrorCode::OutOfRange, "difficulty must be a number");
        difficulty = p["difficulty"].get<double>();
    }
    const bank::BankEntry& e = st.bank.record_verdict(entry, who.actor, decision, difficulty, at, commit);
    return json{{"entry", entry},
                {"status", std::string(bank::to_string(e.status))},
                {"difficulty", e.difficulty ? json(*e.difficulty) : json(nullptr)}};
}

json apply_pacing_observed(AppState& st, const json& p, const routine::Commit& commit) {
    std::string course = p.at("course").get<std::string>();
    auto it = st.courses.find(course);
    if (it == st.courses.end()) throw Error(ErrorCode::NotFound, "no pacing state for course " + course);
    double accuracy = p.at("accuracy").get<double>();
    pacing::State next = pacing::observe_quiz_outcome(it->second.state, accuracy);
    std::string session = p.value("session", std::string());
    commit();
    it->second.state = next;
    it->second.series.push_back({session, accuracy, next.comprehension, next.pace});
    return json{{"course", course}, {"state", next}};
}

json apply_difficulty_updated(AppState& st, const json& p, const routine::Commit& commit) {
    std::string entry = p.at("entry").get<std::string>();
    double d = st.bank.update_difficulty(entry, p.value("session", std::string()), p.at("accuracy").get<double>(), commit);
    return json{{"entry", entry}, {"difficulty", d}};
}

json apply_topic_started(AppState& st, const json& p, const routine::Commit& commit) {
    require_instructor(caller(st, p));
    std::string course = p.at("course").get<std::string>();
    auto it = st.courses.find(course);
    if (it == st.courses.end()) throw Error(ErrorCode::NotFound, "no pacing state for course " + course);
    pacing::State next = pacing::start_new_topic(it->second.state);
    commit();
    it->second.state = next;
    return json{{"course", course}, {"state", next}};
}

json apply_groups(AppState& st, const json& p, const routine::Commit& commit) {
    require_instructor(caller(st, p));
    std::string session = p.at("session").get<std::string>();
    auto groups = p.at("groups").get<std::vector<std::vector<std::string>>>();
    st.routines.annotate_groups(session, groups, commit);
    return json{{"session", session}, {"groups", groups}};
}

json apply_draft(AppState& st, const json& p, const routine::Commit& commit) {
    const ActorRecord& who = caller(st, p);
    std::string session = p.at("session").get<std::string>();
    const auto& s = st.routines.session(session);
    if (!submissions_open(s))
        throw Error(ErrorCode::PhaseViolation, "session " + session + " is not accepting submissions");
    std::string line = p.at("text").get<std::string>();
    if (text::trim(line).empty()) throw Error(ErrorCode::BadRequest, "empty message");
    commit();
    auto& lines = st.drafts[draft_key(session, who.actor.id())];
    lines.push_back(line);
    return json{{"session", session}, {"lines", lines.size()}};
}

} // namespace

// --- state ------------------------------------------------------------------

const ActorRecord& AppState::actor(const std::string& id) const {
    auto it = actors.find(id);
    if (it == actors.end()) throw Error(ErrorCode::NotFound, "no actor " + id);
    return it->second;
}

std::vector<std::string> AppState::roster(const std::string& course) const {
    std::vector<std::string> out;
    for (const auto& [id, r] : actors)
        if (r.actor.role() == Role::student && r.courses.count(course) != 0U) out.push_back(id);
    return out;
}

json AppState::to_json() const {
    json a = json::object();
    for (const auto& [id, r] : actors)
        a[id] = {{"role", std::string(flipdeck::to_string(r.actor.role()))}, {"token", r.token}, {"courses", r.courses}};
    json c = json::object();
    for (const auto& [id, cp] : courses) {
        json series = json::array();
        for (const auto& pt : cp.series) series.push_back(point_json(pt));
        c[id] = {{"state", cp.state}, {"series", series}};
    }
    json t = json::object();
    for (const auto& [id, tr] : transcripts) t[id] = tr;
    return json{{"actors", a},
                {"routines", routines.to_json()},
                {"bank", bank.to_json()},
                {"courses", c},
                {"transcripts", t},
                {"next_transcript", next_transcript},
                {"drafts", drafts}};
}

AppState AppState::from_json(const json& j) {
    AppState st;
    for (const auto& [id, v] : j.at("actors").items()) {
        ActorRecord r{ActorRef(id, role_from_string(v.at("role").get<std::string>())), v.at("token").get<std::string>(),
                      v.at("courses").get<std::set<std::string>>()};
        st.tokens.emplace(r.token, id);
        st.actors.emplace(id, std::move(r));
    }
    st.routines = routine::Engine::from_json(j.at("routines"));
    st.bank = bank::Bank::from_json(j.at("bank"));
    for (const auto& [id, v] : j.at("courses").items()) {
        CoursePacing cp;
        cp.state = v.at("state").get<pacing::State>();
        for (const auto& pt : v.at("series"))
            cp.series.push_back({pt.at("session_ref").get<std::string>(), pt.at("accuracy").get<double>(),
                                 pt.at("ewma").get<double>(), pt.at("pace").get<double>()});
        st.courses.emplace(id, std::move(cp));
    }
    for (const auto& [id, v] : j.at("transcripts").items()) st.transcripts.emplace(id, fip::transcript_from_json(v));
    st.next_transcript = j.at("next_transcript").get<std::uint64_t>();
    st.drafts = j.at("drafts").get<std::map<std::string, std::vector<std::string>>>();
    return st;
}

json apply_event(AppState& st, const std::string& kind, const json& payload, Timestamp at,
                 const routine::Commit& commit) {
    try {
        if (kind == "actor.registered") return apply_actor_registered(st, payload, commit);
        if (kind == "actor.enrolled") return apply_actor_enrolled(st, payload, commit);
        if (kind == "session.created") return apply_session_created(st, payload, at, commit);
        if (kind == "poll.opened") return apply_instance_opened(st, payload, false, at, commit);
        if (kind == "quiz.opened") return apply_instance_opened(st, payload, true, at, commit);
        if (kind == "vote.cast") return apply_vote(st, payload, at, commit);
        if (kind == "instance.closed") return apply_instance_closed(st, payload, at, commit);
        if (kind == "phase.advanced") return apply_phase_advanced(st, payload, at, commit);
        if (kind == "jitt.opened") return apply_jitt_opened(st, payload, at, commit);
        if (kind == "transcript.recorded") return apply_transcript(st, payload, commit);
        if (kind == "submission.queued") return apply_submission(st, payload, at, commit);
        if (kind == "root.queued") return apply_root_queued(st, payload, at, commit);
        if (kind == "difficulty.chosen") return apply_difficulty_chosen(st, payload, commit);
        if (kind == "consolidation.recorded") return apply_consolidation(st, payload, at, commit);
        if (kind == "reproduce.checked") return apply_reproduce(st, payload, at, commit);
        if (kind == "verdict.recorded") return apply_verdict(st, payload, at, commit);
        if (kind == "pacing.observed") return apply_pacing_observed(st, payload, commit);
        if (kind == "difficulty.updated") return apply_difficulty_updated(st, payload, commit);
        if (kind == "pacing.topic_started") return apply_topic_started(st, payload, commit);
        if (kind == "groups.annotated") return apply_groups(st, payload, commit);
        if (kind == "draft.appended") return apply_draft(st, payload, commit);
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadRequest, "malformed " + kind + " payload: " + e.what());
    }
    throw Error(ErrorCode::BadRequest, "unknown event kind '" + kind + "'");
}

AppState fold_events(const std::vector<events::EventEnvelope>& evs, std::optional<events::Snapshot> snapshot) {
    AppState st;
    std::uint64_t from = 0;
    if (snapshot) {
        st = AppState::from_json(snapshot->state);
        from = snapshot->seq;
    }
    for (const auto& e : evs) {
        if (e.seq <= from) continue;
        try {
            apply_event(st, e.kind, e.payload, e.ts, kNoCommit);
        } catch (const Error& err) {
            throw Error(ErrorCode::CorruptRecord,
                        "event " + std::to_string(e.seq) + " (" + e.kind + ") does not apply: " + err.what());
        }
    }
    return st;
}

AppState rebuild_from_bytes(std::string_view log_bytes) { return fold_events(events::decode_log(log_bytes).events); }

std::string mint_token(const std::string& secret, const std::string& actor_id) {
    static std::once_flag once;
    std::call_once(once, [] {
        if (sodium_init() < 0) throw Error(ErrorCode::StorageFailure, "libsodium failed to initialize");
    });
    unsigned char key[crypto_generichash_KEYBYTES];
    crypto_generichash(key, sizeof key, reinterpret_cast<const unsigned char*>(secret.data()), secret.size(), nullptr, 0);
    unsigned char out[16];
    crypto_generichash(out, sizeof out, reinterpret_cast<const unsigned char*>(actor_id.data()), actor_id.size(), key,
                       sizeof key);
    char hex[sizeof out * 2 + 1];
    sodium_bin2hex(hex, sizeof hex, out, sizeof out);
    return std::string("fd_") + hex;
}

// --- application ------------------------------------------------------------

Application::Application(std::unique_ptr<events::Storage> storage, AppOptions options)
    : store_(std::move(storage)), options_(std::move(options)) {
    pacing::init_pacing(options_.pacing);
    std::optional<events::Snapshot> snap;
    if (auto bytes = store_.storage().read_snapshot()) {
        snap = events::decode_snapshot(*bytes);
        if (snap && snap->seq > store_.last_seq()) snap.reset();
    }
    if (snap) {
        try {
            state_ = fold_events(store_.events(), snap);
            return;
        } catch (const std::exception&) {
            // fall back to the full log
        }
    }
    state_ = fold_events(store_.events());
}

json Application::execute(const std::string& kind, json payload, Timestamp at) {
    bool appended = false;
    json result = apply_event(state_, kind, payload, at, [&] {
        store_.append(kind, payload, at);
        appended = true;
    });
    if (appended) {
        const events::EventEnvelope& e = store_.events().back();
        if (options_.snapshot_interval > 0 && e.seq % options_.snapshot_interval == 0) {
            try {
                store_.storage().write_snapshot(events::encode_snapshot({e.seq, state_.to_json()}));
            } catch (const Error&) {
                // the log alone is authoritative
            }
        }
        if (listener_) listener_(e);
    }
    return result;
}

std::string Application::register_actor(const std::string& id, Role role, const std::optional<std::string>& course,
                                         Timestamp at) {
    json r = execute("actor.registered",
                     {{"id", id}, {"role", std::string(to_string(role))}, {"token", mint_token(options_.auth_secret, id)},
                      {"course", opt(course)}},
                     at);
    return r.at("token").get<std::string>();
}

void Application::enroll(const std::string& actor, const std::string& course, Timestamp at) {
    execute("actor.enrolled", {{"id", actor}, {"course", course}}, at);
}

std::string Application::create_session(const std::string& actor, routine::RoutineKind kind, const std::string& course,
                                        const routine::SessionConfig& config,
                                        const std::optional<std::string>& idempotency_key, Timestamp at) {
    json p = {{"actor", actor},
              {"kind", std::string(routine::to_string(kind))},
              {"course", course},
              {"config", {{"quiz_time_limit_s", config.quiz_time_limit_s},
                          {"prompt_phase_enabled", config.prompt_phase_enabled}}},
              {"idempotency_key", opt(idempotency_key)}};
    if (state_.courses.count(course) == 0U) p["pacing"] = options_.pacing;
    return execute("session.created", std::move(p), at).at("id").get<std::string>();
}

namespace {
json source_payload(const std::string& actor, const std::string& session, const QuestionSource& source) {
    json p = {{"actor", actor}, {"session", session}};
    if (source.bank_entry) p["bank_entry"] = *source.bank_entry;
    if (source.question) p["question"] = *source.question;
    return p;
}
} // namespace

std::string Application::open_poll(const std::string& actor, const std::string& session, const QuestionSource& source,
                                   Timestamp at) {
    return execute("poll.opened", source_payload(actor, session, source), at).at("instance").get<std::string>();
}

routine::OpenedQuiz Application::open_quiz(const std::string& actor, const std::string& session,
                                           const QuestionSource& source, Timestamp at) {
    json r = execute("quiz.opened", source_payload(actor, session, source), at);
    return {r.at("instance").get<std::string>(), r.at("deadline").get<Timestamp>()};
}

void Application::cast_vote(const std::string& actor, const std::string& instance, const LabelSet& labels, Timestamp at) {
    json ls = json::array();
    for (Label l : labels) ls.push_back(std::string(1, l));
    execute("vote.cast", {{"actor", actor}, {"instance", instance}, {"labels", ls}}, at);
}

routine::VoteTally Application::close_instance(const std::string& actor, const std::string& instance, Timestamp at) {
    json r = execute("instance.closed", {{"actor", actor}, {"instance", instance}}, at);
    const routine::QuestionInstance& inst = state_.routines.instance(instance);
    if (inst.kind == routine::InstanceKind::quiz && r.at("accuracy").is_number()) {
        double acc = r["accuracy"].get<double>();
        const std::string& course = state_.routines.session(inst.session_id).course;
        execute("pacing.observed", {{"course", course}, {"session", inst.session_id}, {"accuracy", acc}}, at);
        if (inst.bank_entry) {
            const auto& e = state_.bank.entry(*inst.bank_entry);
            if (e.status == bank::Status::Approved)
                execute("difficulty.updated", {{"entry", *inst.bank_entry}, {"session", inst.session_id}, {"accuracy", acc}},
                        at);
        }
    }
    return inst.tally;
}

const routine::RoutineSession& Application::advance_phase(const std::string& actor, const std::string& session,
                                                          routine::Phase target, Timestamp at) {
    execute("phase.advanced", {{"actor", actor}, {"session", session}, {"target", std::string(routine::to_string(target))}},
            at);
    return state_.routines.session(session);
}

void Application::open_jitt(const std::string& actor, const std::string& session, const std::string& prompt,
                            Timestamp at) {
    execute("jitt.opened", {{"actor", actor}, {"session", session}, {"prompt", prompt}}, at);
}

std::string Application::record_transcript(const std::string& actor, const fip::FipTranscript& transcript,
                                           Timestamp at) {
    return execute("transcript.recorded", {{"actor", actor}, {"transcript", transcript}}, at).at("id").get<std::string>();
}

std::string Application::submit(const std::string& actor, const std::optional<std::string>& session,
                                const std::optional<std::string>& course, const SubmissionInput& input, Timestamp at) {
    json body = {{"author_id", input.author.value_or(actor)},
                 {"question", input.question ? json(*input.question) : json(nullptr)},
                 {"open_text", opt(input.open_text)},
                 {"prompts", input.prompts},
                 {"transcript_ref", opt(input.transcript_ref)},
                 {"summary", opt(input.summary)},
                 {"topic", opt(input.topic)},
                 {"attachment", input.attachment ? json(*input.attachment) : json(nullptr)}};
    json p = {{"actor", actor},
              {"session", opt(session)},
              {"course", opt(course)},
              {"submission", body},
              {"provider", provider_json(input.provider)}};
    if (input.transcript) {
        // Validate first so a rejected submission leaves no orphan transcript.
        json probe = p;
        probe["submission"]["transcript_ref"] = nullptr;
        build_submission(state_, probe, at);
        std::string tid = record_transcript(actor, *input.transcript, at);
        p["submission"]["transcript_ref"] = tid;
    }
    return execute("submission.queued", std::move(p), at).at("id").get<std::string>();
}

std::string Application::queue_root(const std::string& actor, const std::string& course,
                                    const std::optional<std::string>& topic, const RootQuestion& root, Timestamp at) {
    return execute("root.queued", {{"actor", actor}, {"course", course}, {"topic", opt(topic)}, {"root", root}}, at)
        .at("id")
        .get<std::string>();
}

void Application::choose_difficulty(const std::string& actor, const std::string& session,
                                    routine::DifficultyChoice choice, Timestamp at) {
    execute("difficulty.chosen",
            {{"actor", actor}, {"session", session}, {"choice", std::string(routine::to_string(choice))}}, at);
}

std::vector<std::string> Application::consolidate(const std::string& actor, const std::string& session,
                                                  fip::ProviderPort& provider, Timestamp at) {
    require_instructor(state_.actor(actor));
    const auto& s = state_.routines.session(session);
    if (s.kind != routine::RoutineKind::QuizPromptDiscuss || s.phase != Phase::PromptPhase)
        throw Error(ErrorCode::PhaseViolation, "session " + session + " is not ready for consolidation");
    std::vector<std::string> responses;
    for (const auto& id : s.submissions) responses.push_back(state_.bank.entry(id).question_text());
    std::vector<std::string> points = fip::consolidate_responses(responses, provider);
    execute("consolidation.recorded",
            {{"actor", actor}, {"session", session}, {"talking_points", points},
             {"provider", provider_json(provider.identity())}},
            at);
    return points;
}

bank::ReproduceCheck Application::reproduce(const std::string& actor, const std::string& entry,
                                            const std::string& regenerated, const fip::ProviderIdentity& provider,
                                            Timestamp at) {
    execute("reproduce.checked",
            {{"actor", actor}, {"entry", entry}, {"regenerated_text", regenerated}, {"provider", provider_json(provider)}},
            at);
    return state_.bank.entry(entry).checks.back();
}

const bank::BankEntry& Application::record_verdict(const std::string& actor, const std::string& entry,
                                                   bank::Decision decision, std::optional<double> initial_difficulty,
                                                   Timestamp at) {
    execute("verdict.recorded",
            {{"actor", actor},
             {"entry", entry},
             {"decision", decision == bank::Decision::Approve ? "Approve" : "Reject"},
             {"difficulty", initial_difficulty ? json(*initial_difficulty) : json(nullptr)}},
            at);
    return state_.bank.entry(entry);
}

pacing::State Application::start_new_topic(const std::string& actor, const std::string& course, Timestamp at) {
    execute("pacing.topic_started", {{"actor", actor}, {"course", course}}, at);
    return state_.courses.at(course).state;
}

void Application::annotate_groups(const std::string& actor, const std::string& session,
                                  const std::vector<std::vector<std::string>>& groups, Timestamp at) {
    execute("groups.annotated", {{"actor", actor}, {"session", session}, {"groups", groups}}, at);
}

void Application::append_draft(const std::string& actor, const std::string& session, const std::string& text,
                               Timestamp at) {
    execute("draft.appended", {{"actor", actor}, {"session", session}, {"text", text}}, at);
}

std::string Application::submit_draft(const std::string& actor, const std::string& session, Timestamp at) {
    auto it = state_.drafts.find(draft_key(session, actor));
    if (it == state_.drafts.end() || it->second.empty())
        throw Error(ErrorCode::InvalidSubmission, "nothing drafted for " + session);
    SubmissionInput in;
    std::string body;
    for (const auto& line : it->second) {
        std::string t = text::trim(line);
        if (text::istarts_with(t, "prompt:")) {
            in.prompts.push_back(text::trim(t.substr(7)));
        } else {
            if (!body.empty()) body += "\n";
            body += line;
        }
    }
    if (!text::trim(body).empty()) {
        auto report = mcq::parse_mcq(body, QuestionKind::clicker_quiz);
        if (!report.ok() && report.failure == mcq::ParseFailure::NoAnswerKey)
            report = mcq::parse_mcq(body, QuestionKind::poll);
        if (report.ok())
            in.question = *report.question;
        else
            in.open_text = text::trim(body);
    }
    in.provider = {"chat", "student"};
    return submit(actor, session, std::nullopt, in, at);
}

routine::VoteTally Application::view_tally(const std::string& actor, const std::string& instance) const {
    return state_.routines.view_tally(instance, state_.actor(actor).actor);
}

const ActorRecord& Application::authenticate(const std::string& token) const {
    auto it = state_.tokens.find(token);
    if (it == state_.tokens.end()) throw Error(ErrorCode::Unauthenticated, "unknown or missing token");
    return state_.actors.at(it->second);
}

RecommendationView Application::recommendation(const std::string& course) const {
    RecommendationView v;
    auto it = state_.courses.find(course);
    v.state = it == state_.courses.end() ? pacing::init_pacing(options_.pacing) : it->second.state;
    bank::Query q;
    q.course = course;
    q.status = bank::Status::Approved;
    v.recommendation = pacing::recommend_next(v.state, state_.bank.query(q).size());
    for (const auto* e : state_.bank.select(course, v.recommendation.band,
                                            static_cast<std::size_t>(v.recommendation.item_count)))
        v.selection.push_back(e->id);
    return v;
}

std::vector<const bank::BankEntry*> Application::selection_for(const std::string& actor,
                                                               const std::string& session) const {
    const auto& s = state_.routines.session(session);
    RecommendationView rec = recommendation(s.course);
    pacing::Band band = rec.recommendation.band;
    if (auto it = s.difficulty.find(actor); it != s.difficulty.end()) band = routine::band_for(it->second);
    return state_.bank.select(s.course, band, static_cast<std::size_t>(std::max(rec.recommendation.item_count, 1)));
}

analytics::DaysHistogram Application::time_to_answer(const std::string& course) const {
    std::map<std::pair<std::string, std::string>, Timestamp> first;
    for (const auto& [id, e] : state_.bank.entries()) {
        if (!e.provenance.session_ref) continue;
        auto key = std::make_pair(*e.provenance.session_ref, e.provenance.author.id());
        auto [it, inserted] = first.emplace(key, e.submitted_at);
        if (!inserted) it->second = std::min(it->second, e.submitted_at);
    }
    std::vector<std::string> roster = state_.roster(course);
    std::vector<analytics::Assignment> rows;
    for (const auto& sid : state_.routines.session_order()) {
        const auto& s = state_.routines.session(sid);
        if (s.course != course || s.kind != routine::RoutineKind::QuizPromptDiscuss || !s.jitt_assigned_at) continue;
        for (const auto& student : roster) {
            analytics::Assignment a{*s.jitt_assigned_at, std::nullopt};
            if (auto it = first.find({sid, student}); it != first.end()) a.answered_at = it->second;
            rows.push_back(a);
        }
    }
    return analytics::time_to_answer(rows);
}

analytics::DifficultyStats Application::difficulty_stats(const std::string& course) const {
    bank::Query q;
    q.course = course;
    q.status = bank::Status::Approved;
    std::vector<double> values;
    for (const auto* e : state_.bank.query(q))
        if (e->difficulty) values.push_back(*e->difficulty);
    return analytics::difficulty_stats(values);
}

std::vector<analytics::LeaderboardRow> Application::leaderboard(const std::string& course) const {
    std::map<std::string, std::int64_t> scores;
    for (const auto& student : state_.roster(course)) scores[student] = 0;
    for (const auto& [id, e] : state_.bank.entries()) {
        if (e.course != course || e.status != bank::Status::Approved) continue;
        auto it = scores.find(e.provenance.author.id());
        if (it != scores.end()) ++it->second;
    }
    return analytics::leaderboard(scores);
}

std::vector<analytics::ComprehensionPoint> Application::comprehension_series(const std::string& course) const {
    auto it = state_.courses.find(course);
    if (it == state_.courses.end()) return {};
    return it->second.series;
}

std::string Application::export_csv(const std::string& course, const std::string& what) const {
    if (what == "histogram") return analytics::histogram_csv(time_to_answer(course));
    if (what == "unanswered") return analytics::unanswered_csv(time_to_answer(course));
    if (what == "difficulty") return analytics::difficulty_csv(difficulty_stats(course));
    if (what == "leaderboard") return analytics::leaderboard_csv(leaderboard(course));
    if (what == "comprehension") return analytics::comprehension_csv(comprehension_series(course));
    throw Error(ErrorCode::NotFound, "no export named " + what);
}

} // namespace flipdeck
