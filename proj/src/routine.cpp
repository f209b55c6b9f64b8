#include "flipdeck/routine.hpp"

#include <algorithm>
#include <array>

#include "flipdeck/mcq_parser.hpp"
#include "flipdeck/text.hpp"

namespace flipdeck::routine {

namespace {

constexpr std::array<Phase, 7> kPollPromptQuizOrder = {Phase::Created,    Phase::PollOpen,   Phase::PollClosed,
                                                       Phase::PromptPhase, Phase::QuizOpen, Phase::QuizClosed,
                                                       Phase::Discussed};
constexpr std::array<Phase, 5> kQuizPromptDiscussOrder = {Phase::Created, Phase::JittOpen, Phase::PromptPhase,
                                                          Phase::Consolidated, Phase::Discussed};

[[noreturn]] void phase_violation(const RoutineSession& s, std::string_view what) {
    throw Error(ErrorCode::PhaseViolation, std::string(what) + " is not allowed in phase " +
                                               std::string(to_string(s.phase)) + " of session " + s.id);
}

json opt(const std::optional<std::string>& v) { return v ? json(*v) : json(nullptr); }
json opt(const std::optional<Timestamp>& v) { return v ? json(*v) : json(nullptr); }

std::optional<std::string> opt_string(const json& j, const char* key) {
    if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
    return std::nullopt;
}

std::optional<Timestamp> opt_ts(const json& j, const char* key) {
    if (j.contains(key) && j[key].is_number_integer()) return j[key].get<Timestamp>();
    return std::nullopt;
}

} // namespace

std::string_view to_string(RoutineKind k) noexcept {
    return k == RoutineKind::PollPromptQuiz ? "PollPromptQuiz" : "QuizPromptDiscuss";
}

RoutineKind routine_kind_from_string(std::string_view s) {
    if (s == "PollPromptQuiz") return RoutineKind::PollPromptQuiz;
    if (s == "QuizPromptDiscuss") return RoutineKind::QuizPromptDiscuss;
    throw Error(ErrorCode::BadRequest, "unknown routine kind '" + std::string(s) + "'");
}

std::string_view to_string(Phase p) noexcept {
    switch (p) {
    case Phase::Created: return "Created";
    case Phase::PollOpen: return "PollOpen";
    case Phase::PollClosed: return "PollClosed";
    case Phase::PromptPhase: return "PromptPhase";
    case Phase::QuizOpen: return "QuizOpen";
    case Phase::QuizClosed: return "QuizClosed";
    case Phase::JittOpen: return "JittOpen";
    case Phase::Consolidated: return "Consolidated";
    case Phase::Discussed: return "Discussed";
    }
    return "Created";
}

Phase phase_from_string(std::string_view s) {
    for (Phase p : {Phase::Created, Phase::PollOpen, Phase::PollClosed, Phase::PromptPhase, Phase::QuizOpen,
                    Phase::QuizClosed, Phase::JittOpen, Phase::Consolidated, Phase::Discussed})
        if (to_string(p) == s) return p;
    throw Error(ErrorCode::BadRequest, "unknown phase '" + std::string(s) + "'");
}

std::span<const Phase> phase_order(RoutineKind kind) noexcept {
    if (kind == RoutineKind::PollPromptQuiz) return kPollPromptQuizOrder;
    return kQuizPromptDiscussOrder;
}

std::string_view to_string(DifficultyChoice c) noexcept { return c == DifficultyChoice::moderate ? "moderate" : "elevated"; }

DifficultyChoice difficulty_choice_from_string(std::string_view s) {
    if (s == "moderate") return DifficultyChoice::moderate;
    if (s == "elevated") return DifficultyChoice::elevated;
    throw Error(ErrorCode::BadRequest, "difficulty choice must be moderate or elevated");
}

pacing::Band band_for(DifficultyChoice c) noexcept {
    return c == DifficultyChoice::moderate ? pacing::kModerateBand : pacing::kElevatedBand;
}

std::string_view to_string(InstanceKind k) noexcept { return k == InstanceKind::poll ? "poll" : "quiz"; }

std::int64_t VoteTally::total() const noexcept {
    std::int64_t sum = 0;
    for (const auto& [label, n] : counts) sum += n;
    return sum;
}

std::optional<double> QuestionInstance::accuracy() const {
    if (votes.empty()) return std::nullopt;
    std::int64_t correct = 0;
    for (const auto& [actor, label] : votes) correct += grade_response(question, {label}).correct ? 1 : 0;
    return static_cast<double>(correct) / static_cast<double>(votes.size());
}

void StudentSubmission::validate() const {
    bool has_prompt = std::any_of(prompts.begin(), prompts.end(), [](const std::string& p) { return !text::trim(p).empty(); });
    if (!has_prompt) throw Error(ErrorCode::InvalidSubmission, "a submission needs at least one prompt");
    bool has_open = open_text && !text::trim(*open_text).empty();
    if (!question && !has_open)
        throw Error(ErrorCode::InvalidSubmission, "a submission needs a question or open-ended text");
}

std::string StudentSubmission::question_text() const {
    if (question) return mcq::render_mcq(*question);
    return open_text.value_or("");
}

RoutineSession& Engine::session_mut(const std::string& id) {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::NotFound, "no session " + id);
    return it->second;
}

const RoutineSession& Engine::session(const std::string& id) const {
    auto it = sessions_.find(id);
    if (it == sessions_.end()) throw Error(ErrorCode::NotFound, "no session " + id);
    return it->second;
}

QuestionInstance& Engine::instance_mut(const std::string& id) {
    auto it = instances_.find(id);
    if (it == instances_.end()) throw Error(ErrorCode::NotFound, "no question instance " + id);
    return it->second;
}

const QuestionInstance& Engine::instance(const std::string& id) const {
    auto it = instances_.find(id);
    if (it == instances_.end()) throw Error(ErrorCode::NotFound, "no question instance " + id);
    return it->second;
}

void Engine::enter(RoutineSession& s, Phase p, Timestamp at) {
    s.phase = p;
    s.history.emplace_back(p, at);
}

std::string Engine::create_session(RoutineKind kind, const std::string& course, const SessionConfig& config,
                                   const std::optional<std::string>& idempotency_key, Timestamp at,
                                   const Commit& commit) {
    if (idempotency_key) {
        auto it = idempotency_.find(*idempotency_key);
        if (it != idempotency_.end()) return it->second;
    }
    if (text::trim(course).empty()) throw Error(ErrorCode::BadRequest, "course reference is empty");
    if (config.quiz_time_limit_s <= 0) throw Error(ErrorCode::BadParams, "quiz time limit must be positive");

    commit();
    RoutineSession s;
    s.id = "S" + std::to_string(next_session_++);
    s.kind = kind;
    s.course = course;
    s.config = config;
    s.created_at = at;
    s.idempotency_key = idempotency_key;
    s.history.emplace_back(Phase::Created, at);
    if (idempotency_key) idempotency_[*idempotency_key] = s.id;
    session_order_.push_back(s.id);
    std::string id = s.id;
    sessions_.emplace(id, std::move(s));
    return id;
}

std::string Engine::open_instance(RoutineSession& s, InstanceKind kind, const McqQuestion& question,
                                  const std::optional<std::string>& bank_entry, Timestamp at) {
    QuestionInstance inst;
    inst.id = "I" + std::to_string(next_instance_++);
    inst.session_id = s.id;
    inst.kind = kind;
    inst.question = question;
    inst.bank_entry = bank_entry;
    inst.opened_at = at;
    inst.tally.question_ref = question.id().empty() ? inst.id : question.id();
    for (const auto& o : question.options()) inst.tally.counts[o.label] = 0;
    if (kind == InstanceKind::quiz) inst.deadline = at + s.config.quiz_time_limit_s;
    std::string id = inst.id;
    instances_.emplace(id, std::move(inst));
    return id;
}

std::string Engine::open_poll(const std::string& session_id, const McqQuestion& question,
                              const std::optional<std::string>& bank_entry, Timestamp at, const Commit& commit) {
    RoutineSession& s = session_mut(session_id);
    if (s.kind != RoutineKind::PollPromptQuiz || s.phase != Phase::Created) phase_violation(s, "opening a poll");
    commit();
    std::string id = open_instance(s, InstanceKind::poll, question, bank_entry, at);
    s.poll_instance = id;
    enter(s, Phase::PollOpen, at);
    return id;
}

OpenedQuiz Engine::open_quiz(const std::string& session_id, const McqQuestion& question,
                             const std::optional<std::string>& bank_entry, Timestamp at, const Commit& commit) {
    RoutineSession& s = session_mut(session_id);
    if (s.kind != RoutineKind::PollPromptQuiz || (s.phase != Phase::PollClosed && s.phase != Phase::PromptPhase))
        phase_violation(s, "opening a quiz");
    commit();
    std::string id = open_instance(s, InstanceKind::quiz, question, bank_entry, at);
    s.quiz_instance = id;
    enter(s, Phase::QuizOpen, at);
    return {id, *instances_.at(id).deadline};
}

void Engine::cast_vote(const std::string& instance_id, const ActorRef& actor, const LabelSet& labels, Timestamp at,
                       const Commit& commit) {
    QuestionInstance& inst = instance_mut(instance_id);
    if (actor.role() != Role::student) throw Error(ErrorCode::Unauthorized, "only students vote");
    if (inst.tally.closed) throw Error(ErrorCode::DeadlineExpired, "voting on " + instance_id + " has closed");
    if (inst.deadline && at > *inst.deadline)
        throw Error(ErrorCode::DeadlineExpired, "the deadline for " + instance_id + " has passed");
    if (labels.size() != 1) throw Error(ErrorCode::InvalidVote, "a vote selects exactly one option");
    Label label = *labels.begin();
    if (!inst.question.has_label(label)) throw Error(ErrorCode::UnknownLabel, std::string("no option ") + label);
    if (inst.votes.count(actor.id()) != 0U) throw Error(ErrorCode::AlreadyVoted, "vote already recorded");

    commit();
    inst.votes.emplace(actor.id(), label);
    inst.voted_at.emplace(actor.id(), at);
    inst.tally.voters.insert(actor.id());
    ++inst.tally.counts[label];
}

VoteTally Engine::view_tally(const std::string& instance_id, const ActorRef& actor) const {
    const QuestionInstance& inst = instance(instance_id);
    if (actor.role() == Role::student && !inst.tally.closed && inst.votes.count(actor.id()) == 0U)
        throw Error(ErrorCode::VoteRequired, "vote to see results");
    return inst.tally;
}

VoteTally Engine::close_instance(const std::string& instance_id, Timestamp at, const Commit& commit) {
    QuestionInstance& inst = instance_mut(instance_id);
    RoutineSession& s = session_mut(inst.session_id);
    if (inst.tally.closed) phase_violation(s, "closing an already closed instance");
    commit();
    inst.tally.closed = true;
    inst.closed_at = at;
    enter(s, inst.kind == InstanceKind::poll ? Phase::PollClosed : Phase::QuizClosed, at);
    return inst.tally;
}

const RoutineSession& Engine::advance_phase(const std::string& session_id, Phase target, Timestamp at,
                                            const Commit& commit) {
    RoutineSession& s = session_mut(session_id);
    bool legal = false;
    if (s.kind == RoutineKind::PollPromptQuiz) {
        legal = (target == Phase::PromptPhase && s.phase == Phase::PollClosed && s.config.prompt_phase_enabled) ||
                (target == Phase::Discussed && s.phase == Phase::QuizClosed);
    } else {
        legal = (target == Phase::PromptPhase && s.phase == Phase::JittOpen) ||
                (target == Phase::Discussed && s.phase == Phase::Consolidated);
    }
    if (!legal) phase_violation(s, "advancing to " + std::string(to_string(target)));
    commit();
    enter(s, target, at);
    return s;
}

void Engine::open_jitt(const std::string& session_id, const std::string& prompt, Timestamp at, const Commit& commit) {
    RoutineSession& s = session_mut(session_id);
    if (s.kind != RoutineKind::QuizPromptDiscuss || s.phase != Phase::Created) phase_violation(s, "assigning a JiTT quiz");
    if (text::trim(prompt).empty()) throw Error(ErrorCode::BadRequest, "JiTT prompt is empty");
    commit();
    s.jitt_prompt = text::trim(prompt);
    s.jitt_assigned_at = at;
    enter(s, Phase::JittOpen, at);
}

void Engine::check_submission(const std::string& session_id, const StudentSubmission& submission) const {
    const RoutineSession& s = session(session_id);
    bool open = s.kind == RoutineKind::PollPromptQuiz
                    ? s.phase == Phase::PromptPhase
                    : (s.phase == Phase::JittOpen || s.phase == Phase::PromptPhase);
    if (!open) phase_violation(s, "submitting a question");
    submission.validate();
}

StudentSubmission Engine::prepare_submission(const std::string& session_id, StudentSubmission submission) const {
    const RoutineSession& s = session(session_id);
    submission.session_ref = session_id;
    submission.course = s.course;
    if (s.jitt_assigned_at) submission.latency_s = submission.submitted_at - *s.jitt_assigned_at;
    return submission;
}

void Engine::attach_submission(const std::string& session_id, const std::string& submission_id) {
    session_mut(session_id).submissions.push_back(submission_id);
}

void Engine::choose_difficulty(const std::string& session_id, const ActorRef& actor, DifficultyChoice choice,
                               const Commit& commit) {
    RoutineSession& s = session_mut(session_id);
    if (s.kind != RoutineKind::QuizPromptDiscuss || s.phase != Phase::JittOpen) phase_violation(s, "choosing difficulty");
    commit();
    s.difficulty[actor.id()] = choice;
}

void Engine::record_consolidation(const std::string& session_id, std::vector<std::string> talking_points, Timestamp at,
                                  const Commit& commit) {
    RoutineSession& s = session_mut(session_id);
    if (s.kind != RoutineKind::QuizPromptDiscuss || s.phase != Phase::PromptPhase) phase_violation(s, "consolidating");
    commit();
    s.talking_points = std::move(talking_points);
    enter(s, Phase::Consolidated, at);
}

void Engine::annotate_groups(const std::string& session_id, std::vector<std::vector<std::string>> groups,
                             const Commit& commit) {
    RoutineSession& s = session_mut(session_id);
    commit();
    s.groups = std::move(groups);
}

void to_json(json& j, const Attachment& a) { j = json{{"media_type", a.media_type}, {"data_base64", a.data_base64}}; }

void to_json(json& j, const StudentSubmission& s) {
    j = json{{"id", s.id},
             {"author", s.author},
             {"session_ref", opt(s.session_ref)},
             {"course", s.course},
             {"question", s.question ? json(*s.question) : json(nullptr)},
             {"open_text", opt(s.open_text)},
             {"prompts", s.prompts},
             {"transcript_ref", opt(s.transcript_ref)},
             {"summary", opt(s.summary)},
             {"topic", opt(s.topic)},
             {"attachment", s.attachment ? json(*s.attachment) : json(nullptr)},
             {"submitted_at", s.submitted_at},
             {"latency_s", s.latency_s ? json(*s.latency_s) : json(nullptr)}};
}

StudentSubmission submission_from_json(const json& j) {
    try {
        StudentSubmission s;
        s.id = j.value("id", std::string());
        s.author = actor_from_json(j.at("author"));
        s.session_ref = opt_string(j, "session_ref");
        s.course = j.value("course", std::string());
        if (j.contains("question") && j["question"].is_object()) s.question = mcq_from_json(j["question"]);
        s.open_text = opt_string(j, "open_text");
        s.prompts = j.value("prompts", std::vector<std::string>{});
        s.transcript_ref = opt_string(j, "transcript_ref");
        s.summary = opt_string(j, "summary");
        s.topic = opt_string(j, "topic");
        if (j.contains("attachment") && j["attachment"].is_object())
            s.attachment = Attachment{j["attachment"].at("media_type").get<std::string>(),
                                      j["attachment"].at("data_base64").get<std::string>()};
        s.submitted_at = j.value("submitted_at", Timestamp{0});
        s.latency_s = opt_ts(j, "latency_s");
        return s;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadRequest, std::string("malformed submission: ") + e.what());
    }
}

void to_json(json& j, const VoteTally& t) {
    json counts = json::object();
    for (const auto& [label, n] : t.counts) counts[std::string(1, label)] = n;
    j = json{{"question_ref", t.question_ref},
             {"counts", counts},
             {"voters", t.voters},
             {"total", t.total()},
             {"closed", t.closed}};
}

void to_json(json& j, const RoutineSession& s) {
    json history = json::array();
    for (const auto& [p, at] : s.history) history.push_back({{"phase", std::string(to_string(p))}, {"at", at}});
    json difficulty = json::object();
    for (const auto& [actor, c] : s.difficulty) difficulty[actor] = std::string(to_string(c));
    j = json{{"id", s.id},
             {"kind", std::string(to_string(s.kind))},
             {"phase", std::string(to_string(s.phase))},
             {"course", s.course},
             {"config", {{"quiz_time_limit_s", s.config.quiz_time_limit_s},
                         {"prompt_phase_enabled", s.config.prompt_phase_enabled}}},
             {"created_at", s.created_at},
             {"idempotency_key", opt(s.idempotency_key)},
             {"history", history},
             {"poll_instance", opt(s.poll_instance)},
             {"quiz_instance", opt(s.quiz_instance)},
             {"jitt_prompt", opt(s.jitt_prompt)},
             {"jitt_assigned_at", opt(s.jitt_assigned_at)},
             {"difficulty", difficulty},
             {"submissions", s.submissions},
             {"talking_points", s.talking_points},
             {"groups", s.groups}};
}

namespace {

RoutineSession session_from_json(const json& j) {
    RoutineSession s;
    s.id = j.at("id").get<std::string>();
    s.kind = routine_kind_from_string(j.at("kind").get<std::string>());
    s.phase = phase_from_string(j.at("phase").get<std::string>());
    s.course = j.at("course").get<std::string>();
    s.config.quiz_time_limit_s = j.at("config").at("quiz_time_limit_s").get<std::int64_t>();
    s.config.prompt_phase_enabled = j.at("config").at("prompt_phase_enabled").get<bool>();
    s.created_at = j.at("created_at").get<Timestamp>();
    s.idempotency_key = opt_string(j, "idempotency_key");
    for (const auto& h : j.at("history"))
        s.history.emplace_back(phase_from_string(h.at("phase").get<std::string>()), h.at("at").get<Timestamp>());
    s.poll_instance = opt_string(j, "poll_instance");
    s.quiz_instance = opt_string(j, "quiz_instance");
    s.jitt_prompt = opt_string(j, "jitt_prompt");
    s.jitt_assigned_at = opt_ts(j, "jitt_assigned_at");
    for (const auto& [actor, c] : j.at("difficulty").items())
        s.difficulty[actor] = difficulty_choice_from_string(c.get<std::string>());
    s.submissions = j.at("submissions").get<std::vector<std::string>>();
    s.talking_points = j.at("talking_points").get<std::vector<std::string>>();
    s.groups = j.at("groups").get<std::vector<std::vector<std::string>>>();
    return s;
}

json instance_to_json(const QuestionInstance& i) {
    json votes = json::object();
    for (const auto& [actor, label] : i.votes) votes[actor] = std::string(1, label);
    return json{{"id", i.id},
                {"session_id", i.session_id},
                {"kind", std::string(to_string(i.kind))},
                {"question", i.question},
                {"bank_entry", opt(i.bank_entry)},
                {"opened_at", i.opened_at},
                {"deadline", opt(i.deadline)},
                {"closed_at", opt(i.closed_at)},
                {"tally", i.tally},
                {"votes", votes},
                {"voted_at", i.voted_at}};
}

QuestionInstance instance_from_json(const json& j) {
    QuestionInstance i;
    i.id = j.at("id").get<std::string>();
    i.session_id = j.at("session_id").get<std::string>();
    i.kind = j.at("kind").get<std::string>() == "poll" ? InstanceKind::poll : InstanceKind::quiz;
    i.question = mcq_from_json(j.at("question"));
    i.bank_entry = opt_string(j, "bank_entry");
    i.opened_at = j.at("opened_at").get<Timestamp>();
    i.deadline = opt_ts(j, "deadline");
    i.closed_at = opt_ts(j, "closed_at");
    const json& t = j.at("tally");
    i.tally.question_ref = t.at("question_ref").get<std::string>();
    for (const auto& [label, n] : t.at("counts").items()) i.tally.counts[parse_label(label)] = n.get<std::int64_t>();
    i.tally.voters = t.at("voters").get<std::set<std::string>>();
    i.tally.closed = t.at("closed").get<bool>();
    for (const auto& [actor, label] : j.at("votes").items()) i.votes[actor] = parse_label(label.get<std::string>());
    i.voted_at = j.at("voted_at").get<std::map<std::string, Timestamp>>();
    return i;
}

} // namespace

json Engine::to_json() const {
    json sessions = json::object();
    for (const auto& [id, s] : sessions_) sessions[id] = s;
    json instances = json::object();
    for (const auto& [id, i] : instances_) instances[id] = instance_to_json(i);
    return json{{"sessions", sessions},
                {"instances", instances},
                {"idempotency", idempotency_},
                {"session_order", session_order_},
                {"next_session", next_session_},
                {"next_instance", next_instance_}};
}

Engine Engine::from_json(const json& j) {
    Engine e;
    for (const auto& [id, s] : j.at("sessions").items()) e.sessions_.emplace(id, session_from_json(s));
    for (const auto& [id, i] : j.at("instances").items()) e.instances_.emplace(id, instance_from_json(i));
    e.idempotency_ = j.at("idempotency").get<std::map<std::string, std::string>>();
    e.session_order_ = j.at("session_order").get<std::vector<std::string>>();
    e.next_session_ = j.at("next_session").get<std::uint64_t>();
    e.next_instance_ = j.at("next_instance").get<std::uint64_t>();
    return e;
}

} // namespace flipdeck::routine
