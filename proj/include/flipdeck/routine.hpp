#pragma once

// Poll-prompt-quiz and quiz-prompt-discuss routines as explicit state
// machines.
//
// Every mutating operation validates completely, then calls `commit`, then
// mutates. If `commit` throws (the event could not be made durable) nothing
// changes. Replay passes a no-op commit through the very same functions.

#include <functional>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "flipdeck/domain.hpp"
#include "flipdeck/pacing.hpp"

namespace flipdeck::routine {

using Commit = std::function<void()>;

enum class RoutineKind { PollPromptQuiz, QuizPromptDiscuss };

enum class Phase { Created, PollOpen, PollClosed, PromptPhase, QuizOpen, QuizClosed, JittOpen, Consolidated, Discussed };

std::string_view to_string(RoutineKind k) noexcept;
RoutineKind routine_kind_from_string(std::string_view s);
std::string_view to_string(Phase p) noexcept;
Phase phase_from_string(std::string_view s);

// Declared phase order for a routine kind.
std::span<const Phase> phase_order(RoutineKind kind) noexcept;

struct SessionConfig {
    std::int64_t quiz_time_limit_s = 300;
    bool prompt_phase_enabled = true;

    bool operator==(const SessionConfig&) const = default;
};

enum class DifficultyChoice { moderate, elevated };

std::string_view to_string(DifficultyChoice c) noexcept;
DifficultyChoice difficulty_choice_from_string(std::string_view s);
pacing::Band band_for(DifficultyChoice c) noexcept;

struct RoutineSession {
    std::string id;
    RoutineKind kind = RoutineKind::PollPromptQuiz;
    Phase phase = Phase::Created;
    std::string course;
    SessionConfig config;
    Timestamp created_at = 0;
    std::optional<std::string> idempotency_key;
    std::vector<std::pair<Phase, Timestamp>> history;  // every phase entered, in order
    std::optional<std::string> poll_instance;
    std::optional<std::string> quiz_instance;
    std::optional<std::string> jitt_prompt;
    std::optional<Timestamp> jitt_assigned_at;
    std::map<std::string, DifficultyChoice> difficulty;  // actor id -> choice
    std::vector<std::string> submissions;
    std::vector<std::string> talking_points;
    std::vector<std::vector<std::string>> groups;  // annotation only

    bool operator==(const RoutineSession&) const = default;
};

enum class InstanceKind { poll, quiz };

std::string_view to_string(InstanceKind k) noexcept;

struct VoteTally {
    std::string question_ref;
    std::map<Label, std::int64_t> counts;  // every option label, zero-initialized
    std::set<std::string> voters;
    bool closed = false;

    std::int64_t total() const noexcept;
    bool operator==(const VoteTally&) const = default;
};

struct QuestionInstance {
    std::string id;
    std::string session_id;
    InstanceKind kind = InstanceKind::poll;
    McqQuestion question;
    std::optional<std::string> bank_entry;
    Timestamp opened_at = 0;
    std::optional<Timestamp> deadline;  // quizzes only; inclusive
    std::optional<Timestamp> closed_at;
    VoteTally tally;
    std::map<std::string, Label> votes;  // actor id -> label, immutable once cast
    std::map<std::string, Timestamp> voted_at;

    // Correct votes / votes, or nullopt when nobody voted.
    std::optional<double> accuracy() const;
    bool operator==(const QuestionInstance&) const = default;
};

struct Attachment {
    std::string media_type;
    std::string data_base64;  // opaque, never interpreted

    bool operator==(const Attachment&) const = default;
};

struct StudentSubmission {
    std::string id;
    ActorRef author{"", Role::student};
    std::optional<std::string> session_ref;
    std::string course;
    std::optional<McqQuestion> question;
    std::optional<std::string> open_text;
    std::vector<std::string> prompts;
    std::optional<std::string> transcript_ref;
    std::optional<std::string> summary;
    std::optional<std::string> topic;
    std::optional<Attachment> attachment;
    Timestamp submitted_at = 0;
    std::optional<std::int64_t> latency_s;  // since the JiTT assignment

    // Throws Error{InvalidSubmission} when no non-blank prompt or neither a
    // question nor open-ended text is present.
    void validate() const;
    // Text used for similarity checks: rendered MCQ or the open text.
    std::string question_text() const;
};

struct OpenedQuiz {
    std::string instance;
    Timestamp deadline = 0;
};

class Engine {
public:
    // Returns the existing id when the idempotency key was seen before; no
    // commit happens in that case.
    std::string create_session(RoutineKind kind, const std::string& course, const SessionConfig& config,
                               const std::optional<std::string>& idempotency_key, Timestamp at,
                               const Commit& commit);

    std::string open_poll(const std::string& session_id, const McqQuestion& question,
                          const std::optional<std::string>& bank_entry, Timestamp at, const Commit& commit);
    OpenedQuiz open_quiz(const std::string& session_id, const McqQuestion& question,
                         const std::optional<std::string>& bank_entry, Timestamp at, const Commit& commit);

    // Errors, in precedence order: NotFound, Unauthorized (non-student),
    // DeadlineExpired (closed, or at > deadline), InvalidVote (not exactly
    // one label), UnknownLabel, AlreadyVoted.
    void cast_vote(const std::string& instance_id, const ActorRef& actor, const LabelSet& labels, Timestamp at,
                   const Commit& commit);

    // Instructors and assistants always see the live tally; students only
    // once they voted or the instance closed (else VoteRequired).
    VoteTally view_tally(const std::string& instance_id, const ActorRef& actor) const;

    VoteTally close_instance(const std::string& instance_id, Timestamp at, const Commit& commit);

    // Only the plain transitions: PromptPhase and Discussed. Everything else
    // has its own operation and yields PhaseViolation here.
    const RoutineSession& advance_phase(const std::string& session_id, Phase target, Timestamp at,
                                        const Commit& commit);

    void open_jitt(const std::string& session_id, const std::string& prompt, Timestamp at, const Commit& commit);

    void check_submission(const std::string& session_id, const StudentSubmission& submission) const;
    // Fills in course and latency from the session; call after check_submission.
    StudentSubmission prepare_submission(const std::string& session_id, StudentSubmission submission) const;
    void attach_submission(const std::string& session_id, const std::string& submission_id);

    void choose_difficulty(const std::string& session_id, const ActorRef& actor, DifficultyChoice choice,
                           const Commit& commit);

    void record_consolidation(const std::string& session_id, std::vector<std::string> talking_points, Timestamp at,
                              const Commit& commit);

    void annotate_groups(const std::string& session_id, std::vector<std::vector<std::string>> groups,
                         const Commit& commit);

    const RoutineSession& session(const std::string& id) const;
    const QuestionInstance& instance(const std::string& id) const;
    const std::map<std::string, RoutineSession>& sessions() const noexcept { return sessions_; }
    const std::map<std::string, QuestionInstance>& instances() const noexcept { return instances_; }
    // Session ids in creation order.
    const std::vector<std::string>& session_order() const noexcept { return session_order_; }

    json to_json() const;
    static Engine from_json(const json& j);

    bool operator==(const Engine&) const = default;

private:
    RoutineSession& session_mut(const std::string& id);
    QuestionInstance& instance_mut(const std::string& id);
    void enter(RoutineSession& s, Phase p, Timestamp at);
    std::string open_instance(RoutineSession& s, InstanceKind kind, const McqQuestion& question,
                              const std::optional<std::string>& bank_entry, Timestamp at);

    std::map<std::string, RoutineSession> sessions_;
    std::map<std::string, QuestionInstance> instances_;
    std::map<std::string, std::string> idempotency_;
    std::vector<std::string> session_order_;
    std::uint64_t next_session_ = 1;
    std::uint64_t next_instance_ = 1;
};

void to_json(json& j, const StudentSubmission& s);
StudentSubmission submission_from_json(const json& j);
void to_json(json& j, const VoteTally& t);
void to_json(json& j, const RoutineSession& s);
void to_json(json& j, const Attachment& a);

} // namespace flipdeck::routine
