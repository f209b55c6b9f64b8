#pragma once

// Application state folded from the event log, and the command layer that
// writes it. Every command goes through apply_event(): validate, append the
// event, mutate. Rebuilding runs the same function over the stored events
// with a no-op commit, so live and rebuilt state cannot drift apart.

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "flipdeck/analytics.hpp"
#include "flipdeck/bank.hpp"
#include "flipdeck/domain.hpp"
#include "flipdeck/event_store.hpp"
#include "flipdeck/fip.hpp"
#include "flipdeck/pacing.hpp"
#include "flipdeck/routine.hpp"

namespace flipdeck {

struct AppOptions {
    pacing::Params pacing;
    std::uint64_t snapshot_interval = 10000;
    std::string auth_secret = "flipdeck-dev-secret";
};

struct ActorRecord {
    ActorRef actor{"", Role::student};
    std::string token;
    std::set<std::string> courses;

    bool operator==(const ActorRecord&) const = default;
};

struct CoursePacing {
    pacing::State state;
    std::vector<analytics::ComprehensionPoint> series;
};

struct AppState {
    std::map<std::string, ActorRecord> actors;
    std::map<std::string, std::string> tokens;  // token -> actor id
    routine::Engine routines;
    bank::Bank bank;
    std::map<std::string, CoursePacing> courses;
    std::map<std::string, fip::FipTranscript> transcripts;
    std::uint64_t next_transcript = 1;
    std::map<std::string, std::vector<std::string>> drafts;  // "session/actor" -> lines

    json to_json() const;
    static AppState from_json(const json& j);
    // Canonical serialization; equal states have equal bytes.
    std::string bytes() const { return to_json().dump(); }

    const ActorRecord& actor(const std::string& id) const;
    std::vector<std::string> roster(const std::string& course) const;  // enrolled students
};

// The single transition function. Throws Error before `commit` when the
// event is illegal in `state`.
json apply_event(AppState& state, const std::string& kind, const json& payload, Timestamp at,
                 const routine::Commit& commit);

// Folds decoded events into a fresh state (or onto a snapshot). Throws
// Error{CorruptRecord} if an event does not apply.
AppState fold_events(const std::vector<events::EventEnvelope>& events, std::optional<events::Snapshot> snapshot = {});

// Decodes log bytes and folds every verified record.
AppState rebuild_from_bytes(std::string_view log_bytes);

// Bearer token for an actor: keyed BLAKE2b of the id, hex encoded.
std::string mint_token(const std::string& secret, const std::string& actor_id);

struct QuestionSource {
    std::optional<McqQuestion> question;
    std::optional<std::string> bank_entry;
};

struct SubmissionInput {
    std::optional<std::string> author;  // defaults to the calling actor
    std::optional<McqQuestion> question;
    std::optional<std::string> open_text;
    std::vector<std::string> prompts;
    std::optional<fip::FipTranscript> transcript;
    std::optional<std::string> transcript_ref;
    std::optional<std::string> summary;
    std::optional<std::string> topic;
    std::optional<routine::Attachment> attachment;
    fip::ProviderIdentity provider;
};

struct RecommendationView {
    pacing::Recommendation recommendation;
    pacing::State state;
    std::vector<std::string> selection;  // entry ids, query order
};

class Application {
public:
    explicit Application(std::unique_ptr<events::Storage> storage, AppOptions options = {});

    // Commands. All throw Error; a thrown command leaves no event behind.
    std::string register_actor(const std::string& id, Role role, const std::optional<std::string>& course, Timestamp at);
    void enroll(const std::string& actor, const std::string& course, Timestamp at);
    std::string create_session(const std::string& actor, routine::RoutineKind kind, const std::string& course,
                               const routine::SessionConfig& config, const std::optional<std::string>& idempotency_key,
                               Timestamp at);
    std::string open_poll(const std::string& actor, const std::string& session, const QuestionSource& source, Timestamp at);
    routine::OpenedQuiz open_quiz(const std::string& actor, const std::string& session, const QuestionSource& source,
                                  Timestamp at);
    void cast_vote(const std::string& actor, const std::string& instance, const LabelSet& labels, Timestamp at);
    // Closing a quiz also feeds the course pacing controller and, for quizzes
    // drawn from the bank, the entry difficulty.
    routine::VoteTally close_instance(const std::string& actor, const std::string& instance, Timestamp at);
    const routine::RoutineSession& advance_phase(const std::string& actor, const std::string& session,
                                                 routine::Phase target, Timestamp at);
    void open_jitt(const std::string& actor, const std::string& session, const std::string& prompt, Timestamp at);
    std::string record_transcript(const std::string& actor, const fip::FipTranscript& transcript, Timestamp at);
    std::string submit(const std::string& actor, const std::optional<std::string>& session,
                       const std::optional<std::string>& course, const SubmissionInput& input, Timestamp at);
    // Instructor-authored root question, queued for vetting like a submission.
    std::string queue_root(const std::string& actor, const std::string& course, const std::optional<std::string>& topic,
                           const RootQuestion& root, Timestamp at);
    void choose_difficulty(const std::string& actor, const std::string& session, routine::DifficultyChoice choice,
                           Timestamp at);
    std::vector<std::string> consolidate(const std::string& actor, const std::string& session,
                                         fip::ProviderPort& provider, Timestamp at);
    bank::ReproduceCheck reproduce(const std::string& actor, const std::string& entry, const std::string& regenerated,
                                   const fip::ProviderIdentity& provider, Timestamp at);
    const bank::BankEntry& record_verdict(const std::string& actor, const std::string& entry, bank::Decision decision,
                                          std::optional<double> initial_difficulty, Timestamp at);
    pacing::State start_new_topic(const std::string& actor, const std::string& course, Timestamp at);
    void annotate_groups(const std::string& actor, const std::string& session,
                         const std::vector<std::vector<std::string>>& groups, Timestamp at);
    void append_draft(const std::string& actor, const std::string& session, const std::string& text, Timestamp at);
    std::string submit_draft(const std::string& actor, const std::string& session, Timestamp at);

    // Queries.
    routine::VoteTally view_tally(const std::string& actor, const std::string& instance) const;
    const ActorRecord& authenticate(const std::string& token) const;
    RecommendationView recommendation(const std::string& course) const;
    std::vector<const bank::BankEntry*> selection_for(const std::string& actor, const std::string& session) const;
    analytics::DaysHistogram time_to_answer(const std::string& course) const;
    analytics::DifficultyStats difficulty_stats(const std::string& course) const;
    std::vector<analytics::LeaderboardRow> leaderboard(const std::string& course) const;
    std::vector<analytics::ComprehensionPoint> comprehension_series(const std::string& course) const;
    // what: histogram | unanswered | difficulty | leaderboard | comprehension
    std::string export_csv(const std::string& course, const std::string& what) const;

    const AppState& state() const noexcept { return state_; }
    const events::EventStore& store() const noexcept { return store_; }
    const AppOptions& options() const noexcept { return options_; }

    // Called after every committed event (used for live streaming).
    void set_commit_listener(std::function<void(const events::EventEnvelope&)> listener) {
        listener_ = std::move(listener);
    }

private:
    json execute(const std::string& kind, json payload, Timestamp at);

    events::EventStore store_;
    AppOptions options_;
    AppState state_;
    std::function<void(const events::EventEnvelope&)> listener_;
};

} // namespace flipdeck
