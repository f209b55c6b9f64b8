#pragma once

// Vetting queue and question bank. A submission becomes a Pending entry with
// the same id; a reviewer's verdict moves it to Approved (selectable) or
// Rejected (kept for audit only).

#include <map>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "flipdeck/domain.hpp"
#include "flipdeck/fip.hpp"
#include "flipdeck/pacing.hpp"
#include "flipdeck/routine.hpp"

namespace flipdeck::bank {

using routine::Commit;

enum class Status { Pending, Approved, Rejected };

std::string_view to_string(Status s) noexcept;
Status status_from_string(std::string_view s);

enum class Decision { Approve, Reject };

Decision decision_from_string(std::string_view s);

struct OpenPrompt {
    std::string text;

    bool operator==(const OpenPrompt&) const = default;
};

using Content = std::variant<McqQuestion, RootQuestion, OpenPrompt>;

struct Provenance {
    ActorRef author{"", Role::student};
    std::string submission_ref;
    fip::ProviderIdentity provider;
    std::vector<std::string> prompts;
    std::optional<std::string> transcript_ref;
    std::optional<std::string> session_ref;
    std::optional<std::string> summary;

    bool operator==(const Provenance&) const = default;
};

struct PerformanceRecord {
    std::string session_ref;
    double accuracy = 0.0;

    bool operator==(const PerformanceRecord&) const = default;
};

inline constexpr double kReproduceThreshold = 0.8;
inline constexpr double kDifficultyWeight = 0.25;

struct ReproduceResult {
    double similarity = 0.0;
    bool match = false;
};

struct ReproduceCheck {
    std::string reviewer;
    std::string regenerated_text;
    fip::ProviderIdentity provider;
    double similarity = 0.0;
    bool match = false;
    Timestamp at = 0;

    bool operator==(const ReproduceCheck&) const = default;
};

struct BankEntry {
    std::string id;
    std::uint64_t ordinal = 0;  // creation order
    std::string course;
    std::optional<std::string> topic;
    Content question;
    Provenance provenance;
    std::optional<double> difficulty;          // set on approval, always in [1, 10]
    std::optional<double> initial_difficulty;
    std::vector<PerformanceRecord> performance;
    Status status = Status::Pending;
    std::optional<routine::Attachment> attachment;
    Timestamp submitted_at = 0;
    std::optional<Timestamp> decided_at;
    std::optional<std::string> reviewer;
    std::vector<ReproduceCheck> checks;

    std::string question_text() const;
    // "poll", "clicker_quiz", "jitt_quiz" or "root".
    std::string kind() const;
    const McqQuestion* mcq() const noexcept { return std::get_if<McqQuestion>(&question); }

    bool operator==(const BankEntry&) const = default;
};

// Token-Jaccard similarity between the submitted and regenerated text;
// Match iff similarity >= 0.8.
ReproduceResult reproduce_check(std::string_view submitted_text, std::string_view regenerated_text);

// observed = 1 + 9 * (1 - accuracy); d' = (1 - w) * d + w * observed.
double next_difficulty(double difficulty, double accuracy);

struct Query {
    std::optional<std::string> topic;
    std::optional<std::string> course;
    std::optional<pacing::Band> band;
    std::optional<Status> status;
    std::optional<std::string> kind;
};

class Bank {
public:
    // The new entry takes next_id(), which is also the submission id.
    // Throws Error{InvalidSubmission}.
    const BankEntry& enqueue(const routine::StudentSubmission& submission, const fip::ProviderIdentity& provider,
                             const Commit& commit);

    // Entries that skip the student flow (e.g. root questions authored by
    // the instructor) enter Pending the same way.
    const BankEntry& enqueue_content(std::string course, std::optional<std::string> topic,
                                     Content content, Provenance provenance, Timestamp at, const Commit& commit);

    const BankEntry& record_reproduce_check(const std::string& entry_id, const ActorRef& reviewer,
                                            const std::string& regenerated_text,
                                            const fip::ProviderIdentity& provider, Timestamp at, const Commit& commit);

    // Throws Unauthorized (reviewer is a student), NotFound, AlreadyDecided,
    // OutOfRange (approval difficulty not an integer in [1, 10]).
    const BankEntry& record_verdict(const std::string& entry_id, const ActorRef& reviewer, Decision decision,
                                    std::optional<double> initial_difficulty, Timestamp at, const Commit& commit);

    // Applies next_difficulty to an Approved entry and appends history.
    double update_difficulty(const std::string& entry_id, const std::string& session_ref, double accuracy,
                             const Commit& commit);

    // Descending decision time (submission time while undecided), ties by
    // creation order ascending.
    std::vector<const BankEntry*> query(const Query& q) const;

    // First `count` Approved entries inside `band` in query order.
    std::vector<const BankEntry*> select(std::optional<std::string> course, pacing::Band band, std::size_t count) const;

    const BankEntry& entry(const std::string& id) const;
    const std::map<std::string, BankEntry>& entries() const noexcept { return entries_; }
    std::uint64_t next_submission_number() const noexcept { return next_ordinal_; }
    std::string next_id() const { return "Q" + std::to_string(next_ordinal_); }

    json to_json() const;
    static Bank from_json(const json& j);

    bool operator==(const Bank&) const = default;

private:
    BankEntry& entry_mut(const std::string& id);

    std::map<std::string, BankEntry> entries_;
    std::uint64_t next_ordinal_ = 1;
};

void to_json(json& j, const BankEntry& e);
// Entry without answer keys, for students.
json public_view(const BankEntry& e);

} // namespace flipdeck::bank
