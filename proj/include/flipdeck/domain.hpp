#pragma once

// Core vocabulary: questions, answer keys, grading and actor identities.
// Every type here is an immutable value once constructed.

#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "flipdeck/error.hpp"

namespace flipdeck {

using json = nlohmann::json;

// Logical timestamp in UTC seconds, always supplied by an injected clock.
using Timestamp = std::int64_t;

using Label = char;
using LabelSet = std::set<Label>;

inline constexpr std::size_t kMinOptions = 2;
inline constexpr std::size_t kMaxOptions = 8;

enum class QuestionKind { poll, clicker_quiz, jitt_quiz };

std::string_view to_string(QuestionKind kind) noexcept;
QuestionKind question_kind_from_string(std::string_view s);

struct Option {
    Label label;
    std::string text;

    bool operator==(const Option&) const = default;
};

class McqQuestion {
public:
    // Empty placeholder; only make() produces a valid question.
    McqQuestion() = default;

    // Validates and normalizes (labels uppercased, option text trimmed and
    // NFC-normalized). Options receive consecutive labels from 'A'.
    // Throws Error{InvalidQuestion} or Error{UnknownLabel}.
    static McqQuestion make(std::string id, std::string stem,
                            const std::vector<std::string>& option_texts,
                            LabelSet answer_key, QuestionKind kind,
                            std::optional<std::string> note = std::nullopt,
                            bool degenerate = false);

    const std::string& id() const noexcept { return id_; }
    const std::string& stem() const noexcept { return stem_; }
    const std::vector<Option>& options() const noexcept { return options_; }
    const LabelSet& answer_key() const noexcept { return answer_key_; }
    const std::optional<std::string>& note() const noexcept { return note_; }
    QuestionKind kind() const noexcept { return kind_; }
    // A quiz whose key covers every option. Only legal when flagged.
    bool degenerate() const noexcept { return degenerate_; }

    LabelSet labels() const;
    bool has_label(Label label) const noexcept;
    const Option& option(Label label) const;

    McqQuestion with_id(std::string id) const;

    bool operator==(const McqQuestion&) const = default;

private:
    std::string id_;
    std::string stem_;
    std::vector<Option> options_;
    LabelSet answer_key_;
    std::optional<std::string> note_;
    QuestionKind kind_ = QuestionKind::poll;
    bool degenerate_ = false;
};

// Equality of stem, options, key and kind after whitespace normalization.
// Ids and note text are ignored.
bool structurally_equal(const McqQuestion& a, const McqQuestion& b);

struct Grade {
    bool correct = false;
    LabelSet matched;
    LabelSet missing;
    LabelSet spurious;

    bool operator==(const Grade&) const = default;
};

Grade grade_response(const McqQuestion& question, const LabelSet& chosen);

class RootQuestion {
public:
    RootQuestion() = default;

    using HintKey = std::pair<std::string, Label>;

    // Throws Error{InvalidQuestion} when there are no items, item ids repeat,
    // or some incorrect option lacks a hint.
    static RootQuestion make(std::string id, std::string problem_statement,
                             std::vector<McqQuestion> items,
                             std::map<HintKey, std::string> hints);

    const std::string& id() const noexcept { return id_; }
    const std::string& problem_statement() const noexcept { return problem_statement_; }
    const std::vector<McqQuestion>& items() const noexcept { return items_; }
    const std::map<HintKey, std::string>& hints() const noexcept { return hints_; }

    const McqQuestion* find_item(const std::string& item_id) const noexcept;

    bool operator==(const RootQuestion&) const = default;

private:
    std::string id_;
    std::string problem_statement_;
    std::vector<McqQuestion> items_;
    std::map<HintKey, std::string> hints_;
};

struct RootStep {
    bool solved = false;
    std::vector<std::string> hints;
};

// Item id -> labels the student currently has selected. Owned by the caller
// (the session); the question itself never changes.
using RootProgress = std::map<std::string, LabelSet>;

RootStep step_root_question(const RootQuestion& rq, const RootProgress& progress);

enum class Role { student, instructor, assistant, system };

std::string_view to_string(Role role) noexcept;
Role role_from_string(std::string_view s);

class ActorRef {
public:
    ActorRef(std::string id, Role role) : id_(std::move(id)), role_(role) {}

    const std::string& id() const noexcept { return id_; }
    Role role() const noexcept { return role_; }
    bool can_review() const noexcept {
        return role_ == Role::instructor || role_ == Role::assistant;
    }

    bool operator==(const ActorRef&) const = default;

private:
    std::string id_;
    Role role_;
};

// Parses "B" / "b" into 'B'. Throws Error{UnknownLabel} for anything that is
// not a single letter A..H.
Label parse_label(std::string_view s);
std::string labels_to_string(const LabelSet& labels);

void to_json(json& j, const McqQuestion& q);
McqQuestion mcq_from_json(const json& j);
void to_json(json& j, const RootQuestion& rq);
RootQuestion root_from_json(const json& j);
void to_json(json& j, const Grade& g);
void to_json(json& j, const ActorRef& a);
ActorRef actor_from_json(const json& j);

json labels_to_json(const LabelSet& labels);
LabelSet labels_from_json(const json& j);

} // namespace flipdeck
