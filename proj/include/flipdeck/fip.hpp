#pragma once

// Flipped-interaction sessions: the model asks the questions, a (scripted or
// real) student answers, and the loop ends once the model produces the
// requested quiz.

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "flipdeck/domain.hpp"

namespace flipdeck::fip {

enum class Format { clicker_poll, clicker_quiz, jitt_open };

std::string_view to_string(Format f) noexcept;
Format format_from_string(std::string_view s);

struct QuestionGoal {
    std::string topic;
    std::optional<std::string> focus;
    Format format = Format::clicker_quiz;
    int option_count = 4;  // ignored for jitt_open
    std::vector<std::string> constraints;

    // Throws Error{BadParams}.
    void validate() const;
};

enum class Speaker { model, user };

struct Turn {
    Speaker speaker = Speaker::model;
    std::string text;
    Timestamp at = 0;

    bool operator==(const Turn&) const = default;
};

enum class Status { Completed, MaxTurnsExceeded, ProviderError };

std::string_view to_string(Status s) noexcept;

struct ProviderIdentity {
    std::string provider;
    std::string model;

    bool operator==(const ProviderIdentity&) const = default;
};

struct FipTranscript {
    std::string id;
    QuestionGoal goal;
    std::vector<Turn> turns;  // turns[0] is the seed prompt (user)
    Status status = Status::MaxTurnsExceeded;
    std::optional<McqQuestion> question;   // poll/quiz goals
    std::optional<std::string> open_text;  // jitt_open goals
    std::optional<std::string> error;
    ProviderIdentity provider;

    bool has_result() const noexcept { return question.has_value() || open_text.has_value(); }
    std::size_t model_turns() const noexcept;
};

// Text generation capability. Implementations receive the full history on
// every call and must not touch application state.
class ProviderPort {
public:
    virtual ~ProviderPort() = default;

    // Throws on failure; run_fip_session turns any exception into
    // Status::ProviderError.
    virtual std::string generate(std::string_view prompt, std::span<const Turn> history) = 0;
    virtual ProviderIdentity identity() const = 0;
};

struct ScriptedFailure {
    std::string message;
};

// Replies from a fixed script, one entry per call. Past the end of the
// script the last entry repeats when `repeat_last` is set, otherwise the
// call fails.
class ScriptedProvider final : public ProviderPort {
public:
    using Entry = std::variant<std::string, ScriptedFailure>;

    explicit ScriptedProvider(std::vector<Entry> script, bool repeat_last = false,
                              ProviderIdentity identity = {"scripted", "script-v1"});

    std::string generate(std::string_view prompt, std::span<const Turn> history) override;
    ProviderIdentity identity() const override { return identity_; }

    std::size_t calls() const noexcept { return calls_; }

private:
    std::vector<Entry> script_;
    bool repeat_last_;
    ProviderIdentity identity_;
    std::size_t calls_ = 0;
};

class FunctionProvider final : public ProviderPort {
public:
    using Fn = std::function<std::string(std::string_view, std::span<const Turn>)>;

    FunctionProvider(Fn fn, ProviderIdentity identity) : fn_(std::move(fn)), identity_(std::move(identity)) {}

    std::string generate(std::string_view prompt, std::span<const Turn> history) override {
        return fn_(prompt, history);
    }
    ProviderIdentity identity() const override { return identity_; }

private:
    Fn fn_;
    ProviderIdentity identity_;
};

// Plays back the model turns of a recorded transcript.
class ReplayProvider final : public ProviderPort {
public:
    explicit ReplayProvider(const FipTranscript& recorded);

    std::string generate(std::string_view prompt, std::span<const Turn> history) override;
    ProviderIdentity identity() const override { return identity_; }

private:
    std::vector<std::string> replies_;
    ProviderIdentity identity_;
    std::size_t next_ = 0;
};

// POST {model, prompt, history[]} -> {text} with a bearer key.
class HttpProvider final : public ProviderPort {
public:
    HttpProvider(std::string url, std::string key, std::string model);

    std::string generate(std::string_view prompt, std::span<const Turn> history) override;
    ProviderIdentity identity() const override { return {"http:" + url_, model_}; }

private:
    std::string url_;
    std::string key_;
    std::string model_;
};

inline constexpr std::string_view kDefaultProbeAnswer =
    "I'm not sure; choose what you think is most instructive.";
inline constexpr std::string_view kDiversifyInstruction =
    "Ask about a different aspect; do not repeat earlier questions.";
inline constexpr std::string_view kJittMarker = "JiTT Quiz:";
inline constexpr double kRepetitionThreshold = 0.9;

using AnswerProbe = std::function<std::string(std::string_view model_text)>;

struct Policy {
    int max_turns = 8;
    AnswerProbe answer_probe;  // empty: always kDefaultProbeAnswer
    Timestamp start_at = 0;
    std::string transcript_id;
};

std::string build_flipped_prompt(const QuestionGoal& goal);

// Throws Error{BadParams} when policy.max_turns < 1 or the goal is invalid.
FipTranscript run_fip_session(const QuestionGoal& goal, ProviderPort& provider, const Policy& policy = {});

std::optional<std::string> detect_repetition(const FipTranscript& transcript);

// At most this many talking points come back from consolidation.
inline constexpr std::size_t kMaxTalkingPoints = 10;

std::string build_consolidation_prompt(const std::vector<std::string>& responses);

// Throws Error{EmptyInput} or Error{ProviderError}.
std::vector<std::string> consolidate_responses(const std::vector<std::string>& responses, ProviderPort& provider);

struct CueTemplate {
    int id;
    std::string_view text;  // "{}" marks a slot
    int arity;
};

std::span<const CueTemplate> cue_templates() noexcept;

// Throws Error{UnknownCue} or Error{ArityMismatch}.
std::string fill_cue_template(int cue_id, const std::vector<std::string>& slots);

void to_json(json& j, const QuestionGoal& g);
QuestionGoal goal_from_json(const json& j);
void to_json(json& j, const FipTranscript& t);
FipTranscript transcript_from_json(const json& j);

} // namespace flipdeck::fip
