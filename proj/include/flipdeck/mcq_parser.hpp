#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flipdeck/domain.hpp"

namespace flipdeck::mcq {

enum class ParseFailure { NoStem, NoOptions, BadLabels, NoAnswerKey, DuplicateOption };

std::string_view to_string(ParseFailure f) noexcept;

// Exactly one of `question` / `failure` is set. Warnings may accompany a
// successful parse.
struct ParseReport {
    std::optional<McqQuestion> question;
    std::vector<std::string> warnings;
    std::optional<ParseFailure> failure;

    bool ok() const noexcept { return question.has_value(); }
};

// Parses LLM output of the form
//
//   Stem line(s)
//   A) option text
//   B) option text
//   ...
//   (Note: The correct answer is B) option text)
//
// `A.` is accepted in place of `A)`. The note is case-insensitive and takes
// singular or plural forms. Without a note, polls get every label as key and
// quizzes fail with NoAnswerKey, unless trailing prose states the answer
// ("the correct answer is option B"), which is accepted with a warning.
// Never throws.
ParseReport parse_mcq(std::string_view text, QuestionKind kind, std::string id = {});

// Canonical text: stem, blank line, `A) ...` lines, blank line, note line.
std::string render_mcq(const McqQuestion& question);

// The note line render_mcq emits for the question's answer key.
std::string render_answer_note(const McqQuestion& question);

} // namespace flipdeck::mcq
