#include "flipdeck/mcq_parser.hpp"

#include <cctype>
#include <regex>

#include "flipdeck/text.hpp"

namespace flipdeck::mcq {

namespace {

struct RawOption {
    Label label;
    std::string text;
};

const std::regex& option_line_re() {
    static const std::regex re(R"(^([A-Ha-h])[).][ \t]+(.+)$)");
    return re;
}

const std::regex& note_line_re() {
    static const std::regex re(R"(^\(?[ \t]*note[ \t]*:[ \t]*the[ \t]+correct[ \t]+answers?[ \t]+(?:is|are)[ \t]*:?[ \t]*(.*)$)",
                               std::regex::icase);
    return re;
}

bool is_upper_label(char c) { return c >= 'A' && c <= 'H'; }

std::string_view skip_spaces(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front())) != 0) s.remove_prefix(1);
    return s;
}

bool starts_with_separator(std::string_view rest) {
    return rest.empty() || rest.front() == ',' || rest.front() == '&' || rest.front() == ';' ||
           text::istarts_with(rest, "and ") || text::istarts_with(rest, "or ");
}

// Reads "B", "B and C", "options B, C and D" from the start of `s`.
LabelSet read_label_list(std::string_view s) {
    LabelSet out;
    s = skip_spaces(s);
    if (text::istarts_with(s, "options")) s.remove_prefix(7);
    else if (text::istarts_with(s, "option")) s.remove_prefix(6);
    while (true) {
        s = skip_spaces(s);
        if (s.empty() || !is_upper_label(s.front())) break;
        if (s.size() > 1 && std::isalnum(static_cast<unsigned char>(s[1])) != 0) break;
        out.insert(s.front());
        s.remove_prefix(1);
        if (!s.empty() && (s.front() == ')' || s.front() == '.' || s.front() == ':')) s.remove_prefix(1);
        s = skip_spaces(s);
        if (!s.empty() && (s.front() == ',' || s.front() == '&' || s.front() == '/')) {
            s.remove_prefix(1);
        } else if (text::istarts_with(s, "and ")) {
            s.remove_prefix(4);
        } else {
            break;
        }
    }
    return out;
}

// Length of the prefix of `raw` matching `want` case-insensitively, where a
// space in `want` matches any whitespace run. npos when it doesn't match.
std::size_t raw_match_length(std::string_view raw, std::string_view want) {
    auto ws = [](char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r'; };
    std::size_t i = 0;
    while (i < raw.size() && ws(raw[i])) ++i;
    for (std::size_t j = 0; j < want.size(); ++j) {
        if (want[j] == ' ') {
            if (i >= raw.size() || !ws(raw[i])) return std::string_view::npos;
            while (i < raw.size() && ws(raw[i])) ++i;
            continue;
        }
        if (i >= raw.size() || std::tolower(static_cast<unsigned char>(raw[i])) != std::tolower(static_cast<unsigned char>(want[j])))
            return std::string_view::npos;
        ++i;
    }
    return i;
}

// "X) option text" references inside the note. A candidate is accepted when
// it is followed by that option's text, another reference, or the end.
LabelSet labels_from_note(std::string_view note, const std::vector<RawOption>& options,
                          std::vector<std::string>& warnings) {
    LabelSet accepted;
    std::optional<Label> first_candidate;
    for (std::size_t p = 0; p + 1 < note.size(); ++p) {
        if (!is_upper_label(note[p]) || note[p + 1] != ')') continue;
        if (p > 0 && std::isalnum(static_cast<unsigned char>(note[p - 1])) != 0) continue;
        Label l = note[p];
        if (!first_candidate) first_candidate = l;
        std::string rest = text::squash_whitespace(note.substr(p + 2));
        bool ok = starts_with_separator(rest);
        std::size_t consumed = 0;
        for (const auto& o : options) {
            if (o.label != l) continue;
            std::size_t n = raw_match_length(note.substr(p + 2), text::squash_whitespace(o.text));
            if (n != std::string_view::npos) {
                ok = true;
                consumed = n;
            }
        }
        if (ok) accepted.insert(l);
        // option text may itself contain "X)"; don't rescan it
        if (consumed > 0) p += 1 + consumed;
    }
    if (!accepted.empty()) return accepted;
    if (first_candidate) {
        warnings.emplace_back("answer note option text did not match; using first referenced label");
        return {*first_candidate};
    }
    return read_label_list(note);
}

// "... the correct answer is option B ..." anywhere in free text.
LabelSet labels_from_prose(const std::string& prose) {
    std::string lower = text::to_lower_ascii(prose);
    std::size_t pos = 0;
    while ((pos = lower.find("correct answer", pos)) != std::string::npos) {
        std::string_view rest(prose);
        rest.remove_prefix(pos + 14);
        if (!rest.empty() && (rest.front() == 's' || rest.front() == 'S')) rest.remove_prefix(1);
        rest = skip_spaces(rest);
        if (text::istarts_with(rest, "is ")) rest.remove_prefix(3);
        else if (text::istarts_with(rest, "are ")) rest.remove_prefix(4);
        else if (!rest.empty() && rest.front() == ':') rest.remove_prefix(1);
        else {
            pos += 14;
            continue;
        }
        LabelSet found = read_label_list(rest);
        if (!found.empty()) return found;
        pos += 14;
    }
    return {};
}

ParseReport fail(ParseFailure f, std::vector<std::string> warnings) {
    ParseReport r;
    r.failure = f;
    r.warnings = std::move(warnings);
    return r;
}

std::string option_list_phrase(const McqQuestion& q) {
    std::vector<std::string> parts;
    for (Label l : q.answer_key()) parts.push_back(std::string(1, l) + ") " + q.option(l).text);
    std::string out;
    for (std::size_t i = 0; i < parts.size(); ++i) {
        if (i > 0) out += (i + 1 == parts.size()) ? " and " : ", ";
        out += parts[i];
    }
    return out;
}

} // namespace

std::string_view to_string(ParseFailure f) noexcept {
    switch (f) {
    case ParseFailure::NoStem: return "NoStem";
    case ParseFailure::NoOptions: return "NoOptions";
    case ParseFailure::BadLabels: return "BadLabels";
    case ParseFailure::NoAnswerKey: return "NoAnswerKey";
    case ParseFailure::DuplicateOption: return "DuplicateOption";
    }
    return "NoStem";
}

ParseReport parse_mcq(std::string_view input, QuestionKind kind, std::string id) {
    std::vector<std::string> warnings;
    std::vector<std::string> stem_lines;
    std::vector<RawOption> options;
    std::vector<std::string> trailing;
    std::optional<std::string> note_line;
    std::optional<std::string> note_body;
    bool options_ended = false;
    bool blank_pending = false;
    bool blank_inside_block = false;

    for (const auto& raw : text::split_lines(input)) {
        std::string line = text::trim(raw);
        if (line.empty()) {
            if (!options.empty() && !options_ended) blank_pending = true;
            continue;
        }

        std::smatch m;
        if (!options.empty() && std::regex_match(line, m, note_line_re())) {
            std::string body = m[1].str();
            if (line.front() == '(' && !body.empty() && body.back() == ')') body.pop_back();
            if (note_body) {
                warnings.emplace_back("multiple answer notes; using the first");
            } else {
                note_line = line;
                note_body = text::trim(body);
            }
            options_ended = true;
            continue;
        }

        if (!options_ended && std::regex_match(line, m, option_line_re())) {
            if (blank_pending) blank_inside_block = true;
            blank_pending = false;
            auto label = static_cast<Label>(std::toupper(static_cast<unsigned char>(m[1].str()[0])));
            options.push_back({label, text::trim(m[2].str())});
            continue;
        }

        if (options.empty()) {
            stem_lines.push_back(line);
        } else {
            options_ended = true;
            trailing.push_back(line);
        }
    }

    if (blank_inside_block) warnings.emplace_back("blank lines inside the option block");

    if (options.empty()) return fail(stem_lines.empty() ? ParseFailure::NoStem : ParseFailure::NoOptions, warnings);
    if (stem_lines.empty()) return fail(ParseFailure::NoStem, warnings);

    for (std::size_t i = 0; i < options.size(); ++i) {
        auto expected = static_cast<Label>('A' + i);
        if (options[i].label == expected) continue;
        for (std::size_t j = 0; j < i; ++j)
            if (options[j].label == options[i].label) return fail(ParseFailure::DuplicateOption, warnings);
        return fail(ParseFailure::BadLabels, warnings);
    }
    if (options.size() < kMinOptions) return fail(ParseFailure::NoOptions, warnings);

    std::set<std::string> seen_texts;
    for (const auto& o : options) {
        std::string norm = text::to_lower_ascii(text::squash_whitespace(text::nfc(o.text)));
        if (!seen_texts.insert(norm).second)
            warnings.push_back(std::string("duplicate option text for ") + o.label);
    }

    LabelSet all_labels;
    for (const auto& o : options) all_labels.insert(o.label);

    LabelSet key;
    if (note_body) {
        key = labels_from_note(*note_body, options, warnings);
        if (key.empty() && kind != QuestionKind::poll) return fail(ParseFailure::NoAnswerKey, warnings);
        if (key.empty()) {
            warnings.emplace_back("answer note names no option; treating poll as opinion-only");
            key = all_labels;
        }
    } else {
        std::string prose;
        for (const auto& t : trailing) prose += t + "\n";
        key = labels_from_prose(prose);
        if (!key.empty()) {
            warnings.emplace_back("answer key inferred from trailing explanation");
        } else if (kind == QuestionKind::poll) {
            key = all_labels;
        } else {
            return fail(ParseFailure::NoAnswerKey, warnings);
        }
    }
    for (Label l : key)
        if (all_labels.count(l) == 0U) return fail(ParseFailure::BadLabels, warnings);

    if (!trailing.empty())
        warnings.push_back("ignored " + std::to_string(trailing.size()) + " trailing line(s)");

    bool degenerate = kind != QuestionKind::poll && key == all_labels;
    if (degenerate) warnings.emplace_back("every option is marked correct");

    std::string stem;
    for (const auto& s : stem_lines) {
        if (!stem.empty()) stem += "\n";
        stem += s;
    }
    std::vector<std::string> texts;
    texts.reserve(options.size());
    for (const auto& o : options) texts.push_back(o.text);

    ParseReport report;
    try {
        report.question = McqQuestion::make(std::move(id), stem, texts, key, kind, note_line, degenerate);
    } catch (const Error&) {
        return fail(ParseFailure::BadLabels, warnings);
    }
    report.warnings = std::move(warnings);
    return report;
}

std::string render_answer_note(const McqQuestion& question) {
    const char* verb = question.answer_key().size() == 1 ? "answer is" : "answers are";
    return std::string("(Note: The correct ") + verb + " " + option_list_phrase(question) + ")";
}

std::string render_mcq(const McqQuestion& question) {
    std::string out = question.stem();
    out += "\n\n";
    for (const auto& o : question.options()) {
        out.push_back(o.label);
        out += ") " + o.text + "\n";
    }
    out += "\n" + render_answer_note(question) + "\n";
    return out;
}

} // namespace flipdeck::mcq
