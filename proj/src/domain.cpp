#include "flipdeck/domain.hpp"

#include <algorithm>
#include <cctype>

#include "flipdeck/text.hpp"

namespace flipdeck {

namespace {

[[noreturn]] void invalid(const std::string& what) { throw Error(ErrorCode::InvalidQuestion, what); }

} // namespace

std::string_view to_string(QuestionKind kind) noexcept {
    switch (kind) {
    case QuestionKind::poll: return "poll";
    case QuestionKind::clicker_quiz: return "clicker_quiz";
    case QuestionKind::jitt_quiz: return "jitt_quiz";
    }
    return "poll";
}

QuestionKind question_kind_from_string(std::string_view s) {
    if (s == "poll") return QuestionKind::poll;
    if (s == "clicker_quiz") return QuestionKind::clicker_quiz;
    if (s == "jitt_quiz") return QuestionKind::jitt_quiz;
    throw Error(ErrorCode::BadRequest, "unknown question kind '" + std::string(s) + "'");
}

std::string_view to_string(Role role) noexcept {
    switch (role) {
    case Role::student: return "student";
    case Role::instructor: return "instructor";
    case Role::assistant: return "assistant";
    case Role::system: return "system";
    }
    return "student";
}

Role role_from_string(std::string_view s) {
    if (s == "student") return Role::student;
    if (s == "instructor") return Role::instructor;
    if (s == "assistant") return Role::assistant;
    if (s == "system") return Role::system;
    throw Error(ErrorCode::BadRequest, "unknown role '" + std::string(s) + "'");
}

Label parse_label(std::string_view s) {
    std::string t = text::trim(s);
    if (t.size() != 1) throw Error(ErrorCode::UnknownLabel, "label must be a single letter, got '" + t + "'");
    char c = static_cast<char>(std::toupper(static_cast<unsigned char>(t[0])));
    if (c < 'A' || c > 'H') throw Error(ErrorCode::UnknownLabel, "label out of range A..H: '" + t + "'");
    return c;
}

std::string labels_to_string(const LabelSet& labels) {
    std::string out;
    for (Label l : labels) {
        if (!out.empty()) out += ",";
        out.push_back(l);
    }
    return out;
}

McqQuestion McqQuestion::make(std::string id, std::string stem, const std::vector<std::string>& option_texts,
                              LabelSet answer_key, QuestionKind kind, std::optional<std::string> note,
                              bool degenerate) {
    McqQuestion q;
    q.id_ = std::move(id);
    q.stem_ = text::nfc(text::trim(stem));
    if (q.stem_.empty()) invalid("question stem is empty");
    if (option_texts.size() < kMinOptions || option_texts.size() > kMaxOptions)
        invalid("a question needs between 2 and 8 options, got " + std::to_string(option_texts.size()));

    Label next = 'A';
    for (const auto& raw : option_texts) {
        std::string t = text::nfc(text::trim(raw));
        if (t.empty()) invalid(std::string("option ") + next + " has empty text");
        q.options_.push_back({next, std::move(t)});
        ++next;
    }

    if (answer_key.empty()) invalid("answer key is empty");
    LabelSet key;
    for (Label l : answer_key) {
        Label u = static_cast<Label>(std::toupper(static_cast<unsigned char>(l)));
        if (!q.has_label(u)) throw Error(ErrorCode::UnknownLabel, std::string("answer key label ") + u + " is not an option");
        key.insert(u);
    }
    q.answer_key_ = std::move(key);
    q.kind_ = kind;
    q.degenerate_ = degenerate;
    if (kind != QuestionKind::poll && q.answer_key_.size() == q.options_.size() && !degenerate)
        invalid("quiz answer key covers every option but the question is not flagged degenerate");
    if (note) {
        std::string n = text::trim(*note);
        if (!n.empty()) q.note_ = std::move(n);
    }
    return q;
}

LabelSet McqQuestion::labels() const {
    LabelSet out;
    for (const auto& o : options_) out.insert(o.label);
    return out;
}

bool McqQuestion::has_label(Label label) const noexcept {
    return std::any_of(options_.begin(), options_.end(), [label](const Option& o) { return o.label == label; });
}

const Option& McqQuestion::option(Label label) const {
    for (const auto& o : options_)
        if (o.label == label) return o;
    throw Error(ErrorCode::UnknownLabel, std::string("no option ") + label);
}

McqQuestion McqQuestion::with_id(std::string id) const {
    McqQuestion copy = *this;
    copy.id_ = std::move(id);
    return copy;
}

bool structurally_equal(const McqQuestion& a, const McqQuestion& b) {
    if (a.kind() != b.kind() || a.answer_key() != b.answer_key()) return false;
    if (text::squash_whitespace(a.stem()) != text::squash_whitespace(b.stem())) return false;
    if (a.options().size() != b.options().size()) return false;
    for (std::size_t i = 0; i < a.options().size(); ++i) {
        const auto& x = a.options()[i];
        const auto& y = b.options()[i];
        if (x.label != y.label || text::squash_whitespace(x.text) != text::squash_whitespace(y.text)) return false;
    }
    return true;
}

Grade grade_response(const McqQuestion& question, const LabelSet& chosen) {
    Grade g;
    for (Label l : chosen) {
        if (!question.has_label(l)) throw Error(ErrorCode::UnknownLabel, std::string("label ") + l + " is not an option");
        if (question.answer_key().count(l) != 0U)
            g.matched.insert(l);
        else
            g.spurious.insert(l);
    }
    for (Label l : question.answer_key())
        if (chosen.count(l) == 0U) g.missing.insert(l);
    g.correct = g.missing.empty() && g.spurious.empty();
    return g;
}

RootQuestion RootQuestion::make(std::string id, std::string problem_statement, std::vector<McqQuestion> items,
                                std::map<HintKey, std::string> hints) {
    if (items.empty()) invalid("root question needs at least one item");
    std::set<std::string> seen;
    for (const auto& item : items) {
        if (!seen.insert(item.id()).second) invalid("duplicate root question item id '" + item.id() + "'");
        for (const auto& o : item.options()) {
            if (item.answer_key().count(o.label) != 0U) continue;
            if (hints.find({item.id(), o.label}) == hints.end())
                invalid("missing hint for incorrect option " + std::string(1, o.label) + " of item '" + item.id() + "'");
        }
    }
    RootQuestion rq;
    rq.id_ = std::move(id);
    rq.problem_statement_ = text::trim(problem_statement);
    rq.items_ = std::move(items);
    rq.hints_ = std::move(hints);
    return rq;
}

const McqQuestion* RootQuestion::find_item(const std::string& item_id) const noexcept {
    for (const auto& item : items_)
        if (item.id() == item_id) return &item;
    return nullptr;
}

RootStep step_root_question(const RootQuestion& rq, const RootProgress& progress) {
    for (const auto& [item_id, chosen] : progress) {
        const McqQuestion* item = rq.find_item(item_id);
        if (item == nullptr) throw Error(ErrorCode::UnknownItem, "root question has no item '" + item_id + "'");
        for (Label l : chosen)
            if (!item->has_label(l)) throw Error(ErrorCode::UnknownLabel, std::string("label ") + l + " is not an option");
    }

    RootStep step;
    step.solved = true;
    for (const auto& item : rq.items()) {
        auto it = progress.find(item.id());
        if (it == progress.end() || it->second.empty()) {
            step.solved = false;
            continue;
        }
        Grade g = grade_response(item, it->second);
        if (g.correct) continue;
        step.solved = false;
        for (Label l : g.spurious) {
            auto h = rq.hints().find({item.id(), l});
            if (h != rq.hints().end()) step.hints.push_back(h->second);
        }
        // Correct options may optionally carry an explanation too.
        for (Label l : g.missing) {
            auto h = rq.hints().find({item.id(), l});
            if (h != rq.hints().end()) step.hints.push_back(h->second);
        }
    }
    return step;
}

json labels_to_json(const LabelSet& labels) {
    json arr = json::array();
    for (Label l : labels) arr.push_back(std::string(1, l));
    return arr;
}

LabelSet labels_from_json(const json& j) {
    if (!j.is_array()) throw Error(ErrorCode::BadRequest, "labels must be an array");
    LabelSet out;
    for (const auto& v : j) {
        if (!v.is_string()) throw Error(ErrorCode::BadRequest, "label must be a string");
        out.insert(parse_label(v.get<std::string>()));
    }
    return out;
}

void to_json(json& j, const McqQuestion& q) {
    json opts = json::array();
    for (const auto& o : q.options()) opts.push_back(o.text);
    j = json{{"id", q.id()},
             {"stem", q.stem()},
             {"options", opts},
             {"answer_key", labels_to_json(q.answer_key())},
             {"kind", std::string(to_string(q.kind()))},
             {"degenerate", q.degenerate()}};
    j["note"] = q.note() ? json(*q.note()) : json(nullptr);
}

McqQuestion mcq_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::BadRequest, "question must be an object");
    std::optional<std::string> note;
    if (j.contains("note") && j["note"].is_string()) note = j["note"].get<std::string>();
    try {
        return McqQuestion::make(j.value("id", std::string()), j.at("stem").get<std::string>(),
                                 j.at("options").get<std::vector<std::string>>(), labels_from_json(j.at("answer_key")),
                                 question_kind_from_string(j.value("kind", std::string("clicker_quiz"))), note,
                                 j.value("degenerate", false));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadRequest, std::string("malformed question: ") + e.what());
    }
}

void to_json(json& j, const RootQuestion& rq) {
    json items = json::array();
    for (const auto& item : rq.items()) items.push_back(item);
    json hints = json::array();
    for (const auto& [key, hint] : rq.hints())
        hints.push_back({{"item", key.first}, {"label", std::string(1, key.second)}, {"hint", hint}});
    j = json{{"id", rq.id()}, {"problem_statement", rq.problem_statement()}, {"items", items}, {"hints", hints}};
}

RootQuestion root_from_json(const json& j) {
    try {
        std::vector<McqQuestion> items;
        for (const auto& item : j.at("items")) items.push_back(mcq_from_json(item));
        std::map<RootQuestion::HintKey, std::string> hints;
        for (const auto& h : j.at("hints"))
            hints[{h.at("item").get<std::string>(), parse_label(h.at("label").get<std::string>())}] =
                h.at("hint").get<std::string>();
        return RootQuestion::make(j.value("id", std::string()), j.value("problem_statement", std::string()),
                                  std::move(items), std::move(hints));
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadRequest, std::string("malformed root question: ") + e.what());
    }
}

void to_json(json& j, const Grade& g) {
    j = json{{"correct", g.correct},
             {"matched", labels_to_json(g.matched)},
             {"missing", labels_to_json(g.missing)},
             {"spurious", labels_to_json(g.spurious)}};
}

void to_json(json& j, const ActorRef& a) { j = json{{"id", a.id()}, {"role", std::string(to_string(a.role()))}}; }

ActorRef actor_from_json(const json& j) {
    return ActorRef(j.at("id").get<std::string>(), role_from_string(j.at("role").get<std::string>()));
}

} // namespace flipdeck
