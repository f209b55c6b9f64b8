#include "flipdeck/fip.hpp"

#include <array>
#include <cctype>
#include <set>

#include <httplib.h>

#include "flipdeck/mcq_parser.hpp"
#include "flipdeck/similarity.hpp"
#include "flipdeck/text.hpp"

namespace flipdeck::fip {

namespace {

constexpr std::array<std::string_view, 9> kNumberWords = {"zero", "one", "two",   "three", "four",
                                                          "five", "six", "seven", "eight"};

constexpr std::array<CueTemplate, 4> kCues = {{
    {1, "How are {} and {} alike?", 2},
    {2, "What are the strengths and weaknesses of {}?", 1},
    {3, "What would happen if {}?", 1},
    {4, "What is the evidence to support {}?", 1},
}};

QuestionKind question_kind(Format f) {
    return f == Format::clicker_poll ? QuestionKind::poll : QuestionKind::clicker_quiz;
}

std::string_view format_phrase(Format f) {
    switch (f) {
    case Format::clicker_poll: return "clicker poll";
    case Format::clicker_quiz: return "clicker quiz";
    case Format::jitt_open: return "open-ended JiTT quiz";
    }
    return "clicker quiz";
}

std::optional<std::string> extract_jitt(std::string_view reply) {
    for (const auto& line : text::split_lines(reply)) {
        std::string t = text::trim(line);
        if (text::istarts_with(t, kJittMarker)) {
            std::string rest = text::trim(std::string_view(t).substr(kJittMarker.size()));
            // Everything after the marker line belongs to the question too.
            std::size_t pos = std::string(reply).find(line);
            std::string tail = text::trim(reply.substr(pos + line.size()));
            if (!tail.empty()) rest += rest.empty() ? tail : "\n" + tail;
            if (!rest.empty()) return rest;
        }
    }
    return std::nullopt;
}

std::string strip_bullet(std::string s) {
    s = text::trim(s);
    if (!s.empty() && (s[0] == '-' || s[0] == '*')) return text::trim(std::string_view(s).substr(1));
    if (s.rfind("\xE2\x80\xA2", 0) == 0) return text::trim(std::string_view(s).substr(3));  // bullet U+2022
    std::size_t i = 0;
    while (i < s.size() && std::isdigit(static_cast<unsigned char>(s[i])) != 0) ++i;
    if (i > 0 && i < s.size() && (s[i] == '.' || s[i] == ')')) return text::trim(std::string_view(s).substr(i + 1));
    return s;
}

} // namespace

std::string_view to_string(Format f) noexcept {
    switch (f) {
    case Format::clicker_poll: return "clicker_poll";
    case Format::clicker_quiz: return "clicker_quiz";
    case Format::jitt_open: return "jitt_open";
    }
    return "clicker_quiz";
}

Format format_from_string(std::string_view s) {
    if (s == "clicker_poll") return Format::clicker_poll;
    if (s == "clicker_quiz") return Format::clicker_quiz;
    if (s == "jitt_open") return Format::jitt_open;
    throw Error(ErrorCode::BadParams, "unknown question format '" + std::string(s) + "'");
}

std::string_view to_string(Status s) noexcept {
    switch (s) {
    case Status::Completed: return "Completed";
    case Status::MaxTurnsExceeded: return "MaxTurnsExceeded";
    case Status::ProviderError: return "ProviderError";
    }
    return "ProviderError";
}

void QuestionGoal::validate() const {
    if (text::trim(topic).empty()) throw Error(ErrorCode::BadParams, "goal topic is empty");
    if (format != Format::jitt_open && (option_count < 2 || option_count > 8))
        throw Error(ErrorCode::BadParams, "option_count must lie in 2..8 for polls and quizzes");
}

std::size_t FipTranscript::model_turns() const noexcept {
    std::size_t n = 0;
    for (const auto& t : turns) n += t.speaker == Speaker::model ? 1 : 0;
    return n;
}

ScriptedProvider::ScriptedProvider(std::vector<Entry> script, bool repeat_last, ProviderIdentity identity)
    : script_(std::move(script)), repeat_last_(repeat_last), identity_(std::move(identity)) {}

std::string ScriptedProvider::generate(std::string_view, std::span<const Turn>) {
    std::size_t i = calls_++;
    if (i >= script_.size()) {
        if (!repeat_last_ || script_.empty()) throw Error(ErrorCode::ProviderError, "script exhausted");
        i = script_.size() - 1;
    }
    if (const auto* failure = std::get_if<ScriptedFailure>(&script_[i]))
        throw Error(ErrorCode::ProviderError, failure->message);
    return std::get<std::string>(script_[i]);
}

ReplayProvider::ReplayProvider(const FipTranscript& recorded) : identity_(recorded.provider) {
    for (const auto& t : recorded.turns)
        if (t.speaker == Speaker::model) replies_.push_back(t.text);
}

std::string ReplayProvider::generate(std::string_view, std::span<const Turn>) {
    if (next_ >= replies_.size()) throw Error(ErrorCode::ProviderError, "recorded transcript exhausted");
    return replies_[next_++];
}

HttpProvider::HttpProvider(std::string url, std::string key, std::string model)
    : url_(std::move(url)), key_(std::move(key)), model_(std::move(model)) {}

std::string HttpProvider::generate(std::string_view prompt, std::span<const Turn> history) {
    // Split "http://host:port/path" into origin and path.
    std::size_t scheme = url_.find("://");
    std::size_t path_at = url_.find('/', scheme == std::string::npos ? 0 : scheme + 3);
    std::string origin = path_at == std::string::npos ? url_ : url_.substr(0, path_at);
    std::string path = path_at == std::string::npos ? "/" : url_.substr(path_at);

    json hist = json::array();
    for (const auto& t : history)
        hist.push_back({{"speaker", t.speaker == Speaker::model ? "model" : "user"}, {"text", t.text}});
    json body = {{"model", model_}, {"prompt", std::string(prompt)}, {"history", hist}};

    httplib::Client client(origin);
    client.set_connection_timeout(10);
    client.set_read_timeout(120);
    httplib::Headers headers;
    if (!key_.empty()) headers.emplace("Authorization", "Bearer " + key_);
    auto res = client.Post(path, headers, body.dump(), "application/json");
    if (!res) throw Error(ErrorCode::ProviderError, "provider unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw Error(ErrorCode::ProviderError, "provider returned HTTP " + std::to_string(res->status));
    json reply = json::parse(res->body, nullptr, false);
    if (!reply.is_object() || !reply.contains("text") || !reply["text"].is_string())
        throw Error(ErrorCode::ProviderError, "provider reply lacks a text field");
    return reply["text"].get<std::string>();
}

std::string build_flipped_prompt(const QuestionGoal& goal) {
    goal.validate();
    std::string about = goal.focus ? *goal.focus : goal.topic;
    std::string out = "Please ask me questions to help me understand " + goal.topic +
                      ". Once you have enough information, create a";
    if (goal.format == Format::jitt_open) {
        out += "n " + std::string(format_phrase(goal.format)) + " about " + about + ". Begin the final question with \"" +
               std::string(kJittMarker) + "\".";
    } else {
        out += " " + std::string(format_phrase(goal.format)) + " with " +
               std::string(kNumberWords[static_cast<std::size_t>(goal.option_count)]) + " choices about " + about + ".";
    }
    for (const auto& c : goal.constraints) out += "\n" + c;
    return out;
}

std::optional<std::string> detect_repetition(const FipTranscript& transcript) {
    const Turn* latest = nullptr;
    for (auto it = transcript.turns.rbegin(); it != transcript.turns.rend(); ++it) {
        if (it->speaker == Speaker::model) {
            latest = &*it;
            break;
        }
    }
    if (latest == nullptr) return std::nullopt;
    for (const auto& t : transcript.turns) {
        if (&t == latest) break;
        if (t.speaker == Speaker::model && token_jaccard(t.text, latest->text) >= kRepetitionThreshold)
            return std::string(kDiversifyInstruction);
    }
    return std::nullopt;
}

FipTranscript run_fip_session(const QuestionGoal& goal, ProviderPort& provider, const Policy& policy) {
    if (policy.max_turns < 1) throw Error(ErrorCode::BadParams, "max_turns must be at least 1");
    const std::string seed = build_flipped_prompt(goal);

    FipTranscript t;
    t.id = policy.transcript_id;
    t.goal = goal;
    t.provider = provider.identity();
    Timestamp clock = policy.start_at;
    t.turns.push_back({Speaker::user, seed, clock++});

    for (int turn = 0; turn < policy.max_turns; ++turn) {
        std::string reply;
        try {
            reply = provider.generate(seed, t.turns);
        } catch (const std::exception& e) {
            t.status = Status::ProviderError;
            t.error = e.what();
            return t;
        }
        t.turns.push_back({Speaker::model, reply, clock++});

        if (goal.format == Format::jitt_open) {
            if (auto open = extract_jitt(reply)) {
                t.open_text = std::move(open);
                t.status = Status::Completed;
                return t;
            }
        } else {
            auto report = mcq::parse_mcq(reply, question_kind(goal.format));
            if (report.ok()) {
                t.question = std::move(report.question);
                t.status = Status::Completed;
                return t;
            }
        }

        if (turn + 1 == policy.max_turns) break;
        std::string answer;
        if (auto diversify = detect_repetition(t))
            answer = *diversify;
        else if (policy.answer_probe)
            answer = policy.answer_probe(reply);
        else
            answer = std::string(kDefaultProbeAnswer);
        t.turns.push_back({Speaker::user, std::move(answer), clock++});
    }
    t.status = Status::MaxTurnsExceeded;
    return t;
}

std::string build_consolidation_prompt(const std::vector<std::string>& responses) {
    std::vector<std::string> unique;
    std::set<std::string> seen;
    for (const auto& r : responses) {
        std::string t = text::trim(r);
        if (t.empty() || !seen.insert(t).second) continue;
        unique.push_back(std::move(t));
    }
    if (unique.empty()) throw Error(ErrorCode::EmptyInput, "no responses to consolidate");
    std::string prompt =
        "Summarize the following student responses into at most 10 talking points for the next class. "
        "Write one talking point per line.\n";
    for (const auto& r : unique) prompt += "\n- " + text::squash_whitespace(r);
    return prompt;
}

std::vector<std::string> consolidate_responses(const std::vector<std::string>& responses, ProviderPort& provider) {
    std::string prompt = build_consolidation_prompt(responses);
    std::string reply;
    try {
        reply = provider.generate(prompt, {});
    } catch (const Error& e) {
        if (e.code() == ErrorCode::ProviderError) throw;
        throw Error(ErrorCode::ProviderError, e.what());
    } catch (const std::exception& e) {
        throw Error(ErrorCode::ProviderError, e.what());
    }
    std::vector<std::string> points;
    for (const auto& line : text::split_lines(reply)) {
        std::string p = strip_bullet(line);
        if (p.empty()) continue;
        points.push_back(std::move(p));
        if (points.size() == kMaxTalkingPoints) break;
    }
    return points;
}

std::span<const CueTemplate> cue_templates() noexcept { return kCues; }

std::string fill_cue_template(int cue_id, const std::vector<std::string>& slots) {
    for (const auto& cue : kCues) {
        if (cue.id != cue_id) continue;
        if (static_cast<int>(slots.size()) != cue.arity)
            throw Error(ErrorCode::ArityMismatch, "cue " + std::to_string(cue_id) + " takes " +
                                                      std::to_string(cue.arity) + " slot(s), got " +
                                                      std::to_string(slots.size()));
        std::string out;
        std::size_t slot = 0;
        std::string_view tmpl = cue.text;
        for (std::size_t i = 0; i < tmpl.size(); ++i) {
            if (tmpl.compare(i, 2, "{}") == 0) {
                out += slots[slot++];
                ++i;
            } else {
                out.push_back(tmpl[i]);
            }
        }
        return out;
    }
    throw Error(ErrorCode::UnknownCue, "no cue template " + std::to_string(cue_id));
}

void to_json(json& j, const QuestionGoal& g) {
    j = json{{"topic", g.topic},
             {"format", std::string(to_string(g.format))},
             {"option_count", g.option_count},
             {"constraints", g.constraints}};
    j["focus"] = g.focus ? json(*g.focus) : json(nullptr);
}

QuestionGoal goal_from_json(const json& j) {
    QuestionGoal g;
    g.topic = j.at("topic").get<std::string>();
    if (j.contains("focus") && j["focus"].is_string()) g.focus = j["focus"].get<std::string>();
    g.format = format_from_string(j.value("format", std::string("clicker_quiz")));
    g.option_count = j.value("option_count", 4);
    g.constraints = j.value("constraints", std::vector<std::string>{});
    return g;
}

void to_json(json& j, const FipTranscript& t) {
    json turns = json::array();
    for (const auto& turn : t.turns)
        turns.push_back({{"speaker", turn.speaker == Speaker::model ? "model" : "user"},
                         {"text", turn.text},
                         {"at", turn.at}});
    j = json{{"id", t.id},
             {"goal", t.goal},
             {"turns", turns},
             {"status", std::string(to_string(t.status))},
             {"provider", {{"provider", t.provider.provider}, {"model", t.provider.model}}}};
    j["question"] = t.question ? json(*t.question) : json(nullptr);
    j["open_text"] = t.open_text ? json(*t.open_text) : json(nullptr);
    j["error"] = t.error ? json(*t.error) : json(nullptr);
}

FipTranscript transcript_from_json(const json& j) {
    try {
        FipTranscript t;
        t.id = j.value("id", std::string());
        t.goal = goal_from_json(j.at("goal"));
        for (const auto& turn : j.at("turns")) {
            std::string speaker = turn.at("speaker").get<std::string>();
            if (speaker != "model" && speaker != "user")
                throw Error(ErrorCode::BadRequest, "unknown speaker '" + speaker + "'");
            t.turns.push_back({speaker == "model" ? Speaker::model : Speaker::user, turn.at("text").get<std::string>(),
                               turn.value("at", Timestamp{0})});
        }
        std::string status = j.value("status", std::string("MaxTurnsExceeded"));
        if (status == "Completed")
            t.status = Status::Completed;
        else if (status == "ProviderError")
            t.status = Status::ProviderError;
        else if (status == "MaxTurnsExceeded")
            t.status = Status::MaxTurnsExceeded;
        else
            throw Error(ErrorCode::BadRequest, "unknown transcript status '" + status + "'");
        if (j.contains("question") && j["question"].is_object()) t.question = mcq_from_json(j["question"]);
        if (j.contains("open_text") && j["open_text"].is_string()) t.open_text = j["open_text"].get<std::string>();
        if (j.contains("error") && j["error"].is_string()) t.error = j["error"].get<std::string>();
        if (j.contains("provider") && j["provider"].is_object())
            t.provider = {j["provider"].value("provider", std::string()), j["provider"].value("model", std::string())};
        if ((t.status == Status::Completed) != t.has_result())
            throw Error(ErrorCode::BadRequest, "transcript status and result disagree");
        return t;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::BadRequest, std::string("malformed transcript: ") + e.what());
    }
}

} // namespace flipdeck::fip
