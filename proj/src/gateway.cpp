#include "flipdeck/gateway.hpp"

#include <algorithm>
#include <charconv>
#include <thread>

#include <httplib.h>

#include "flipdeck/mcq_parser.hpp"
#include "flipdeck/text.hpp"

namespace flipdeck::gateway {

namespace {

using routine::Phase;

std::vector<std::string> split_path(const std::string& path) {
    std::vector<std::string> out;
    std::string cur;
    for (char ch : path) {
        if (ch == '/') {
            if (!cur.empty()) out.push_back(std::move(cur));
            cur.clear();
        } else if (ch == '?') {
            break;
        } else {
            cur += ch;
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

ApiResponse ok(const json& body, int status = 200) { return {status, "application/json", body.dump()}; }

json parse_body(const ApiRequest& r) {
    if (text::trim(r.body).empty()) return json::object();
    json j = json::parse(r.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) throw Error(ErrorCode::BadRequest, "request body must be a JSON object");
    return j;
}

std::optional<std::string> str(const json& j, const char* key) {
    if (j.contains(key) && j[key].is_string()) return j[key].get<std::string>();
    return std::nullopt;
}

std::uint64_t to_u64(const std::string& s, const char* what) {
    std::uint64_t v = 0;
    auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || p != s.data() + s.size())
        throw Error(ErrorCode::BadRequest, std::string(what) + " must be a non-negative integer");
    return v;
}

bool reviewer(const ActorRecord& r) { return r.actor.can_review() || r.actor.role() == Role::system; }

void require_reviewer(const ActorRecord& r) {
    if (!reviewer(r)) throw Error(ErrorCode::Unauthorized, r.actor.id() + " may not use this route");
}

void require_instructor(const ActorRecord& r) {
    if (r.actor.role() != Role::instructor && r.actor.role() != Role::system)
        throw Error(ErrorCode::Unauthorized, r.actor.id() + " is not an instructor");
}

fip::ProviderIdentity provider_of(const json& b) {
    if (!b.contains("provider") || !b["provider"].is_object()) return {};
    return {b["provider"].value("provider", std::string()), b["provider"].value("model", std::string())};
}

McqQuestion question_from_body(const json& b, QuestionKind default_kind, std::vector<std::string>& warnings) {
    if (b.contains("question") && b["question"].is_object()) return mcq_from_json(b["question"]);
    auto raw = str(b, "text");
    if (!raw) throw Error(ErrorCode::BadRequest, "a question object or question text is required");
    QuestionKind kind = default_kind;
    if (auto k = str(b, "kind")) kind = question_kind_from_string(*k);
    auto report = mcq::parse_mcq(*raw, kind);
    if (!report.ok())
        throw Error(ErrorCode::InvalidQuestion, "question text did not parse: " + std::string(mcq::to_string(*report.failure)));
    warnings = report.warnings;
    return *report.question;
}

QuestionSource source_from_body(const json& b, QuestionKind default_kind, std::vector<std::string>& warnings) {
    QuestionSource src;
    if (auto e = str(b, "bank_entry")) {
        src.bank_entry = *e;
        return src;
    }
    src.question = question_from_body(b, default_kind, warnings);
    return src;
}

SubmissionInput submission_from_body(const json& b, std::vector<std::string>& warnings) {
    SubmissionInput in;
    in.author = str(b, "author");
    if ((b.contains("question") && b["question"].is_object()) || str(b, "text"))
        in.question = question_from_body(b, QuestionKind::clicker_quiz, warnings);
    in.open_text = str(b, "open_text");
    if (b.contains("prompts")) {
        if (b["prompts"].is_string())
            in.prompts = {b["prompts"].get<std::string>()};
        else
            in.prompts = b["prompts"].get<std::vector<std::string>>();
    }
    if (b.contains("transcript") && b["transcript"].is_object()) in.transcript = fip::transcript_from_json(b["transcript"]);
    in.transcript_ref = str(b, "transcript_ref");
    in.summary = str(b, "summary");
    in.topic = str(b, "topic");
    if (b.contains("attachment") && b["attachment"].is_object())
        in.attachment = routine::Attachment{b["attachment"].at("media_type").get<std::string>(),
                                            b["attachment"].at("data_base64").get<std::string>()};
    in.provider = provider_of(b);
    return in;
}

json public_question(const McqQuestion& q, bool with_key) {
    json opts = json::array();
    for (const auto& o : q.options()) opts.push_back({{"label", std::string(1, o.label)}, {"text", o.text}});
    json out = {{"id", q.id()}, {"stem", q.stem()}, {"options", opts}, {"kind", std::string(to_string(q.kind()))}};
    if (with_key) {
        out["answer_key"] = labels_to_json(q.answer_key());
        out["note"] = q.note() ? json(*q.note()) : json(nullptr);
    }
    return out;
}

json instance_view(const routine::QuestionInstance& inst, bool with_key) {
    return {{"id", inst.id},
            {"session", inst.session_id},
            {"kind", std::string(routine::to_string(inst.kind))},
            {"question", public_question(inst.question, with_key || inst.tally.closed)},
            {"bank_entry", inst.bank_entry ? json(*inst.bank_entry) : json(nullptr)},
            {"opened_at", inst.opened_at},
            {"deadline", inst.deadline ? json(*inst.deadline) : json(nullptr)},
            {"closed", inst.tally.closed}};
}

json tally_json(const routine::VoteTally& t, const std::string& instance) {
    json j = t;
    j["instance"] = instance;
    j["total"] = t.total();
    return j;
}

std::string tally_text(const routine::VoteTally& t, const std::string& instance) {
    std::string out = "Results for " + instance + " (" + std::to_string(t.total()) +
                      (t.total() == 1 ? " vote" : " votes") + "):";
    bool first = true;
    for (const auto& [label, count] : t.counts) {
        out += first ? " " : ", ";
        out += std::string(1, label) + " " + std::to_string(count);
        first = false;
    }
    return out;
}

std::optional<pacing::Band> band_param(const std::map<std::string, std::string>& q) {
    auto it = q.find("band");
    if (it == q.end()) return std::nullopt;
    const std::string& v = it->second;
    if (v == "moderate") return pacing::kModerateBand;
    if (v == "elevated") return pacing::kElevatedBand;
    auto dash = v.find('-');
    if (dash == std::string::npos) throw Error(ErrorCode::BadRequest, "band must be lo-hi, moderate or elevated");
    pacing::Band b{static_cast<int>(to_u64(v.substr(0, dash), "band")),
                   static_cast<int>(to_u64(v.substr(dash + 1), "band"))};
    if (b.lo < 1 || b.hi > 10 || b.lo > b.hi) throw Error(ErrorCode::OutOfRange, "band must lie within 1..10");
    return b;
}

} // namespace

int http_status(ErrorCode code) noexcept {
    switch (code) {
    case ErrorCode::PhaseViolation:
    case ErrorCode::AlreadyVoted:
    case ErrorCode::AlreadyDecided: return 409;
    case ErrorCode::DeadlineExpired: return 410;
    case ErrorCode::Unauthorized:
    case ErrorCode::VoteRequired: return 403;
    case ErrorCode::Unauthenticated: return 401;
    case ErrorCode::NotFound: return 404;
    case ErrorCode::BadRequest: return 400;
    case ErrorCode::ProviderError: return 502;
    case ErrorCode::StorageFailure: return 503;
    case ErrorCode::CorruptRecord: return 500;
    default: return 422;
    }
}

ApiResponse error_response(const Error& e) {
    return ok({{"error", {{"code", std::string(to_string(e.code()))}, {"message", e.what()}}}}, http_status(e.code()));
}

ChatInbound chat_inbound_from_json(const json& j) {
    if (!j.is_object()) throw Error(ErrorCode::BadRequest, "chat message must be an object");
    ChatInbound m;
    m.platform = j.value("platform", std::string());
    m.chat_id = j.value("chat_id", std::string());
    m.user_ref = j.value("user_ref", std::string());
    m.text = str(j, "text");
    m.callback_data = str(j, "callback_data");
    if (m.platform.empty() || m.chat_id.empty() || m.user_ref.empty())
        throw Error(ErrorCode::BadRequest, "platform, chat_id and user_ref are required");
    if (m.text.has_value() == m.callback_data.has_value())
        throw Error(ErrorCode::BadRequest, "exactly one of text and callback_data must be present");
    return m;
}

json to_json(const ChatOutbound& m) {
    json buttons = json::array();
    for (const auto& b : m.buttons) buttons.push_back({{"label", b.label}, {"callback_data", b.callback_data}});
    return {{"chat_id", m.chat_id}, {"text", m.text}, {"buttons", buttons}};
}

std::string format_sse(const std::vector<json>& deltas) {
    std::string out;
    for (const auto& d : deltas) {
        out += "id: " + std::to_string(d.at("seq").get<std::uint64_t>()) + "\n";
        out += "event: " + d.at("type").get<std::string>() + "\n";
        out += "data: " + d.dump() + "\n\n";
    }
    return out;
}

Gateway::Gateway(Application& app, const Clock& clock, fip::ProviderPort* provider)
    : app_(app), clock_(clock), provider_(provider) {
    app_.set_commit_listener([this](const events::EventEnvelope&) { cv_.notify_all(); });
}

std::uint64_t Gateway::last_seq() {
    std::lock_guard lock(mu_);
    return app_.store().last_seq();
}

std::uint64_t Gateway::wait_beyond(std::uint64_t seq, std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return stopping_ || app_.store().last_seq() > seq; });
    return app_.store().last_seq();
}

void Gateway::shutdown() {
    {
        std::lock_guard lock(mu_);
        stopping_ = true;
    }
    cv_.notify_all();
}

bool Gateway::stopping() const {
    std::lock_guard lock(mu_);
    return stopping_;
}

const ActorRecord& Gateway::authenticate(const ApiRequest& r) const {
    std::string h = text::trim(r.authorization);
    if (!text::istarts_with(h, "bearer ")) throw Error(ErrorCode::Unauthenticated, "missing bearer token");
    return app_.authenticate(text::trim(h.substr(7)));
}

ApiResponse Gateway::handle(const ApiRequest& request) {
    std::lock_guard lock(mu_);
    try {
        return route(request);
    } catch (const Error& e) {
        return error_response(e);
    } catch (const json::exception& e) {
        return error_response(Error(ErrorCode::BadRequest, std::string("malformed request: ") + e.what()));
    }
}

std::vector<ChatOutbound> Gateway::handle_chat(const ChatInbound& message) {
    std::lock_guard lock(mu_);
    return chat(message);
}

std::string Gateway::live_viewer(const ApiRequest& request, const std::string& session) {
    std::lock_guard lock(mu_);
    const ActorRecord& who = authenticate(request);
    app_.state().routines.session(session);
    return who.actor.id();
}

LiveBatch Gateway::live_deltas(const std::string& viewer, const std::string& session, std::uint64_t from,
                               std::size_t limit) {
    std::lock_guard lock(mu_);
    return live_locked(viewer, session, from, limit);
}

LiveBatch Gateway::live_locked(const std::string& viewer, const std::string& session, std::uint64_t from,
                               std::size_t limit) {
    const AppState& st = app_.state();
    const ActorRef& who = st.actor(viewer).actor;
    const auto& evs = app_.store().events();
    LiveBatch batch;
    batch.scanned_to = from;
    // Running counts have to start from the first vote, so scan the whole
    // log but only emit past `from`.
    std::map<std::string, std::map<Label, std::int64_t>> counts;
    auto instance_of_session = [&](const json& p) -> std::optional<std::string> {
        auto id = str(p, "instance");
        if (!id) return std::nullopt;
        auto it = st.routines.instances().find(*id);
        if (it == st.routines.instances().end() || it->second.session_id != session) return std::nullopt;
        return id;
    };
    auto visible = [&](const std::string& instance) {
        const auto& inst = st.routines.instance(instance);
        return who.role() != Role::student || inst.tally.closed || inst.votes.count(who.id()) != 0U;
    };
    for (const auto& e : evs) {
        if (limit != 0 && batch.deltas.size() >= limit) break;
        json d;
        if (e.kind == "vote.cast" || e.kind == "instance.closed") {
            auto inst = instance_of_session(e.payload);
            if (!inst) continue;
            auto& c = counts[*inst];
            if (c.empty())
                for (const auto& o : st.routines.instance(*inst).question.options()) c[o.label] = 0;
            if (e.kind == "vote.cast") {
                std::string l = e.payload.at("labels").at(0).get<std::string>();
                ++c[static_cast<char>(std::toupper(static_cast<unsigned char>(l.at(0))))];
            }
            if (e.seq <= from) continue;
            std::int64_t total = 0;
            for (const auto& [k, v] : c) total += v;
            d = {{"type", e.kind == "vote.cast" ? "tally" : "closed"}, {"instance", *inst}, {"total", total}};
            if (e.kind == "instance.closed" || visible(*inst)) {
                json cj = json::object();
                for (const auto& [k, v] : c) cj[std::string(1, k)] = v;
                d["counts"] = cj;
            }
        } else {
            if (e.seq <= from) continue;
            if (str(e.payload, "session") != session) continue;
            if (e.kind == "poll.opened" || e.kind == "quiz.opened") {
                const auto& sess = st.routines.session(session);
                bool quiz = e.kind == "quiz.opened";
                std::string inst = (quiz ? sess.quiz_instance : sess.poll_instance).value_or("");
                d = {{"type", "opened"}, {"instance", inst}, {"instance_kind", e.kind == "poll.opened" ? "poll" : "quiz"}};
            } else if (e.kind == "phase.advanced") {
                d = {{"type", "phase"}, {"phase", e.payload.at("target")}};
            } else if (e.kind == "jitt.opened") {
                d = {{"type", "phase"}, {"phase", "JittOpen"}};
            } else if (e.kind == "consolidation.recorded") {
                d = {{"type", "phase"}, {"phase", "Consolidated"}};
            } else if (e.kind == "submission.queued") {
                d = {{"type", "submission"}};
            } else {
                continue;
            }
        }
        d["seq"] = e.seq;
        d["ts"] = e.ts;
        d["session"] = session;
        batch.deltas.push_back(std::move(d));
        batch.scanned_to = e.seq;
    }
    if (limit == 0 || batch.deltas.size() < limit) batch.scanned_to = std::max(batch.scanned_to, app_.store().last_seq());
    return batch;
}

ApiResponse Gateway::route(const ApiRequest& r) {
    auto seg = split_path(r.path);
    const std::string& m = r.method;
    Timestamp now = clock_.now();
    std::size_t n = seg.size();
    auto is = [&](std::initializer_list<const char*> parts) {
        if (parts.size() != n) return false;
        std::size_t i = 0;
        for (const char* p : parts) {
            if (std::string_view(p) != "*" && seg[i] != p) return false;
            ++i;
        }
        return true;
    };

    if (m == "GET" && is({"health"})) return ok({{"status", "ok"}, {"seq", app_.store().last_seq()}});
    if (m == "POST" && is({"chat", "inbound"})) {
        json out = json::array();
        for (const auto& msg : chat(chat_inbound_from_json(parse_body(r)))) out.push_back(to_json(msg));
        return ok(out);
    }

    const ActorRecord& who = authenticate(r);
    const std::string& me = who.actor.id();
    const AppState& st = app_.state();

    if (m == "GET" && is({"me"}))
        return ok({{"id", me}, {"role", std::string(to_string(who.actor.role()))}, {"courses", who.courses}});

    if (m == "POST" && is({"actors"})) {
        require_instructor(who);
        json b = parse_body(r);
        std::optional<std::string> course = str(b, "course");
        std::string token = app_.register_actor(b.at("id").get<std::string>(),
                                                role_from_string(b.value("role", std::string("student"))), course, now);
        return ok({{"id", b["id"]}, {"token", token}}, 201);
    }
    if (m == "POST" && is({"actors", "*", "courses"})) {
        require_instructor(who);
        json b = parse_body(r);
        app_.enroll(seg[1], b.at("course").get<std::string>(), now);
        return ok({{"id", seg[1]}, {"courses", st.actor(seg[1]).courses}});
    }

    // --- sessions ---------------------------------------------------------
    if (m == "POST" && is({"sessions"})) {
        json b = parse_body(r);
        routine::SessionConfig config;
        if (b.contains("config") && b["config"].is_object()) {
            config.quiz_time_limit_s = b["config"].value("quiz_time_limit_s", config.quiz_time_limit_s);
            config.prompt_phase_enabled = b["config"].value("prompt_phase_enabled", config.prompt_phase_enabled);
        }
        std::optional<std::string> key = str(b, "idempotency_key");
        std::uint64_t before = app_.store().last_seq();
        std::string id = app_.create_session(me, routine::routine_kind_from_string(b.at("kind").get<std::string>()),
                                             b.at("course").get<std::string>(), config, key, now);
        const auto& s = st.routines.session(id);
        return ok({{"id", id}, {"phase", std::string(routine::to_string(s.phase))}, {"kind", std::string(routine::to_string(s.kind))}},
                  app_.store().last_seq() > before ? 201 : 200);
    }
    if (n >= 2 && seg[0] == "sessions") {
        const std::string& sid = seg[1];
        if (m == "GET" && n == 2) return ok(json(st.routines.session(sid)));
        if (m == "POST" && n == 3 && (seg[2] == "polls" || seg[2] == "quizzes")) {
            require_instructor(who);
            std::vector<std::string> warnings;
            json b = parse_body(r);
            bool quiz = seg[2] == "quizzes";
            QuestionSource src = source_from_body(b, quiz ? QuestionKind::clicker_quiz : QuestionKind::poll, warnings);
            if (quiz) {
                auto o = app_.open_quiz(me, sid, src, now);
                return ok({{"instance", o.instance}, {"deadline", o.deadline}, {"warnings", warnings}}, 201);
            }
            return ok({{"instance", app_.open_poll(me, sid, src, now)}, {"warnings", warnings}}, 201);
        }
        if (m == "POST" && n == 3 && seg[2] == "phase") {
            json b = parse_body(r);
            const auto& s = app_.advance_phase(me, sid, routine::phase_from_string(b.at("target").get<std::string>()), now);
            return ok({{"id", sid}, {"phase", std::string(routine::to_string(s.phase))}});
        }
        if (m == "POST" && n == 3 && seg[2] == "jitt") {
            json b = parse_body(r);
            app_.open_jitt(me, sid, b.at("prompt").get<std::string>(), now);
            return ok({{"id", sid}, {"phase", "JittOpen"}});
        }
        if (m == "POST" && n == 3 && seg[2] == "submissions") {
            std::vector<std::string> warnings;
            SubmissionInput in = submission_from_body(parse_body(r), warnings);
            std::string id = app_.submit(me, sid, std::nullopt, in, now);
            return ok({{"id", id}, {"status", "Pending"}, {"warnings", warnings}}, 201);
        }
        if (m == "POST" && n == 3 && seg[2] == "difficulty") {
            json b = parse_body(r);
            auto choice = routine::difficulty_choice_from_string(b.at("choice").get<std::string>());
            app_.choose_difficulty(me, sid, choice, now);
            return ok({{"id", sid}, {"choice", std::string(routine::to_string(choice))}});
        }
        if (m == "POST" && n == 3 && seg[2] == "consolidate") {
            require_instructor(who);
            if (provider_ == nullptr) throw Error(ErrorCode::ProviderError, "no text provider is configured");
            auto points = app_.consolidate(me, sid, *provider_, now);
            return ok({{"id", sid}, {"talking_points", points}, {"phase", "Consolidated"}});
        }
        if (m == "POST" && n == 3 && seg[2] == "groups") {
            json b = parse_body(r);
            app_.annotate_groups(me, sid, b.at("groups").get<std::vector<std::vector<std::string>>>(), now);
            return ok({{"id", sid}, {"groups", b["groups"]}});
        }
        if (m == "GET" && n == 3 && seg[2] == "selection") {
            json out = json::array();
            for (const auto* e : app_.selection_for(me, sid)) out.push_back(bank::public_view(*e));
            return ok(out);
        }
        if (m == "POST" && n == 3 && seg[2] == "drafts") {
            json b = parse_body(r);
            app_.append_draft(me, sid, b.at("text").get<std::string>(), now);
            return ok({{"id", sid}, {"lines", st.drafts.at(sid + "/" + me).size()}});
        }
        if (m == "POST" && n == 4 && seg[2] == "drafts" && seg[3] == "submit")
            return ok({{"id", app_.submit_draft(me, sid, now)}, {"status", "Pending"}}, 201);
    }

    // --- instances --------------------------------------------------------
    if (n >= 2 && seg[0] == "instances") {
        const std::string& iid = seg[1];
        if (m == "GET" && n == 2) return ok(instance_view(st.routines.instance(iid), who.actor.role() != Role::student));
        if (m == "POST" && n == 3 && seg[2] == "votes") {
            json b = parse_body(r);
            LabelSet labels;
            json raw = b.contains("labels") ? b["labels"] : json::array({b.value("label", std::string())});
            if (!raw.is_array()) throw Error(ErrorCode::BadRequest, "labels must be an array");
            // Unknown labels are reported by the engine in its own order.
            st.routines.instance(iid);
            for (const auto& v : raw) {
                std::string s = v.is_string() ? text::trim(v.get<std::string>()) : std::string();
                char c = s.size() == 1 ? static_cast<char>(std::toupper(static_cast<unsigned char>(s[0]))) : '?';
                labels.insert(c >= 'A' && c <= 'H' ? c : '?');
            }
            app_.cast_vote(me, iid, labels, now);
            return ok({{"instance", iid}, {"recorded", true}, {"tally", tally_json(app_.view_tally(me, iid), iid)}}, 201);
        }
        if (m == "POST" && n == 3 && seg[2] == "close") {
            auto tally = app_.close_instance(me, iid, now);
            auto acc = st.routines.instance(iid).accuracy();
            return ok({{"instance", iid}, {"tally", tally_json(tally, iid)}, {"accuracy", acc ? json(*acc) : json(nullptr)}});
        }
        if (m == "GET" && n == 3 && seg[2] == "tally") return ok(tally_json(app_.view_tally(me, iid), iid));
    }

    // --- vetting and bank -------------------------------------------------
    if (m == "GET" && is({"vetting", "queue"})) {
        require_reviewer(who);
        bank::Query q;
        q.status = bank::Status::Pending;
        if (auto it = r.query.find("course"); it != r.query.end()) q.course = it->second;
        json out = json::array();
        for (const auto* e : st.bank.query(q)) out.push_back(json(*e));
        return ok(out);
    }
    if (m == "POST" && is({"vetting", "*", "reproduce"})) {
        require_reviewer(who);
        json b = parse_body(r);
        std::optional<std::string> text_in = str(b, "regenerated_text");
        fip::ProviderIdentity ident = provider_of(b);
        if (!text_in) {
            if (provider_ == nullptr) throw Error(ErrorCode::ProviderError, "no text provider is configured");
            const auto& e = st.bank.entry(seg[1]);
            std::string prompt;
            for (const auto& p : e.provenance.prompts) prompt += (prompt.empty() ? "" : "\n") + p;
            try {
                text_in = provider_->generate(prompt, {});
            } catch (const std::exception& ex) {
                throw Error(ErrorCode::ProviderError, ex.what());
            }
            ident = provider_->identity();
        }
        auto c = app_.reproduce(me, seg[1], *text_in, ident, now);
        return ok({{"entry", seg[1]}, {"similarity", c.similarity}, {"match", c.match}, {"result", c.match ? "Match" : "Mismatch"}});
    }
    if (m == "POST" && is({"vetting", "*", "verdict"})) {
        json b = parse_body(r);
        std::optional<double> d;
        if (b.contains("difficulty") && !b["difficulty"].is_null()) {
            if (!b["difficulty"].is_number()) throw Error(ErrorCode::OutOfRange, "difficulty must be a number");
            d = b["difficulty"].get<double>();
        }
        const auto& e = app_.record_verdict(me, seg[1], bank::decision_from_string(b.at("decision").get<std::string>()), d, now);
        return ok(json(e));
    }
    if (m == "GET" && is({"bank"})) {
        bank::Query q;
        if (auto it = r.query.find("course"); it != r.query.end()) q.course = it->second;
        if (auto it = r.query.find("topic"); it != r.query.end()) q.topic = it->second;
        if (auto it = r.query.find("kind"); it != r.query.end()) q.kind = it->second;
        if (auto it = r.query.find("status"); it != r.query.end()) q.status = bank::status_from_string(it->second);
        q.band = band_param(r.query);
        bool full = reviewer(who);
        if (!full) q.status = bank::Status::Approved;
        json out = json::array();
        for (const auto* e : st.bank.query(q)) out.push_back(full ? json(*e) : bank::public_view(*e));
        return ok(out);
    }
    if (m == "GET" && is({"bank", "*"})) {
        const auto& e = st.bank.entry(seg[1]);
        if (reviewer(who)) return ok(json(e));
        if (e.status != bank::Status::Approved && e.provenance.author.id() != me)
            throw Error(ErrorCode::NotFound, "no bank entry " + seg[1]);
        return ok(bank::public_view(e));
    }
    if (m == "POST" && is({"bank", "roots"})) {
        json b = parse_body(r);
        std::string id = app_.queue_root(me, b.at("course").get<std::string>(), str(b, "topic"), root_from_json(b.at("root")), now);
        return ok({{"id", id}, {"status", "Pending"}}, 201);
    }
    if (m == "GET" && is({"transcripts", "*"})) {
        auto it = st.transcripts.find(seg[1]);
        if (it == st.transcripts.end()) throw Error(ErrorCode::NotFound, "no transcript " + seg[1]);
        return ok(json(it->second));
    }

    // --- pacing and analytics ---------------------------------------------
    if (m == "GET" && is({"pacing", "*"})) {
        auto it = st.courses.find(seg[1]);
        if (it == st.courses.end()) throw Error(ErrorCode::NotFound, "no pacing state for course " + seg[1]);
        json series = json::array();
        for (const auto& p : it->second.series)
            series.push_back({{"session_ref", p.session_ref}, {"accuracy", p.accuracy}, {"ewma", p.ewma}, {"pace", p.pace}});
        return ok({{"course", seg[1]}, {"state", it->second.state}, {"series", series}});
    }
    if (m == "GET" && is({"pacing", "*", "recommendation"})) {
        RecommendationView v = app_.recommendation(seg[1]);
        return ok({{"course", seg[1]},
                   {"item_count", v.recommendation.item_count},
                   {"band", v.recommendation.band},
                   {"empty_bank", v.recommendation.empty_bank},
                   {"selection", v.selection},
                   {"state", v.state}});
    }
    if (m == "POST" && is({"pacing", "*", "topic"})) {
        auto s = app_.start_new_topic(me, seg[1], now);
        return ok({{"course", seg[1]}, {"state", s}});
    }
    if (m == "GET" && is({"analytics", "*", "*"})) {
        require_reviewer(who);
        return {200, "text/csv", app_.export_csv(seg[1], seg[2])};
    }

    // --- live channel (non-streaming snapshot) -----------------------------
    if (m == "GET" && is({"live", "*"})) {
        st.routines.session(seg[1]);
        std::uint64_t from = r.last_event_id.value_or(0);
        if (auto it = r.query.find("from"); it != r.query.end()) from = to_u64(it->second, "from");
        std::size_t limit = 0;
        if (auto it = r.query.find("limit"); it != r.query.end()) limit = to_u64(it->second, "limit");
        return {200, "text/event-stream", format_sse(live_locked(me, seg[1], from, limit).deltas)};
    }

    // --- prompts ----------------------------------------------------------
    if (m == "GET" && is({"cues"})) {
        json out = json::array();
        for (const auto& c : fip::cue_templates()) out.push_back({{"id", c.id}, {"text", c.text}, {"arity", c.arity}});
        return ok(out);
    }
    if (m == "POST" && is({"cues", "*"})) {
        json b = parse_body(r);
        int id = static_cast<int>(to_u64(seg[1], "cue id"));
        return ok({{"id", id}, {"text", fip::fill_cue_template(id, b.at("slots").get<std::vector<std::string>>())}});
    }
    if (m == "POST" && is({"fip", "prompt"})) {
        fip::QuestionGoal goal = fip::goal_from_json(parse_body(r).at("goal"));
        return ok({{"prompt", fip::build_flipped_prompt(goal)}});
    }
    if (m == "POST" && is({"fip", "sessions"})) {
        if (provider_ == nullptr) throw Error(ErrorCode::ProviderError, "no text provider is configured");
        json b = parse_body(r);
        fip::QuestionGoal goal = fip::goal_from_json(b.at("goal"));
        fip::Policy policy;
        policy.max_turns = b.value("max_turns", policy.max_turns);
        policy.start_at = now;
        auto answers = std::make_shared<std::vector<std::string>>(b.value("answers", std::vector<std::string>{}));
        auto next = std::make_shared<std::size_t>(0);
        policy.answer_probe = [answers, next](std::string_view) {
            if (*next < answers->size()) return (*answers)[(*next)++];
            return std::string(fip::kDefaultProbeAnswer);
        };
        fip::FipTranscript t = fip::run_fip_session(goal, *provider_, policy);
        std::string id = app_.record_transcript(me, t, now);
        return ok(json(st.transcripts.at(id)), 201);
    }

    throw Error(ErrorCode::NotFound, "no route for " + m + " " + r.path);
}

std::vector<ChatOutbound> Gateway::chat(const ChatInbound& msg) {
    Timestamp now = clock_.now();
    std::string actor = msg.platform + ":" + msg.user_ref;
    const AppState& st = app_.state();
    auto reply = [&](std::string text, std::vector<ChatButton> buttons = {}) {
        return ChatOutbound{msg.chat_id, std::move(text), std::move(buttons)};
    };
    auto not_understood = [&] { return std::vector<ChatOutbound>{reply(std::string(kChatNotUnderstood))}; };

    if (st.actors.count(actor) == 0U) app_.register_actor(actor, Role::student, std::nullopt, now);
    auto enrol = [&](const std::string& session) {
        const std::string& course = st.routines.session(session).course;
        if (st.actor(actor).courses.count(course) == 0U) app_.enroll(actor, course, now);
    };

    if (msg.callback_data) {
        std::vector<std::string> parts;
        std::string cur;
        for (char ch : *msg.callback_data) {
            if (ch == ':') {
                parts.push_back(cur);
                cur.clear();
            } else {
                cur += ch;
            }
        }
        parts.push_back(cur);
        try {
            if (parts.size() == 3 && parts[0] == "vote") {
                const std::string& iid = parts[1];
                if (st.routines.instances().count(iid) == 0U || parts[2].size() != 1) return not_understood();
                char c = static_cast<char>(std::toupper(static_cast<unsigned char>(parts[2][0])));
                if (c < 'A' || c > 'H') return not_understood();
                enrol(st.routines.instance(iid).session_id);
                app_.cast_vote(actor, iid, {c}, now);
                auto tally = app_.view_tally(actor, iid);
                return {reply("Vote recorded: " + std::string(1, c) + "."), reply(tally_text(tally, iid))};
            }
            if (parts.size() == 3 && parts[0] == "diff") {
                if (st.routines.sessions().count(parts[1]) == 0U) return not_understood();
                if (parts[2] != "moderate" && parts[2] != "elevated") return not_understood();
                enrol(parts[1]);
                app_.choose_difficulty(actor, parts[1], routine::difficulty_choice_from_string(parts[2]), now);
                return {reply("Difficulty set to " + parts[2] + ".")};
            }
            if (parts.size() == 2 && parts[0] == "submit") {
                if (st.routines.sessions().count(parts[1]) == 0U) return not_understood();
                std::string id = app_.submit_draft(actor, parts[1], now);
                return {reply("Thanks! Submission " + id + " is waiting for review.")};
            }
            if (parts.size() == 2 && parts[0] == "show") {
                auto it = st.routines.instances().find(parts[1]);
                if (it == st.routines.instances().end()) return not_understood();
                const McqQuestion& q = it->second.question;
                std::string text_out = q.stem();
                std::vector<ChatButton> buttons;
                for (const auto& o : q.options()) {
                    text_out += "\n" + std::string(1, o.label) + ") " + o.text;
                    if (buttons.size() < kMaxOptions)
                        buttons.push_back({std::string(1, o.label), "vote:" + parts[1] + ":" + std::string(1, o.label)});
                }
                return {reply(text_out, buttons)};
            }
        } catch (const Error& e) {
            switch (e.code()) {
            case ErrorCode::AlreadyVoted: return {reply(std::string(kChatAlreadyVoted))};
            case ErrorCode::DeadlineExpired: return {reply("Voting on this question has closed.")};
            case ErrorCode::UnknownLabel:
            case ErrorCode::InvalidVote:
            case ErrorCode::NotFound: return not_understood();
            case ErrorCode::PhaseViolation: return {reply("That isn't possible at this point of the session.")};
            case ErrorCode::Unauthorized: return {reply("Only students can do that.")};
            case ErrorCode::InvalidSubmission:
                return {reply("Your draft needs at least one line starting with \"prompt:\" and the question you generated.")};
            default: return {reply("Something went wrong; please try again.")};
            }
        }
        return not_understood();
    }

    // Free text joins the draft for the newest session accepting submissions.
    const ActorRecord& rec = st.actor(actor);
    std::optional<std::string> target;
    for (auto it = st.routines.session_order().rbegin(); it != st.routines.session_order().rend(); ++it) {
        const auto& s = st.routines.session(*it);
        bool open = s.kind == routine::RoutineKind::PollPromptQuiz
                        ? s.phase == Phase::PromptPhase
                        : (s.phase == Phase::JittOpen || s.phase == Phase::PromptPhase);
        if (!open) continue;
        if (!rec.courses.empty() && rec.courses.count(s.course) == 0U) continue;
        target = s.id;
        break;
    }
    if (!target) return {reply("There is no prompt phase open right now.")};
    try {
        enrol(*target);
        app_.append_draft(actor, *target, *msg.text, now);
    } catch (const Error&) {
        return {reply("That message could not be added to your draft.")};
    }
    std::size_t lines = st.drafts.at(*target + "/" + actor).size();
    return {reply("Added to your draft for " + *target + " (" + std::to_string(lines) + (lines == 1 ? " line)." : " lines)."),
                  {{"Submit", "submit:" + *target}})};
}

// --- HTTP server ------------------------------------------------------------

struct HttpServer::Impl {
    explicit Impl(Gateway& g) : gateway(g) {}
    Gateway& gateway;
    httplib::Server server;
    std::thread thread;
};

namespace {

ApiRequest to_api(const httplib::Request& req) {
    ApiRequest r;
    r.method = req.method;
    r.path = req.path;
    for (const auto& [k, v] : req.params) r.query.emplace(k, v);
    r.body = req.body;
    r.authorization = req.get_header_value("Authorization");
    std::string last = req.get_header_value("Last-Event-ID");
    if (!last.empty()) {
        std::uint64_t v = 0;
        auto [p, ec] = std::from_chars(last.data(), last.data() + last.size(), v);
        if (ec == std::errc() && p == last.data() + last.size()) r.last_event_id = v;
    }
    return r;
}

void write(httplib::Response& res, const ApiResponse& a) {
    res.status = a.status;
    res.set_content(a.body, a.content_type.c_str());
}

} // namespace

HttpServer::HttpServer(Gateway& gateway) : impl_(std::make_unique<Impl>(gateway)) {}

HttpServer::~HttpServer() { stop(); }

int HttpServer::start(const std::string& host, int port) {
    Gateway& gw = impl_->gateway;
    auto plain = [&gw](const httplib::Request& req, httplib::Response& res) { write(res, gw.handle(to_api(req))); };
    impl_->server.Post(".*", plain);
    impl_->server.Put(".*", plain);
    impl_->server.Delete(".*", plain);
    impl_->server.Get(".*", [&gw](const httplib::Request& req, httplib::Response& res) {
        ApiRequest api = to_api(req);
        auto seg = split_path(api.path);
        bool stream = seg.size() == 2 && seg[0] == "live" && api.query.count("snapshot") == 0U;
        if (!stream) return write(res, gw.handle(api));
        std::string viewer;
        std::uint64_t from = api.last_event_id.value_or(0);
        std::size_t limit = 0;
        try {
            viewer = gw.live_viewer(api, seg[1]);
            if (auto it = api.query.find("from"); it != api.query.end()) from = to_u64(it->second, "from");
            if (auto it = api.query.find("limit"); it != api.query.end()) limit = to_u64(it->second, "limit");
        } catch (const Error& e) {
            return write(res, error_response(e));
        }
        std::string session = seg[1];
        auto sent = std::make_shared<std::size_t>(0);
        res.set_header("Cache-Control", "no-cache");
        res.set_chunked_content_provider(
            "text/event-stream", [&gw, viewer, session, from, limit, sent](std::size_t, httplib::DataSink& sink) mutable {
                while (true) {
                    if (!sink.is_writable()) return false;
                    LiveBatch b = gw.live_deltas(viewer, session, from, limit == 0 ? 0 : limit - *sent);
                    from = b.scanned_to;
                    if (!b.deltas.empty()) {
                        std::string chunk = format_sse(b.deltas);
                        if (!sink.write(chunk.data(), chunk.size())) return false;
                        *sent += b.deltas.size();
                        if (limit != 0 && *sent >= limit) {
                            sink.done();
                            return true;
                        }
                        return true;
                    }
                    if (gw.stopping()) {
                        sink.done();
                        return true;
                    }
                    std::uint64_t before = from;
                    if (gw.wait_beyond(before, std::chrono::seconds(15)) <= before) {
                        if (gw.stopping()) {
                            sink.done();
                            return true;
                        }
                        static const std::string keepalive = ": keepalive\n\n";
                        if (!sink.write(keepalive.data(), keepalive.size())) return false;
                        return true;
                    }
                }
            });
    });
    impl_->server.set_tcp_nodelay(true);
    int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
    if (bound <= 0) throw Error(ErrorCode::BadParams, "cannot listen on " + host + ":" + std::to_string(port));
    impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
    impl_->server.wait_until_ready();
    return bound;
}

void HttpServer::stop() {
    if (!impl_) return;
    impl_->gateway.shutdown();
    impl_->server.stop();
    if (impl_->thread.joinable()) impl_->thread.join();
}

void HttpServer::wait() {
    if (impl_->thread.joinable()) impl_->thread.join();
}

} // namespace flipdeck::gateway
