#include "flipdeck/simulate.hpp"

#include <algorithm>
#include <random>
#include <sstream>

#include <httplib.h>

#include "flipdeck/mcq_parser.hpp"
#include "flipdeck/text.hpp"

namespace flipdeck::sim {

namespace {

constexpr Timestamp kDay = 86400;
constexpr Timestamp kWeek = 7 * kDay;

const char* const kTopics[] = {"recursion", "hash tables", "sorting", "graphs", "dynamic programming", "pointers"};
const char* const kIdeas[] = {"base case", "collision", "stability", "traversal", "memoization", "aliasing"};

class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}
    std::uint64_t below(std::uint64_t n) { return gen_() % n; }
    bool chance(int per_mille) { return static_cast<int>(below(1000)) < per_mille; }

private:
    std::mt19937_64 gen_;
};

json call_ok(Transport& t, const std::string& method, const std::string& path, const json& body,
             const std::string& token) {
    gateway::ApiResponse r = t.call(method, path, body, token);
    if (r.status != 200 && r.status != 201)
        throw Error(ErrorCode::BadRequest, method + " " + path + " failed with " + std::to_string(r.status) + ": " + r.body);
    return r.json_body();
}

std::string quiz_text(const std::string& topic, const std::string& idea, int variant, char key) {
    std::ostringstream os;
    os << "Which statement about the " << idea << " in " << topic << " is correct? (variant " << variant << ")\n\n";
    const char* texts[] = {"It is only needed for large inputs", "It guarantees termination of the algorithm",
                           "It can be ignored when inputs are sorted", "It applies only to iterative code"};
    // Put the "correct" statement at `key`.
    std::vector<std::string> opts = {texts[0], texts[2], texts[3]};
    opts.insert(opts.begin() + (key - 'A'), texts[1]);
    for (int i = 0; i < 4; ++i) os << static_cast<char>('A' + i) << ") " << opts[static_cast<std::size_t>(i)] << "\n";
    os << "\n(Note: The correct answer is " << key << ") " << texts[1] << ")";
    return os.str();
}

std::string poll_text(const std::string& topic, int meeting) {
    return "Meeting " + std::to_string(meeting + 1) + ": how confident do you feel about " + topic +
           "?\n\nA) Very confident\nB) Somewhat confident\nC) Unsure\nD) Lost\n";
}

struct Student {
    std::string id;
    std::string token;
    double skill = 0.5;
};

} // namespace

gateway::ApiResponse InProcessTransport::call(const std::string& method, const std::string& path, const json& body,
                                              const std::string& token) {
    gateway::ApiRequest r;
    r.method = method;
    auto q = path.find('?');
    r.path = path.substr(0, q);
    if (q != std::string::npos) {
        std::string rest = path.substr(q + 1);
        std::size_t pos = 0;
        while (pos <= rest.size()) {
            auto amp = rest.find('&', pos);
            std::string kv = rest.substr(pos, amp == std::string::npos ? std::string::npos : amp - pos);
            auto eq = kv.find('=');
            if (!kv.empty()) r.query[kv.substr(0, eq)] = eq == std::string::npos ? "" : kv.substr(eq + 1);
            if (amp == std::string::npos) break;
            pos = amp + 1;
        }
    }
    r.body = body.is_null() ? std::string() : body.dump();
    if (!token.empty()) r.authorization = "Bearer " + token;
    return gw_.handle(r);
}

struct HttpTransport::Impl {
    Impl(const std::string& host, int port) : client(host, port) {
        client.set_read_timeout(30, 0);
        client.set_keep_alive(true);
        client.set_tcp_nodelay(true);
    }
    httplib::Client client;
};

HttpTransport::HttpTransport(std::string host, int port) : impl_(std::make_unique<Impl>(host, port)) {}
HttpTransport::~HttpTransport() = default;

gateway::ApiResponse HttpTransport::call(const std::string& method, const std::string& path, const json& body,
                                         const std::string& token) {
    httplib::Headers headers;
    if (!token.empty()) headers.emplace("Authorization", "Bearer " + token);
    std::string payload = body.is_null() ? std::string() : body.dump();
    httplib::Result res = method == "GET" ? impl_->client.Get(path, headers)
                                          : impl_->client.Post(path, headers, payload, "application/json");
    if (!res) throw Error(ErrorCode::StorageFailure, "HTTP " + method + " " + path + " failed: " + httplib::to_string(res.error()));
    std::string type = res->get_header_value("Content-Type");
    return {res->status, type, res->body};
}

Staff ensure_staff(Application& app, Timestamp at) {
    Staff s;
    const auto& actors = app.state().actors;
    auto get = [&](std::string_view id, Role role) {
        std::string key(id);
        if (auto it = actors.find(key); it != actors.end()) return it->second.token;
        return app.register_actor(key, role, std::nullopt, at);
    };
    s.instructor_token = get(kInstructorId, Role::instructor);
    s.assistant_token = get(kAssistantId, Role::assistant);
    return s;
}

std::unique_ptr<fip::ProviderPort> make_class_provider() {
    return std::make_unique<fip::FunctionProvider>(
        [](std::string_view prompt, std::span<const fip::Turn>) {
            std::string out;
            std::size_t points = 0;
            for (const auto& line : text::split_lines(prompt)) {
                std::string t = text::trim(line);
                if (t.rfind("- ", 0) != 0) continue;
                out += "- Discuss: " + t.substr(2) + "\n";
                if (++points == fip::kMaxTalkingPoints) break;
            }
            return points == 0 ? std::string(prompt) : out;
        },
        fip::ProviderIdentity{"scripted", "class-v1"});
}

SeedResult seed_fixture(Application& app, const json& fixture, const std::string& submitter, Timestamp at,
                        const std::optional<std::string>& course_override) {
    if (fixture.value("format", std::string()) != "flipdeck-fixture v1")
        throw Error(ErrorCode::BadRequest, "fixture format must be 'flipdeck-fixture v1'");
    SeedResult out;
    out.course = course_override.value_or(fixture.at("course").get<std::string>());
    for (const auto& row : fixture.at("rows")) {
        std::string author = row.at("author").get<std::string>();
        const auto& actors = app.state().actors;
        if (auto it = actors.find(author); it != actors.end()) {
            out.tokens[author] = it->second.token;
            if (it->second.courses.count(out.course) == 0U) app.enroll(author, out.course, at);
        } else {
            out.tokens[author] = app.register_actor(author, Role::student, out.course, at);
        }
        SubmissionInput in;
        in.author = author;
        in.prompts = {row.at("prompt").get<std::string>()};
        in.topic = row.value("topic", std::string());
        in.provider = {"fixture", row.value("model", std::string("gpt-3"))};
        QuestionKind kind = question_kind_from_string(row.at("kind").get<std::string>());
        if (row.contains("response") && row["response"].is_string()) {
            auto report = mcq::parse_mcq(row["response"].get<std::string>(), kind);
            if (!report.ok())
                throw Error(ErrorCode::InvalidQuestion, row.value("label", std::string("row")) + " did not parse: " +
                                                            std::string(mcq::to_string(*report.failure)));
            in.question = *report.question;
        } else {
            in.open_text = row.at("prompt").get<std::string>();
        }
        out.entries.push_back(app.submit(submitter, std::nullopt, out.course, in, at));
    }
    return out;
}

Report run(Transport& t, ManualClock* clock, const Staff& staff, const Options& opt) {
    if (opt.students < 1 || opt.sessions < 1) throw Error(ErrorCode::BadParams, "students and sessions must be positive");
    Rng rng(opt.seed);
    auto at = [&](Timestamp ts) {
        if (clock != nullptr) clock->set(ts);
    };
    const std::string& instr = staff.instructor_token;
    const std::string& ta = staff.assistant_token;
    const std::string& course = opt.course;
    Report report;
    report.course = course;

    at(opt.start);
    std::vector<Student> students;
    for (int i = 0; i < opt.students; ++i) {
        std::string id = course + "-s" + std::to_string(i + 1);
        json r = call_ok(t, "POST", "/actors", {{"id", id}, {"role", "student"}, {"course", course}}, instr);
        students.push_back({id, r.at("token").get<std::string>(), 0.3 + 0.65 * static_cast<double>(rng.below(1000)) / 1000.0});
    }

    auto vet_queue = [&](Timestamp ts) {
        at(ts);
        json queue = call_ok(t, "GET", "/vetting/queue?course=" + course, nullptr, ta);
        for (const auto& e : queue) {
            std::string id = e.at("id").get<std::string>();
            std::string regenerated;
            if (e.at("question").at("type") == "mcq")
                regenerated = mcq::render_mcq(mcq_from_json(e["question"]["mcq"]));
            else
                regenerated = e["question"].value("text", std::string());
            bool drift = rng.chance(150);
            if (drift) regenerated = "An unrelated question about something else entirely";
            json check = call_ok(t, "POST", "/vetting/" + id + "/reproduce",
                                 {{"regenerated_text", regenerated}, {"provider", {{"provider", "scripted"}, {"model", "ta-v1"}}}},
                                 ta);
            json verdict = check.at("match").get<bool>()
                               ? json{{"decision", "Approve"}, {"difficulty", 1 + static_cast<int>(rng.below(10))}}
                               : json{{"decision", "Reject"}};
            call_ok(t, "POST", "/vetting/" + id + "/verdict", verdict, ta);
            if (check["match"].get<bool>())
                ++report.approved;
            else
                ++report.rejected;
        }
    };

    for (int k = 0; k < opt.sessions; ++k) {
        Timestamp base = opt.start + kDay + static_cast<Timestamp>(k) * kWeek;
        std::string topic = kTopics[static_cast<std::size_t>(k) % std::size(kTopics)];
        std::string idea = kIdeas[static_cast<std::size_t>(k) % std::size(kIdeas)];

        // Poll, prompt, quiz.
        at(base);
        std::string sid = call_ok(t, "POST", "/sessions",
                                  {{"kind", "PollPromptQuiz"}, {"course", course}, {"idempotency_key", "ppq-" + std::to_string(k)}},
                                  instr)
                              .at("id")
                              .get<std::string>();
        std::string poll = call_ok(t, "POST", "/sessions/" + sid + "/polls", {{"text", poll_text(topic, k)}, {"kind", "poll"}}, instr)
                               .at("instance")
                               .get<std::string>();
        for (std::size_t i = 0; i < students.size(); ++i) {
            if (!rng.chance(900)) continue;
            at(base + 10 + static_cast<Timestamp>(i));
            std::string label(1, static_cast<char>('A' + rng.below(4)));
            call_ok(t, "POST", "/instances/" + poll + "/votes", {{"labels", {label}}}, students[i].token);
            ++report.votes;
        }
        at(base + 120);
        call_ok(t, "POST", "/instances/" + poll + "/close", nullptr, instr);
        at(base + 130);
        call_ok(t, "POST", "/sessions/" + sid + "/phase", {{"target", "PromptPhase"}}, instr);

        for (std::size_t i = 0; i < students.size(); ++i) {
            if (!rng.chance(300)) continue;
            Timestamp ts = base + 200 + static_cast<Timestamp>(i);
            at(ts);
            char key = static_cast<char>('A' + rng.below(4));
            fip::QuestionGoal goal;
            goal.topic = topic;
            goal.focus = "the " + idea;
            goal.format = fip::Format::clicker_quiz;
            fip::ScriptedProvider model({std::string("Which part of " + topic + " do you find hardest?"),
                                         quiz_text(topic, idea, static_cast<int>(i), key)},
                                        false, {"scripted", "student-v1"});
            fip::Policy policy;
            policy.start_at = ts;
            fip::FipTranscript tr = fip::run_fip_session(goal, model, policy);
            if (!tr.question) continue;
            json body = {{"question", *tr.question},
                         {"prompts", {tr.turns.front().text}},
                         {"transcript", tr},
                         {"summary", "Worked through " + topic + " with the model asking the questions."},
                         {"topic", topic},
                         {"provider", {{"provider", tr.provider.provider}, {"model", tr.provider.model}}}};
            call_ok(t, "POST", "/sessions/" + sid + "/submissions", body, students[i].token);
        }
        vet_queue(base + 600);

        at(base + 900);
        json rec = call_ok(t, "GET", "/pacing/" + course + "/recommendation", nullptr, instr);
        json quiz_body;
        std::optional<char> key;
        double difficulty = 5.0;
        for (const auto& id : rec.at("selection")) {
            json e = call_ok(t, "GET", "/bank/" + id.get<std::string>(), nullptr, instr);
            if (e.at("kind") != "clicker_quiz") continue;
            McqQuestion q = mcq_from_json(e.at("question").at("mcq"));
            key = *q.answer_key().begin();
            difficulty = e.at("difficulty").get<double>();
            quiz_body = {{"bank_entry", e["id"]}};
            break;
        }
        if (!key) {
            key = 'B';
            quiz_body = {{"text", quiz_text(topic, idea, -1, 'B')}};
        }
        std::string quiz = call_ok(t, "POST", "/sessions/" + sid + "/quizzes", quiz_body, instr).at("instance").get<std::string>();
        for (std::size_t i = 0; i < students.size(); ++i) {
            if (!rng.chance(950)) continue;
            at(base + 910 + static_cast<Timestamp>(i));
            double p = std::clamp(students[i].skill - (difficulty - 5.0) * 0.05, 0.05, 0.95);
            char label = *key;
            if (!rng.chance(static_cast<int>(p * 1000))) label = static_cast<char>('A' + (*key - 'A' + 1 + rng.below(3)) % 4);
            call_ok(t, "POST", "/instances/" + quiz + "/votes", {{"labels", {std::string(1, label)}}}, students[i].token);
            ++report.votes;
        }
        at(base + 1190);
        call_ok(t, "POST", "/instances/" + quiz + "/close", nullptr, instr);
        at(base + 1200);
        call_ok(t, "POST", "/sessions/" + sid + "/phase", {{"target", "Discussed"}}, instr);

        // Quiz, prompt, discuss.
        Timestamp qbase = base + 2 * 3600;
        at(qbase);
        std::string qid = call_ok(t, "POST", "/sessions",
                                  {{"kind", "QuizPromptDiscuss"}, {"course", course}, {"idempotency_key", "qpd-" + std::to_string(k)}},
                                  instr)
                              .at("id")
                              .get<std::string>();
        call_ok(t, "POST", "/sessions/" + qid + "/jitt",
                {{"prompt", "Before next class: explain the role of the " + idea + " in " + topic + "."}}, instr);
        for (std::size_t i = 0; i < students.size(); ++i) {
            if (!rng.chance(800)) continue;
            at(qbase + 60 + static_cast<Timestamp>(i));
            call_ok(t, "POST", "/sessions/" + qid + "/difficulty", {{"choice", rng.chance(500) ? "elevated" : "moderate"}},
                    students[i].token);
        }
        std::vector<std::pair<Timestamp, std::size_t>> answers;
        for (std::size_t i = 0; i < students.size(); ++i) {
            if (!rng.chance(850)) continue;
            Timestamp when = qbase + 3600 + static_cast<Timestamp>(rng.below(5)) * kDay + static_cast<Timestamp>(rng.below(kDay - 7200));
            answers.emplace_back(when, i);
        }
        std::sort(answers.begin(), answers.end());
        for (const auto& [when, i] : answers) {
            at(when);
            json body = {{"open_text", students[i].id + " thinks the " + idea + " in " + topic +
                                           (rng.chance(500) ? " prevents runaway work." : " is mostly bookkeeping.")},
                         {"prompts", {"Please ask me questions to help me understand " + topic + "."}},
                         {"topic", topic},
                         {"provider", {{"provider", "scripted"}, {"model", "student-v1"}}}};
            call_ok(t, "POST", "/sessions/" + qid + "/submissions", body, students[i].token);
        }
        Timestamp close = qbase + 5 * kDay + 3600;
        at(close);
        call_ok(t, "POST", "/sessions/" + qid + "/phase", {{"target", "PromptPhase"}}, instr);
        if (!answers.empty()) {
            at(close + 60);
            call_ok(t, "POST", "/sessions/" + qid + "/consolidate", nullptr, instr);
            at(close + 120);
            call_ok(t, "POST", "/sessions/" + qid + "/phase", {{"target", "Discussed"}}, instr);
        }
        vet_queue(close + 600);
    }

    at(opt.start + static_cast<Timestamp>(opt.sessions + 1) * kWeek);
    json pacing = call_ok(t, "GET", "/pacing/" + course, nullptr, instr);
    report.trajectory = pacing.at("series");
    report.pacing = pacing.at("state");
    report.recommendation = call_ok(t, "GET", "/pacing/" + course + "/recommendation", nullptr, instr);
    for (const char* what : {"histogram", "unanswered", "difficulty", "leaderboard", "comprehension"}) {
        gateway::ApiResponse r = t.call("GET", "/analytics/" + course + "/" + what, nullptr, instr);
        if (r.status != 200) throw Error(ErrorCode::BadRequest, std::string("export ") + what + " failed: " + r.body);
        report.exports[what] = r.body;
    }
    report.bank_entries = call_ok(t, "GET", "/bank?course=" + course, nullptr, instr).size();
    return report;
}

json Report::to_json() const {
    return {{"course", course},
            {"trajectory", trajectory},
            {"pacing", pacing},
            {"recommendation", recommendation},
            {"exports", exports},
            {"bank_entries", bank_entries},
            {"approved", approved},
            {"rejected", rejected},
            {"votes", votes}};
}

std::string Report::text() const {
    std::ostringstream os;
    os << "course " << course << ": " << bank_entries << " bank entries (" << approved << " approved, " << rejected
       << " rejected), " << votes << " votes\n\n";
    os << "pacing trajectory\n" << exports.at("comprehension") << "\n";
    os << "recommendation: " << recommendation.at("item_count") << " items in band "
       << recommendation.at("band").at("lo") << "-" << recommendation.at("band").at("hi") << "\n";
    for (const char* what : {"histogram", "unanswered", "difficulty", "leaderboard"})
        os << "\n" << what << "\n" << exports.at(what);
    return os.str();
}

} // namespace flipdeck::sim
