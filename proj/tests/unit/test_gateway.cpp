#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "../support/generators.hpp"
#include "flipdeck/app.hpp"
#include "flipdeck/event_store.hpp"
#include "flipdeck/gateway.hpp"
#include "flipdeck/mcq_parser.hpp"
#include "flipdeck/simulate.hpp"

using namespace flipdeck;
using namespace flipdeck::gateway;

namespace {

const char* kQuizText =
    "What is the output of the Boolean expression: NOT (A AND B)?\nA) A AND B\nB) NOT A OR NOT B\nC) A OR B\n"
    "D) None of the above\n(Note: The correct answer is B) NOT A OR NOT B)";

struct Env {
    Application app{std::make_unique<events::MemoryStorage>()};
    ManualClock clock{1000};
    std::unique_ptr<fip::ProviderPort> provider = sim::make_class_provider();
    Gateway gw{app, clock, provider.get()};
    std::string prof, ta, s1, s2;

    Env() {
        auto staff = sim::ensure_staff(app, 1000);
        prof = staff.instructor_token;
        ta = staff.assistant_token;
        s1 = create_student("s1");
        s2 = create_student("s2");
    }

    std::string create_student(const std::string& id) {
        auto r = call("POST", "/actors", {{"id", id}, {"role", "student"}, {"course", "C"}}, prof);
        REQUIRE(r.status == 201);
        return r.json_body()["token"].get<std::string>();
    }

    ApiResponse call(const std::string& method, const std::string& path, const json& body = nullptr,
                     const std::string& token = {}, std::map<std::string, std::string> query = {}) {
        ApiRequest r;
        r.method = method;
        r.path = path;
        r.query = std::move(query);
        if (!body.is_null()) r.body = body.dump();
        if (!token.empty()) r.authorization = "Bearer " + token;
        return gw.handle(r);
    }

    std::string error_code(const ApiResponse& r) { return r.json_body()["error"]["code"].get<std::string>(); }

    // Poll-prompt-quiz session with a closed poll, returns {session, poll}.
    std::pair<std::string, std::string> ppq_with_poll() {
        auto s = call("POST", "/sessions", {{"kind", "PollPromptQuiz"}, {"course", "C"}}, prof);
        REQUIRE(s.status == 201);
        std::string sid = s.json_body()["id"];
        auto p = call("POST", "/sessions/" + sid + "/polls", {{"text", kQuizText}}, prof);
        REQUIRE(p.status == 201);
        return {sid, p.json_body()["instance"].get<std::string>()};
    }
};

} // namespace

TEST_SUITE("gateway") {

TEST_CASE("status mapping") {
    CHECK(http_status(ErrorCode::PhaseViolation) == 409);
    CHECK(http_status(ErrorCode::AlreadyVoted) == 409);
    CHECK(http_status(ErrorCode::AlreadyDecided) == 409);
    CHECK(http_status(ErrorCode::DeadlineExpired) == 410);
    CHECK(http_status(ErrorCode::VoteRequired) == 403);
    CHECK(http_status(ErrorCode::Unauthorized) == 403);
    CHECK(http_status(ErrorCode::Unauthenticated) == 401);
    CHECK(http_status(ErrorCode::NotFound) == 404);
    CHECK(http_status(ErrorCode::BadRequest) == 400);
    CHECK(http_status(ErrorCode::InvalidQuestion) == 422);
    CHECK(http_status(ErrorCode::ProviderError) == 502);
    CHECK(http_status(ErrorCode::StorageFailure) == 503);
    auto r = error_response(Error(ErrorCode::AlreadyVoted, "twice"));
    CHECK(r.status == 409);
    CHECK(r.json_body()["error"]["code"] == "AlreadyVoted");
    CHECK(r.json_body()["error"]["message"] == "twice");
}

TEST_CASE("authentication") {
    Env env;
    CHECK(env.call("GET", "/health").status == 200);
    auto r = env.call("GET", "/me");
    CHECK(r.status == 401);
    CHECK(env.error_code(r) == "Unauthenticated");
    CHECK(env.call("GET", "/me", nullptr, "fd_wrong").status == 401);
    auto me = env.call("GET", "/me", nullptr, env.s1);
    CHECK(me.status == 200);
    CHECK(me.json_body()["role"] == "student");
    CHECK(env.call("POST", "/actors", {{"id", "x"}}, env.s1).status == 403);
    CHECK(env.call("GET", "/nowhere", nullptr, env.s1).status == 404);
    CHECK(env.call("POST", "/sessions", json("not an object"), env.prof).status == 400);
}

TEST_CASE("poll, vote gating, quiz deadline") {
    Env env;
    auto [sid, poll] = env.ppq_with_poll();
    auto again = env.call("POST", "/sessions", {{"kind", "PollPromptQuiz"}, {"course", "C"}, {"idempotency_key", "k"}}, env.prof);
    CHECK(again.status == 201);
    auto repeat = env.call("POST", "/sessions", {{"kind", "PollPromptQuiz"}, {"course", "C"}, {"idempotency_key", "k"}}, env.prof);
    CHECK(repeat.status == 200);
    CHECK(repeat.json_body()["id"] == again.json_body()["id"]);

    auto denied = env.call("GET", "/instances/" + poll + "/tally", nullptr, env.s1);
    CHECK(denied.status == 403);
    CHECK(env.error_code(denied) == "VoteRequired");
    auto v = env.call("POST", "/instances/" + poll + "/votes", {{"labels", {"b"}}}, env.s1);
    CHECK(v.status == 201);
    CHECK(v.json_body()["tally"]["counts"]["B"] == 1);
    auto twice = env.call("POST", "/instances/" + poll + "/votes", {{"label", "A"}}, env.s1);
    CHECK(twice.status == 409);
    CHECK(env.error_code(twice) == "AlreadyVoted");
    CHECK(env.error_code(env.call("POST", "/instances/" + poll + "/votes", {{"label", "Z"}}, env.s2)) == "UnknownLabel");
    CHECK(env.error_code(env.call("POST", "/instances/" + poll + "/votes", {{"labels", {"A", "B"}}}, env.s2)) ==
          "InvalidVote");
    CHECK(env.call("POST", "/instances/" + poll + "/votes", {{"label", "A"}}, env.prof).status == 403);
    CHECK(env.call("GET", "/instances/" + poll + "/tally", nullptr, env.prof).status == 200);

    CHECK(env.call("POST", "/instances/" + poll + "/close", nullptr, env.s1).status == 403);
    CHECK(env.call("POST", "/instances/" + poll + "/close", nullptr, env.prof).status == 200);
    CHECK(env.call("POST", "/instances/" + poll + "/votes", {{"label", "A"}}, env.s2).status == 410);
    CHECK(env.call("GET", "/instances/" + poll + "/tally", nullptr, env.s2).status == 200);

    auto quiz = env.call("POST", "/sessions/" + sid + "/quizzes", {{"text", kQuizText}}, env.prof);
    REQUIRE(quiz.status == 201);
    CHECK(quiz.json_body()["deadline"] == 1300);
    std::string qi = quiz.json_body()["instance"];
    env.clock.set(1300);
    CHECK(env.call("POST", "/instances/" + qi + "/votes", {{"label", "B"}}, env.s1).status == 201);
    env.clock.set(1301);
    auto late = env.call("POST", "/instances/" + qi + "/votes", {{"label", "B"}}, env.s2);
    CHECK(late.status == 410);
    CHECK(env.error_code(late) == "DeadlineExpired");
    auto closed = env.call("POST", "/instances/" + qi + "/close", nullptr, env.prof);
    CHECK(closed.json_body()["accuracy"] == 1.0);
    auto pace = env.call("GET", "/pacing/C", nullptr, env.prof);
    CHECK(pace.json_body()["state"]["pace"] == 2.0);
    auto phase = env.call("POST", "/sessions/" + sid + "/phase", {{"target", "PollOpen"}}, env.prof);
    CHECK(phase.status == 409);
    CHECK(env.call("POST", "/sessions/" + sid + "/phase", {{"target", "Discussed"}}, env.prof).status == 200);
}

TEST_CASE("submission, vetting and bank visibility") {
    Env env;
    auto [sid, poll] = env.ppq_with_poll();
    env.call("POST", "/instances/" + poll + "/close", nullptr, env.prof);
    REQUIRE(env.call("POST", "/sessions/" + sid + "/phase", {{"target", "PromptPhase"}}, env.prof).status == 200);

    auto bad = env.call("POST", "/sessions/" + sid + "/submissions", {{"text", kQuizText}, {"prompts", json::array()}}, env.s1);
    CHECK(bad.status == 422);
    CHECK(env.error_code(bad) == "InvalidSubmission");
    auto sub = env.call("POST", "/sessions/" + sid + "/submissions",
                        {{"text", kQuizText}, {"prompts", {"Create a clicker quiz"}}, {"topic", "logic"}}, env.s1);
    REQUIRE(sub.status == 201);
    std::string id = sub.json_body()["id"];

    CHECK(env.call("GET", "/vetting/queue", nullptr, env.s1).status == 403);
    auto queue = env.call("GET", "/vetting/queue", nullptr, env.ta, {{"course", "C"}});
    REQUIRE(queue.json_body().size() == 1);
    auto rep = env.call("POST", "/vetting/" + id + "/reproduce", {{"regenerated_text", kQuizText}}, env.ta);
    CHECK(rep.json_body()["result"] == "Match");
    CHECK(env.call("POST", "/vetting/" + id + "/verdict", {{"decision", "Approve"}, {"difficulty", 5}}, env.s1).status == 403);
    CHECK(env.call("POST", "/vetting/" + id + "/verdict", {{"decision", "Approve"}, {"difficulty", 5}}, env.ta).status == 200);
    auto twice = env.call("POST", "/vetting/" + id + "/verdict", {{"decision", "Reject"}}, env.ta);
    CHECK(twice.status == 409);
    CHECK(env.error_code(twice) == "AlreadyDecided");

    auto student_view = env.call("GET", "/bank/" + id, nullptr, env.s2);
    CHECK(student_view.status == 200);
    CHECK(student_view.body.find("answer_key") == std::string::npos);
    auto staff_view = env.call("GET", "/bank/" + id, nullptr, env.prof);
    CHECK(staff_view.body.find("answer_key") != std::string::npos);
    auto list = env.call("GET", "/bank", nullptr, env.prof, {{"band", "elevated"}});
    CHECK(list.json_body().empty());
    list = env.call("GET", "/bank", nullptr, env.prof, {{"band", "1-5"}});
    CHECK(list.json_body().size() == 1);

    auto csv = env.call("GET", "/analytics/C/leaderboard", nullptr, env.prof);
    CHECK(csv.content_type == "text/csv");
    CHECK(csv.body.rfind("rank,actor,score\n1,s1,1\n", 0) == 0);
    CHECK(env.call("GET", "/analytics/C/leaderboard", nullptr, env.s1).status == 403);
    CHECK(env.call("GET", "/analytics/C/bogus", nullptr, env.prof).status == 404);
    auto rec = env.call("GET", "/pacing/C/recommendation", nullptr, env.prof);
    CHECK(rec.status == 200);
    CHECK(rec.json_body()["item_count"] == 1);
}

TEST_CASE("fip and cue routes") {
    Env env;
    auto cues = env.call("GET", "/cues", nullptr, env.s1);
    CHECK(cues.json_body().size() == 4);
    auto filled = env.call("POST", "/cues/1", {{"slots", {"GCD", "XOR"}}}, env.s1);
    CHECK(filled.json_body()["text"] == "How are GCD and XOR alike?");
    CHECK(env.error_code(env.call("POST", "/cues/1", {{"slots", {"GCD"}}}, env.s1)) == "ArityMismatch");
    auto prompt = env.call("POST", "/fip/prompt",
                           {{"goal", {{"topic", "the fundamental theorem of arithmetic"},
                                      {"focus", "the greatest common denominator"},
                                      {"format", "clicker_quiz"},
                                      {"option_count", 4}}}},
                           env.s1);
    CHECK(prompt.status == 200);
    CHECK(prompt.json_body()["prompt"].get<std::string>().find("create a clicker quiz with four choices") !=
          std::string::npos);
}

TEST_CASE("chat webhook") {
    Env env;
    auto [sid, poll] = env.ppq_with_poll();
    auto send = [&](json msg) {
        msg["platform"] = "tg";
        msg["chat_id"] = "c1";
        msg["user_ref"] = "u1";
        auto r = env.call("POST", "/chat/inbound", msg);
        REQUIRE(r.status == 200);
        return r.json_body();
    };
    auto show = send({{"callback_data", "show:" + poll}});
    REQUIRE(show.size() == 1);
    CHECK(show[0]["buttons"].size() == 4);
    CHECK(show[0]["buttons"][1]["callback_data"] == "vote:" + poll + ":B");

    auto vote = send({{"callback_data", "vote:" + poll + ":B"}});
    REQUIRE(vote.size() == 2);
    CHECK(vote[0]["text"] == "Vote recorded: B.");
    CHECK(vote[0]["chat_id"] == "c1");
    CHECK(env.app.state().actors.at("tg:u1").courses.count("C") == 1);
    CHECK(send({{"callback_data", "vote:" + poll + ":A"}})[0]["text"] == std::string(kChatAlreadyVoted));
    CHECK(send({{"callback_data", "vote:" + poll + ":Q"}})[0]["text"] == std::string(kChatNotUnderstood));
    CHECK(send({{"callback_data", "gibberish"}})[0]["text"] == std::string(kChatNotUnderstood));
    CHECK(send({{"callback_data", "vote:I999:A"}})[0]["text"] == std::string(kChatNotUnderstood));

    CHECK(send({{"text", "hello"}})[0]["text"] == "There is no prompt phase open right now.");
    env.call("POST", "/instances/" + poll + "/close", nullptr, env.prof);
    env.call("POST", "/sessions/" + sid + "/phase", {{"target", "PromptPhase"}}, env.prof);
    send({{"text", "prompt: create a clicker quiz about De Morgan"}});
    auto added = send({{"text", kQuizText}});
    CHECK(added[0]["buttons"][0]["callback_data"] == "submit:" + sid);
    auto done = send({{"callback_data", "submit:" + sid}});
    CHECK(done[0]["text"].get<std::string>().rfind("Thanks! Submission Q1", 0) == 0);
    CHECK(env.app.state().bank.entry("Q1").provenance.author.id() == "tg:u1");

    ApiRequest both;
    both.method = "POST";
    both.path = "/chat/inbound";
    both.body = json{{"platform", "tg"}, {"chat_id", "c"}, {"user_ref", "u"}, {"text", "x"}, {"callback_data", "y"}}.dump();
    CHECK(env.gw.handle(both).status == 400);
}

TEST_CASE("live deltas: one per vote, counts gated for students") {
    Env env;
    auto [sid, poll] = env.ppq_with_poll();
    auto start = env.app.store().last_seq();
    env.call("POST", "/instances/" + poll + "/votes", {{"label", "A"}}, env.s1);
    env.call("POST", "/instances/" + poll + "/votes", {{"label", "B"}}, env.create_student("s3"));
    auto prof_view = env.gw.live_deltas("instructor", sid, 0, 0);
    std::size_t tallies = 0;
    for (const auto& d : prof_view.deltas)
        if (d["type"] == "tally") {
            ++tallies;
            CHECK(d.contains("counts"));
        }
    CHECK(tallies == 2);
    CHECK(prof_view.deltas.front()["type"] == "opened");

    auto student_view = env.gw.live_deltas("s2", sid, start, 0);
    REQUIRE(student_view.deltas.size() == 2);
    CHECK_FALSE(student_view.deltas[0].contains("counts"));
    CHECK(student_view.deltas[1]["total"] == 2);
    auto voter_view = env.gw.live_deltas("s1", sid, start, 0);
    CHECK(voter_view.deltas[1]["counts"]["B"] == 1);

    auto limited = env.gw.live_deltas("instructor", sid, 0, 1);
    REQUIRE(limited.deltas.size() == 1);
    auto rest = env.gw.live_deltas("instructor", sid, limited.scanned_to, 0);
    CHECK(rest.deltas.size() + 1 == prof_view.deltas.size());

    std::string sse = format_sse(student_view.deltas);
    CHECK(sse.rfind("id: " + std::to_string(student_view.deltas[0]["seq"].get<std::uint64_t>()) + "\nevent: tally\ndata: {", 0) == 0);
    auto snap = env.call("GET", "/live/" + sid, nullptr, env.s2, {{"snapshot", "1"}});
    CHECK(snap.content_type == "text/event-stream");
    CHECK(snap.body.find("event: opened") != std::string::npos);
}

TEST_CASE("loopback HTTP with a streaming live channel") {
    Env env;
    auto [sid, poll] = env.ppq_with_poll();
    HttpServer server(env.gw);
    int port = server.start("127.0.0.1", 0);
    REQUIRE(port > 0);

    httplib::Client cli("127.0.0.1", port);
    auto health = cli.Get("/health");
    REQUIRE(health);
    CHECK(health->status == 200);
    auto me = cli.Get("/me", {{"Authorization", "Bearer " + env.s1}});
    REQUIRE(me);
    CHECK(json::parse(me->body)["id"] == "s1");
    auto unauth = cli.Get("/me");
    REQUIRE(unauth);
    CHECK(unauth->status == 401);

    std::string received;
    std::thread reader([&] {
        httplib::Client sse("127.0.0.1", port);
        sse.set_read_timeout(10, 0);
        sse.Get("/live/" + sid + "?limit=3", {{"Authorization", "Bearer " + env.prof}},
                [&](const char* data, std::size_t len) {
                    received.append(data, len);
                    return true;
                });
    });
    std::this_thread::sleep_for(std::chrono::milliseconds(100));
    auto vote = cli.Post("/instances/" + poll + "/votes", {{"Authorization", "Bearer " + env.s1}},
                         json{{"label", "B"}}.dump(), "application/json");
    REQUIRE(vote);
    CHECK(vote->status == 201);
    cli.Post("/instances/" + poll + "/close", {{"Authorization", "Bearer " + env.prof}}, "", "application/json");
    reader.join();
    server.stop();
    CHECK(received.find("event: opened") != std::string::npos);
    CHECK(received.find("event: tally") != std::string::npos);
    CHECK(received.find("event: closed") != std::string::npos);
}

}
