// One line per acceptance criterion: PASS/FAIL, elapsed time, budget.
// Exit status is nonzero when any criterion fails.

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "../support/generators.hpp"
#include "../support/oracles.hpp"
#include "../support/routine_props.hpp"
#include "flipdeck/analytics.hpp"
#include "flipdeck/app.hpp"
#include "flipdeck/bank.hpp"
#include "flipdeck/event_store.hpp"
#include "flipdeck/fip.hpp"
#include "flipdeck/gateway.hpp"
#include "flipdeck/mcq_parser.hpp"
#include "flipdeck/pacing.hpp"
#include "flipdeck/similarity.hpp"
#include "flipdeck/simulate.hpp"

using namespace flipdeck;

namespace {

struct Check {
    std::vector<std::string> failures;
    std::string note;

    void expect(bool ok, const std::string& what) {
        if (!ok && failures.size() < 5) failures.push_back(what);
        if (!ok) ++failed;
    }
    std::size_t failed = 0;
};

struct Criterion {
    std::string name;
    double budget_s;  // 0: no runtime bound
    std::function<void(Check&)> body;
};

bool run(const Criterion& c) {
    Check check;
    auto t0 = std::chrono::steady_clock::now();
    try {
        c.body(check);
    } catch (const std::exception& e) {
        check.failures.push_back(std::string("exception: ") + e.what());
        ++check.failed;
    }
    double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    bool in_time = c.budget_s <= 0 || secs < c.budget_s;
    bool ok = check.failed == 0 && in_time;
    std::string budget = c.budget_s > 0 ? ", limit " + std::to_string(static_cast<int>(c.budget_s)) + " s" : "";
    std::printf("%s  %-22s %8.3f s%s%s%s\n", ok ? "PASS" : "FAIL", c.name.c_str(), secs, budget.c_str(),
                check.note.empty() ? "" : "  ", check.note.c_str());
    if (!in_time) std::printf("      over the time limit\n");
    if (check.failed > 0) std::printf("      %zu failed checks\n", check.failed);
    for (const auto& f : check.failures) std::printf("      %s\n", f.c_str());
    std::fflush(stdout);
    return ok;
}

std::string join(const LabelSet& s) {
    return std::string(s.begin(), s.end());
}

// --- parser ---------------------------------------------------------------

void parser_fixtures(Check& c) {
    std::ifstream in(FLIPDECK_FIXTURE_DIR "/table1.json");
    c.expect(in.good(), "fixture file missing");
    if (!in) return;
    json fx = json::parse(in);

    struct Want {
        const char* label;
        const char* stem;
        std::size_t options;
        LabelSet key;
    };
    const Want wants[] = {
        {"Clicker Poll 1", "What is the output of the Boolean expression: NOT (A AND B)?", 2, {'B'}},
        {"Clicker Poll 2", "Which of the following Boolean expressions are equivalent to A OR (NOT B)?", 4, {'B', 'C'}},
        {"Clicker Quiz 1", "What is the output of the Boolean expression: NOT (A AND B)?", 4, {'B'}},
        {"Clicker Quiz 2",
         "Which expression represents De Morgan's Theorem for three Boolean variables (A, B, and C)?", 4, {'B'}},
    };
    std::size_t rows = 0;
    for (const auto& w : wants) {
        const json* row = nullptr;
        for (const auto& r : fx["rows"])
            if (r["label"] == w.label) row = &r;
        c.expect(row != nullptr, std::string("missing row ") + w.label);
        if (row == nullptr) continue;
        auto r = mcq::parse_mcq((*row)["response"].get<std::string>(),
                                question_kind_from_string((*row)["kind"].get<std::string>()));
        c.expect(r.ok(), std::string(w.label) + " does not parse");
        if (!r.ok()) continue;
        const auto& q = *r.question;
        c.expect(q.stem() == w.stem, std::string(w.label) + " stem: " + q.stem());
        c.expect(q.options().size() == w.options, std::string(w.label) + " option count");
        c.expect(q.answer_key() == w.key, std::string(w.label) + " key " + join(q.answer_key()));
        auto again = mcq::parse_mcq(mcq::render_mcq(q), q.kind());
        c.expect(again.ok() && structurally_equal(*again.question, q), std::string(w.label) + " round trip");
        ++rows;
    }

    gen::Rng rng(20240601);
    std::size_t trips = 0;
    for (int i = 0; i < 1000; ++i) {
        auto q = gen::question(rng);
        std::string text = mcq::render_mcq(q);
        auto r = mcq::parse_mcq(text, q.kind());
        bool ok = r.ok() && structurally_equal(*r.question, q) && mcq::render_mcq(*r.question) == text;
        c.expect(ok, "round trip failed on:\n" + text);
        trips += ok;
    }
    c.note = std::to_string(rows) + "/4 fixture rows, " + std::to_string(trips) + "/1000 round trips";
}

// --- routine --------------------------------------------------------------

void routine_properties(Check& c) {
    std::size_t sequences = 0, commands = 0, errors = 0;
    for (std::uint64_t seed = 1; sequences < 10000; ++seed) {
        auto o = props::run_routine_properties(seed * 7919, 1000);
        sequences += o.sequences;
        commands += o.commands;
        errors += o.errors_expected;
        c.expect(o.violations == 0, "seed " + std::to_string(seed) + ": " + (o.messages.empty() ? "" : o.messages.front()));
    }
    c.note = std::to_string(sequences) + " sequences, " + std::to_string(commands) + " commands, " +
             std::to_string(errors) + " expected errors";
}

// --- replay ---------------------------------------------------------------

struct SimRun {
    std::string log;
    bool replay_equal = false;
};

SimRun simulate_class(std::uint64_t seed, int students, int sessions) {
    Application app(std::make_unique<events::MemoryStorage>());
    sim::Options opt;
    opt.students = students;
    opt.sessions = sessions;
    opt.seed = seed;
    ManualClock clock(opt.start);
    auto staff = sim::ensure_staff(app, opt.start);
    auto provider = sim::make_class_provider();
    gateway::Gateway gw(app, clock, provider.get());
    sim::InProcessTransport transport(gw);
    sim::run(transport, &clock, staff, opt);
    SimRun out;
    out.log = app.store().bytes();
    out.replay_equal = rebuild_from_bytes(out.log).bytes() == app.state().bytes();
    return out;
}

void replay_determinism(Check& c) {
    std::size_t equal_replays = 0, equal_logs = 0;
    for (std::uint64_t seed = 1; seed <= 100; ++seed) {
        int students = 5 + static_cast<int>(seed % 26);
        int sessions = 1 + static_cast<int>(seed % 3);
        auto a = simulate_class(seed, students, sessions);
        auto b = simulate_class(seed, students, sessions);
        c.expect(a.replay_equal, "seed " + std::to_string(seed) + ": rebuilt state differs from live state");
        c.expect(a.log == b.log, "seed " + std::to_string(seed) + ": log bytes differ between equal seeds");
        equal_replays += a.replay_equal;
        equal_logs += a.log == b.log;
    }
    c.note = std::to_string(equal_replays) + "/100 rebuilds equal, " + std::to_string(equal_logs) +
             "/100 seeds byte-identical";
}

// --- pacing ---------------------------------------------------------------

void pacing_oracle(Check& c) {
    using namespace pacing;
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    std::size_t steps = 0;
    for (int i = 0; i < 1000; ++i) {
        Params p;
        oracle::PaceParams op;
        if (i % 2) {
            p.alpha = op.alpha = 0.25 + u(rng) * 2;
            p.beta = op.beta = 0.1 + u(rng) * 0.8;
            p.lambda = op.lambda = 0.05 + u(rng) * 0.95;
        }
        std::vector<double> acc(1 + rng() % 50);
        for (auto& a : acc) {
            int r = static_cast<int>(rng() % 10);
            a = r == 0 ? 0.7 : r == 1 ? 0.5 : u(rng);
        }
        auto ref = oracle::pace_trajectory(op, acc);
        State s = init_pacing(p);
        for (std::size_t k = 0; k < acc.size(); ++k, ++steps) {
            s = observe_quiz_outcome(s, acc[k]);
            bool same = s.pace == ref[k].pace && s.comprehension == ref[k].comprehension &&
                        s.ssthresh == ref[k].ssthresh && static_cast<int>(s.mode == Mode::Steady) == ref[k].mode;
            c.expect(same, "sequence " + std::to_string(i) + " diverges at step " + std::to_string(k));
        }
    }

    for (double p0 : {1.0, 2.5, 9.0, 17.25}) {
        for (int k = 0; k <= 20; ++k) {
            State s = init_pacing();
            s.mode = Mode::Steady;
            s.pace = p0;
            for (int i = 0; i < k; ++i) s = observe_quiz_outcome(s, 0.95);
            c.expect(s.pace == p0 + k * 1.0, "sawtooth from " + std::to_string(p0));
        }
    }

    State s = init_pacing();
    std::vector<double> trace = {s.pace};
    for (int i = 0; i < 4; ++i) trace.push_back((s = observe_quiz_outcome(s, 0.9)).pace);
    trace.push_back((s = observe_quiz_outcome(s, 0.2)).pace);
    c.expect(trace == std::vector<double>{1, 2, 4, 8, 9, 4.5}, "worked back-off trace");
    c.note = std::to_string(steps) + " steps vs reference, trace 1 2 4 8 9 4.5";
}

// --- analytics ------------------------------------------------------------

void analytics_checks(Check& c) {
    using namespace analytics;
    std::vector<double> a = {1, 9};
    auto s = difficulty_stats(a);
    c.expect(s.mean == 5 && s.variance == 16, "[1,9] stats");
    std::vector<double> b = {4, 5, 6};
    s = difficulty_stats(b);
    c.expect(s.mean == 5 && std::abs(s.variance - 2.0 / 3.0) <= 1e-12, "[4,5,6] stats");

    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        auto assigned = static_cast<std::int64_t>(rng() % 2000000000ULL);
        auto answered = assigned + static_cast<std::int64_t>(rng() % (30 * 86400ULL));
        if (i % 10 == 0) answered = assigned + static_cast<std::int64_t>((rng() % 30) * 86400);
        std::vector<Assignment> one = {{assigned, answered}};
        auto h = time_to_answer(one);
        c.expect(h.buckets.size() == 1 && h.buckets.begin()->first == oracle::days_between(assigned, answered),
                 "day bucket for " + std::to_string(assigned) + " -> " + std::to_string(answered));
    }

    for (int i = 0; i < 1000; ++i) {
        std::map<std::string, std::int64_t> scores;
        for (std::size_t k = 0, n = rng() % 25; k < n; ++k)
            scores["u" + std::to_string(rng() % 40)] = static_cast<std::int64_t>(rng() % 6);
        auto got = leaderboard(scores);
        auto want = oracle::competition_ranking(scores);
        bool same = got.size() == want.size();
        for (std::size_t k = 0; same && k < got.size(); ++k)
            same = got[k].rank == want[k].rank && got[k].actor == want[k].actor && got[k].score == want[k].score;
        c.expect(same, "leaderboard map " + std::to_string(i));
    }
    c.note = "1000 day pairs, 1000 score maps";
}

// --- fip ------------------------------------------------------------------

const char* kQuiz1 =
    "What is the output of the Boolean expression: NOT (A AND B)?\n\nA) A AND B\n\nB) NOT A OR NOT B\n\n"
    "C) A OR B\n\nD) None of the above\n\n(Note: The correct answer is B) NOT A OR NOT B)";

fip::QuestionGoal logic_goal() {
    fip::QuestionGoal g;
    g.topic = "basic Boolean logic";
    g.format = fip::Format::clicker_quiz;
    return g;
}

void fip_loop(Check& c) {
    using namespace fip;
    using S = ScriptedProvider;
    auto completed = [&] {
        S p({std::string("What do you already know about truth tables?"), std::string(kQuiz1)});
        return run_fip_session(logic_goal(), p);
    };
    auto t = completed();
    c.expect(t.status == Status::Completed && t.model_turns() == 2, "Completed after two model turns");
    c.expect(json(t).dump() == json(completed()).dump(), "Completed run is deterministic");

    auto exhausted = [&] {
        S p({std::string("Which gates have you met so far?")}, true);
        Policy policy;
        policy.max_turns = 8;
        return run_fip_session(logic_goal(), p, policy);
    };
    auto m = exhausted();
    c.expect(m.status == Status::MaxTurnsExceeded && m.model_turns() == 8 && !m.has_result(), "MaxTurnsExceeded");
    c.expect(json(m).dump() == json(exhausted()).dump(), "MaxTurnsExceeded run is deterministic");

    S failing({ScriptedFailure{"boom"}});
    auto e = run_fip_session(logic_goal(), failing);
    c.expect(e.status == Status::ProviderError && e.turns.size() == 1 && e.error == std::optional<std::string>("boom"),
             "ProviderError keeps the seed prompt");

    S repeating({std::string("What is NOT (A AND B)?"), std::string("What is NOT (A AND B)?"), std::string(kQuiz1)});
    auto r = run_fip_session(logic_goal(), repeating);
    c.expect(r.status == Status::Completed && r.turns.size() == 6 && r.turns[4].text == kDiversifyInstruction,
             "repetition guard injects the diversify instruction");

    gen::Rng rng(5);
    std::size_t reparsed = 0, runs = 0;
    for (int i = 0; i < 300; ++i) {
        auto q = gen::question(rng);
        auto goal = logic_goal();
        goal.format = q.kind() == QuestionKind::poll ? Format::clicker_poll : Format::clicker_quiz;
        S p({std::string("Anything in particular you want to practise?"), mcq::render_mcq(q)});
        auto run = run_fip_session(goal, p);
        c.expect(run.status == Status::Completed, "generated question " + std::to_string(i) + " did not complete");
        if (run.status != Status::Completed) continue;
        ++runs;
        bool ok = run.question.has_value();
        if (ok) {
            auto again = mcq::parse_mcq(run.turns.back().text, run.question->kind());
            ok = again.ok() && structurally_equal(*again.question, *run.question);
        }
        c.expect(ok, "Completed result " + std::to_string(i) + " does not re-parse");
        reparsed += ok;
    }
    c.note = std::to_string(reparsed) + "/" + std::to_string(runs) + " completed results re-parse";
}

// --- vetting --------------------------------------------------------------

void vetting_checks(Check& c) {
    c.expect(token_jaccard("NOT A OR NOT B", "NOT A OR NOT B") == 1.0, "reflexive");
    c.expect(token_jaccard("alpha beta", "gamma delta") == 0.0, "disjoint");
    c.expect(token_jaccard("NOT A OR NOT B", "NOT B OR NOT A") == 1.0, "permutation");
    gen::Rng rng(11);
    for (int i = 0; i < 500; ++i) {
        std::string a = gen::words(rng, 1, 12);
        std::vector<std::string> toks;
        std::istringstream ss(a);
        for (std::string w; ss >> w;) toks.push_back(w);
        std::shuffle(toks.begin(), toks.end(), rng);
        std::string shuffled;
        for (const auto& w : toks) shuffled += (shuffled.empty() ? "" : " ") + w;
        c.expect(token_jaccard(a, a) == 1.0 && token_jaccard(a, shuffled) == 1.0, "identity on: " + a);
    }
    auto four = bank::reproduce_check("alpha beta gamma delta epsilon", "alpha beta gamma delta");
    c.expect(four.similarity == 0.8 && four.match, "4/5 overlap should Match");
    auto three = bank::reproduce_check("alpha beta gamma delta epsilon", "alpha beta gamma");
    c.expect(three.similarity == 0.6 && !three.match, "3/5 overlap should be a Mismatch");

    std::mt19937_64 r(13);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int i = 0; i < 10000; ++i) {
        double d = 1.0 + 9.0 * u(r);
        double x = u(r), y = u(r);
        double lo = std::min(x, y), hi = std::max(x, y);
        double n = bank::next_difficulty(d, x);
        c.expect(bank::next_difficulty(d, lo) >= bank::next_difficulty(d, hi) && n >= 1.0 && n <= 10.0,
                 "monotonicity at d=" + std::to_string(d));
    }
    c.note = "10000 monotonicity pairs";
}

// --- end to end -----------------------------------------------------------

void end_to_end(Check& c) {
    Application app(std::make_unique<events::MemoryStorage>());
    sim::Options opt;
    opt.students = 30;
    opt.sessions = 1;
    opt.seed = 7;
    ManualClock clock(opt.start);
    auto staff = sim::ensure_staff(app, opt.start);
    auto provider = sim::make_class_provider();
    gateway::Gateway gw(app, clock, provider.get());
    gateway::HttpServer server(gw);
    int port = server.start("127.0.0.1", 0);
    sim::Report report;
    {
        sim::HttpTransport transport("127.0.0.1", port);
        report = sim::run(transport, &clock, staff, opt);
    }
    server.stop();

    bool ppq = false, qpd = false;
    for (const auto& [id, s] : app.state().routines.sessions()) {
        bool done = s.phase == routine::Phase::Discussed;
        if (s.kind == routine::RoutineKind::PollPromptQuiz) ppq = ppq || done;
        if (s.kind == routine::RoutineKind::QuizPromptDiscuss) qpd = qpd || done;
    }
    c.expect(ppq, "no poll-prompt-quiz cycle reached Discussed");
    c.expect(qpd, "no quiz-prompt-discuss cycle reached Discussed");
    c.expect(report.bank_entries > 0 && report.approved > 0, "bank is empty");
    c.expect(report.recommendation.is_object() && report.recommendation.contains("item_count"), "no recommendation");
    const char* exports[] = {"histogram", "unanswered", "difficulty", "leaderboard", "comprehension"};
    for (const char* what : exports) {
        auto it = report.exports.find(what);
        bool ok = it != report.exports.end() && std::count(it->second.begin(), it->second.end(), '\n') >= 2;
        c.expect(ok, std::string("export ") + what + " missing or empty");
    }
    c.expect(report.votes > 0, "no votes cast");
    c.note = std::to_string(report.bank_entries) + " bank entries, " + std::to_string(report.votes) +
             " votes, 5 exports over loopback HTTP";
}

} // namespace

int main() {
    const std::vector<Criterion> criteria = {
        {"parser-fixtures", 1, parser_fixtures},
        {"routine-properties", 30, routine_properties},
        {"replay-determinism", 60, replay_determinism},
        {"pacing-oracle", 5, pacing_oracle},
        {"analytics", 0, analytics_checks},
        {"fip-loop", 2, fip_loop},
        {"vetting", 0, vetting_checks},
        {"end-to-end-http", 120, end_to_end},
    };
    int failed = 0;
    for (const auto& c : criteria) failed += run(c) ? 0 : 1;
    std::printf("%d/%zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
    return failed == 0 ? 0 : 1;
}
