#include <doctest.h>

#include "../support/generators.hpp"
#include "flipdeck/domain.hpp"
#include "flipdeck/error.hpp"

using namespace flipdeck;

namespace {

ErrorCode code_of(const auto& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.code();
    }
    FAIL("no error raised");
    return ErrorCode::BadRequest;
}

} // namespace

TEST_SUITE("domain") {

TEST_CASE("make normalizes and labels options from A") {
    auto q = McqQuestion::make("q", "  What is 1+1?  ", {" one ", "two", "cafe\xCC\x81"}, {'b'},
                               QuestionKind::clicker_quiz);
    CHECK(q.stem() == "What is 1+1?");
    REQUIRE(q.options().size() == 3);
    CHECK(q.options()[0].label == 'A');
    CHECK(q.options()[0].text == "one");
    CHECK(q.options()[2].label == 'C');
    CHECK(q.options()[2].text == "caf\xC3\xA9");  // composed form
    CHECK(q.answer_key() == LabelSet{'B'});
    CHECK(q.labels() == LabelSet{'A', 'B', 'C'});
}

TEST_CASE("make rejects malformed questions") {
    CHECK(code_of([] { McqQuestion::make("", " ", {"a", "b"}, {'A'}, QuestionKind::poll); }) ==
          ErrorCode::InvalidQuestion);
    CHECK(code_of([] { McqQuestion::make("", "s", {"a"}, {'A'}, QuestionKind::poll); }) == ErrorCode::InvalidQuestion);
    CHECK(code_of([] {
              McqQuestion::make("", "s", {"1", "2", "3", "4", "5", "6", "7", "8", "9"}, {'A'}, QuestionKind::poll);
          }) == ErrorCode::InvalidQuestion);
    CHECK(code_of([] { McqQuestion::make("", "s", {"a", ""}, {'A'}, QuestionKind::poll); }) ==
          ErrorCode::InvalidQuestion);
    CHECK(code_of([] { McqQuestion::make("", "s", {"a", "b"}, {}, QuestionKind::poll); }) ==
          ErrorCode::InvalidQuestion);
    CHECK(code_of([] { McqQuestion::make("", "s", {"a", "b"}, {'C'}, QuestionKind::poll); }) ==
          ErrorCode::UnknownLabel);
}

TEST_CASE("quiz key covering every option needs the degenerate flag") {
    CHECK(code_of([] { McqQuestion::make("", "s", {"a", "b"}, {'A', 'B'}, QuestionKind::clicker_quiz); }) ==
          ErrorCode::InvalidQuestion);
    auto q = McqQuestion::make("", "s", {"a", "b"}, {'A', 'B'}, QuestionKind::clicker_quiz, std::nullopt, true);
    CHECK(q.degenerate());
    auto poll = McqQuestion::make("", "s", {"a", "b"}, {'A', 'B'}, QuestionKind::poll);
    CHECK_FALSE(poll.degenerate());
}

TEST_CASE("grading is exact set match") {
    auto q = McqQuestion::make("", "s", {"a", "b", "c", "d"}, {'B', 'C'}, QuestionKind::clicker_quiz);
    auto g = grade_response(q, {'B', 'C'});
    CHECK(g.correct);
    g = grade_response(q, {'B'});
    CHECK_FALSE(g.correct);
    CHECK(g.missing == LabelSet{'C'});
    g = grade_response(q, {'A', 'B', 'C'});
    CHECK_FALSE(g.correct);
    CHECK(g.spurious == LabelSet{'A'});
    CHECK(g.matched == LabelSet{'B', 'C'});
    CHECK(code_of([&] { grade_response(q, {'E'}); }) == ErrorCode::UnknownLabel);
}

TEST_CASE("grading partitions the chosen and key labels") {
    gen::Rng rng(11);
    for (int i = 0; i < 500; ++i) {
        auto q = gen::question(rng);
        LabelSet chosen;
        for (Label l : q.labels())
            if (rng() % 2) chosen.insert(l);
        auto g = grade_response(q, chosen);
        LabelSet both = g.matched;
        both.insert(g.spurious.begin(), g.spurious.end());
        CHECK(both == chosen);
        LabelSet key = g.matched;
        key.insert(g.missing.begin(), g.missing.end());
        CHECK(key == q.answer_key());
        CHECK(g.correct == (chosen == q.answer_key()));
    }
}

TEST_CASE("labels parse case-insensitively and only A..H") {
    CHECK(parse_label("b") == 'B');
    CHECK(parse_label("H") == 'H');
    CHECK(code_of([] { parse_label("I"); }) == ErrorCode::UnknownLabel);
    CHECK(code_of([] { parse_label("AB"); }) == ErrorCode::UnknownLabel);
    CHECK(code_of([] { parse_label(""); }) == ErrorCode::UnknownLabel);
    CHECK(labels_to_string({'C', 'A'}) == "A,C");
}

TEST_CASE("root question steps through hints") {
    auto item1 = McqQuestion::make("i1", "First?", {"x", "y", "z"}, {'A'}, QuestionKind::clicker_quiz);
    auto item2 = McqQuestion::make("i2", "Second?", {"p", "q"}, {'B'}, QuestionKind::clicker_quiz);
    std::map<RootQuestion::HintKey, std::string> hints = {
        {{"i1", 'B'}, "not y"}, {{"i1", 'C'}, "not z"}, {{"i2", 'A'}, "not p"}};
    auto rq = RootQuestion::make("r", "Solve it", {item1, item2}, hints);

    auto step = step_root_question(rq, {});
    CHECK_FALSE(step.solved);
    CHECK(step.hints.empty());

    step = step_root_question(rq, {{"i1", {'B'}}, {"i2", {'B'}}});
    CHECK_FALSE(step.solved);
    CHECK(step.hints == std::vector<std::string>{"not y"});

    step = step_root_question(rq, {{"i1", {'A'}}, {"i2", {'B'}}});
    CHECK(step.solved);

    CHECK(code_of([&] { step_root_question(rq, {{"nope", {'A'}}}); }) == ErrorCode::UnknownItem);
    CHECK(code_of([&] { step_root_question(rq, {{"i2", {'D'}}}); }) == ErrorCode::UnknownLabel);
    hints.erase({"i2", 'A'});
    CHECK(code_of([&] { RootQuestion::make("r", "s", {item1, item2}, hints); }) == ErrorCode::InvalidQuestion);
    CHECK(code_of([&] { RootQuestion::make("r", "s", {}, {}); }) == ErrorCode::InvalidQuestion);
    CHECK(code_of([&] { RootQuestion::make("r", "s", {item2, item2}, hints); }) == ErrorCode::InvalidQuestion);
}

TEST_CASE("json round trips") {
    gen::Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        auto q = gen::question(rng, "q" + std::to_string(i));
        json j = q;
        CHECK(mcq_from_json(j) == q);
    }
    auto item = McqQuestion::make("i", "s?", {"a", "b"}, {'A'}, QuestionKind::clicker_quiz);
    auto rq = RootQuestion::make("r", "p", {item}, {{{"i", 'B'}, "hint"}});
    json j = rq;
    CHECK(root_from_json(j) == rq);
    ActorRef a("u1", Role::assistant);
    json ja = a;
    CHECK(actor_from_json(ja) == a);
    CHECK(role_from_string("system") == Role::system);
    CHECK(question_kind_from_string(to_string(QuestionKind::jitt_quiz)) == QuestionKind::jitt_quiz);
}

}
