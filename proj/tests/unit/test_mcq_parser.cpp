#include <doctest.h>

#include <fstream>
#include <random>

#include "../support/generators.hpp"
#include "flipdeck/mcq_parser.hpp"

using namespace flipdeck;
using mcq::ParseFailure;
using mcq::parse_mcq;

namespace {

json load_fixture() {
    std::ifstream in(FLIPDECK_FIXTURE_DIR "/table1.json");
    REQUIRE(in.good());
    return json::parse(in);
}

const json& row(const json& fixture, const std::string& label) {
    for (const auto& r : fixture["rows"])
        if (r["label"] == label) return r;
    FAIL("missing row " << label);
    return fixture;
}

McqQuestion parsed(const json& r) {
    auto report = parse_mcq(r["response"].get<std::string>(), question_kind_from_string(r["kind"].get<std::string>()));
    REQUIRE_MESSAGE(report.ok(), r["label"].get<std::string>());
    return *report.question;
}

} // namespace

TEST_SUITE("mcq_parser") {

TEST_CASE("fixture rows parse to the published stems, option counts and keys") {
    json fx = load_fixture();

    auto poll1 = parsed(row(fx, "Clicker Poll 1"));
    CHECK(poll1.stem() == "What is the output of the Boolean expression: NOT (A AND B)?");
    CHECK(poll1.options().size() == 2);
    CHECK(poll1.answer_key() == LabelSet{'B'});
    CHECK(poll1.option('B').text == "NOT A OR NOT B");

    auto poll2 = parsed(row(fx, "Clicker Poll 2"));
    CHECK(poll2.stem() == "Which of the following Boolean expressions are equivalent to A OR (NOT B)?");
    CHECK(poll2.options().size() == 4);
    CHECK(poll2.answer_key() == LabelSet{'B', 'C'});

    auto quiz1 = parsed(row(fx, "Clicker Quiz 1"));
    CHECK(quiz1.stem() == "What is the output of the Boolean expression: NOT (A AND B)?");
    CHECK(quiz1.options().size() == 4);
    CHECK(quiz1.answer_key() == LabelSet{'B'});
    CHECK(quiz1.option('D').text == "None of the above");

    auto quiz2 = parsed(row(fx, "Clicker Quiz 2"));
    CHECK(quiz2.stem() == "Which expression represents De Morgan's Theorem for three Boolean variables (A, B, and C)?");
    CHECK(quiz2.options().size() == 4);
    CHECK(quiz2.answer_key() == LabelSet{'B'});

    for (const auto& r : fx["rows"]) {
        if (!r["response"].is_string()) continue;
        auto q = parsed(r);
        CHECK(q.stem() == r["expected"]["stem"].get<std::string>());
        CHECK(q.options().size() == r["expected"]["option_count"].get<std::size_t>());
        LabelSet key;
        for (const auto& l : r["expected"]["answer_key"]) key.insert(l.get<std::string>()[0]);
        CHECK(q.answer_key() == key);
        auto again = parse_mcq(mcq::render_mcq(q), q.kind());
        REQUIRE(again.ok());
        CHECK(structurally_equal(*again.question, q));
    }
}

TEST_CASE("a key stated only in trailing prose is accepted with a warning") {
    auto r = parse_mcq("Q?\nA) x\nB) y\nSo the correct answer is option B: y.", QuestionKind::clicker_quiz);
    REQUIRE(r.ok());
    CHECK(r.question->answer_key() == LabelSet{'B'});
    CHECK_FALSE(r.warnings.empty());
}

TEST_CASE("dot labels, lowercase note and plural forms") {
    auto r = parse_mcq("Pick?\na. one\nb. two\nc. three\n(note: the correct answers are A) one and C) three)",
                       QuestionKind::clicker_quiz);
    REQUIRE(r.ok());
    CHECK(r.question->options()[1].label == 'B');
    CHECK(r.question->answer_key() == LabelSet{'A', 'C'});
}

TEST_CASE("polls without a note take every label") {
    auto r = parse_mcq("Favourite?\nA) red\nB) blue", QuestionKind::poll);
    REQUIRE(r.ok());
    CHECK(r.question->answer_key() == LabelSet{'A', 'B'});
}

TEST_CASE("failures are classified") {
    auto fails = [](std::string_view text, QuestionKind k = QuestionKind::clicker_quiz) {
        auto r = parse_mcq(text, k);
        REQUIRE_FALSE(r.ok());
        return *r.failure;
    };
    CHECK(fails("") == ParseFailure::NoStem);
    CHECK(fails("A) x\nB) y\n(Note: The correct answer is A) x)") == ParseFailure::NoStem);
    CHECK(fails("Just a question with no options?") == ParseFailure::NoOptions);
    CHECK(fails("Q?\nA) only") == ParseFailure::NoOptions);
    CHECK(fails("Q?\nA) x\nC) y\n(Note: The correct answer is A) x)") == ParseFailure::BadLabels);
    CHECK(fails("Q?\nA) x\nB) y\nA) z\n(Note: The correct answer is A) x)") == ParseFailure::DuplicateOption);
    CHECK(fails("Q?\nA) x\nB) y") == ParseFailure::NoAnswerKey);
    CHECK(fails("Q?\nA) x\nB) y\n(Note: The correct answer is D)") == ParseFailure::BadLabels);
    CHECK(mcq::to_string(ParseFailure::NoAnswerKey) == "NoAnswerKey");
}

TEST_CASE("quiz with every option marked correct is flagged degenerate") {
    auto r = parse_mcq("Q?\nA) x\nB) y\n(Note: The correct answers are A) x and B) y)", QuestionKind::clicker_quiz);
    REQUIRE(r.ok());
    CHECK(r.question->degenerate());
}

TEST_CASE("render then parse is the identity on random questions") {
    gen::Rng rng(20240601);
    for (int i = 0; i < 1000; ++i) {
        auto q = gen::question(rng);
        std::string text = mcq::render_mcq(q);
        auto r = parse_mcq(text, q.kind());
        REQUIRE_MESSAGE(r.ok(), text);
        CHECK_MESSAGE(structurally_equal(*r.question, q), text);
        CHECK(mcq::render_mcq(*r.question) == text);
    }
}

TEST_CASE("the parser never throws on noise") {
    gen::Rng rng(3);
    const std::string alphabet = "AB)(.:\n \tnote correct answer is éx";
    for (int i = 0; i < 2000; ++i) {
        std::string s;
        std::size_t n = rng() % 120;
        for (std::size_t k = 0; k < n; ++k) s.push_back(alphabet[rng() % alphabet.size()]);
        CHECK_NOTHROW(parse_mcq(s, gen::kind(rng)));
    }
}

}
