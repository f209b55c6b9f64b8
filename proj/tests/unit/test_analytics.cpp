#include <doctest.h>

#include <random>

#include "../support/oracles.hpp"
#include "flipdeck/analytics.hpp"
#include "flipdeck/error.hpp"

using namespace flipdeck;
using namespace flipdeck::analytics;

TEST_SUITE("analytics") {

TEST_CASE("day buckets") {
    std::vector<Assignment> a = {{0, 2 * 86400 + 3600}, {50, 50}, {0, std::nullopt}, {10, 86410}, {10, 86409}};
    auto h = time_to_answer(a);
    CHECK(h.buckets == std::map<std::int64_t, std::int64_t>{{0, 2}, {1, 1}, {2, 1}});
    CHECK(h.n == 4);
    CHECK(h.unanswered == 1);
    std::vector<Assignment> bad = {{100, 99}};
    try {
        time_to_answer(bad);
        FAIL("expected NegativeLatency");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NegativeLatency);
    }
}

TEST_CASE("day buckets match a brute-force day counter") {
    std::mt19937_64 rng(7);
    for (int i = 0; i < 1000; ++i) {
        std::int64_t assigned = static_cast<std::int64_t>(rng() % 2000000000ULL);
        std::int64_t answered = assigned + static_cast<std::int64_t>(rng() % (30 * 86400ULL));
        if (i % 10 == 0) answered = assigned + static_cast<std::int64_t>((rng() % 30) * 86400);  // exact day edges
        std::vector<Assignment> one = {{assigned, answered}};
        auto h = time_to_answer(one);
        REQUIRE(h.buckets.size() == 1);
        CHECK(h.buckets.begin()->first == oracle::days_between(assigned, answered));
        CHECK(h.buckets.begin()->second == 1);
    }
}

TEST_CASE("histogram total equals answered count") {
    std::mt19937_64 rng(8);
    for (int i = 0; i < 200; ++i) {
        std::vector<Assignment> as;
        std::int64_t answered = 0;
        for (std::size_t k = 0, n = rng() % 40; k < n; ++k) {
            std::int64_t t = static_cast<std::int64_t>(rng() % 1000000);
            if (rng() % 4 == 0) {
                as.push_back({t, std::nullopt});
            } else {
                as.push_back({t, t + static_cast<std::int64_t>(rng() % 900000)});
                ++answered;
            }
        }
        auto h = time_to_answer(as);
        std::int64_t sum = 0;
        for (const auto& [day, c] : h.buckets) {
            CHECK(day >= 0);
            sum += c;
        }
        CHECK(sum == h.n);
        CHECK(h.n == answered);
        CHECK(h.n + h.unanswered == static_cast<std::int64_t>(as.size()));
    }
}

TEST_CASE("difficulty statistics") {
    std::vector<double> a = {5, 5, 5};
    auto s = difficulty_stats(a);
    CHECK(s.mean == 5);
    CHECK(s.variance == 0);
    std::vector<double> b = {1, 9};
    s = difficulty_stats(b);
    CHECK(s.mean == 5);
    CHECK(s.variance == 16);
    std::vector<double> c = {4, 5, 6};
    s = difficulty_stats(c);
    CHECK(s.mean == 5);
    CHECK(std::abs(s.variance - 2.0 / 3.0) <= 1e-12);
    CHECK(s.n == 3);

    std::vector<double> none;
    CHECK_THROWS_AS(difficulty_stats(none), Error);
    std::vector<double> out = {0.5};
    CHECK_THROWS_AS(difficulty_stats(out), Error);

    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(1.0, 10.0);
    for (int i = 0; i < 300; ++i) {
        std::vector<double> xs(1 + rng() % 50);
        for (auto& x : xs) x = u(rng);
        auto st = difficulty_stats(xs);
        auto [m, v] = oracle::mean_variance(xs);
        CHECK(std::abs(st.mean - static_cast<double>(m)) <= 1e-12);
        CHECK(std::abs(st.variance - static_cast<double>(v)) <= 1e-10);
        CHECK(st.variance >= 0);
    }
}

TEST_CASE("leaderboard competition ranking") {
    auto rows = leaderboard({{"a", 3}, {"b", 5}, {"c", 3}});
    REQUIRE(rows.size() == 3);
    CHECK(rows[0] == LeaderboardRow{1, "b", 5});
    CHECK(rows[1] == LeaderboardRow{2, "a", 3});
    CHECK(rows[2] == LeaderboardRow{2, "c", 3});
    CHECK(leaderboard({{"solo", 0}}) == std::vector<LeaderboardRow>{{1, "solo", 0}});
    CHECK(leaderboard({}).empty());
}

TEST_CASE("leaderboard matches a brute-force ranking") {
    std::mt19937_64 rng(10);
    for (int i = 0; i < 1000; ++i) {
        std::map<std::string, std::int64_t> scores;
        for (std::size_t k = 0, n = rng() % 25; k < n; ++k)
            scores["u" + std::to_string(rng() % 40)] = static_cast<std::int64_t>(rng() % 6);
        auto got = leaderboard(scores);
        auto want = oracle::competition_ranking(scores);
        REQUIRE(got.size() == want.size());
        for (std::size_t k = 0; k < got.size(); ++k) {
            CHECK(got[k].rank == want[k].rank);
            CHECK(got[k].actor == want[k].actor);
            CHECK(got[k].score == want[k].score);
        }
    }
}

TEST_CASE("csv exports") {
    DaysHistogram h;
    h.buckets = {{0, 2}, {3, 1}};
    h.n = 3;
    h.unanswered = 4;
    CHECK(histogram_csv(h) == "day,count\n0,2\n3,1\n");
    CHECK(unanswered_csv(h) == "answered,unanswered\n3,4\n");
    CHECK(difficulty_csv({5, 16, 2}) == "mean,variance,n,variance_convention\n5,16,2,population\n");
    CHECK(leaderboard_csv({{1, "b", 5}}) == "rank,actor,score\n1,b,5\n");
    CHECK(comprehension_csv({{"S1", 1.0, 0.75, 2}}) == "session,accuracy,ewma,pace\nS1,1,0.75,2\n");
    CHECK(format_number(2.0 / 3.0) == "0.6666666666666666");
}

}
