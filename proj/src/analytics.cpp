#include "flipdeck/analytics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>

namespace flipdeck::analytics {

DaysHistogram time_to_answer(std::span<const Assignment> assignments) {
    DaysHistogram h;
    for (const auto& a : assignments) {
        if (!a.answered_at) {
            ++h.unanswered;
            continue;
        }
        std::int64_t latency = *a.answered_at - a.assigned_at;
        if (latency < 0) throw Error(ErrorCode::NegativeLatency, "answered before it was assigned");
        ++h.buckets[latency / kSecondsPerDay];
        ++h.n;
    }
    return h;
}

DifficultyStats difficulty_stats(std::span<const double> values) {
    if (values.empty()) throw Error(ErrorCode::EmptyInput, "difficulty statistics need at least one value");
    double sum = 0.0;
    for (double v : values) {
        if (!(v >= 1.0 && v <= 10.0)) throw Error(ErrorCode::OutOfRange, "difficulty outside [1, 10]");
        sum += v;
    }
    DifficultyStats s;
    s.n = values.size();
    s.mean = sum / static_cast<double>(s.n);
    double sq = 0.0;
    for (double v : values) sq += (v - s.mean) * (v - s.mean);
    s.variance = sq / static_cast<double>(s.n);
    return s;
}

std::vector<LeaderboardRow> leaderboard(const std::map<std::string, std::int64_t>& scores) {
    std::vector<LeaderboardRow> rows;
    rows.reserve(scores.size());
    for (const auto& [actor, score] : scores) rows.push_back({0, actor, score});
    std::stable_sort(rows.begin(), rows.end(),
                     [](const LeaderboardRow& a, const LeaderboardRow& b) { return a.score > b.score; });
    for (std::size_t i = 0; i < rows.size(); ++i) {
        if (i > 0 && rows[i].score == rows[i - 1].score)
            rows[i].rank = rows[i - 1].rank;
        else
            rows[i].rank = static_cast<int>(i) + 1;
    }
    return rows;
}

std::string format_number(double v) {
    if (std::isfinite(v) && v == std::floor(v) && std::fabs(v) < 1e15)
        return std::to_string(static_cast<long long>(v));
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string histogram_csv(const DaysHistogram& h) {
    std::string out = "day,count\n";
    for (const auto& [day, count] : h.buckets) out += std::to_string(day) + "," + std::to_string(count) + "\n";
    return out;
}

std::string unanswered_csv(const DaysHistogram& h) {
    return "answered,unanswered\n" + std::to_string(h.n) + "," + std::to_string(h.unanswered) + "\n";
}

std::string difficulty_csv(const DifficultyStats& s) {
    return "mean,variance,n,variance_convention\n" + format_number(s.mean) + "," + format_number(s.variance) + "," +
           std::to_string(s.n) + ",population\n";
}

std::string leaderboard_csv(const std::vector<LeaderboardRow>& rows) {
    std::string out = "rank,actor,score\n";
    for (const auto& r : rows) out += std::to_string(r.rank) + "," + r.actor + "," + std::to_string(r.score) + "\n";
    return out;
}

std::string comprehension_csv(const std::vector<ComprehensionPoint>& series) {
    std::string out = "session,accuracy,ewma,pace\n";
    for (const auto& p : series)
        out += p.session_ref + "," + format_number(p.accuracy) + "," + format_number(p.ewma) + "," +
               format_number(p.pace) + "\n";
    return out;
}

} // namespace flipdeck::analytics
