#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "flipdeck/domain.hpp"

namespace flipdeck::analytics {

inline constexpr std::int64_t kSecondsPerDay = 86400;

struct Assignment {
    Timestamp assigned_at = 0;
    std::optional<Timestamp> answered_at;  // unset: never answered
};

struct DaysHistogram {
    std::map<std::int64_t, std::int64_t> buckets;  // day -> count
    std::int64_t n = 0;
    std::int64_t unanswered = 0;  // excluded from buckets and n
};

// Throws Error{NegativeLatency} when an answer precedes its assignment.
DaysHistogram time_to_answer(std::span<const Assignment> assignments);

struct DifficultyStats {
    double mean = 0.0;
    double variance = 0.0;  // population variance (divide by n)
    std::size_t n = 0;
};

// Throws Error{EmptyInput} on an empty list, Error{OutOfRange} for values
// outside [1, 10].
DifficultyStats difficulty_stats(std::span<const double> values);

struct LeaderboardRow {
    int rank = 0;
    std::string actor;
    std::int64_t score = 0;

    bool operator==(const LeaderboardRow&) const = default;
};

// Competition ranking ("1224"): equal scores share a rank and the next rank
// skips. Ties are listed by ascending actor id.
std::vector<LeaderboardRow> leaderboard(const std::map<std::string, std::int64_t>& scores);

struct ComprehensionPoint {
    std::string session_ref;
    double accuracy = 0.0;
    double ewma = 0.0;
    double pace = 0.0;
};

// Shortest decimal form that round-trips; integral values print without a
// fractional part.
std::string format_number(double v);

std::string histogram_csv(const DaysHistogram& h);
std::string unanswered_csv(const DaysHistogram& h);
std::string difficulty_csv(const DifficultyStats& s);
std::string leaderboard_csv(const std::vector<LeaderboardRow>& rows);
std::string comprehension_csv(const std::vector<ComprehensionPoint>& series);

} // namespace flipdeck::analytics
