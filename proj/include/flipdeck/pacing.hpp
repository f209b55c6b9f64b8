#pragma once

#include <string_view>

#include <json.hpp>

namespace flipdeck::pacing {

enum class Mode { SlowStart, Steady };

std::string_view to_string(Mode mode) noexcept;

struct Params {
    double alpha = 1.0;     // additive increase per good quiz in Steady
    double beta = 0.5;      // multiplicative back-off factor
    double theta_hi = 0.7;  // accuracy at or above this is "good"
    double theta_lo = 0.5;  // accuracy below this triggers back-off
    double lambda = 0.5;    // comprehension EWMA smoothing
    double pace_min = 1.0;
    double initial_ssthresh = 8.0;
    double prior_comprehension = 0.5;

    bool operator==(const Params&) const = default;
};

struct State {
    double pace = 1.0;
    double comprehension = 0.5;
    Mode mode = Mode::SlowStart;
    double ssthresh = 8.0;
    Params params;

    bool operator==(const State&) const = default;
};

// Throws Error{BadParams} unless 0 < beta < 1, alpha > 0,
// 0 <= theta_lo < theta_hi <= 1, 0 < lambda <= 1, pace_min > 0 and
// initial_ssthresh >= pace_min.
State init_pacing(const Params& params = {});

// Pure transition. Throws Error{OutOfRange} for accuracy outside [0, 1].
State observe_quiz_outcome(const State& state, double accuracy);

State start_new_topic(const State& state);

struct Band {
    int lo = 1;
    int hi = 10;

    bool contains(double difficulty) const noexcept { return difficulty >= lo && difficulty <= hi; }
    bool operator==(const Band&) const = default;
};

inline constexpr Band kModerateBand{1, 5};
inline constexpr Band kElevatedBand{6, 10};

struct Recommendation {
    int item_count = 0;
    Band band;
    bool empty_bank = false;
};

// `approved_available` is the number of Approved bank entries the
// recommendation may draw from.
Recommendation recommend_next(const State& state, std::size_t approved_available);

void to_json(nlohmann::json& j, const Params& p);
void from_json(const nlohmann::json& j, Params& p);
void to_json(nlohmann::json& j, const State& s);
void from_json(const nlohmann::json& j, State& s);
void to_json(nlohmann::json& j, const Band& b);

} // namespace flipdeck::pacing
