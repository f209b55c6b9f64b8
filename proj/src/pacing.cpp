#include "flipdeck/pacing.hpp"

#include <algorithm>
#include <cmath>

#include "flipdeck/error.hpp"

namespace flipdeck::pacing {

std::string_view to_string(Mode mode) noexcept { return mode == Mode::SlowStart ? "SlowStart" : "Steady"; }

State init_pacing(const Params& p) {
    auto bad = [](const char* what) { throw Error(ErrorCode::BadParams, what); };
    if (!(p.beta > 0.0 && p.beta < 1.0)) bad("beta must lie in (0, 1)");
    if (!(p.alpha > 0.0)) bad("alpha must be positive");
    if (!(p.theta_lo >= 0.0 && p.theta_lo < p.theta_hi && p.theta_hi <= 1.0))
        bad("thresholds must satisfy 0 <= theta_lo < theta_hi <= 1");
    if (!(p.lambda > 0.0 && p.lambda <= 1.0)) bad("lambda must lie in (0, 1]");
    if (!(p.pace_min > 0.0)) bad("pace_min must be positive");
    if (!(p.initial_ssthresh >= p.pace_min)) bad("ssthresh must be at least pace_min");
    if (!(p.prior_comprehension >= 0.0 && p.prior_comprehension <= 1.0)) bad("prior comprehension must lie in [0, 1]");

    State s;
    s.params = p;
    s.pace = p.pace_min;
    s.comprehension = p.prior_comprehension;
    s.mode = Mode::SlowStart;
    s.ssthresh = p.initial_ssthresh;
    return s;
}

State observe_quiz_outcome(const State& state, double accuracy) {
    if (!(accuracy >= 0.0 && accuracy <= 1.0)) throw Error(ErrorCode::OutOfRange, "accuracy must lie in [0, 1]");
    const Params& p = state.params;
    State next = state;
    next.comprehension = (1.0 - p.lambda) * state.comprehension + p.lambda * accuracy;

    if (accuracy >= p.theta_hi) {
        if (state.mode == Mode::SlowStart) {
            next.pace = std::min(2.0 * state.pace, state.ssthresh);
            if (next.pace == state.ssthresh) next.mode = Mode::Steady;
        } else {
            next.pace = state.pace + p.alpha;
        }
    } else if (accuracy < p.theta_lo) {
        next.pace = std::max(p.pace_min, p.beta * state.pace);
        next.ssthresh = std::max(p.pace_min, next.pace);
        next.mode = Mode::Steady;
    }
    return next;
}

State start_new_topic(const State& state) {
    State next = state;
    next.ssthresh = std::max(state.params.pace_min, state.pace / 2.0);
    next.pace = state.params.pace_min;
    next.mode = Mode::SlowStart;
    return next;
}

Recommendation recommend_next(const State& state, std::size_t approved_available) {
    Recommendation r;
    auto wanted = static_cast<std::size_t>(std::max(0L, std::lround(state.pace)));
    r.item_count = static_cast<int>(std::min(wanted, approved_available));
    r.empty_bank = approved_available == 0;
    if (state.comprehension < state.params.theta_hi)
        r.band = Band{1, 5};
    else if (state.comprehension < 0.85)
        r.band = Band{4, 8};
    else
        r.band = Band{6, 10};
    return r;
}

void to_json(nlohmann::json& j, const Params& p) {
    j = nlohmann::json{{"alpha", p.alpha},       {"beta", p.beta},
                       {"theta_hi", p.theta_hi}, {"theta_lo", p.theta_lo},
                       {"lambda", p.lambda},     {"pace_min", p.pace_min},
                       {"ssthresh", p.initial_ssthresh}, {"prior_comprehension", p.prior_comprehension}};
}

void from_json(const nlohmann::json& j, Params& p) {
    p.alpha = j.at("alpha").get<double>();
    p.beta = j.at("beta").get<double>();
    p.theta_hi = j.at("theta_hi").get<double>();
    p.theta_lo = j.at("theta_lo").get<double>();
    p.lambda = j.at("lambda").get<double>();
    p.pace_min = j.at("pace_min").get<double>();
    p.initial_ssthresh = j.at("ssthresh").get<double>();
    p.prior_comprehension = j.at("prior_comprehension").get<double>();
}

void to_json(nlohmann::json& j, const State& s) {
    j = nlohmann::json{{"pace", s.pace},
                       {"comprehension", s.comprehension},
                       {"mode", std::string(to_string(s.mode))},
                       {"ssthresh", s.ssthresh},
                       {"params", s.params}};
}

void from_json(const nlohmann::json& j, State& s) {
    s.pace = j.at("pace").get<double>();
    s.comprehension = j.at("comprehension").get<double>();
    s.mode = j.at("mode").get<std::string>() == "SlowStart" ? Mode::SlowStart : Mode::Steady;
    s.ssthresh = j.at("ssthresh").get<double>();
    s.params = j.at("params").get<Params>();
}

void to_json(nlohmann::json& j, const Band& b) { j = nlohmann::json{{"lo", b.lo}, {"hi", b.hi}}; }

} // namespace flipdeck::pacing
