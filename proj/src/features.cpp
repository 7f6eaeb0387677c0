#include "mrt/features.hpp"

#include "mrt/errors.hpp"
#include "mrt/log.hpp"

#include <cmath>
#include <string>

namespace mrt {

double exp_average(const std::array<double, kWindowLen>& window, double gamma) {
    if (!(gamma > 0.0 && gamma < 1.0))
        throw InputError("exp_average weight must be in (0, 1)");
    double acc = 0.0;
    double w = 1.0;
    for (double x : window) {
        acc += w * x;
        w *= gamma;
    }
    double norm = (1.0 - gamma) / (1.0 - std::pow(gamma, kWindowLen));
    return norm * acc;
}

double normalize_oscb_avg(double seconds, bool* clamped) {
    bool out_of_range = seconds < 0.0 || seconds > kOscbCap;
    if (clamped != nullptr)
        *clamped = out_of_range;
    if (out_of_range) {
        log_warn("brushing average " + std::to_string(seconds) + " outside [0, " +
                 std::to_string(kOscbCap) + "], clamping");
        seconds = seconds < 0.0 ? 0.0 : kOscbCap;
    }
    double half = kOscbCap / 2.0;
    return (seconds - half) / half;
}

double normalize_dosage_avg(double fraction) {
    if (!(fraction >= 0.0 && fraction <= 1.0))
        throw InputError("dosage average must be in [0, 1], got " + std::to_string(fraction));
    return (fraction - 0.5) / 0.5;
}

namespace {

void check_raw(const RawObservables& raw, int days_per_participant) {
    if (raw.slot != 0 && raw.slot != 1)
        throw InputError("decision slot must be 0 (morning) or 1 (evening)");
    if (raw.opened_app_prior_day != 0 && raw.opened_app_prior_day != 1)
        throw InputError("opened_app_prior_day must be 0 or 1");
    if (raw.is_weekend != 0 && raw.is_weekend != 1)
        throw InputError("is_weekend must be 0 or 1");
    if (raw.day_in_trial < 1 || raw.day_in_trial > days_per_participant)
        throw InputError("day_in_trial " + std::to_string(raw.day_in_trial) + " outside 1.." +
                         std::to_string(days_per_participant));
    for (double a : raw.past_actions)
        if (a != 0.0 && a != 1.0)
            throw InputError("action window entries must be 0 or 1");
}

} // namespace

AlgState build_alg_state(const RawObservables& raw) {
    check_raw(raw, 100000); // day bound enforced by build_env_state where it matters
    AlgState f;
    f(0) = static_cast<double>(raw.slot);
    f(1) = normalize_oscb_avg(exp_average(raw.past_oscb));
    f(2) = normalize_dosage_avg(exp_average(raw.past_actions));
    f(3) = static_cast<double>(raw.opened_app_prior_day);
    f(4) = 1.0;
    return f;
}

EnvState build_env_state(const RawObservables& raw, int days_per_participant) {
    if (days_per_participant < 2)
        throw InputError("days_per_participant must be at least 2");
    check_raw(raw, days_per_participant);
    AlgState f = build_alg_state(raw);
    EnvState g;
    g.head<4>() = f.head<4>();
    g(4) = static_cast<double>(raw.is_weekend);
    double mid = (1.0 + days_per_participant) / 2.0;
    double half = (days_per_participant - 1.0) / 2.0;
    g(5) = (raw.day_in_trial - mid) / half;
    g(6) = 1.0;
    return g;
}

bool alg_state_valid(const AlgState& f) {
    bool slot_ok = f(0) == 0.0 || f(0) == 1.0;
    bool app_ok = f(3) == 0.0 || f(3) == 1.0;
    bool ranges_ok = f(1) >= -1.0 && f(1) <= 1.0 && f(2) >= -1.0 && f(2) <= 1.0;
    return slot_ok && app_ok && ranges_ok && f(4) == 1.0;
}

bool env_state_valid(const EnvState& g) {
    AlgState f;
    f << g(0), g(1), g(2), g(3), 1.0;
    bool weekend_ok = g(4) == 0.0 || g(4) == 1.0;
    bool day_ok = g(5) >= -1.0 && g(5) <= 1.0;
    return alg_state_valid(f) && weekend_ok && day_ok && g(6) == 1.0;
}

} // namespace mrt
