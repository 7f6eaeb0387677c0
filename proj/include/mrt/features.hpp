#pragma once

#include <Eigen/Core>

#include <array>

namespace mrt {

/// Decision-time policy state: [time_of_day, avg brushing (normalized),
/// avg dosage (normalized), opened app prior day, intercept].
using AlgState = Eigen::Matrix<double, 5, 1>;

/// Outcome-model state: policy features 1-4 plus [weekend indicator,
/// normalized day in trial, intercept].
using EnvState = Eigen::Matrix<double, 7, 1>;

/// Exponential averages look back one week: 7 days x 2 decision times.
inline constexpr int kWindowLen = 14;
inline constexpr double kExpAvgGamma = 13.0 / 14.0;
/// Sensor cap on per-session brushing seconds; also what maps the normalized
/// brushing average into [-1, 1].
inline constexpr double kOscbCap = 181.0;

/// Raw observables feeding one decision time. Both windows are ordered most
/// recent first and zero-padded before the participant's start.
struct RawObservables {
    int slot = 0; // 0 = morning, 1 = evening
    std::array<double, kWindowLen> past_oscb{};
    std::array<double, kWindowLen> past_actions{};
    int opened_app_prior_day = 0;
    int is_weekend = 0;
    int day_in_trial = 1; // 1-based
};

/// Recency-weighted window average: c * sum_j gamma^(j-1) w[j] with
/// c = (1 - gamma) / (1 - gamma^14), so constant windows are fixed points.
double exp_average(const std::array<double, kWindowLen>& window, double gamma = kExpAvgGamma);

/// Maps averaged brushing seconds through (x - 90.5) / 90.5. Values outside
/// [0, 181] are clamped first; *clamped reports whether that happened.
double normalize_oscb_avg(double seconds, bool* clamped = nullptr);

/// Maps an averaged action fraction in [0, 1] through (p - 0.5) / 0.5.
/// Out-of-range input is an error: actions are 0/1 so no valid window
/// average can leave [0, 1].
double normalize_dosage_avg(double fraction);

AlgState build_alg_state(const RawObservables& raw);
/// days_per_participant fixes the affine day normalization (day 1 -> -1,
/// last day -> +1).
EnvState build_env_state(const RawObservables& raw, int days_per_participant = 70);

/// Range checks used by tests and by history ingestion.
bool alg_state_valid(const AlgState& f);
bool env_state_valid(const EnvState& g);

} // namespace mrt
