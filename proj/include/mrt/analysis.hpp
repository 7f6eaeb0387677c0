#pragma once

#include "mrt/orchestrator.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace mrt {

/// predicted advantage at f, standardized by its posterior sd:
/// mu_beta . f / sqrt(f' Sigma_beta f).
double standardized_predicted_advantage(const Vec5& mu_beta, const Mat5& sigma_beta,
                                        const AlgState& f);

/// The statistic across update times, for a fixed query state.
struct AdvantageTrajectory {
    std::vector<int> tau_indices;
    std::vector<double> values;
};

/// Computed from pooled posterior snapshots; per-participant snapshots are
/// rejected (no single trajectory exists for them).
AdvantageTrajectory advantage_trajectory(const std::vector<PosteriorSnapshot>& snapshots,
                                         const AlgState& f);

/// Linear-interpolation quantile on order statistics: position p*(N-1)
/// between the two neighboring sorted values.
double interp_quantile(std::vector<double> values, double p);

std::optional<double> sample_variance(const std::vector<double>& values); // N-1 divisor

/// Per-update-time empirical distribution of the statistic under the no-
/// advantage environment, with a central quantile band.
struct NullBand {
    double level_low = 0.025;
    double level_high = 0.975;
    std::vector<std::vector<double>> rep_values; // [rep][tau]
    std::vector<double> band_low;                // per tau
    std::vector<double> band_high;
};

struct DidWeLearnResult {
    AlgState query_state = AlgState::Zero();
    std::vector<int> tau_indices;
    AdvantageTrajectory reference;
    NullBand band;
};

/// The null-resampling diagnostic: projects every environment model's
/// treatment effects to have zero effect at the query state, reruns the whole
/// trial reps times in that no-advantage world, and compares the reference
/// trajectory against the per-update-time band of statistics.
DidWeLearnResult did_we_learn(const std::vector<PosteriorSnapshot>& reference_snapshots,
                              const RunSetup& setup, const AlgState& query_state, int reps,
                              const StateGrid& grid);

/// The two value metrics of one run: mean over participants of their
/// time-averaged brushing, and the first quartile of those averages.
struct RunValues {
    double mean_value = 0.0;
    double q1_value = 0.0;
};

RunValues value_metrics(const TrialHistory& history);

struct ValueSummary {
    double mean = 0.0;
    double mean_se = 0.0;
    double q1 = 0.0;
    double q1_se = 0.0;
    bool single_rep = false; // SEs reported as 0 from one rep
};

struct PoolingComparison {
    ValueSummary full_pooling;
    ValueSummary no_pooling;
    int reps = 0;
    std::vector<RunValues> full_pooling_reps;
    std::vector<RunValues> no_pooling_reps;
};

/// Paired full-pooling vs no-pooling comparison: rep r runs both modes with
/// the identical rep seed, so both face the same environment draws.
PoolingComparison pooling_experiment(const RunSetup& setup, int reps);

struct OutcomeMetrics {
    double proportion_zero = 0.0;
    std::optional<double> avg_of_avg_nonzero_participant_oscb;
    std::optional<double> avg_nonzero_oscb_in_trial;
    std::optional<double> var_of_avg_nonzero_participant_oscb;
    std::optional<double> var_nonzero_oscb_in_trial;
    std::optional<double> var_of_avg_participant_oscb;
    std::optional<double> avg_of_var_participant_oscb;
    /// Participants skipped from the non-zero averages.
    std::vector<int> participants_without_nonzero;
};

OutcomeMetrics outcome_metrics(const std::vector<DecisionRecord>& records);
OutcomeMetrics outcome_metrics(const TrialHistory& history);

struct ErrorMetrics {
    double mse = 0.0;
    double rmse = 0.0;
    double mae = 0.0;
};

/// Outcome-prediction errors between two histories aligned on (participant, t).
ErrorMetrics error_metrics(const TrialHistory& sim, const TrialHistory& ref);

void write_dwl_json(const std::filesystem::path& path, const DidWeLearnResult& result);
void write_pooling_csv(const std::filesystem::path& path, const PoolingComparison& comparison);
void write_metrics_json(const std::filesystem::path& path, const OutcomeMetrics& metrics,
                        const std::optional<ErrorMetrics>& errors);

} // namespace mrt
