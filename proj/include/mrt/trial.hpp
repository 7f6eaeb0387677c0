#pragma once

#include "mrt/dates.hpp"
#include "mrt/features.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

namespace mrt {

/// Trial-level constants. Defaults mirror the deployed study: 72 participants
/// recruited five at a time every two weeks from 2023-09-01, each in the
/// trial for 70 days with two decision times per day, policy updates every
/// Sunday.
struct TrialConfig {
    int num_participants = 72;
    int days_per_participant = 70;
    int decisions_per_day = 2;
    int cohort_size = 5;
    int cohort_interval_days = 14;
    Date trial_start_date = Date::from_ymd(2023, 9, 1);
    int update_weekday = 0; // 0 = Sunday
    std::uint64_t master_seed = 0;
    double reward_cost_weight = 0.0;

    int decision_times() const { return days_per_participant * decisions_per_day; }
    /// Throws InputError on out-of-range values.
    void validate() const;
};

/// Which decision-time delivery path produced a record's action.
enum class FallbackTag { none, method_i, method_ii };

std::string to_string(FallbackTag tag);
FallbackTag fallback_tag_from_string(const std::string& s);

struct DecisionPoint {
    int participant_id = 0;
    int t = 0; // 1..T, t = 2*(day-1) + slot + 1
    Date date;
    int slot = 0;
};

/// One decision time of one participant: states, randomization, action,
/// outcome, and delivery provenance.
struct DecisionRecord {
    DecisionPoint point;
    AlgState alg_state = AlgState::Zero();
    EnvState env_state = EnvState::Zero();
    double pi = 0.0;
    int action = 0;
    long oscb = 0;
    double reward = 0.0;
    FallbackTag fallback = FallbackTag::none;
    bool excluded_from_update = false;
};

/// Posterior after one weekly update. participant_id is set when policies are
/// maintained per participant (no-pooling runs) and empty for the pooled one.
struct PosteriorSnapshot {
    int tau_index = 0;
    Date date;
    std::optional<int> participant_id;
    Eigen::VectorXd mu;    // 15
    Eigen::MatrixXd sigma; // 15 x 15
};

struct UpdateTime {
    int tau_index = 0; // 1-based
    Date date;
};

/// Append-only run record: every decision made plus the posterior snapshot
/// taken at every update time. (participant_id, t) pairs are unique.
class TrialHistory {
  public:
    void add_record(const DecisionRecord& rec);
    void add_snapshot(const PosteriorSnapshot& snap);
    void set_start_date(int participant_id, Date start);

    const std::vector<DecisionRecord>& records() const { return records_; }
    const std::vector<PosteriorSnapshot>& snapshots() const { return snapshots_; }
    const std::map<int, Date>& start_dates() const { return start_dates_; }

  private:
    std::vector<DecisionRecord> records_;
    std::vector<PosteriorSnapshot> snapshots_;
    std::map<int, Date> start_dates_;
    std::unordered_set<std::uint64_t> seen_;
};

/// Deterministic staggered-cohort enrolment: participants 1..N in cohorts of
/// cohort_size, one cohort every cohort_interval_days starting at
/// trial_start_date.
std::vector<std::pair<int, Date>> recruitment_schedule(const TrialConfig& config);

/// Every update day (config.update_weekday) from the first one strictly after
/// trial_start_date through the last participant's final day.
std::vector<UpdateTime> update_times(const TrialConfig& config);
std::vector<UpdateTime> update_times(const TrialConfig& config,
                                     const std::vector<std::pair<int, Date>>& recruits);

struct BatchItem {
    int participant_id = 0;
    AlgState alg_state = AlgState::Zero();
    double pi = 0.0;
    int action = 0;
    double reward = 0.0;
};

/// Update batch at tau_date: all non-excluded records dated strictly before
/// it, in insertion order.
std::vector<BatchItem> batch_for_update(const TrialHistory& history, Date tau_date);

void write_history_csv(const std::filesystem::path& path, const TrialHistory& history);
/// Reads a history CSV written by write_history_csv. Participant start dates
/// are inferred from each participant's earliest decision time.
TrialHistory read_history_csv(const std::filesystem::path& path);

void write_snapshots_jsonl(const std::filesystem::path& path,
                           const std::vector<PosteriorSnapshot>& snapshots);
std::vector<PosteriorSnapshot> read_snapshots_jsonl(const std::filesystem::path& path);

} // namespace mrt
