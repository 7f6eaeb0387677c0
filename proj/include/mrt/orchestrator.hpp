#pragma once

#include "mrt/bandit.hpp"
#include "mrt/environment.hpp"
#include "mrt/trial.hpp"

#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace mrt {

enum class FaultType { service_down, schedule_construction_failure, data_retrieval_failure };

std::string to_string(FaultType type);
FaultType fault_type_from_string(const std::string& s);

/// One injected issue: on `date`, `type` hits the listed participants
/// (std::nullopt = everyone active that day).
struct FaultEntry {
    Date date;
    FaultType type = FaultType::service_down;
    std::optional<std::vector<int>> participants;
};

using FaultPlan = std::vector<FaultEntry>;

FaultPlan read_fault_plan_json(const std::filesystem::path& path);
void write_fault_plan_json(const std::filesystem::path& path, const FaultPlan& plan);

enum class EventKind {
    recruit,
    daily_job,
    schedule_pushed,
    fallback_i,
    fallback_ii,
    fallback_iii,
    policy_update,
    fault_injected,
};

std::string to_string(EventKind kind);

struct Event {
    Date date;
    EventKind kind = EventKind::daily_job;
    std::optional<int> participant_id;
    std::string detail;
};

/// Append-only, chronologically ordered record of everything the pipeline did.
class EventLog {
  public:
    void add(Event event);
    const std::vector<Event>& events() const { return events_; }

  private:
    std::vector<Event> events_;
};

void write_events_jsonl(const std::filesystem::path& path, const EventLog& log);

/// Optional reward cost term: cost(action, pi, oscb), scaled by
/// config.reward_cost_weight. Null means zero cost, so reward = oscb.
using CostHook = std::function<double(int action, double pi, long oscb)>;

/// Everything one simulated trial run needs.
struct RunSetup {
    TrialConfig config;
    std::vector<ParticipantEnvModel> env_models;
    PolicyMode policy_mode = PolicyMode::full_pooling;
    Prior prior = Prior::deployed();
    SmoothingConfig smoothing;
    FaultPlan fault_plan;
    std::uint64_t master_seed = 0;
    CostHook cost_hook;
};

struct RunResult {
    TrialHistory history;
    EventLog events;
};

/// Day-by-day replay of the deployed pipeline: morning jobs ingest data and
/// push fresh action schedules (weekly update first on update days), decision
/// slots execute the scheduled actions against the participant environments,
/// and injected faults trigger the three fallback methods. Deterministic
/// given the setup.
RunResult run_trial(const RunSetup& setup);

/// Fallback for schedule-construction failures: every remaining decision time
/// gets probability exactly 0.5 and a fresh Bernoulli(0.5) action.
ActionSchedule apply_fallback_ii(int first_day, int horizon_days, RngStream& stream);

/// Fallback for data-retrieval failures: the record stays in the history but
/// never enters an update batch.
void apply_fallback_iii(DecisionRecord& record);

struct FaultReportRow {
    Date date;
    EventKind method = EventKind::fallback_i; // fallback_i / ii / iii
    int participants_affected = 0;
};

struct FaultReport {
    std::vector<FaultReportRow> rows;          // one per (date, method), in date order
    std::map<EventKind, int> dates_per_method; // distinct dates each method ran
    std::map<EventKind, int> participant_days_per_method;
};

FaultReport fault_report(const EventLog& log);

} // namespace mrt
