#include "mrt/orchestrator.hpp"

#include "mrt/errors.hpp"
#include "mrt/log.hpp"
#include "mrt/text_io.hpp"

#include "json.hpp"

#include <algorithm>
#include <set>
#include <sstream>

namespace mrt {

std::string to_string(FaultType type) {
    switch (type) {
    case FaultType::service_down: return "service_down";
    case FaultType::schedule_construction_failure: return "schedule_construction_failure";
    case FaultType::data_retrieval_failure: return "data_retrieval_failure";
    }
    throw InputError("bad fault type");
}

FaultType fault_type_from_string(const std::string& s) {
    if (s == "service_down")
        return FaultType::service_down;
    if (s == "schedule_construction_failure")
        return FaultType::schedule_construction_failure;
    if (s == "data_retrieval_failure")
        return FaultType::data_retrieval_failure;
    throw DataError("unknown fault type '" + s + "'");
}

FaultPlan read_fault_plan_json(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    if (!j.is_array())
        throw DataError(path.string() + ": expected a JSON array of fault entries");
    FaultPlan plan;
    for (const auto& je : j) {
        for (auto it = je.begin(); it != je.end(); ++it)
            if (it.key() != "date" && it.key() != "fault_type" && it.key() != "participants")
                throw DataError(path.string() + ": unknown fault key '" + it.key() + "'");
        try {
            FaultEntry e;
            e.date = Date::parse(je.at("date").get<std::string>());
            e.type = fault_type_from_string(je.at("fault_type").get<std::string>());
            const auto& jp = je.at("participants");
            if (jp.is_string() && jp.get<std::string>() == "all")
                e.participants = std::nullopt;
            else if (jp.is_array())
                e.participants = jp.get<std::vector<int>>();
            else
                throw DataError("participants must be an id array or \"all\"");
            plan.push_back(std::move(e));
        } catch (const nlohmann::json::exception& ex) {
            throw DataError(path.string() + ": " + ex.what());
        } catch (const InputError& ex) {
            throw DataError(path.string() + ": " + ex.what());
        }
    }
    return plan;
}

void write_fault_plan_json(const std::filesystem::path& path, const FaultPlan& plan) {
    std::string out = "[\n";
    for (std::size_t i = 0; i < plan.size(); ++i) {
        const FaultEntry& e = plan[i];
        out += "{\"date\":\"" + e.date.to_string() + "\",\"fault_type\":\"" + to_string(e.type) +
               "\",\"participants\":";
        if (!e.participants) {
            out += "\"all\"";
        } else {
            out += '[';
            for (std::size_t k = 0; k < e.participants->size(); ++k) {
                if (k > 0)
                    out += ',';
                out += std::to_string((*e.participants)[k]);
            }
            out += ']';
        }
        out += i + 1 < plan.size() ? "},\n" : "}\n";
    }
    out += "]\n";
    write_text_file(path, out);
}

std::string to_string(EventKind kind) {
    switch (kind) {
    case EventKind::recruit: return "recruit";
    case EventKind::daily_job: return "daily_job";
    case EventKind::schedule_pushed: return "schedule_pushed";
    case EventKind::fallback_i: return "fallback_i";
    case EventKind::fallback_ii: return "fallback_ii";
    case EventKind::fallback_iii: return "fallback_iii";
    case EventKind::policy_update: return "policy_update";
    case EventKind::fault_injected: return "fault_injected";
    }
    throw InputError("bad event kind");
}

void EventLog::add(Event event) {
    if (!events_.empty() && event.date < events_.back().date)
        throw InputError("events must be appended in chronological order");
    events_.push_back(std::move(event));
}

void write_events_jsonl(const std::filesystem::path& path, const EventLog& log) {
    std::string out;
    for (const Event& e : log.events()) {
        out += "{\"date\":\"" + e.date.to_string() + "\",\"event\":\"" + to_string(e.kind) + "\"";
        if (e.participant_id)
            out += ",\"participant_id\":" + std::to_string(*e.participant_id);
        out += ",\"detail\":\"" + e.detail + "\"}\n";
    }
    write_text_file(path, out);
}

ActionSchedule apply_fallback_ii(int first_day, int horizon_days, RngStream& stream) {
    if (first_day < 1 || horizon_days < 1)
        throw InputError("fallback schedule needs a positive day range");
    ActionSchedule schedule;
    schedule.entries.reserve(static_cast<std::size_t>(horizon_days) * 2);
    for (int day = first_day; day < first_day + horizon_days; ++day)
        for (int slot = 0; slot < 2; ++slot) {
            ScheduleEntry e;
            e.day = day;
            e.slot = slot;
            e.pi = 0.5;
            e.action = select_action(0.5, stream);
            e.provenance = EntryProvenance::fallback;
            schedule.entries.push_back(e);
        }
    return schedule;
}

void apply_fallback_iii(DecisionRecord& record) { record.excluded_from_update = true; }

namespace {

struct ParticipantState {
    Date start;
    const ParticipantEnvModel* model = nullptr;
    std::array<double, kWindowLen> oscb_win{};
    std::array<double, kWindowLen> act_win{};
    int app_yesterday = 0;
    std::optional<ActionSchedule> last_pushed;
    PosteriorState posterior; // per-participant policy (no-pooling mode)

    bool active(Date d, int days) const { return d >= start && d - start < days; }
    int day_index(Date d) const { return d - start + 1; }
};

void push_window(std::array<double, kWindowLen>& win, double v) {
    for (int i = kWindowLen - 1; i > 0; --i)
        win[static_cast<std::size_t>(i)] = win[static_cast<std::size_t>(i - 1)];
    win[0] = v;
}

std::vector<BatchObservation> to_observations(const std::vector<BatchItem>& items) {
    std::vector<BatchObservation> obs;
    obs.reserve(items.size());
    for (const BatchItem& item : items)
        obs.push_back({design_vector(item.alg_state, item.action, item.pi), item.reward});
    return obs;
}

} // namespace

RunResult run_trial(const RunSetup& setup) {
    const TrialConfig& config = setup.config;
    config.validate();
    setup.prior.validate();
    setup.smoothing.validate();
    if (static_cast<int>(setup.env_models.size()) < config.num_participants)
        throw InputError("need at least " + std::to_string(config.num_participants) +
                         " environment models, got " + std::to_string(setup.env_models.size()));
    for (const ParticipantEnvModel& m : setup.env_models)
        m.validate();

    const auto recruits = recruitment_schedule(config);
    const auto taus = update_times(config, recruits);
    Date first_day = config.trial_start_date;
    Date last_day = recruits.back().second + (config.days_per_participant - 1);
    for (const FaultEntry& f : setup.fault_plan) {
        if (f.date < first_day || f.date > last_day)
            throw InputError("fault on " + f.date.to_string() + " is outside the trial span " +
                             first_day.to_string() + ".." + last_day.to_string());
        if (f.participants)
            for (int pid : *f.participants)
                if (pid < 1 || pid > config.num_participants)
                    throw InputError("fault participant id " + std::to_string(pid) +
                                     " outside 1.." + std::to_string(config.num_participants));
    }

    RunResult result;
    std::map<int, ParticipantState> participants;
    PosteriorState pooled = PosteriorState::from_prior(setup.prior);
    std::size_t tau_cursor = 0;
    const std::uint64_t seed = setup.master_seed;
    const int days = config.days_per_participant;

    for (Date d = first_day; d <= last_day; d = d + 1) {
        for (const auto& [pid, start] : recruits) {
            if (start != d)
                continue;
            ParticipantState st;
            st.start = start;
            st.model = &setup.env_models[static_cast<std::size_t>(pid - 1)];
            st.posterior = PosteriorState::from_prior(setup.prior);
            participants.emplace(pid, std::move(st));
            result.history.set_start_date(pid, start);
            result.events.add({d, EventKind::recruit, pid, ""});
        }

        std::vector<int> active;
        for (const auto& [pid, st] : participants)
            if (st.active(d, days))
                active.push_back(pid);
        if (active.empty())
            continue;
        result.events.add({d, EventKind::daily_job, std::nullopt, ""});

        // today's faults, resolved against the active set
        std::set<int> down_pids, construction_pids, retrieval_pids;
        for (const FaultEntry& f : setup.fault_plan) {
            if (f.date != d)
                continue;
            std::vector<int> hit;
            for (int pid : active) {
                bool listed = !f.participants ||
                              std::find(f.participants->begin(), f.participants->end(), pid) !=
                                  f.participants->end();
                if (listed)
                    hit.push_back(pid);
            }
            if (hit.empty())
                continue;
            result.events.add({d, EventKind::fault_injected, std::nullopt,
                               to_string(f.type) + " affecting " +
                                   std::to_string(hit.size()) + " participant(s)"});
            auto& bucket = f.type == FaultType::service_down ? down_pids
                           : f.type == FaultType::schedule_construction_failure
                               ? construction_pids
                               : retrieval_pids;
            bucket.insert(hit.begin(), hit.end());
        }

        // weekly policy update happens before any schedule is built
        if (tau_cursor < taus.size() && taus[tau_cursor].date == d) {
            const UpdateTime& tau = taus[tau_cursor];
            auto batch = batch_for_update(result.history, d);
            if (setup.policy_mode == PolicyMode::full_pooling) {
                pooled = posterior_update(setup.prior, to_observations(batch), tau.tau_index);
                PosteriorSnapshot snap;
                snap.tau_index = tau.tau_index;
                snap.date = d;
                snap.mu = pooled.mu;
                snap.sigma = pooled.sigma;
                result.history.add_snapshot(snap);
            } else {
                for (auto& [pid, st] : participants) {
                    std::vector<BatchItem> own;
                    for (const BatchItem& item : batch)
                        if (item.participant_id == pid)
                            own.push_back(item);
                    st.posterior =
                        posterior_update(setup.prior, to_observations(own), tau.tau_index);
                    PosteriorSnapshot snap;
                    snap.tau_index = tau.tau_index;
                    snap.date = d;
                    snap.participant_id = pid;
                    snap.mu = st.posterior.mu;
                    snap.sigma = st.posterior.sigma;
                    result.history.add_snapshot(snap);
                }
            }
            result.events.add({d, EventKind::policy_update, std::nullopt,
                               "tau=" + std::to_string(tau.tau_index) + " batch=" +
                                   std::to_string(batch.size())});
            ++tau_cursor;
        }

        for (int pid : active) {
            ParticipantState& st = participants.at(pid);
            const int day = st.day_index(d);
            const int horizon = days - day + 1;
            const std::uint64_t upid = static_cast<std::uint64_t>(pid);
            const std::uint64_t uday = static_cast<std::uint64_t>(day);

            RawObservables raw;
            raw.slot = 0;
            raw.past_oscb = st.oscb_win;
            raw.past_actions = st.act_win;
            raw.opened_app_prior_day = st.app_yesterday;
            raw.is_weekend = d.is_weekend() ? 1 : 0;
            raw.day_in_trial = day;

            // decide today's delivery path
            const ActionSchedule* schedule = nullptr;
            FallbackTag tag = FallbackTag::none;
            if (down_pids.count(pid) != 0 && st.last_pushed) {
                schedule = &*st.last_pushed;
                tag = FallbackTag::method_i;
                result.events.add({d, EventKind::fallback_i, pid,
                                   "using schedule pushed on day " +
                                       std::to_string(st.last_pushed->entries.front().day)});
            } else if (down_pids.count(pid) != 0 || construction_pids.count(pid) != 0) {
                RngStream fs = derive_stream(seed, "fallback", {upid, uday});
                st.last_pushed = apply_fallback_ii(day, horizon, fs);
                schedule = &*st.last_pushed;
                tag = FallbackTag::method_ii;
                result.events.add({d, EventKind::fallback_ii, pid,
                                   down_pids.count(pid) != 0 ? "service down, nothing pushed yet"
                                                             : "schedule construction failed"});
            } else {
                const PosteriorState& post =
                    setup.policy_mode == PolicyMode::full_pooling ? pooled : st.posterior;
                RngStream ss = derive_stream(seed, "policy", {upid, uday});
                st.last_pushed = make_schedule(post, raw, day, horizon, setup.smoothing, ss);
                schedule = &*st.last_pushed;
                result.events.add({d, EventKind::schedule_pushed, pid,
                                   "days " + std::to_string(day) + ".." + std::to_string(days)});
            }

            const bool excluded = retrieval_pids.count(pid) != 0;
            long day_oscb[2] = {0, 0};
            int day_action[2] = {0, 0};
            for (int slot = 0; slot < 2; ++slot) {
                raw.slot = slot;
                const ScheduleEntry* entry = schedule->find(day, slot);
                if (entry == nullptr)
                    throw NumericalError("schedule for participant " + std::to_string(pid) +
                                         " does not cover day " + std::to_string(day));
                const int t = 2 * (day - 1) + slot + 1;
                RngStream outcome_stream =
                    derive_stream(seed, "outcome", {upid, static_cast<std::uint64_t>(t)});
                DecisionRecord rec;
                rec.point = {pid, t, d, slot};
                rec.alg_state = build_alg_state(raw);
                rec.env_state = build_env_state(raw, days);
                rec.pi = entry->pi;
                rec.action = entry->action;
                rec.oscb = zip_sample(*st.model, rec.env_state, rec.action, outcome_stream);
                double cost =
                    setup.cost_hook ? setup.cost_hook(rec.action, rec.pi, rec.oscb) : 0.0;
                rec.reward = reward_value(rec.oscb, config.reward_cost_weight, cost);
                rec.fallback = tag;
                if (excluded)
                    apply_fallback_iii(rec);
                result.history.add_record(rec);
                day_oscb[slot] = rec.oscb;
                day_action[slot] = rec.action;
            }
            if (excluded)
                result.events.add({d, EventKind::fallback_iii, pid, "day's data excluded"});

            push_window(st.oscb_win, static_cast<double>(day_oscb[0]));
            push_window(st.oscb_win, static_cast<double>(day_oscb[1]));
            push_window(st.act_win, static_cast<double>(day_action[0]));
            push_window(st.act_win, static_cast<double>(day_action[1]));
            RngStream app_stream = derive_stream(seed, "app", {upid, uday});
            st.app_yesterday = app_open_sample(st.model->p_app, app_stream);
        }
    }
    return result;
}

FaultReport fault_report(const EventLog& log) {
    FaultReport report;
    std::map<std::pair<std::int32_t, EventKind>, std::set<int>> cells;
    for (const Event& e : log.events()) {
        if (e.kind != EventKind::fallback_i && e.kind != EventKind::fallback_ii &&
            e.kind != EventKind::fallback_iii)
            continue;
        if (!e.participant_id)
            continue;
        cells[{e.date.serial(), e.kind}].insert(*e.participant_id);
    }
    for (const auto& [key, pids] : cells) {
        FaultReportRow row;
        row.date = Date(key.first);
        row.method = key.second;
        row.participants_affected = static_cast<int>(pids.size());
        report.rows.push_back(row);
        report.dates_per_method[key.second] += 1;
        report.participant_days_per_method[key.second] += row.participants_affected;
    }
    return report;
}

} // namespace mrt
