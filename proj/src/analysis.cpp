#include "mrt/analysis.hpp"

#include "mrt/errors.hpp"
#include "mrt/log.hpp"
#include "mrt/text_io.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <map>
#include <mutex>
#include <thread>

namespace mrt {

namespace {

/// Runs body(0..n-1) on a small worker pool. Results must be written to
/// per-index slots; the first exception wins and is rethrown after join.
void parallel_reps(int n, const std::function<void(int)>& body) {
    if (n <= 0)
        return;
    unsigned hw = std::thread::hardware_concurrency();
    int workers = static_cast<int>(std::max(1u, std::min(hw == 0 ? 1u : hw,
                                                         static_cast<unsigned>(n))));
    if (workers == 1) {
        for (int i = 0; i < n; ++i)
            body(i);
        return;
    }
    std::atomic<int> next{0};
    std::mutex err_mutex;
    std::exception_ptr first_error;
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w)
        pool.emplace_back([&] {
            for (;;) {
                int i = next.fetch_add(1);
                if (i >= n)
                    return;
                try {
                    body(i);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!first_error)
                        first_error = std::current_exception();
                    return;
                }
            }
        });
    for (std::thread& t : pool)
        t.join();
    if (first_error)
        std::rethrow_exception(first_error);
}

double mean_of(const std::vector<double>& values) {
    double acc = 0.0;
    for (double v : values)
        acc += v;
    return acc / static_cast<double>(values.size());
}

} // namespace

double standardized_predicted_advantage(const Vec5& mu_beta, const Mat5& sigma_beta,
                                        const AlgState& f) {
    double variance = f.dot(sigma_beta * f);
    if (!(variance > 0.0))
        throw AnalysisError("standardized advantage undefined: f' Sigma_beta f = " +
                            std::to_string(variance));
    return mu_beta.dot(f) / std::sqrt(variance);
}

AdvantageTrajectory advantage_trajectory(const std::vector<PosteriorSnapshot>& snapshots,
                                         const AlgState& f) {
    AdvantageTrajectory traj;
    int prev_tau = 0;
    for (const PosteriorSnapshot& snap : snapshots) {
        if (snap.participant_id)
            throw AnalysisError("advantage trajectory needs pooled snapshots, got a "
                                "per-participant one (participant " +
                                std::to_string(*snap.participant_id) + ")");
        if (snap.mu.size() != 15)
            throw AnalysisError("snapshot dimension " + std::to_string(snap.mu.size()) +
                                " != 15");
        if (snap.tau_index <= prev_tau)
            throw AnalysisError("snapshots must be in strictly increasing tau order");
        prev_tau = snap.tau_index;
        Vec5 mu_beta = snap.mu.segment<5>(10);
        Mat5 sigma_beta = snap.sigma.block<5, 5>(10, 10);
        traj.tau_indices.push_back(snap.tau_index);
        traj.values.push_back(standardized_predicted_advantage(mu_beta, sigma_beta, f));
    }
    return traj;
}

double interp_quantile(std::vector<double> values, double p) {
    if (values.empty())
        throw InputError("quantile of an empty sample");
    if (!(p >= 0.0 && p <= 1.0))
        throw InputError("quantile level must be in [0, 1]");
    std::sort(values.begin(), values.end());
    double pos = p * static_cast<double>(values.size() - 1);
    std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    std::size_t hi = static_cast<std::size_t>(std::ceil(pos));
    double frac = pos - static_cast<double>(lo);
    return values[lo] + frac * (values[hi] - values[lo]);
}

std::optional<double> sample_variance(const std::vector<double>& values) {
    if (values.size() < 2)
        return std::nullopt;
    double mean = mean_of(values);
    double acc = 0.0;
    for (double v : values)
        acc += (v - mean) * (v - mean);
    return acc / static_cast<double>(values.size() - 1);
}

DidWeLearnResult did_we_learn(const std::vector<PosteriorSnapshot>& reference_snapshots,
                              const RunSetup& setup, const AlgState& query_state, int reps,
                              const StateGrid& grid) {
    if (reps < 2)
        throw InputError("did_we_learn needs at least 2 reps");
    if (reps < 50)
        log_warn("did_we_learn with " + std::to_string(reps) +
                 " reps; bands are unreliable below 50");

    DidWeLearnResult result;
    result.query_state = query_state;
    result.reference = advantage_trajectory(reference_snapshots, query_state);

    // embed the query into an outcome-model state; the day-of-week and
    // day-in-trial coordinates are replaced by build_tilde_state anyway
    EnvState target;
    target << query_state(0), query_state(1), query_state(2), query_state(3), 0.0, 0.0, 1.0;
    RunSetup null_setup = setup;
    null_setup.env_models = make_null_environment(setup.env_models, target, grid);

    std::vector<AdvantageTrajectory> rep_trajectories(static_cast<std::size_t>(reps));
    parallel_reps(reps, [&](int r) {
        RunSetup rep_setup = null_setup;
        rep_setup.master_seed =
            derive_key(setup.master_seed, "rep", {static_cast<std::uint64_t>(r)});
        RunResult run = run_trial(rep_setup);
        rep_trajectories[static_cast<std::size_t>(r)] =
            advantage_trajectory(run.history.snapshots(), query_state);
    });

    result.tau_indices = rep_trajectories.front().tau_indices;
    for (const AdvantageTrajectory& traj : rep_trajectories)
        if (traj.tau_indices != result.tau_indices)
            throw AnalysisError("rep runs disagree on the update calendar");
    if (result.reference.tau_indices != result.tau_indices)
        throw AnalysisError("reference snapshots and rerun calendars do not match: " +
                            std::to_string(result.reference.tau_indices.size()) + " vs " +
                            std::to_string(result.tau_indices.size()) + " update times");

    const std::size_t num_taus = result.tau_indices.size();
    result.band.rep_values.reserve(static_cast<std::size_t>(reps));
    for (const AdvantageTrajectory& traj : rep_trajectories)
        result.band.rep_values.push_back(traj.values);
    result.band.band_low.resize(num_taus);
    result.band.band_high.resize(num_taus);
    std::vector<double> column(static_cast<std::size_t>(reps));
    for (std::size_t k = 0; k < num_taus; ++k) {
        for (int r = 0; r < reps; ++r)
            column[static_cast<std::size_t>(r)] = result.band.rep_values[static_cast<std::size_t>(r)][k];
        result.band.band_low[k] = interp_quantile(column, result.band.level_low);
        result.band.band_high[k] = interp_quantile(column, result.band.level_high);
    }
    return result;
}

RunValues value_metrics(const TrialHistory& history) {
    std::map<int, std::vector<long>> by_participant;
    for (const DecisionRecord& rec : history.records())
        by_participant[rec.point.participant_id].push_back(rec.oscb);
    if (by_participant.empty())
        throw AnalysisError("value metrics of an empty history");
    std::size_t t_count = by_participant.begin()->second.size();
    std::vector<double> averages;
    averages.reserve(by_participant.size());
    for (const auto& [pid, outcomes] : by_participant) {
        if (outcomes.size() != t_count)
            throw AnalysisError("participant " + std::to_string(pid) + " has " +
                                std::to_string(outcomes.size()) + " records, expected " +
                                std::to_string(t_count));
        double acc = 0.0;
        for (long q : outcomes)
            acc += static_cast<double>(q);
        averages.push_back(acc / static_cast<double>(outcomes.size()));
    }
    RunValues values;
    values.mean_value = mean_of(averages);
    values.q1_value = interp_quantile(averages, 0.25);
    return values;
}

PoolingComparison pooling_experiment(const RunSetup& setup, int reps) {
    if (reps < 1)
        throw InputError("pooling_experiment needs at least 1 rep");
    PoolingComparison comparison;
    comparison.reps = reps;
    comparison.full_pooling_reps.resize(static_cast<std::size_t>(reps));
    comparison.no_pooling_reps.resize(static_cast<std::size_t>(reps));
    parallel_reps(reps, [&](int r) {
        std::uint64_t rep_seed =
            derive_key(setup.master_seed, "rep", {static_cast<std::uint64_t>(r)});
        for (PolicyMode mode : {PolicyMode::full_pooling, PolicyMode::no_pooling}) {
            RunSetup rep_setup = setup;
            rep_setup.policy_mode = mode;
            rep_setup.master_seed = rep_seed; // shared: paired environment draws
            RunResult run = run_trial(rep_setup);
            RunValues values = value_metrics(run.history);
            if (mode == PolicyMode::full_pooling)
                comparison.full_pooling_reps[static_cast<std::size_t>(r)] = values;
            else
                comparison.no_pooling_reps[static_cast<std::size_t>(r)] = values;
        }
    });

    auto summarize = [reps](const std::vector<RunValues>& per_rep) {
        std::vector<double> means, q1s;
        means.reserve(per_rep.size());
        q1s.reserve(per_rep.size());
        for (const RunValues& v : per_rep) {
            means.push_back(v.mean_value);
            q1s.push_back(v.q1_value);
        }
        ValueSummary s;
        s.mean = mean_of(means);
        s.q1 = mean_of(q1s);
        s.single_rep = reps < 2;
        if (!s.single_rep) {
            s.mean_se = std::sqrt(*sample_variance(means) / reps);
            s.q1_se = std::sqrt(*sample_variance(q1s) / reps);
        }
        return s;
    };
    comparison.full_pooling = summarize(comparison.full_pooling_reps);
    comparison.no_pooling = summarize(comparison.no_pooling_reps);
    return comparison;
}

OutcomeMetrics outcome_metrics(const std::vector<DecisionRecord>& records) {
    if (records.empty())
        throw AnalysisError("outcome metrics of an empty history");
    std::map<int, std::vector<long>> by_participant;
    for (const DecisionRecord& rec : records)
        by_participant[rec.point.participant_id].push_back(rec.oscb);

    OutcomeMetrics m;
    long zero_count = 0;
    std::vector<double> all_nonzero;
    std::vector<double> nonzero_avgs;    // per participant with >= 1 nonzero
    std::vector<double> participant_avgs; // per participant, zeros included
    std::vector<double> participant_vars;
    for (const auto& [pid, outcomes] : by_participant) {
        std::vector<double> nonzero;
        std::vector<double> all;
        all.reserve(outcomes.size());
        for (long q : outcomes) {
            all.push_back(static_cast<double>(q));
            if (q == 0)
                ++zero_count;
            else {
                nonzero.push_back(static_cast<double>(q));
                all_nonzero.push_back(static_cast<double>(q));
            }
        }
        participant_avgs.push_back(mean_of(all));
        if (auto var = sample_variance(all))
            participant_vars.push_back(*var);
        if (nonzero.empty()) {
            m.participants_without_nonzero.push_back(pid);
            log_warn("participant " + std::to_string(pid) +
                     " has no nonzero outcomes; skipped from nonzero averages");
        } else {
            nonzero_avgs.push_back(mean_of(nonzero));
        }
    }
    m.proportion_zero = static_cast<double>(zero_count) / static_cast<double>(records.size());
    if (!nonzero_avgs.empty())
        m.avg_of_avg_nonzero_participant_oscb = mean_of(nonzero_avgs);
    if (!all_nonzero.empty())
        m.avg_nonzero_oscb_in_trial = mean_of(all_nonzero);
    m.var_of_avg_nonzero_participant_oscb = sample_variance(nonzero_avgs);
    m.var_nonzero_oscb_in_trial = sample_variance(all_nonzero);
    m.var_of_avg_participant_oscb = sample_variance(participant_avgs);
    if (!participant_vars.empty())
        m.avg_of_var_participant_oscb = mean_of(participant_vars);
    return m;
}

OutcomeMetrics outcome_metrics(const TrialHistory& history) {
    return outcome_metrics(history.records());
}

ErrorMetrics error_metrics(const TrialHistory& sim, const TrialHistory& ref) {
    std::map<std::pair<int, int>, long> ref_outcomes;
    for (const DecisionRecord& rec : ref.records())
        ref_outcomes[{rec.point.participant_id, rec.point.t}] = rec.oscb;

    std::vector<std::string> missing;
    double sq_acc = 0.0;
    double abs_acc = 0.0;
    std::size_t n = 0;
    std::map<std::pair<int, int>, bool> seen;
    for (const DecisionRecord& rec : sim.records()) {
        auto key = std::make_pair(rec.point.participant_id, rec.point.t);
        auto it = ref_outcomes.find(key);
        if (it == ref_outcomes.end()) {
            if (missing.size() < 5)
                missing.push_back("(" + std::to_string(key.first) + "," +
                                  std::to_string(key.second) + ") missing from reference");
            continue;
        }
        seen[key] = true;
        double diff = static_cast<double>(rec.oscb) - static_cast<double>(it->second);
        sq_acc += diff * diff;
        abs_acc += std::abs(diff);
        ++n;
    }
    for (const auto& [key, q] : ref_outcomes)
        if (seen.find(key) == seen.end() && missing.size() < 5)
            missing.push_back("(" + std::to_string(key.first) + "," +
                              std::to_string(key.second) + ") missing from simulation");
    if (!missing.empty() || n != ref_outcomes.size() || n != sim.records().size()) {
        std::string msg = "histories are not aligned on (participant, t):";
        for (const std::string& s : missing)
            msg += " " + s;
        throw AnalysisError(msg);
    }
    if (n == 0)
        throw AnalysisError("error metrics of empty histories");
    ErrorMetrics e;
    e.mse = sq_acc / static_cast<double>(n);
    e.rmse = std::sqrt(e.mse);
    e.mae = abs_acc / static_cast<double>(n);
    return e;
}

// --- output files ---

namespace {

void append_g17_array(std::string& out, const std::vector<double>& values) {
    out += '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i > 0)
            out += ',';
        out += fmt_g17(values[i]);
    }
    out += ']';
}

} // namespace

void write_dwl_json(const std::filesystem::path& path, const DidWeLearnResult& result) {
    std::string out = "{\"state\":[";
    for (int i = 0; i < 5; ++i) {
        if (i > 0)
            out += ',';
        out += fmt_g17(result.query_state(i));
    }
    out += "],\"taus\":[";
    for (std::size_t i = 0; i < result.tau_indices.size(); ++i) {
        if (i > 0)
            out += ',';
        out += std::to_string(result.tau_indices[i]);
    }
    out += "],\"reference\":";
    append_g17_array(out, result.reference.values);
    out += ",\"band_low\":";
    append_g17_array(out, result.band.band_low);
    out += ",\"band_high\":";
    append_g17_array(out, result.band.band_high);
    out += ",\"rep_values\":[";
    for (std::size_t r = 0; r < result.band.rep_values.size(); ++r) {
        if (r > 0)
            out += ',';
        append_g17_array(out, result.band.rep_values[r]);
    }
    out += "]}\n";
    write_text_file(path, out);
}

void write_pooling_csv(const std::filesystem::path& path, const PoolingComparison& comparison) {
    std::string out = "mode,mean,mean_se,q1,q1_se\n";
    auto row = [&out](const std::string& mode, const ValueSummary& s) {
        out += mode + "," + fmt_g17(s.mean) + "," + fmt_g17(s.mean_se) + "," + fmt_g17(s.q1) +
               "," + fmt_g17(s.q1_se) + "\n";
    };
    row("full_pooling", comparison.full_pooling);
    row("no_pooling", comparison.no_pooling);
    write_text_file(path, out);
}

void write_metrics_json(const std::filesystem::path& path, const OutcomeMetrics& metrics,
                        const std::optional<ErrorMetrics>& errors) {
    auto opt = [](const std::optional<double>& v) { return v ? fmt_g17(*v) : "null"; };
    std::string out = "{\"proportion_zero\":" + fmt_g17(metrics.proportion_zero);
    out += ",\"avg_of_avg_nonzero_participant_oscb\":" +
           opt(metrics.avg_of_avg_nonzero_participant_oscb);
    out += ",\"avg_nonzero_oscb_in_trial\":" + opt(metrics.avg_nonzero_oscb_in_trial);
    out += ",\"var_of_avg_nonzero_participant_oscb\":" +
           opt(metrics.var_of_avg_nonzero_participant_oscb);
    out += ",\"var_nonzero_oscb_in_trial\":" + opt(metrics.var_nonzero_oscb_in_trial);
    out += ",\"var_of_avg_participant_oscb\":" + opt(metrics.var_of_avg_participant_oscb);
    out += ",\"avg_of_var_participant_oscb\":" + opt(metrics.avg_of_var_participant_oscb);
    if (errors) {
        out += ",\"mse\":" + fmt_g17(errors->mse);
        out += ",\"rmse\":" + fmt_g17(errors->rmse);
        out += ",\"mae\":" + fmt_g17(errors->mae);
    } else {
        out += ",\"mse\":null,\"rmse\":null,\"mae\":null";
    }
    out += "}\n";
    write_text_file(path, out);
}

} // namespace mrt
