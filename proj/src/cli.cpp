#include "mrt/cli.hpp"

#include "mrt/analysis.hpp"
#include "mrt/environment.hpp"
#include "mrt/errors.hpp"
#include "mrt/log.hpp"
#include "mrt/orchestrator.hpp"
#include "mrt/run_config.hpp"
#include "mrt/text_io.hpp"
#include "mrt/trial.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace fs = std::filesystem;

namespace mrt {

namespace {

AlgState parse_state_literal(const std::string& literal) {
    auto parts = split_csv_line(literal);
    if (parts.size() != 5)
        throw InputError("state literal must have 5 comma-separated values, e.g. "
                         "\"1,-0.7,-0.6,0,1\"; got '" + literal + "'");
    AlgState f;
    for (int i = 0; i < 5; ++i) {
        try {
            f(i) = parse_double(parts[static_cast<std::size_t>(i)], "state component");
        } catch (const DataError& e) {
            throw InputError(e.what()); // a bad literal is a usage error
        }
    }
    return f;
}

struct CommonFlags {
    std::string config_path;
    std::string models_path;
    std::string faults_path;
    std::string out_dir;
    std::uint64_t seed = 0;
    int reps = 0;

    CLI::Option* seed_opt = nullptr;
    CLI::Option* reps_opt = nullptr;
    CLI::Option* out_opt = nullptr;
    CLI::Option* faults_opt = nullptr;

    void add_config(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "run configuration JSON");
        seed_opt = cmd->add_option("--seed", seed, "master seed (overrides config)");
        out_opt = cmd->add_option("--out", out_dir, "output directory (overrides config)");
    }
    void add_models(CLI::App* cmd) {
        cmd->add_option("--models", models_path, "participant environment models JSON")
            ->required();
    }
    void add_reps(CLI::App* cmd) {
        reps_opt = cmd->add_option("--reps", reps, "Monte Carlo reps (overrides config)");
    }
    void add_faults(CLI::App* cmd) {
        faults_opt = cmd->add_option("--faults", faults_path,
                                     "fault plan JSON (overrides config fault_plan)");
    }

    RunConfig merged_config() const {
        RunConfig cfg;
        if (!config_path.empty())
            cfg = load_run_config(config_path);
        if (seed_opt != nullptr && seed_opt->count() > 0)
            cfg.trial.master_seed = seed;
        if (reps_opt != nullptr && reps_opt->count() > 0)
            cfg.reps = reps;
        if (out_opt != nullptr && out_opt->count() > 0)
            cfg.output_dir = out_dir;
        if (faults_opt != nullptr && faults_opt->count() > 0)
            cfg.fault_plan_path = faults_path;
        cfg.validate();
        return cfg;
    }
};

RunSetup build_setup(const RunConfig& cfg, std::vector<ParticipantEnvModel> models) {
    RunSetup setup;
    setup.config = cfg.trial;
    setup.env_models = std::move(models);
    setup.policy_mode = cfg.policy_mode;
    setup.prior = cfg.prior;
    setup.smoothing = cfg.smoothing;
    setup.master_seed = cfg.trial.master_seed;
    if (cfg.fault_plan_path)
        setup.fault_plan = read_fault_plan_json(*cfg.fault_plan_path);
    return setup;
}

int cmd_gen_env(const CommonFlags& flags) {
    RunConfig cfg = flags.merged_config();
    auto models = gen_synthetic_models(cfg.trial.num_participants, cfg.trial.master_seed);
    fs::path out = fs::path(cfg.output_dir) / "models.json";
    write_models_json(out, models);

    EnvState reference;
    reference << 0, 0, 0, 0, 0, 0, 1;
    double mean0 = 0.0, mean1 = 0.0, papp = 0.0;
    for (const ParticipantEnvModel& m : models) {
        mean0 += zip_mean(m, reference, 0);
        mean1 += zip_mean(m, reference, 1);
        papp += m.p_app;
    }
    double n = static_cast<double>(models.size());
    std::printf("wrote %zu models to %s\n", models.size(), out.string().c_str());
    std::printf("calibration at the reference state: mean outcome %.2f untreated, "
                "%.2f treated; mean p_app %.2f\n",
                mean0 / n, mean1 / n, papp / n);
    return 0;
}

int cmd_fit_env(const CommonFlags& flags, const std::string& data_csv, int restarts) {
    RunConfig cfg = flags.merged_config();
    if (restarts < 1)
        throw InputError("--restarts must be positive");
    TrialHistory history = read_history_csv(data_csv);
    std::map<int, std::vector<ZipDatum>> data;
    std::map<int, std::pair<double, int>> app_days; // sum of day indicators, day count
    for (const DecisionRecord& rec : history.records()) {
        data[rec.point.participant_id].push_back({rec.env_state, rec.action, rec.oscb});
        if (rec.point.slot == 0) {
            auto& [sum, count] = app_days[rec.point.participant_id];
            sum += rec.alg_state(3);
            ++count;
        }
    }
    if (data.empty())
        throw DataError(data_csv + " has no decision records");

    std::vector<ParticipantEnvModel> models;
    int max_pid = data.rbegin()->first;
    for (int pid = 1; pid <= max_pid; ++pid) {
        auto it = data.find(pid);
        if (it == data.end()) {
            log_warn("participant " + std::to_string(pid) + " has no records; skipped");
            continue;
        }
        RngStream stream =
            derive_stream(cfg.trial.master_seed, "fit", {static_cast<std::uint64_t>(pid)});
        MapFitResult fit = map_fit(it->second, restarts, stream);
        fit.model.participant_id = pid;
        const auto& [sum, count] = app_days.at(pid);
        fit.model.p_app = count > 0 ? sum / count : 0.5;
        fit.model.fit_log_posterior = fit.log_posterior;
        models.push_back(fit.model);
        std::printf("participant %d: %zu observations, log posterior %.3f (restart %d%s)\n",
                    pid, it->second.size(), fit.log_posterior, fit.best_restart,
                    fit.converged ? "" : ", not converged");
    }
    fs::path out = fs::path(cfg.output_dir) / "models.json";
    write_models_json(out, models);
    std::printf("wrote %zu fitted models to %s\n", models.size(), out.string().c_str());
    return 0;
}

int cmd_simulate(const CommonFlags& flags) {
    RunConfig cfg = flags.merged_config();
    RunSetup setup = build_setup(cfg, read_models_json(flags.models_path));
    RunResult run = run_trial(setup);

    fs::path dir(cfg.output_dir);
    write_history_csv(dir / "history.csv", run.history);
    write_snapshots_jsonl(dir / "snapshots.jsonl", run.history.snapshots());
    write_events_jsonl(dir / "events.jsonl", run.events);

    RunValues values = value_metrics(run.history);
    std::printf("simulated %zu decisions for %d participants (%s)\n",
                run.history.records().size(), cfg.trial.num_participants,
                to_string(cfg.policy_mode).c_str());
    std::printf("mean participant outcome %.3f, first quartile %.3f\n", values.mean_value,
                values.q1_value);
    FaultReport report = fault_report(run.events);
    for (const FaultReportRow& row : report.rows)
        std::printf("%s %s affected %d participant(s)\n", row.date.to_string().c_str(),
                    to_string(row.method).c_str(), row.participants_affected);
    std::printf("outputs in %s\n", dir.string().c_str());
    return 0;
}

int cmd_pooling(const CommonFlags& flags) {
    RunConfig cfg = flags.merged_config();
    RunSetup setup = build_setup(cfg, read_models_json(flags.models_path));
    PoolingComparison comparison = pooling_experiment(setup, cfg.reps);
    fs::path out = fs::path(cfg.output_dir) / "pooling.csv";
    write_pooling_csv(out, comparison);
    auto print_row = [](const char* mode, const ValueSummary& s) {
        std::printf("%-13s mean %.3f (%.3f)  q1 %.3f (%.3f)\n", mode, s.mean, s.mean_se, s.q1,
                    s.q1_se);
    };
    std::printf("paired comparison over %d reps\n", comparison.reps);
    print_row("full_pooling", comparison.full_pooling);
    print_row("no_pooling", comparison.no_pooling);
    if (comparison.full_pooling.single_rep)
        std::printf("single rep: standard errors reported as 0\n");
    std::printf("wrote %s\n", out.string().c_str());
    return 0;
}

int cmd_did_we_learn(const CommonFlags& flags, const std::string& reference_path,
                     const std::string& state_literal) {
    RunConfig cfg = flags.merged_config();
    AlgState query = parse_state_literal(state_literal);
    auto reference = read_snapshots_jsonl(reference_path);
    RunSetup setup = build_setup(cfg, read_models_json(flags.models_path));
    DidWeLearnResult result = did_we_learn(reference, setup, query, cfg.reps,
                                           default_state_grid());
    fs::path out = fs::path(cfg.output_dir) / "dwl.json";
    write_dwl_json(out, result);

    std::size_t inside = 0;
    for (std::size_t k = 0; k < result.tau_indices.size(); ++k)
        if (result.reference.values[k] >= result.band.band_low[k] &&
            result.reference.values[k] <= result.band.band_high[k])
            ++inside;
    std::printf("reference trajectory inside the null band at %zu of %zu update times\n",
                inside, result.tau_indices.size());
    std::size_t last = result.tau_indices.size() - 1;
    std::printf("final update: reference %.4f, null band [%.4f, %.4f]\n",
                result.reference.values[last], result.band.band_low[last],
                result.band.band_high[last]);
    std::printf("wrote %s\n", out.string().c_str());
    return 0;
}

int cmd_metrics(const CommonFlags& flags, const std::string& sim_path,
                const std::string& ref_path) {
    RunConfig cfg = flags.merged_config();
    TrialHistory sim = read_history_csv(sim_path);
    TrialHistory ref = read_history_csv(ref_path);
    OutcomeMetrics metrics = outcome_metrics(sim);
    ErrorMetrics errors = error_metrics(sim, ref);
    fs::path out = fs::path(cfg.output_dir) / "metrics.json";
    write_metrics_json(out, metrics, errors);
    std::printf("proportion of zero-outcome decisions %.4f\n", metrics.proportion_zero);
    if (metrics.avg_nonzero_oscb_in_trial)
        std::printf("average nonzero outcome %.3f\n", *metrics.avg_nonzero_oscb_in_trial);
    std::printf("MSE %.4f  RMSE %.4f  MAE %.4f\n", errors.mse, errors.rmse, errors.mae);
    std::printf("wrote %s\n", out.string().c_str());
    return 0;
}

} // namespace

int run_cli(int argc, char** argv) {
    CLI::App app{"simulation laboratory for an online-RL mobile health trial"};
    app.require_subcommand(1);

    CommonFlags gen_flags;
    CLI::App* gen = app.add_subcommand("gen-env", "generate synthetic participant models");
    gen_flags.add_config(gen);

    CommonFlags fit_flags;
    std::string fit_csv;
    int fit_restarts = 5;
    CLI::App* fit = app.add_subcommand("fit-env", "fit participant models to a history CSV");
    fit->add_option("data", fit_csv, "history CSV to fit")->required();
    fit->add_option("--restarts", fit_restarts, "optimizer restarts per participant");
    fit_flags.add_config(fit);

    CommonFlags sim_flags;
    CLI::App* sim = app.add_subcommand("simulate", "run one simulated trial");
    sim_flags.add_config(sim);
    sim_flags.add_models(sim);
    sim_flags.add_faults(sim);

    CommonFlags pool_flags;
    CLI::App* pool = app.add_subcommand("pooling", "paired full- vs no-pooling comparison");
    pool_flags.add_config(pool);
    pool_flags.add_models(pool);
    pool_flags.add_reps(pool);

    CommonFlags dwl_flags;
    std::string dwl_reference;
    std::string dwl_state;
    CLI::App* dwl = app.add_subcommand("did-we-learn", "null-resampling learning diagnostic");
    dwl->add_option("reference", dwl_reference, "posterior snapshots JSONL of the reference run")
        ->required();
    dwl->add_option("--state", dwl_state, "query state f(s) as \"1,-0.7,-0.6,0,1\"")->required();
    dwl_flags.add_config(dwl);
    dwl_flags.add_models(dwl);
    dwl_flags.add_reps(dwl);

    CommonFlags met_flags;
    std::string met_sim, met_ref;
    CLI::App* met = app.add_subcommand("metrics", "outcome and error metrics for two histories");
    met->add_option("simulated", met_sim, "simulated history CSV")->required();
    met->add_option("reference", met_ref, "reference history CSV")->required();
    met_flags.add_config(met);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (gen->parsed())
            return cmd_gen_env(gen_flags);
        if (fit->parsed())
            return cmd_fit_env(fit_flags, fit_csv, fit_restarts);
        if (sim->parsed())
            return cmd_simulate(sim_flags);
        if (pool->parsed())
            return cmd_pooling(pool_flags);
        if (dwl->parsed())
            return cmd_did_we_learn(dwl_flags, dwl_reference, dwl_state);
        if (met->parsed())
            return cmd_metrics(met_flags, met_sim, met_ref);
    } catch (const InputError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 1;
}

} // namespace mrt
