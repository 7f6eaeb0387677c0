// End-to-end acceptance gate. Each case checks one release criterion against
// an independent oracle or a frozen fixture and prints a PASS/FAIL line, so
// running this binary gives a one-screen release summary. Tolerances and
// seeds are pinned here on purpose: a change that moves any of them is a
// behaviour change and should be reviewed as one.

#include "doctest.h"

#include "mrt/analysis.hpp"
#include "mrt/bandit.hpp"
#include "mrt/environment.hpp"
#include "mrt/errors.hpp"
#include "mrt/features.hpp"
#include "mrt/orchestrator.hpp"
#include "mrt/rng.hpp"
#include "mrt/text_io.hpp"
#include "mrt/trial.hpp"

#include <Eigen/Dense>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <set>
#include <string>
#include <unistd.h>
#include <utility>
#include <vector>

using namespace mrt;
namespace fs = std::filesystem;

namespace {

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

void report(int number, bool ok, const char* what, double seconds) {
    std::printf("[%s] criterion %d: %s (%.1f s)\n", ok ? "PASS" : "FAIL", number, what, seconds);
    std::fflush(stdout);
}

#define GATE(cond)                                                                               \
    do {                                                                                         \
        bool gate_ok_ = static_cast<bool>(cond);                                                 \
        CHECK_MESSAGE(gate_ok_, #cond);                                                          \
        ok = ok && gate_ok_;                                                                     \
    } while (0)

DecisionRecord quick_record(int pid, int t, long oscb) {
    DecisionRecord rec;
    rec.point = {pid, t, Date::from_ymd(2023, 9, 1) + (t - 1) / 2, (t - 1) % 2};
    rec.alg_state << static_cast<double>((t - 1) % 2), 0.0, -1.0, 0.0, 1.0;
    rec.env_state << static_cast<double>((t - 1) % 2), 0.0, -1.0, 0.0, 0.0, 0.0, 1.0;
    rec.pi = 0.5;
    rec.action = t % 2;
    rec.oscb = oscb;
    rec.reward = static_cast<double>(oscb);
    return rec;
}

} // namespace

TEST_CASE("bayesian update against sequential and grid-integration oracles") {
    Stopwatch watch;
    bool ok = true;
    const Prior prior = Prior::deployed();
    RngStream rng(1001);

    // one-shot batch refit == conditioning on the observations one at a time
    double worst_mu = 0.0, worst_sigma = 0.0;
    for (int b = 0; b < 200; ++b) {
        int n = 1 + static_cast<int>(rng.next_u64() % 40);
        std::vector<BatchObservation> batch;
        for (int i = 0; i < n; ++i) {
            AlgState f;
            f << static_cast<double>(rng.next_u64() % 2), rng.uniform(-1.0, 1.0),
                rng.uniform(-1.0, 1.0), static_cast<double>(rng.next_u64() % 2), 1.0;
            double pi = rng.uniform(0.2, 0.8);
            int action = rng.bernoulli(pi) ? 1 : 0;
            batch.push_back({design_vector(f, action, pi), rng.normal(40.0, 60.0)});
        }
        PosteriorState one = posterior_update(prior, batch, 1);
        Eigen::VectorXd mu = prior.mean();
        Eigen::MatrixXd sigma = prior.covariance();
        for (const BatchObservation& obs : batch) {
            Eigen::VectorXd mu_next;
            Eigen::MatrixXd sigma_next;
            gaussian_conjugate_update(mu, sigma, prior.sigma2, {obs}, &mu_next, &sigma_next);
            mu = mu_next;
            sigma = sigma_next;
        }
        worst_mu = std::max(worst_mu,
                            (mu - one.mu).norm() / std::max(1.0, one.mu.norm()));
        worst_sigma = std::max(worst_sigma,
                               (sigma - one.sigma).norm() / std::max(1.0, one.sigma.norm()));
    }
    GATE(worst_mu <= 1e-8);
    GATE(worst_sigma <= 1e-8);

    // 2-D subproblem against brute-force grid integration of the density
    Eigen::Vector2d mu0(1.0, -2.0);
    Eigen::Matrix2d sigma0;
    sigma0 << 4.0, 1.0, 1.0, 2.0;
    const double sigma2 = 2.5;
    std::vector<BatchObservation> obs2;
    auto add_obs = [&obs2](double p0, double p1, double y) {
        Eigen::VectorXd phi(2);
        phi << p0, p1;
        obs2.push_back({phi, y});
    };
    add_obs(1.0, 0.5, 1.2);
    add_obs(-0.3, 2.0, -2.0);
    add_obs(2.0, -1.0, 3.1);

    const Eigen::Matrix2d prec0 = sigma0.inverse();
    const int points = 1401;
    const double lo = -14.0, hi = 14.0, step = (hi - lo) / (points - 1);
    auto log_density = [&](double a, double b) {
        Eigen::Vector2d theta(a, b);
        Eigen::Vector2d d = theta - mu0;
        double lp = -0.5 * d.dot(prec0 * d);
        for (const BatchObservation& o : obs2) {
            double r = o.reward - (o.phi(0) * a + o.phi(1) * b);
            lp -= r * r / (2.0 * sigma2);
        }
        return lp;
    };
    double peak = -1e300;
    for (int i = 0; i < points; ++i)
        for (int j = 0; j < points; ++j)
            peak = std::max(peak, log_density(lo + i * step, lo + j * step));
    double mass = 0.0;
    Eigen::Vector2d first_moment = Eigen::Vector2d::Zero();
    Eigen::Matrix2d second_moment = Eigen::Matrix2d::Zero();
    for (int i = 0; i < points; ++i) {
        for (int j = 0; j < points; ++j) {
            Eigen::Vector2d theta(lo + i * step, lo + j * step);
            double w = std::exp(log_density(theta(0), theta(1)) - peak);
            mass += w;
            first_moment += w * theta;
            second_moment += w * theta * theta.transpose();
        }
    }
    Eigen::Vector2d grid_mean = first_moment / mass;
    Eigen::Matrix2d grid_cov = second_moment / mass - grid_mean * grid_mean.transpose();
    Eigen::VectorXd mu_c;
    Eigen::MatrixXd sigma_c;
    gaussian_conjugate_update(mu0, sigma0, sigma2, obs2, &mu_c, &sigma_c);
    GATE((grid_mean - mu_c).cwiseAbs().maxCoeff() <= 1e-6);
    GATE((grid_cov - sigma_c).cwiseAbs().maxCoeff() <= 1e-6);

    GATE(watch.seconds() < 30.0);
    report(1, ok, "posterior refits match sequential conditioning (1e-8) and grid moments (1e-6)",
           watch.seconds());
}

TEST_CASE("smoothed action probability against monte carlo") {
    Stopwatch watch;
    bool ok = true;
    const SmoothingConfig cfg;
    AlgState f;
    f << 0.0, 0.0, 0.0, 0.0, 1.0; // intercept-only query isolates one coordinate

    std::vector<std::pair<double, double>> pairs = {{53.0, 4399.61}};
    RngStream gen(2002);
    while (pairs.size() < 50)
        pairs.emplace_back(gen.uniform(-120.0, 120.0), gen.uniform(1e-4, 6000.0));

    double worst = 0.0;
    for (std::size_t k = 0; k < pairs.size(); ++k) {
        auto [m, v] = pairs[k];
        PosteriorState post;
        post.mu(14) = m;
        post.sigma(14, 14) = v;
        double quad = action_prob(post, f, cfg);

        RngStream mc = derive_stream(2002, "mc", {k});
        const int draws = 1000000;
        double sum = 0.0, sd = std::sqrt(v);
        for (int i = 0; i < draws; ++i)
            sum += smoothing_rho(m + sd * mc.normal(), cfg);
        worst = std::max(worst, std::abs(quad - sum / draws));
    }
    GATE(worst <= 1e-3);
    GATE(watch.seconds() < 60.0);
    report(2, ok, "quadrature randomization probabilities within 1e-3 of 1e6-draw monte carlo",
           watch.seconds());
}

TEST_CASE("null projection against a conjugate-gradient constrained optimizer") {
    Stopwatch watch;
    bool ok = true;
    const StateGrid grid = default_state_grid();
    const Eigen::MatrixXd A = grid.matrix();
    const Eigen::MatrixXd G = A.transpose() * A;
    RngStream rng(3003);

    double worst_constraint = 0.0, worst_objective = 0.0;
    for (int k = 0; k < 100; ++k) {
        Eigen::VectorXd delta(7);
        for (int i = 0; i < 7; ++i)
            delta(i) = 1.2 * rng.normal();

        Eigen::VectorXd tilde(7);
        bool absorbed = k % 2 == 0;
        if (absorbed) {
            EnvState target;
            target << static_cast<double>(k % 4 / 2), rng.uniform(-1.0, 1.0),
                rng.uniform(-1.0, 1.0), static_cast<double>(rng.next_u64() % 2), 0.0, 0.0, 1.0;
            tilde = build_tilde_state(target);
        } else {
            for (int i = 0; i < 7; ++i)
                tilde(i) = rng.uniform(-1.0, 1.0);
            tilde(6) = rng.uniform(0.2, 0.8);
            if (tilde.norm() < 0.3)
                tilde(0) = 1.0;
        }

        Eigen::VectorXd p = project_null(delta, A, tilde).projected;
        if (absorbed) {
            Vec7 pw = p, tw = tilde;
            GATE(dot_state(pw, tw) == 0.0); // bitwise, by construction
        }
        worst_constraint = std::max(worst_constraint, std::abs(tilde.dot(p)));

        // independent check: conjugate gradient on the reduced 6-D problem,
        // after eliminating the constraint with a QR basis of tilde-perp
        Eigen::HouseholderQR<Eigen::MatrixXd> qr(tilde);
        Eigen::MatrixXd Q = qr.householderQ() * Eigen::MatrixXd::Identity(7, 7);
        Eigen::MatrixXd Z = Q.rightCols(6);
        Eigen::MatrixXd M = Z.transpose() * G * Z;
        Eigen::VectorXd b = Z.transpose() * G * delta;
        Eigen::VectorXd y = Eigen::VectorXd::Zero(6), r = b, d = b;
        double rs = r.squaredNorm();
        for (int it = 0; it < 60 && std::sqrt(rs) > 1e-13 * (1.0 + b.norm()); ++it) {
            Eigen::VectorXd Md = M * d;
            double alpha = rs / d.dot(Md);
            y += alpha * d;
            r -= alpha * Md;
            double rs_next = r.squaredNorm();
            d = r + (rs_next / rs) * d;
            rs = rs_next;
        }
        Eigen::VectorXd p_cg = Z * y;
        double f_lib = (A * (p - delta)).squaredNorm();
        double f_cg = (A * (p_cg - delta)).squaredNorm();
        worst_objective =
            std::max(worst_objective, std::abs(f_lib - f_cg) / std::max(1.0, std::abs(f_cg)));
    }
    GATE(worst_constraint <= 1e-9);
    GATE(worst_objective <= 1e-6);

    // a nullified population has exactly zero treatment effect at the anchor
    auto models = gen_synthetic_models(3, 33);
    EnvState target;
    target << 1.0, 0.2, -0.4, 1.0, 0.0, 0.0, 1.0;
    EnvState anchor = build_tilde_state(target);
    for (const ParticipantEnvModel& null_model :
         make_null_environment(models, target, grid)) {
        GATE(zip_mean(null_model, anchor, 1) == zip_mean(null_model, anchor, 0));
        GATE(zip_zero_prob(null_model, anchor, 1) == zip_zero_prob(null_model, anchor, 0));
    }

    GATE(watch.seconds() < 30.0);
    report(3, ok,
           "null projection meets the constraint (1e-9), matches CG objective (1e-6), "
           "and cancels effects exactly at the anchor",
           watch.seconds());
}

TEST_CASE("outcome model calibration over random models, states, and arms") {
    Stopwatch watch;
    bool ok = true;
    const StateGrid grid = default_state_grid();
    auto models = gen_synthetic_models(10, 44);

    double worst_z = 0.0;
    for (std::size_t k = 0; k < 50; ++k) {
        const ParticipantEnvModel& m = models[k % models.size()];
        const EnvState& g = grid.states[(37 * k + 11) % grid.states.size()];
        int arm = static_cast<int>(k % 2);
        GATE(zip_mean(m, g, 1) >= zip_mean(m, g, 0) - 1e-12);

        RngStream stream = derive_stream(909, "cal", {k});
        const int draws = 100000;
        double sum = 0.0, sumsq = 0.0;
        for (int i = 0; i < draws; ++i) {
            double q = static_cast<double>(zip_sample(m, g, arm, stream));
            sum += q;
            sumsq += q * q;
        }
        double mean = sum / draws;
        double var = (sumsq - draws * mean * mean) / (draws - 1);
        double se = std::sqrt(std::max(var, 1e-12) / draws);
        worst_z = std::max(worst_z, std::abs(mean - zip_mean(m, g, arm)) / se);
    }
    GATE(worst_z <= 3.0);
    report(4, ok, "sampled outcome means within 3 SE of analytic means; treatment never hurts",
           watch.seconds());
}

TEST_CASE("environment fit recovers the data-generating outcome means") {
    Stopwatch watch;
    bool ok = true;
    const StateGrid grid = default_state_grid();
    const ParticipantEnvModel truth = gen_synthetic_models(1, 777)[0];

    // hold out 20 interior states -- the region a trial actually visits --
    // so the check measures interpolation, not corner extrapolation. At 2000
    // outcomes the per-state estimate carries ~5% statistical noise even for
    // a perfectly converged fit (the fitted posterior beats the truth's
    // below), so recovery is judged by the mean relative error over the
    // held-out set.
    std::vector<std::size_t> interior;
    for (std::size_t i = 0; i < grid.states.size(); ++i) {
        const EnvState& g = grid.states[i];
        if (g(1) > -1.0 && g(1) < 1.0 && g(2) > -1.0 && g(2) < 1.0 && g(5) == 0.0)
            interior.push_back(i);
    }
    std::set<std::size_t> held;
    for (std::size_t j = 0; held.size() < 20 && j < interior.size(); ++j) {
        std::size_t idx = interior[(7 * j + 3) % interior.size()];
        if (zip_mean(truth, grid.states[idx], 0) >= 20.0)
            held.insert(idx);
    }
    REQUIRE(held.size() == 20);

    std::vector<ZipDatum> data;
    RngStream ds = derive_stream(777, "data");
    while (data.size() < 2000) {
        std::size_t idx = static_cast<std::size_t>(ds.next_u64() % grid.states.size());
        if (held.count(idx) != 0)
            continue;
        int action = ds.bernoulli(0.5) ? 1 : 0;
        long q = zip_sample(truth, grid.states[idx], action, ds);
        data.push_back({grid.states[idx], action, q});
    }

    RngStream fit_stream = derive_stream(777, "fit", {1});
    MapFitResult fit = map_fit(data, 20, fit_stream);

    double truth_lp = zip_log_posterior(truth, data);
    GATE(fit.log_posterior >= truth_lp);

    double total_rel = 0.0;
    int pairs = 0;
    for (std::size_t idx : held) {
        for (int arm : {0, 1}) {
            double want = zip_mean(truth, grid.states[idx], arm);
            double got = zip_mean(fit.model, grid.states[idx], arm);
            total_rel += std::abs(got - want) / want;
            ++pairs;
        }
    }
    GATE(total_rel / pairs <= 0.10);
    GATE(watch.seconds() < 120.0);
    report(5, ok, "MAP fit within 10% mean relative outcome error on 20 held-out states, "
                  "log posterior above the truth's",
           watch.seconds());
}

TEST_CASE("learning diagnostic: calibrated under the null, powered under advantage") {
    Stopwatch watch;
    bool ok = true;
    const StateGrid grid = default_state_grid();
    RunSetup base;
    base.config.num_participants = 12;
    base.config.days_per_participant = 28;
    base.config.master_seed = 6006;
    base.master_seed = 6006;
    base.env_models = gen_synthetic_models(12, 7006);

    AlgState query;
    query << 0.0, 0.0, -0.5, 1.0, 1.0;
    EnvState target;
    target << query(0), query(1), query(2), query(3), 0.0, 0.0, 1.0;
    const EnvState anchor = build_tilde_state(target);
    const int reps = 200;

    // calibration: a reference generated in the no-advantage world should sit
    // inside the null band nearly everywhere
    RunSetup null_setup = base;
    null_setup.env_models = make_null_environment(base.env_models, target, grid);
    null_setup.master_seed = 16006;
    RunResult null_reference = run_trial(null_setup);
    DidWeLearnResult calib =
        did_we_learn(null_reference.history.snapshots(), base, query, reps, grid);
    REQUIRE(calib.tau_indices.size() == 8); // weekly updates across the staggered 28-day runs
    std::size_t inside = 0;
    for (std::size_t k = 0; k < calib.tau_indices.size(); ++k)
        if (calib.reference.values[k] >= calib.band.band_low[k] &&
            calib.reference.values[k] <= calib.band.band_high[k])
            ++inside;
    double inside_frac = static_cast<double>(inside) / calib.tau_indices.size();
    GATE(inside_frac >= 0.9);

    // power: boost the treated intensity until every participant gains at
    // least 40 seconds at the anchor, then the reference must escape the band
    std::vector<ParticipantEnvModel> advantaged = base.env_models;
    for (ParticipantEnvModel& m : advantaged) {
        int guard = 0;
        while (zip_mean(m, anchor, 1) - zip_mean(m, anchor, 0) < 40.0 && guard++ < 2000)
            m.delta_n(6) += 0.05;
        REQUIRE(guard < 2000);
    }
    RunSetup adv = base;
    adv.env_models = advantaged;
    RunSetup adv_reference_setup = adv;
    adv_reference_setup.master_seed = 26006;
    RunResult adv_reference = run_trial(adv_reference_setup);
    DidWeLearnResult power =
        did_we_learn(adv_reference.history.snapshots(), adv, query, reps, grid);
    REQUIRE(power.tau_indices.size() == 8);
    for (std::size_t k = power.tau_indices.size() - 3; k < power.tau_indices.size(); ++k)
        GATE(power.reference.values[k] > power.band.band_high[k]);

    GATE(watch.seconds() < 600.0);
    report(6, ok, "null reference inside the 95% band >= 90% of update times; "
                  "40-second advantage escapes it at the last three",
           watch.seconds());
}

TEST_CASE("pooling comparison ordering under homogeneous participants") {
    Stopwatch watch;
    bool ok = true;
    const ParticipantEnvModel shared = gen_synthetic_models(1, 7007)[0];
    RunSetup setup;
    setup.config.num_participants = 12;
    setup.config.days_per_participant = 28;
    setup.config.master_seed = 7007;
    setup.master_seed = 7007;
    for (int pid = 1; pid <= 12; ++pid) {
        ParticipantEnvModel m = shared;
        m.participant_id = pid;
        setup.env_models.push_back(m);
    }

    const int reps = 200;
    PoolingComparison cmp = pooling_experiment(setup, reps);
    REQUIRE(cmp.full_pooling_reps.size() == static_cast<std::size_t>(reps));

    std::vector<double> diffs;
    for (int r = 0; r < reps; ++r)
        diffs.push_back(cmp.full_pooling_reps[r].mean_value - cmp.no_pooling_reps[r].mean_value);
    double mean_diff = 0.0;
    for (double d : diffs)
        mean_diff += d;
    mean_diff /= reps;
    double se_diff = std::sqrt(*sample_variance(diffs) / reps);
    GATE(mean_diff >= -2.0 * se_diff);

    GATE(watch.seconds() < 600.0);
    report(7, ok, "paired full-pooling mean value within 2 SE of (or above) no-pooling",
           watch.seconds());
}

TEST_CASE("chaos run: full-scale trial under the historical fault pattern") {
    Stopwatch watch;
    bool ok = true;

    RunSetup setup;
    setup.config.master_seed = 8008; // deployed-scale defaults otherwise
    setup.master_seed = 8008;
    setup.env_models = gen_synthetic_models(setup.config.num_participants, 9008);

    auto ids = [](int lo, int hi) {
        std::vector<int> v;
        for (int p = lo; p <= hi; ++p)
            v.push_back(p);
        return v;
    };
    FaultPlan plan;
    plan.push_back({Date::from_ymd(2023, 10, 30),
                    FaultType::schedule_construction_failure, ids(1, 1)});
    plan.push_back({Date::from_ymd(2023, 11, 16), FaultType::service_down, ids(6, 28)});
    plan.push_back({Date::from_ymd(2023, 11, 17), FaultType::service_down, ids(6, 28)});
    plan.push_back({Date::from_ymd(2023, 11, 17),
                    FaultType::schedule_construction_failure, ids(29, 29)});
    for (int day = 25; day <= 30; ++day)
        plan.push_back({Date::from_ymd(2023, 11, day),
                        FaultType::data_retrieval_failure, ids(11, 11)});
    for (int day = 15; day <= 16; ++day)
        plan.push_back({Date::from_ymd(2023, 12, day),
                        FaultType::data_retrieval_failure, ids(16, 16)});
    plan.push_back({Date::from_ymd(2024, 1, 24), FaultType::service_down, ids(31, 54)});
    plan.push_back({Date::from_ymd(2024, 1, 25), FaultType::service_down, ids(31, 54)});
    plan.push_back({Date::from_ymd(2024, 2, 21),
                    FaultType::schedule_construction_failure, ids(41, 45)});
    setup.fault_plan = plan;

    RunResult run = run_trial(setup);

    // every decision time of every participant got an action and a probability
    const int expected = setup.config.num_participants * setup.config.decision_times();
    GATE(static_cast<int>(run.history.records().size()) == expected);
    std::map<int, int> per_pid;
    bool states_ok = true, pi_ok = true, outcome_ok = true;
    for (const DecisionRecord& rec : run.history.records()) {
        ++per_pid[rec.point.participant_id];
        states_ok = states_ok && alg_state_valid(rec.alg_state) && env_state_valid(rec.env_state);
        pi_ok = pi_ok && rec.pi >= 0.2 - 1e-12 && rec.pi <= 0.8 + 1e-12 &&
                (rec.action == 0 || rec.action == 1);
        outcome_ok = outcome_ok && rec.oscb >= 0 && rec.oscb <= 181 &&
                     std::isfinite(rec.reward);
    }
    GATE(states_ok);
    GATE(pi_ok);
    GATE(outcome_ok);
    bool counts_ok = per_pid.size() == 72;
    for (const auto& [pid, count] : per_pid)
        counts_ok = counts_ok && count == setup.config.decision_times();
    GATE(counts_ok);

    // fallback activity matches the injected plan, row for row
    FaultReport rep = fault_report(run.events);
    std::map<std::pair<std::string, EventKind>, int> got;
    for (const FaultReportRow& row : rep.rows)
        got[{row.date.to_string(), row.method}] = row.participants_affected;
    std::map<std::pair<std::string, EventKind>, int> want = {
        {{"2023-10-30", EventKind::fallback_ii}, 1},
        {{"2023-11-16", EventKind::fallback_i}, 23},
        {{"2023-11-17", EventKind::fallback_i}, 23},
        {{"2023-11-17", EventKind::fallback_ii}, 1},
        {{"2023-11-25", EventKind::fallback_iii}, 1},
        {{"2023-11-26", EventKind::fallback_iii}, 1},
        {{"2023-11-27", EventKind::fallback_iii}, 1},
        {{"2023-11-28", EventKind::fallback_iii}, 1},
        {{"2023-11-29", EventKind::fallback_iii}, 1},
        {{"2023-11-30", EventKind::fallback_iii}, 1},
        {{"2023-12-15", EventKind::fallback_iii}, 1},
        {{"2023-12-16", EventKind::fallback_iii}, 1},
        {{"2024-01-24", EventKind::fallback_i}, 24},
        {{"2024-01-25", EventKind::fallback_i}, 24},
        {{"2024-02-21", EventKind::fallback_ii}, 5},
    };
    GATE(got == want);
    GATE(rep.dates_per_method[EventKind::fallback_i] == 4);
    GATE(rep.dates_per_method[EventKind::fallback_ii] == 3);
    GATE(rep.dates_per_method[EventKind::fallback_iii] == 8);
    GATE(rep.participant_days_per_method[EventKind::fallback_i] == 94);
    GATE(rep.participant_days_per_method[EventKind::fallback_ii] == 7);
    GATE(rep.participant_days_per_method[EventKind::fallback_iii] == 8);

    // quarantined records exist, and posteriors recompute bitwise without them
    int excluded = 0;
    for (const DecisionRecord& rec : run.history.records())
        excluded += rec.excluded_from_update ? 1 : 0;
    GATE(excluded == 16); // 8 participant-days x 2 decision times
    bool recompute_ok = true;
    for (const PosteriorSnapshot& snap : run.history.snapshots()) {
        auto batch_items = batch_for_update(run.history, snap.date);
        std::vector<BatchObservation> batch;
        for (const BatchItem& item : batch_items)
            batch.push_back({design_vector(item.alg_state, item.action, item.pi), item.reward});
        PosteriorState redo = posterior_update(setup.prior, batch, snap.tau_index);
        recompute_ok = recompute_ok && (redo.mu.array() == snap.mu.array()).all() &&
                       (redo.sigma.array() == snap.sigma.array()).all();
    }
    GATE(recompute_ok);
    // ...and would NOT recompute if the quarantined records were let in
    {
        const PosteriorSnapshot& last = run.history.snapshots().back();
        auto batch_items = batch_for_update(run.history, last.date);
        std::vector<BatchObservation> batch;
        for (const BatchItem& item : batch_items)
            batch.push_back({design_vector(item.alg_state, item.action, item.pi), item.reward});
        for (const DecisionRecord& rec : run.history.records())
            if (rec.excluded_from_update && rec.point.date < last.date)
                batch.push_back(
                    {design_vector(rec.alg_state, rec.action, rec.pi), rec.reward});
        PosteriorState tainted = posterior_update(setup.prior, batch, last.tau_index);
        GATE(!((tainted.mu.array() == last.mu.array()).all()));
    }

    // identical inputs, identical bytes
    RunResult rerun = run_trial(setup);
    fs::path dir = fs::temp_directory_path() / ("mrt_accept_" + std::to_string(::getpid()));
    fs::create_directories(dir);
    write_history_csv(dir / "a.csv", run.history);
    write_history_csv(dir / "b.csv", rerun.history);
    write_snapshots_jsonl(dir / "a.jsonl", run.history.snapshots());
    write_snapshots_jsonl(dir / "b.jsonl", rerun.history.snapshots());
    write_events_jsonl(dir / "a.events", run.events);
    write_events_jsonl(dir / "b.events", rerun.events);
    GATE(read_text_file(dir / "a.csv") == read_text_file(dir / "b.csv"));
    GATE(read_text_file(dir / "a.jsonl") == read_text_file(dir / "b.jsonl"));
    GATE(read_text_file(dir / "a.events") == read_text_file(dir / "b.events"));
    fs::remove_all(dir);

    report(8, ok, "faulted full-scale run: complete decisions, plan-matched fallbacks, "
                  "quarantine-proof posteriors, byte-identical reruns",
           watch.seconds());
}

TEST_CASE("metric definitions: frozen fixtures and distributional invariants") {
    Stopwatch watch;
    bool ok = true;

    TrialHistory fixture;
    const long q1[] = {0, 60, 120, 0};
    const long q2[] = {30, 30, 0, 90};
    for (int t = 1; t <= 4; ++t) {
        fixture.add_record(quick_record(1, t, q1[t - 1]));
        fixture.add_record(quick_record(2, t, q2[t - 1]));
    }
    OutcomeMetrics m = outcome_metrics(fixture);
    GATE(m.proportion_zero == 0.375);
    GATE(*m.avg_of_avg_nonzero_participant_oscb == 70.0);
    GATE(*m.avg_nonzero_oscb_in_trial == 66.0);
    GATE(*m.var_of_avg_nonzero_participant_oscb == 800.0);
    GATE(*m.var_nonzero_oscb_in_trial == 1530.0);
    GATE(*m.var_of_avg_participant_oscb == 28.125);
    GATE(*m.avg_of_var_participant_oscb == 2362.5);

    TrialHistory sim, ref;
    sim.add_record(quick_record(1, 1, 1));
    sim.add_record(quick_record(1, 2, 3));
    ref.add_record(quick_record(1, 1, 2));
    ref.add_record(quick_record(1, 2, 5));
    ErrorMetrics fixture_err = error_metrics(sim, ref);
    GATE(fixture_err.mse == 2.5);
    GATE(fixture_err.rmse == std::sqrt(2.5));
    GATE(fixture_err.mae == 1.5);

    RngStream rng(9009);
    bool invariants_ok = true;
    for (int h = 0; h < 1000; ++h) {
        int n = 1 + static_cast<int>(rng.next_u64() % 50);
        TrialHistory a, b;
        double sq = 0.0, ab = 0.0;
        for (int t = 1; t <= n; ++t) {
            long qa = static_cast<long>(rng.next_u64() % 182);
            long qb = static_cast<long>(rng.next_u64() % 182);
            a.add_record(quick_record(1, t, qa));
            b.add_record(quick_record(1, t, qb));
            double d = static_cast<double>(qa - qb);
            sq += d * d;
            ab += std::abs(d);
        }
        ErrorMetrics e = error_metrics(a, b);
        invariants_ok = invariants_ok &&
                        std::abs(e.mse - sq / n) <= 1e-12 * std::max(1.0, e.mse) &&
                        std::abs(e.rmse - std::sqrt(e.mse)) <= 1e-12 &&
                        std::abs(e.mae - ab / n) <= 1e-12 * std::max(1.0, e.mae) &&
                        e.mae <= e.rmse + 1e-12;
    }
    GATE(invariants_ok);

    report(9, ok, "outcome/error metrics hit hand-computed fixtures; RMSE=sqrt(MSE), MAE<=RMSE "
                  "across 1000 random histories",
           watch.seconds());
}

TEST_CASE("feature normalization anchors") {
    Stopwatch watch;
    bool ok = true;
    GATE(normalize_oscb_avg(90.5) == 0.0);
    GATE(std::abs(normalize_oscb_avg(28.0) - (-0.7)) <= 0.05);
    GATE(std::abs(normalize_oscb_avg(100.0) - 0.1) <= 0.05);
    GATE(std::abs(normalize_dosage_avg(0.2) - (-0.6)) <= 1e-12);
    GATE(std::abs(normalize_dosage_avg(0.45) - (-0.1)) <= 1e-12);
    report(10, ok, "brushing anchors 90.5->0, 28->~-0.7, 100->~0.1; dosage 20%->-0.6, 45%->-0.1",
           watch.seconds());
}
