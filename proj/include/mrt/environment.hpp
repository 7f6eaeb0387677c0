#pragma once

#include "mrt/features.hpp"
#include "mrt/rng.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace mrt {

using Vec7 = Eigen::Matrix<double, 7, 1>;
using Vec28 = Eigen::Matrix<double, 28, 1>;

/// Zero-inflated Poisson outcome model for one participant. With state g and
/// action a:
///   engagement:  P(Z = 1) = sigmoid(-(w_b . g - a max(delta_b . g, 0)))
///   intensity:   S ~ Poisson(exp(w_p . g + a max(delta_n . g, 0)))
///   outcome:     Q = Z * S, capped at the 181-second sensor limit
/// p_app drives the independent daily app-opening indicator.
struct ParticipantEnvModel {
    int participant_id = 0;
    Vec7 w_b = Vec7::Zero();
    Vec7 w_p = Vec7::Zero();
    Vec7 delta_b = Vec7::Zero();
    Vec7 delta_n = Vec7::Zero();
    double p_app = 0.5;
    std::optional<double> fit_log_posterior;

    Vec28 weights() const;                    // [w_b; w_p; delta_b; delta_n]
    void set_weights(const Vec28& theta);
    void validate() const;
};

/// Plain left-to-right dot product. Every state-times-weights product in this
/// module goes through here so that null-projected effects cancel bitwise
/// (see project_null).
double dot_state(const Vec7& w, const EnvState& g);

long zip_sample(const ParticipantEnvModel& m, const EnvState& g, int action, RngStream& stream);
/// Analytic uncapped mean: P(Z = 1) * lambda.
double zip_mean(const ParticipantEnvModel& m, const EnvState& g, int action);
/// Analytic P(Q = 0) = sigmoid(u) + sigmoid(-u) exp(-lambda).
double zip_zero_prob(const ParticipantEnvModel& m, const EnvState& g, int action);

struct ZipDatum {
    EnvState g = EnvState::Zero();
    int action = 0;
    long oscb = 0;
};

/// Unnormalized log posterior: ZIP log likelihood of the data plus a standard
/// normal log prior over the 28 weights (constants dropped).
double zip_log_posterior(const ParticipantEnvModel& m, const std::vector<ZipDatum>& data);
/// Same quantity with its (sub)gradient; used by the fitter and its tests.
double zip_log_posterior_grad(const Vec28& theta, const std::vector<ZipDatum>& data,
                              Vec28* grad);

struct MapFitResult {
    ParticipantEnvModel model; // participant_id and p_app left to the caller
    double log_posterior = 0.0;
    int best_restart = 0;
    bool converged = false;
};

/// Maximum a posteriori fit of the 28 ZIP weights by Adam with restarts
/// (first init is the zero vector, the rest standard normal). The best
/// iterate ever visited is returned, so the result is never worse than any
/// starting point.
MapFitResult map_fit(const std::vector<ZipDatum>& data, int restarts, RngStream& stream);

int app_open_sample(double p_app, RngStream& stream);

/// Replaces the day-of-week indicator with its long-run average (2/7) and
/// centers the day-in-trial coordinate, giving the fixed state the null
/// constraint is anchored at.
EnvState build_tilde_state(const EnvState& g);

/// Reference grid of plausible states used by the null projection.
struct StateGrid {
    std::vector<EnvState> states;

    /// K x 7 matrix with one state per row.
    Eigen::MatrixXd matrix() const;
};

/// 600 states: both slots x 5 brushing levels x 5 dosage levels x app
/// indicator x weekend indicator x 3 day positions. Covers every vertex of
/// the reachable feature box.
StateGrid default_state_grid();

struct ProjectionResult {
    Eigen::VectorXd projected;
    bool ridged = false; // grid Gram matrix needed a ridge to factor
};

/// Least-squares projection of a treatment-effect vector onto the hyperplane
/// of effects that vanish at tilde: minimizes sum_k (g_k . p - g_k . delta)^2
/// over the grid subject to tilde . p = 0. When tilde's last coordinate is
/// exactly 1 (the intercept), the constraint residual is absorbed into that
/// coordinate so dot_state(p, tilde) evaluates to exactly 0.0.
ProjectionResult project_null(const Eigen::VectorXd& delta, const Eigen::MatrixXd& grid_matrix,
                              const Eigen::VectorXd& tilde);

/// Applies project_null to both effect vectors of every model, anchored at
/// build_tilde_state(target).
std::vector<ParticipantEnvModel> make_null_environment(
    const std::vector<ParticipantEnvModel>& models, const EnvState& target,
    const StateGrid& grid);

/// Deterministic synthetic participant population with brushing behaviour in
/// a realistic range (screened so the Poisson rate stays comfortably below
/// the sensor cap under treatment).
std::vector<ParticipantEnvModel> gen_synthetic_models(int count, std::uint64_t master_seed);

void write_models_json(const std::filesystem::path& path,
                       const std::vector<ParticipantEnvModel>& models);
std::vector<ParticipantEnvModel> read_models_json(const std::filesystem::path& path);

} // namespace mrt
