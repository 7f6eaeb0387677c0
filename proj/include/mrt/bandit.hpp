#pragma once

#include "mrt/features.hpp"
#include "mrt/rng.hpp"

#include <Eigen/Core>

#include <vector>

namespace mrt {

using Vec5 = Eigen::Matrix<double, 5, 1>;
using Mat5 = Eigen::Matrix<double, 5, 5>;
using Vec15 = Eigen::Matrix<double, 15, 1>;
using Mat15 = Eigen::Matrix<double, 15, 15>;

/// Independent Gaussian prior over theta = [alpha0, alpha1, beta] with known
/// outcome noise. The advantage blocks alpha1 and beta share one marginal, so
/// only two (mean, sd) pairs are stored. Covariances are diagonal.
struct Prior {
    double sigma2 = 3878.0; // outcome noise variance, seconds^2
    Vec5 mu_alpha0;
    Vec5 sd_alpha0;
    Vec5 mu_beta;
    Vec5 sd_beta;

    /// Values used in the deployed trial, from the pilot-data fit.
    static Prior deployed();

    Vec15 mean() const;
    Mat15 covariance() const;
    void validate() const; // positive sds and noise
};

/// theta | data at one update time.
struct PosteriorState {
    Vec15 mu = Vec15::Zero();
    Mat15 sigma = Mat15::Zero();
    int tau_index = 0; // 0 = prior, k = after update k

    static PosteriorState from_prior(const Prior& prior);
    Vec5 mu_beta() const { return mu.segment<5>(10); }
    Mat5 sigma_beta() const { return sigma.block<5, 5>(10, 10); }
};

/// Posterior-sampling smoothing: rho(x) = l_min + (l_max - l_min) *
/// logistic(steepness * x), so randomization probabilities stay inside
/// [l_min, l_max].
struct SmoothingConfig {
    double l_min = 0.2;
    double l_max = 0.8;
    double steepness = 0.05; // per second of advantage
    int quadrature_nodes = 50;

    void validate() const;
};

enum class PolicyMode { full_pooling, no_pooling };

std::string to_string(PolicyMode mode);
PolicyMode policy_mode_from_string(const std::string& s);

/// One regression observation: design vector phi(s, a) and observed reward.
struct BatchObservation {
    Eigen::VectorXd phi;
    double reward = 0.0;
};

/// Action-centered design: phi = [f, pi*f, (a - pi)*f].
Vec15 design_vector(const AlgState& f, int action, double pi);

/// Conjugate Gaussian update with known noise, any dimension. Always applied
/// to the original prior with the full cumulative batch.
void gaussian_conjugate_update(const Eigen::VectorXd& mu0, const Eigen::MatrixXd& sigma0,
                               double sigma2, const std::vector<BatchObservation>& batch,
                               Eigen::VectorXd* mu_out, Eigen::MatrixXd* sigma_out);

PosteriorState posterior_update(const Prior& prior, const std::vector<BatchObservation>& batch,
                                int tau_index);

struct AdvantageMoments {
    double mean = 0.0;
    double variance = 0.0;
};

/// Marginal of the advantage f' beta under the posterior.
AdvantageMoments advantage_distribution(const PosteriorState& post, const AlgState& f);

double smoothing_rho(double x, const SmoothingConfig& cfg);

/// pi(s) = E[rho(f' beta)] via deterministic Gauss-Hermite quadrature.
double action_prob(const PosteriorState& post, const AlgState& f, const SmoothingConfig& cfg);

int select_action(double pi, RngStream& stream);

/// Reward = brushing quality minus the configured cost of intervening.
double reward_value(long oscb, double cost_weight, double cost);

enum class EntryProvenance { policy, fallback };

struct ScheduleEntry {
    int day = 0; // participant day, 1-based
    int slot = 0;
    double pi = 0.0;
    int action = 0;
    EntryProvenance provenance = EntryProvenance::policy;
};

/// Full remaining-trial schedule pushed to a participant's device each
/// morning; entries ordered by (day, slot).
struct ActionSchedule {
    std::vector<ScheduleEntry> entries;

    const ScheduleEntry* find(int day, int slot) const;
};

/// Schedules horizon_days days starting at first_day. Randomization
/// probabilities are computed from the posterior at the participant's current
/// state (with the slot feature switched per entry); actions are drawn from
/// the provided stream in entry order.
ActionSchedule make_schedule(const PosteriorState& post, const RawObservables& latest,
                             int first_day, int horizon_days, const SmoothingConfig& cfg,
                             RngStream& stream);

} // namespace mrt
