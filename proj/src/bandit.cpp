#include "mrt/bandit.hpp"

#include "mrt/errors.hpp"
#include "mrt/gauss_hermite.hpp"
#include "mrt/log.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <string>

namespace mrt {

Prior Prior::deployed() {
    Prior p;
    p.sigma2 = 3878.0;
    p.mu_alpha0 << 18.0, 0.0, 30.0, 0.0, 73.0;
    p.sd_alpha0 << 73.0, 25.0, 95.0, 27.0, 83.0;
    p.mu_beta << 0.0, 0.0, 0.0, 53.0, 0.0;
    p.sd_beta << 12.0, 33.0, 35.0, 56.0, 17.0;
    return p;
}

Vec15 Prior::mean() const {
    Vec15 mu;
    mu.segment<5>(0) = mu_alpha0;
    mu.segment<5>(5) = mu_beta; // alpha1 shares the advantage marginal
    mu.segment<5>(10) = mu_beta;
    return mu;
}

Mat15 Prior::covariance() const {
    Vec15 var;
    var.segment<5>(0) = sd_alpha0.array().square();
    var.segment<5>(5) = sd_beta.array().square();
    var.segment<5>(10) = sd_beta.array().square();
    return var.asDiagonal();
}

void Prior::validate() const {
    if (!(sigma2 > 0.0))
        throw InputError("prior noise variance must be positive");
    if ((sd_alpha0.array() <= 0.0).any() || (sd_beta.array() <= 0.0).any())
        throw InputError("prior standard deviations must be positive");
}

PosteriorState PosteriorState::from_prior(const Prior& prior) {
    prior.validate();
    PosteriorState st;
    st.mu = prior.mean();
    st.sigma = prior.covariance();
    st.tau_index = 0;
    return st;
}

void SmoothingConfig::validate() const {
    if (!(l_min >= 0.0 && l_max <= 1.0 && l_min < l_max))
        throw InputError("smoothing clips must satisfy 0 <= l_min < l_max <= 1");
    if (!(steepness > 0.0))
        throw InputError("smoothing steepness must be positive");
    if (quadrature_nodes < 1)
        throw InputError("quadrature_nodes must be positive");
}

std::string to_string(PolicyMode mode) {
    return mode == PolicyMode::full_pooling ? "full_pooling" : "no_pooling";
}

PolicyMode policy_mode_from_string(const std::string& s) {
    if (s == "full_pooling")
        return PolicyMode::full_pooling;
    if (s == "no_pooling")
        return PolicyMode::no_pooling;
    throw InputError("unknown policy mode '" + s + "'");
}

Vec15 design_vector(const AlgState& f, int action, double pi) {
    if (action != 0 && action != 1)
        throw InputError("action must be 0 or 1");
    if (!(pi >= 0.0 && pi <= 1.0))
        throw InputError("pi must be in [0, 1]");
    Vec15 phi;
    phi.segment<5>(0) = f;
    phi.segment<5>(5) = pi * f;
    phi.segment<5>(10) = (action - pi) * f;
    return phi;
}

void gaussian_conjugate_update(const Eigen::VectorXd& mu0, const Eigen::MatrixXd& sigma0,
                               double sigma2, const std::vector<BatchObservation>& batch,
                               Eigen::VectorXd* mu_out, Eigen::MatrixXd* sigma_out) {
    const Eigen::Index d = mu0.size();
    if (sigma0.rows() != d || sigma0.cols() != d)
        throw InputError("prior covariance dimensions do not match the mean");
    if (!(sigma2 > 0.0))
        throw InputError("noise variance must be positive");
    Eigen::LLT<Eigen::MatrixXd> prior_llt(sigma0);
    if (prior_llt.info() != Eigen::Success)
        throw NumericalError("prior covariance is not positive definite");

    // precision-space accumulation: A = Sigma0^-1 + Phi'Phi/sigma2,
    //                               b = Sigma0^-1 mu0 + Phi'R/sigma2
    Eigen::MatrixXd a = prior_llt.solve(Eigen::MatrixXd::Identity(d, d));
    Eigen::VectorXd b = prior_llt.solve(mu0);
    for (const BatchObservation& obs : batch) {
        if (obs.phi.size() != d)
            throw InputError("design vector dimension " + std::to_string(obs.phi.size()) +
                             " does not match parameter dimension " + std::to_string(d));
        a.noalias() += (obs.phi * obs.phi.transpose()) / sigma2;
        b.noalias() += obs.phi * (obs.reward / sigma2);
    }
    Eigen::LLT<Eigen::MatrixXd> post_llt((a + a.transpose()) / 2.0);
    if (post_llt.info() != Eigen::Success)
        throw NumericalError("posterior precision is not positive definite");
    Eigen::MatrixXd sigma = post_llt.solve(Eigen::MatrixXd::Identity(d, d));
    *sigma_out = (sigma + sigma.transpose()) / 2.0;
    *mu_out = post_llt.solve(b);
}

PosteriorState posterior_update(const Prior& prior, const std::vector<BatchObservation>& batch,
                                int tau_index) {
    prior.validate();
    Eigen::VectorXd mu;
    Eigen::MatrixXd sigma;
    gaussian_conjugate_update(prior.mean(), prior.covariance(), prior.sigma2, batch, &mu, &sigma);
    PosteriorState st;
    st.mu = mu;
    st.sigma = sigma;
    st.tau_index = tau_index;
    return st;
}

AdvantageMoments advantage_distribution(const PosteriorState& post, const AlgState& f) {
    AdvantageMoments m;
    m.mean = post.mu_beta().dot(f);
    m.variance = f.dot(post.sigma_beta() * f);
    return m;
}

double smoothing_rho(double x, const SmoothingConfig& cfg) {
    double logistic = 1.0 / (1.0 + std::exp(-cfg.steepness * x));
    return cfg.l_min + (cfg.l_max - cfg.l_min) * logistic;
}

double action_prob(const PosteriorState& post, const AlgState& f, const SmoothingConfig& cfg) {
    cfg.validate();
    AdvantageMoments m = advantage_distribution(post, f);
    double variance = m.variance;
    if (variance < 0.0) {
        log_warn("advantage variance " + std::to_string(variance) + " < 0, clamping to 0");
        variance = 0.0;
    }
    double pi = gaussian_expectation(m.mean, variance, cfg.quadrature_nodes,
                                     [&cfg](double x) { return smoothing_rho(x, cfg); });
    return std::min(std::max(pi, cfg.l_min), cfg.l_max);
}

int select_action(double pi, RngStream& stream) {
    if (!(pi >= 0.0 && pi <= 1.0))
        throw InputError("pi must be in [0, 1]");
    return stream.bernoulli(pi) ? 1 : 0;
}

double reward_value(long oscb, double cost_weight, double cost) {
    if (oscb < 0)
        throw InputError("oscb must be nonnegative");
    return static_cast<double>(oscb) - cost_weight * cost;
}

const ScheduleEntry* ActionSchedule::find(int day, int slot) const {
    for (const ScheduleEntry& e : entries)
        if (e.day == day && e.slot == slot)
            return &e;
    return nullptr;
}

ActionSchedule make_schedule(const PosteriorState& post, const RawObservables& latest,
                             int first_day, int horizon_days, const SmoothingConfig& cfg,
                             RngStream& stream) {
    if (first_day < 1)
        throw InputError("schedule first_day must be positive");
    if (horizon_days < 1)
        throw InputError("schedule horizon must cover at least one day");
    // The device needs actions before future states exist, so every entry
    // reuses the participant's latest state with only the slot switched.
    RawObservables raw = latest;
    double pi_by_slot[2];
    for (int slot = 0; slot < 2; ++slot) {
        raw.slot = slot;
        pi_by_slot[slot] = action_prob(post, build_alg_state(raw), cfg);
    }
    ActionSchedule schedule;
    schedule.entries.reserve(static_cast<std::size_t>(horizon_days) * 2);
    for (int day = first_day; day < first_day + horizon_days; ++day)
        for (int slot = 0; slot < 2; ++slot) {
            ScheduleEntry e;
            e.day = day;
            e.slot = slot;
            e.pi = pi_by_slot[slot];
            e.action = select_action(e.pi, stream);
            e.provenance = EntryProvenance::policy;
            schedule.entries.push_back(e);
        }
    return schedule;
}

} // namespace mrt
