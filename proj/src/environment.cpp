#include "mrt/environment.hpp"

#include "mrt/errors.hpp"
#include "mrt/log.hpp"
#include "mrt/text_io.hpp"

#include "json.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>

namespace mrt {

namespace {

constexpr double kEtaSanityBound = 20.0; // exp(20) s >> any plausible brushing
constexpr long kOscbCapLong = 181;

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

struct LinearTerms {
    double u = 0.0;   // logit scale of the zero-inflation component
    double eta = 0.0; // Poisson log rate
};

LinearTerms linear_terms(const ParticipantEnvModel& m, const EnvState& g, int action) {
    if (action != 0 && action != 1)
        throw InputError("action must be 0 or 1");
    LinearTerms lt;
    lt.u = dot_state(m.w_b, g);
    lt.eta = dot_state(m.w_p, g);
    if (action == 1) {
        lt.u -= std::max(dot_state(m.delta_b, g), 0.0);
        lt.eta += std::max(dot_state(m.delta_n, g), 0.0);
    }
    return lt;
}

void check_eta(double eta) {
    if (eta > kEtaSanityBound)
        throw NumericalError("Poisson log-rate " + std::to_string(eta) +
                             " exceeds the sanity bound " + std::to_string(kEtaSanityBound));
}

} // namespace

Vec28 ParticipantEnvModel::weights() const {
    Vec28 theta;
    theta.segment<7>(0) = w_b;
    theta.segment<7>(7) = w_p;
    theta.segment<7>(14) = delta_b;
    theta.segment<7>(21) = delta_n;
    return theta;
}

void ParticipantEnvModel::set_weights(const Vec28& theta) {
    w_b = theta.segment<7>(0);
    w_p = theta.segment<7>(7);
    delta_b = theta.segment<7>(14);
    delta_n = theta.segment<7>(21);
}

void ParticipantEnvModel::validate() const {
    if (!(p_app >= 0.0 && p_app <= 1.0))
        throw InputError("p_app must be in [0, 1]");
    if (!weights().allFinite())
        throw InputError("environment weights must be finite");
}

double dot_state(const Vec7& w, const EnvState& g) {
    double acc = 0.0;
    for (int i = 0; i < 7; ++i)
        acc += w(i) * g(i);
    return acc;
}

long zip_sample(const ParticipantEnvModel& m, const EnvState& g, int action, RngStream& stream) {
    LinearTerms lt = linear_terms(m, g, action);
    check_eta(lt.eta);
    if (!stream.bernoulli(sigmoid(-lt.u)))
        return 0;
    long s = stream.poisson(std::exp(lt.eta));
    return std::min(s, kOscbCapLong);
}

double zip_mean(const ParticipantEnvModel& m, const EnvState& g, int action) {
    LinearTerms lt = linear_terms(m, g, action);
    check_eta(lt.eta);
    return sigmoid(-lt.u) * std::exp(lt.eta);
}

double zip_zero_prob(const ParticipantEnvModel& m, const EnvState& g, int action) {
    LinearTerms lt = linear_terms(m, g, action);
    check_eta(lt.eta);
    double lambda = std::exp(lt.eta);
    return sigmoid(lt.u) + sigmoid(-lt.u) * std::exp(-lambda);
}

double zip_log_posterior_grad(const Vec28& theta, const std::vector<ZipDatum>& data,
                              Vec28* grad) {
    if (grad != nullptr)
        grad->setZero();
    double value = 0.0;
    for (const ZipDatum& d : data) {
        if (d.action != 0 && d.action != 1)
            throw InputError("action must be 0 or 1");
        if (d.oscb < 0)
            throw InputError("oscb must be nonnegative");
        const double a = static_cast<double>(d.action);
        double db_dot = 0.0;
        double dn_dot = 0.0;
        for (int i = 0; i < 7; ++i) {
            db_dot += theta(14 + i) * d.g(i);
            dn_dot += theta(21 + i) * d.g(i);
        }
        double u = 0.0;
        double eta = 0.0;
        for (int i = 0; i < 7; ++i) {
            u += theta(i) * d.g(i);
            eta += theta(7 + i) * d.g(i);
        }
        u -= a * std::max(db_dot, 0.0);
        eta += a * std::max(dn_dot, 0.0);
        // transient iterates may wander; clamp the rate so the objective and
        // gradient stay finite (never binds at plausible optima)
        eta = std::min(eta, 100.0);
        const double lambda = std::exp(eta);

        double du = 0.0;  // d loglik / d u
        double deta = 0.0;
        if (d.oscb > 0) {
            const double q = static_cast<double>(d.oscb);
            value += std::log(sigmoid(-u)) + q * eta - lambda - std::lgamma(q + 1.0);
            du = -sigmoid(u);
            deta = q - lambda;
        } else {
            const double su = sigmoid(u);
            const double sn = sigmoid(-u);
            const double el = std::exp(-lambda);
            const double p0 = su + sn * el;
            value += std::log(p0);
            du = su * sn * (1.0 - el) / p0;
            deta = -sn * lambda * el / p0;
        }
        if (grad != nullptr) {
            const double ind_b = (a == 1.0 && db_dot > 0.0) ? 1.0 : 0.0;
            const double ind_n = (a == 1.0 && dn_dot > 0.0) ? 1.0 : 0.0;
            for (int i = 0; i < 7; ++i) {
                (*grad)(i) += du * d.g(i);
                (*grad)(7 + i) += deta * d.g(i);
                (*grad)(14 + i) += du * (-ind_b) * d.g(i);
                (*grad)(21 + i) += deta * ind_n * d.g(i);
            }
        }
    }
    value -= 0.5 * theta.squaredNorm(); // N(0, I) prior, constant dropped
    if (grad != nullptr)
        *grad -= theta;
    return value;
}

double zip_log_posterior(const ParticipantEnvModel& m, const std::vector<ZipDatum>& data) {
    return zip_log_posterior_grad(m.weights(), data, nullptr);
}

MapFitResult map_fit(const std::vector<ZipDatum>& data, int restarts, RngStream& stream) {
    if (data.empty())
        throw InputError("map_fit needs at least one observation");
    if (restarts < 1)
        throw InputError("map_fit needs at least one restart");

    constexpr double kBeta1 = 0.9;
    constexpr double kBeta2 = 0.999;
    constexpr double kEps = 1e-8;

    Vec28 best_theta = Vec28::Zero();
    double best_value = -std::numeric_limits<double>::infinity();
    int best_restart = 0;

    for (int r = 0; r < restarts; ++r) {
        Vec28 theta;
        if (r == 0) {
            theta.setZero();
        } else {
            for (int i = 0; i < 28; ++i)
                theta(i) = stream.normal();
        }
        // one exploration phase, then polish phases with shrinking steps:
        // constant-rate Adam only orbits the optimum at the step-size scale,
        // so the rate has to come down before the fit is quotable
        constexpr struct {
            int iters;
            double lr;
        } kPhases[] = {{2000, 0.05}, {500, 0.01}, {500, 0.002}, {500, 4e-4}, {500, 8e-5}};
        Vec28 grad;
        for (const auto& phase : kPhases) {
            Vec28 m1 = Vec28::Zero();
            Vec28 m2 = Vec28::Zero();
            for (int it = 0; it < phase.iters; ++it) {
                double value = zip_log_posterior_grad(theta, data, &grad);
                if (value > best_value) {
                    best_value = value;
                    best_theta = theta;
                    best_restart = r;
                }
                // Adam step, ascending
                m1 = kBeta1 * m1 + (1.0 - kBeta1) * grad;
                m2 = (kBeta2 * m2.array() + (1.0 - kBeta2) * grad.array().square()).matrix();
                double c1 = 1.0 - std::pow(kBeta1, it + 1);
                double c2 = 1.0 - std::pow(kBeta2, it + 1);
                theta +=
                    (phase.lr * (m1 / c1).array() / ((m2 / c2).array().sqrt() + kEps)).matrix();
            }
        }
        double final_value = zip_log_posterior_grad(theta, data, &grad);
        if (final_value > best_value) {
            best_value = final_value;
            best_theta = theta;
            best_restart = r;
        }
    }

    MapFitResult result;
    result.model.set_weights(best_theta);
    result.log_posterior = best_value;
    result.best_restart = best_restart;
    Vec28 grad;
    zip_log_posterior_grad(best_theta, data, &grad);
    // the log-posterior curvature grows with the dataset, so judge the
    // gradient relative to it
    double tol = std::max(0.05, 0.01 * static_cast<double>(data.size()));
    result.converged = grad.lpNorm<Eigen::Infinity>() <= tol;
    if (!result.converged)
        log_warn("map_fit gradient sup-norm " +
                 std::to_string(grad.lpNorm<Eigen::Infinity>()) +
                 " at the returned point; consider more restarts");
    return result;
}

int app_open_sample(double p_app, RngStream& stream) {
    if (!(p_app >= 0.0 && p_app <= 1.0))
        throw InputError("p_app must be in [0, 1]");
    return stream.bernoulli(p_app) ? 1 : 0;
}

EnvState build_tilde_state(const EnvState& g) {
    EnvState t = g;
    t(4) = 2.0 / 7.0; // long-run weekend share
    t(5) = 0.0;       // mid-trial
    return t;
}

Eigen::MatrixXd StateGrid::matrix() const {
    Eigen::MatrixXd m(static_cast<Eigen::Index>(states.size()), 7);
    for (std::size_t k = 0; k < states.size(); ++k)
        m.row(static_cast<Eigen::Index>(k)) = states[k].transpose();
    return m;
}

StateGrid default_state_grid() {
    const double brushing[] = {-1.0, -0.7, 0.0, 0.1, 1.0};
    const double dosage[] = {-1.0, -0.6, -0.1, 0.0, 1.0};
    const double day[] = {-1.0, 0.0, 1.0};
    StateGrid grid;
    grid.states.reserve(600);
    for (int slot = 0; slot <= 1; ++slot)
        for (double b : brushing)
            for (double a : dosage)
                for (int app = 0; app <= 1; ++app)
                    for (int we = 0; we <= 1; ++we)
                        for (double dn : day) {
                            EnvState g;
                            g << slot, b, a, app, we, dn, 1.0;
                            grid.states.push_back(g);
                        }
    return grid;
}

ProjectionResult project_null(const Eigen::VectorXd& delta, const Eigen::MatrixXd& grid_matrix,
                              const Eigen::VectorXd& tilde) {
    const Eigen::Index d = delta.size();
    if (tilde.size() != d || grid_matrix.cols() != d)
        throw InputError("projection dimensions do not match");
    if (grid_matrix.rows() < d)
        throw InputError("state grid must have at least as many states as dimensions");

    Eigen::MatrixXd gram = grid_matrix.transpose() * grid_matrix;
    ProjectionResult result;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success) {
        log_warn("state-grid Gram matrix is rank deficient; adding 1e-8 ridge");
        result.ridged = true;
        gram += 1e-8 * Eigen::MatrixXd::Identity(d, d);
        llt.compute(gram);
        if (llt.info() != Eigen::Success)
            throw NumericalError("state-grid Gram matrix could not be factored");
    }
    Eigen::VectorXd w = llt.solve(tilde);
    double denom = tilde.dot(w);
    if (!(denom > 0.0))
        throw NumericalError("degenerate null-projection constraint");

    // closed form, then a few residual-correction sweeps
    Eigen::VectorXd p = delta - w * (tilde.dot(delta) / denom);
    for (int sweep = 0; sweep < 4; ++sweep) {
        double r = tilde.dot(p);
        if (std::abs(r) < 1e-12)
            break;
        p -= w * (r / denom);
    }
    // absorb the residual into the intercept so the constraint holds bitwise
    // under dot_state's left-to-right evaluation
    if (tilde(d - 1) == 1.0) {
        double partial = 0.0;
        for (Eigen::Index i = 0; i < d - 1; ++i)
            partial += p(i) * tilde(i);
        p(d - 1) = -partial;
    }
    result.projected = p;
    return result;
}

std::vector<ParticipantEnvModel> make_null_environment(
    const std::vector<ParticipantEnvModel>& models, const EnvState& target,
    const StateGrid& grid) {
    EnvState tilde = build_tilde_state(target);
    Eigen::MatrixXd gm = grid.matrix();
    std::vector<ParticipantEnvModel> out;
    out.reserve(models.size());
    for (const ParticipantEnvModel& m : models) {
        ParticipantEnvModel nm = m;
        nm.delta_b = project_null(m.delta_b, gm, tilde).projected;
        nm.delta_n = project_null(m.delta_n, gm, tilde).projected;
        out.push_back(nm);
    }
    return out;
}

std::vector<ParticipantEnvModel> gen_synthetic_models(int count, std::uint64_t master_seed) {
    if (count < 1)
        throw InputError("model count must be positive");
    const StateGrid grid = default_state_grid();
    std::vector<ParticipantEnvModel> out;
    out.reserve(static_cast<std::size_t>(count));
    for (int pid = 1; pid <= count; ++pid) {
        RngStream stream = derive_stream(master_seed, "envgen", {static_cast<std::uint64_t>(pid)});
        ParticipantEnvModel m;
        m.participant_id = pid;
        bool accepted = false;
        for (int attempt = 0; attempt < 100 && !accepted; ++attempt) {
            m.w_b(6) = stream.uniform(-0.2, 0.6);
            m.w_p(6) = stream.uniform(4.2, 4.8);
            m.delta_b(6) = stream.uniform(0.1, 0.5);
            m.delta_n(6) = stream.uniform(0.05, 0.3);
            for (int i = 0; i < 6; ++i) {
                m.w_b(i) = stream.uniform(-0.35, 0.35);
                m.w_p(i) = stream.uniform(-0.12, 0.12);
                m.delta_b(i) = stream.uniform(-0.2, 0.2);
                m.delta_n(i) = stream.uniform(-0.1, 0.1);
            }
            m.p_app = stream.uniform(0.3, 0.9);
            // keep the treated Poisson rate well under the sensor cap; the
            // log rate is convex in the state, so the grid (which contains
            // every box vertex) witnesses the maximum
            double max_lambda = 0.0;
            for (const EnvState& g : grid.states) {
                double eta = dot_state(m.w_p, g) + std::max(dot_state(m.delta_n, g), 0.0);
                max_lambda = std::max(max_lambda, std::exp(eta));
            }
            accepted = max_lambda <= 150.0;
        }
        if (!accepted)
            throw NumericalError("could not calibrate a synthetic model for participant " +
                                 std::to_string(pid));
        out.push_back(m);
    }
    return out;
}

void write_models_json(const std::filesystem::path& path,
                       const std::vector<ParticipantEnvModel>& models) {
    auto append_vec7 = [](std::string& s, const Vec7& v) {
        s += '[';
        for (int i = 0; i < 7; ++i) {
            if (i > 0)
                s += ',';
            s += fmt_double(v(i));
        }
        s += ']';
    };
    std::string out = "[\n";
    for (std::size_t i = 0; i < models.size(); ++i) {
        const ParticipantEnvModel& m = models[i];
        out += "{\"participant_id\":";
        out += std::to_string(m.participant_id);
        out += ",\"w_b\":";
        append_vec7(out, m.w_b);
        out += ",\"w_p\":";
        append_vec7(out, m.w_p);
        out += ",\"delta_b\":";
        append_vec7(out, m.delta_b);
        out += ",\"delta_n\":";
        append_vec7(out, m.delta_n);
        out += ",\"p_app\":";
        out += fmt_double(m.p_app);
        out += ",\"fit_log_posterior\":";
        out += m.fit_log_posterior ? fmt_double(*m.fit_log_posterior) : "null";
        out += i + 1 < models.size() ? "},\n" : "}\n";
    }
    out += "]\n";
    write_text_file(path, out);
}

std::vector<ParticipantEnvModel> read_models_json(const std::filesystem::path& path) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": " + e.what());
    }
    if (!j.is_array())
        throw DataError(path.string() + ": expected a JSON array of models");
    std::vector<ParticipantEnvModel> out;
    for (const auto& jm : j) {
        if (!jm.is_object())
            throw DataError(path.string() + ": model entries must be objects");
        for (auto it = jm.begin(); it != jm.end(); ++it) {
            static const char* known[] = {"participant_id", "w_b", "w_p", "delta_b",
                                          "delta_n", "p_app", "fit_log_posterior"};
            bool ok = false;
            for (const char* k : known)
                ok = ok || it.key() == k;
            if (!ok)
                throw DataError(path.string() + ": unknown model key '" + it.key() + "'");
        }
        try {
            ParticipantEnvModel m;
            m.participant_id = jm.at("participant_id").get<int>();
            auto get_vec7 = [&jm, &path](const char* key) {
                auto v = jm.at(key).get<std::vector<double>>();
                if (v.size() != 7)
                    throw DataError(path.string() + ": '" + key + "' must have 7 entries");
                return Vec7(Eigen::Map<const Vec7>(v.data()));
            };
            m.w_b = get_vec7("w_b");
            m.w_p = get_vec7("w_p");
            m.delta_b = get_vec7("delta_b");
            m.delta_n = get_vec7("delta_n");
            m.p_app = jm.at("p_app").get<double>();
            if (jm.contains("fit_log_posterior") && !jm.at("fit_log_posterior").is_null())
                m.fit_log_posterior = jm.at("fit_log_posterior").get<double>();
            m.validate();
            out.push_back(m);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ": " + e.what());
        } catch (const InputError& e) {
            throw DataError(path.string() + ": " + e.what());
        }
    }
    return out;
}

} // namespace mrt
