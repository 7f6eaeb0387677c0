#pragma once

#include <Eigen/Core>

namespace mrt {

/// Nodes and weights for integrating f against exp(-x^2) on the real line:
/// integral ~= sum_i w_i f(x_i).
struct GaussHermiteRule {
    Eigen::VectorXd nodes;   // ascending
    Eigen::VectorXd weights; // positive, sum to sqrt(pi)
};

/// Rule of order n computed via the Golub-Welsch eigendecomposition of the
/// Jacobi matrix. Cached per n; thread safe.
const GaussHermiteRule& gauss_hermite_rule(int n);

/// Deterministic E[f(X)] for X ~ N(mean, variance) using an n-node rule.
/// variance == 0 degenerates to f(mean) exactly.
template <typename F>
double gaussian_expectation(double mean, double variance, int n, F&& f) {
    if (variance == 0.0)
        return f(mean);
    const GaussHermiteRule& rule = gauss_hermite_rule(n);
    const double scale = std::sqrt(2.0 * variance);
    double acc = 0.0;
    for (Eigen::Index i = 0; i < rule.nodes.size(); ++i)
        acc += rule.weights(i) * f(mean + scale * rule.nodes(i));
    return acc / std::sqrt(EIGEN_PI);
}

} // namespace mrt
