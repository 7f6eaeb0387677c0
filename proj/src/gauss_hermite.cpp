#include "mrt/gauss_hermite.hpp"

#include "mrt/errors.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <map>
#include <mutex>

namespace mrt {

namespace {

GaussHermiteRule compute_rule(int n) {
    // Symmetric tridiagonal Jacobi matrix for the (physicists') Hermite
    // polynomials: zero diagonal, off-diagonal sqrt(k/2).
    Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(n, n);
    for (int k = 1; k < n; ++k) {
        double off = std::sqrt(k / 2.0);
        jacobi(k, k - 1) = off;
        jacobi(k - 1, k) = off;
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(jacobi);
    if (es.info() != Eigen::Success)
        throw NumericalError("Gauss-Hermite eigendecomposition failed");
    GaussHermiteRule rule;
    rule.nodes = es.eigenvalues(); // ascending
    rule.weights.resize(n);
    const double total = std::sqrt(EIGEN_PI); // integral of exp(-x^2)
    for (int i = 0; i < n; ++i) {
        double first = es.eigenvectors()(0, i);
        rule.weights(i) = total * first * first;
    }
    return rule;
}

} // namespace

const GaussHermiteRule& gauss_hermite_rule(int n) {
    if (n < 1)
        throw InputError("quadrature order must be positive");
    static std::map<int, GaussHermiteRule> cache;
    static std::mutex mutex;
    std::lock_guard<std::mutex> lock(mutex);
    auto it = cache.find(n);
    if (it == cache.end())
        it = cache.emplace(n, compute_rule(n)).first;
    return it->second;
}

} // namespace mrt
