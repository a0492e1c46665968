#include "cspec/floquet.hpp"

#include <cmath>
#include <complex>
#include <numbers>

namespace cspec {

namespace {
constexpr double two_pi = 2.0 * std::numbers::pi;

void check_xi(const QuotientGraph& g, const Eigen::VectorXd& xi) {
    if (xi.size() != g.d())
        throw ValidationError("torus point dimension does not match the crystal");
}
}  // namespace

Eigen::VectorXd reduce_torus(const Eigen::VectorXd& xi) {
    Eigen::VectorXd out(xi.size());
    for (int a = 0; a < xi.size(); ++a) {
        double r = xi[a] - std::floor(xi[a]);
        if (r >= 1.0) r = 0.0;  // rounding of values just below an integer
        out[a] = r;
    }
    return out;
}

FiberMatrix assemble_fiber(const QuotientGraph& g, const Eigen::VectorXd& xi_in) {
    check_xi(g, xi_in);
    const Eigen::VectorXd xi = reduce_torus(xi_in);
    const int n = g.n();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& e : g.oriented_edges) {
        const double weight =
            e.m0 / std::sqrt(g.vertices[e.origin].m0 * g.vertices[e.terminus].m0);
        const double phase = two_pi * xi.dot(e.index.cast<double>());
        m(e.origin, e.terminus) -= weight * std::polar(1.0, phase);
    }
    for (int j = 0; j < n; ++j) m(j, j) += degree(g, j) + g.vertices[j].r0;
    m = 0.5 * (m + m.adjoint()).eval();
    return {xi, std::move(m)};
}

Eigen::MatrixXcd fiber_derivative(const QuotientGraph& g, const Eigen::VectorXd& xi_in,
                                  int direction) {
    check_xi(g, xi_in);
    if (direction < 0 || direction >= g.d())
        throw ValidationError("derivative direction out of range");
    const Eigen::VectorXd xi = reduce_torus(xi_in);
    const int n = g.n();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
    const std::complex<double> i2pi(0.0, two_pi);
    for (const auto& e : g.oriented_edges) {
        if (e.index[direction] == 0) continue;
        const double weight =
            e.m0 / std::sqrt(g.vertices[e.origin].m0 * g.vertices[e.terminus].m0);
        const double phase = two_pi * xi.dot(e.index.cast<double>());
        m(e.origin, e.terminus) -=
            weight * i2pi * static_cast<double>(e.index[direction]) * std::polar(1.0, phase);
    }
    m = 0.5 * (m + m.adjoint()).eval();
    return m;
}

Eigen::MatrixXcd magnetic_laplacian(const QuotientGraph& g, const Eigen::VectorXd& xi_in) {
    check_xi(g, xi_in);
    const Eigen::VectorXd xi = reduce_torus(xi_in);
    const int n = g.n();
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(n, n);
    for (const auto& e : g.oriented_edges) {
        const double ratio = e.m0 / g.vertices[e.origin].m0;
        const double phase = two_pi * xi.dot(e.index.cast<double>());
        m(e.origin, e.terminus) += ratio * std::polar(1.0, phase);
    }
    for (int j = 0; j < n; ++j) m(j, j) -= degree(g, j);
    return m;
}

}  // namespace cspec
