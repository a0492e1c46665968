#pragma once

#include "cspec/crystal.hpp"

#include <Eigen/Dense>

namespace cspec {

/// Floquet-Bloch fiber at a torus point: n x n Hermitian matrix h0(xi).
struct FiberMatrix {
    Eigen::VectorXd xi;
    Eigen::MatrixXcd matrix;
};

/// Componentwise reduction to the canonical representative in [0,1)^d.
Eigen::VectorXd reduce_torus(const Eigen::VectorXd& xi);

/// h0(xi)_{jl} = -sum_{e=(x_j,x_l)} m0(e)/(m0(x_j)^1/2 m0(x_l)^1/2) e^{2 pi i xi.eta(e)}
///             + (deg(x_j) + R0(x_j)) delta_{jl},
/// symmetrized as (M + M*)/2 after assembly.
FiberMatrix assemble_fiber(const QuotientGraph& g, const Eigen::VectorXd& xi);

/// Closed-form d/dxi_k of the fiber: each edge term gains a factor 2 pi i eta(e)_k.
/// `direction` is zero-based.
Eigen::MatrixXcd fiber_derivative(const QuotientGraph& g, const Eigen::VectorXd& xi,
                                  int direction);

/// Matrix of the magnetic Laplacian Delta_theta_xi in the vertex basis of the
/// quotient (before the measure orthonormalization). Satisfies
/// assemble_fiber = I (-Delta_theta + R0) I* with I = diag(m0^1/2).
Eigen::MatrixXcd magnetic_laplacian(const QuotientGraph& g, const Eigen::VectorXd& xi);

}  // namespace cspec
