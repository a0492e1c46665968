#pragma once

#include "cspec/realspace.hpp"

#include <Eigen/Dense>

#include <vector>

namespace cspec {

enum class EvolveMethod { Chebyshev, DenseExp };

/// e^{-i op t} psi. Chebyshev propagation brackets the spectrum with
/// Gershgorin bounds and truncates at degree 1.1 * half-width * |t| + 40;
/// dense-exp diagonalizes and is refused above dimension 2048.
Eigen::VectorXcd evolve(const RealSpaceOperator& op, const Eigen::VectorXcd& psi, double t,
                        EvolveMethod method = EvolveMethod::Chebyshev);

/// E_op(I) psi. Dense diagonalization up to dimension 4096, Chebyshev-Jackson
/// polynomial approximation above (approximate; see README).
Eigen::VectorXcd spectral_filter(const RealSpaceOperator& op, Interval interval,
                                 const Eigen::VectorXcd& psi);

/// Polynomial filter route, exposed for validation against the dense path.
Eigen::VectorXcd spectral_filter_chebyshev(const RealSpaceOperator& op, Interval interval,
                                           const Eigen::VectorXcd& psi, int degree);

/**
 Finite-time, finite-box surrogate of the local wave operators:
 w(t) = e^{+iHt} J* e^{-iH0t} E_{H0}(I) psi on the window, evaluated on the
 given time schedule and its mirror. Cauchy increments between consecutive
 samples are the convergence observable; the window-escape mass flags when
 reflection artifacts start to dominate.
 */
struct ProbeBranch {
    std::vector<double> cauchy_increments;  ///< size times-1
    std::vector<double> isometry_gaps;      ///< size times
    std::vector<double> escape_mass;        ///< size times
};

struct ProbeRecord {
    std::vector<double> times;
    ProbeBranch forward;
    ProbeBranch backward;
    double filtered_norm = 0.0;
    bool escape_warning = false;  ///< escape mass exceeded 1e-3 somewhere
};

ProbeRecord wave_operator_probe(const QuotientGraph& g, const PerturbationSpec& p,
                                Interval interval, const Eigen::VectorXcd& psi,
                                const std::vector<double>& times, BoxSpec box);

}  // namespace cspec
