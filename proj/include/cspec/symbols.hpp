#pragma once

#include "cspec/crystal.hpp"

#include <Eigen/Dense>

#include <functional>
#include <map>
#include <optional>
#include <vector>

namespace cspec {

using MatrixField = std::function<Eigen::MatrixXcd(const Eigen::VectorXi&)>;
using ScalarField = std::function<double(const Eigen::VectorXi&)>;

/**
 Coefficient a_nu: Z^d -> M_n(C) of one phase term. Finite tables cover
 compactly supported perturbations; the power-law envelope (with a shift so
 the family is closed under taking adjoints) covers the builtin decaying
 profiles; the generator closure covers everything derived from a
 PerturbationSpec. Lookup order: table, generator, envelope, zero.
 */
struct SymbolCoefficient {
    int size = 1;
    std::map<CellKey, Eigen::MatrixXcd> table;

    struct Envelope {
        double amplitude = 0.0;
        double exponent = 0.0;
        Eigen::VectorXi shift;     ///< evaluated at |mu + shift|
        Eigen::MatrixXcd matrix;
    };
    std::optional<Envelope> envelope;
    std::function<Eigen::MatrixXcd(const Eigen::VectorXi&)> generator;

    Eigen::MatrixXcd eval(const Eigen::VectorXi& mu) const;
    bool finitely_supported() const { return !generator && !envelope; }
};

/// Finite phase sum  a(xi, mu) = sum_terms e^{2 pi i xi.nu} a_nu(mu).
struct ToroidalSymbol {
    int dim = 0;
    int size = 1;  ///< matrix dimension n
    std::vector<std::pair<Eigen::VectorXi, SymbolCoefficient>> terms;  ///< distinct nu

    SymbolCoefficient* find_term(const Eigen::VectorXi& nu);
    Eigen::MatrixXcd eval(const Eigen::VectorXd& xi, const Eigen::VectorXi& mu) const;
};

using CoeffMap = std::map<CellKey, Eigen::VectorXcd>;

/// Op(a) on Fourier coefficients: shift-then-multiply,
/// output(mu) = sum_terms a_nu(mu + nu) coeffs(mu + nu).
CoeffMap apply_op(const ToroidalSymbol& a, const CoeffMap& coeffs);

/// Term (nu, a(.)) maps to (-nu, mu -> a(mu + nu)*); Op(adjoint) = Op(a)*.
ToroidalSymbol adjoint_symbol(const ToroidalSymbol& a);

/// Matrix of apply_op restricted to a window of cells (basis: cell-major,
/// vertex fastest). Used by the adjoint and quadrature cross-checks.
Eigen::MatrixXcd window_matrix(const ToroidalSymbol& a,
                               const std::vector<Eigen::VectorXi>& cells);

/// Symbol of I U (Delta(X,m0) - J Delta(X,m) J*) U* I* in the symmetrized form
/// sum_e ( T(e) - (K(e)_eta + K(e)_eta^dagger)/2 ). Requires a perturbation
/// with measure deltas only.
ToroidalSymbol perturbation_symbol(const QuotientGraph& g, const PerturbationSpec& p);

/// Edge walks used by the telescoping bounds: for each vertex j >= 1 a walk
/// from x_1 to x_j, and for each generator a walk from x_1 to delta_k x_1.
/// Walks are lists of oriented edge indices of the quotient graph.
struct PathTables {
    std::vector<std::vector<int>> to_vertex;
    std::vector<std::vector<int>> to_generator;
};

/// Shortest walks found by breadth-first search on the lift.
PathTables default_paths(const QuotientGraph& g);

/// Diagonal potential symbols r_s(mu)_jj = R_s(mu x_j) + R_l(mu x_j) - R_l(mu x_1)
/// and scalar r_l(mu) = R_l(mu x_1). r_s + r_l is the full fiber-space
/// potential difference. Paths are required when R_l is present and n > 1.
std::pair<ToroidalSymbol, ToroidalSymbol> potential_symbols(
    const QuotientGraph& g, const PerturbationSpec& p, const PathTables* paths = nullptr);

/// mu -> f(mu + nu) - f(mu).
MatrixField difference_op(const MatrixField& f, const Eigen::VectorXi& nu);

struct TelescopeStep {
    int axis = 0;
    int sign = +1;
    Eigen::VectorXi shift;
};

/// Decomposition of Delta_nu into |nu|_1 shifted axis differences,
/// Delta_nu f = sum_l sign_l (S_shift_l Delta_axis_l f); exact identity.
std::vector<TelescopeStep> telescoping_decomposition(const Eigen::VectorXi& nu);

/// Same difference assembled through the telescoping decomposition.
MatrixField difference_op_telescoped(const MatrixField& f, const Eigen::VectorXi& nu);

enum class DecayMode { Short, Long };
enum class DecayClass { ConvergentEvidence, DivergentEvidence, Inconclusive };

std::string to_string(DecayMode mode);
std::string to_string(DecayClass c);

/**
 Dyadic-shell decay evidence: suprema over lambda < |mu| < 2 lambda at
 lambda = 2^k, the running sums sum_k s_k 2^k surrogating the integral
 condition, and a log-log exponent fitted against the radii where the suprema
 were attained. Evidence, not proof: suprema are taken over a deterministic
 candidate set (near-minimal-norm lattice points per shell plus caller
 probes), which is exact for radial monotone profiles and finite tables.
 */
struct DecayReport {
    DecayMode mode = DecayMode::Short;
    std::vector<double> lambdas;
    std::vector<double> sups;
    std::vector<double> arg_radii;
    std::vector<double> partial_sums;
    double fitted_exponent = 0.0;
    DecayClass classification = DecayClass::Inconclusive;
};

DecayReport check_decay(const ScalarField& values, DecayMode mode, int max_level, int dim,
                        const std::vector<Eigen::VectorXi>& probes = {});

/// The main theorem's decay hypotheses evaluated on a perturbation:
/// the measure-ratio condition, |R_s|, and per-axis differences of R_l
/// together with a vanishing-at-infinity probe.
struct HypothesisReports {
    DecayReport measure_short;
    DecayReport potential_short;
    std::vector<DecayReport> potential_long_axes;
    double potential_long_vanishing_sup = 0.0;
    bool has_long = false;
};

HypothesisReports check_hypotheses(const QuotientGraph& g, const PerturbationSpec& p,
                                   int max_level);

}  // namespace cspec
