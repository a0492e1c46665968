#pragma once

#include "cspec/crystal.hpp"
#include "cspec/floquet.hpp"

#include <Eigen/Dense>

#include <string>
#include <vector>

namespace cspec {

struct Interval {
    double lo = 0.0;
    double hi = 0.0;

    bool contains(double x) const { return lo <= x && x <= hi; }
    double mid() const { return 0.5 * (lo + hi); }
    double half_width() const { return 0.5 * (hi - lo); }
};

/**
 Sampled Bloch variety over the uniform grid xi = mu/N, mu in {0..N-1}^d.
 Nodes are ordered lexicographically with the last axis running fastest;
 eigenvalues at each node are sorted ascending.
 */
struct BandSample {
    int grid = 0;
    int dim = 0;
    int bands = 0;
    std::vector<Eigen::VectorXd> values;
    std::vector<Eigen::MatrixXcd> vectors;  ///< empty unless requested
    bool has_vectors = false;

    long node_count() const;
    long node_index(const Eigen::VectorXi& mu) const;
    Eigen::VectorXi node_cell(long node) const;
    Eigen::VectorXd node_xi(long node) const;
};

BandSample sample_bands(const QuotientGraph& g, int grid, bool want_vectors);

enum class ProjectionMethod { Eigen, Riesz };

/// pi_I(xi) = E_{h0(xi)}(I). The Riesz route integrates the resolvent over a
/// circle around I (midpoint center, radius |I|/2 + 1e-4, 256-node trapezoid)
/// and errors out when the contour passes within 1e-8 of an eigenvalue.
Eigen::MatrixXcd spectral_projection(const QuotientGraph& g, const Eigen::VectorXd& xi,
                                     Interval interval, ProjectionMethod method);

/// Number of eigenvalues of h0(xi) within tol of lambda.
int multiplicity(const QuotientGraph& g, const Eigen::VectorXd& xi, double lambda,
                 double tol);

/// Energies of bands whose grid spread (max - min) is below tol.
std::vector<double> detect_flat_bands(const BandSample& sample, double tol);

/**
 Gradient of a band function at xi. Simple bands get the Feynman-Hellmann
 vector <v, d_k h0 v>; bands inside a near-degenerate cluster get the cluster
 matrices M_k = V* d_k h0 V instead.
 */
struct BandGradient {
    bool degenerate = false;
    Eigen::VectorXd gradient;                       ///< simple case, length d
    int cluster_begin = 0;                          ///< first band of the cluster
    int cluster_size = 1;
    std::vector<Eigen::MatrixXcd> cluster_matrices;  ///< one c x c matrix per direction
};

BandGradient band_gradient(const QuotientGraph& g, const Eigen::VectorXd& xi, int band,
                           double degeneracy_tol);

enum class ThresholdKind { BandMin, BandMax, Saddle, Crossing, FlatBand };

std::string to_string(ThresholdKind kind);

struct ThresholdEntry {
    double value = 0.0;
    ThresholdKind kind = ThresholdKind::BandMin;
    Eigen::VectorXd xi;        ///< witness point
    std::vector<int> bands;    ///< band index(es) involved
    bool converged = true;
    double flat_spread = 0.0;  ///< band spread for flat-band entries
};

struct ThresholdReport {
    int grid = 0;
    int refine_iters = 0;
    double merge_tol = 1e-6;
    std::vector<ThresholdEntry> entries;  ///< sorted by value

    std::vector<double> values() const;
    bool meets(Interval interval) const;
};

/**
 Numerical proxy for the threshold set: critical values of the sorted band
 functions, crossing values, and flat-band energies, located on the grid and
 refined with shrinking steps. This is an estimate, not a certificate; the
 stratification behind the exact definition is out of numerical reach.
 */
ThresholdReport estimate_thresholds(const QuotientGraph& g, int grid, int refine_iters);

struct MourreReport {
    Interval interval;
    int grid = 0;
    double bound = 0.0;            ///< a_I, infimum over contributing fibers
    long contributing_nodes = 0;   ///< fibers with spectrum inside I
    bool meets_thresholds = false;
    std::vector<long> degenerate_nodes;  ///< nodes handled by the cluster branch
};

/// Lower bound for the commutator fiber pi_I |grad lambda|^2 pi_I over the
/// grid. Simple bands contribute |grad lambda_j|^2, near-degenerate clusters
/// the smallest eigenvalue of sum_k M_k^2.
MourreReport mourre_constant(const QuotientGraph& g, Interval interval, int grid,
                             double degeneracy_tol);

}  // namespace cspec
