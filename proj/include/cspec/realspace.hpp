#pragma once

#include "cspec/bands.hpp"
#include "cspec/crystal.hpp"

#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <optional>
#include <vector>

namespace cspec {

/// Finite window of the infinite crystal: torus(N) wraps edge indices mod N,
/// truncated(L) keeps cells with |mu|_inf <= L and drops outgoing edges.
struct BoxSpec {
    enum class Mode { Torus, Truncated };
    Mode mode = Mode::Torus;
    int size = 1;

    static BoxSpec torus(int n) { return {Mode::Torus, n}; }
    static BoxSpec truncated(int l) { return {Mode::Truncated, l}; }
};

/**
 Sparse Hermitian operator on a finite window, assembled in the orthonormal
 basis obtained by rescaling coordinates with measure^(1/2). The measure is
 kept as the `weights` vector for inner products and the J identification.

 Site enumeration: cells in lexicographic order (torus: 0..N-1 per axis,
 truncated: -L..L per axis), vertex index running fastest.
 */
struct RealSpaceOperator {
    QuotientGraph graph;
    PerturbationSpec perturbation;
    BoxSpec box;
    Eigen::SparseMatrix<double> matrix;
    Eigen::VectorXd weights;
    bool is_perturbed = false;
    bool uses_j = false;

    long site_count() const { return matrix.rows(); }
    long cell_count() const;
    int cells_per_axis() const;
    int cell_origin() const;  ///< smallest coordinate (0 for torus, -L for truncated)

    /// Linear index of (cell, vertex); -1 when the cell leaves a truncated window.
    long site_index(const Eigen::VectorXi& cell, int vertex) const;
    Eigen::VectorXi site_cell(long site) const;
    int site_vertex(long site) const;
};

RealSpaceOperator build_h0(const QuotientGraph& g, BoxSpec box);

RealSpaceOperator build_h(const QuotientGraph& g, const PerturbationSpec& p, BoxSpec box);

/// Matrix of J H J* acting in l^2(X, m0), assembled from the conjugated
/// stencil and rescaled to the orthonormal m0-basis. Unitarily equivalent to
/// the input, so the spectrum is preserved.
RealSpaceOperator conjugate_J(const RealSpaceOperator& hop);

/// Full dense spectrum up to dimension 4096, otherwise `count` extremal
/// eigenvalues from a Lanczos iteration. Sorted ascending.
Eigen::VectorXd spectrum(const RealSpaceOperator& op, std::optional<int> count = {});

struct OracleRecord {
    int grid = 0;
    double max_deviation = 0.0;
    bool pass = false;
};

/// Exactness check of the Floquet-Bloch decomposition: the torus-H0 spectrum
/// must equal the union of fiber spectra at xi = mu/N. PASS iff the sorted
/// multisets deviate by at most 1e-9.
OracleRecord torus_oracle(const QuotientGraph& g, int grid);

/// Eigenvalue counts of the truncated perturbed operator in the interval,
/// one count per window size. Boundary (edge-state) effects are reported raw.
std::vector<long> gap_count_scan(const QuotientGraph& g, const PerturbationSpec& p,
                                 Interval interval, const std::vector<int>& sizes);

}  // namespace cspec
