#pragma once

#include <Eigen/Core>

#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace cspec {

/// Raised when an input document or a graph invariant is violated.
struct ValidationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Raised when a numerical procedure fails (non-convergence, degenerate contour, ...).
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct Vertex {
    std::string id;
    double m0 = 1.0;  ///< vertex measure, strictly positive
    double r0 = 0.0;  ///< periodic potential value at this vertex
};

/// One oriented edge of the quotient graph. `index` is the Z^d vector eta(e)
/// recording which lattice cell the edge crosses.
struct OrientedEdge {
    int origin = 0;
    int terminus = 0;
    Eigen::VectorXi index;
    double m0 = 1.0;
};

/**
 Finite quotient graph of a d-dimensional topological crystal with periodic
 measure and potential.

 Oriented edges are stored in reversal pairs: edge 2i+1 is the reversal of
 edge 2i (endpoints swapped, index negated, same measure). Definition files
 list each unoriented edge once; the loader materializes both orientations.
 The vertex order fixes the identification of l^2 of the quotient with C^n,
 so fiber matrices are reproducible bit for bit.
 */
struct QuotientGraph {
    int dimension = 0;
    std::vector<Vertex> vertices;
    std::vector<OrientedEdge> oriented_edges;
    std::vector<std::vector<int>> outgoing;  ///< oriented edge indices with origin j

    int n() const { return static_cast<int>(vertices.size()); }
    int d() const { return dimension; }
};

/// Builds a graph from unoriented representatives, materializing both orientations.
QuotientGraph make_graph(int dimension, std::vector<Vertex> vertices,
                         const std::vector<OrientedEdge>& unoriented);

/// deg_m0(x_j) = sum over outgoing edges of m0(e)/m0(x_j).
double degree(const QuotientGraph& g, int j);

/// Empty list iff all invariants hold; otherwise one diagnostic per violation.
std::vector<std::string> validate(const QuotientGraph& g);

/// Canonical lattices with m0 = 1 and R0 = 0. Names:
/// "zd:1", "zd:2", "zd:3", "hexagonal", "kagome", "diamond-chain".
/// Edge index conventions are documented in the README.
QuotientGraph builtin(const std::string& name);

/// Parses a crystal definition document (JSON, see README for the schema).
/// Throws ValidationError with the offending field on malformed input.
QuotientGraph load_crystal(const std::string& text);

/// Inverse of load_crystal on validated graphs.
std::string serialize(const QuotientGraph& g);

/// Power-law radial profile amplitude * (1 + |mu|)^(-exponent), optionally
/// scaled per vertex. Closed-form dyadic-shell suprema keep decay checks
/// terminating.
struct PowerLawEnvelope {
    double amplitude = 0.0;
    double exponent = 0.0;
    Eigen::VectorXd coefficients;  ///< per-vertex scale; empty means all ones

    double at(double radius, int vertex = -1) const;
};

using CellKey = std::vector<int>;

CellKey to_key(const Eigen::VectorXi& cell);
Eigen::VectorXi from_key(const CellKey& key);

/**
 Decaying modification of the periodic data: short/long-range potentials and
 vertex/edge measure deltas. Tables are keyed by (cell, vertex index) or
 (canonical cell, unoriented edge index); table entries override nothing,
 they add on top of the periodic values, envelopes add on top of tables.
 Edge deltas are attached to the unoriented representative, so m(e) = m(e-bar)
 holds by construction.
 */
struct PerturbationSpec {
    std::map<std::pair<CellKey, int>, double> potential_short;
    std::optional<PowerLawEnvelope> potential_short_envelope;
    std::optional<PowerLawEnvelope> potential_long;  ///< cell-constant radial profile
    std::map<std::pair<CellKey, int>, double> vertex_measure_delta;
    std::optional<PowerLawEnvelope> vertex_measure_envelope;
    std::map<std::pair<CellKey, int>, double> edge_measure_delta;
    std::optional<PowerLawEnvelope> edge_measure_envelope;

    bool empty() const;
};

/// Parses a perturbation document (JSON, see README for the schema).
PerturbationSpec load_perturbation(const std::string& text, const QuotientGraph& g);

std::string serialize(const PerturbationSpec& p);

/// R_s at vertex x_j in cell mu.
double short_potential(const QuotientGraph& g, const PerturbationSpec& p,
                       const Eigen::VectorXi& cell, int vertex);

/// R_l at cell mu (cell-constant by construction).
double long_potential(const PerturbationSpec& p, const Eigen::VectorXi& cell);

/// Full potential R = R0 + R_s + R_l at vertex x_j in cell mu.
double potential(const QuotientGraph& g, const PerturbationSpec& p,
                 const Eigen::VectorXi& cell, int vertex);

/// Perturbed vertex measure m(x) at (cell, vertex). Throws ValidationError
/// if the result is not strictly positive.
double vertex_measure(const QuotientGraph& g, const PerturbationSpec& p,
                      const Eigen::VectorXi& cell, int vertex);

/// Perturbed measure of the lift of oriented edge `edge` whose origin sits in
/// `cell`. The value is read off the canonical unoriented instance, so edge
/// reversal is measure-preserving identically.
double edge_measure(const QuotientGraph& g, const PerturbationSpec& p,
                    int edge, const Eigen::VectorXi& cell);

}  // namespace cspec
