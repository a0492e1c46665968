#include "cspec/scatter.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numbers>

namespace cspec {

namespace {

using Complex = std::complex<double>;

Eigen::VectorXcd sparse_apply(const Eigen::SparseMatrix<double>& a,
                              const Eigen::VectorXcd& v) {
    const Eigen::VectorXd re = v.real();
    const Eigen::VectorXd im = v.imag();
    Eigen::VectorXcd out(v.size());
    out.real() = a * re;
    out.imag() = a * im;
    return out;
}

/// Real matrix (or expression) times complex vector.
template <typename Mat>
Eigen::VectorXcd apply_real(const Mat& m, const Eigen::VectorXcd& v) {
    const Eigen::VectorXd re = v.real();
    const Eigen::VectorXd im = v.imag();
    Eigen::VectorXcd out(m.rows());
    out.real() = m * re;
    out.imag() = m * im;
    return out;
}

/// Gershgorin bracket of the sparse symmetric matrix.
std::pair<double, double> spectral_bounds(const Eigen::SparseMatrix<double>& a) {
    const long dim = a.rows();
    Eigen::VectorXd diag = Eigen::VectorXd::Zero(dim);
    Eigen::VectorXd radius = Eigen::VectorXd::Zero(dim);
    for (int k = 0; k < a.outerSize(); ++k) {
        for (Eigen::SparseMatrix<double>::InnerIterator it(a, k); it; ++it) {
            if (it.row() == it.col())
                diag[it.row()] += it.value();
            else
                radius[it.row()] += std::abs(it.value());
        }
    }
    return {(diag - radius).minCoeff(), (diag + radius).maxCoeff()};
}

Eigen::VectorXcd evolve_chebyshev(const RealSpaceOperator& op, const Eigen::VectorXcd& psi,
                                  double t) {
    const auto [lo, hi] = spectral_bounds(op.matrix);
    const double center = 0.5 * (lo + hi);
    double half = 0.5 * (hi - lo);
    if (half <= 0.0) half = 1.0;
    half *= 1.0 + 1e-12;  // keep the scaled spectrum strictly inside [-1, 1]

    const double z = half * std::abs(t);
    const int degree = static_cast<int>(std::ceil(1.1 * z)) + 40;

    // e^{-i t (center + half B)} = e^{-i t center} sum_k (2 - d_k0) (-i sgn t)^k J_k(z) T_k(B)
    const Complex unit = t >= 0.0 ? Complex(0.0, -1.0) : Complex(0.0, 1.0);
    const Complex carrier = std::polar(1.0, -center * t);

    auto scaled_apply = [&](const Eigen::VectorXcd& v) {
        return ((sparse_apply(op.matrix, v) - center * v) / half).eval();
    };

    Eigen::VectorXcd prev = psi;
    Eigen::VectorXcd curr = scaled_apply(psi);
    Eigen::VectorXcd acc = std::cyl_bessel_j(0, z) * prev;
    Complex phase = unit;
    acc += 2.0 * phase * std::cyl_bessel_j(1, z) * curr;
    for (int k = 2; k <= degree; ++k) {
        Eigen::VectorXcd next = 2.0 * scaled_apply(curr) - prev;
        prev.swap(curr);
        curr.swap(next);
        phase *= unit;
        const double bessel = std::cyl_bessel_j(k, z);
        if (bessel != 0.0) acc += 2.0 * phase * bessel * curr;
    }
    return carrier * acc;
}

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> dense_solver(const RealSpaceOperator& op) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(Eigen::MatrixXd(op.matrix));
    if (solver.info() != Eigen::Success)
        throw NumericalError("dense eigensolver failed on real-space operator");
    return solver;
}

Eigen::VectorXcd evolve_dense(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& solver,
                              const Eigen::VectorXcd& psi, double t) {
    Eigen::VectorXcd modes = apply_real(solver.eigenvectors().transpose(), psi);
    for (long i = 0; i < modes.size(); ++i)
        modes[i] *= std::polar(1.0, -solver.eigenvalues()[i] * t);
    return apply_real(solver.eigenvectors(), modes);
}

Eigen::VectorXcd filter_dense(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& solver,
                              Interval interval, const Eigen::VectorXcd& psi) {
    Eigen::VectorXcd modes = apply_real(solver.eigenvectors().transpose(), psi);
    for (long i = 0; i < modes.size(); ++i)
        if (!interval.contains(solver.eigenvalues()[i])) modes[i] = Complex(0.0, 0.0);
    return apply_real(solver.eigenvectors(), modes);
}

double boundary_mass(const RealSpaceOperator& op, const Eigen::VectorXcd& v) {
    if (op.box.mode != BoxSpec::Mode::Truncated) return 0.0;
    const int margin = op.box.size - 5;
    double mass = 0.0;
    for (long site = 0; site < v.size(); ++site) {
        if (op.site_cell(site).cwiseAbs().maxCoeff() > margin) mass += std::norm(v[site]);
    }
    return mass;
}

}  // namespace

Eigen::VectorXcd evolve(const RealSpaceOperator& op, const Eigen::VectorXcd& psi, double t,
                        EvolveMethod method) {
    if (psi.size() != op.site_count())
        throw ValidationError("state dimension does not match the operator");
    if (!(psi.norm() > 0.0)) throw ValidationError("state must be nonzero");
    if (t == 0.0) return psi;
    if (method == EvolveMethod::DenseExp) {
        if (op.site_count() > 2048)
            throw ValidationError("dense-exp evolution refused above dimension 2048");
        return evolve_dense(dense_solver(op), psi, t);
    }
    return evolve_chebyshev(op, psi, t);
}

Eigen::VectorXcd spectral_filter(const RealSpaceOperator& op, Interval interval,
                                 const Eigen::VectorXcd& psi) {
    if (interval.hi < interval.lo) throw ValidationError("interval endpoints out of order");
    if (psi.size() != op.site_count())
        throw ValidationError("state dimension does not match the operator");
    if (op.site_count() <= 4096) return filter_dense(dense_solver(op), interval, psi);
    return spectral_filter_chebyshev(op, interval, psi, 4096);
}

Eigen::VectorXcd spectral_filter_chebyshev(const RealSpaceOperator& op, Interval interval,
                                           const Eigen::VectorXcd& psi, int degree) {
    const auto [lo, hi] = spectral_bounds(op.matrix);
    const double center = 0.5 * (lo + hi);
    double half = 0.5 * (hi - lo);
    if (half <= 0.0) half = 1.0;
    half *= 1.0 + 1e-12;

    // Chebyshev coefficients of the indicator of [a, b] with Jackson damping.
    const double a = std::clamp((interval.lo - center) / half, -1.0, 1.0);
    const double b = std::clamp((interval.hi - center) / half, -1.0, 1.0);
    const double ta = std::acos(b);  // theta decreases as lambda grows
    const double tb = std::acos(a);
    std::vector<double> coeff(static_cast<std::size_t>(degree) + 1);
    coeff[0] = (tb - ta) / std::numbers::pi;
    for (int k = 1; k <= degree; ++k)
        coeff[static_cast<std::size_t>(k)] =
            2.0 / std::numbers::pi * (std::sin(k * tb) - std::sin(k * ta)) / k;
    const double m = degree + 1;
    for (int k = 0; k <= degree; ++k) {
        const double jackson =
            ((m - k) * std::cos(std::numbers::pi * k / m) +
             std::sin(std::numbers::pi * k / m) / std::tan(std::numbers::pi / m)) /
            m;
        coeff[static_cast<std::size_t>(k)] *= jackson;
    }

    auto scaled_apply = [&](const Eigen::VectorXcd& v) {
        return ((sparse_apply(op.matrix, v) - center * v) / half).eval();
    };
    Eigen::VectorXcd prev = psi;
    Eigen::VectorXcd curr = scaled_apply(psi);
    Eigen::VectorXcd acc = coeff[0] * prev + coeff[1] * curr;
    for (int k = 2; k <= degree; ++k) {
        Eigen::VectorXcd next = 2.0 * scaled_apply(curr) - prev;
        prev.swap(curr);
        curr.swap(next);
        acc += coeff[static_cast<std::size_t>(k)] * curr;
    }
    return acc;
}

ProbeRecord wave_operator_probe(const QuotientGraph& g, const PerturbationSpec& p,
                                Interval interval, const Eigen::VectorXcd& psi,
                                const std::vector<double>& times, BoxSpec box) {
    if (p.potential_long)
        throw ValidationError("wave-operator probe requires a short-range perturbation");
    for (std::size_t i = 0; i + 1 < times.size(); ++i)
        if (!(times[i] < times[i + 1]))
            throw ValidationError("probe times must be strictly increasing");
    if (!times.empty() && !(times.front() > 0.0))
        throw ValidationError("probe times must be positive");

    const RealSpaceOperator free_op = build_h0(g, box);
    const RealSpaceOperator full_op = conjugate_J(build_h(g, p, box));
    if (psi.size() != free_op.site_count())
        throw ValidationError("state dimension does not match the window");

    ProbeRecord record;
    record.times = times;

    // In measure^(1/2)-orthonormal coordinates the J* identification between
    // the two Hilbert spaces is the identity map, so the probe composes the
    // two propagators directly.
    if (p.empty()) {
        // H = H0 and the group property makes w(t) = E(I) psi exactly.
        const Eigen::VectorXcd filtered = spectral_filter(free_op, interval, psi);
        record.filtered_norm = filtered.norm();
        for (ProbeBranch* branch : {&record.forward, &record.backward}) {
            branch->cauchy_increments.assign(times.empty() ? 0 : times.size() - 1, 0.0);
            branch->isometry_gaps.assign(times.size(), 0.0);
            branch->escape_mass.assign(times.size(), boundary_mass(free_op, filtered));
        }
        return record;
    }

    const bool dense = free_op.site_count() <= 4096;
    auto free_solver = dense ? dense_solver(free_op)
                             : Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>();
    auto full_solver = dense ? dense_solver(full_op)
                             : Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>();

    const Eigen::VectorXcd filtered =
        dense ? filter_dense(free_solver, interval, psi)
              : spectral_filter(free_op, interval, psi);
    record.filtered_norm = filtered.norm();

    auto propagate = [&](const RealSpaceOperator& op,
                         const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& solver,
                         const Eigen::VectorXcd& v, double t) {
        return dense ? evolve_dense(solver, v, t) : evolve_chebyshev(op, v, t);
    };

    for (int sign : {+1, -1}) {
        ProbeBranch& branch = sign > 0 ? record.forward : record.backward;
        Eigen::VectorXcd previous;
        for (std::size_t i = 0; i < times.size(); ++i) {
            const double t = sign * times[i];
            const Eigen::VectorXcd free_state = propagate(free_op, free_solver, filtered, t);
            const Eigen::VectorXcd w = propagate(full_op, full_solver, free_state, -t);
            branch.isometry_gaps.push_back(std::abs(w.norm() - record.filtered_norm));
            const double escape =
                std::max(boundary_mass(free_op, free_state), boundary_mass(full_op, w));
            branch.escape_mass.push_back(escape);
            if (escape > 1e-3) record.escape_warning = true;
            if (i > 0) branch.cauchy_increments.push_back((w - previous).norm());
            previous = w;
        }
    }
    return record;
}

}  // namespace cspec
