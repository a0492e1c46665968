#include "cspec/bands.hpp"

#include "cspec/parallel.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/LU>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <complex>
#include <limits>
#include <numbers>
#include <sstream>

namespace cspec {

long BandSample::node_count() const {
    long count = 1;
    for (int a = 0; a < dim; ++a) count *= grid;
    return count;
}

long BandSample::node_index(const Eigen::VectorXi& mu) const {
    long idx = 0;
    for (int a = 0; a < dim; ++a) {
        int c = ((mu[a] % grid) + grid) % grid;
        idx = idx * grid + c;
    }
    return idx;
}

Eigen::VectorXi BandSample::node_cell(long node) const {
    Eigen::VectorXi mu(dim);
    for (int a = dim - 1; a >= 0; --a) {
        mu[a] = static_cast<int>(node % grid);
        node /= grid;
    }
    return mu;
}

Eigen::VectorXd BandSample::node_xi(long node) const {
    return node_cell(node).cast<double>() / static_cast<double>(grid);
}

BandSample sample_bands(const QuotientGraph& g, int grid, bool want_vectors) {
    if (grid < 1) throw ValidationError("grid resolution must be >= 1");
    BandSample sample;
    sample.grid = grid;
    sample.dim = g.d();
    sample.bands = g.n();
    sample.has_vectors = want_vectors;
    const long count = sample.node_count();
    sample.values.resize(count);
    if (want_vectors) sample.vectors.resize(count);

    std::atomic<long> failed{-1};
    parallel_for(count, [&](long node) {
        const Eigen::VectorXd xi = sample.node_xi(node);
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(
            assemble_fiber(g, xi).matrix,
            want_vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
        if (solver.info() != Eigen::Success) {
            long expected = -1;
            failed.compare_exchange_strong(expected, node);
            return;
        }
        sample.values[node] = solver.eigenvalues();
        if (want_vectors) sample.vectors[node] = solver.eigenvectors();
    });
    if (failed.load() >= 0) {
        std::ostringstream msg;
        msg << "eigensolver failed at xi = (" << sample.node_xi(failed.load()).transpose() << ")";
        throw NumericalError(msg.str());
    }
    return sample;
}

namespace {

Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solve_fiber(const QuotientGraph& g,
                                                            const Eigen::VectorXd& xi,
                                                            bool vectors = true) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> solver(
        assemble_fiber(g, xi).matrix,
        vectors ? Eigen::ComputeEigenvectors : Eigen::EigenvaluesOnly);
    if (solver.info() != Eigen::Success) {
        std::ostringstream msg;
        msg << "eigensolver failed at xi = (" << xi.transpose() << ")";
        throw NumericalError(msg.str());
    }
    return solver;
}

}  // namespace

Eigen::MatrixXcd spectral_projection(const QuotientGraph& g, const Eigen::VectorXd& xi,
                                     Interval interval, ProjectionMethod method) {
    if (interval.hi < interval.lo) throw ValidationError("interval endpoints out of order");
    const int n = g.n();
    if (method == ProjectionMethod::Eigen) {
        auto solver = solve_fiber(g, xi);
        Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(n, n);
        for (int i = 0; i < n; ++i) {
            if (interval.contains(solver.eigenvalues()[i]))
                p += solver.eigenvectors().col(i) * solver.eigenvectors().col(i).adjoint();
        }
        return p;
    }

    const Eigen::MatrixXcd h = assemble_fiber(g, xi).matrix;
    auto solver = solve_fiber(g, xi, false);
    const double center = interval.mid();
    const double radius = interval.half_width() + 1e-4;
    for (int i = 0; i < n; ++i) {
        const double lambda = solver.eigenvalues()[i];
        if (std::min(std::abs(lambda - interval.lo), std::abs(lambda - interval.hi)) <= 1e-8) {
            std::ostringstream msg;
            msg << "interval endpoint within 1e-8 of eigenvalue " << lambda;
            throw NumericalError(msg.str());
        }
        if (std::abs(std::abs(lambda - center) - radius) < 1e-8) {
            std::ostringstream msg;
            msg << "riesz contour too close to eigenvalue " << lambda;
            throw NumericalError(msg.str());
        }
    }

    constexpr int quad_nodes = 256;
    const Eigen::MatrixXcd id = Eigen::MatrixXcd::Identity(n, n);
    Eigen::MatrixXcd p = Eigen::MatrixXcd::Zero(n, n);
    for (int k = 0; k < quad_nodes; ++k) {
        const double theta = 2.0 * std::numbers::pi * k / quad_nodes;
        const std::complex<double> offset = std::polar(radius, theta);
        const std::complex<double> z = center + offset;
        p += offset * (z * id - h).partialPivLu().solve(id);
    }
    p /= static_cast<double>(quad_nodes);
    return 0.5 * (p + p.adjoint()).eval();
}

int multiplicity(const QuotientGraph& g, const Eigen::VectorXd& xi, double lambda,
                 double tol) {
    if (!(tol > 0.0)) throw ValidationError("multiplicity tolerance must be positive");
    auto solver = solve_fiber(g, xi, false);
    int count = 0;
    for (int i = 0; i < g.n(); ++i)
        if (std::abs(solver.eigenvalues()[i] - lambda) <= tol) ++count;
    return count;
}

std::vector<double> detect_flat_bands(const BandSample& sample, double tol) {
    if (sample.values.empty()) throw ValidationError("band sample is empty");
    std::vector<double> energies;
    for (int j = 0; j < sample.bands; ++j) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const auto& v : sample.values) {
            lo = std::min(lo, v[j]);
            hi = std::max(hi, v[j]);
        }
        if (hi - lo < tol) energies.push_back(0.5 * (lo + hi));
    }
    return energies;
}

BandGradient band_gradient(const QuotientGraph& g, const Eigen::VectorXd& xi, int band,
                           double degeneracy_tol) {
    const int n = g.n();
    if (band < 0 || band >= n) throw ValidationError("band index out of range");
    auto solver = solve_fiber(g, xi);
    const Eigen::VectorXd& lambda = solver.eigenvalues();

    int lo = band, hi = band;
    while (lo > 0 && lambda[lo] - lambda[lo - 1] <= degeneracy_tol) --lo;
    while (hi < n - 1 && lambda[hi + 1] - lambda[hi] <= degeneracy_tol) ++hi;

    BandGradient out;
    if (lo == hi) {
        out.degenerate = false;
        out.gradient.resize(g.d());
        const Eigen::VectorXcd v = solver.eigenvectors().col(band);
        for (int k = 0; k < g.d(); ++k)
            out.gradient[k] = std::real(std::complex<double>(
                v.dot(fiber_derivative(g, xi, k) * v)));
        return out;
    }
    out.degenerate = true;
    out.cluster_begin = lo;
    out.cluster_size = hi - lo + 1;
    const Eigen::MatrixXcd v = solver.eigenvectors().middleCols(lo, out.cluster_size);
    out.cluster_matrices.reserve(g.d());
    for (int k = 0; k < g.d(); ++k) {
        Eigen::MatrixXcd m = v.adjoint() * fiber_derivative(g, xi, k) * v;
        out.cluster_matrices.push_back(0.5 * (m + m.adjoint()).eval());
    }
    return out;
}

std::string to_string(ThresholdKind kind) {
    switch (kind) {
        case ThresholdKind::BandMin: return "band-min";
        case ThresholdKind::BandMax: return "band-max";
        case ThresholdKind::Saddle: return "saddle";
        case ThresholdKind::Crossing: return "crossing";
        case ThresholdKind::FlatBand: return "flat-band";
    }
    return "unknown";
}

std::vector<double> ThresholdReport::values() const {
    std::vector<double> out;
    out.reserve(entries.size());
    for (const auto& e : entries) out.push_back(e.value);
    return out;
}

bool ThresholdReport::meets(Interval interval) const {
    for (const auto& e : entries)
        if (interval.contains(e.value)) return true;
    return false;
}

namespace {

double band_value(const QuotientGraph& g, const Eigen::VectorXd& xi, int band) {
    return solve_fiber(g, xi, false).eigenvalues()[band];
}

double band_gap(const QuotientGraph& g, const Eigen::VectorXd& xi, int band) {
    const auto& lambda = solve_fiber(g, xi, false).eigenvalues();
    return lambda[band + 1] - lambda[band];
}

struct Candidate {
    ThresholdKind kind;
    long node;
    int band;  // for crossings: lower band of the pair
};

int priority(ThresholdKind kind) {
    switch (kind) {
        case ThresholdKind::FlatBand: return 4;
        case ThresholdKind::Crossing: return 3;
        case ThresholdKind::BandMin: return 2;
        case ThresholdKind::BandMax: return 2;
        case ThresholdKind::Saddle: return 1;
    }
    return 0;
}

/// Compass search (axis moves, shrinking step) minimizing fn; derivative-free,
/// so it survives the conical nonsmoothness at band crossings.
Eigen::VectorXd compass_minimize(const std::function<double(const Eigen::VectorXd&)>& fn,
                                 Eigen::VectorXd x, double step, int iters) {
    double best = fn(x);
    for (int it = 0; it < iters; ++it) {
        bool moved = false;
        for (int a = 0; a < x.size(); ++a) {
            for (int sign : {+1, -1}) {
                Eigen::VectorXd trial = x;
                trial[a] += sign * step;
                trial = reduce_torus(trial);
                const double value = fn(trial);
                if (value < best) {
                    best = value;
                    x = trial;
                    moved = true;
                }
            }
        }
        if (!moved) step *= 0.5;
    }
    return x;
}

}  // namespace

ThresholdReport estimate_thresholds(const QuotientGraph& g, int grid, int refine_iters) {
    if (grid < 2) throw ValidationError("threshold grid must be >= 2");
    const BandSample sample = sample_bands(g, grid, false);
    const long count = sample.node_count();
    const int n = g.n();
    const int d = g.d();

    double vmin = std::numeric_limits<double>::infinity();
    double vmax = -std::numeric_limits<double>::infinity();
    for (const auto& v : sample.values) {
        vmin = std::min(vmin, v.minCoeff());
        vmax = std::max(vmax, v.maxCoeff());
    }
    const double scale = 1.0 + (vmax - vmin);
    const double tie_tol = 1e-12 * scale;
    const double flat_tol = 1e-8 * scale;
    const double degeneracy_tol = 1e-8 * scale;
    const double grad_tol = 1e-6 * scale;
    const double crossing_accept = 1e-6 * scale;

    ThresholdReport report;
    report.grid = grid;
    report.refine_iters = refine_iters;

    std::vector<ThresholdEntry> found;

    // Flat bands: grid spread below tolerance.
    std::vector<bool> band_is_flat(n, false);
    for (int j = 0; j < n; ++j) {
        double lo = std::numeric_limits<double>::infinity();
        double hi = -std::numeric_limits<double>::infinity();
        for (const auto& v : sample.values) {
            lo = std::min(lo, v[j]);
            hi = std::max(hi, v[j]);
        }
        if (hi - lo < flat_tol) {
            band_is_flat[j] = true;
            ThresholdEntry entry;
            entry.value = 0.5 * (lo + hi);
            entry.kind = ThresholdKind::FlatBand;
            entry.xi = Eigen::VectorXd::Zero(d);
            entry.bands = {j};
            entry.flat_spread = hi - lo;
            found.push_back(std::move(entry));
        }
    }

    // Grid classification of critical candidates.
    std::vector<Candidate> candidates;
    for (long node = 0; node < count; ++node) {
        const Eigen::VectorXi mu = sample.node_cell(node);
        for (int j = 0; j < n; ++j) {
            if (band_is_flat[j]) continue;
            bool all_min = true, all_max = true, any_strict = false, extremal = true;
            for (int a = 0; a < d; ++a) {
                Eigen::VectorXi up = mu, down = mu;
                up[a] += 1;
                down[a] -= 1;
                const double du = sample.values[sample.node_index(up)][j] -
                                  sample.values[node][j];
                const double dd = sample.values[sample.node_index(down)][j] -
                                  sample.values[node][j];
                const bool min_ok = du >= -tie_tol && dd >= -tie_tol;
                const bool max_ok = du <= tie_tol && dd <= tie_tol;
                all_min = all_min && min_ok;
                all_max = all_max && max_ok;
                extremal = extremal && (min_ok || max_ok);
                any_strict = any_strict || !(min_ok && max_ok);
            }
            if (!any_strict) continue;  // locally flat, handled above
            if (all_min)
                candidates.push_back({ThresholdKind::BandMin, node, j});
            else if (all_max)
                candidates.push_back({ThresholdKind::BandMax, node, j});
            else if (extremal)
                candidates.push_back({ThresholdKind::Saddle, node, j});
        }
        // Near-crossings: grid-local minima of the gap between adjacent bands.
        for (int j = 0; j + 1 < n; ++j) {
            if (band_is_flat[j] && band_is_flat[j + 1]) continue;
            const double gap = sample.values[node][j + 1] - sample.values[node][j];
            bool local_min = true;
            for (int a = 0; a < d && local_min; ++a) {
                for (int sign : {+1, -1}) {
                    Eigen::VectorXi nb = mu;
                    nb[a] += sign;
                    const auto& v = sample.values[sample.node_index(nb)];
                    if (v[j + 1] - v[j] < gap - tie_tol) local_min = false;
                }
            }
            if (local_min) candidates.push_back({ThresholdKind::Crossing, node, j});
        }
    }

    // Refinement (each candidate writes its own slot; reduction below is ordered).
    std::vector<ThresholdEntry> refined(candidates.size());
    std::vector<char> keep(candidates.size(), 0);
    const double step0 = 0.5 / grid;
    parallel_for(static_cast<long>(candidates.size()), [&](long ci) {
        const Candidate& cand = candidates[ci];
        ThresholdEntry entry;
        entry.kind = cand.kind;
        entry.bands = {cand.band};
        Eigen::VectorXd x = sample.node_xi(cand.node);

        if (cand.kind == ThresholdKind::Crossing) {
            entry.bands = {cand.band, cand.band + 1};
            x = compass_minimize(
                [&](const Eigen::VectorXd& p) { return band_gap(g, p, cand.band); }, x,
                step0, refine_iters);
            const auto& lambda = solve_fiber(g, x, false).eigenvalues();
            const double gap = lambda[cand.band + 1] - lambda[cand.band];
            if (gap > crossing_accept) return;  // bands come close but do not touch
            entry.value = 0.5 * (lambda[cand.band] + lambda[cand.band + 1]);
            entry.xi = x;
            entry.converged = true;
            refined[ci] = std::move(entry);
            keep[ci] = 1;
            return;
        }

        if (cand.kind == ThresholdKind::Saddle) {
            auto objective = [&](const Eigen::VectorXd& p) {
                const BandGradient bg = band_gradient(g, p, cand.band, degeneracy_tol);
                if (bg.degenerate) return std::numeric_limits<double>::infinity();
                return bg.gradient.squaredNorm();
            };
            x = compass_minimize(objective, x, step0, refine_iters);
            const double residual = objective(x);
            entry.value = band_value(g, x, cand.band);
            entry.xi = x;
            entry.converged = residual <= grad_tol * grad_tol;
            refined[ci] = std::move(entry);
            keep[ci] = 1;
            return;
        }

        // Extrema: projected gradient with step halving.
        const double direction = cand.kind == ThresholdKind::BandMin ? -1.0 : +1.0;
        double value = band_value(g, x, cand.band);
        double step = step0;
        bool degenerate = false;
        Eigen::VectorXd grad = Eigen::VectorXd::Zero(d);
        for (int it = 0; it < refine_iters; ++it) {
            const BandGradient bg = band_gradient(g, x, cand.band, degeneracy_tol);
            if (bg.degenerate) {
                degenerate = true;
                break;
            }
            grad = bg.gradient;
            if (grad.norm() < 1e-14) break;
            const Eigen::VectorXd trial = reduce_torus(x + direction * step * grad);
            const double trial_value = band_value(g, trial, cand.band);
            const bool improved = cand.kind == ThresholdKind::BandMin ? trial_value < value
                                                                      : trial_value > value;
            if (improved) {
                x = trial;
                value = trial_value;
            } else {
                step *= 0.5;
            }
        }
        entry.value = value;
        entry.xi = x;
        entry.converged = !degenerate && grad.norm() <= grad_tol;
        refined[ci] = std::move(entry);
        keep[ci] = 1;
    });

    for (std::size_t ci = 0; ci < candidates.size(); ++ci)
        if (keep[ci]) found.push_back(refined[ci]);

    // Merge: sort by value, cluster within the merge tolerance, keep the entry
    // with the strongest kind (flat over crossing over extrema over saddles).
    std::stable_sort(found.begin(), found.end(),
                     [](const ThresholdEntry& a, const ThresholdEntry& b) {
                         return a.value < b.value;
                     });
    for (std::size_t i = 0; i < found.size();) {
        std::size_t j = i + 1;
        std::size_t best = i;
        while (j < found.size() && found[j].value - found[i].value <= report.merge_tol) {
            auto rank = [](const ThresholdEntry& e) {
                return priority(e.kind) * 2 + (e.converged ? 1 : 0);
            };
            if (rank(found[j]) > rank(found[best])) best = j;
            ++j;
        }
        report.entries.push_back(found[best]);
        i = j;
    }
    return report;
}

MourreReport mourre_constant(const QuotientGraph& g, Interval interval, int grid,
                             double degeneracy_tol) {
    if (interval.hi < interval.lo) throw ValidationError("interval endpoints out of order");
    if (grid < 1) throw ValidationError("grid resolution must be >= 1");
    const int n = g.n();
    const int d = g.d();

    BandSample shape;  // index helper only
    shape.grid = grid;
    shape.dim = d;
    const long count = shape.node_count();

    if (degeneracy_tol <= 0.0) {
        // Auto tolerance relative to the spectral range seen on a coarse scan.
        double lo = std::numeric_limits<double>::infinity();
        double hi = -lo;
        const BandSample coarse = sample_bands(g, std::min(grid, 16), false);
        for (const auto& v : coarse.values) {
            lo = std::min(lo, v.minCoeff());
            hi = std::max(hi, v.maxCoeff());
        }
        degeneracy_tol = 1e-8 * (1.0 + (hi - lo));
    }

    std::vector<double> node_bound(count, std::numeric_limits<double>::infinity());
    std::vector<char> node_degenerate(count, 0);
    parallel_for(count, [&](long node) {
        const Eigen::VectorXd xi = shape.node_xi(node);
        auto solver = solve_fiber(g, xi);
        const Eigen::VectorXd& lambda = solver.eigenvalues();
        if (!(lambda[0] <= interval.hi && lambda[n - 1] >= interval.lo)) return;

        std::vector<Eigen::MatrixXcd> dh;
        dh.reserve(d);
        for (int k = 0; k < d; ++k) dh.push_back(fiber_derivative(g, xi, k));

        double bound = std::numeric_limits<double>::infinity();
        int begin = 0;
        while (begin < n) {
            int end = begin;
            while (end + 1 < n && lambda[end + 1] - lambda[end] <= degeneracy_tol) ++end;
            bool meets = false;
            for (int i = begin; i <= end && !meets; ++i)
                meets = interval.contains(lambda[i]);
            if (meets) {
                const int size = end - begin + 1;
                if (size == 1) {
                    const Eigen::VectorXcd v = solver.eigenvectors().col(begin);
                    double grad2 = 0.0;
                    for (int k = 0; k < d; ++k) {
                        const double gk = std::real(std::complex<double>(v.dot(dh[k] * v)));
                        grad2 += gk * gk;
                    }
                    bound = std::min(bound, grad2);
                } else {
                    node_degenerate[node] = 1;
                    const Eigen::MatrixXcd vc = solver.eigenvectors().middleCols(begin, size);
                    Eigen::MatrixXcd sum = Eigen::MatrixXcd::Zero(size, size);
                    for (int k = 0; k < d; ++k) {
                        Eigen::MatrixXcd mk = vc.adjoint() * dh[k] * vc;
                        mk = 0.5 * (mk + mk.adjoint()).eval();
                        sum += mk * mk;
                    }
                    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> cluster(
                        sum, Eigen::EigenvaluesOnly);
                    bound = std::min(bound, cluster.eigenvalues()[0]);
                }
            }
            begin = end + 1;
        }
        node_bound[node] = bound;
    });

    MourreReport report;
    report.interval = interval;
    report.grid = grid;
    report.bound = std::numeric_limits<double>::infinity();
    for (long node = 0; node < count; ++node) {
        if (std::isfinite(node_bound[node])) {
            ++report.contributing_nodes;
            report.bound = std::min(report.bound, node_bound[node]);
        }
        if (node_degenerate[node]) report.degenerate_nodes.push_back(node);
    }
    if (report.contributing_nodes == 0) report.bound = std::numeric_limits<double>::infinity();
    if (report.bound < 0.0 && report.bound > -1e-12) report.bound = 0.0;

    const int threshold_grid = d <= 2 ? 64 : 16;
    report.meets_thresholds = estimate_thresholds(g, threshold_grid, 40).meets(interval);
    return report;
}

}  // namespace cspec
