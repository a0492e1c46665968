#include "cspec/symbols.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <memory>
#include <numbers>
#include <set>

namespace cspec {

Eigen::MatrixXcd SymbolCoefficient::eval(const Eigen::VectorXi& mu) const {
    auto it = table.find(to_key(mu));
    if (it != table.end()) return it->second;
    if (generator) return generator(mu);
    if (envelope) {
        const double radius = (mu + envelope->shift).cast<double>().norm();
        return envelope->amplitude * std::pow(1.0 + radius, -envelope->exponent) *
               envelope->matrix;
    }
    return Eigen::MatrixXcd::Zero(size, size);
}

SymbolCoefficient* ToroidalSymbol::find_term(const Eigen::VectorXi& nu) {
    for (auto& [v, coeff] : terms)
        if (v == nu) return &coeff;
    return nullptr;
}

Eigen::MatrixXcd ToroidalSymbol::eval(const Eigen::VectorXd& xi,
                                      const Eigen::VectorXi& mu) const {
    Eigen::MatrixXcd out = Eigen::MatrixXcd::Zero(size, size);
    for (const auto& [nu, coeff] : terms) {
        const double phase = 2.0 * std::numbers::pi * xi.dot(nu.cast<double>());
        out += std::polar(1.0, phase) * coeff.eval(mu);
    }
    return out;
}

CoeffMap apply_op(const ToroidalSymbol& a, const CoeffMap& coeffs) {
    CoeffMap out;
    for (const auto& [key, value] : coeffs) {
        const Eigen::VectorXi cell = from_key(key);
        for (const auto& [nu, coeff] : a.terms) {
            const Eigen::MatrixXcd block = coeff.eval(cell);
            if (block.isZero(0.0)) continue;
            const CellKey target = to_key(cell - nu);
            auto it = out.find(target);
            if (it == out.end())
                out[target] = block * value;
            else
                it->second += block * value;
        }
    }
    return out;
}

ToroidalSymbol adjoint_symbol(const ToroidalSymbol& a) {
    ToroidalSymbol out;
    out.dim = a.dim;
    out.size = a.size;
    out.terms.reserve(a.terms.size());
    for (const auto& [nu, coeff] : a.terms) {
        SymbolCoefficient adj;
        adj.size = coeff.size;
        for (const auto& [key, block] : coeff.table)
            adj.table[to_key(from_key(key) - nu)] = block.adjoint();
        if (coeff.envelope) {
            SymbolCoefficient::Envelope env = *coeff.envelope;
            env.shift = coeff.envelope->shift + nu;
            env.matrix = coeff.envelope->matrix.adjoint();
            adj.envelope = env;
        }
        if (coeff.generator) {
            auto base = coeff.generator;
            Eigen::VectorXi shift = nu;
            adj.generator = [base, shift](const Eigen::VectorXi& mu) {
                return base(mu + shift).adjoint().eval();
            };
        }
        out.terms.emplace_back(-nu, std::move(adj));
    }
    return out;
}

Eigen::MatrixXcd window_matrix(const ToroidalSymbol& a,
                               const std::vector<Eigen::VectorXi>& cells) {
    const int n = a.size;
    const long dim = static_cast<long>(cells.size()) * n;
    std::map<CellKey, long> rank;
    for (std::size_t c = 0; c < cells.size(); ++c)
        rank[to_key(cells[c])] = static_cast<long>(c);

    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(dim, dim);
    for (std::size_t c = 0; c < cells.size(); ++c) {
        for (int j = 0; j < n; ++j) {
            CoeffMap basis;
            basis[to_key(cells[c])] = Eigen::VectorXcd::Unit(n, j);
            const CoeffMap image = apply_op(a, basis);
            for (const auto& [key, value] : image) {
                auto it = rank.find(key);
                if (it == rank.end()) continue;
                m.block(it->second * n, static_cast<long>(c) * n + j, n, 1) = value;
            }
        }
    }
    return m;
}

namespace {

/// T(e)(mu): change of the outgoing measure ratio at the origin of e.
double t_value(const QuotientGraph& g, const PerturbationSpec& p, int edge,
               const Eigen::VectorXi& mu) {
    const auto& e = g.oriented_edges[edge];
    const double periodic = e.m0 / g.vertices[e.origin].m0;
    return edge_measure(g, p, edge, mu) / vertex_measure(g, p, mu, e.origin) - periodic;
}

/// K(e)(mu): change of the symmetrized hop weight; the measure is evaluated
/// on the lift of e whose origin sits in cell mu - eta(e).
double k_value(const QuotientGraph& g, const PerturbationSpec& p, int edge,
               const Eigen::VectorXi& mu) {
    const auto& e = g.oriented_edges[edge];
    const Eigen::VectorXi base = mu - e.index;
    const double periodic =
        e.m0 / std::sqrt(g.vertices[e.origin].m0 * g.vertices[e.terminus].m0);
    return edge_measure(g, p, edge, base) /
               std::sqrt(vertex_measure(g, p, base, e.origin) *
                         vertex_measure(g, p, mu, e.terminus)) -
           periodic;
}

/// Cells where table-backed perturbations can make K or T differ from zero:
/// every table cell dilated by every edge index.
std::vector<Eigen::VectorXi> dirty_cells(const QuotientGraph& g, const PerturbationSpec& p) {
    std::set<CellKey> keys;
    auto add_with_dilation = [&](const CellKey& key) {
        const Eigen::VectorXi cell = from_key(key);
        keys.insert(to_key(cell));
        for (const auto& e : g.oriented_edges) {
            keys.insert(to_key(cell + e.index));
            keys.insert(to_key(cell - e.index));
        }
    };
    for (const auto& [key, value] : p.vertex_measure_delta) add_with_dilation(key.first);
    for (const auto& [key, value] : p.edge_measure_delta) add_with_dilation(key.first);
    std::vector<Eigen::VectorXi> cells;
    cells.reserve(keys.size());
    for (const auto& key : keys) cells.push_back(from_key(key));
    return cells;
}

}  // namespace

ToroidalSymbol perturbation_symbol(const QuotientGraph& g, const PerturbationSpec& p) {
    if (!p.potential_short.empty() || p.potential_short_envelope || p.potential_long)
        throw ValidationError(
            "perturbation_symbol handles measure perturbations only; "
            "use potential_symbols for R_s and R_l");

    const int n = g.n();
    ToroidalSymbol symbol;
    symbol.dim = g.d();
    symbol.size = n;

    auto term = [&](const Eigen::VectorXi& nu) -> SymbolCoefficient& {
        if (SymbolCoefficient* c = symbol.find_term(nu)) return *c;
        SymbolCoefficient fresh;
        fresh.size = n;
        symbol.terms.emplace_back(nu, std::move(fresh));
        return symbol.terms.back().second;
    };
    const Eigen::VectorXi zero = Eigen::VectorXi::Zero(g.d());
    term(zero);
    for (const auto& e : g.oriented_edges) {
        term(e.index);
        term(-e.index);
    }

    const bool finite = !p.vertex_measure_envelope && !p.edge_measure_envelope;
    if (finite) {
        const auto cells = dirty_cells(g, p);
        auto add = [&](SymbolCoefficient& coeff, const Eigen::VectorXi& mu, int row, int col,
                       double value) {
            if (value == 0.0) return;
            auto [it, inserted] =
                coeff.table.try_emplace(to_key(mu), Eigen::MatrixXcd::Zero(n, n));
            it->second(row, col) += value;
        };
        for (const auto& mu : cells) {
            for (int k = 0; k < static_cast<int>(g.oriented_edges.size()); ++k) {
                const auto& e = g.oriented_edges[k];
                add(term(zero), mu, e.origin, e.origin, t_value(g, p, k, mu));
                add(term(e.index), mu, e.origin, e.terminus, -0.5 * k_value(g, p, k, mu));
                // dagger part of the same edge: (-eta, mu -> K(mu+eta)* )
                const Eigen::VectorXi shifted = mu - e.index;
                add(term(-e.index), shifted, e.terminus, e.origin,
                    -0.5 * k_value(g, p, k, mu));
            }
        }
        // drop exact-zero blocks left by cancellations
        for (auto& [nu, coeff] : symbol.terms) {
            for (auto it = coeff.table.begin(); it != coeff.table.end();)
                it = it->second.isZero(0.0) ? coeff.table.erase(it) : std::next(it);
        }
        return symbol;
    }

    // Envelope-backed measures: generator closures evaluate K and T exactly.
    auto shared = std::make_shared<std::pair<QuotientGraph, PerturbationSpec>>(g, p);
    for (auto& [nu, coeff] : symbol.terms) {
        const Eigen::VectorXi nu_copy = nu;
        coeff.generator = [shared, nu_copy, n](const Eigen::VectorXi& mu) {
            const QuotientGraph& gg = shared->first;
            const PerturbationSpec& pp = shared->second;
            Eigen::MatrixXcd block = Eigen::MatrixXcd::Zero(n, n);
            const bool is_zero = nu_copy.isZero();
            for (int k = 0; k < static_cast<int>(gg.oriented_edges.size()); ++k) {
                const auto& e = gg.oriented_edges[k];
                if (is_zero)
                    block(e.origin, e.origin) += t_value(gg, pp, k, mu);
                if (e.index == nu_copy)
                    block(e.origin, e.terminus) += -0.5 * k_value(gg, pp, k, mu);
                if (e.index == -nu_copy)
                    block(e.terminus, e.origin) += -0.5 * k_value(gg, pp, k, mu + e.index);
            }
            return block;
        };
    }
    return symbol;
}

PathTables default_paths(const QuotientGraph& g) {
    const int n = g.n();
    const int d = g.d();
    const int radius = n + d + 2;

    struct State {
        Eigen::VectorXi cell;
        int vertex;
    };
    std::map<std::pair<CellKey, int>, std::pair<std::pair<CellKey, int>, int>> parent;
    std::deque<State> queue;
    const Eigen::VectorXi zero = Eigen::VectorXi::Zero(d);
    queue.push_back({zero, 0});
    parent[{to_key(zero), 0}] = {{to_key(zero), 0}, -1};

    while (!queue.empty()) {
        State s = queue.front();
        queue.pop_front();
        for (int k : g.outgoing[s.vertex]) {
            const auto& e = g.oriented_edges[k];
            Eigen::VectorXi next = s.cell + e.index;
            if (next.cwiseAbs().maxCoeff() > radius) continue;
            auto key = std::make_pair(to_key(next), e.terminus);
            if (parent.count(key)) continue;
            parent[key] = {{to_key(s.cell), s.vertex}, k};
            queue.push_back({next, e.terminus});
        }
    }

    auto walk_to = [&](const Eigen::VectorXi& cell, int vertex) {
        auto key = std::make_pair(to_key(cell), vertex);
        if (!parent.count(key))
            throw ValidationError("crystal lift is not connected: no path to requested site");
        std::vector<int> edges;
        while (parent[key].second >= 0) {
            edges.push_back(parent[key].second);
            key = parent[key].first;
        }
        std::reverse(edges.begin(), edges.end());
        return edges;
    };

    PathTables paths;
    paths.to_vertex.resize(n);
    for (int j = 0; j < n; ++j) paths.to_vertex[j] = walk_to(zero, j);
    paths.to_generator.resize(d);
    for (int a = 0; a < d; ++a) {
        Eigen::VectorXi delta = Eigen::VectorXi::Zero(d);
        delta[a] = 1;
        paths.to_generator[a] = walk_to(delta, 0);
    }
    return paths;
}

std::pair<ToroidalSymbol, ToroidalSymbol> potential_symbols(const QuotientGraph& g,
                                                            const PerturbationSpec& p,
                                                            const PathTables* paths) {
    const int n = g.n();
    const int d = g.d();

    PathTables computed;
    if (p.potential_long && n > 1) {
        if (!paths) {
            computed = default_paths(g);
            paths = &computed;
        }
        if (static_cast<int>(paths->to_vertex.size()) < n ||
            static_cast<int>(paths->to_generator.size()) < d)
            throw ValidationError("path tables are incomplete for this crystal");
    }

    ToroidalSymbol r_s;
    r_s.dim = d;
    r_s.size = n;
    ToroidalSymbol r_l;
    r_l.dim = d;
    r_l.size = n;
    const Eigen::VectorXi zero = Eigen::VectorXi::Zero(d);

    SymbolCoefficient cs;
    cs.size = n;
    const bool finite_short = !p.potential_short_envelope;
    if (finite_short && !p.potential_long) {
        for (const auto& [key, value] : p.potential_short) {
            auto [it, inserted] =
                cs.table.try_emplace(key.first, Eigen::MatrixXcd::Zero(n, n));
            it->second(key.second, key.second) += value;
        }
    } else {
        auto shared = std::make_shared<std::pair<QuotientGraph, PerturbationSpec>>(g, p);
        cs.generator = [shared, n](const Eigen::VectorXi& mu) {
            Eigen::MatrixXcd block = Eigen::MatrixXcd::Zero(n, n);
            const double base_long = long_potential(shared->second, mu);
            for (int j = 0; j < n; ++j) {
                // R_l is cell-constant, so the telescoped correction
                // R_l(mu x_j) - R_l(mu x_1) cancels identically here.
                block(j, j) = short_potential(shared->first, shared->second, mu, j) +
                              long_potential(shared->second, mu) - base_long;
            }
            return block;
        };
    }
    r_s.terms.emplace_back(zero, std::move(cs));

    SymbolCoefficient cl;
    cl.size = n;
    if (p.potential_long) {
        SymbolCoefficient::Envelope env;
        env.amplitude = p.potential_long->amplitude;
        env.exponent = p.potential_long->exponent;
        env.shift = zero;
        env.matrix = Eigen::MatrixXcd::Identity(n, n);
        cl.envelope = env;
    }
    r_l.terms.emplace_back(zero, std::move(cl));
    return {std::move(r_s), std::move(r_l)};
}

MatrixField difference_op(const MatrixField& f, const Eigen::VectorXi& nu) {
    Eigen::VectorXi shift = nu;
    return [f, shift](const Eigen::VectorXi& mu) {
        return (f(mu + shift) - f(mu)).eval();
    };
}

std::vector<TelescopeStep> telescoping_decomposition(const Eigen::VectorXi& nu) {
    std::vector<TelescopeStep> steps;
    Eigen::VectorXi position = Eigen::VectorXi::Zero(nu.size());
    for (int a = 0; a < nu.size(); ++a) {
        const int sign = nu[a] >= 0 ? +1 : -1;
        for (int c = 0; c < std::abs(nu[a]); ++c) {
            TelescopeStep step;
            step.axis = a;
            step.sign = sign;
            if (sign > 0) {
                step.shift = position;
                position[a] += 1;
            } else {
                position[a] -= 1;
                step.shift = position;
            }
            steps.push_back(std::move(step));
        }
    }
    return steps;
}

MatrixField difference_op_telescoped(const MatrixField& f, const Eigen::VectorXi& nu) {
    auto steps = telescoping_decomposition(nu);
    return [f, steps](const Eigen::VectorXi& mu) {
        Eigen::MatrixXcd out;
        bool first = true;
        for (const auto& step : steps) {
            Eigen::VectorXi at = mu + step.shift;
            Eigen::VectorXi ahead = at;
            ahead[step.axis] += 1;
            Eigen::MatrixXcd inc = static_cast<double>(step.sign) * (f(ahead) - f(at));
            if (first) {
                out = inc;
                first = false;
            } else {
                out += inc;
            }
        }
        if (first) {
            Eigen::MatrixXcd zero = f(mu);
            zero.setZero();
            return zero;
        }
        return out;
    };
}

std::string to_string(DecayMode mode) {
    return mode == DecayMode::Short ? "short" : "long";
}

std::string to_string(DecayClass c) {
    switch (c) {
        case DecayClass::ConvergentEvidence: return "convergent-evidence";
        case DecayClass::DivergentEvidence: return "divergent-evidence";
        case DecayClass::Inconclusive: return "inconclusive";
    }
    return "unknown";
}

namespace {

/// Deterministic candidate set for sup over lambda < |mu| < 2 lambda:
/// near-minimal-norm lattice points (axis and near-axis), mid-shell and
/// near-outer points, diagonals, plus caller probes falling in the shell.
std::vector<Eigen::VectorXi> shell_candidates(double lo, double hi, int dim,
                                              const std::vector<Eigen::VectorXi>& probes) {
    std::set<CellKey> keys;
    auto push = [&](Eigen::VectorXi point) {
        const double r = point.cast<double>().norm();
        if (r > lo && r < hi) keys.insert(to_key(point));
    };

    const long q_in = static_cast<long>(std::floor(lo)) + 1;
    const long q_out = static_cast<long>(std::ceil(hi)) - 1;
    const long q_mid = (q_in + q_out) / 2;
    for (long q : {q_in, q_in + 1, q_mid, q_out}) {
        if (q <= 0) continue;
        for (int a = 0; a < dim; ++a) {
            for (int sign : {+1, -1}) {
                Eigen::VectorXi point = Eigen::VectorXi::Zero(dim);
                point[a] = static_cast<int>(sign * q);
                push(point);
            }
        }
    }
    if (dim >= 2) {
        // minimal-norm points just above an integer radius: (q, +-1, 0, ...)
        const long base = static_cast<long>(std::floor(lo));
        for (long q : {base, q_mid, q_out}) {
            if (q <= 0) continue;
            for (int a = 0; a < dim; ++a) {
                for (int b = 0; b < dim; ++b) {
                    if (a == b) continue;
                    for (int sa : {+1, -1}) {
                        for (int sb : {+1, -1}) {
                            Eigen::VectorXi point = Eigen::VectorXi::Zero(dim);
                            point[a] = static_cast<int>(sa * q);
                            point[b] = sb;
                            push(point);
                        }
                    }
                }
            }
        }
        const long diag_in =
            static_cast<long>(std::floor(lo / std::sqrt(static_cast<double>(dim)))) + 1;
        for (long c : {diag_in, diag_in + 1}) {
            if (c <= 0) continue;
            for (int sign : {+1, -1}) {
                push(Eigen::VectorXi::Constant(dim, static_cast<int>(sign * c)));
            }
        }
    }
    for (const auto& probe : probes) push(probe);

    std::vector<Eigen::VectorXi> out;
    out.reserve(keys.size());
    for (const auto& key : keys) out.push_back(from_key(key));
    return out;
}

}  // namespace

DecayReport check_decay(const ScalarField& values, DecayMode mode, int max_level, int dim,
                        const std::vector<Eigen::VectorXi>& probes) {
    if (max_level < 1) throw ValidationError("decay check needs at least one dyadic level");
    DecayReport report;
    report.mode = mode;

    double running = 0.0;
    for (int k = 0; k <= max_level; ++k) {
        const double lambda = std::ldexp(1.0, k);
        double sup = 0.0;
        double arg_radius = lambda;
        for (const auto& point : shell_candidates(lambda, 2.0 * lambda, dim, probes)) {
            const double value = std::abs(values(point));
            if (value > sup) {
                sup = value;
                arg_radius = point.cast<double>().norm();
            }
        }
        report.lambdas.push_back(lambda);
        report.sups.push_back(sup);
        report.arg_radii.push_back(arg_radius);
        running += sup * lambda;
        report.partial_sums.push_back(running);
    }

    // Log-log fit of sup against 1 + radius over nonzero shells.
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    int count = 0;
    for (std::size_t k = 0; k < report.sups.size(); ++k) {
        if (report.sups[k] <= 0.0) continue;
        const double x = std::log(1.0 + report.arg_radii[k]);
        const double y = std::log(report.sups[k]);
        sx += x;
        sy += y;
        sxx += x * x;
        sxy += x * y;
        ++count;
    }
    if (count >= 2 && sxx * count - sx * sx > 0) {
        report.fitted_exponent = (count * sxy - sx * sy) / (count * sxx - sx * sx);
    } else {
        report.fitted_exponent = 0.0;
    }

    const std::size_t levels = report.sups.size();
    const bool tail_zero = levels >= 2 && report.sups[levels - 1] == 0.0 &&
                           report.sups[levels - 2] == 0.0;
    if (running == 0.0 || tail_zero) {
        report.classification = DecayClass::ConvergentEvidence;
    } else if (count >= 2 && report.fitted_exponent < -1.0 - 1e-3) {
        report.classification = DecayClass::ConvergentEvidence;
    } else if (count >= 2 && report.fitted_exponent >= -1.0 + 1e-3) {
        report.classification = DecayClass::DivergentEvidence;
    } else {
        report.classification = DecayClass::Inconclusive;
    }
    return report;
}

HypothesisReports check_hypotheses(const QuotientGraph& g, const PerturbationSpec& p,
                                   int max_level) {
    HypothesisReports reports;
    std::vector<Eigen::VectorXi> probes = dirty_cells(g, p);
    for (const auto& [key, value] : p.potential_short) probes.push_back(from_key(key.first));

    reports.measure_short = check_decay(
        [&](const Eigen::VectorXi& mu) {
            double worst = 0.0;
            for (int k = 0; k < static_cast<int>(g.oriented_edges.size()); ++k)
                worst = std::max(worst, std::abs(t_value(g, p, k, mu)));
            return worst;
        },
        DecayMode::Short, max_level, g.d(), probes);

    reports.potential_short = check_decay(
        [&](const Eigen::VectorXi& mu) {
            double worst = 0.0;
            for (int j = 0; j < g.n(); ++j)
                worst = std::max(worst, std::abs(short_potential(g, p, mu, j)));
            return worst;
        },
        DecayMode::Short, max_level, g.d(), probes);

    reports.has_long = p.potential_long.has_value();
    if (reports.has_long) {
        for (int a = 0; a < g.d(); ++a) {
            Eigen::VectorXi delta = Eigen::VectorXi::Zero(g.d());
            delta[a] = 1;
            reports.potential_long_axes.push_back(check_decay(
                [&](const Eigen::VectorXi& mu) {
                    return std::abs(long_potential(p, mu + delta) - long_potential(p, mu));
                },
                DecayMode::Long, max_level, g.d(), probes));
        }
        // vanishing-at-infinity probe beyond the last shell
        const double far = std::ldexp(1.0, max_level);
        for (double factor : {1.0, 1.5, 2.0}) {
            Eigen::VectorXi point = Eigen::VectorXi::Zero(g.d());
            point[0] = static_cast<int>(far * factor);
            reports.potential_long_vanishing_sup = std::max(
                reports.potential_long_vanishing_sup, std::abs(long_potential(p, point)));
        }
    }
    return reports;
}

}  // namespace cspec
