#include "cspec/crystal.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <sstream>

namespace cspec {

using json = nlohmann::ordered_json;

QuotientGraph make_graph(int dimension, std::vector<Vertex> vertices,
                         const std::vector<OrientedEdge>& unoriented) {
    QuotientGraph g;
    g.dimension = dimension;
    g.vertices = std::move(vertices);
    g.oriented_edges.reserve(2 * unoriented.size());
    for (const auto& e : unoriented) {
        g.oriented_edges.push_back(e);
        OrientedEdge rev;
        rev.origin = e.terminus;
        rev.terminus = e.origin;
        rev.index = -e.index;
        rev.m0 = e.m0;
        g.oriented_edges.push_back(rev);
    }
    g.outgoing.assign(g.vertices.size(), {});
    for (int k = 0; k < static_cast<int>(g.oriented_edges.size()); ++k) {
        const auto& e = g.oriented_edges[k];
        if (e.origin < 0 || e.origin >= g.n() || e.terminus < 0 || e.terminus >= g.n())
            throw ValidationError("edge endpoint out of range");
        g.outgoing[e.origin].push_back(k);
    }
    auto diags = validate(g);
    if (!diags.empty()) throw ValidationError(diags.front());
    return g;
}

double degree(const QuotientGraph& g, int j) {
    if (j < 0 || j >= g.n()) throw ValidationError("vertex index out of range");
    double sum = 0.0;
    for (int k : g.outgoing[j]) sum += g.oriented_edges[k].m0;
    return sum / g.vertices[j].m0;
}

std::vector<std::string> validate(const QuotientGraph& g) {
    std::vector<std::string> diags;
    if (g.dimension < 1) diags.push_back("dimension must be >= 1");
    if (g.vertices.empty()) diags.push_back("graph must have at least one vertex");

    std::vector<std::string> ids;
    for (const auto& v : g.vertices) ids.push_back(v.id);
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end())
        diags.push_back("vertex ids must be unique");

    for (const auto& v : g.vertices) {
        if (!(v.m0 > 0.0))
            diags.push_back("vertex " + v.id + ": measure must be strictly positive");
    }

    const int ne = static_cast<int>(g.oriented_edges.size());
    if (ne % 2 != 0) diags.push_back("oriented edge count must be even (reversal pairs)");

    for (int k = 0; k < ne; ++k) {
        const auto& e = g.oriented_edges[k];
        std::ostringstream name;
        name << "edge (" << e.origin << "," << e.terminus << ",";
        for (int a = 0; a < e.index.size(); ++a) name << (a ? "," : "(") << e.index[a];
        name << "))";
        if (e.origin < 0 || e.origin >= g.n() || e.terminus < 0 || e.terminus >= g.n()) {
            diags.push_back(name.str() + ": endpoint out of range");
            continue;
        }
        if (e.index.size() != g.dimension)
            diags.push_back(name.str() + ": index must have dimension entries");
        if (!(e.m0 > 0.0)) diags.push_back(name.str() + ": measure must be strictly positive");
        if (k % 2 == 1) {
            const auto& p = g.oriented_edges[k - 1];
            bool paired = p.origin == e.terminus && p.terminus == e.origin &&
                          p.index.size() == e.index.size() && p.index == -e.index &&
                          p.m0 == e.m0;
            if (!paired) diags.push_back(name.str() + " has no reversal");
        }
    }

    if (g.outgoing.size() != g.vertices.size()) {
        diags.push_back("adjacency lists out of sync with vertex list");
    } else {
        for (int j = 0; j < g.n(); ++j)
            for (int k : g.outgoing[j])
                if (k < 0 || k >= ne || g.oriented_edges[k].origin != j)
                    diags.push_back("adjacency list of vertex " + g.vertices[j].id +
                                    " is inconsistent");
    }
    return diags;
}

namespace {

Eigen::VectorXi unit_index(int d, int axis, int sign = 1) {
    Eigen::VectorXi v = Eigen::VectorXi::Zero(d);
    v[axis] = sign;
    return v;
}

QuotientGraph make_zd(int d) {
    std::vector<Vertex> vs{{"v", 1.0, 0.0}};
    std::vector<OrientedEdge> es;
    for (int a = 0; a < d; ++a) es.push_back({0, 0, unit_index(d, a), 1.0});
    return make_graph(d, vs, es);
}

}  // namespace

QuotientGraph builtin(const std::string& name) {
    if (name == "zd:1") return make_zd(1);
    if (name == "zd:2") return make_zd(2);
    if (name == "zd:3") return make_zd(3);
    if (name == "hexagonal") {
        std::vector<Vertex> vs{{"x1", 1.0, 0.0}, {"x2", 1.0, 0.0}};
        std::vector<OrientedEdge> es{
            {0, 1, Eigen::VectorXi::Zero(2), 1.0},
            {0, 1, unit_index(2, 0), 1.0},
            {0, 1, unit_index(2, 1), 1.0},
        };
        return make_graph(2, vs, es);
    }
    if (name == "kagome") {
        // Corner-sharing triangles: each sublattice pair is linked twice, once
        // inside the cell and once across a lattice vector. Phases around both
        // triangles multiply to one, which produces the flat band.
        std::vector<Vertex> vs{{"x1", 1.0, 0.0}, {"x2", 1.0, 0.0}, {"x3", 1.0, 0.0}};
        Eigen::VectorXi z = Eigen::VectorXi::Zero(2);
        Eigen::VectorXi e1 = unit_index(2, 0), e2 = unit_index(2, 1);
        std::vector<OrientedEdge> es{
            {0, 1, z, 1.0}, {0, 2, z, 1.0}, {1, 2, z, 1.0},
            {0, 1, -e1, 1.0}, {0, 2, -e2, 1.0}, {1, 2, e1 - e2, 1.0},
        };
        return make_graph(2, vs, es);
    }
    if (name == "diamond-chain") {
        // Spine vertex x1 bonded to both rhombus vertices in its own cell and
        // in the previous cell; x2, x3 carry the flat band.
        std::vector<Vertex> vs{{"x1", 1.0, 0.0}, {"x2", 1.0, 0.0}, {"x3", 1.0, 0.0}};
        Eigen::VectorXi z = Eigen::VectorXi::Zero(1);
        Eigen::VectorXi e1 = unit_index(1, 0);
        std::vector<OrientedEdge> es{
            {0, 1, z, 1.0}, {0, 2, z, 1.0}, {0, 1, -e1, 1.0}, {0, 2, -e1, 1.0},
        };
        return make_graph(1, vs, es);
    }
    throw ValidationError("unknown builtin crystal: " + name);
}

namespace {

json parse_document(const std::string& text, const char* what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& err) {
        throw ValidationError(std::string(what) + ": " + err.what());
    }
}

double require_number(const json& j, const std::string& key, const std::string& where) {
    if (!j.contains(key) || !j[key].is_number())
        throw ValidationError(where + ": missing or non-numeric field '" + key + "'");
    return j[key].get<double>();
}

Eigen::VectorXi parse_cell(const json& j, int d, const std::string& where) {
    if (!j.is_array() || static_cast<int>(j.size()) != d)
        throw ValidationError(where + ": expected an array of " + std::to_string(d) +
                              " integers");
    Eigen::VectorXi cell(d);
    for (int a = 0; a < d; ++a) {
        if (!j[a].is_number_integer())
            throw ValidationError(where + ": cell entries must be integers");
        cell[a] = j[a].get<int>();
    }
    return cell;
}

void reject_unknown_keys(const json& j, std::initializer_list<const char*> known,
                         const std::string& where) {
    for (const auto& item : j.items()) {
        bool ok = false;
        for (const char* k : known) ok = ok || item.key() == k;
        if (!ok) throw ValidationError(where + ": unknown key '" + item.key() + "'");
    }
}

}  // namespace

QuotientGraph load_crystal(const std::string& text) {
    json doc = parse_document(text, "crystal document");
    if (!doc.is_object()) throw ValidationError("crystal document: top level must be an object");
    reject_unknown_keys(doc, {"dimension", "vertices", "edges"}, "crystal document");

    if (!doc.contains("dimension") || !doc["dimension"].is_number_integer())
        throw ValidationError("crystal document: missing integer field 'dimension'");
    const int d = doc["dimension"].get<int>();
    if (d < 1) throw ValidationError("crystal document: dimension must be >= 1");

    if (!doc.contains("vertices") || !doc["vertices"].is_array() || doc["vertices"].empty())
        throw ValidationError("crystal document: missing non-empty array 'vertices'");

    std::vector<Vertex> vertices;
    std::map<std::string, int> by_id;
    for (std::size_t i = 0; i < doc["vertices"].size(); ++i) {
        const auto& jv = doc["vertices"][i];
        const std::string where = "vertices[" + std::to_string(i) + "]";
        reject_unknown_keys(jv, {"id", "m0", "r0"}, where);
        if (!jv.contains("id") || !jv["id"].is_string())
            throw ValidationError(where + ": missing string field 'id'");
        Vertex v;
        v.id = jv["id"].get<std::string>();
        v.m0 = jv.contains("m0") ? require_number(jv, "m0", where) : 1.0;
        v.r0 = jv.contains("r0") ? require_number(jv, "r0", where) : 0.0;
        if (by_id.count(v.id)) throw ValidationError(where + ": duplicate vertex id '" + v.id + "'");
        by_id[v.id] = static_cast<int>(i);
        vertices.push_back(std::move(v));
    }

    if (!doc.contains("edges") || !doc["edges"].is_array())
        throw ValidationError("crystal document: missing array 'edges'");

    std::vector<OrientedEdge> edges;
    for (std::size_t i = 0; i < doc["edges"].size(); ++i) {
        const auto& je = doc["edges"][i];
        const std::string where = "edges[" + std::to_string(i) + "]";
        reject_unknown_keys(je, {"from", "to", "index", "m0"}, where);
        OrientedEdge e;
        for (const char* endpoint : {"from", "to"}) {
            if (!je.contains(endpoint) || !je[endpoint].is_string())
                throw ValidationError(where + ": missing string field '" + endpoint + "'");
            auto it = by_id.find(je[endpoint].get<std::string>());
            if (it == by_id.end())
                throw ValidationError(where + ": unknown vertex id '" +
                                      je[endpoint].get<std::string>() + "'");
            (endpoint[0] == 'f' ? e.origin : e.terminus) = it->second;
        }
        if (!je.contains("index"))
            throw ValidationError(where + ": missing field 'index'");
        e.index = parse_cell(je["index"], d, where + ".index");
        e.m0 = je.contains("m0") ? require_number(je, "m0", where) : 1.0;
        if (!(e.m0 > 0.0)) throw ValidationError(where + ": measure must be strictly positive");
        edges.push_back(std::move(e));
    }

    return make_graph(d, std::move(vertices), edges);
}

std::string serialize(const QuotientGraph& g) {
    json doc;
    doc["dimension"] = g.dimension;
    doc["vertices"] = json::array();
    for (const auto& v : g.vertices)
        doc["vertices"].push_back({{"id", v.id}, {"m0", v.m0}, {"r0", v.r0}});
    doc["edges"] = json::array();
    for (std::size_t k = 0; k < g.oriented_edges.size(); k += 2) {
        const auto& e = g.oriented_edges[k];
        json idx = json::array();
        for (int a = 0; a < e.index.size(); ++a) idx.push_back(e.index[a]);
        doc["edges"].push_back({{"from", g.vertices[e.origin].id},
                                {"to", g.vertices[e.terminus].id},
                                {"index", idx},
                                {"m0", e.m0}});
    }
    return doc.dump(2) + "\n";
}

double PowerLawEnvelope::at(double radius, int vertex) const {
    double coeff = 1.0;
    if (vertex >= 0 && coefficients.size() > 0) {
        if (vertex >= coefficients.size()) return 0.0;
        coeff = coefficients[vertex];
    }
    return amplitude * coeff * std::pow(1.0 + radius, -exponent);
}

CellKey to_key(const Eigen::VectorXi& cell) {
    return CellKey(cell.data(), cell.data() + cell.size());
}

Eigen::VectorXi from_key(const CellKey& key) {
    Eigen::VectorXi cell(static_cast<int>(key.size()));
    for (std::size_t a = 0; a < key.size(); ++a) cell[static_cast<int>(a)] = key[a];
    return cell;
}

bool PerturbationSpec::empty() const {
    return potential_short.empty() && !potential_short_envelope && !potential_long &&
           vertex_measure_delta.empty() && !vertex_measure_envelope &&
           edge_measure_delta.empty() && !edge_measure_envelope;
}

namespace {

PowerLawEnvelope parse_envelope(const json& j, const std::string& where, bool allow_coeffs,
                                double min_exponent) {
    reject_unknown_keys(j, {"envelope", "amplitude", "exponent", "coefficients"}, where);
    if (!j.contains("envelope") || j["envelope"] != "power-law")
        throw ValidationError(where + ": only 'power-law' envelopes are supported");
    PowerLawEnvelope env;
    env.amplitude = require_number(j, "amplitude", where);
    env.exponent = require_number(j, "exponent", where);
    if (!(env.exponent > min_exponent))
        throw ValidationError(where + ": exponent must be > " + std::to_string(min_exponent));
    if (j.contains("coefficients")) {
        if (!allow_coeffs)
            throw ValidationError(where + ": per-vertex coefficients are not allowed here");
        const auto& jc = j["coefficients"];
        if (!jc.is_array()) throw ValidationError(where + ": coefficients must be an array");
        env.coefficients.resize(static_cast<int>(jc.size()));
        for (std::size_t i = 0; i < jc.size(); ++i)
            env.coefficients[static_cast<int>(i)] = jc[i].get<double>();
    }
    return env;
}

}  // namespace

PerturbationSpec load_perturbation(const std::string& text, const QuotientGraph& g) {
    json doc = parse_document(text, "perturbation document");
    if (!doc.is_object())
        throw ValidationError("perturbation document: top level must be an object");
    reject_unknown_keys(doc,
                        {"potential_short", "potential_long", "vertex_measure_delta",
                         "edge_measure_delta"},
                        "perturbation document");

    PerturbationSpec p;

    auto parse_vertex_table = [&](const json& arr, const std::string& where) {
        std::map<std::pair<CellKey, int>, double> table;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto& jt = arr[i];
            const std::string entry = where + "[" + std::to_string(i) + "]";
            reject_unknown_keys(jt, {"cell", "vertex", "value"}, entry);
            if (!jt.contains("cell") || !jt.contains("vertex") || !jt.contains("value"))
                throw ValidationError(entry + ": entries need 'cell', 'vertex', 'value'");
            Eigen::VectorXi cell = parse_cell(jt["cell"], g.d(), entry + ".cell");
            if (!jt["vertex"].is_number_integer())
                throw ValidationError(entry + ": 'vertex' must be an integer index");
            int v = jt["vertex"].get<int>();
            if (v < 0 || v >= g.n()) throw ValidationError(entry + ": vertex index out of range");
            table[{to_key(cell), v}] += jt["value"].get<double>();
        }
        return table;
    };

    auto parse_edge_table = [&](const json& arr, const std::string& where) {
        std::map<std::pair<CellKey, int>, double> table;
        const int reps = static_cast<int>(g.oriented_edges.size()) / 2;
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const auto& jt = arr[i];
            const std::string entry = where + "[" + std::to_string(i) + "]";
            reject_unknown_keys(jt, {"cell", "edge", "value"}, entry);
            if (!jt.contains("cell") || !jt.contains("edge") || !jt.contains("value"))
                throw ValidationError(entry + ": entries need 'cell', 'edge', 'value'");
            Eigen::VectorXi cell = parse_cell(jt["cell"], g.d(), entry + ".cell");
            if (!jt["edge"].is_number_integer())
                throw ValidationError(entry + ": 'edge' must be an unoriented edge index");
            int e = jt["edge"].get<int>();
            if (e < 0 || e >= reps) throw ValidationError(entry + ": edge index out of range");
            table[{to_key(cell), e}] += jt["value"].get<double>();
        }
        return table;
    };

    if (doc.contains("potential_short")) {
        const auto& sec = doc["potential_short"];
        if (sec.is_array()) {
            p.potential_short = parse_vertex_table(sec, "potential_short");
        } else if (sec.is_object() && sec.contains("envelope")) {
            p.potential_short_envelope = parse_envelope(sec, "potential_short", true, 1.0);
        } else if (sec.is_object()) {
            reject_unknown_keys(sec, {"table", "envelope"}, "potential_short");
            if (sec.contains("table"))
                p.potential_short = parse_vertex_table(sec["table"], "potential_short.table");
        } else {
            throw ValidationError("potential_short: expected a table array or an envelope");
        }
    }
    if (doc.contains("potential_long")) {
        p.potential_long = parse_envelope(doc["potential_long"], "potential_long", false, 0.0);
    }

    auto parse_section = [&](const char* key, auto parse_table, auto& table, auto& envelope) {
        if (!doc.contains(key)) return;
        const auto& sec = doc[key];
        const std::string where = key;
        if (sec.is_array()) {
            table = parse_table(sec, where);
        } else if (sec.is_object() && sec.contains("envelope")) {
            envelope = parse_envelope(sec, where, false, 1.0);
        } else if (sec.is_object()) {
            reject_unknown_keys(sec, {"table", "envelope"}, where);
            if (sec.contains("table")) table = parse_table(sec["table"], where + ".table");
            if (sec.contains("envelope"))
                envelope = parse_envelope(sec["envelope"], where + ".envelope", false, 1.0);
        } else {
            throw ValidationError(where + ": expected a table array or an envelope");
        }
    };

    parse_section("vertex_measure_delta", parse_vertex_table, p.vertex_measure_delta,
                  p.vertex_measure_envelope);
    parse_section("edge_measure_delta", parse_edge_table, p.edge_measure_delta,
                  p.edge_measure_envelope);

    // Fail early on measures the tables already make nonpositive.
    for (const auto& [key, value] : p.vertex_measure_delta)
        vertex_measure(g, p, from_key(key.first), key.second);
    for (const auto& [key, value] : p.edge_measure_delta)
        edge_measure(g, p, 2 * key.second, from_key(key.first));

    return p;
}

std::string serialize(const PerturbationSpec& p) {
    json doc = json::object();
    auto envelope_json = [](const PowerLawEnvelope& env) {
        json j{{"envelope", "power-law"}, {"amplitude", env.amplitude}, {"exponent", env.exponent}};
        if (env.coefficients.size() > 0) {
            json c = json::array();
            for (int i = 0; i < env.coefficients.size(); ++i) c.push_back(env.coefficients[i]);
            j["coefficients"] = c;
        }
        return j;
    };
    auto table_json = [](const std::map<std::pair<CellKey, int>, double>& table,
                         const char* index_key) {
        json arr = json::array();
        for (const auto& [key, value] : table) {
            json cell = json::array();
            for (int c : key.first) cell.push_back(c);
            arr.push_back({{"cell", cell}, {index_key, key.second}, {"value", value}});
        }
        return arr;
    };
    auto emit = [&](const char* key, const auto& table, const auto& envelope,
                    const char* index_key) {
        if (table.empty() && !envelope) return;
        if (!envelope) {
            doc[key] = table_json(table, index_key);
        } else if (table.empty()) {
            doc[key] = envelope_json(*envelope);
        } else {
            doc[key] = {{"table", table_json(table, index_key)},
                        {"envelope", envelope_json(*envelope)}};
        }
    };
    emit("potential_short", p.potential_short, p.potential_short_envelope, "vertex");
    if (p.potential_long) doc["potential_long"] = envelope_json(*p.potential_long);
    emit("vertex_measure_delta", p.vertex_measure_delta, p.vertex_measure_envelope, "vertex");
    emit("edge_measure_delta", p.edge_measure_delta, p.edge_measure_envelope, "edge");
    return doc.dump(2) + "\n";
}

double short_potential(const QuotientGraph& g, const PerturbationSpec& p,
                       const Eigen::VectorXi& cell, int vertex) {
    (void)g;
    double value = 0.0;
    if (!p.potential_short.empty()) {
        auto it = p.potential_short.find({to_key(cell), vertex});
        if (it != p.potential_short.end()) value = it->second;
    }
    if (p.potential_short_envelope)
        value += p.potential_short_envelope->at(cell.cast<double>().norm(), vertex);
    return value;
}

double long_potential(const PerturbationSpec& p, const Eigen::VectorXi& cell) {
    if (!p.potential_long) return 0.0;
    return p.potential_long->at(cell.cast<double>().norm());
}

double potential(const QuotientGraph& g, const PerturbationSpec& p,
                 const Eigen::VectorXi& cell, int vertex) {
    return g.vertices[vertex].r0 + short_potential(g, p, cell, vertex) + long_potential(p, cell);
}

double vertex_measure(const QuotientGraph& g, const PerturbationSpec& p,
                      const Eigen::VectorXi& cell, int vertex) {
    double m = g.vertices[vertex].m0;
    if (!p.vertex_measure_delta.empty()) {
        auto it = p.vertex_measure_delta.find({to_key(cell), vertex});
        if (it != p.vertex_measure_delta.end()) m += it->second;
    }
    if (p.vertex_measure_envelope) m += p.vertex_measure_envelope->at(cell.cast<double>().norm());
    if (!(m > 0.0))
        throw ValidationError("perturbed vertex measure must stay strictly positive (vertex " +
                              g.vertices[vertex].id + ")");
    return m;
}

double edge_measure(const QuotientGraph& g, const PerturbationSpec& p,
                    int edge, const Eigen::VectorXi& cell) {
    // Canonical unoriented instance: a reversal lives at the cell its
    // representative starts from.
    int rep = edge / 2;
    Eigen::VectorXi canonical = cell;
    if (edge % 2 == 1) canonical = cell - g.oriented_edges[2 * rep].index;
    double m = g.oriented_edges[2 * rep].m0;
    if (!p.edge_measure_delta.empty()) {
        auto it = p.edge_measure_delta.find({to_key(canonical), rep});
        if (it != p.edge_measure_delta.end()) m += it->second;
    }
    if (p.edge_measure_envelope)
        m += p.edge_measure_envelope->at(canonical.cast<double>().norm());
    if (!(m > 0.0))
        throw ValidationError("perturbed edge measure must stay strictly positive");
    return m;
}

}  // namespace cspec
