#include "spc/problem_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "spc/error.hpp"

namespace spc {

using nlohmann::json;

namespace {

const json& field(const json& j, const char* key, const std::string& where) {
    if (!j.is_object() || !j.contains(key)) throw InputError(where + ": missing field '" + key + "'");
    return j.at(key);
}

double number(const json& j, const std::string& where) {
    if (!j.is_number()) throw InputError(where + ": expected a number");
    return j.get<double>();
}

Eigen::VectorXd vector_of(const json& j, Eigen::Index n, const std::string& where) {
    if (!j.is_array()) throw InputError(where + ": expected an array");
    if (static_cast<Eigen::Index>(j.size()) != n)
        throw InputError(where + ": dimension mismatch (expected " + std::to_string(n) + ", got " +
                         std::to_string(j.size()) + ")");
    Eigen::VectorXd v(n);
    for (Eigen::Index i = 0; i < n; ++i) v(i) = number(j[static_cast<std::size_t>(i)], where);
    return v;
}

Eigen::MatrixXd matrix_of(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& where) {
    if (!j.is_array() || static_cast<Eigen::Index>(j.size()) != rows)
        throw InputError(where + ": dimension mismatch (expected " + std::to_string(rows) + " rows)");
    Eigen::MatrixXd M(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r) {
        const json& row = j[static_cast<std::size_t>(r)];
        if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
            throw InputError(where + ": dimension mismatch (expected " + std::to_string(cols) + " columns)");
        for (Eigen::Index c = 0; c < cols; ++c) M(r, c) = number(row[static_cast<std::size_t>(c)], where);
    }
    return M;
}

json to_json(const Eigen::MatrixXd& M) {
    json out = json::array();
    for (Eigen::Index r = 0; r < M.rows(); ++r) {
        json row = json::array();
        for (Eigen::Index c = 0; c < M.cols(); ++c) row.push_back(M(r, c));
        out.push_back(std::move(row));
    }
    return out;
}

json to_json(const Eigen::VectorXd& v) {
    json out = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

NodeData node_of(const json& j, Dims dims, const std::string& where) {
    NodeData d;
    d.A = matrix_of(field(j, "A", where), dims.nx, dims.nx, where + ".A");
    d.B = matrix_of(field(j, "B", where), dims.nx, dims.nu, where + ".B");
    d.Q = matrix_of(field(j, "Q", where), dims.nx, dims.nx, where + ".Q");
    d.R = matrix_of(field(j, "R", where), dims.nu, dims.nu, where + ".R");
    d.d = vector_of(field(j, "d", where), dims.nx, where + ".d");
    d.q = vector_of(field(j, "q", where), dims.nx, where + ".q");
    d.r = vector_of(field(j, "r", where), dims.nu, where + ".r");
    return d;
}

json node_json(const NodeData& d) {
    return json{{"A", to_json(d.A)}, {"B", to_json(d.B)}, {"Q", to_json(d.Q)}, {"R", to_json(d.R)},
                {"d", to_json(d.d)}, {"q", to_json(d.q)}, {"r", to_json(d.r)}};
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw InputError(what + " is not valid JSON: " + e.what());
    }
}

int index_of(const json& j, const std::string& where) {
    if (!j.is_number_integer()) throw InputError(where + ": expected an integer");
    return j.get<int>();
}

GainCertificate gains_of(const json& j, double L, double alpha, const std::string& where) {
    GainCertificate g;
    g.L = L;
    g.alpha = alpha;
    if (!j.is_object()) throw InputError(where + ": expected an object keyed by node index");
    for (auto it = j.begin(); it != j.end(); ++it) {
        std::size_t pos = 0;
        unsigned long idx = 0;
        try {
            idx = std::stoul(it.key(), &pos);
        } catch (const std::exception&) {
            pos = 0;
        }
        if (pos == 0 || pos != it.key().size()) throw InputError(where + ": bad node key '" + it.key() + "'");
        const json& m = it.value();
        if (!m.is_array() || m.empty() || !m[0].is_array())
            throw InputError(where + "." + it.key() + ": expected a matrix");
        g.gains.emplace(idx, matrix_of(m, static_cast<Eigen::Index>(m.size()),
                                       static_cast<Eigen::Index>(m[0].size()), where + "." + it.key()));
    }
    return g;
}

json gains_json(const GainCertificate& g) {
    json out = json::object();
    for (const auto& [node, K] : g.gains) out[std::to_string(node)] = to_json(K);
    return out;
}

}  // namespace

Problem parse_problem(const std::string& text) {
    const json doc = parse_json(text, "problem file");
    const json& dj = field(doc, "dims", "problem");
    const Dims dims{index_of(field(dj, "nx", "dims"), "dims.nx"), index_of(field(dj, "nu", "dims"), "dims.nu")};
    if (dims.nx < 1 || dims.nu < 1) throw InputError("dims: nx and nu must be at least 1");
    const int horizon = index_of(field(doc, "horizon", "problem"), "horizon");

    std::optional<ScenarioTree> tree;
    if (doc.contains("stagewise")) {
        const json& st = doc.at("stagewise");
        if (!st.is_array()) throw InputError("stagewise: expected a list of stages");
        std::vector<std::vector<Outcome>> stages;
        for (std::size_t t = 0; t < st.size(); ++t) {
            const std::string where = "stagewise[" + std::to_string(t) + "]";
            if (!st[t].is_array()) throw InputError(where + ": expected a list of outcomes");
            std::vector<Outcome> outs;
            for (std::size_t o = 0; o < st[t].size(); ++o) {
                const std::string w = where + "[" + std::to_string(o) + "]";
                outs.push_back({node_of(st[t][o], dims, w), number(field(st[t][o], "prob", w), w + ".prob")});
            }
            stages.push_back(std::move(outs));
        }
        tree.emplace(build_tree_stagewise(stages));
    } else if (doc.contains("explicit")) {
        const json& ex = doc.at("explicit");
        const json& pj = field(ex, "parents", "explicit");
        const json& sj = field(ex, "stages", "explicit");
        const json& qj = field(ex, "probs", "explicit");
        const json& nj = field(ex, "nodes", "explicit");
        if (!pj.is_array() || !sj.is_array() || !qj.is_array() || !nj.is_array())
            throw InputError("explicit: parents, stages, probs and nodes must be arrays");
        std::vector<NodeId> parents;
        std::vector<int> stages;
        std::vector<double> probs;
        std::vector<NodeData> data;
        for (std::size_t i = 0; i < pj.size(); ++i) {
            const int p = index_of(pj[i], "explicit.parents[" + std::to_string(i) + "]");
            parents.push_back(p < 0 ? kNoParent : static_cast<NodeId>(p));
        }
        for (std::size_t i = 0; i < sj.size(); ++i)
            stages.push_back(index_of(sj[i], "explicit.stages[" + std::to_string(i) + "]"));
        for (std::size_t i = 0; i < qj.size(); ++i)
            probs.push_back(number(qj[i], "explicit.probs[" + std::to_string(i) + "]"));
        for (std::size_t i = 0; i < nj.size(); ++i)
            data.push_back(node_of(nj[i], dims, "explicit.nodes[" + std::to_string(i) + "]"));
        tree.emplace(build_tree_explicit(std::move(parents), std::move(stages), std::move(probs),
                                         std::move(data)));
    } else {
        throw InputError("problem: expected 'stagewise' or 'explicit'");
    }
    if (tree->horizon() != horizon)
        throw InputError("horizon: file says " + std::to_string(horizon) + " but the tree has depth " +
                         std::to_string(tree->horizon()));

    InitialCondition init = InitialCondition::zeros(dims);
    if (doc.contains("initial")) {
        const json& ij = doc.at("initial");
        init.x_prev = vector_of(field(ij, "x_prev", "initial"), dims.nx, "initial.x_prev");
        init.u_prev = vector_of(field(ij, "u_prev", "initial"), dims.nu, "initial.u_prev");
    }
    std::optional<ConstantsSpec> constants;
    if (doc.contains("constants")) {
        const json& cj = doc.at("constants");
        constants = ConstantsSpec{number(field(cj, "L", "constants"), "constants.L"),
                                  number(field(cj, "alpha", "constants"), "constants.alpha"),
                                  number(field(cj, "gamma", "constants"), "constants.gamma")};
    }
    return Problem{std::move(*tree), std::move(init), constants};
}

Problem load_problem(const std::string& path) { return parse_problem(read_text(path)); }

std::string dump_problem(const Problem& problem) {
    const ScenarioTree& tree = problem.tree;
    json parents = json::array(), stages = json::array(), probs = json::array(), nodes = json::array();
    for (NodeId i = 0; i < tree.size(); ++i) {
        parents.push_back(i == 0 ? -1 : static_cast<long long>(tree.parent(i)));
        stages.push_back(tree.stage(i));
        probs.push_back(tree.pi(i));
        nodes.push_back(node_json(tree.data(i)));
    }
    json doc{{"dims", {{"nx", tree.dims().nx}, {"nu", tree.dims().nu}}},
             {"horizon", tree.horizon()},
             {"explicit", {{"parents", parents}, {"stages", stages}, {"probs", probs}, {"nodes", nodes}}},
             {"initial", {{"x_prev", to_json(problem.initial.x_prev)}, {"u_prev", to_json(problem.initial.u_prev)}}}};
    if (problem.constants)
        doc["constants"] = {{"L", problem.constants->L}, {"alpha", problem.constants->alpha},
                            {"gamma", problem.constants->gamma}};
    return doc.dump(1) + "\n";
}

void save_problem(const std::string& path, const Problem& problem) { write_text(path, dump_problem(problem)); }

CertificateFile parse_certificate(const std::string& text) {
    const json doc = parse_json(text, "certificate file");
    const double L = number(field(doc, "L", "certificate"), "certificate.L");
    const double alpha = number(field(doc, "alpha", "certificate"), "certificate.alpha");
    CertificateFile out;
    out.stabilizing = doc.contains("stabilizing") ? gains_of(doc.at("stabilizing"), L, alpha, "stabilizing")
                                                  : GainCertificate{{}, L, alpha};
    out.detecting = doc.contains("detecting") ? gains_of(doc.at("detecting"), L, alpha, "detecting")
                                              : GainCertificate{{}, L, alpha};
    return out;
}

CertificateFile load_certificate(const std::string& path) { return parse_certificate(read_text(path)); }

std::string dump_certificate(const CertificateFile& cert) {
    json doc{{"L", cert.stabilizing.L},
             {"alpha", cert.stabilizing.alpha},
             {"stabilizing", gains_json(cert.stabilizing)},
             {"detecting", gains_json(cert.detecting)}};
    return doc.dump(1) + "\n";
}

void save_certificate(const std::string& path, const CertificateFile& cert) {
    write_text(path, dump_certificate(cert));
}

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

std::string trace_csv(const ScenarioTree& tree, const std::vector<Eigen::VectorXd>& x,
                      const std::vector<Eigen::VectorXd>& u) {
    std::ostringstream os;
    os << "node,stage,parent,pi";
    for (Eigen::Index i = 0; i < tree.dims().nx; ++i) os << ",x" << i;
    for (Eigen::Index i = 0; i < tree.dims().nu; ++i) os << ",u" << i;
    os << '\n';
    for (NodeId n = 0; n < tree.size(); ++n) {
        os << n << ',' << tree.stage(n) << ',' << (n == 0 ? std::string("-1") : std::to_string(tree.parent(n)))
           << ',' << format_double(tree.pi(n));
        for (Eigen::Index i = 0; i < x[n].size(); ++i) os << ',' << format_double(x[n](i));
        for (Eigen::Index i = 0; i < u[n].size(); ++i) os << ',' << format_double(u[n](i));
        os << '\n';
    }
    return os.str();
}

std::string regret_csv(const RegretSweep& sweep, const ConstantsBundle& c) {
    std::ostringstream os;
    os << "W,J_W,J_star,regret,bound,applies,Wbar,rho\n";
    const std::string wbar = format_real(c.W_bar, 17), rho = format_real(c.rho, 30);
    for (const RegretRow& r : sweep.rows)
        os << r.W << ',' << format_double(r.J_W) << ',' << format_double(r.J_star) << ','
           << format_double(r.regret) << ',' << format_real(r.bound, 17) << ',' << (r.applies ? 1 : 0)
           << ',' << wbar << ',' << rho << '\n';
    return os.str();
}

std::string decay_csv(const std::vector<DecayRow>& rows) {
    std::ostringstream os;
    os << "t,tprime,psi_norm,omega_norm,bound\n";
    for (const DecayRow& r : rows)
        os << r.t << ',' << r.tprime << ',' << format_double(r.psi_norm) << ','
           << format_double(r.omega_norm) << ',' << format_real(r.bound, 17) << '\n';
    return os.str();
}

std::string moments_csv(const std::vector<MomentRow>& rows) {
    std::ostringstream os;
    os << "t,measured,envelope,kind\n";
    for (const MomentRow& r : rows)
        os << r.t << ',' << format_double(r.measured) << ',' << format_real(r.envelope, 17) << ','
           << r.kind << '\n';
    return os.str();
}

void write_text(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot write " + path);
    f << text;
    if (!f) throw InputError("failed writing " + path);
}

std::string read_text(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw InputError("cannot read " + path);
    std::ostringstream os;
    os << f.rdbuf();
    return os.str();
}

}  // namespace spc
