#pragma once

// Brute-force references used by the tests. Everything here enumerates the
// joint exogenous space directly from the equation tables and never calls the
// library's inference code.

#include "cfbound/inference.hpp"
#include "cfbound/random.hpp"
#include "cfbound/scm.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace oracle {

using namespace cfbound;

// table index of `child` under a full assignment, last parent fastest
inline int eval_table(const StructuralEquation& eq, const Scm& m, const std::vector<int>& full) {
    std::size_t idx = 0;
    for (VarId p : eq.parents) idx = idx * static_cast<std::size_t>(m.cardinality(p)) + static_cast<std::size_t>(full[p]);
    return eq.table[idx];
}

// endogenous order by repeated sweeps (independent of Scm::topological_order)
inline std::vector<VarId> sweep_order(const Scm& m) {
    std::vector<VarId> order;
    std::vector<char> done(m.size(), 0);
    for (VarId u : m.exogenous()) done[u] = 1;
    while (order.size() < m.endogenous().size()) {
        for (VarId v : m.endogenous()) {
            if (done[v]) continue;
            bool ready = true;
            for (VarId p : m.equation(v).parents) ready = ready && done[p];
            if (ready) {
                order.push_back(v);
                done[v] = 1;
            }
        }
    }
    return order;
}

// Calls f(full, weight) for every joint exogenous state with P(u) > 0.
// `dos` maps endogenous ids to forced states.
template <class F>
void for_each_world(const Scm& m, const std::map<VarId, int>& dos, F&& f) {
    const auto order = sweep_order(m);
    const auto& exo = m.exogenous();
    std::vector<int> u(exo.size(), 0);
    std::vector<int> full(m.size(), 0);
    while (true) {
        double w = 1.0;
        for (std::size_t i = 0; i < exo.size(); ++i) {
            full[exo[i]] = u[i];
            w *= (*m.pmf(exo[i]))[static_cast<std::size_t>(u[i])];
        }
        if (w > 0.0) {
            for (VarId v : order) {
                auto it = dos.find(v);
                full[v] = it != dos.end() ? it->second : eval_table(m.equation(v), m, full);
            }
            f(full, w);
        }
        std::size_t k = 0;
        for (; k < exo.size(); ++k) {
            if (++u[k] < m.cardinality(exo[k])) break;
            u[k] = 0;
        }
        if (k == exo.size()) break;
    }
}

inline std::map<Config, double> joint(const Scm& m) {
    std::map<Config, double> out;
    for_each_world(m, {}, [&](const std::vector<int>& full, double w) {
        Config x;
        for (VarId v : m.observed()) x.push_back(full[v]);
        out[x] += w;
    });
    return out;
}

inline double evidence(const Scm& m, const std::map<VarId, int>& ev) {
    double p = 0.0;
    for_each_world(m, {}, [&](const std::vector<int>& full, double w) {
        for (const auto& [v, s] : ev) {
            if (full[v] != s) return;
        }
        p += w;
    });
    return p;
}

// P(U | ev) for each exogenous variable, ordered as m.exogenous()
inline std::vector<std::vector<double>> posterior(const Scm& m, const std::map<VarId, int>& ev) {
    std::vector<std::vector<double>> post;
    for (VarId u : m.exogenous()) post.emplace_back(static_cast<std::size_t>(m.cardinality(u)), 0.0);
    double z = 0.0;
    for_each_world(m, {}, [&](const std::vector<int>& full, double w) {
        for (const auto& [v, s] : ev) {
            if (full[v] != s) return;
        }
        z += w;
        for (std::size_t i = 0; i < m.exogenous().size(); ++i) post[i][full[m.exogenous()[i]]] += w;
    });
    for (auto& p : post) {
        for (double& x : p) x /= z;
    }
    return post;
}

// Counterfactual by evaluating every world tag separately for each u.
inline double counterfactual(const Scm& m, const CounterfactualQuery& q) {
    std::map<int, std::map<VarId, int>> dos;
    dos[0];
    for (const auto& l : q.antecedents) dos[l.world][m.id_of(l.variable)] = l.state;
    for (const auto& l : q.consequents) dos[l.world];

    const auto order = sweep_order(m);
    const auto& exo = m.exogenous();
    double num = 0.0, den = 0.0;
    std::vector<int> u(exo.size(), 0);
    while (true) {
        double w = 1.0;
        std::vector<int> base(m.size(), 0);
        for (std::size_t i = 0; i < exo.size(); ++i) {
            base[exo[i]] = u[i];
            w *= (*m.pmf(exo[i]))[static_cast<std::size_t>(u[i])];
        }
        if (w > 0.0) {
            std::map<int, std::vector<int>> world;
            for (const auto& [tag, d] : dos) {
                std::vector<int> full = base;
                for (VarId v : order) {
                    auto it = d.find(v);
                    full[v] = it != d.end() ? it->second : eval_table(m.equation(v), m, full);
                }
                world[tag] = std::move(full);
            }
            bool cond = true;
            for (const auto& [name, s] : q.conditioning) cond = cond && world[0][m.id_of(name)] == s;
            if (cond) {
                den += w;
                bool hit = true;
                for (const auto& l : q.consequents) hit = hit && world[l.world][m.id_of(l.variable)] == l.state;
                if (hit) num += w;
            }
        }
        std::size_t k = 0;
        for (; k < exo.size(); ++k) {
            if (++u[k] < m.cardinality(exo[k])) break;
            u[k] = 0;
        }
        if (k == exo.size()) break;
    }
    if (q.mode == CounterfactualQuery::Mode::joint) return num;
    return num / den;
}

struct ModelOptions {
    int n_min = 2;
    int n_max = 4;
    int max_card = 3;
    int max_exo_card = 4;
    int max_parents = 2;
    double share = 0.35;  // chance that a node reuses an earlier exogenous parent
    bool with_pmfs = true;
};

inline std::vector<double> random_pmf(Rng& rng, int n) {
    std::uniform_real_distribution<double> U(0.05, 1.0);
    std::vector<double> p(static_cast<std::size_t>(n));
    double s = 0.0;
    for (double& x : p) s += (x = U(rng));
    for (double& x : p) x /= s;
    return p;
}

// Random model with arbitrary (non-conservative) surjective tables and some
// shared exogenous parents.
inline Scm random_model(Rng& rng, const ModelOptions& o = {}) {
    auto uni = [&](int a, int b) { return std::uniform_int_distribution<int>(a, b)(rng); };
    std::bernoulli_distribution coin(0.5), share(o.share);
    const int n = uni(o.n_min, o.n_max);
    ScmBuilder b;
    std::map<VarId, int> card;
    std::vector<VarId> endo, exo;
    for (int i = 0; i < n; ++i) {
        const int c = uni(2, o.max_card);
        const VarId v = b.add_endogenous("V" + std::to_string(i), c);
        card[v] = c;
        endo.push_back(v);
    }
    for (int i = 0; i < n; ++i) {
        const VarId v = endo[static_cast<std::size_t>(i)];
        VarId u;
        if (!exo.empty() && share(rng)) {
            u = exo[static_cast<std::size_t>(uni(0, static_cast<int>(exo.size()) - 1))];
        } else {
            const int c = uni(o.max_card, o.max_exo_card);
            u = b.add_exogenous("U" + std::to_string(exo.size()), c,
                                o.with_pmfs ? std::optional(random_pmf(rng, c)) : std::nullopt);
            card[u] = c;
            exo.push_back(u);
        }
        std::vector<VarId> parents{u};
        for (int j = 0; j < i && static_cast<int>(parents.size()) <= o.max_parents; ++j) {
            if (coin(rng)) parents.push_back(endo[static_cast<std::size_t>(j)]);
        }
        // exogenous parent not always first
        if (parents.size() > 1 && coin(rng)) std::swap(parents[0], parents.back());
        std::size_t rows = 1;
        for (VarId p : parents) rows *= static_cast<std::size_t>(card[p]);
        std::vector<int> table(rows);
        for (std::size_t r = 0; r < rows; ++r) table[r] = uni(0, card[v] - 1);
        // surjective: the first card[v] rows take every state
        std::vector<int> perm(static_cast<std::size_t>(card[v]));
        for (int s = 0; s < card[v]; ++s) perm[static_cast<std::size_t>(s)] = s;
        std::shuffle(perm.begin(), perm.end(), rng);
        for (std::size_t r = 0; r < perm.size() && r < rows; ++r) table[r] = perm[r];
        b.set_equation(v, parents, table);
    }
    return b.build();
}

// Random conservative model (binary, one exogenous parent per node).
inline DagSpec random_dag(Rng& rng, int n, int max_parents = 2) {
    std::bernoulli_distribution coin(0.5);
    DagSpec d;
    for (int i = 0; i < n; ++i) {
        DagSpec::Node node;
        node.name = "V" + std::to_string(i);
        for (int j = 0; j < i && static_cast<int>(node.parents.size()) < max_parents; ++j) {
            if (coin(rng)) node.parents.push_back("V" + std::to_string(j));
        }
        d.nodes.push_back(node);
    }
    return d;
}

inline ExogenousAssignment random_assignment(const Scm& m, Rng& rng) {
    ExogenousAssignment a;
    for (VarId u : m.exogenous()) a.pmfs.push_back(random_pmf(rng, m.cardinality(u)));
    return a;
}

// I_z(a, b) = z^a / (a B(a, b)) 2F1(a, 1 - b; a + 1; z), series summed in long
// double; the reflection I_z(a, b) = 1 - I_{1-z}(b, a) keeps z <= 1/2.
inline long double ibeta_series(long double a, long double b, long double z) {
    if (z <= 0.0L) return 0.0L;
    if (z >= 1.0L) return 1.0L;
    if (z > 0.5L) return 1.0L - ibeta_series(b, a, 1.0L - z);
    long double term = 1.0L, sum = 1.0L;
    for (int n = 0; n < 200000; ++n) {
        term *= (a + n) * (1.0L - b + n) / ((a + 1.0L + n) * (n + 1.0L)) * z;
        sum += term;
        if (std::fabs(term) < 1e-24L * std::fabs(sum)) break;
    }
    const long double log_beta = std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b);
    return std::exp(a * std::log(z) - log_beta) / a * sum;
}

inline long double kernel_series(double x, double y, double L, double alpha, double beta, int k) {
    const long double T = static_cast<long double>(L) + x + y;
    const long double in = ibeta_series(alpha, beta, (static_cast<long double>(L) + x) / T) -
                           ibeta_series(alpha, beta, static_cast<long double>(x) / T);
    return std::pow(in, static_cast<long double>(k));
}

struct McEstimate {
    double p = 0.0;
    double se = 0.0;
    long accepted = 0;
};

// Rejection simulation of the uniform-sampling coverage: endpoint gaps drawn
// uniformly on the triangle x + y <= slack, k points drawn on [a - x, b + y],
// the draw kept when every point lands in [a, b].
inline McEstimate mc_coverage_uniform(double a, double b, int k, double delta, long n, Rng& rng) {
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const double slack = a + (1.0 - b);
    long acc = 0, hit = 0;
    for (long i = 0; i < n; ++i) {
        double x = U(rng) * slack, y = U(rng) * slack;
        if (x + y > slack) {
            x = slack - x;
            y = slack - y;
        }
        const double lo = a - x, hi = b + y;
        bool inside = true;
        for (int j = 0; j < k && inside; ++j) {
            const double v = lo + (hi - lo) * U(rng);
            inside = v >= a && v <= b;
        }
        if (!inside) continue;
        ++acc;
        if (x <= delta / 2 && y <= delta / 2) ++hit;
    }
    McEstimate e;
    e.accepted = acc;
    e.p = acc > 0 ? static_cast<double>(hit) / static_cast<double>(acc) : 0.0;
    e.se = acc > 0 ? std::sqrt(e.p * (1.0 - e.p) / static_cast<double>(acc)) : 1.0;
    return e;
}

}  // namespace oracle
