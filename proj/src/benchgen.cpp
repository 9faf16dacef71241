#include "cfbound/benchgen.hpp"

#include "cfbound/errors.hpp"
#include "cfbound/inference.hpp"
#include "cfbound/io.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace cfbound {

using nlohmann::json;

void BenchmarkSpec::validate() const {
    if (n_min < 3 || n_max < n_min) throw DomainError("benchmark: need 3 <= n_min <= n_max");
    if (max_indegree < 1) throw DomainError("benchmark: max_indegree must be positive");
    if (merge_pairs < 0 || 2 * merge_pairs > n_min) throw DomainError("benchmark: merge_pairs must be in [0, n/2]");
    if (d < 1) throw DomainError("benchmark: d must be positive");
    if (selector_true_states && *selector_true_states > 0xffu) throw DomainError("benchmark: selector mask has 8 bits");
    if (exogenous_cap < 2) throw DomainError("benchmark: exogenous cap too small");
}

json spec_to_json(const BenchmarkSpec& s) {
    json j{{"n_endogenous", json::array({s.n_min, s.n_max})},
           {"max_indegree", s.max_indegree},
           {"merge_pairs", s.merge_pairs},
           {"d", s.d},
           {"seed", s.seed},
           {"exogenous_cap", s.exogenous_cap},
           {"state_removal", s.state_removal == StateRemoval::greedy ? "greedy" : "none"}};
    if (s.selector_true_states) {
        std::vector<int> states;
        for (int k = 0; k < 8; ++k) {
            if ((*s.selector_true_states >> k) & 1u) states.push_back(k);
        }
        j["selector_true_states"] = states;
    }
    return j;
}

BenchmarkSpec spec_from_json(const json& j) {
    BenchmarkSpec s;
    try {
        if (j.contains("n_endogenous")) {
            const auto& n = j.at("n_endogenous");
            if (n.is_array()) {
                if (n.size() != 2) throw ParseError("spec: n_endogenous must be an integer or [min, max]");
                s.n_min = n.at(0).get<int>();
                s.n_max = n.at(1).get<int>();
            } else {
                s.n_min = s.n_max = n.get<int>();
            }
        }
        s.max_indegree = j.value("max_indegree", s.max_indegree);
        s.merge_pairs = j.value("merge_pairs", s.merge_pairs);
        s.d = j.value("d", s.d);
        s.seed = j.value("seed", s.seed);
        s.exogenous_cap = j.value("exogenous_cap", s.exogenous_cap);
        const auto removal = j.value("state_removal", std::string("none"));
        if (removal == "greedy") {
            s.state_removal = StateRemoval::greedy;
        } else if (removal != "none") {
            throw ParseError("spec: state_removal must be 'none' or 'greedy'");
        }
        if (j.contains("selector_true_states")) {
            unsigned mask = 0;
            for (int k : j.at("selector_true_states").get<std::vector<int>>()) {
                if (k < 0 || k > 7) throw ParseError("spec: selector states are in 0..7");
                mask |= 1u << k;
            }
            s.selector_true_states = mask;
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("spec: ") + e.what());
    }
    s.validate();
    return s;
}

namespace {

// Copy of `model` with exogenous variables replaced. `exo_of` maps each old
// exogenous id to the index of its replacement in `new_exo` (name, card);
// `old_state` maps (new exogenous index, new state, old exogenous id) to the
// old state of that variable.
Scm replace_exogenous(const Scm& model, const std::vector<std::pair<std::string, int>>& new_exo,
                      const std::map<VarId, int>& exo_of,
                      const std::function<int(int, int, VarId)>& old_state) {
    ScmBuilder b;
    std::vector<VarId> remap(model.size(), -1);
    for (VarId v : model.endogenous()) {
        remap[static_cast<std::size_t>(v)] = b.add_endogenous(model.variable(v).name, model.cardinality(v));
    }
    std::vector<VarId> new_ids;
    for (const auto& [name, card] : new_exo) new_ids.push_back(b.add_exogenous(name, card));
    for (VarId u : model.exogenous()) {
        if (!exo_of.count(u)) {
            remap[static_cast<std::size_t>(u)] = b.add_exogenous(model.variable(u).name, model.cardinality(u), model.pmf(u));
        }
    }
    for (VarId v : model.endogenous()) {
        const auto& eq = model.equation(v);
        std::vector<VarId> parents;
        std::vector<int> cards;
        // Position in the new parent list of each old parent, and the replacement index if any.
        std::vector<int> new_pos(eq.parents.size(), -1);
        for (std::size_t i = 0; i < eq.parents.size(); ++i) {
            const VarId p = eq.parents[i];
            const auto it = exo_of.find(p);
            const VarId np = it == exo_of.end() ? remap[static_cast<std::size_t>(p)] : new_ids[static_cast<std::size_t>(it->second)];
            const auto found = std::find(parents.begin(), parents.end(), np);
            if (found == parents.end()) {
                new_pos[i] = static_cast<int>(parents.size());
                parents.push_back(np);
                cards.push_back(it == exo_of.end() ? model.cardinality(p) : new_exo[static_cast<std::size_t>(it->second)].second);
            } else {
                new_pos[i] = static_cast<int>(found - parents.begin());
            }
        }
        std::vector<int> old_cards;
        for (VarId p : eq.parents) old_cards.push_back(model.cardinality(p));
        const std::size_t rows = checked_product(cards, std::numeric_limits<std::uint64_t>::max());
        std::vector<int> table(rows);
        std::vector<int> old_states(eq.parents.size());
        for (std::size_t r = 0; r < rows; ++r) {
            const auto states = mixed_radix_decode(cards, r);
            for (std::size_t i = 0; i < eq.parents.size(); ++i) {
                const int s = states[static_cast<std::size_t>(new_pos[i])];
                const auto it = exo_of.find(eq.parents[i]);
                old_states[i] = it == exo_of.end() ? s : old_state(it->second, s, eq.parents[i]);
            }
            table[r] = eq.table[mixed_radix_index(old_cards, old_states)];
        }
        b.set_equation(remap[static_cast<std::size_t>(v)], std::move(parents), std::move(table), eq.intervened);
    }
    return b.build();
}

}  // namespace

Scm merge_exogenous(const Scm& model, VarId u1, VarId u2, const std::string& name) {
    if (u1 == u2 || !model.is_exogenous(u1) || !model.is_exogenous(u2)) {
        throw ModelError("merge_exogenous: need two distinct exogenous variables");
    }
    const int c1 = model.cardinality(u1);
    const int c2 = model.cardinality(u2);
    const std::uint64_t card = static_cast<std::uint64_t>(c1) * static_cast<std::uint64_t>(c2);
    if (card > static_cast<std::uint64_t>(std::numeric_limits<int>::max())) throw CapacityExceeded("merged cardinality overflows");
    std::optional<std::vector<double>> pmf;
    Scm m = replace_exogenous(model, {{name, static_cast<int>(card)}}, {{u1, 0}, {u2, 0}},
                              [&](int, int s, VarId old) { return old == u1 ? s / c2 : s % c2; });
    if (model.pmf(u1) && model.pmf(u2)) {
        std::vector<double> p(card);
        for (int a = 0; a < c1; ++a) {
            for (int b = 0; b < c2; ++b) p[static_cast<std::size_t>(a * c2 + b)] = (*model.pmf(u1))[static_cast<std::size_t>(a)] * (*model.pmf(u2))[static_cast<std::size_t>(b)];
        }
        ScmBuilder b(m);
        b.set_pmf(m.id_of(name), std::move(p));
        m = b.build();
    }
    return m;
}

Scm restrict_exogenous(const Scm& model, VarId u, const std::vector<char>& keep) {
    if (!model.is_exogenous(u) || keep.size() != static_cast<std::size_t>(model.cardinality(u))) {
        throw ModelError("restrict_exogenous: bad arguments");
    }
    std::vector<int> kept;
    for (std::size_t s = 0; s < keep.size(); ++s) {
        if (keep[s]) kept.push_back(static_cast<int>(s));
    }
    if (kept.empty()) throw ModelError("restrict_exogenous: no state left");
    Scm m = replace_exogenous(model, {{model.variable(u).name, static_cast<int>(kept.size())}}, {{u, 0}},
                              [&](int, int s, VarId) { return kept[static_cast<std::size_t>(s)]; });
    if (model.pmf(u)) {
        std::vector<double> p;
        for (int s : kept) p.push_back((*model.pmf(u))[static_cast<std::size_t>(s)]);
        const double total = std::accumulate(p.begin(), p.end(), 0.0);
        if (total > 0.0) {
            for (double& v : p) v /= total;
            ScmBuilder b(m);
            b.set_pmf(m.id_of(model.variable(u).name), std::move(p));
            m = b.build();
        }
    }
    return m;
}

bool configurations_reachable(const Scm& model, const std::vector<Config>& configs, std::uint64_t cap) {
    for (const auto& comp : c_components(model)) {
        std::set<VarId> exo;
        for (VarId v : comp) {
            for (VarId p : model.parents(v)) {
                if (model.is_exogenous(p)) exo.insert(p);
            }
        }
        const std::vector<VarId> exo_list(exo.begin(), exo.end());
        std::vector<int> cards;
        for (VarId u : exo_list) cards.push_back(model.cardinality(u));
        const std::uint64_t total = checked_product(cards, cap);
        // Distinct restrictions of the configurations to the component and its parents.
        std::set<std::vector<int>> needed;
        std::vector<VarId> scope;
        {
            std::set<VarId> s(comp.begin(), comp.end());
            for (VarId v : comp) {
                for (VarId p : model.parents(v)) {
                    if (!model.is_exogenous(p)) s.insert(p);
                }
            }
            scope.assign(s.begin(), s.end());
        }
        for (const auto& x : configs) {
            std::vector<int> key;
            for (VarId v : scope) key.push_back(x[static_cast<std::size_t>(model.observed_ordinal(v))]);
            needed.insert(key);
        }
        std::vector<int> full(model.size(), 0);
        for (const auto& key : needed) {
            for (std::size_t i = 0; i < scope.size(); ++i) full[static_cast<std::size_t>(scope[i])] = key[i];
            bool found = false;
            for (std::uint64_t e = 0; e < total && !found; ++e) {
                const auto states = mixed_radix_decode(cards, static_cast<std::size_t>(e));
                for (std::size_t i = 0; i < exo_list.size(); ++i) full[static_cast<std::size_t>(exo_list[i])] = states[i];
                found = std::all_of(comp.begin(), comp.end(), [&](VarId v) {
                    return model.evaluate(v, full) == full[static_cast<std::size_t>(v)];
                });
            }
            if (!found) return false;
        }
    }
    return true;
}

std::vector<Config> sample_records(const Scm& fscm, std::int64_t n, Rng& rng) {
    if (!fscm.is_full()) throw ModelError("sampling requires a fully specified model");
    std::vector<Config> out;
    out.reserve(static_cast<std::size_t>(n));
    std::vector<int> full(fscm.size(), 0);
    for (std::int64_t i = 0; i < n; ++i) {
        for (VarId u : fscm.exogenous()) full[static_cast<std::size_t>(u)] = sample_categorical(rng, *fscm.pmf(u));
        fscm.propagate(full);
        Config x;
        for (VarId v : fscm.observed()) x.push_back(full[static_cast<std::size_t>(v)]);
        out.push_back(std::move(x));
    }
    return out;
}

namespace {

int uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

struct Graph {
    int n = 0;
    std::vector<std::vector<int>> parents;  // by position in topological order
    std::vector<std::vector<int>> children;
};

Graph random_dag(Rng& rng, int n, int max_indegree) {
    Graph g;
    g.n = n;
    g.parents.resize(static_cast<std::size_t>(n));
    g.children.resize(static_cast<std::size_t>(n));
    for (int i = 1; i < n; ++i) {
        const int m = uniform_int(rng, 0, std::min(i, max_indegree));
        std::vector<int> pool(static_cast<std::size_t>(i));
        std::iota(pool.begin(), pool.end(), 0);
        std::shuffle(pool.begin(), pool.end(), rng);
        pool.resize(static_cast<std::size_t>(m));
        std::sort(pool.begin(), pool.end());
        g.parents[static_cast<std::size_t>(i)] = pool;
        for (int p : pool) g.children[static_cast<std::size_t>(p)].push_back(i);
    }
    return g;
}

std::vector<int> descendants(const Graph& g, int v) {
    std::vector<char> seen(static_cast<std::size_t>(g.n), 0);
    std::vector<int> stack{v};
    std::vector<int> out;
    while (!stack.empty()) {
        const int u = stack.back();
        stack.pop_back();
        for (int c : g.children[static_cast<std::size_t>(u)]) {
            if (!seen[static_cast<std::size_t>(c)]) {
                seen[static_cast<std::size_t>(c)] = 1;
                out.push_back(c);
                stack.push_back(c);
            }
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

template <class T>
const T& pick(Rng& rng, const std::vector<T>& v) {
    return v[static_cast<std::size_t>(uniform_int(rng, 0, static_cast<int>(v.size()) - 1))];
}

}  // namespace

BenchmarkCase generate_case(const BenchmarkSpec& spec) {
    spec.validate();
    Rng rng(spec.seed);
    for (int attempt = 0; attempt < spec.max_attempts; ++attempt) {
        const int n = uniform_int(rng, spec.n_min, spec.n_max);
        const Graph g = random_dag(rng, n, spec.max_indegree);

        std::vector<int> roots;
        std::vector<int> internal;
        for (int v = 0; v < n; ++v) {
            const bool has_p = !g.parents[static_cast<std::size_t>(v)].empty();
            const bool has_c = !g.children[static_cast<std::size_t>(v)].empty();
            if (!has_p && has_c) roots.push_back(v);
            if (has_p && has_c) internal.push_back(v);
        }
        std::vector<std::pair<int, std::vector<int>>> causes;  // root with its leaf descendants
        for (int r : roots) {
            std::vector<int> leaves;
            for (int d : descendants(g, r)) {
                if (g.children[static_cast<std::size_t>(d)].empty()) leaves.push_back(d);
            }
            if (!leaves.empty()) causes.emplace_back(r, leaves);
        }
        if (causes.empty() || internal.empty()) continue;
        const auto& [xpos, leaves] = pick(rng, causes);
        const int ypos = pick(rng, leaves);
        const int zpos = pick(rng, internal);

        // Random labels, so names carry no information about the order.
        std::vector<int> label(static_cast<std::size_t>(n));
        std::iota(label.begin(), label.end(), 1);
        std::shuffle(label.begin(), label.end(), rng);
        auto name = [&](int pos) { return "V" + std::to_string(label[static_cast<std::size_t>(pos)]); };

        DagSpec dag;
        for (int v = 0; v < n; ++v) {
            DagSpec::Node node;
            node.name = name(v);
            for (int p : g.parents[static_cast<std::size_t>(v)]) node.parents.push_back(name(p));
            node.exogenous_name = "U" + std::to_string(label[static_cast<std::size_t>(v)]);
            dag.nodes.push_back(std::move(node));
        }
        Scm pscm;
        try {
            pscm = build_conservative(dag, spec.exogenous_cap);
        } catch (const CapacityExceeded&) {
            continue;
        }

        bool merged_ok = true;
        for (int q = 0; q < spec.merge_pairs && merged_ok; ++q) {
            std::vector<std::pair<VarId, VarId>> eligible;
            const auto& exo = pscm.exogenous();
            for (std::size_t i = 0; i < exo.size(); ++i) {
                for (std::size_t j = i + 1; j < exo.size(); ++j) {
                    if (pscm.children(exo[i]).size() != 1 || pscm.children(exo[j]).size() != 1) continue;
                    const auto card = static_cast<std::uint64_t>(pscm.cardinality(exo[i])) *
                                      static_cast<std::uint64_t>(pscm.cardinality(exo[j]));
                    if (card <= spec.exogenous_cap) eligible.emplace_back(exo[i], exo[j]);
                }
            }
            if (eligible.empty()) {
                merged_ok = false;
                break;
            }
            const auto [a, b] = pick(rng, eligible);
            pscm = merge_exogenous(pscm, a, b, pscm.variable(a).name + "_" + pscm.variable(b).name);
        }
        if (!merged_ok) continue;

        ExogenousAssignment pmfs;
        for (VarId u : pscm.exogenous()) {
            pmfs.pmfs.push_back(sample_dirichlet(rng, static_cast<std::size_t>(pscm.cardinality(u)), 1.0));
        }
        Scm sampler = pscm.with_assignment(pmfs);
        std::vector<Config> data = sample_records(sampler, spec.d, rng);

        int removed = 0;
        if (spec.state_removal == StateRemoval::greedy) {
            std::set<Config> distinct(data.begin(), data.end());
            const std::vector<Config> configs(distinct.begin(), distinct.end());
            std::vector<std::pair<std::string, int>> candidates;
            for (VarId u : pscm.exogenous()) {
                for (int s = 0; s < pscm.cardinality(u); ++s) candidates.emplace_back(pscm.variable(u).name, s);
            }
            std::shuffle(candidates.begin(), candidates.end(), rng);
            // States are identified by their original index; track the survivors.
            std::map<std::string, std::vector<int>> alive;
            for (VarId u : pscm.exogenous()) {
                std::vector<int> states(static_cast<std::size_t>(pscm.cardinality(u)));
                std::iota(states.begin(), states.end(), 0);
                alive[pscm.variable(u).name] = states;
            }
            for (const auto& [uname, s] : candidates) {
                auto& states = alive[uname];
                if (states.size() <= 1) continue;
                const VarId u = pscm.id_of(uname);
                std::vector<char> keep(states.size(), 1);
                const auto pos = std::find(states.begin(), states.end(), s) - states.begin();
                keep[static_cast<std::size_t>(pos)] = 0;
                try {
                    Scm candidate = restrict_exogenous(pscm, u, keep);
                    if (!configurations_reachable(candidate, configs)) continue;
                    pscm = std::move(candidate);
                    states.erase(states.begin() + pos);
                    ++removed;
                } catch (const ModelError&) {
                    // a structural equation would lose surjectivity
                }
            }
        }

        BenchmarkCase c;
        c.seed = spec.seed;
        c.pscm = pscm.without_pmfs();
        c.sampling_model = std::move(sampler);
        c.data = std::move(data);
        c.cause = name(xpos);
        c.effect = name(ypos);
        c.internal = name(zpos);
        c.removed_states = removed;
        unsigned mask = spec.selector_true_states ? *spec.selector_true_states
                                                  : static_cast<unsigned>(uniform_int(rng, 1, 254));
        c.selector.parents = {c.cause, c.effect, c.internal};
        for (int s = 0; s < 8; ++s) c.selector.table.push_back(static_cast<int>((mask >> s) & 1u));
        c.selected = partition(c.pscm, c.data, c.selector);
        c.p_s1 = static_cast<double>(c.selected.d1()) / static_cast<double>(c.selected.d());
        return c;
    }
    throw NumericError("benchmark: no admissible case after " + std::to_string(spec.max_attempts) + " attempts");
}

BenchmarkCase generate_case(const BenchmarkSpec& spec, int index) {
    BenchmarkSpec s = spec;
    s.seed = derive_seed(spec.seed, static_cast<std::uint64_t>(index));
    return generate_case(s);
}

double rrmse(double a_r, double b_r, double a_star, double b_star) {
    const double w = b_star - a_star;
    if (!(w > 0.0)) throw DomainError("rrmse: ground-truth interval is a point");
    return std::sqrt(((a_r - a_star) * (a_r - a_star) + (b_r - b_star) * (b_r - b_star)) / (2.0 * w * w));
}

double absolute_rmse(double a_r, double b_r, double a_star, double b_star) {
    return std::sqrt(((a_r - a_star) * (a_r - a_star) + (b_r - b_star) * (b_r - b_star)) / 2.0);
}

Interval prefix_interval(const std::vector<double>& values, std::size_t r) {
    if (r == 0 || r > values.size()) throw DomainError("prefix_interval: bad prefix length");
    const auto [lo, hi] = std::minmax_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(r));
    return {*lo, *hi};
}

std::optional<Interval> unconfounded_pns_bounds(const Scm& model, const std::map<Config, double>& distribution,
                                                const std::string& cause, const std::string& effect) {
    const VarId x = model.id_of(cause);
    const VarId y = model.id_of(effect);
    if (model.cardinality(x) != 2 || model.cardinality(y) != 2) return std::nullopt;
    const auto px = static_cast<std::size_t>(model.observed_ordinal(x));
    const auto py = static_cast<std::size_t>(model.observed_ordinal(y));
    double n[2][2] = {{0, 0}, {0, 0}};
    for (const auto& [r, p] : distribution) n[r[px]][r[py]] += p;
    const double nx0 = n[0][0] + n[0][1];
    const double nx1 = n[1][0] + n[1][1];
    if (nx0 == 0.0 || nx1 == 0.0) return std::nullopt;
    const double y_x1 = n[1][1] / nx1;
    const double y_x0 = n[0][1] / nx0;
    return Interval{std::max(0.0, y_x1 - y_x0), std::min(y_x1, 1.0 - y_x0)};
}

CaseRuns run_case(const BenchmarkCase& c, int r_max, const EmConfig& base) {
    EmConfig cfg = base;
    cfg.restarts = r_max;
    cfg.require_compatibility = false;
    cfg.require_convergence = false;
    const auto q = pns_query(c.cause, c.effect);
    auto values = [&](const SelectedDataset& ds, int& failed) {
        const EmccProblem problem(c.pscm, ds);
        const auto runs = emcc_runs(problem, cfg);
        std::vector<double> out;
        failed = 0;
        for (const auto& run : runs) {
            if (run.diag.failed) {
                ++failed;
                continue;
            }
            out.push_back(twin_query(problem.structure().with_assignment(run.pmfs), q));
        }
        return out;
    };
    CaseRuns out;
    if (c.selected.d1() > 0 || c.selected.d0 > 0) out.biased = values(c.selected, out.failed_biased);
    out.unbiased = values(partition(c.pscm, c.data, std::nullopt), out.failed_unbiased);
    return out;
}

Interval ground_truth(const std::vector<double>& values, int failed) {
    const auto total = static_cast<double>(values.size()) + failed;
    if (values.empty() || failed > 0.2 * total) throw NumericError("ground truth: more than 20% of the runs failed");
    return prefix_interval(values, values.size());
}

std::string selection_bin(double p) {
    if (p <= 0.0) return "0";
    if (p >= 1.0) return "1";
    static const char* labels[] = {"0-0.2", "0.2-0.4", "0.4-0.6", "0.6-0.8", "0.8-1"};
    return labels[std::min(4, static_cast<int>(p / 0.2))];
}

std::vector<EvaluationRow> evaluate_case(const std::string& id, const BenchmarkCase& c,
                                         const std::vector<int>& runs_list, int r_max, const EmConfig& base) {
    for (int r : runs_list) {
        if (r < 1 || r > r_max) throw DomainError("evaluate: every r must be in [1, r_max]");
    }
    const CaseRuns runs = run_case(c, r_max, base);
    const Interval truth = ground_truth(runs.biased, runs.failed_biased);
    const Interval unbiased_truth = ground_truth(runs.unbiased, runs.failed_unbiased);

    bool outer = true;
    const VarId x = c.pscm.id_of(c.cause);
    const VarId ux = c.pscm.parents(x).front();
    if (c.pscm.children(ux).size() == 1) {
        std::map<Config, std::int64_t> counts;
        for (const auto& r : c.data) ++counts[r];
        // Compatible models reproduce the factorised counts, not the raw frequencies.
        const auto dist = factorised_distribution(c.pscm, counts);
        if (const auto tp = unconfounded_pns_bounds(c.pscm, dist, c.cause, c.effect)) {
            constexpr double slack = 1e-6;
            outer = unbiased_truth.lower >= tp->lower - slack && unbiased_truth.upper <= tp->upper + slack;
        }
    }

    std::vector<EvaluationRow> rows;
    for (int r : runs_list) {
        EvaluationRow row;
        row.case_id = id;
        row.n_endogenous = static_cast<int>(c.pscm.observed().size());
        row.markovian = c.pscm.is_markovian();
        row.p_s1 = c.p_s1;
        row.bin = selection_bin(c.p_s1);
        row.r = r;
        row.truth = truth;
        const auto rr = static_cast<std::size_t>(std::min<int>(r, static_cast<int>(runs.biased.size())));
        row.approx = prefix_interval(runs.biased, rr);
        row.defined = truth.upper > truth.lower;
        row.rrmse = row.defined ? rrmse(row.approx.lower, row.approx.upper, truth.lower, truth.upper)
                                : absolute_rmse(row.approx.lower, row.approx.upper, truth.lower, truth.upper);
        const auto ru = static_cast<std::size_t>(std::min<int>(r, static_cast<int>(runs.unbiased.size())));
        row.unbiased = prefix_interval(runs.unbiased, ru);
        // The biased interval plays the role of the ground truth.
        row.divergence_defined = row.defined;
        row.divergence = row.defined ? rrmse(row.unbiased.lower, row.unbiased.upper, truth.lower, truth.upper)
                                     : absolute_rmse(row.unbiased.lower, row.unbiased.upper, truth.lower, truth.upper);
        row.outer_check = outer;
        rows.push_back(row);
    }
    return rows;
}

namespace {

GroupSummary quantiles(const std::string& group, std::vector<double> v, std::size_t excluded) {
    GroupSummary g;
    g.group = group;
    g.count = v.size();
    g.excluded = excluded;
    if (v.empty()) return g;
    std::sort(v.begin(), v.end());
    auto q = [&](double p) {
        const double pos = p * static_cast<double>(v.size() - 1);
        const auto lo = static_cast<std::size_t>(std::floor(pos));
        const auto hi = static_cast<std::size_t>(std::ceil(pos));
        return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    g.min = v.front();
    g.q1 = q(0.25);
    g.median = q(0.5);
    g.q3 = q(0.75);
    g.max = v.back();
    return g;
}

}  // namespace

std::vector<GroupSummary> summarize(const std::vector<EvaluationRow>& rows) {
    std::map<int, std::vector<double>> by_r;
    std::map<int, std::size_t> excluded_r;
    std::map<std::string, std::vector<double>> by_bin;
    std::map<std::string, std::size_t> excluded_bin;
    int r_top = 0;
    for (const auto& row : rows) r_top = std::max(r_top, row.r);
    for (const auto& row : rows) {
        if (row.defined) {
            by_r[row.r].push_back(row.rrmse);
        } else {
            ++excluded_r[row.r];
        }
        if (row.r != r_top) continue;
        if (row.divergence_defined) {
            by_bin[row.bin].push_back(row.divergence);
        } else {
            ++excluded_bin[row.bin];
        }
    }
    std::vector<GroupSummary> out;
    for (auto& [r, v] : by_r) out.push_back(quantiles("rrmse_r" + std::to_string(r), v, excluded_r[r]));
    for (const auto& [r, n] : excluded_r) {
        if (!by_r.count(r)) out.push_back(quantiles("rrmse_r" + std::to_string(r), {}, n));
    }
    for (const char* bin : {"0", "0-0.2", "0.2-0.4", "0.4-0.6", "0.6-0.8", "0.8-1", "1"}) {
        if (by_bin.count(bin) || excluded_bin.count(bin)) {
            out.push_back(quantiles(std::string("divergence_") + bin, by_bin[bin], excluded_bin[bin]));
        }
    }
    return out;
}

namespace {

std::string num(double v) {
    std::ostringstream s;
    s.precision(17);
    s << v;
    return s.str();
}

}  // namespace

std::string rows_to_csv(const std::vector<EvaluationRow>& rows) {
    std::ostringstream out;
    out << "case,n,markovian,p_s1,bin,r,a_r,b_r,a_star,b_star,defined,rrmse,a_unbiased,b_unbiased,divergence,"
           "outer_check\n";
    for (const auto& r : rows) {
        out << r.case_id << ',' << r.n_endogenous << ',' << (r.markovian ? 1 : 0) << ',' << num(r.p_s1) << ','
            << r.bin << ',' << r.r << ',' << num(r.approx.lower) << ',' << num(r.approx.upper) << ','
            << num(r.truth.lower) << ',' << num(r.truth.upper) << ',' << (r.defined ? 1 : 0) << ',' << num(r.rrmse)
            << ',' << num(r.unbiased.lower) << ',' << num(r.unbiased.upper) << ',' << num(r.divergence) << ','
            << (r.outer_check ? 1 : 0) << '\n';
    }
    return out.str();
}

std::string summary_to_csv(const std::vector<GroupSummary>& groups) {
    std::ostringstream out;
    out << "group,count,excluded,min,q1,median,q3,max\n";
    for (const auto& g : groups) {
        out << g.group << ',' << g.count << ',' << g.excluded << ',' << num(g.min) << ',' << num(g.q1) << ','
            << num(g.median) << ',' << num(g.q3) << ',' << num(g.max) << '\n';
    }
    return out.str();
}

std::string boxplot_csv(const std::vector<EvaluationRow>& rows) {
    std::map<std::string, std::vector<double>> cols;
    int r_top = 0;
    for (const auto& row : rows) r_top = std::max(r_top, row.r);
    for (const auto& row : rows) {
        if (row.defined) cols["rrmse_r" + std::to_string(row.r)].push_back(row.rrmse);
        if (row.r == r_top && row.divergence_defined) cols["divergence_" + row.bin].push_back(row.divergence);
    }
    std::ostringstream out;
    std::size_t height = 0;
    bool first = true;
    for (const auto& [name, v] : cols) {
        out << (first ? "" : ",") << name;
        first = false;
        height = std::max(height, v.size());
    }
    out << '\n';
    for (std::size_t i = 0; i < height; ++i) {
        first = true;
        for (const auto& [name, v] : cols) {
            out << (first ? "" : ",");
            if (i < v.size()) out << num(v[i]);
            first = false;
        }
        out << '\n';
    }
    return out.str();
}

void write_case(const std::filesystem::path& dir, const BenchmarkCase& c, const BenchmarkSpec& spec) {
    std::filesystem::create_directories(dir);
    write_model(dir / "model.json", c.pscm, c.selector);
    write_csv(dir / "data.csv", c.pscm, c.data);
    json meta{{"spec", spec_to_json(spec)},
              {"seed", c.seed},
              {"cause", c.cause},
              {"effect", c.effect},
              {"internal", c.internal},
              {"p_s1", c.p_s1},
              {"d0", c.selected.d0},
              {"d1", c.selected.d1()},
              {"removed_states", c.removed_states},
              {"sampling_pmfs", assignment_to_json(c.sampling_model, c.sampling_model.assignment())}};
    write_json(dir / "case.json", meta);
}

BenchmarkCase read_case(const std::filesystem::path& dir) {
    BenchmarkCase c;
    const ModelFile mf = read_model(dir / "model.json");
    if (!mf.selector) throw ParseError((dir / "model.json").string() + ": benchmark model without selector");
    c.pscm = mf.model.without_pmfs();
    c.selector = *mf.selector;
    c.data = read_csv(dir / "data.csv", c.pscm);
    const json meta = read_json(dir / "case.json");
    try {
        c.seed = meta.at("seed").get<std::uint64_t>();
        c.cause = meta.at("cause").get<std::string>();
        c.effect = meta.at("effect").get<std::string>();
        c.internal = meta.at("internal").get<std::string>();
        c.removed_states = meta.value("removed_states", 0);
        c.sampling_model = c.pscm.with_assignment(assignment_from_json(c.pscm, meta.at("sampling_pmfs")));
    } catch (const json::exception& e) {
        throw ParseError((dir / "case.json").string() + ": " + e.what());
    }
    c.selected = partition(c.pscm, c.data, c.selector);
    c.p_s1 = static_cast<double>(c.selected.d1()) / static_cast<double>(c.selected.d());
    return c;
}

}  // namespace cfbound
