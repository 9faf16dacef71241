#include "cfbound/inference.hpp"

#include "cfbound/errors.hpp"

#include <algorithm>
#include <set>

namespace cfbound {

namespace {

std::set<VarId> ancestors_of(const Scm& model, const std::vector<VarId>& seeds) {
    std::set<VarId> seen;
    std::vector<VarId> stack(seeds.begin(), seeds.end());
    while (!stack.empty()) {
        const VarId v = stack.back();
        stack.pop_back();
        if (!seen.insert(v).second) continue;
        for (VarId p : model.parents(v)) stack.push_back(p);
    }
    return seen;
}

// Degenerate CPT of `child` restricted to the evidence.
Factor reduced_equation(const Scm& model, VarId child, const Evidence& evidence) {
    const auto& eq = model.equation(child);
    Factor f;
    std::vector<VarId> free_vars;
    for (VarId p : eq.parents) {
        if (!evidence.count(p)) free_vars.push_back(p);
    }
    const bool child_observed = evidence.count(child) > 0;
    if (!child_observed) free_vars.push_back(child);
    std::sort(free_vars.begin(), free_vars.end());
    f.scope = free_vars;
    for (VarId v : free_vars) f.cards.push_back(model.cardinality(v));
    std::size_t size = 1;
    for (int c : f.cards) size *= static_cast<std::size_t>(c);
    f.values.assign(size, 0.0);

    std::vector<int> full(model.size(), 0);
    for (const auto& [v, s] : evidence) full[static_cast<std::size_t>(v)] = s;
    std::vector<int> state(free_vars.size(), 0);
    for (std::size_t n = 0; n < size; ++n) {
        for (std::size_t i = 0; i < free_vars.size(); ++i) full[static_cast<std::size_t>(free_vars[i])] = state[i];
        const int value = model.evaluate(child, full);
        const int wanted = child_observed ? evidence.at(child) : full[static_cast<std::size_t>(child)];
        f.values[n] = value == wanted ? 1.0 : 0.0;
        for (std::size_t i = free_vars.size(); i-- > 0;) {
            if (++state[i] < f.cards[i]) break;
            state[i] = 0;
        }
    }
    return f;
}

}  // namespace

PosteriorEngine::PosteriorEngine(const Scm& structure, Evidence evidence)
    : model_(&structure), evidence_(std::move(evidence)) {
    const Scm& m = *model_;
    bool has_exogenous_evidence = false;
    for (const auto& [v, s] : evidence_) {
        if (v < 0 || static_cast<std::size_t>(v) >= m.size()) throw ModelError("evidence on unknown variable");
        if (s < 0 || s >= m.cardinality(v)) {
            throw ModelError("evidence state out of range for '" + m.variable(v).name + "'");
        }
        has_exogenous_evidence = has_exogenous_evidence || m.is_exogenous(v);
    }
    const bool all_observed = std::all_of(m.observed().begin(), m.observed().end(),
                                          [&](VarId x) { return evidence_.count(x) > 0; });
    fast_ = all_observed && !has_exogenous_evidence && m.single_exogenous_parent();

    if (fast_) {
        std::vector<int> full(m.size(), 0);
        for (const auto& [v, s] : evidence_) full[static_cast<std::size_t>(v)] = s;
        // Endogenous variables without exogenous parents are fixed by the evidence.
        for (VarId x : m.endogenous()) {
            const auto& ps = m.parents(x);
            const bool has_exo = std::any_of(ps.begin(), ps.end(), [&](VarId p) { return m.is_exogenous(p); });
            if (has_exo) continue;
            if (x == m.selector() && !evidence_.count(x)) continue;
            if (m.evaluate(x, full) != full[static_cast<std::size_t>(x)]) contradiction_ = true;
        }
        consistent_.resize(m.exogenous().size());
        for (std::size_t i = 0; i < m.exogenous().size(); ++i) {
            const VarId u = m.exogenous()[i];
            std::vector<VarId> kids;
            for (VarId c : m.children(u)) {
                if (m.observed_ordinal(c) >= 0) kids.push_back(c);
            }
            auto& list = consistent_[i];
            for (int s = 0; s < m.cardinality(u); ++s) {
                full[static_cast<std::size_t>(u)] = s;
                bool ok = true;
                for (VarId c : kids) {
                    if (m.evaluate(c, full) != full[static_cast<std::size_t>(c)]) {
                        ok = false;
                        break;
                    }
                }
                if (ok) list.push_back(s);
            }
            if (list.empty()) contradiction_ = true;
        }
        return;
    }

    std::vector<VarId> seeds;
    for (const auto& [v, s] : evidence_) seeds.push_back(v);
    const auto anc = ancestors_of(m, seeds);
    relevant_.assign(m.size(), 0);
    for (VarId v : anc) relevant_[static_cast<std::size_t>(v)] = 1;
    for (VarId v : m.topological_order()) {
        if (!relevant_[static_cast<std::size_t>(v)] || m.is_exogenous(v)) continue;
        Factor f = reduced_equation(m, v, evidence_);
        if (f.scope.empty()) {
            if (f.values[0] == 0.0) contradiction_ = true;
            continue;
        }
        structural_.push_back(std::move(f));
    }
    for (VarId u : m.exogenous()) {
        if (relevant_[static_cast<std::size_t>(u)]) relevant_exogenous_.push_back(u);
    }
    evidence_plan_ = plan_for(-1);
    for (VarId u : relevant_exogenous_) {
        if (!evidence_.count(u)) target_plans_[u] = plan_for(u);
    }
}

PosteriorEngine::Elimination PosteriorEngine::plan_for(VarId target) const {
    const Scm& m = *model_;
    // Interaction graph over unobserved relevant variables.
    std::map<VarId, std::set<VarId>> adj;
    for (std::size_t i = 0; i < m.size(); ++i) {
        const auto v = static_cast<VarId>(i);
        if (relevant_[i] && !evidence_.count(v)) adj[v];
    }
    for (const auto& f : structural_) {
        for (VarId a : f.scope) {
            for (VarId b : f.scope) {
                if (a != b) adj[a].insert(b);
            }
        }
    }
    Elimination plan;
    plan.target = target;
    std::set<VarId> remaining;
    for (const auto& [v, n] : adj) {
        if (v != target) remaining.insert(v);
    }
    while (!remaining.empty()) {
        VarId best = -1;
        std::size_t best_fill = 0;
        for (VarId v : remaining) {
            std::size_t fill = 0;
            const auto& nb = adj[v];
            for (auto a = nb.begin(); a != nb.end(); ++a) {
                for (auto b = std::next(a); b != nb.end(); ++b) {
                    if (!adj[*a].count(*b)) ++fill;
                }
            }
            if (best < 0 || fill < best_fill ||
                (fill == best_fill && m.variable(v).name < m.variable(best).name)) {
                best = v;
                best_fill = fill;
            }
        }
        const auto nb = adj[best];
        for (VarId a : nb) {
            adj[a].erase(best);
            for (VarId b : nb) {
                if (a != b) adj[a].insert(b);
            }
        }
        adj.erase(best);
        remaining.erase(best);
        plan.order.push_back(best);
    }
    return plan;
}

Factor PosteriorEngine::run_elimination(const ExogenousAssignment& pmfs, const Elimination& plan) const {
    const Scm& m = *model_;
    std::vector<Factor> owned;
    owned.reserve(relevant_exogenous_.size() + plan.order.size() + 1);
    std::vector<const Factor*> pool;
    for (const auto& f : structural_) pool.push_back(&f);
    double scale = 1.0;
    for (VarId u : relevant_exogenous_) {
        const auto& p = pmfs[static_cast<std::size_t>(m.exogenous_ordinal(u))];
        auto it = evidence_.find(u);
        if (it != evidence_.end()) {
            scale *= p[static_cast<std::size_t>(it->second)];
            continue;
        }
        owned.push_back(Factor{{u}, {m.cardinality(u)}, p});
    }
    const std::size_t n_pmf = owned.size();
    for (std::size_t i = 0; i < n_pmf; ++i) pool.push_back(&owned[i]);

    for (VarId v : plan.order) {
        std::vector<const Factor*> bucket;
        std::vector<const Factor*> rest;
        for (const Factor* f : pool) (f->contains(v) ? bucket : rest).push_back(f);
        if (bucket.empty()) continue;
        owned.push_back(sum_product(bucket, v));
        rest.push_back(&owned.back());
        pool = std::move(rest);
    }
    Factor result = sum_product(pool, -1);
    for (double& x : result.values) x *= scale;
    return result;
}

double PosteriorEngine::fast_compute(const ExogenousAssignment& pmfs, ExogenousAssignment* posteriors) const {
    double prob = 1.0;
    if (posteriors) posteriors->pmfs.resize(pmfs.size());
    for (std::size_t i = 0; i < consistent_.size(); ++i) {
        const auto& p = pmfs[i];
        double z = 0.0;
        for (int s : consistent_[i]) z += p[static_cast<std::size_t>(s)];
        prob *= z;
        if (posteriors) {
            auto& out = (*posteriors)[i];
            out.assign(p.size(), 0.0);
            if (z > 0.0) {
                for (int s : consistent_[i]) out[static_cast<std::size_t>(s)] = p[static_cast<std::size_t>(s)] / z;
            }
        }
    }
    return prob;
}

PosteriorResult PosteriorEngine::compute(const ExogenousAssignment& pmfs, bool want_posteriors) const {
    const Scm& m = *model_;
    if (pmfs.size() != m.exogenous().size()) throw ModelError("assignment size does not match exogenous variables");
    PosteriorResult r;
    if (contradiction_) {
        r.evidence_probability = 0.0;
    } else if (fast_) {
        r.evidence_probability = fast_compute(pmfs, want_posteriors ? &r.posteriors : nullptr);
    } else {
        r.evidence_probability = run_elimination(pmfs, evidence_plan_).values.at(0);
    }
    if (!want_posteriors) return r;
    if (!(r.evidence_probability > 0.0)) throw ZeroProbabilityEvidence("evidence has zero probability");
    if (fast_) return r;

    r.posteriors.pmfs.resize(pmfs.size());
    for (std::size_t i = 0; i < m.exogenous().size(); ++i) {
        const VarId u = m.exogenous()[i];
        auto& out = r.posteriors[i];
        if (auto ev = evidence_.find(u); ev != evidence_.end()) {
            out.assign(static_cast<std::size_t>(m.cardinality(u)), 0.0);
            out[static_cast<std::size_t>(ev->second)] = 1.0;
            continue;
        }
        auto plan = target_plans_.find(u);
        if (plan == target_plans_.end()) {
            out = pmfs[i];  // not an ancestor of the evidence
            continue;
        }
        Factor f = run_elimination(pmfs, plan->second);
        out = marginal_onto(f, u);
        double z = 0.0;
        for (double v : out) z += v;
        for (double& v : out) v /= z;
    }
    return r;
}

double PosteriorEngine::probability(const ExogenousAssignment& pmfs) const {
    return compute(pmfs, false).evidence_probability;
}

// ---------------------------------------------------------------------------

namespace {

void require_full(const Scm& m) {
    if (!m.is_full()) throw ModelError("operation requires a fully specified model");
}

}  // namespace

double joint_probability(const Scm& fscm, const Config& x) {
    require_full(fscm);
    if (x.size() != fscm.observed().size()) throw ModelError("configuration size mismatch");
    Evidence e;
    for (std::size_t i = 0; i < x.size(); ++i) e[fscm.observed()[i]] = x[i];
    return PosteriorEngine(fscm, e).probability(fscm.assignment());
}

double evidence_probability(const Scm& fscm, const Evidence& evidence) {
    require_full(fscm);
    return PosteriorEngine(fscm, evidence).probability(fscm.assignment());
}

ExogenousAssignment exogenous_posterior(const Scm& fscm, const Evidence& evidence) {
    require_full(fscm);
    return PosteriorEngine(fscm, evidence).compute(fscm.assignment()).posteriors;
}

Evidence make_evidence(const Scm& model, const std::map<std::string, int>& by_name) {
    Evidence e;
    for (const auto& [name, s] : by_name) e[model.id_of(name)] = s;
    return e;
}

Scm intervene(const Scm& model, const std::vector<DoAssignment>& assignments) {
    ScmBuilder b(model);
    std::set<VarId> seen;
    for (const auto& a : assignments) {
        if (a.variable < 0 || static_cast<std::size_t>(a.variable) >= model.size()) {
            throw ModelError("intervention on unknown variable");
        }
        if (model.is_exogenous(a.variable)) {
            throw ModelError("cannot intervene on exogenous variable '" + model.variable(a.variable).name + "'");
        }
        if (!seen.insert(a.variable).second) {
            throw ModelError("repeated intervention target '" + model.variable(a.variable).name + "'");
        }
        if (a.state < 0 || a.state >= model.cardinality(a.variable)) {
            throw ModelError("intervention state out of range");
        }
        b.set_equation(a.variable, {}, {a.state}, true);
    }
    return b.build();
}

// ---------------------------------------------------------------------------
// Counterfactuals

CounterfactualQuery pns_query(const std::string& cause, const std::string& effect) {
    CounterfactualQuery q;
    q.antecedents = {{cause, 0, 1}, {cause, 1, 2}};
    q.consequents = {{effect, 0, 1}, {effect, 1, 2}};
    q.mode = CounterfactualQuery::Mode::joint;
    return q;
}

CounterfactualQuery pn_query(const std::string& cause, const std::string& effect) {
    CounterfactualQuery q;
    q.antecedents = {{cause, 0, 1}};
    q.consequents = {{effect, 0, 1}};
    q.conditioning = {{cause, 1}, {effect, 1}};
    q.mode = CounterfactualQuery::Mode::conditional;
    return q;
}

CounterfactualQuery ps_query(const std::string& cause, const std::string& effect) {
    CounterfactualQuery q;
    q.antecedents = {{cause, 1, 1}};
    q.consequents = {{effect, 1, 1}};
    q.conditioning = {{cause, 0}, {effect, 0}};
    q.mode = CounterfactualQuery::Mode::conditional;
    return q;
}

namespace {

std::string world_name(const std::string& name, int world) {
    return world == 0 ? name : name + "[" + std::to_string(world) + "]";
}

std::set<int> worlds_of(const CounterfactualQuery& q) {
    std::set<int> worlds;
    for (const auto& l : q.antecedents) worlds.insert(l.world);
    for (const auto& l : q.consequents) worlds.insert(l.world);
    if (!q.conditioning.empty()) worlds.insert(0);
    return worlds;
}

}  // namespace

void validate_query(const Scm& model, const CounterfactualQuery& q) {
    auto check = [&](const std::string& name, int state) {
        const VarId id = model.id_of(name);
        if (model.observed_ordinal(id) < 0) throw ModelError("'" + name + "' is not an observed endogenous variable");
        if (state < 0 || state >= model.cardinality(id)) throw ModelError("state out of range for '" + name + "'");
    };
    for (const auto& l : q.antecedents) {
        check(l.variable, l.state);
        if (l.world < 0) throw ModelError("negative world tag");
    }
    for (const auto& l : q.consequents) {
        check(l.variable, l.state);
        if (l.world < 0) throw ModelError("negative world tag");
    }
    for (const auto& [name, s] : q.conditioning) check(name, s);
    if (q.consequents.empty()) throw ModelError("query has no consequents");
}

void require_precedes(const Scm& model, const std::string& cause, const std::string& effect) {
    const VarId c = model.id_of(cause);
    const VarId e = model.id_of(effect);
    if (c == e) throw ModelError("cause and effect must differ");
    if (ancestors_of(model, {c}).count(e)) {
        throw ModelError("'" + cause + "' does not topologically precede '" + effect + "'");
    }
}

Scm build_twin(const Scm& model, const CounterfactualQuery& q, int max_worlds) {
    validate_query(model, q);
    const auto worlds = worlds_of(q);
    if (static_cast<int>(worlds.size()) > max_worlds) {
        throw DomainError("query uses " + std::to_string(worlds.size()) + " worlds, limit is " +
                          std::to_string(max_worlds));
    }
    std::map<std::pair<int, VarId>, int> forced;
    for (const auto& l : q.antecedents) {
        const VarId id = model.id_of(l.variable);
        auto [it, inserted] = forced.emplace(std::make_pair(l.world, id), l.state);
        if (!inserted && it->second != l.state) throw ModelError("conflicting interventions on '" + l.variable + "'");
    }

    ScmBuilder b;
    std::vector<VarId> shared(model.size(), -1);
    for (VarId u : model.exogenous()) {
        shared[static_cast<std::size_t>(u)] = b.add_exogenous(model.variable(u).name, model.cardinality(u), model.pmf(u));
    }
    std::map<std::pair<int, VarId>, VarId> copy;
    for (int w : worlds) {
        for (VarId x : model.observed()) {
            copy[{w, x}] = b.add_endogenous(world_name(model.variable(x).name, w), model.cardinality(x));
        }
    }
    for (int w : worlds) {
        for (VarId x : model.observed()) {
            const VarId target = copy.at({w, x});
            if (auto it = forced.find({w, x}); it != forced.end()) {
                b.set_equation(target, {}, {it->second}, true);
                continue;
            }
            const auto& eq = model.equation(x);
            std::vector<VarId> parents;
            for (VarId p : eq.parents) {
                parents.push_back(model.is_exogenous(p) ? shared[static_cast<std::size_t>(p)] : copy.at({w, p}));
            }
            b.set_equation(target, std::move(parents), eq.table, eq.intervened);
        }
    }
    return b.build();
}

double twin_query(const Scm& fscm, const CounterfactualQuery& q, int max_worlds) {
    require_full(fscm);
    const Scm twin = build_twin(fscm, q, max_worlds);
    Evidence condition;
    for (const auto& [name, s] : q.conditioning) condition[twin.id_of(name)] = s;
    Evidence all = condition;
    for (const auto& l : q.consequents) {
        const VarId id = twin.id_of(world_name(l.variable, l.world));
        auto [it, inserted] = all.emplace(id, l.state);
        if (!inserted && it->second != l.state) {
            if (q.mode == CounterfactualQuery::Mode::conditional && evidence_probability(twin, condition) <= 0.0) {
                throw ZeroProbabilityEvidence("conditioning event has zero probability");
            }
            return 0.0;
        }
    }
    const double joint = evidence_probability(twin, all);
    if (q.mode == CounterfactualQuery::Mode::joint) return joint;
    const double denom = condition.empty() ? 1.0 : evidence_probability(twin, condition);
    if (!(denom > 0.0)) throw ZeroProbabilityEvidence("conditioning event has zero probability");
    return std::clamp(joint / denom, 0.0, 1.0);
}

}  // namespace cfbound
