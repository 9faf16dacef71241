#include "cfbound/scm.hpp"

#include "cfbound/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <set>

namespace cfbound {

std::size_t mixed_radix_index(std::span<const int> cards, std::span<const int> states) {
    std::size_t index = 0;
    for (std::size_t i = 0; i < cards.size(); ++i) {
        index = index * static_cast<std::size_t>(cards[i]) + static_cast<std::size_t>(states[i]);
    }
    return index;
}

std::vector<int> mixed_radix_decode(std::span<const int> cards, std::size_t index) {
    std::vector<int> states(cards.size());
    for (std::size_t i = cards.size(); i-- > 0;) {
        const auto c = static_cast<std::size_t>(cards[i]);
        states[i] = static_cast<int>(index % c);
        index /= c;
    }
    return states;
}

std::uint64_t checked_product(std::span<const int> cards, std::uint64_t cap) {
    std::uint64_t product = 1;
    for (int c : cards) {
        if (c <= 0) throw ModelError("non-positive cardinality");
        if (product > cap / static_cast<std::uint64_t>(c)) {
            throw CapacityExceeded("state space exceeds cap of " + std::to_string(cap));
        }
        product *= static_cast<std::uint64_t>(c);
    }
    return product;
}

void normalize_pmf(std::vector<double>& pmf, std::string_view what) {
    double sum = 0.0;
    for (double p : pmf) {
        if (!std::isfinite(p) || p < 0.0) {
            throw ModelError("probability vector for " + std::string(what) + " has a negative or non-finite entry");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kPmfTolerance) {
        throw ModelError("probability vector for " + std::string(what) + " sums to " + std::to_string(sum));
    }
    // leave vectors that already sum to 1 up to rounding alone, so that
    // writing and reading a model is exact
    if (std::abs(sum - 1.0) <= 4.0 * std::numeric_limits<double>::epsilon() * static_cast<double>(pmf.size())) return;
    for (double& p : pmf) p /= sum;
}

// ---------------------------------------------------------------------------
// Scm

std::optional<VarId> Scm::find(std::string_view name) const {
    auto it = index_.find(std::string(name));
    if (it == index_.end()) return std::nullopt;
    return it->second;
}

VarId Scm::id_of(std::string_view name) const {
    auto id = find(name);
    if (!id) throw ModelError("unknown variable '" + std::string(name) + "'");
    return *id;
}

const StructuralEquation& Scm::equation(VarId child) const {
    const auto& eq = equations_.at(static_cast<std::size_t>(child));
    if (!eq) throw ModelError("variable '" + variable(child).name + "' has no structural equation");
    return *eq;
}

const std::vector<VarId>& Scm::parents(VarId id) const {
    static const std::vector<VarId> none;
    const auto& eq = equations_.at(static_cast<std::size_t>(id));
    return eq ? eq->parents : none;
}

bool Scm::is_full() const {
    return std::all_of(exogenous_.begin(), exogenous_.end(),
                       [&](VarId u) { return pmfs_[static_cast<std::size_t>(u)].has_value(); });
}

bool Scm::single_exogenous_parent() const {
    for (VarId x : observed_) {
        int n = 0;
        for (VarId p : parents(x)) n += is_exogenous(p) ? 1 : 0;
        if (n > 1) return false;
    }
    return true;
}

bool Scm::is_markovian() const {
    for (VarId x : observed_) {
        int n = 0;
        for (VarId p : parents(x)) {
            if (!is_exogenous(p)) continue;
            ++n;
            int observed_children = 0;
            for (VarId c : children(p)) observed_children += (obs_ordinal_[static_cast<std::size_t>(c)] >= 0) ? 1 : 0;
            if (observed_children != 1) return false;
        }
        if (n != 1) return false;
    }
    return true;
}

ExogenousAssignment Scm::assignment() const {
    ExogenousAssignment a;
    a.pmfs.reserve(exogenous_.size());
    for (VarId u : exogenous_) {
        const auto& p = pmfs_[static_cast<std::size_t>(u)];
        if (!p) throw ModelError("exogenous variable '" + variable(u).name + "' has no probability vector");
        a.pmfs.push_back(*p);
    }
    return a;
}

Scm Scm::with_assignment(const ExogenousAssignment& a) const {
    if (a.size() != exogenous_.size()) throw ModelError("assignment size does not match exogenous variables");
    Scm out = *this;
    for (std::size_t i = 0; i < exogenous_.size(); ++i) {
        const VarId u = exogenous_[i];
        if (static_cast<int>(a[i].size()) != cardinality(u)) {
            throw ModelError("assignment for '" + variable(u).name + "' has wrong length");
        }
        auto pmf = a[i];
        normalize_pmf(pmf, variable(u).name);
        out.pmfs_[static_cast<std::size_t>(u)] = std::move(pmf);
    }
    return out;
}

Scm Scm::without_pmfs() const {
    Scm out = *this;
    for (auto& p : out.pmfs_) p.reset();
    return out;
}

int Scm::evaluate(VarId child, std::span<const int> full) const {
    const auto& eq = equation(child);
    std::size_t index = 0;
    for (VarId p : eq.parents) {
        index = index * static_cast<std::size_t>(cardinality(p)) + static_cast<std::size_t>(full[static_cast<std::size_t>(p)]);
    }
    return eq.table[index];
}

void Scm::propagate(std::vector<int>& full) const {
    for (VarId v : topo_) {
        if (!is_exogenous(v)) full[static_cast<std::size_t>(v)] = evaluate(v, full);
    }
}

std::vector<std::string> Scm::observed_names() const {
    std::vector<std::string> names;
    names.reserve(observed_.size());
    for (VarId v : observed_) names.push_back(variable(v).name);
    return names;
}

bool Scm::operator==(const Scm& other) const {
    if (vars_.size() != other.vars_.size() || selector_ != other.selector_) return false;
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        const auto& a = vars_[i];
        const auto& b = other.vars_[i];
        if (a.name != b.name || a.cardinality != b.cardinality || a.kind != b.kind) return false;
        const auto& ea = equations_[i];
        const auto& eb = other.equations_[i];
        if (ea.has_value() != eb.has_value()) return false;
        if (ea && (ea->parents != eb->parents || ea->table != eb->table || ea->intervened != eb->intervened)) return false;
        if (pmfs_[i] != other.pmfs_[i]) return false;
    }
    return true;
}

// ---------------------------------------------------------------------------
// ScmBuilder

ScmBuilder::ScmBuilder(const Scm& base)
    : vars_(base.vars_), equations_(base.equations_), pmfs_(base.pmfs_), selector_(base.selector_) {}

std::optional<VarId> ScmBuilder::find(std::string_view name) const {
    for (std::size_t i = 0; i < vars_.size(); ++i) {
        if (vars_[i].name == name) return static_cast<VarId>(i);
    }
    return std::nullopt;
}

VarId ScmBuilder::add_endogenous(std::string name, int cardinality) {
    vars_.push_back({std::move(name), cardinality, VarKind::endogenous});
    equations_.emplace_back();
    pmfs_.emplace_back();
    return static_cast<VarId>(vars_.size() - 1);
}

VarId ScmBuilder::add_exogenous(std::string name, int cardinality, std::optional<std::vector<double>> pmf) {
    vars_.push_back({std::move(name), cardinality, VarKind::exogenous});
    equations_.emplace_back();
    pmfs_.push_back(std::move(pmf));
    return static_cast<VarId>(vars_.size() - 1);
}

void ScmBuilder::set_equation(VarId child, std::vector<VarId> parents, std::vector<int> table, bool intervened) {
    if (child < 0 || static_cast<std::size_t>(child) >= vars_.size()) throw ModelError("equation for unknown variable");
    StructuralEquation eq;
    eq.child = child;
    eq.parents = std::move(parents);
    eq.table = std::move(table);
    eq.intervened = intervened;
    equations_[static_cast<std::size_t>(child)] = std::move(eq);
}

void ScmBuilder::set_pmf(VarId exo, std::optional<std::vector<double>> pmf) {
    pmfs_.at(static_cast<std::size_t>(exo)) = std::move(pmf);
}

void ScmBuilder::mark_selector(VarId id) { selector_ = id; }

Scm ScmBuilder::build() const {
    Scm m;
    m.vars_ = vars_;
    m.equations_ = equations_;
    m.pmfs_ = pmfs_;
    m.selector_ = selector_;

    const std::size_t n = vars_.size();
    m.exo_ordinal_.assign(n, -1);
    m.obs_ordinal_.assign(n, -1);
    m.children_.assign(n, {});

    for (std::size_t i = 0; i < n; ++i) {
        const auto& v = vars_[i];
        if (v.name.empty()) throw ModelError("variable with empty name");
        if (v.cardinality < 1) throw ModelError("variable '" + v.name + "' has cardinality < 1");
        if (!m.index_.emplace(v.name, static_cast<VarId>(i)).second) {
            throw ModelError("duplicate variable name '" + v.name + "'");
        }
        const auto id = static_cast<VarId>(i);
        if (v.kind == VarKind::exogenous) {
            m.exo_ordinal_[i] = static_cast<int>(m.exogenous_.size());
            m.exogenous_.push_back(id);
        } else {
            m.endogenous_.push_back(id);
            if (selector_ != id) {
                m.obs_ordinal_[i] = static_cast<int>(m.observed_.size());
                m.observed_.push_back(id);
            }
        }
    }

    for (std::size_t i = 0; i < n; ++i) {
        const auto& v = vars_[i];
        const auto& eq = equations_[i];
        if (v.kind == VarKind::exogenous) {
            if (eq) throw ModelError("exogenous variable '" + v.name + "' cannot have a structural equation");
            if (pmfs_[i]) {
                auto pmf = *pmfs_[i];
                if (static_cast<int>(pmf.size()) != v.cardinality) {
                    throw ModelError("probability vector for '" + v.name + "' has wrong length");
                }
                normalize_pmf(pmf, v.name);
                m.pmfs_[i] = std::move(pmf);
            }
            continue;
        }
        if (pmfs_[i]) throw ModelError("endogenous variable '" + v.name + "' cannot carry a probability vector");
        if (!eq) throw ModelError("endogenous variable '" + v.name + "' has no structural equation");

        std::set<VarId> seen;
        std::vector<int> cards;
        for (VarId p : eq->parents) {
            if (p < 0 || static_cast<std::size_t>(p) >= n) throw ModelError("unknown parent of '" + v.name + "'");
            if (static_cast<std::size_t>(p) == i) throw ModelError("'" + v.name + "' lists itself as parent");
            if (!seen.insert(p).second) throw ModelError("duplicate parent of '" + v.name + "'");
            if (selector_ && p == *selector_) throw ModelError("the selector cannot have children");
            cards.push_back(vars_[static_cast<std::size_t>(p)].cardinality);
            m.children_[static_cast<std::size_t>(p)].push_back(static_cast<VarId>(i));
        }
        std::uint64_t rows = 1;
        for (int c : cards) rows *= static_cast<std::uint64_t>(c);
        if (eq->table.size() != rows) {
            throw ModelError("table of '" + v.name + "' has length " + std::to_string(eq->table.size()) +
                             ", expected " + std::to_string(rows));
        }
        std::vector<bool> hit(static_cast<std::size_t>(v.cardinality), false);
        for (int s : eq->table) {
            if (s < 0 || s >= v.cardinality) throw ModelError("table of '" + v.name + "' has out-of-range state");
            hit[static_cast<std::size_t>(s)] = true;
        }
        const bool is_selector = selector_ && *selector_ == static_cast<VarId>(i);
        if (!eq->intervened && !is_selector &&
            !std::all_of(hit.begin(), hit.end(), [](bool b) { return b; })) {
            throw ModelError("structural equation of '" + v.name + "' is not surjective");
        }
        if (is_selector) {
            if (v.cardinality != 2) throw ModelError("selector must be Boolean");
            for (VarId p : eq->parents) {
                if (vars_[static_cast<std::size_t>(p)].kind == VarKind::exogenous) {
                    throw ModelError("selector parents must be endogenous");
                }
            }
        }
    }

    // Kahn's algorithm, smallest id first for a deterministic order.
    std::vector<int> indegree(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (equations_[i]) indegree[i] = static_cast<int>(equations_[i]->parents.size());
    }
    std::priority_queue<VarId, std::vector<VarId>, std::greater<>> ready;
    for (std::size_t i = 0; i < n; ++i) {
        if (indegree[i] == 0) ready.push(static_cast<VarId>(i));
    }
    while (!ready.empty()) {
        const VarId v = ready.top();
        ready.pop();
        m.topo_.push_back(v);
        for (VarId c : m.children_[static_cast<std::size_t>(v)]) {
            if (--indegree[static_cast<std::size_t>(c)] == 0) ready.push(c);
        }
    }
    if (m.topo_.size() != n) throw ModelError("graph contains a cycle");
    return m;
}

// ---------------------------------------------------------------------------
// Conservative equations

std::uint64_t conservative_cardinality(int child_cardinality, std::span<const int> parent_cards, std::uint64_t cap) {
    const std::uint64_t configs = checked_product(parent_cards, cap);
    std::uint64_t card = 1;
    for (std::uint64_t i = 0; i < configs; ++i) {
        if (card > cap / static_cast<std::uint64_t>(child_cardinality)) {
            throw CapacityExceeded("conservative exogenous cardinality exceeds cap of " + std::to_string(cap));
        }
        card *= static_cast<std::uint64_t>(child_cardinality);
    }
    return card;
}

Scm build_conservative(const DagSpec& dag, std::uint64_t cap) {
    ScmBuilder b;
    std::map<std::string, VarId> ids;
    for (const auto& node : dag.nodes) {
        if (ids.count(node.name)) throw ModelError("duplicate node '" + node.name + "'");
        ids[node.name] = b.add_endogenous(node.name, node.cardinality);
    }
    for (const auto& node : dag.nodes) {
        std::vector<VarId> endo_parents;
        std::vector<int> cards;
        for (const auto& p : node.parents) {
            auto it = ids.find(p);
            if (it == ids.end()) throw ModelError("unknown parent '" + p + "' of '" + node.name + "'");
            endo_parents.push_back(it->second);
            cards.push_back(dag.nodes[static_cast<std::size_t>(it->second)].cardinality);
        }
        const std::uint64_t u_card = conservative_cardinality(node.cardinality, cards, cap);
        const std::uint64_t configs = checked_product(cards, cap);
        const std::string u_name = node.exogenous_name.empty() ? "U_" + node.name : node.exogenous_name;
        const VarId u = b.add_exogenous(u_name, static_cast<int>(u_card));

        std::vector<int> table(static_cast<std::size_t>(u_card * configs));
        for (std::uint64_t fn = 0; fn < u_card; ++fn) {
            std::uint64_t rest = fn;
            for (std::uint64_t c = 0; c < configs; ++c) {
                table[static_cast<std::size_t>(fn * configs + c)] =
                    static_cast<int>(rest % static_cast<std::uint64_t>(node.cardinality));
                rest /= static_cast<std::uint64_t>(node.cardinality);
            }
        }
        std::vector<VarId> parents{u};
        parents.insert(parents.end(), endo_parents.begin(), endo_parents.end());
        b.set_equation(ids[node.name], std::move(parents), std::move(table));
    }
    return b.build();
}

bool check_joint_surjectivity(const Scm& model, std::uint64_t cap) {
    std::vector<int> exo_cards;
    for (VarId u : model.exogenous()) exo_cards.push_back(model.cardinality(u));
    std::vector<int> obs_cards;
    for (VarId x : model.observed()) obs_cards.push_back(model.cardinality(x));
    const std::uint64_t n_u = checked_product(exo_cards, cap);
    const std::uint64_t n_x = checked_product(obs_cards, cap);

    std::vector<char> reached(static_cast<std::size_t>(n_x), 0);
    std::uint64_t remaining = n_x;
    std::vector<int> full(model.size(), 0);
    std::vector<int> x(obs_cards.size());
    const auto& exo = model.exogenous();
    for (std::uint64_t k = 0; k < n_u && remaining > 0; ++k) {
        model.propagate(full);
        for (std::size_t i = 0; i < x.size(); ++i) x[i] = full[static_cast<std::size_t>(model.observed()[i])];
        auto& r = reached[mixed_radix_index(obs_cards, x)];
        if (!r) {
            r = 1;
            --remaining;
        }
        // Odometer over exogenous states, last exogenous variable fastest.
        for (std::size_t i = exo.size(); i-- > 0;) {
            auto& s = full[static_cast<std::size_t>(exo[i])];
            if (++s < exo_cards[i]) break;
            s = 0;
        }
    }
    return remaining == 0;
}

// ---------------------------------------------------------------------------
// Selector

Scm embed_selector(const Scm& model, const Selector& sel) {
    if (model.selector()) throw ModelError("model already has a selector");
    if (model.find("S")) throw ModelError("name clash: model already has a variable named 'S'");
    ScmBuilder b(model);
    std::vector<VarId> parents;
    std::vector<int> cards;
    for (const auto& name : sel.parents) {
        const auto id = model.find(name);
        if (!id) throw ModelError("selector parent '" + name + "' is not a model variable");
        if (model.is_exogenous(*id)) throw ModelError("selector parent '" + name + "' is exogenous");
        parents.push_back(*id);
        cards.push_back(model.cardinality(*id));
    }
    std::uint64_t rows = 1;
    for (int c : cards) rows *= static_cast<std::uint64_t>(c);
    if (sel.table.size() != rows) throw ModelError("selector table has wrong length");
    for (int v : sel.table) {
        if (v != 0 && v != 1) throw ModelError("selector table entries must be 0 or 1");
    }
    const VarId s = b.add_endogenous("S", 2);
    b.set_equation(s, std::move(parents), sel.table);
    b.mark_selector(s);
    return b.build();
}

std::optional<Selector> extract_selector(const Scm& model) {
    if (!model.selector()) return std::nullopt;
    const auto& eq = model.equation(*model.selector());
    Selector sel;
    for (VarId p : eq.parents) sel.parents.push_back(model.variable(p).name);
    sel.table = eq.table;
    return sel;
}

Scm strip_selector(const Scm& model) {
    if (!model.selector()) return model;
    const VarId s = *model.selector();
    ScmBuilder b;
    std::vector<VarId> remap(model.size(), -1);
    for (std::size_t i = 0; i < model.size(); ++i) {
        const auto id = static_cast<VarId>(i);
        if (id == s) continue;
        const auto& v = model.variable(id);
        remap[i] = v.kind == VarKind::exogenous ? b.add_exogenous(v.name, v.cardinality, model.pmf(id))
                                                : b.add_endogenous(v.name, v.cardinality);
    }
    for (VarId x : model.observed()) {
        const auto& eq = model.equation(x);
        std::vector<VarId> parents;
        for (VarId p : eq.parents) parents.push_back(remap[static_cast<std::size_t>(p)]);
        b.set_equation(remap[static_cast<std::size_t>(x)], std::move(parents), eq.table, eq.intervened);
    }
    return b.build();
}

BoundSelector::BoundSelector(const Scm& model, const Selector& sel) : table_(sel.table) {
    for (const auto& name : sel.parents) {
        const VarId id = model.id_of(name);
        const int pos = model.observed_ordinal(id);
        if (pos < 0) throw ModelError("selector parent '" + name + "' is not an observed endogenous variable");
        positions_.push_back(pos);
        cards_.push_back(model.cardinality(id));
    }
    std::size_t rows = 1;
    for (int c : cards_) rows *= static_cast<std::size_t>(c);
    if (table_.size() != rows) throw ModelError("selector table has wrong length");
}

int BoundSelector::operator()(const Config& x) const {
    std::size_t index = 0;
    for (std::size_t i = 0; i < positions_.size(); ++i) {
        index = index * static_cast<std::size_t>(cards_[i]) + static_cast<std::size_t>(x[static_cast<std::size_t>(positions_[i])]);
    }
    return table_[index];
}

// ---------------------------------------------------------------------------
// c-components

std::vector<std::vector<VarId>> c_components(const Scm& model) {
    const auto& obs = model.observed();
    std::vector<std::size_t> parent(obs.size());
    std::iota(parent.begin(), parent.end(), std::size_t{0});
    auto root = [&](std::size_t i) {
        while (parent[i] != i) i = parent[i] = parent[parent[i]];
        return i;
    };
    for (VarId u : model.exogenous()) {
        std::optional<std::size_t> first;
        for (VarId c : model.children(u)) {
            const int pos = model.observed_ordinal(c);
            if (pos < 0) continue;
            if (!first) {
                first = static_cast<std::size_t>(pos);
            } else {
                parent[root(static_cast<std::size_t>(pos))] = root(*first);
            }
        }
    }
    std::map<std::size_t, std::vector<VarId>> groups;
    std::vector<std::size_t> order;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        const std::size_t r = root(i);
        if (!groups.count(r)) order.push_back(r);
        groups[r].push_back(obs[i]);
    }
    std::vector<std::vector<VarId>> out;
    for (std::size_t r : order) out.push_back(groups[r]);
    return out;
}

}  // namespace cfbound
