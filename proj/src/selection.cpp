#include "cfbound/selection.hpp"

#include "cfbound/errors.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace cfbound {

std::int64_t SelectedDataset::d1() const {
    std::int64_t n = 0;
    for (const auto& [x, c] : d1_counts) n += c;
    return n;
}

namespace {

void check_record(const Scm& model, const Config& x, std::size_t row) {
    if (x.size() != model.observed().size()) {
        throw ParseError("record " + std::to_string(row + 1) + " has " + std::to_string(x.size()) +
                         " values, expected " + std::to_string(model.observed().size()));
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        const VarId v = model.observed()[i];
        if (x[i] < 0 || x[i] >= model.cardinality(v)) {
            throw ParseError("record " + std::to_string(row + 1) + ": state " + std::to_string(x[i]) +
                             " out of range for '" + model.variable(v).name + "'");
        }
    }
}

}  // namespace

SelectedDataset partition(const Scm& model, const std::vector<Config>& data, const std::optional<Selector>& sel) {
    SelectedDataset ds;
    ds.selector = sel;
    std::optional<BoundSelector> g;
    if (sel) g.emplace(model, *sel);
    for (std::size_t r = 0; r < data.size(); ++r) {
        check_record(model, data[r], r);
        if (!g || (*g)(data[r]) == 1) {
            ++ds.d1_counts[data[r]];
        } else {
            ++ds.d0;
        }
    }
    return ds;
}

SelectedDataset selected_only(const Scm& model, const std::vector<Config>& d1_records, std::int64_t d0,
                              const std::optional<Selector>& sel) {
    if (d0 < 0) throw DomainError("d0 must be non-negative");
    if (d0 > 0 && !sel) throw ModelError("d0 > 0 requires a selector");
    SelectedDataset ds = partition(model, d1_records, sel);
    if (ds.d0 != 0) throw ParseError("selected records must satisfy the selector");
    ds.d0 = d0;
    return ds;
}

SelectedDataset conservative_limit_dataset(const std::optional<Selector>& sel) {
    if (!sel) throw ModelError("the conservative limit requires a selector");
    SelectedDataset ds;
    ds.selector = sel;
    ds.d0 = 1;
    ds.conservative_limit = true;
    return ds;
}

std::int64_t estimate_d0(std::int64_t d1, double p_s0) {
    if (d1 <= 0) throw DomainError("estimate_d0 requires d1 > 0");
    if (!(p_s0 >= 0.0) || p_s0 > 1.0) throw DomainError("P(S=0) must lie in [0, 1)");
    if (p_s0 >= 1.0) throw DomainError("P(S=0) = 1: use the conservative-limit mode");
    return std::llround(static_cast<double>(d1) * p_s0 / (1.0 - p_s0));
}

// ---------------------------------------------------------------------------

DataLikelihood::DataLikelihood(const Scm& structure, const SelectedDataset& ds) : model_(&structure) {
    const Scm& m = structure;
    if (!ds.conservative_limit) {
        for (const auto& [x, c] : ds.d1_counts) {
            if (c <= 0) continue;
            check_record(m, x, rows_.size());
            Evidence e;
            for (std::size_t i = 0; i < x.size(); ++i) e[m.observed()[i]] = x[i];
            rows_.emplace_back(x, c);
            row_engines_.emplace_back(m, std::move(e));
        }
    }
    d0_weight_ = static_cast<double>(ds.d0);
    if (ds.d0 > 0) {
        if (!m.selector()) throw ModelError("d0 > 0 requires a model with an embedded selector");
        s0_engine_.emplace(m, Evidence{{*m.selector(), 0}});
    }
    if (rows_.empty() && !s0_engine_) throw DomainError("empty dataset");
}

DataLikelihood::Result DataLikelihood::evaluate(const ExogenousAssignment& pmfs, bool with_update) const {
    Result r;
    double ll = 0.0;
    bool impossible = false;
    ExogenousAssignment acc;
    if (with_update) {
        acc.pmfs.resize(pmfs.size());
        for (std::size_t i = 0; i < pmfs.size(); ++i) acc[i].assign(pmfs[i].size(), 0.0);
    }
    auto accumulate = [&](const ExogenousAssignment& post, double weight) {
        for (std::size_t i = 0; i < post.size(); ++i) {
            auto& a = acc[i];
            const auto& p = post[i];
            for (std::size_t s = 0; s < p.size(); ++s) a[s] += weight * p[s];
        }
    };

    if (s0_engine_) {
        auto res = s0_engine_->compute(pmfs, with_update);
        r.p_s0 = res.evidence_probability;
        if (r.p_s0 > 0.0) {
            ll += d0_weight_ * std::log(r.p_s0);
        } else {
            impossible = true;
        }
        if (with_update) accumulate(res.posteriors, d0_weight_);
    }
    r.p_x.reserve(rows_.size());
    double total = d0_weight_;
    for (std::size_t k = 0; k < rows_.size(); ++k) {
        const double w = static_cast<double>(rows_[k].second);
        auto res = row_engines_[k].compute(pmfs, with_update);
        r.p_x.push_back(res.evidence_probability);
        if (res.evidence_probability > 0.0) {
            ll += w * std::log(res.evidence_probability);
        } else {
            impossible = true;
        }
        if (with_update) accumulate(res.posteriors, w);
        total += w;
    }
    r.log_likelihood = impossible ? kImpossible : ll;
    if (with_update) {
        for (auto& a : acc.pmfs) {
            for (double& v : a) v /= total;
        }
        r.update = std::move(acc);
    }
    return r;
}

double log_likelihood(const Scm& fscm, const SelectedDataset& ds) {
    if (!fscm.is_full()) throw ModelError("log-likelihood requires a fully specified model");
    return DataLikelihood(fscm, ds).evaluate(fscm.assignment(), false).log_likelihood;
}

// ---------------------------------------------------------------------------

namespace {

// Conditioning positions (observed ordinals) of each observed variable in the
// c-component factorisation, in topological order.
std::vector<std::pair<int, std::vector<int>>> factorisation_terms(const Scm& model) {
    std::vector<VarId> order;
    for (VarId v : model.topological_order()) {
        if (model.observed_ordinal(v) >= 0) order.push_back(v);
    }
    std::vector<std::pair<int, std::vector<int>>> terms;
    for (std::size_t i = 0; i < order.size(); ++i) {
        const std::set<VarId> prefix(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(i) + 1);
        // c-component of order[i] within the prefix: connected through shared exogenous parents.
        std::set<VarId> comp{order[i]};
        bool grown = true;
        while (grown) {
            grown = false;
            for (VarId u : model.exogenous()) {
                const auto& kids = model.children(u);
                const bool touches = std::any_of(kids.begin(), kids.end(), [&](VarId c) { return comp.count(c) > 0; });
                if (!touches) continue;
                for (VarId c : kids) {
                    if (prefix.count(c) && comp.insert(c).second) grown = true;
                }
            }
        }
        std::set<VarId> cond;
        for (VarId c : comp) {
            cond.insert(c);
            for (VarId p : model.parents(c)) {
                if (model.observed_ordinal(p) >= 0) cond.insert(p);
            }
        }
        cond.erase(order[i]);
        std::vector<int> positions;
        for (VarId c : cond) positions.push_back(model.observed_ordinal(c));
        std::sort(positions.begin(), positions.end());
        terms.emplace_back(model.observed_ordinal(order[i]), std::move(positions));
    }
    return terms;
}

double factorised_probability(const std::vector<std::pair<int, std::vector<int>>>& terms,
                              const std::map<Config, std::int64_t>& counts, const Config& x) {
    double p = 1.0;
    for (const auto& [pos, cond] : terms) {
        std::int64_t joint = 0;
        std::int64_t marg = 0;
        for (const auto& [y, cy] : counts) {
            const bool match = std::all_of(cond.begin(), cond.end(), [&](int k) {
                return y[static_cast<std::size_t>(k)] == x[static_cast<std::size_t>(k)];
            });
            if (!match) continue;
            marg += cy;
            if (y[static_cast<std::size_t>(pos)] == x[static_cast<std::size_t>(pos)]) joint += cy;
        }
        if (joint == 0) return 0.0;
        p *= static_cast<double>(joint) / static_cast<double>(marg);
    }
    return p;
}

}  // namespace

std::map<Config, double> factorised_distribution(const Scm& model, const std::map<Config, std::int64_t>& counts,
                                                 std::uint64_t cap) {
    std::vector<int> cards;
    for (VarId v : model.observed()) cards.push_back(model.cardinality(v));
    const std::uint64_t total = checked_product(cards, cap);
    const auto terms = factorisation_terms(model);
    std::map<Config, double> out;
    for (std::uint64_t i = 0; i < total; ++i) {
        Config x = mixed_radix_decode(cards, static_cast<std::size_t>(i));
        const double p = factorised_probability(terms, counts, x);
        out.emplace(std::move(x), p);
    }
    return out;
}

EmpiricalTargets empirical_targets(const Scm& model, const SelectedDataset& ds) {
    EmpiricalTargets t;
    const std::int64_t d = ds.d();
    if (d <= 0) throw DomainError("empty dataset");
    t.p_s0 = static_cast<double>(ds.d0) / static_cast<double>(d);
    if (ds.conservative_limit || ds.d1_counts.empty()) return t;

    if (ds.d0 > 0) {
        for (const auto& [x, c] : ds.d1_counts) t.p_x[x] = static_cast<double>(c) / static_cast<double>(d);
        return t;
    }
    const auto terms = factorisation_terms(model);
    for (const auto& [x, c] : ds.d1_counts) t.p_x[x] = factorised_probability(terms, ds.d1_counts, x);
    return t;
}

double ll_star(const Scm& model, const SelectedDataset& ds) {
    const auto t = empirical_targets(model, ds);
    double ll = 0.0;
    if (ds.d0 > 0) ll += static_cast<double>(ds.d0) * std::log(t.p_s0);
    if (!ds.conservative_limit) {
        for (const auto& [x, c] : ds.d1_counts) ll += static_cast<double>(c) * std::log(t.p_x.at(x));
    }
    return ll;
}

CompatibilityReport check_compatibility(const DataLikelihood& lik, const EmpiricalTargets& targets,
                                        double ll_star_value, std::int64_t d, const ExogenousAssignment& pmfs,
                                        double tol, std::optional<double> ll_tol) {
    CompatibilityReport rep;
    const auto res = lik.evaluate(pmfs, false);
    rep.log_likelihood = res.log_likelihood;
    rep.ll_star = ll_star_value;
    rep.s0_residual = std::abs(res.p_s0 - targets.p_s0);
    rep.max_residual = rep.s0_residual;
    for (std::size_t k = 0; k < lik.rows().size(); ++k) {
        const auto& x = lik.rows()[k].first;
        const double r = std::abs(res.p_x[k] - targets.p_x.at(x));
        rep.x_residuals.emplace_back(x, r);
        rep.max_residual = std::max(rep.max_residual, r);
    }
    rep.compatible = rep.max_residual <= tol;
    const double slack = ll_tol.value_or(1e-3 * static_cast<double>(d));
    rep.likelihood_check = res.log_likelihood != kImpossible && res.log_likelihood >= ll_star_value - slack;
    return rep;
}

CompatibilityReport check_compatibility(const Scm& fscm, const SelectedDataset& ds, double tol,
                                        std::optional<double> ll_tol) {
    if (!fscm.is_full()) throw ModelError("compatibility check requires a fully specified model");
    const DataLikelihood lik(fscm, ds);
    return check_compatibility(lik, empirical_targets(fscm, ds), ll_star(fscm, ds), ds.d(), fscm.assignment(), tol,
                               ll_tol);
}

}  // namespace cfbound
