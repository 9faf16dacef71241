#include "cfbound/errors.hpp"
#include "cfbound/factor.hpp"
#include "cfbound/inference.hpp"
#include "oracle.hpp"

#include <doctest.h>

using namespace cfbound;

namespace {

std::map<VarId, int> random_evidence(const Scm& m, Rng& rng, bool complete) {
    std::map<VarId, int> ev;
    std::bernoulli_distribution keep(0.5);
    for (VarId v : m.observed()) {
        if (complete || keep(rng)) ev[v] = std::uniform_int_distribution<int>(0, m.cardinality(v) - 1)(rng);
    }
    return ev;
}

}  // namespace

TEST_CASE("sum_product by hand") {
    Factor a{{0, 1}, {2, 2}, {0.1, 0.2, 0.3, 0.4}};
    Factor b{{1, 2}, {2, 3}, {1, 2, 3, 4, 5, 6}};
    const Factor* fs[] = {&a, &b};
    const Factor out = sum_product(fs, 1);
    REQUIRE(out.scope == std::vector<VarId>{0, 2});
    // out(v0, v2) = sum_v1 a(v0, v1) b(v1, v2)
    CHECK(out.values[0] == doctest::Approx(0.1 * 1 + 0.2 * 4));
    CHECK(out.values[2] == doctest::Approx(0.1 * 3 + 0.2 * 6));
    CHECK(out.values[4] == doctest::Approx(0.3 * 2 + 0.4 * 5));
    const auto marg = marginal_onto(out, 0);
    CHECK(marg[0] == doctest::Approx(0.1 * 6 + 0.2 * 15));
}

TEST_CASE("joint probability matches enumeration") {
    Rng rng(11);
    for (int t = 0; t < 30; ++t) {
        const Scm m = oracle::random_model(rng);
        const auto ref = oracle::joint(m);
        double total = 0.0;
        for (const auto& [x, p] : ref) {
            CHECK(joint_probability(m, x) == doctest::Approx(p).epsilon(1e-12));
            total += joint_probability(m, x);
        }
        CHECK(total == doctest::Approx(1.0));
    }
}

TEST_CASE("posteriors match enumeration on both paths") {
    Rng rng(12);
    int fast = 0, slow = 0;
    for (int t = 0; t < 60; ++t) {
        const Scm m = oracle::random_model(rng);
        const bool complete = t % 2 == 0;
        const auto ev = random_evidence(m, rng, complete);
        const double pe = oracle::evidence(m, ev);
        CHECK(evidence_probability(m, ev) == doctest::Approx(pe).epsilon(1e-12));
        const PosteriorEngine engine(m, ev);
        (engine.uses_elimination() ? slow : fast) += 1;
        if (pe <= 0.0) {
            CHECK_THROWS_AS(exogenous_posterior(m, ev), ZeroProbabilityEvidence);
            continue;
        }
        const auto post = exogenous_posterior(m, ev);
        const auto ref = oracle::posterior(m, ev);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            for (std::size_t s = 0; s < ref[i].size(); ++s) CHECK(post[i][s] == doctest::Approx(ref[i][s]).epsilon(1e-10));
        }
    }
    CHECK(fast > 0);
    CHECK(slow > 0);
}

TEST_CASE("engine is reusable across parameters") {
    Rng rng(13);
    const Scm m = oracle::random_model(rng, {.n_min = 3, .n_max = 4, .with_pmfs = false});
    const auto ev = random_evidence(m, rng, true);
    const PosteriorEngine engine(m, ev);
    for (int t = 0; t < 5; ++t) {
        const auto a = oracle::random_assignment(m, rng);
        const Scm f = m.with_assignment(a);
        CHECK(engine.probability(a) == doctest::Approx(oracle::evidence(f, ev)).epsilon(1e-12));
    }
}

TEST_CASE("twin queries match per-world enumeration") {
    Rng rng(14);
    for (int t = 0; t < 40; ++t) {
        oracle::ModelOptions o;
        o.n_min = 2;
        o.n_max = 3;
        o.max_card = 2;
        const Scm m = oracle::random_model(rng, o);
        const auto& obs = m.observed();
        const std::string cause = m.variable(obs.front()).name;
        const std::string effect = m.variable(obs.back()).name;
        CHECK(twin_query(m, pns_query(cause, effect)) ==
              doctest::Approx(oracle::counterfactual(m, pns_query(cause, effect))).epsilon(1e-12));
        for (const auto& q : {pn_query(cause, effect), ps_query(cause, effect)}) {
            double denom = 0.0;
            std::map<VarId, int> ev;
            for (const auto& [n, s] : q.conditioning) ev[m.id_of(n)] = s;
            denom = oracle::evidence(m, ev);
            if (denom <= 0.0) {
                CHECK_THROWS_AS(twin_query(m, q), ZeroProbabilityEvidence);
            } else {
                CHECK(twin_query(m, q) == doctest::Approx(oracle::counterfactual(m, q)).epsilon(1e-12));
            }
        }
    }
}

TEST_CASE("three-world query") {
    Rng rng(15);
    oracle::ModelOptions o;
    o.n_min = 3;
    o.n_max = 3;
    o.max_card = 2;
    const Scm m = oracle::random_model(rng, o);
    const auto& obs = m.observed();
    const std::string a = m.variable(obs[0]).name, c = m.variable(obs[2]).name;
    CounterfactualQuery q;
    q.antecedents = {{a, 0, 1}, {a, 1, 2}, {a, 1, 3}};
    q.consequents = {{c, 1, 1}, {c, 0, 2}, {c, 1, 3}};
    CHECK_THROWS(twin_query(m, q));
    CHECK(twin_query(m, q, 3) == doctest::Approx(oracle::counterfactual(m, q)).epsilon(1e-12));
}

TEST_CASE("twin network naming") {
    DagSpec d;
    d.nodes = {{"X", 2, {}, ""}, {"Y", 2, {"X"}, ""}};
    const Scm m = build_conservative(d);
    const Scm twin = build_twin(m, pns_query("X", "Y"));
    CHECK(twin.find("Y[1]").has_value());
    CHECK(twin.find("Y[2]").has_value());
    CHECK(twin.exogenous().size() == m.exogenous().size());
    CHECK_THROWS(require_precedes(m, "Y", "X"));
    CHECK_THROWS(validate_query(m, pns_query("X", "Q")));
}
