#include "cfbound/emcc.hpp"
#include "cfbound/errors.hpp"
#include "cfbound/io.hpp"
#include "cfbound/selection.hpp"
#include "oracle.hpp"

#include <doctest.h>

#include <cmath>

using namespace cfbound;

namespace {

const std::string data_dir = CFBOUND_DATA_DIR;

std::vector<Config> sample(const Scm& m, Rng& rng, int n) {
    const auto joint = oracle::joint(m);
    std::vector<Config> xs;
    std::vector<double> ps;
    for (const auto& [x, p] : joint) {
        xs.push_back(x);
        ps.push_back(p);
    }
    std::discrete_distribution<int> pick(ps.begin(), ps.end());
    std::vector<Config> out;
    for (int i = 0; i < n; ++i) out.push_back(xs[static_cast<std::size_t>(pick(rng))]);
    return out;
}

}  // namespace

TEST_CASE("study data under the XOR selector") {
    const auto mf = read_model(data_dir + "/study_model_selected.json");
    REQUIRE(mf.selector.has_value());
    const auto data = read_csv(data_dir + "/study.csv", mf.model);
    CHECK(data.size() == 700);
    const auto ds = partition(mf.model, data, mf.selector);
    CHECK(ds.d1() == 474);
    CHECK(ds.d0 == 226);
    CHECK(static_cast<double>(ds.d1()) / ds.d() == doctest::Approx(474.0 / 700.0));
}

TEST_CASE("d0 handling") {
    CHECK(estimate_d0(474, 226.0 / 700.0) == 226);
    CHECK(estimate_d0(10, 0.0) == 0);
    CHECK_THROWS_AS(estimate_d0(10, 1.0), DomainError);
    CHECK_THROWS_AS(estimate_d0(0, 0.5), DomainError);
    CHECK_THROWS_AS(conservative_limit_dataset(std::nullopt), ModelError);

    const auto mf = read_model(data_dir + "/study_model_selected.json");
    const auto data = read_csv(data_dir + "/study.csv", mf.model);
    CHECK_THROWS_AS(selected_only(mf.model, data, 5, mf.selector), ParseError);
    const auto ds = partition(mf.model, data, mf.selector);
    std::vector<Config> d1;
    for (const auto& [x, c] : ds.d1_counts) d1.insert(d1.end(), static_cast<std::size_t>(c), x);
    const auto again = selected_only(mf.model, d1, 226, mf.selector);
    CHECK(again.d1_counts == ds.d1_counts);
    CHECK(again.d0 == 226);
}

TEST_CASE("record validation") {
    const auto mf = read_model(data_dir + "/study_model.json");
    CHECK_THROWS_AS(partition(mf.model, {Config{0, 1}}, std::nullopt), ParseError);
    CHECK_THROWS_AS(partition(mf.model, {Config{0, 1, 2}}, std::nullopt), ParseError);
}

TEST_CASE("log-likelihood matches enumeration") {
    Rng rng(21);
    for (int t = 0; t < 20; ++t) {
        const Scm m = oracle::random_model(rng);
        const auto data = sample(m, rng, 50);
        const auto ds = partition(m, data, std::nullopt);
        const auto joint = oracle::joint(m);
        double ref = 0.0;
        for (const auto& [x, c] : ds.d1_counts) ref += static_cast<double>(c) * std::log(joint.at(x));
        CHECK(log_likelihood(m, ds) == doctest::Approx(ref).epsilon(1e-12));
    }
}

TEST_CASE("selection-aware likelihood and update match enumeration") {
    Rng rng(22);
    for (int t = 0; t < 20; ++t) {
        oracle::ModelOptions o;
        o.n_min = 3;
        o.n_max = 4;
        const Scm m = oracle::random_model(rng, o);
        const auto& obs = m.observed();
        Selector sel{{m.variable(obs[0]).name, m.variable(obs[1]).name}, {}};
        const int rows = m.cardinality(obs[0]) * m.cardinality(obs[1]);
        for (int r = 0; r < rows; ++r) sel.table.push_back(r % 2);
        const auto data = sample(m, rng, 80);
        const auto ds = partition(m, data, sel);
        if (ds.d0 == 0 || ds.d1() == 0) continue;

        const Scm e = embed_selector(m, sel);
        const DataLikelihood lik(e, ds);
        const auto res = lik.evaluate(e.assignment(), true);

        const VarId s = *e.selector();
        const double p0 = oracle::evidence(e, {{s, 0}});
        double ll = static_cast<double>(ds.d0) * std::log(p0);
        std::vector<std::vector<double>> upd;
        for (VarId u : e.exogenous()) upd.emplace_back(static_cast<std::size_t>(e.cardinality(u)), 0.0);
        auto add = [&](const std::vector<std::vector<double>>& post, double w) {
            for (std::size_t i = 0; i < post.size(); ++i) {
                for (std::size_t k = 0; k < post[i].size(); ++k) upd[i][k] += w * post[i][k];
            }
        };
        add(oracle::posterior(e, {{s, 0}}), static_cast<double>(ds.d0));
        for (const auto& [x, c] : ds.d1_counts) {
            std::map<VarId, int> ev;
            for (std::size_t i = 0; i < x.size(); ++i) ev[e.observed()[i]] = x[i];
            ll += static_cast<double>(c) * std::log(oracle::evidence(e, ev));
            add(oracle::posterior(e, ev), static_cast<double>(c));
        }
        CHECK(res.log_likelihood == doctest::Approx(ll).epsilon(1e-12));
        CHECK(res.p_s0 == doctest::Approx(p0).epsilon(1e-12));
        REQUIRE(res.update.has_value());
        for (std::size_t i = 0; i < upd.size(); ++i) {
            for (std::size_t k = 0; k < upd[i].size(); ++k) {
                CHECK((*res.update)[i][k] == doctest::Approx(upd[i][k] / static_cast<double>(ds.d())).epsilon(1e-10));
            }
        }
    }
}

TEST_CASE("factorised targets") {
    // one c-component: factorisation is the raw frequency
    ScmBuilder b;
    const VarId u = b.add_exogenous("U", 8);
    const VarId x = b.add_endogenous("X", 2);
    const VarId y = b.add_endogenous("Y", 2);
    b.set_equation(x, {u}, {0, 1, 0, 1, 0, 1, 0, 1});
    b.set_equation(y, {u, x}, {0, 0, 1, 1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 1, 1, 0});
    const Scm m = b.build();
    const std::vector<Config> data{{0, 0}, {0, 0}, {0, 1}, {1, 1}, {1, 0}, {1, 1}, {1, 1}};
    const auto ds = partition(m, data, std::nullopt);
    const auto t = empirical_targets(m, ds);
    CHECK(t.p_x.at({0, 0}) == doctest::Approx(2.0 / 7));
    CHECK(t.p_x.at({1, 1}) == doctest::Approx(3.0 / 7));

    // Markovian chain A -> B -> C: P(a) P(b|a) P(c|b)
    DagSpec d;
    d.nodes = {{"A", 2, {}, ""}, {"B", 2, {"A"}, ""}, {"C", 2, {"B"}, ""}};
    const Scm chain = build_conservative(d);
    const std::vector<Config> rows{{0, 0, 0}, {0, 0, 1}, {0, 1, 1}, {1, 1, 1}, {1, 1, 0}, {1, 0, 0}, {0, 0, 0}};
    const auto cds = partition(chain, rows, std::nullopt);
    const auto ct = empirical_targets(chain, cds);
    // P(A=0)=4/7, P(B=0|A=0)=3/4, P(C=0|B=0)=3/4
    CHECK(ct.p_x.at({0, 0, 0}) == doctest::Approx(4.0 / 7 * 3.0 / 4 * 3.0 / 4));
    const auto full = factorised_distribution(chain, cds.d1_counts);
    double total = 0.0;
    for (const auto& [cfg, p] : full) total += p;
    CHECK(full.size() == 8);
    CHECK(total == doctest::Approx(1.0));
    // a Markovian model cannot beat the factorised maximum
    Rng rng(23);
    for (int k = 0; k < 20; ++k) {
        const Scm f = chain.with_assignment(oracle::random_assignment(chain, rng));
        CHECK(log_likelihood(f, cds) <= ll_star(chain, cds) + 1e-9);
    }
}

TEST_CASE("compatibility of an exact fit") {
    DagSpec d;
    d.nodes = {{"X", 2, {}, ""}, {"Y", 2, {"X"}, ""}};
    const Scm m = build_conservative(d);
    // U_X = (0.4, 0.6); U_Y puts mass on identity (u=2) and constant 1 (u=3)
    ExogenousAssignment a{{{0.4, 0.6}, {0.0, 0.0, 0.5, 0.5}}};
    const Scm f = m.with_assignment(a);
    // P(0,0)=0.2 P(0,1)=0.2 P(1,1)=0.6
    std::vector<Config> data;
    data.insert(data.end(), 2, Config{0, 0});
    data.insert(data.end(), 2, Config{0, 1});
    data.insert(data.end(), 6, Config{1, 1});
    const auto ds = partition(m, data, std::nullopt);
    const auto rep = check_compatibility(f, ds);
    CHECK(rep.compatible);
    CHECK(rep.likelihood_check);
    CHECK(rep.log_likelihood == doctest::Approx(rep.ll_star));

    const Scm g = m.with_assignment(ExogenousAssignment{{{0.5, 0.5}, {0.25, 0.25, 0.25, 0.25}}});
    CHECK_FALSE(check_compatibility(g, ds).compatible);
}
