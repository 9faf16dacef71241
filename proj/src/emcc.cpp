#include "cfbound/emcc.hpp"

#include "cfbound/errors.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

namespace cfbound {

void EmConfig::validate() const {
    if (!(epsilon > 0.0)) throw DomainError("epsilon must be positive");
    if (max_iters < 1) throw DomainError("max_iters must be at least 1");
    if (restarts < 1) throw DomainError("the number of runs must be positive");
    if (!(init_concentration > 0.0)) throw DomainError("initialisation concentration must be positive");
    if (!(init_floor >= 0.0) || init_floor >= 1.0) throw DomainError("initialisation floor must be in [0, 1)");
    if (max_reseeds < 0) throw DomainError("max_reseeds must be non-negative");
}

namespace {

Scm prepare_structure(const Scm& model, const SelectedDataset& ds) {
    Scm m = model.without_pmfs();
    if (ds.d0 > 0 && !m.selector()) {
        if (!ds.selector) throw ModelError("d0 > 0 requires a selector");
        m = embed_selector(m, *ds.selector);
    }
    return m;
}

}  // namespace

EmccProblem::EmccProblem(const Scm& model, const SelectedDataset& ds)
    : structure_(std::make_unique<Scm>(prepare_structure(model, ds))), ds_(ds) {
    likelihood_ = std::make_unique<DataLikelihood>(*structure_, ds_);
    targets_ = empirical_targets(*structure_, ds_);
    ll_star_ = cfbound::ll_star(*structure_, ds_);
}

ExogenousAssignment em_step(const EmccProblem& problem, const ExogenousAssignment& current) {
    auto res = problem.likelihood().evaluate(current, true);
    return std::move(*res.update);
}

ExogenousAssignment em_step(const Scm& model, const ExogenousAssignment& current, const SelectedDataset& ds) {
    const EmccProblem problem(model, ds);
    return em_step(problem, current);
}

double parameter_distance(const ExogenousAssignment& a, const ExogenousAssignment& b, Metric metric) {
    double out = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        for (std::size_t s = 0; s < a[i].size(); ++s) {
            const double d = std::abs(a[i][s] - b[i][s]);
            out = metric == Metric::max_abs ? std::max(out, d) : out + d;
        }
    }
    return out;
}

ExogenousAssignment random_initialisation(const Scm& structure, Rng& rng, double concentration, double floor) {
    ExogenousAssignment a;
    for (VarId u : structure.exogenous()) {
        const auto n = static_cast<std::size_t>(structure.cardinality(u));
        auto p = sample_dirichlet(rng, n, concentration);
        if (floor > 0.0) {
            for (double& v : p) v = (1.0 - floor) * v + floor / static_cast<double>(n);
        }
        a.pmfs.push_back(std::move(p));
    }
    return a;
}

std::uint64_t run_seed(const EmConfig& config, int index) {
    return derive_seed(config.seed, static_cast<std::uint64_t>(index));
}

EmRun emcc_run(const EmccProblem& problem, const EmConfig& config, std::uint64_t seed) {
    config.validate();
    const auto& lik = problem.likelihood();
    EmRun run;
    run.diag.seed = seed;
    int rejected = 0;
    run.diag.ll_star = problem.ll_star();

    for (int attempt = 0;; ++attempt) {
        if (attempt > config.max_reseeds) {
            run.diag.failed = true;
            return run;
        }
        run.diag.reseeds = attempt;
        run.diag.rejected = rejected;
        Rng rng(derive_seed(seed, static_cast<std::uint64_t>(attempt)));
        ExogenousAssignment p = random_initialisation(problem.structure(), rng, config.init_concentration, config.init_floor);
        run.ll_history.clear();
        run.diag.worst_decrease = 0.0;
        run.diag.monotone = true;
        run.diag.converged = false;

        bool zero = false;
        int t = 0;
        for (; t < config.max_iters; ++t) {
            DataLikelihood::Result res;
            try {
                res = lik.evaluate(p, true);
            } catch (const ZeroProbabilityEvidence&) {
                zero = true;
                break;
            }
            if (res.log_likelihood == kImpossible) {
                zero = true;
                break;
            }
            if (!run.ll_history.empty()) {
                const double drop = run.ll_history.back() - res.log_likelihood;
                run.diag.worst_decrease = std::max(run.diag.worst_decrease, drop);
                if (drop > config.monotone_slack) run.diag.monotone = false;
            }
            run.ll_history.push_back(res.log_likelihood);
            ExogenousAssignment next = std::move(*res.update);
            const double delta = parameter_distance(next, p, config.metric);
            p = std::move(next);
            if (delta <= config.epsilon) {
                run.diag.converged = true;
                ++t;
                break;
            }
        }
        if (zero) continue;

        run.diag.iterations = t;
        const auto rep = check_compatibility(lik, problem.targets(), problem.ll_star(), problem.data().d(), p,
                                             config.compatibility_tolerance);
        if (rep.log_likelihood == kImpossible) continue;
        if ((config.require_convergence && !run.diag.converged) ||
            (config.require_compatibility && !(rep.compatible && rep.likelihood_check))) {
            ++rejected;
            continue;
        }
        run.diag.log_likelihood = rep.log_likelihood;
        run.diag.max_residual = rep.max_residual;
        run.diag.compatible = rep.compatible;
        run.diag.likelihood_check = rep.likelihood_check;
        run.diag.rejected = rejected;
        run.pmfs = std::move(p);
        return run;
    }
}

std::vector<EmRun> emcc_runs(const EmccProblem& problem, const EmConfig& config) {
    config.validate();
    std::vector<EmRun> runs(static_cast<std::size_t>(config.restarts));
    const int workers = std::max(1, std::min(config.threads, config.restarts));
    if (workers == 1) {
        for (int i = 0; i < config.restarts; ++i) runs[static_cast<std::size_t>(i)] = emcc_run(problem, config, run_seed(config, i));
        return runs;
    }
    std::atomic<int> next{0};
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (int i = next++; i < config.restarts; i = next++) {
                    runs[static_cast<std::size_t>(i)] = emcc_run(problem, config, run_seed(config, i));
                }
            } catch (...) {
                errors[static_cast<std::size_t>(w)] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errors) {
        if (e) std::rethrow_exception(e);
    }
    return runs;
}

RunSet make_runset(std::vector<double> values) {
    if (values.empty()) throw NumericError("no successful runs");
    RunSet rs;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    rs.lower = *lo;
    rs.upper = *hi;
    rs.values = std::move(values);
    return rs;
}

RunSet evaluate_runs(const Scm& structure, const std::vector<EmRun>& runs, const CounterfactualQuery& query,
                     int max_worlds) {
    std::vector<double> values;
    std::vector<RunDiagnostics> diags;
    int failed = 0;
    for (const auto& run : runs) {
        if (run.diag.failed) {
            ++failed;
            continue;
        }
        values.push_back(twin_query(structure.with_assignment(run.pmfs), query, max_worlds));
        diags.push_back(run.diag);
    }
    if (values.empty()) throw NumericError("all EMCC runs failed");
    RunSet rs = make_runset(std::move(values));
    rs.diagnostics = std::move(diags);
    rs.failed = failed;
    return rs;
}

RunSet bound_query(const EmccProblem& problem, const CounterfactualQuery& query, const EmConfig& config) {
    validate_query(problem.structure(), query);
    return evaluate_runs(problem.structure(), emcc_runs(problem, config), query);
}

}  // namespace cfbound
