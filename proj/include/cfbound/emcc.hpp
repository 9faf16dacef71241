#pragma once

#include "cfbound/inference.hpp"
#include "cfbound/random.hpp"
#include "cfbound/scm.hpp"
#include "cfbound/selection.hpp"

#include <cstdint>
#include <memory>
#include <vector>

namespace cfbound {

enum class Metric { max_abs, l1 };

struct EmConfig {
    double epsilon = 1e-6;
    int max_iters = 500;
    Metric metric = Metric::max_abs;
    std::uint64_t seed = 0;
    int restarts = 30;
    /// Symmetric Dirichlet concentration of the random initialisation.
    double init_concentration = 0.01;
    /// Weight of the uniform PMF mixed into each initial draw, keeping every
    /// exogenous state reachable by the multiplicative EM updates.
    double init_floor = 0.01;
    /// Re-draws allowed per run. An initialisation is re-drawn when it gives an
    /// observed event zero probability, when the run hits max_iters (with
    /// require_convergence) or when it ends away from the compatible set (with
    /// require_compatibility).
    int max_reseeds = 50;
    bool require_convergence = true;
    bool require_compatibility = true;
    double compatibility_tolerance = kCompatibilityTolerance;
    /// Slack of the per-iteration likelihood monotonicity check.
    double monotone_slack = 1e-9;
    int threads = 1;

    void validate() const;
};

struct RunDiagnostics {
    std::uint64_t seed = 0;
    int iterations = 0;
    bool converged = false;
    bool failed = false;
    int reseeds = 0;
    /// Re-draws caused by a failed compatibility check.
    int rejected = 0;
    double log_likelihood = 0.0;
    double ll_star = 0.0;
    double max_residual = 0.0;
    bool compatible = false;
    bool likelihood_check = false;
    /// Largest decrease of the log-likelihood between consecutive iterations.
    double worst_decrease = 0.0;
    bool monotone = true;
};

struct EmRun {
    ExogenousAssignment pmfs;
    RunDiagnostics diag;
    std::vector<double> ll_history;
};

/// Structure, data and likelihood engines shared read-only by all restarts.
/// The selector is embedded in the structure when d0 > 0; exogenous PMFs of
/// the input model are ignored.
class EmccProblem {
public:
    EmccProblem(const Scm& model, const SelectedDataset& ds);
    EmccProblem(const EmccProblem&) = delete;
    EmccProblem& operator=(const EmccProblem&) = delete;

    const Scm& structure() const { return *structure_; }
    const SelectedDataset& data() const { return ds_; }
    const DataLikelihood& likelihood() const { return *likelihood_; }
    const EmpiricalTargets& targets() const { return targets_; }
    double ll_star() const { return ll_star_; }

private:
    std::unique_ptr<Scm> structure_;
    SelectedDataset ds_;
    std::unique_ptr<DataLikelihood> likelihood_;
    EmpiricalTargets targets_;
    double ll_star_ = 0.0;
};

/// One synchronous EM update of every exogenous PMF:
/// [d0 P_t(U|S=0) + sum_{x in D1} P_t(U|x)] / (d0 + d1).
/// Throws ZeroProbabilityEvidence when an observed event has probability 0.
ExogenousAssignment em_step(const EmccProblem& problem, const ExogenousAssignment& current);
ExogenousAssignment em_step(const Scm& model, const ExogenousAssignment& current, const SelectedDataset& ds);

double parameter_distance(const ExogenousAssignment& a, const ExogenousAssignment& b, Metric metric);

/// Random initialisation of every exogenous PMF of the structure.
ExogenousAssignment random_initialisation(const Scm& structure, Rng& rng, double concentration, double floor = 0.0);

/// A single EMCC run from the initialisation drawn with `run_seed`.
EmRun emcc_run(const EmccProblem& problem, const EmConfig& config, std::uint64_t run_seed);

/// Seed of restart `index` under `config.seed`.
std::uint64_t run_seed(const EmConfig& config, int index);

/// `config.restarts` independent runs (in parallel when config.threads > 1);
/// results are ordered by restart index.
std::vector<EmRun> emcc_runs(const EmccProblem& problem, const EmConfig& config);

struct RunSet {
    std::vector<double> values;
    double lower = 0.0;
    double upper = 0.0;
    std::vector<RunDiagnostics> diagnostics;
    int failed = 0;

    std::size_t k() const { return values.size(); }
};

/// Interval [min, max] of the values. Throws NumericError when empty.
RunSet make_runset(std::vector<double> values);

/// Query value of every successful run.
RunSet evaluate_runs(const Scm& structure, const std::vector<EmRun>& runs, const CounterfactualQuery& query,
                     int max_worlds = 2);

/// emcc_runs followed by the query on every converged FSCM.
RunSet bound_query(const EmccProblem& problem, const CounterfactualQuery& query, const EmConfig& config);

}  // namespace cfbound
