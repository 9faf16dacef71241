#pragma once

#include "cfbound/emcc.hpp"
#include "cfbound/random.hpp"
#include "cfbound/scm.hpp"
#include "cfbound/selection.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace cfbound {

enum class StateRemoval { none, greedy };

struct BenchmarkSpec {
    /// Endogenous count, drawn uniformly in [n_min, n_max] per case.
    int n_min = 4;
    int n_max = 6;
    int max_indegree = 3;
    /// Exogenous pairs merged; 0 keeps the model Markovian.
    int merge_pairs = 0;
    std::int64_t d = 1000;
    /// Bit s set when (X,Y,Z) state s = 4x + 2y + z is selected. Drawn
    /// uniformly among non-empty proper subsets when absent.
    std::optional<unsigned> selector_true_states;
    std::uint64_t seed = 0;
    /// Largest exogenous cardinality accepted (before and after merging).
    std::uint64_t exogenous_cap = 4096;
    StateRemoval state_removal = StateRemoval::none;
    int max_attempts = 1000;

    void validate() const;
};

nlohmann::json spec_to_json(const BenchmarkSpec& s);
BenchmarkSpec spec_from_json(const nlohmann::json& j);

struct BenchmarkCase {
    Scm pscm;                 // no PMFs, selector not embedded
    Scm sampling_model;       // M', the FSCM the data were drawn from
    std::vector<Config> data; // unbiased records
    Selector selector;        // over (X, Y, Z)
    SelectedDataset selected;
    double p_s1 = 1.0;        // d1 / d
    std::string cause;        // X: a root
    std::string effect;       // Y: a leaf descending from X
    std::string internal;     // Z
    int removed_states = 0;
    std::uint64_t seed = 0;
};

/// Merges two exogenous variables into one whose state is the pair
/// (u1, u2), indexed u1 * |U2| + u2; children's tables are re-indexed.
Scm merge_exogenous(const Scm& model, VarId u1, VarId u2, const std::string& name);

/// True iff every configuration in `configs` is produced by some exogenous
/// state. Checked per c-component.
bool configurations_reachable(const Scm& model, const std::vector<Config>& configs,
                              std::uint64_t cap = kDefaultEnumerationCap);

/// Drops states of exogenous variable `u` for which keep[s] is false; the
/// remaining states keep their relative order.
Scm restrict_exogenous(const Scm& model, VarId u, const std::vector<char>& keep);

/// Complete records sampled from an FSCM.
std::vector<Config> sample_records(const Scm& fscm, std::int64_t n, Rng& rng);

BenchmarkCase generate_case(const BenchmarkSpec& spec);
/// Case `index` of a suite: the spec seed is replaced by derive_seed(spec.seed, index).
BenchmarkCase generate_case(const BenchmarkSpec& spec, int index);

/// Relative RMSE of interval endpoints. Throws DomainError when truth is a point.
double rrmse(double a_r, double b_r, double a_star, double b_star);
/// Absolute RMSE, reported when the truth is a point.
double absolute_rmse(double a_r, double b_r, double a_star, double b_star);

struct Interval {
    double lower = 0.0;
    double upper = 0.0;
};

/// Interval of the first r values (r <= values.size()).
Interval prefix_interval(const std::vector<double>& values, std::size_t r);

/// [max(0, P(y|x1) - P(y|x0)), min(P(y|x1), P(y'|x0))] for a distribution over
/// observed configurations (binary cause and effect, state 1 = "true"). Valid
/// outer bounds on PNS when the cause is unconfounded.
std::optional<Interval> unconfounded_pns_bounds(const Scm& model, const std::map<Config, double>& distribution,
                                                const std::string& cause, const std::string& effect);

/// PNS values of r_max EMCC runs on the selected and on the unbiased data.
struct CaseRuns {
    std::vector<double> biased;
    std::vector<double> unbiased;
    int failed_biased = 0;
    int failed_unbiased = 0;
};

/// Runs EMCC r_max times per dataset. Runs that stop at max_iters are kept and
/// compatibility is not required, since sampled data are only approximately
/// compatible; only runs that never get off a zero-probability start fail.
CaseRuns run_case(const BenchmarkCase& c, int r_max, const EmConfig& base);

/// Ground truth [a*, b*] from r_max runs. Throws NumericError when more than
/// 20% of the runs failed.
Interval ground_truth(const std::vector<double>& values, int failed);

struct EvaluationRow {
    std::string case_id;
    int n_endogenous = 0;
    bool markovian = true;
    double p_s1 = 1.0;
    std::string bin;
    int r = 0;
    Interval approx;
    Interval truth;
    bool defined = true;  // truth is not a point
    double rrmse = 0.0;   // absolute RMSE when !defined
    Interval unbiased;    // r-run interval on the unbiased data
    double divergence = 0.0;
    bool divergence_defined = true;
    bool outer_check = true;  // truth within the unconfounded outer bounds
};

/// P(S=1) bin label: "0", "0-0.2", ..., "0.8-1", "1".
std::string selection_bin(double p_s1);

std::vector<EvaluationRow> evaluate_case(const std::string& id, const BenchmarkCase& c,
                                         const std::vector<int>& runs_list, int r_max, const EmConfig& base);

struct GroupSummary {
    std::string group;
    std::size_t count = 0;
    std::size_t excluded = 0;
    double min = 0.0, q1 = 0.0, median = 0.0, q3 = 0.0, max = 0.0;
};

/// Quantiles of RRMSE per r and of the divergence per selection bin.
std::vector<GroupSummary> summarize(const std::vector<EvaluationRow>& rows);

std::string rows_to_csv(const std::vector<EvaluationRow>& rows);
std::string summary_to_csv(const std::vector<GroupSummary>& groups);
/// One column per group, rows are the values (boxplot input).
std::string boxplot_csv(const std::vector<EvaluationRow>& rows);

/// Writes model.json, data.csv and case.json under `dir`.
void write_case(const std::filesystem::path& dir, const BenchmarkCase& c, const BenchmarkSpec& spec);
BenchmarkCase read_case(const std::filesystem::path& dir);

}  // namespace cfbound
