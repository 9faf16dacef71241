#pragma once

#include "cfbound/inference.hpp"
#include "cfbound/scm.hpp"

#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <vector>

namespace cfbound {

/// Dataset under a deterministic selector: the selected records (D1) kept as
/// configuration counts, and only the number of unselected records (D0).
struct SelectedDataset {
    std::map<Config, std::int64_t> d1_counts;
    std::int64_t d0 = 0;
    std::optional<Selector> selector;
    /// P(S=0) -> 1 limit: the D1 term is dropped and D0 is a single weighted
    /// observation of S=0.
    bool conservative_limit = false;

    std::int64_t d1() const;
    std::int64_t d() const { return d0 + d1(); }
};

/// Splits complete records by the selector. Records with g(x)=0 are counted
/// into d0 and discarded. A missing selector selects everything.
SelectedDataset partition(const Scm& model, const std::vector<Config>& data, const std::optional<Selector>& sel);

/// Dataset made of D1 counts only, with d0 supplied separately.
SelectedDataset selected_only(const Scm& model, const std::vector<Config>& d1_records, std::int64_t d0,
                              const std::optional<Selector>& sel);

/// Dataset for the P(S=0) -> 1 limit.
SelectedDataset conservative_limit_dataset(const std::optional<Selector>& sel);

/// round(d1 * p_s0 / (1 - p_s0)). Requires 0 <= p_s0 < 1 and d1 > 0.
std::int64_t estimate_d0(std::int64_t d1, double p_s0);

/// Returned by log-likelihood routines when an observed event has probability 0.
inline constexpr double kImpossible = -std::numeric_limits<double>::infinity();

/// Reusable likelihood/E-step evaluator: one posterior engine per distinct D1
/// configuration and one for S=0.
class DataLikelihood {
public:
    /// `structure` must embed the selector whenever d0 > 0.
    DataLikelihood(const Scm& structure, const SelectedDataset& ds);

    struct Result {
        double log_likelihood = 0.0;
        double p_s0 = 0.0;
        /// P(x) for each distinct D1 configuration, in rows() order.
        std::vector<double> p_x;
        /// [d0 P(U|S=0) + sum_x #x P(U|x)] / (d0 + d1), when requested.
        std::optional<ExogenousAssignment> update;
    };

    /// Throws ZeroProbabilityEvidence when an update is requested and some
    /// observed event has probability zero.
    Result evaluate(const ExogenousAssignment& pmfs, bool with_update) const;

    const std::vector<std::pair<Config, std::int64_t>>& rows() const { return rows_; }
    double d0_weight() const { return d0_weight_; }

private:
    const Scm* model_;
    std::vector<std::pair<Config, std::int64_t>> rows_;
    std::vector<PosteriorEngine> row_engines_;
    std::optional<PosteriorEngine> s0_engine_;
    double d0_weight_ = 0.0;
};

/// d0 log P(S=0) + sum_{x in D1} log P(x). Returns kImpossible when an
/// observed event has zero probability.
double log_likelihood(const Scm& fscm, const SelectedDataset& ds);

/// Empirical targets of the compatibility constraints.
struct EmpiricalTargets {
    double p_s0 = 0.0;
    std::map<Config, double> p_x;
};

/// P_hat(S=0) = d0/d. With d0 = 0, P_hat(x) is the c-component factorisation
/// of the D1 counts; with d0 > 0, P_hat(x) = #x/d.
EmpiricalTargets empirical_targets(const Scm& model, const SelectedDataset& ds);

/// c-component factorisation of configuration counts, evaluated at every
/// observed configuration (zero entries included).
std::map<Config, double> factorised_distribution(const Scm& model, const std::map<Config, std::int64_t>& counts,
                                                 std::uint64_t cap = kDefaultEnumerationCap);

/// Upper bound d0 log(d0/d) + sum_{x in D1} log P_hat(x).
double ll_star(const Scm& model, const SelectedDataset& ds);

struct CompatibilityReport {
    bool compatible = false;       // probability residuals within tolerance
    bool likelihood_check = false; // LL >= LL* - ll_tolerance
    double s0_residual = 0.0;
    std::vector<std::pair<Config, double>> x_residuals;
    double max_residual = 0.0;
    double log_likelihood = 0.0;
    double ll_star = 0.0;
};

inline constexpr double kCompatibilityTolerance = 1e-4;

/// Checks |P(S=0) - d0/d| <= tol and |P(x) - P_hat(x)| <= tol for x in D1,
/// and separately LL >= LL* - ll_tol (default 1e-3 d).
CompatibilityReport check_compatibility(const Scm& fscm, const SelectedDataset& ds,
                                        double tol = kCompatibilityTolerance,
                                        std::optional<double> ll_tol = std::nullopt);

/// Same check for an assignment over a (partial) structure.
CompatibilityReport check_compatibility(const DataLikelihood& lik, const EmpiricalTargets& targets,
                                        double ll_star_value, std::int64_t d, const ExogenousAssignment& pmfs,
                                        double tol = kCompatibilityTolerance,
                                        std::optional<double> ll_tol = std::nullopt);

}  // namespace cfbound
