#pragma once

#include "cfbound/factor.hpp"
#include "cfbound/scm.hpp"

#include <map>
#include <string>
#include <vector>

namespace cfbound {

/// Observed states keyed by variable id.
using Evidence = std::map<VarId, int>;

struct PosteriorResult {
    double evidence_probability = 0.0;
    /// P(U | evidence), ordered as Scm::exogenous().
    ExogenousAssignment posteriors;
};

/// Exact inference for a fixed model structure and fixed evidence, re-usable
/// across exogenous parameter vectors (the EM driver calls `compute` once per
/// iteration). Two strategies:
///  - consistency lists, when every observed variable is in the evidence and
///    each observed variable has at most one exogenous parent: the posterior
///    factorises over exogenous variables and P(u|x) is P(u) restricted to the
///    states compatible with x;
///  - variable elimination (min-fill, ties by name) over the ancestors of the
///    evidence otherwise.
class PosteriorEngine {
public:
    PosteriorEngine(const Scm& structure, Evidence evidence);

    /// Throws ZeroProbabilityEvidence when P(evidence) == 0 and posteriors are requested.
    PosteriorResult compute(const ExogenousAssignment& pmfs, bool want_posteriors = true) const;
    double probability(const ExogenousAssignment& pmfs) const;

    bool uses_elimination() const { return !fast_; }

private:
    struct Elimination {
        std::vector<VarId> order;
        VarId target = -1;
    };

    double fast_compute(const ExogenousAssignment& pmfs, ExogenousAssignment* posteriors) const;
    Factor run_elimination(const ExogenousAssignment& pmfs, const Elimination& plan) const;
    Elimination plan_for(VarId target) const;

    const Scm* model_;
    Evidence evidence_;
    bool fast_ = false;
    bool contradiction_ = false;

    // Fast path: compatible states per exogenous variable.
    std::vector<std::vector<int>> consistent_;

    // Elimination path.
    std::vector<Factor> structural_;         // reduced degenerate CPTs
    std::vector<VarId> relevant_exogenous_;  // exogenous ancestors of the evidence
    std::vector<char> relevant_;             // by VarId
    Elimination evidence_plan_;
    std::map<VarId, Elimination> target_plans_;
};

/// P(x) for a full observed configuration of an FSCM.
double joint_probability(const Scm& fscm, const Config& x);

/// Probability of a (partial) evidence assignment in an FSCM.
double evidence_probability(const Scm& fscm, const Evidence& evidence);

/// P(U | evidence) for every exogenous U. Throws ZeroProbabilityEvidence.
ExogenousAssignment exogenous_posterior(const Scm& fscm, const Evidence& evidence);

/// Evidence keyed by variable name.
Evidence make_evidence(const Scm& model, const std::map<std::string, int>& by_name);

struct DoAssignment {
    VarId variable;
    int state;
};

/// Replaces each targeted structural equation with a constant map and removes
/// its incoming arcs. Targets must be distinct endogenous variables.
Scm intervene(const Scm& model, const std::vector<DoAssignment>& assignments);

/// Literal of a counterfactual query: variable name, state, world tag.
/// World 0 is the factual world.
struct WorldLiteral {
    std::string variable;
    int state = 0;
    int world = 0;
};

struct CounterfactualQuery {
    enum class Mode { joint, conditional };

    std::vector<WorldLiteral> antecedents;
    std::vector<WorldLiteral> consequents;
    /// Observed in the factual world.
    std::vector<std::pair<std::string, int>> conditioning;
    Mode mode = Mode::joint;
};

/// P(Y_{X=0}=0, Y_{X=1}=1).
CounterfactualQuery pns_query(const std::string& cause, const std::string& effect);
/// P(Y_{X=0}=0 | X=1, Y=1).
CounterfactualQuery pn_query(const std::string& cause, const std::string& effect);
/// P(Y_{X=1}=1 | X=0, Y=0).
CounterfactualQuery ps_query(const std::string& cause, const std::string& effect);

/// Twin network with one endogenous copy per world tag used by `q`, all
/// copies sharing the exogenous variables. World 0 keeps the original names,
/// world w > 0 uses "<name>[w]". Any embedded selector is dropped.
Scm build_twin(const Scm& model, const CounterfactualQuery& q, int max_worlds = 2);

/// Evaluates a counterfactual query on an FSCM through its twin network.
/// Throws ZeroProbabilityEvidence when the conditioning event has probability 0.
double twin_query(const Scm& fscm, const CounterfactualQuery& q, int max_worlds = 2);

/// Checks names, states and, when `cause`/`effect` are given, that the cause
/// topologically precedes the effect.
void validate_query(const Scm& model, const CounterfactualQuery& q);
void require_precedes(const Scm& model, const std::string& cause, const std::string& effect);

}  // namespace cfbound
